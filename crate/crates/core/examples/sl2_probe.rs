use freegrowth::linalg::QMatrix;
use freegrowth::scalars::{rat, Rat};
use freegrowth::setcalc::MatSet;
use freegrowth::sl2::{sl2_free_pair, zariski_dense_sl2, Sl2Budgets};
use num::{One, Zero};
use std::time::Instant;

fn main() {
    let x = QMatrix::from_rat_rows(vec![
        vec![Rat::one(), rat(1, 5)],
        vec![Rat::zero(), Rat::one()],
    ]);
    let y = QMatrix::from_rat_rows(vec![
        vec![Rat::one(), Rat::zero()],
        vec![rat(1, 5), Rat::one()],
    ]);
    let sigma = MatSet::new(vec![
        QMatrix::identity(2),
        x.clone(),
        x.inverse().unwrap(),
        y.clone(),
        y.inverse().unwrap(),
    ])
    .unwrap();
    let t0 = Instant::now();
    let d = zariski_dense_sl2(&sigma);
    eprintln!("density: {:?} in {:?}", d, t0.elapsed());
    let t0 = Instant::now();
    match sl2_free_pair(&sigma, &Sl2Budgets::default()) {
        Ok(t) => eprintln!(
            "ok in {:?}: place {:?} n5 {} n6 {} len_a {} total {} f1 {} f2 {} f3 {}",
            t0.elapsed(), t.place, t.n5, t.n6, t.len_a, t.total_word_length, t.f1, t.f2, t.f3
        ),
        Err(e) => eprintln!("err in {:?}: {}", t0.elapsed(), e),
    }
}
