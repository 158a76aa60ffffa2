// SPDX-License-Identifier: Apache-2.0

//! Fit the stacked ensemble on a noisy nonlinear target and compare it with
//! its members on held-out rows.

use agewise_mlkit::{fit_stacked, rmse, Matrix, StackHyper};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rows: Vec<[f64; 4]> = (0..400).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect();
    let y: Vec<f64> = rows
        .iter()
        .map(|r| 3.0 * r[0] + (2.0 * r[1]).sin() + r[2] * r[3] + rng.random_range(-0.1..0.1))
        .collect();
    let (train, test) = rows.split_at(300);
    let x = Matrix::from_rows(train).unwrap();
    let xt = Matrix::from_rows(test).unwrap();

    let model = fit_stacked(&x, &y[..300], &StackHyper::default(), 1).unwrap();
    for (kind, pred) in model.member_predictions(&xt) {
        println!("{:>20}: test RMSE {:.4}", kind.name(), rmse(&pred, &y[300..]));
    }
    println!("{:>20}: test RMSE {:.4}", "stacked", rmse(&model.predict(&xt), &y[300..]));
}
