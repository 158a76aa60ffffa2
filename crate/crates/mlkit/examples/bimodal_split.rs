// SPDX-License-Identifier: Apache-2.0

//! Two-component mixture on a planted bimodal sample.

use agewise_mlkit::{fit_gmm2_traced, GmmParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let low = Normal::new(2.0, 0.6).unwrap();
    let high = Normal::new(9.0, 1.5).unwrap();
    let mut xs: Vec<f64> = (0..300).map(|_| low.sample(&mut rng)).collect();
    xs.extend((0..200).map(|_| high.sample(&mut rng)));

    let (fit, trace) = fit_gmm2_traced(&xs, &GmmParams::default()).unwrap();
    for k in 0..2 {
        println!("component {k}: weight {:.3}, mean {:.3}, std {:.3}", fit.weights[k], fit.means[k], fit.std_devs[k]);
    }
    println!("EM converged in {} iterations, log-likelihood {:.2}", trace.len(), fit.log_likelihood);
    println!("cuts: above {:.2} is high, below {:.2} is low", fit.means[1] - 2.0 * fit.std_devs[1], fit.means[0] + 2.0 * fit.std_devs[0]);
}
