//! The two gradient routes on a sparse kernel interaction model: the
//! reference route materializes one `∂K/∂φ_j` per hyperparameter, the adjoint
//! route contracts one cotangent matrix in a single pass. Both give the
//! same vector; only the work differs.
//!
//! ```text
//! cargo run --release --example skim_gradient
//! ```

use std::time::Instant;

use embedded_laplace::kernels::{Covariance, Skim};
use embedded_laplace::laplace::{grad_adjoint, grad_reference, newton_solve, LaplaceConfig};
use embedded_laplace::likelihoods::LikelihoodModel;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() -> embedded_laplace::Result<()> {
    let (n, p) = (40, 60);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal) / (p as f64).sqrt());
    let y: Vec<f64> = (0..n).map(|_| f64::from(rng.random::<bool>())).collect();
    let lik = LikelihoodModel::bernoulli_logit(&y, &vec![1; n])?;
    let kernel = Skim::new(x, 2.0, 1.0)?;
    // φ = (τ, c_aux, χ, λ_1..λ_p)
    let phi = DVector::from_fn(kernel.n_params(), |i, _| if i == 0 { 0.5 } else { 1.0 });

    let state = newton_solve(&lik, &kernel, &phi, &LaplaceConfig::default())?;
    println!("log marginal {:.6} after {} Newton iterations", state.log_marginal, state.iterations);

    let t = Instant::now();
    let reference = grad_reference(&state, &lik, &kernel, &phi)?;
    let t_ref = t.elapsed();
    let t = Instant::now();
    let adjoint = grad_adjoint(&state, &lik, &kernel, &phi)?;
    let t_adj = t.elapsed();

    let diff = (&reference.gradient - &adjoint.gradient).amax() / reference.gradient.amax();
    println!("reference: {} kernel sweeps, {:?}", reference.kernel_sweeps, t_ref);
    println!("adjoint:   {} kernel sweep,  {:?}", adjoint.kernel_sweeps, t_adj);
    println!("max relative difference {diff:.2e}");
    let names = kernel.param_names();
    for (name, g) in names.iter().zip(adjoint.gradient.iter()).take(5) {
        println!("  d/d{:<10} {:+.6}", name, g);
    }
    Ok(())
}
