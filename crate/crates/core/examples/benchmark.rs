//! Times the reference and adjoint gradients of the approximate log marginal
//! on SKIM fixtures of growing dimension and prints the speedup.
//!
//! ```text
//! cargo run --release --example benchmark
//! ```

use embedded_laplace::harness::{benchmark_differentiation, speedups, BenchmarkConfig};

fn main() -> embedded_laplace::Result<()> {
    let config = BenchmarkConfig::default();
    let records = benchmark_differentiation(&config)?;
    println!("{:>5} {:>8} {:>10} {:>14} {:>7}", "p", "dim_phi", "method", "seconds/call", "sweeps");
    for r in &records {
        println!(
            "{:>5} {:>8} {:>10} {:>14.3e} {:>7}",
            r.p,
            r.dim_phi,
            r.method.as_str(),
            r.seconds_per_call,
            r.sweeps
        );
    }
    println!();
    for (p, ratio) in speedups(&records) {
        println!("p = {p:>3}: adjoint is {ratio:.1}x faster");
    }
    Ok(())
}
