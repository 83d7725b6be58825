//! Fits the divergence envelope constants stored in `diagnostics`.
//!
//! cargo run --release -p rigid-refine-core --example calibrate_envelope

use rigid_refine::diagnostics::{divergence_samples, envelope_calibration_spec, fit_envelope, ENVELOPE_SEED};

fn main() -> Result<(), rigid_refine::Error> {
    let samples = divergence_samples(&envelope_calibration_spec(), ENVELOPE_SEED, 1000)?;
    let (alpha, beta) = fit_envelope(&samples);
    let max_d = samples.iter().map(|s| s.1).fold(0.0, f64::max);
    println!("samples {}  max D {max_d:e}", samples.len());
    println!("pub const ENVELOPE_ALPHA: f64 = {alpha:e};");
    println!("pub const ENVELOPE_BETA: f64 = {beta:e};");
    Ok(())
}
