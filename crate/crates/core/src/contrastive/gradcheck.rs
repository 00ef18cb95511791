use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Denominator floor for the relative error, so coordinates whose true
/// gradient is ~0 are judged by absolute error instead.
pub const REL_FLOOR: f64 = 1e-6;

/// Compares the analytic gradient of `loss` at `x` against central
/// differences `(f(x + eps e_i) - f(x - eps e_i)) / 2 eps` on `probe_count`
/// random coordinates and returns the largest relative error
/// `|a - n| / max(|a|, |n|, REL_FLOOR)`.
///
/// `loss` returns the value and the full analytic gradient.
pub fn finite_diff_check<F>(loss: F, x: &[f64], probe_count: usize, eps: f64, seed: u64) -> Result<f64>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    if !(eps > 0.0) {
        return Err(Error::Config("finite difference step must be > 0".into()));
    }
    if x.is_empty() || probe_count == 0 {
        return Err(Error::EmptyInput("no coordinates to probe".into()));
    }
    let (f0, analytic) = loss(x);
    if !f0.is_finite() || analytic.len() != x.len() {
        return Err(Error::NonFinite("loss or gradient at the base point".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords: Vec<usize> = if probe_count <= x.len() {
        index::sample(&mut rng, x.len(), probe_count).into_vec()
    } else {
        (0..probe_count).map(|_| rng.gen_range(0..x.len())).collect()
    };
    let mut probe = x.to_vec();
    let mut worst: f64 = 0.0;
    for i in coords {
        probe[i] = x[i] + eps;
        let (up, _) = loss(&probe);
        probe[i] = x[i] - eps;
        let (down, _) = loss(&probe);
        probe[i] = x[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(format!("loss at probe coordinate {i}")));
        }
        let numeric = (up - down) / (2.0 * eps);
        let a = analytic[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
        worst = worst.max(err);
    }
    Ok(worst)
}
