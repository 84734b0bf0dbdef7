use crate::rng::Rng;

use super::EvalError;

pub const MIN_RESAMPLES: usize = 1000;

/// Two-sided paired bootstrap p-value for a nonzero mean difference
/// between paired scores.
///
/// The resampled mean differences are centered on the observed one; the
/// p-value is the add-one smoothed share of them at least as far from the
/// observed difference as the observed difference is from zero.
pub fn paired_bootstrap(a: &[f64], b: &[f64], n_resamples: usize, rng: &mut Rng) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch { a: a.len(), b: b.len() });
    }
    if n_resamples < MIN_RESAMPLES {
        return Err(EvalError::TooFewResamples(n_resamples));
    }
    if a.is_empty() {
        return Ok(1.0);
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len();
    let observed = d.iter().sum::<f64>() / n as f64;
    let mut extreme = 0usize;
    for _ in 0..n_resamples {
        let mut s = 0.0;
        for _ in 0..n {
            s += d[rng.index(n)];
        }
        if (s / n as f64 - observed).abs() >= observed.abs() - 1e-15 {
            extreme += 1;
        }
    }
    Ok((extreme + 1) as f64 / (n_resamples + 1) as f64)
}
