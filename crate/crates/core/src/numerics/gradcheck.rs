//! Central finite-difference verification of tape gradients.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::nn::{ParamId, ParamSet};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::rng::seeded;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub eps: f64,
    /// Coordinates sampled per parameter tensor; larger tensors are subsampled.
    pub max_coords_per_tensor: usize,
    pub seed: u64,
    /// Relative-error limit used to classify coordinates.
    pub rel_tol: f64,
    /// Round-off allowance, in ulps of the function value, for the central
    /// difference numerator.
    pub noise_ulps: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            max_coords_per_tensor: 24,
            seed: 0,
            rel_tol: 1e-4,
            noise_ulps: 256.0,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct GradCheckReport {
    /// Maximum over checked coordinates that are not noise-limited.
    pub max_relative_error: f64,
    pub checked: usize,
    /// Coordinates above `rel_tol` whose absolute discrepancy is within the
    /// round-off resolution of the central difference; these are tiny
    /// gradients where float64 cannot resolve the relative error.
    pub noise_limited: usize,
    pub max_noise_limited_abs_error: f64,
    /// Coordinates whose perturbation flipped a relu input sign.
    pub skipped_kinks: usize,
    /// `(parameter name, flat index)` of the worst coordinate.
    pub worst: Option<(String, usize)>,
    /// Analytic and numeric derivative at the worst coordinate.
    pub worst_values: Option<(f64, f64)>,
}

/// `|a − n| / max(1e−8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Largest central-difference error attributable to round-off in `f`.
pub fn fd_resolution(plus: f64, minus: f64, cfg: &GradCheckConfig) -> f64 {
    cfg.noise_ulps * f64::EPSILON * plus.abs().max(minus.abs()) / (2.0 * cfg.eps)
}

fn evaluate<F>(params: &ParamSet, f: &F) -> Result<(f64, Option<u64>)>
where
    F: Fn(&mut Tape) -> Result<Var>,
{
    let mut tape = params.bind();
    tape.track_kinks();
    let out = f(&mut tape)?;
    let value = tape
        .value(out)
        .item()
        .ok_or_else(|| Error::Usage("grad_check function must return a scalar".into()))?;
    Ok((value, tape.kink_signature()))
}

/// Compares tape gradients of the scalar `f` against central differences.
///
/// `f` receives a tape already bound to `params` (parameter `k` is `Var(k)`)
/// and must be deterministic. Only the tensors listed in `which` are
/// perturbed; pass `None` to check all of them.
pub fn grad_check<F>(
    params: &ParamSet,
    which: Option<&[ParamId]>,
    f: F,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape) -> Result<Var>,
{
    let mut tape = params.bind();
    tape.track_kinks();
    let out = f(&mut tape)?;
    let base_sig = tape.kink_signature();
    tape.backward(out)?;
    let grads = params.grads(&tape);

    let ids: Vec<ParamId> = match which {
        Some(ids) => ids.to_vec(),
        None => params.ids().collect(),
    };
    let mut rng = seeded(cfg.seed);
    let mut report = GradCheckReport::default();
    let mut probe = params.clone();
    for id in ids {
        let len = params.get(id).len();
        let coords: Vec<usize> = if len <= cfg.max_coords_per_tensor {
            (0..len).collect()
        } else {
            let mut c = sample(&mut rng, len, cfg.max_coords_per_tensor).into_vec();
            c.sort_unstable();
            c
        };
        for k in coords {
            let orig = params.get(id).data()[k];
            probe.get_mut(id).data_mut()[k] = orig + cfg.eps;
            let (plus, sig_plus) = evaluate(&probe, &f)?;
            probe.get_mut(id).data_mut()[k] = orig - cfg.eps;
            let (minus, sig_minus) = evaluate(&probe, &f)?;
            probe.get_mut(id).data_mut()[k] = orig;
            if sig_plus != base_sig || sig_minus != base_sig {
                report.skipped_kinks += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * cfg.eps);
            let analytic = grads[id.index()].data()[k];
            let err = relative_error(analytic, numeric);
            report.checked += 1;
            let resolution = fd_resolution(plus, minus, cfg);
            let abs_err = (analytic - numeric).abs();
            if err > cfg.rel_tol && abs_err <= resolution {
                report.noise_limited += 1;
                report.max_noise_limited_abs_error = report.max_noise_limited_abs_error.max(abs_err);
                continue;
            }
            if err > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = err;
                report.worst = Some((params.name(id).to_string(), k));
                report.worst_values = Some((analytic, numeric));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    #[test]
    fn linear_function_is_exact() {
        let mut ps = ParamSet::new();
        let w = ps.add("w", Tensor::vector(vec![0.3, -1.2, 2.5]));
        let report = grad_check(
            &ps,
            None,
            |tape| {
                let c = tape.constant(Tensor::vector(vec![1.5, 2.0, -0.5]));
                let y = tape.mul(Var(w.index()), c)?;
                Ok(tape.sum(y))
            },
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert_eq!(report.checked, 3);
        assert!(report.max_relative_error < 1e-10, "{report:?}");
    }

    #[test]
    fn relu_kink_is_excluded() {
        let mut ps = ParamSet::new();
        let x = ps.add("x", Tensor::vector(vec![0.0, 1.0, -2.0]));
        let report = grad_check(
            &ps,
            None,
            |tape| {
                let r = tape.relu(Var(x.index()));
                Ok(tape.sum(r))
            },
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert_eq!(report.skipped_kinks, 1);
        assert_eq!(report.checked, 2);
        assert!(report.max_relative_error < 1e-10);
    }

    #[test]
    fn wrong_gradient_is_not_noise() {
        // d/dx of x³ checked against a tape that computes x² · c with c = x
        // held constant: the analytic gradient is off by a factor of 3/2.
        let mut ps = ParamSet::new();
        let x = ps.add("x", Tensor::vector(vec![0.7, -1.3]));
        let report = grad_check(
            &ps,
            None,
            |tape| {
                let xv = Var(x.index());
                let c = tape.constant(tape.value(xv).clone());
                let sq = tape.mul(xv, xv)?;
                let y = tape.mul(sq, c)?;
                Ok(tape.sum(y))
            },
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert_eq!(report.noise_limited, 0);
        assert!(report.max_relative_error > 0.1);
    }

    #[test]
    fn tiny_gradients_are_noise_limited() {
        let mut ps = ParamSet::new();
        let x = ps.add("x", Tensor::vector(vec![0.5]));
        let report = grad_check(
            &ps,
            None,
            |tape| {
                let big = tape.constant(Tensor::vector(vec![1.0]));
                let small = tape.scale(Var(x.index()), 3e-12);
                let y = tape.add(big, small)?;
                Ok(tape.sum(y))
            },
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert_eq!(report.noise_limited, 1);
        assert!(report.max_noise_limited_abs_error <= fd_resolution(1.0, 1.0, &GradCheckConfig::default()));
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1.0, 0.5) - 0.5 / 1.5).abs() < 1e-15);
    }
}
