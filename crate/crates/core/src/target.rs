//! Target log-densities and exact conditioning.
//!
//! A [`TargetLogDensity`] is an unnormalized log-density over a declared set
//! of named tensors. Its one non-obvious operation is [`condition`]: fixing a
//! subset of coordinates yields the conditional target over the rest, and the
//! conditional is *exact by construction* — evaluating it merges the free and
//! fixed coordinates and calls the original density, so the value is
//! bit-identical to evaluating the joint at the merged point. No
//! renormalization is attempted (none is needed for Metropolis-style ratios).
//!
//! The module also ships the 2-D Gaussian mean-estimation example model:
//! simulated data, its posterior target, and the conjugate closed form used
//! as an oracle.
//!
//! [`condition`]: TargetLogDensity::condition

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prng::RngKey;
use crate::state::{Position, Tensor, TensorSpec};

type DensityFn = dyn Fn(&Position) -> f64 + Send + Sync;

/// Unnormalized log-density over named tensors.
///
/// Evaluation returns a finite value or `-inf` (outside the support); a NaN
/// from the wrapped callable is reported as an error. The declared structure
/// (names, kinds, shapes) is checked on every call.
#[derive(Clone)]
pub struct TargetLogDensity {
    names: Arc<Vec<(String, TensorSpec)>>,
    f: Arc<DensityFn>,
}

impl std::fmt::Debug for TargetLogDensity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let names: Vec<&str> = self.names.iter().map(|(n, _)| n.as_str()).collect();
        write!(f, "TargetLogDensity{{{}}}", names.join(", "))
    }
}

impl TargetLogDensity {
    /// Wraps a log-density callable with its declared coordinate structure.
    pub fn new<F>(names: Vec<(String, TensorSpec)>, f: F) -> Result<Self>
    where
        F: Fn(&Position) -> f64 + Send + Sync + 'static,
    {
        if names.is_empty() {
            return Err(Error::InvalidArgument(
                "a target must declare at least one coordinate".into(),
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for (n, _) in &names {
            if !seen.insert(n.as_str()) {
                return Err(Error::DuplicateName(n.clone()));
            }
        }
        Ok(TargetLogDensity {
            names: Arc::new(names),
            f: Arc::new(f),
        })
    }

    /// Declared coordinates, in declaration order.
    pub fn declared(&self) -> &[(String, TensorSpec)] {
        &self.names
    }

    /// Checks that `position` carries exactly the declared coordinates (any
    /// entry order) with matching kinds and shapes.
    fn check_structure(&self, position: &Position) -> Result<()> {
        if position.len() != self.names.len() {
            return Err(Error::StructureMismatch(format!(
                "position has {} entries, target declares {}",
                position.len(),
                self.names.len()
            )));
        }
        for (name, spec) in self.names.iter() {
            let t = position.expect(name)?;
            if &t.spec() != spec {
                return Err(Error::StructureMismatch(format!(
                    "entry `{name}` has {:?} {:?}, target declares {:?} {:?}",
                    t.kind(),
                    t.shape(),
                    spec.kind,
                    spec.shape
                )));
            }
        }
        Ok(())
    }

    /// Evaluates the log-density at `position`.
    pub fn evaluate(&self, position: &Position) -> Result<f64> {
        self.check_structure(position)?;
        let v = (self.f)(position);
        if v.is_nan() {
            return Err(Error::NanLogDensity(position.describe()));
        }
        Ok(v)
    }

    /// Conditions on `fixed`, returning the target over the free coordinates.
    ///
    /// `fixed` must be a strict subset of the declared coordinates (an empty
    /// `fixed` returns a target identical to this one; fixing everything is
    /// an error because the result would have an empty domain). Evaluating
    /// the conditional at `free` returns exactly
    /// `self.evaluate(free ∪ fixed)`, bit for bit.
    pub fn condition(&self, fixed: &Position) -> Result<TargetLogDensity> {
        let mut free = Vec::new();
        for (name, spec) in self.names.iter() {
            match fixed.get(name) {
                None => free.push((name.clone(), spec.clone())),
                Some(t) => {
                    if &t.spec() != spec {
                        return Err(Error::StructureMismatch(format!(
                            "fixed entry `{name}` has {:?} {:?}, target declares {:?} {:?}",
                            t.kind(),
                            t.shape(),
                            spec.kind,
                            spec.shape
                        )));
                    }
                }
            }
        }
        for name in fixed.names() {
            if !self.names.iter().any(|(n, _)| n == name) {
                return Err(Error::UnknownName(name.into()));
            }
        }
        if free.is_empty() {
            return Err(Error::InvalidArgument(
                "conditioning on every coordinate leaves an empty domain".into(),
            ));
        }
        let f = Arc::clone(&self.f);
        let fixed = fixed.clone();
        TargetLogDensity::new(free, move |p: &Position| {
            let merged = p.merge(&fixed).expect("free and fixed names are disjoint");
            f(&merged)
        })
    }
}

// ---------------------------------------------------------------------------
// Gaussian mean-estimation example model
// ---------------------------------------------------------------------------

/// Configuration of the 2-D Gaussian mean-estimation model.
///
/// Observations are i.i.d. `MVN(mu, cov)` with known covariance and an
/// independent `N(prior_mean_i, prior_sd^2)` prior on each mean component.
/// `cov` is stored as written down; sampling and evaluation use its
/// symmetrized form `(cov + cov^T) / 2` (see [`GaussianModelSpec::effective_cov`]),
/// since only the symmetric part defines a valid covariance.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GaussianModelSpec {
    /// Observation covariance as specified (may be asymmetric as written).
    pub cov: [[f64; 2]; 2],
    /// Prior mean of `(mu_x, mu_y)`.
    pub prior_mean: [f64; 2],
    /// Prior standard deviation shared by both components.
    pub prior_sd: f64,
    /// Mean used when simulating data.
    pub true_mean: [f64; 2],
    /// Number of observations to simulate.
    pub num_points: usize,
}

impl Default for GaussianModelSpec {
    fn default() -> Self {
        GaussianModelSpec {
            cov: [[1.5, 0.3], [0.7, 0.8]],
            prior_mean: [0.0, 0.0],
            prior_sd: 10.0,
            true_mean: [6.0, 4.0],
            num_points: 1000,
        }
    }
}

impl GaussianModelSpec {
    /// Symmetrized observation covariance actually used by the model.
    pub fn effective_cov(&self) -> [[f64; 2]; 2] {
        let c = &self.cov;
        let off = 0.5 * (c[0][1] + c[1][0]);
        [[c[0][0], off], [off, c[1][1]]]
    }

    pub fn validate(&self) -> Result<()> {
        let e = self.effective_cov();
        let det = e[0][0] * e[1][1] - e[0][1] * e[1][0];
        if !(e[0][0] > 0.0 && det > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "effective covariance {e:?} is not positive definite"
            )));
        }
        if !(self.prior_sd > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "prior_sd must be positive, got {}",
                self.prior_sd
            )));
        }
        Ok(())
    }
}

fn inv_2x2(m: &[[f64; 2]; 2]) -> ([[f64; 2]; 2], f64) {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let inv = [
        [m[1][1] / det, -m[0][1] / det],
        [-m[1][0] / det, m[0][0] / det],
    ];
    (inv, det)
}

/// Draws `num_points` observations from `MVN(true_mean, effective_cov)`.
///
/// Deterministic in `key`.
pub fn simulate_gaussian_data(spec: &GaussianModelSpec, key: &RngKey) -> Result<Vec<[f64; 2]>> {
    spec.validate()?;
    let e = spec.effective_cov();
    // Cholesky factor of the 2x2 effective covariance.
    let l00 = e[0][0].sqrt();
    let l10 = e[1][0] / l00;
    let l11 = (e[1][1] - l10 * l10).sqrt();
    let mut stream = key.stream();
    Ok((0..spec.num_points)
        .map(|_| {
            let z0 = stream.standard_normal();
            let z1 = stream.standard_normal();
            [
                spec.true_mean[0] + l00 * z0,
                spec.true_mean[1] + l10 * z0 + l11 * z1,
            ]
        })
        .collect())
}

/// Posterior log-density of `(mu_x, mu_y)` given `data`.
///
/// Coordinates are the scalar entries `mu_x` and `mu_y`. The value is the
/// exact joint log-density (log-prior plus full log-likelihood including
/// normalizing constants), so the same target serves both sampling and
/// density-surface exports.
pub fn gaussian_mean_target(
    spec: &GaussianModelSpec,
    data: &[[f64; 2]],
) -> Result<TargetLogDensity> {
    spec.validate()?;
    let (prec, det) = inv_2x2(&spec.effective_cov());
    let norm_per_point = -f64::ln(2.0 * std::f64::consts::PI) - 0.5 * det.ln();
    let data = data.to_vec();
    let prior_mean = spec.prior_mean;
    let prior_sd = spec.prior_sd;
    TargetLogDensity::new(
        vec![
            ("mu_x".into(), TensorSpec::scalar_f64()),
            ("mu_y".into(), TensorSpec::scalar_f64()),
        ],
        move |p: &Position| {
            let mu = [
                p.get("mu_x").unwrap().as_scalar_f64().unwrap(),
                p.get("mu_y").unwrap().as_scalar_f64().unwrap(),
            ];
            let mut lp = 0.0;
            for (m, pm) in mu.iter().zip(prior_mean) {
                let z = (m - pm) / prior_sd;
                lp += -0.5 * z * z
                    - prior_sd.ln()
                    - 0.5 * f64::ln(2.0 * std::f64::consts::PI);
            }
            for x in &data {
                let d = [x[0] - mu[0], x[1] - mu[1]];
                let q = d[0] * (prec[0][0] * d[0] + prec[0][1] * d[1])
                    + d[1] * (prec[1][0] * d[0] + prec[1][1] * d[1]);
                lp += norm_per_point - 0.5 * q;
            }
            lp
        },
    )
}

/// Exact Gaussian-conjugate posterior of the mean.
#[derive(Clone, Debug, PartialEq)]
pub struct ConjugatePosterior {
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
}

impl ConjugatePosterior {
    /// Marginal standard deviations.
    pub fn sd(&self) -> [f64; 2] {
        [self.cov[0][0].sqrt(), self.cov[1][1].sqrt()]
    }
}

/// Closed-form posterior for the Gaussian mean model.
///
/// With prior `N(m0, S0)` (diagonal `S0 = prior_sd^2 I`) and `n` observations
/// of known covariance `S`, the posterior is
/// `N((S0^-1 + n S^-1)^-1 (S0^-1 m0 + S^-1 sum x), (S0^-1 + n S^-1)^-1)`.
/// With `n == 0` this reduces to the prior.
pub fn conjugate_posterior(
    spec: &GaussianModelSpec,
    data: &[[f64; 2]],
) -> Result<ConjugatePosterior> {
    spec.validate()?;
    let (prec, _) = inv_2x2(&spec.effective_cov());
    let n = data.len() as f64;
    let prior_prec = 1.0 / (spec.prior_sd * spec.prior_sd);
    let sum = data.iter().fold([0.0, 0.0], |acc, x| {
        [acc[0] + x[0], acc[1] + x[1]]
    });
    // Posterior precision = prior precision + n * data precision.
    let post_prec = [
        [prior_prec + n * prec[0][0], n * prec[0][1]],
        [n * prec[1][0], prior_prec + n * prec[1][1]],
    ];
    let (post_cov, _) = inv_2x2(&post_prec);
    // Posterior mean = post_cov * (prior_prec * m0 + data precision * sum x).
    let b = [
        prior_prec * spec.prior_mean[0] + prec[0][0] * sum[0] + prec[0][1] * sum[1],
        prior_prec * spec.prior_mean[1] + prec[1][0] * sum[0] + prec[1][1] * sum[1],
    ];
    let mean = [
        post_cov[0][0] * b[0] + post_cov[0][1] * b[1],
        post_cov[1][0] * b[0] + post_cov[1][1] * b[1],
    ];
    Ok(ConjugatePosterior {
        mean,
        cov: post_cov,
    })
}

/// 1-D standard normal target over the scalar entry `x` (handy in tests and
/// calibration checks).
pub fn standard_normal_target() -> TargetLogDensity {
    TargetLogDensity::new(vec![("x".into(), TensorSpec::scalar_f64())], |p| {
        let x = p.get("x").unwrap().as_scalar_f64().unwrap();
        -0.5 * x * x - 0.5 * f64::ln(2.0 * std::f64::consts::PI)
    })
    .expect("valid declaration")
}

/// Builds the scalar-entry position `{mu_x, mu_y}`.
pub fn mean_position(mu_x: f64, mu_y: f64) -> Position {
    Position::from_pairs([
        ("mu_x", Tensor::scalar_f64(mu_x)),
        ("mu_y", Tensor::scalar_f64(mu_y)),
    ])
    .expect("distinct names")
}
