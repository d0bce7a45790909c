//! Dimension witness: the Bell functional `∫∫ (a·b) E[αβ|ab]` and its
//! discretization over an ε-net, evaluated on Tsirelson correlations and on
//! the best rank-`2d²` correlations see-saw can find.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analytic_bounds::kg_lower_bound;
use crate::embedding_opt::{
    aligned_assignment, discretize_kernel, moment_matrix, seesaw_maximize_with_hints,
    value_gradient, PairKernel, SeesawOptions, VectorAssignment,
};
use crate::error::{argument, domain, Error, Result};
use crate::quantum::{correlation, tsirelson_strategy, CLIFFORD_MAX_N};
use crate::rng::{seeded, streams};
use crate::sphere::{
    build_eps_net, chunked_mean, dot, region_moments, Estimate, NetOptions, RegionMoments,
    SphereSampler,
};

/// Statistical slack, in standard errors, allowed in every chain check.
pub const SIGMA_SLACK: f64 = 4.0;

/// Largest tolerated gap between simulated and exact Tsirelson correlations.
pub const VALIDATION_TOL: f64 = 1e-10;

/// `∫∫ (a·b) E(a, b) da db` by Monte Carlo over independent uniform pairs.
pub fn bell_value_infinite<F>(
    n: usize,
    correlation: F,
    samples: usize,
    sampler: &SphereSampler,
) -> Result<Estimate>
where
    F: Fn(&[f64], &[f64]) -> f64 + Sync,
{
    if samples == 0 {
        return Err(domain("need at least one sample pair"));
    }
    if sampler.dim() != n {
        return Err(argument(format!(
            "sampler dimension {} ≠ n = {n}",
            sampler.dim()
        )));
    }
    Ok(chunked_mean(sampler, samples, |s| {
        let (a, b) = (s.sample(), s.sample());
        dot(a.as_slice(), b.as_slice()) * correlation(a.as_slice(), b.as_slice())
    }))
}

/// Correlations `E[αβ|uv]` indexed by net points.
pub enum Correlations<'a> {
    /// An explicit `|net| × |net|` table.
    Dense(&'a DMatrix<f64>),
    /// `E[uv] = left_u · right_v`.
    Factored {
        left: &'a DMatrix<f64>,
        right: &'a DMatrix<f64>,
    },
}

/// `Σ_{u,v} (w_u·w_v) E[αβ|uv]` with the vector moments `w_u`.
pub fn bell_value_finite(moments: &RegionMoments, correlations: Correlations<'_>) -> Result<f64> {
    let w = moment_matrix(moments);
    let r = moments.len();
    match correlations {
        Correlations::Dense(e) => {
            if e.shape() != (r, r) {
                return Err(argument(format!(
                    "correlation table is {:?}, expected ({r}, {r})",
                    e.shape()
                )));
            }
            Ok((w.transpose() * e * &w).trace())
        }
        Correlations::Factored { left, right } => {
            if left.nrows() != r || right.nrows() != r || left.ncols() != right.ncols() {
                return Err(argument("correlation factors do not match the net"));
            }
            let tl = w.transpose() * left;
            let tr = w.transpose() * right;
            Ok(tl.iter().zip(tr.iter()).map(|(x, y)| x * y).sum())
        }
    }
}

/// Largest `ε` with `1/n − 2ε > (1/K)(1/n + 2ε)`, where
/// `K = kg_lower_bound(n, 2d²)`: `ε* = (K − 1)/(2n(K + 1))`.
pub fn eps_threshold(n: usize, d: usize) -> Result<f64> {
    let m = 2 * d * d;
    if d < 1 || n <= m {
        return Err(domain(format!("need n > 2d² (got n = {n}, d = {d})")));
    }
    let k = kg_lower_bound(n as u64, m as u64)?.bound;
    if k <= 1.0 {
        return Err(Error::NumericalIntegrity(format!(
            "bound K = {k} is not above 1"
        )));
    }
    Ok((k - 1.0) / (2.0 * n as f64 * (k + 1.0)))
}

/// Parameters of a witness run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessConfig {
    pub n: usize,
    pub d: usize,
    pub eps: f64,
    pub seed: u64,
    /// Permit `n ≤ 2d²`; the constrained dimension is then capped at `n`.
    pub allow_small_n: bool,
    pub max_net_points: usize,
    /// Consecutive-rejection budget for net construction (`None`: default rule).
    pub net_candidates: Option<usize>,
    pub samples_per_region: usize,
    pub seesaw: SeesawOptions,
    /// Net pairs on which exact inner products are checked against the
    /// simulated Tsirelson strategy.
    pub validation_pairs: usize,
}

impl WitnessConfig {
    pub fn new(n: usize, d: usize, eps: f64, seed: u64) -> Self {
        WitnessConfig {
            n,
            d,
            eps,
            seed,
            allow_small_n: false,
            max_net_points: 200_000,
            net_candidates: None,
            samples_per_region: 100,
            seesaw: SeesawOptions {
                seed,
                ..SeesawOptions::default()
            },
            validation_pairs: 64,
        }
    }

    /// Budgets for a run at `ε` near the certification threshold.
    pub fn deep(mut self) -> Self {
        self.max_net_points = 1_000_000;
        self.net_candidates = Some(1_000_000);
        self
    }

    /// The constrained vector dimension, `2d²` (capped at `n` under override).
    pub fn m(&self) -> usize {
        (2 * self.d * self.d).min(self.n)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 1 {
            return Err(domain("d must be at least 1"));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(domain(format!("eps must lie in (0, 1), got {}", self.eps)));
        }
        if self.n <= 2 * self.d * self.d && !self.allow_small_n {
            return Err(domain(format!(
                "n must exceed 2d² = {} (got n = {}); pass the override to run anyway",
                2 * self.d * self.d,
                self.n
            )));
        }
        if self.samples_per_region < 100 {
            return Err(domain("need at least 100 samples per region"));
        }
        Ok(())
    }
}

/// An estimate with its propagated standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueWithError {
    pub value: f64,
    pub std_error: f64,
}

/// One inequality of the chain; `slack = rhs − lhs` including the allowance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub allowance: f64,
    pub slack: f64,
    pub holds: bool,
}

impl ChainCheck {
    fn new(name: &str, lhs: f64, rhs: f64, allowance: f64) -> Self {
        let slack = rhs + allowance - lhs;
        ChainCheck {
            name: name.into(),
            lhs,
            rhs,
            allowance,
            slack,
            holds: slack >= 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    CertifiedSeparation,
    ConsistentButUncertified,
    ViolationOfTheory,
}

/// Agreement between exact inner products and the simulated strategy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub pairs: usize,
    pub max_deviation: f64,
}

/// Outcome of [`run_witness`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub schema: u32,
    pub config: WitnessConfig,
    pub m: usize,
    pub net_size: usize,
    /// Samples in each of the two independent moment estimates.
    pub moment_samples: u64,
    pub empty_regions: usize,
    pub k_lower: f64,
    /// `∫∫ (a·b)² = 1/n`.
    pub b_infinite_quantum: f64,
    pub b_finite_quantum: ValueWithError,
    pub b_finite_seesaw_d: ValueWithError,
    /// See-saw objective on the fitting sample (optimistically biased).
    pub seesaw_fit_value: f64,
    pub seesaw_iterations: usize,
    pub seesaw_converged: bool,
    /// `0` when no `ε` certifies (`n ≤ 2d²`).
    pub eps_threshold: f64,
    pub validation: Validation,
    pub chain_checks: Vec<ChainCheck>,
    pub verdict: Verdict,
}

/// Checks `u·v` against the simulated Tsirelson strategy on random net pairs.
fn validate_correlations(points: &DMatrix<f64>, pairs: usize, seed: u64) -> Result<Validation> {
    let (r, n) = points.shape();
    if pairs == 0 || n > CLIFFORD_MAX_N {
        return Ok(Validation {
            pairs: 0,
            max_deviation: 0.0,
        });
    }
    let strategy = tsirelson_strategy(n)?;
    let mut rng = seeded(seed, streams::TSIRELSON_PAIRS);
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let (i, j) = (rng.random_range(0..r), rng.random_range(0..r));
        let u: Vec<f64> = points.row(i).iter().copied().collect();
        let v: Vec<f64> = points.row(j).iter().copied().collect();
        worst = worst.max((correlation(&strategy, &u, &v)? - dot(&u, &v)).abs());
    }
    if worst > VALIDATION_TOL {
        return Err(Error::NumericalIntegrity(format!(
            "simulated correlations deviate from u·v by {worst:e}"
        )));
    }
    Ok(Validation {
        pairs,
        max_deviation: worst,
    })
}

/// Net → moments → Tsirelson value → rank-`m` see-saw value → chain checks.
pub fn run_witness(config: &WitnessConfig) -> Result<WitnessReport> {
    config.validate()?;
    let (n, m) = (config.n, config.m());
    let k = kg_lower_bound(n as u64, m as u64)?.bound;
    let eps_star = if n > 2 * config.d * config.d {
        eps_threshold(n, config.d)?
    } else {
        0.0
    };

    let net = build_eps_net(
        n,
        config.eps,
        config.seed,
        NetOptions {
            max_candidates: config.net_candidates,
            max_points: config.max_net_points,
        },
    )?;
    // The see-saw assignment is fitted on one moment sample and scored on an
    // independent one. Scoring on the fitting sample biases the value upward
    // by roughly 1/samples_per_region, independent of the net size.
    let samples = config.samples_per_region * net.len();
    let fit_sampler = SphereSampler::new(n, config.seed, streams::REGION_MOMENTS_FIT);
    let fit_moments = region_moments(&net, samples, &fit_sampler)?;
    let sampler = SphereSampler::new(n, config.seed, streams::REGION_MOMENTS);
    let moments = region_moments(&net, samples, &sampler)?;
    let points = DMatrix::from_fn(net.len(), n, |i, j| net.points()[i].as_slice()[j]);
    let validation = validate_correlations(&points, config.validation_pairs, config.seed)?;
    let w = moment_matrix(&moments);

    let b_quantum = bell_value_finite(
        &moments,
        Correlations::Factored {
            left: &points,
            right: &points,
        },
    )?;
    let identity = VectorAssignment {
        m: n,
        row_vectors: net.points().iter().map(|p| p.as_slice().to_vec()).collect(),
        col_vectors: net.points().iter().map(|p| p.as_slice().to_vec()).collect(),
    };
    let sigma_quantum = moments.linear_std_error(&row_major(&value_gradient(&w, &identity)));

    let fit_kernel = discretize_kernel(PairKernel::Dot, &net, &fit_moments, 0, &fit_sampler)?;
    let seesaw = seesaw_maximize_with_hints(
        &fit_kernel,
        m,
        &config.seesaw,
        &[aligned_assignment(&fit_moments, m)],
    )?;
    let kernel = discretize_kernel(PairKernel::Dot, &net, &moments, 0, &sampler)?;
    let b_seesaw = seesaw.assignment.value(&kernel);
    let sigma_seesaw =
        moments.linear_std_error(&row_major(&value_gradient(&w, &seesaw.assignment)));

    let inv_n = 1.0 / n as f64;
    let eps = config.eps;
    let sigma_combined = sigma_seesaw.hypot(sigma_quantum / k);
    let chain_checks = vec![
        // Read as lhs ≤ rhs + allowance.
        ChainCheck::new(
            "c1_quantum_value",
            inv_n - 2.0 * eps,
            b_quantum,
            SIGMA_SLACK * sigma_quantum,
        ),
        ChainCheck::new(
            "c2_rank_constrained_bound",
            b_seesaw,
            inv_n / k,
            SIGMA_SLACK * sigma_seesaw,
        ),
        ChainCheck::new(
            "c3_combined_chain",
            b_seesaw,
            (b_quantum + 2.0 * eps) / k,
            SIGMA_SLACK * sigma_combined,
        ),
    ];
    let gap_resolved = b_quantum - b_seesaw > SIGMA_SLACK * sigma_quantum.hypot(sigma_seesaw);
    let verdict = if chain_checks.iter().any(|c| !c.holds) {
        Verdict::ViolationOfTheory
    } else if eps <= eps_star && gap_resolved {
        Verdict::CertifiedSeparation
    } else {
        Verdict::ConsistentButUncertified
    };

    Ok(WitnessReport {
        schema: 1,
        config: config.clone(),
        m,
        net_size: net.len(),
        moment_samples: moments.samples_used,
        empty_regions: moments.empty_regions.len(),
        k_lower: k,
        b_infinite_quantum: inv_n,
        b_finite_quantum: ValueWithError {
            value: b_quantum,
            std_error: sigma_quantum,
        },
        b_finite_seesaw_d: ValueWithError {
            value: b_seesaw,
            std_error: sigma_seesaw,
        },
        seesaw_fit_value: seesaw.value,
        seesaw_iterations: seesaw.iterations,
        seesaw_converged: seesaw.converged,
        eps_threshold: eps_star,
        validation,
        chain_checks,
        verdict,
    })
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic_bounds::kg_lower_bound;
    use crate::embedding_opt::{analytic_d, project_embed, seesaw_maximize_with_hints};
    use crate::sphere::{NetOptions, UnitVector};

    fn quick(n: usize, d: usize, eps: f64, seed: u64) -> WitnessConfig {
        let mut c = WitnessConfig::new(n, d, eps, seed);
        c.seesaw.restarts = 4;
        c
    }

    #[test]
    fn infinite_value_examples() {
        let s = SphereSampler::new(3, 1, streams::BELL_PAIRS);
        let zero = bell_value_infinite(3, |_, _| 0.0, 10_000, &s).unwrap();
        assert_eq!((zero.value, zero.std_error), (0.0, 0.0));
        let tsirelson = bell_value_infinite(3, dot, 1_000_000, &s).unwrap();
        assert!(tsirelson.within_sigmas(1.0 / 3.0, 3.0), "{tsirelson:?}");
        let embed =
            |v: &[f64]| project_embed(&UnitVector::normalize(v.to_vec()).unwrap(), 2).unwrap();
        let projected =
            bell_value_infinite(3, |a, b| embed(a).dot(&embed(b)), 1_000_000, &s).unwrap();
        let k = kg_lower_bound(3, 2).unwrap().bound;
        assert!(projected.value <= (1.0 / 3.0) / k + 3.0 * projected.std_error);
        assert!(
            projected.within_sigmas(analytic_d(3, 2).unwrap(), 4.0),
            "{projected:?}"
        );
    }

    #[test]
    fn finite_value_on_two_points() {
        let net = build_eps_net(1, 0.5, 0, NetOptions::default()).unwrap();
        let s = SphereSampler::new(1, 2, 0);
        let mom = region_moments(&net, 10_000, &s).unwrap();
        let pts = DMatrix::from_fn(2, 1, |i, _| net.points()[i].as_slice()[0]);
        let v = bell_value_finite(
            &mom,
            Correlations::Factored {
                left: &pts,
                right: &pts,
            },
        )
        .unwrap();
        // Every sample contributes |a| = 1 to Σ_u w_u·u.
        assert!((v - 1.0).abs() < 1e-12);
        let zero = DMatrix::zeros(2, 2);
        assert_eq!(
            bell_value_finite(&mom, Correlations::Dense(&zero)).unwrap(),
            0.0
        );
        let wrong = DMatrix::zeros(3, 3);
        assert!(bell_value_finite(&mom, Correlations::Dense(&wrong)).is_err());
    }

    #[test]
    fn finite_value_matches_dense_path_and_kernel_value() {
        let net = build_eps_net(3, 0.3, 4, NetOptions::default()).unwrap();
        let s = SphereSampler::new(3, 5, 0);
        let mom = region_moments(&net, 100 * net.len(), &s).unwrap();
        let pts = DMatrix::from_fn(net.len(), 3, |i, j| net.points()[i].as_slice()[j]);
        let factored = bell_value_finite(
            &mom,
            Correlations::Factored {
                left: &pts,
                right: &pts,
            },
        )
        .unwrap();
        let dense =
            bell_value_finite(&mom, Correlations::Dense(&(&pts * pts.transpose()))).unwrap();
        assert!((factored - dense).abs() < 1e-12);
        let kernel = discretize_kernel(PairKernel::Dot, &net, &mom, 0, &s).unwrap();
        assert!((kernel.value(&pts, &pts) - factored).abs() < 1e-9);
        assert!((1.0 / 3.0 - 0.6..=1.0 / 3.0 + 1e-12).contains(&factored));
    }

    #[test]
    fn threshold_examples() {
        let k = kg_lower_bound(3, 2).unwrap().bound;
        let e = eps_threshold(3, 1).unwrap();
        assert!((e - (k - 1.0) / (6.0 * (k + 1.0))).abs() < 1e-16);
        assert!((e - 0.006_468_735_754_960_359).abs() < 1e-12);
        assert!((eps_threshold(9, 2).unwrap() - 0.000_191_590_355_071_931_27).abs() < 1e-12);
        assert!(eps_threshold(1000, 1).unwrap() < eps_threshold(100, 1).unwrap());
        assert!(eps_threshold(2, 1).is_err());
        for (n, d) in [(3, 1), (9, 2), (40, 3), (1000, 1)] {
            let k = kg_lower_bound(n as u64, 2 * (d * d) as u64).unwrap().bound;
            let e = eps_threshold(n, d).unwrap();
            let back = e * 2.0 * (k + 1.0) / (k - 1.0);
            assert!((back - 1.0 / n as f64).abs() <= 4.0 * f64::EPSILON / n as f64);
        }
    }

    #[test]
    fn config_invariants() {
        assert!(WitnessConfig::new(2, 1, 0.1, 0).validate().is_err());
        let mut c = WitnessConfig::new(2, 1, 0.1, 0);
        c.allow_small_n = true;
        assert!(c.validate().is_ok());
        assert_eq!(c.m(), 2);
        assert!(WitnessConfig::new(3, 1, 1.5, 0).validate().is_err());
    }

    #[test]
    fn coarse_run_passes_the_chain() {
        let r = run_witness(&quick(3, 1, 0.3, 1)).unwrap();
        assert_eq!(r.m, 2);
        assert!(
            r.chain_checks.iter().all(|c| c.holds),
            "{:?}",
            r.chain_checks
        );
        assert_eq!(r.verdict, Verdict::ConsistentButUncertified);
        assert!(r.validation.pairs > 0 && r.validation.max_deviation <= VALIDATION_TOL);
        assert!(r.b_finite_seesaw_d.value < r.b_finite_quantum.value);
    }

    #[test]
    fn seesaw_stays_below_the_aligned_optimum() {
        let net = build_eps_net(3, 0.3, 2, NetOptions::default()).unwrap();
        let s = SphereSampler::new(3, 3, 0);
        let mom = region_moments(&net, 100 * net.len(), &s).unwrap();
        let kernel = discretize_kernel(PairKernel::Dot, &net, &mom, 0, &s).unwrap();
        let aligned = aligned_assignment(&mom, 3);
        let full = aligned.value(&kernel);
        let opts = SeesawOptions {
            restarts: 4,
            ..SeesawOptions::default()
        };
        let low =
            seesaw_maximize_with_hints(&kernel, 2, &opts, &[aligned_assignment(&mom, 2)]).unwrap();
        assert!(low.value <= full + 1e-9);
    }

    #[test]
    fn override_at_small_n_claims_nothing() {
        let mut c = quick(2, 1, 0.2, 3);
        c.allow_small_n = true;
        let r = run_witness(&c).unwrap();
        assert_eq!(r.k_lower, 1.0);
        assert_eq!(r.eps_threshold, 0.0);
        assert_ne!(r.verdict, Verdict::CertifiedSeparation);
    }

    #[test]
    fn report_serializes_with_schema() {
        let r = run_witness(&quick(3, 1, 0.4, 2)).unwrap();
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["schema"], 1);
        assert_eq!(json["verdict"], "consistent_but_uncertified");
        let back: WitnessReport = serde_json::from_value(json).unwrap();
        assert_eq!(back, r);
    }
}
