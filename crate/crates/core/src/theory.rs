//! RIP and NSP checks, the recovery constants `C0`/`C1`, the Hoeffding-type
//! tail bound and the Bagging error bounds, with Monte-Carlo validators.

use std::f64::consts::SQRT_2;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal as StatNormal};

use crate::ensemble::{bagging_from_samples, draw_bootstrap, estimator_stream, subsample_rows};
use crate::error::{Error, Result};
use crate::lasso::LassoConfig;
use crate::linalg::{norm1, norm2, norm_inf, sub, DenseMatrix};
use crate::rng::{Role, RngStream};

/// Upper end of the admissible RIP constants, `√2 − 1`.
pub const RIP_LIMIT: f64 = SQRT_2 - 1.0;

/// Largest number of column subsets [`rip_constant_bruteforce`] enumerates.
pub const MAX_RIP_SUBSETS: u128 = 2_000_000;

const UNIT_NORM_TOL: f64 = 1e-9;

fn check_delta(delta: f64) -> Result<()> {
    if (0.0..RIP_LIMIT).contains(&delta) {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "delta must lie in [0, sqrt(2) - 1 = {RIP_LIMIT:.6}), got {delta}"
        )))
    }
}

/// `C0(δ) = 2(1 − (1 − √2)δ) / (1 − (1 + √2)δ)`.
pub fn c0(delta: f64) -> Result<f64> {
    check_delta(delta)?;
    Ok(2.0 * (1.0 - (1.0 - SQRT_2) * delta) / (1.0 - (1.0 + SQRT_2) * delta))
}

/// `C1(δ) = 4√(1 + δ) / (1 − (1 + √2)δ)`.
pub fn c1(delta: f64) -> Result<f64> {
    check_delta(delta)?;
    Ok(4.0 * (1.0 + delta).sqrt() / (1.0 - (1.0 + SQRT_2) * delta))
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) as u128 / (i + 1) as u128;
    }
    c
}

/// Advances `idx` to the next `k`-combination of `0..n` in lexicographic
/// order; returns false after the last one.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Exact restricted isometry constant `δ_s(A)`: the largest deviation from 1
/// of an eigenvalue of `A_Sᵀ A_S` over all column subsets with `|S| = s`.
///
/// Columns of `A` must have unit norm.
pub fn rip_constant_bruteforce(a: &DenseMatrix, s: usize) -> Result<f64> {
    let n = a.cols();
    if s == 0 || s > n {
        return Err(Error::domain(format!("s must be in 1..={n}, got {s}")));
    }
    if let Some((j, norm)) = a
        .column_norms()
        .into_iter()
        .enumerate()
        .find(|(_, c)| (c - 1.0).abs() > UNIT_NORM_TOL)
    {
        return Err(Error::domain(format!(
            "column {j} has norm {norm}; normalize columns first"
        )));
    }
    let subsets = binomial(n, s);
    if subsets > MAX_RIP_SUBSETS {
        return Err(Error::Capacity {
            subsets,
            limit: MAX_RIP_SUBSETS,
        });
    }
    let gram = a.gram();
    let mut idx: Vec<usize> = (0..s).collect();
    let mut delta: f64 = 0.0;
    loop {
        let sub = DMatrix::from_fn(s, s, |i, j| gram.get(idx[i], idx[j]));
        let eig = SymmetricEigen::new(sub).eigenvalues;
        let lo = eig.min();
        let hi = eig.max();
        delta = delta.max(1.0 - lo).max(hi - 1.0);
        if !next_combination(&mut idx, n) {
            break;
        }
    }
    Ok(delta)
}

/// Orthonormal basis of the null space of `A`, from a full SVD.
pub fn null_space(a: &DenseMatrix) -> Vec<Vec<f64>> {
    let (m, n) = (a.rows(), a.cols());
    // Pad with zero rows so the SVD returns all n right singular vectors.
    let padded = DMatrix::from_fn(m.max(n), n, |i, j| if i < m { a.get(i, j) } else { 0.0 });
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let sigma_max = svd.singular_values.max();
    let tol = m.max(n) as f64 * f64::EPSILON * sigma_max.max(f64::MIN_POSITIVE);
    (0..n)
        .filter(|&i| svd.singular_values[i] <= tol)
        .map(|i| v_t.row(i).iter().copied().collect())
        .collect()
}

/// The null space property test for one vector: the `s` largest magnitudes
/// of `v` sum to less than half of `‖v‖₁`.
pub fn nsp_holds_for(v: &[f64], s: usize) -> bool {
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_by(|x, y| y.total_cmp(x));
    let top: f64 = mags.iter().take(s).sum();
    top < norm1(v) / 2.0
}

/// Exact null space property of order `s` for a matrix with a
/// one-dimensional null space.
pub fn nsp_check_nullity1(a: &DenseMatrix, s: usize) -> Result<bool> {
    let basis = null_space(a);
    if basis.len() != 1 {
        return Err(Error::domain(format!(
            "null space has dimension {}, expected 1; use nsp_check_sampled",
            basis.len()
        )));
    }
    Ok(nsp_holds_for(&basis[0], s))
}

/// Sampled null space property: tests `num_samples` random directions of the
/// null space. `false` is a certificate of failure, `true` is only evidence.
pub fn nsp_check_sampled(a: &DenseMatrix, s: usize, num_samples: usize, rng: &RngStream) -> Result<bool> {
    let basis = null_space(a);
    if basis.is_empty() {
        return Err(Error::domain("null space is trivial"));
    }
    let n = a.cols();
    let mut gen = rng.derive_role(Role::NullSpace).rng();
    let mut v = vec![0.0; n];
    for _ in 0..num_samples {
        v.iter_mut().for_each(|x| *x = 0.0);
        for b in &basis {
            let c: f64 = StandardNormal.sample(&mut gen);
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi += c * bi;
            }
        }
        if !nsp_holds_for(&v, s) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Bound on `P{Σ Yᵢ ≥ nξ}` for i.i.d. `Yᵢ ∈ [a, b]` with mean `mean`:
/// `exp(−2n(ξ − mean)² / (b − a)²)`, and 1 when `ξ ≤ mean`.
pub fn hoeffding_tail_bound(n: usize, xi: f64, mean: f64, a: f64, b: f64) -> Result<f64> {
    if !(a < b) {
        return Err(Error::domain(format!("need a < b, got a = {a}, b = {b}")));
    }
    if !(a..=b).contains(&mean) {
        return Err(Error::domain(format!("mean {mean} outside [{a}, {b}]")));
    }
    if xi <= mean {
        return Ok(1.0);
    }
    let gap = xi - mean;
    Ok((-2.0 * n as f64 * gap * gap / ((b - a) * (b - a))).exp().clamp(0.0, 1.0))
}

/// A bounded distribution with known support and mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundedSampler {
    Uniform { a: f64, b: f64 },
    Bernoulli { p: f64 },
    /// Normal `(mu, sigma)` conditioned on `[a, b]`.
    TruncatedNormal { mu: f64, sigma: f64, a: f64, b: f64 },
    /// Always `value`, declared on the range `[a, b]`.
    Constant { value: f64, a: f64, b: f64 },
}

impl BoundedSampler {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Uniform { a, b } => a < b,
            Self::Bernoulli { p } => (0.0..=1.0).contains(&p),
            Self::TruncatedNormal { sigma, a, b, .. } => sigma > 0.0 && a < b,
            Self::Constant { value, a, b } => a < b && (a..=b).contains(&value),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::domain(format!("invalid sampler {self:?}")))
        }
    }

    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            Self::Uniform { a, b } | Self::TruncatedNormal { a, b, .. } | Self::Constant { a, b, .. } => {
                (a, b)
            }
            Self::Bernoulli { .. } => (0.0, 1.0),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::Uniform { a, b } => 0.5 * (a + b),
            Self::Bernoulli { p } => p,
            Self::TruncatedNormal { mu, sigma, a, b } => {
                let std = StatNormal::standard();
                let (alpha, beta) = ((a - mu) / sigma, (b - mu) / sigma);
                let mass = std.cdf(beta) - std.cdf(alpha);
                mu + sigma * (std.pdf(alpha) - std.pdf(beta)) / mass
            }
            Self::Constant { value, .. } => value,
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Uniform { a, b } => rng.random_range(a..b),
            Self::Bernoulli { p } => {
                if rng.random::<f64>() < p {
                    1.0
                } else {
                    0.0
                }
            }
            Self::TruncatedNormal { mu, sigma, a, b } => {
                let normal = Normal::new(mu, sigma).expect("validated sigma");
                loop {
                    let v = normal.sample(rng);
                    if (a..=b).contains(&v) {
                        return v;
                    }
                }
            }
            Self::Constant { value, .. } => value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailCheck {
    /// Fraction of trials with `Σ Yᵢ ≥ nξ`.
    pub empirical: f64,
    pub bound: f64,
    /// Binomial standard error of `empirical`.
    pub std_error: f64,
    pub trials: usize,
    /// `empirical ≤ bound + 3·std_error`.
    pub passed: bool,
}

const MC_BLOCK: usize = 4096;

/// Monte-Carlo check of [`hoeffding_tail_bound`] for `sampler`.
pub fn verify_tail_bound_mc(
    sampler: &BoundedSampler,
    n: usize,
    xi: f64,
    mc_trials: usize,
    rng: &RngStream,
) -> Result<TailCheck> {
    sampler.validate()?;
    if mc_trials == 0 {
        return Err(Error::domain("mc_trials must be >= 1"));
    }
    let (a, b) = sampler.bounds();
    let bound = hoeffding_tail_bound(n, xi, sampler.mean(), a, b)?;
    let root = rng.derive_role(Role::Sampler);
    let threshold = n as f64 * xi;
    let blocks = mc_trials.div_ceil(MC_BLOCK);
    let hits: usize = (0..blocks)
        .into_par_iter()
        .map(|blk| {
            let mut gen = root.derive(blk as u64).rng();
            let count = MC_BLOCK.min(mc_trials - blk * MC_BLOCK);
            (0..count)
                .filter(|_| (0..n).map(|_| sampler.sample(&mut gen)).sum::<f64>() >= threshold)
                .count()
        })
        .sum();
    let empirical = hits as f64 / mc_trials as f64;
    let std_error = (empirical * (1.0 - empirical) / mc_trials as f64).sqrt();
    Ok(TailCheck {
        empirical,
        bound,
        std_error,
        trials: mc_trials,
        passed: empirical <= bound + 3.0 * std_error,
    })
}

/// Inputs of the Bagging error bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundInputs {
    /// Uniform bound `δ_(L,K)` on the order-2s RIP constants of the `A[I_j]`.
    pub delta: f64,
    pub s: usize,
    pub l: usize,
    pub m: usize,
    pub k: usize,
    pub tau: f64,
    pub z_l2: f64,
    pub z_inf: f64,
    /// `‖e‖₁` of the best s-sparse approximation error.
    #[serde(default)]
    pub e_l1: f64,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        check_delta(self.delta)?;
        let fail = |msg: &str| Err(Error::domain(msg));
        if self.s == 0 || self.l == 0 || self.m == 0 || self.k == 0 {
            return fail("s, L, m and K must be >= 1");
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return fail("tau must be > 0");
        }
        if !(self.z_inf >= 0.0 && self.z_l2.is_finite() && self.z_inf <= self.z_l2) {
            return fail("need 0 <= z_inf <= z_l2");
        }
        if !(self.e_l1 >= 0.0 && self.e_l1.is_finite()) {
            return fail("e_l1 must be >= 0");
        }
        Ok(())
    }

    fn noise_radius(&self) -> f64 {
        (self.l as f64 / self.m as f64).sqrt() * self.z_l2 + self.tau
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundReport {
    /// Bound on `‖x^B − x*‖₂`.
    pub radius: f64,
    /// Probability that the radius holds; negative or zero values are vacuous.
    pub prob_lower: f64,
}

fn one_minus_exp(exponent: f64) -> f64 {
    if exponent == f64::NEG_INFINITY {
        1.0
    } else {
        (1.0 - exponent.exp()).min(1.0)
    }
}

/// Error bound for an exactly s-sparse ground truth.
pub fn bagging_bound_exact_sparse(inp: &BoundInputs) -> Result<BoundReport> {
    inp.validate()?;
    if inp.e_l1 != 0.0 {
        return Err(Error::domain("exact-sparse bound needs e_l1 = 0"));
    }
    let radius = c1(inp.delta)? * inp.noise_radius();
    let exponent = if inp.z_inf == 0.0 {
        f64::NEG_INFINITY
    } else {
        let l = inp.l as f64;
        -2.0 * inp.k as f64 * inp.tau.powi(4) / (l * l * inp.z_inf.powi(4))
    };
    Ok(BoundReport {
        radius,
        prob_lower: one_minus_exp(exponent),
    })
}

/// Error bound for a general ground truth with s-sparse approximation error
/// `e`.
pub fn bagging_bound_general(inp: &BoundInputs) -> Result<BoundReport> {
    inp.validate()?;
    let (c0, c1) = (c0(inp.delta)?, c1(inp.delta)?);
    let approx = c0 * inp.e_l1 / (inp.s as f64).sqrt();
    let radius = approx + c1 * inp.noise_radius();
    let b_prime = (approx + c1 * (inp.l as f64).sqrt() * inp.z_inf).powi(2);
    let exponent = if b_prime == 0.0 {
        f64::NEG_INFINITY
    } else {
        -2.0 * inp.k as f64 * c1.powi(4) * inp.tau.powi(4) / (b_prime * b_prime)
    };
    Ok(BoundReport {
        radius,
        prob_lower: one_minus_exp(exponent),
    })
}

/// Setup of the Monte-Carlo check of the exact-sparse Bagging bound.
///
/// Each trial draws `A` with entries `±1/√L`, so every `A[I_j]` with `L` rows
/// has unit-norm columns, an s-sparse standard normal `x*` and noise
/// `z ~ N(0, noise_std²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Theorem3Config {
    pub n: usize,
    pub m: usize,
    pub s: usize,
    pub l: usize,
    pub k: usize,
    pub tau: f64,
    pub trials: usize,
    #[serde(default)]
    pub noise_std: f64,
    /// Penalty of the per-sample Lasso; small values approximate basis
    /// pursuit.
    #[serde(default = "default_bp_lambda")]
    pub lambda: f64,
}

fn default_bp_lambda() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// No trial met the RIP hypothesis.
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Theorem3Report {
    /// Fraction of kept trials with `‖x^B − x*‖₂ ≤ radius`.
    pub empirical_prob: f64,
    /// Mean of the per-trial probability bounds over kept trials.
    pub prob_lower: f64,
    /// Binomial standard error at `prob_lower`.
    pub std_error: f64,
    pub kept: usize,
    /// Trials with `δ_(L,K) ≥ √2 − 1`.
    pub discarded: usize,
    pub verdict: Verdict,
}

struct TrialOutcome {
    prob_lower: f64,
    success: bool,
}

fn theorem3_trial(cfg: &Theorem3Config, solver: &LassoConfig, stream: &RngStream) -> Result<Option<TrialOutcome>> {
    let (n, m, l) = (cfg.n, cfg.m, cfg.l);
    let scale = 1.0 / (l as f64).sqrt();
    let mut gen = stream.derive_role(Role::Matrix).rng();
    let data: Vec<f64> = (0..m * n)
        .map(|_| if gen.random::<bool>() { scale } else { -scale })
        .collect();
    let a = DenseMatrix::new(m, n, data)?;
    let samples = (0..cfg.k)
        .map(|j| draw_bootstrap(m, l, &estimator_stream(&stream.derive_role(Role::Bootstrap), j)))
        .collect::<Result<Vec<_>>>()?;

    let mut delta: f64 = 0.0;
    for sample in &samples {
        let (sub_a, _) = subsample_rows(&a, &vec![0.0; m], sample)?;
        delta = delta.max(rip_constant_bruteforce(&sub_a, 2 * cfg.s)?);
        if delta >= RIP_LIMIT {
            return Ok(None);
        }
    }

    let mut x_star = vec![0.0; n];
    let support = index::sample(&mut stream.derive_role(Role::Support).rng(), n, cfg.s);
    let mut values = stream.derive_role(Role::Values).rng();
    for i in support {
        x_star[i] = StandardNormal.sample(&mut values);
    }
    let mut noise = stream.derive_role(Role::Noise).rng();
    let z: Vec<f64> = (0..m)
        .map(|_| {
            let e: f64 = StandardNormal.sample(&mut noise);
            cfg.noise_std * e
        })
        .collect();
    let mut y = a.mul_vec(&x_star);
    y.iter_mut().zip(&z).for_each(|(yi, zi)| *yi += zi);

    let bag = bagging_from_samples(&a, &y, samples, &LassoConfig { lambda: cfg.lambda, ..*solver })?;
    let report = bagging_bound_exact_sparse(&BoundInputs {
        delta,
        s: cfg.s,
        l,
        m,
        k: cfg.k,
        tau: cfg.tau,
        z_l2: norm2(&z),
        z_inf: norm_inf(&z),
        e_l1: 0.0,
    })?;
    let err = norm2(&sub(&bag.x_bagged, &x_star));
    Ok(Some(TrialOutcome {
        prob_lower: report.prob_lower,
        success: err <= report.radius,
    }))
}

/// Monte-Carlo check of [`bagging_bound_exact_sparse`]. Trials whose bootstrap
/// matrices violate `δ_2s < √2 − 1` are discarded; among the rest, the
/// success rate must reach the mean probability bound minus three binomial
/// standard errors.
pub fn validate_theorem3_mc(cfg: &Theorem3Config, rng: &RngStream) -> Result<Theorem3Report> {
    if cfg.s == 0 || 2 * cfg.s > cfg.n {
        return Err(Error::domain("need 1 <= s and 2s <= n"));
    }
    if cfg.m == 0 || cfg.l == 0 || cfg.k == 0 || cfg.trials == 0 {
        return Err(Error::domain("m, L, K and trials must be >= 1"));
    }
    if !(cfg.tau > 0.0) || !(cfg.noise_std >= 0.0) {
        return Err(Error::domain("need tau > 0 and noise_std >= 0"));
    }
    let solver = LassoConfig {
        abs_tol: 1e-9,
        rel_tol: 1e-9,
        max_iter: 50_000,
        ..LassoConfig::accelerated()
    };
    let outcomes = (0..cfg.trials)
        .into_par_iter()
        .map(|t| theorem3_trial(cfg, &solver, &rng.for_trial(t as u64, Role::Instance)))
        .collect::<Result<Vec<_>>>()?;
    let kept: Vec<TrialOutcome> = outcomes.into_iter().flatten().collect();
    let discarded = cfg.trials - kept.len();
    if kept.is_empty() {
        return Ok(Theorem3Report {
            empirical_prob: f64::NAN,
            prob_lower: f64::NAN,
            std_error: f64::NAN,
            kept: 0,
            discarded,
            verdict: Verdict::Inconclusive,
        });
    }
    let count = kept.len() as f64;
    let empirical_prob = kept.iter().filter(|o| o.success).count() as f64 / count;
    let prob_lower = kept.iter().map(|o| o.prob_lower).sum::<f64>() / count;
    let p = prob_lower.clamp(0.0, 1.0);
    let std_error = (p * (1.0 - p) / count).sqrt();
    let verdict = if empirical_prob >= prob_lower - 3.0 * std_error {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(Theorem3Report {
        empirical_prob,
        prob_lower,
        std_error,
        kept: kept.len(),
        discarded,
        verdict,
    })
}
