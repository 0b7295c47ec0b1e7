//! Simulation sweep comparing plain ℓ1 minimization, Bagging and Bolasso.
//!
//! Every trial draws one [`ProblemInstance`] per measurement count `m`; all
//! schemes and all `(L/m, K, λ)` cells of that trial see the same instance.
//! Bootstrap samples are drawn from streams keyed by `(m, trial, ratio, j)`,
//! so the `K = 30` ensemble is the first 30 estimators of the `K = 100` one and
//! a cell can be reproduced in isolation with [`cell_stream`] and
//! [`crate::ensemble::bagging_recover`].
//!
//! λ is chosen per `(scheme, m, L/m, K)` as the grid value with the largest
//! mean recovered SNR (oracle selection, ties to the smallest λ).

use rand::seq::index::sample as sample_indices;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{
    bootstrap_size, draw_bootstrap, estimator_stream, jensen_holds, order_invariant_mean,
    refit_on_support, solve_sample_path, support_intersection, BootstrapIndexSet,
    DEFAULT_SUPPORT_EPS,
};
use crate::error::{Error, Result};
use crate::lasso::{AdmmSolver, LassoConfig, LassoSolution};
use crate::linalg::{dist_sq, gaussian_matrix, norm_sq, DenseMatrix};
use crate::rng::{Role, RngStream};

/// Value reported for an exact recovery, which has infinite SNR.
pub const SNR_SENTINEL_DB: f64 = 300.0;

/// A cell whose solver failed to converge more often than this is flagged.
pub const NON_CONVERGENCE_FLAG_RATE: f64 = 0.10;

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub a: DenseMatrix,
    pub y: Vec<f64>,
    pub x_star: Vec<f64>,
    pub z: Vec<f64>,
    pub s: usize,
    pub snr_db: f64,
}

/// Gaussian sensing matrix, `s`-sparse Gaussian signal on a uniformly random
/// support, and white Gaussian noise at the requested SNR.
///
/// The per-entry noise variance is `10^(−snr/10) · ‖A x*‖² / m`, so that the
/// expected noise energy is `10^(−snr/10)` times the signal energy. An
/// infinite SNR gives a noiseless instance.
pub fn generate_instance(
    n: usize,
    m: usize,
    s: usize,
    snr_db: f64,
    stream: &RngStream,
) -> Result<ProblemInstance> {
    if n == 0 || m == 0 {
        return Err(Error::domain("n and m must be >= 1"));
    }
    if s > n {
        return Err(Error::domain(format!("sparsity {s} exceeds dimension {n}")));
    }
    if snr_db.is_nan() {
        return Err(Error::domain("snr_db must not be NaN"));
    }
    let a = gaussian_matrix(m, n, &stream.derive_role(Role::Matrix));

    let mut x_star = vec![0.0; n];
    let mut rng = stream.derive_role(Role::Support).rng();
    let support = sample_indices(&mut rng, n, s);
    let mut vals = stream.derive_role(Role::Values).rng();
    for i in support.iter() {
        // A standard normal draw is zero with probability 0, but the sparsity
        // level is part of the contract.
        let mut v: f64 = StandardNormal.sample(&mut vals);
        while v == 0.0 {
            v = StandardNormal.sample(&mut vals);
        }
        x_star[i] = v;
    }

    let ax = a.mul_vec(&x_star);
    let sigma = if snr_db == f64::INFINITY {
        0.0
    } else {
        (10f64.powf(-snr_db / 10.0) * norm_sq(&ax) / m as f64).sqrt()
    };
    let mut noise = stream.derive_role(Role::Noise).rng();
    let z: Vec<f64> = (0..m)
        .map(|_| {
            let e: f64 = StandardNormal.sample(&mut noise);
            sigma * e
        })
        .collect();
    let y = ax.iter().zip(&z).map(|(u, v)| u + v).collect();
    Ok(ProblemInstance {
        a,
        y,
        x_star,
        z,
        s,
        snr_db,
    })
}

/// `10 log10(‖x*‖² / ‖x − x*‖²)` in dB; [`SNR_SENTINEL_DB`] when the error is
/// exactly zero.
pub fn recovered_snr(x: &[f64], x_star: &[f64]) -> Result<f64> {
    if x.len() != x_star.len() {
        return Err(Error::DimensionMismatch {
            context: "recovered vs true signal",
            expected: x_star.len(),
            found: x.len(),
        });
    }
    let signal = norm_sq(x_star);
    if signal == 0.0 {
        return Err(Error::domain("true signal is zero; SNR undefined"));
    }
    let err = dist_sq(x, x_star);
    if err == 0.0 {
        return Ok(SNR_SENTINEL_DB);
    }
    Ok((10.0 * (signal / err).log10()).min(SNR_SENTINEL_DB))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    L1,
    Bagging,
    Bolasso,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::L1 => "l1",
            Scheme::Bagging => "bagging",
            Scheme::Bolasso => "bolasso",
        }
    }
}

/// How bootstrap samples are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// `L` draws with replacement.
    #[default]
    Bootstrap,
    /// Every estimator sees rows `0..m` exactly once (degenerate, for tests).
    FullIdentity,
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..points)
                .map(|i| {
                    if i == 0 {
                        lo
                    } else if i == points - 1 {
                        hi
                    } else {
                        (a + (b - a) * i as f64 / (points - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}

fn default_lambda_grid() -> Vec<f64> {
    log_grid(0.01, 200.0, 25)
}

fn default_ratios() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

fn default_schemes() -> Vec<Scheme> {
    vec![Scheme::L1, Scheme::Bagging, Scheme::Bolasso]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub n: usize,
    pub s: usize,
    pub snr_db: f64,
    pub m_values: Vec<usize>,
    #[serde(default = "default_ratios")]
    pub ratio_values: Vec<f64>,
    pub k_values: Vec<usize>,
    #[serde(default = "default_lambda_grid")]
    pub lambda_grid: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub seed: u64,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<Scheme>,
    #[serde(default = "LassoConfig::accelerated")]
    pub solver: LassoConfig,
    #[serde(default = "default_support_eps")]
    pub support_eps: f64,
    #[serde(default)]
    pub sampling: SamplingMode,
}

fn default_trials() -> usize {
    20
}

fn default_support_eps() -> f64 {
    DEFAULT_SUPPORT_EPS
}

impl ExperimentSpec {
    /// The simulation setting of the study at one measurement count: `n = 200`,
    /// `s = 50`, 0 dB, `K ∈ {30, 50, 100}`, `L/m ∈ {0.1, …, 1}`, 25 λ values
    /// from 0.01 to 200, 20 trials.
    pub fn protocol(m_values: Vec<usize>, seed: u64) -> Self {
        Self {
            n: 200,
            s: 50,
            snr_db: 0.0,
            m_values,
            ratio_values: default_ratios(),
            k_values: vec![30, 50, 100],
            lambda_grid: default_lambda_grid(),
            trials: default_trials(),
            seed,
            schemes: default_schemes(),
            solver: LassoConfig::accelerated(),
            support_eps: DEFAULT_SUPPORT_EPS,
            sampling: SamplingMode::Bootstrap,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Domain(msg));
        if self.n == 0 {
            return fail("n must be >= 1".into());
        }
        if self.s > self.n || self.s == 0 {
            return fail(format!("s must be in 1..={}, got {}", self.n, self.s));
        }
        if self.snr_db.is_nan() {
            return fail("snr_db must be a number".into());
        }
        if self.m_values.is_empty() || self.m_values.contains(&0) {
            return fail("m_values must be non-empty and positive".into());
        }
        if self.trials == 0 {
            return fail("trials must be >= 1".into());
        }
        if self.schemes.is_empty() {
            return fail("schemes must be non-empty".into());
        }
        if self.lambda_grid.is_empty() || self.lambda_grid.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return fail("lambda_grid must be non-empty with positive entries".into());
        }
        let ensembles = self.schemes.iter().any(|s| *s != Scheme::L1);
        if ensembles {
            if self.ratio_values.is_empty()
                || self.ratio_values.iter().any(|r| !(*r > 0.0 && *r <= 1.0))
            {
                return fail("ratio_values must be non-empty and within (0, 1]".into());
            }
            if self.k_values.is_empty() || self.k_values.contains(&0) {
                return fail("k_values must be non-empty and positive".into());
            }
        }
        if !(self.support_eps > 0.0) {
            return fail("support_eps must be > 0".into());
        }
        self.solver.validate()
    }

    fn has(&self, scheme: Scheme) -> bool {
        self.schemes.contains(&scheme)
    }
}

/// Stream for the instance of trial `trial` at measurement count `m`.
pub fn instance_stream(seed: u64, m: usize, trial: usize) -> RngStream {
    RngStream::from_seed(seed)
        .derive(m as u64)
        .for_trial(trial as u64, Role::Instance)
}

/// Root stream of the bootstrap samples for one `(m, trial, ratio)` cell.
/// Estimator `j` uses [`estimator_stream`] of this.
pub fn cell_stream(seed: u64, m: usize, trial: usize, ratio: f64) -> RngStream {
    RngStream::from_seed(seed)
        .derive(m as u64)
        .derive(trial as u64)
        .derive(ratio.to_bits())
        .derive_role(Role::Bootstrap)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub scheme: Scheme,
    pub m: usize,
    /// `L/m`; 1 for the ℓ1 baseline.
    pub ratio: f64,
    pub l: usize,
    /// Ensemble size; 1 for the ℓ1 baseline.
    pub k: usize,
    pub lambda: f64,
    pub mean_snr_db: f64,
    pub std_snr_db: f64,
    pub trials: usize,
    /// Fraction of Lasso solves in this cell that hit `max_iter`.
    pub non_converged_rate: f64,
    /// Number of trials whose SNR was the exact-recovery sentinel.
    pub sentinel_hits: usize,
}

impl SweepRecord {
    pub fn flagged(&self) -> bool {
        self.non_converged_rate > NON_CONVERGENCE_FLAG_RATE || self.sentinel_hits > 0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct JensenTally {
    pub checks: usize,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    /// One record per `(scheme, m, ratio, K, λ)`.
    pub records: Vec<SweepRecord>,
    /// Best-λ record per `(scheme, m, ratio, K)`.
    pub best_lambda: Vec<SweepRecord>,
    pub jensen: JensenTally,
}

/// Per-trial SNR values for every λ of one cell, plus convergence counts.
#[derive(Debug, Clone, Default)]
struct CellTrial {
    snr: Vec<f64>,
    non_converged: Vec<usize>,
    solves: usize,
}

struct RatioTrial {
    ratio_index: usize,
    l: usize,
    /// Indexed by `k_values` position.
    bagging: Vec<CellTrial>,
    bolasso: Vec<CellTrial>,
    jensen: JensenTally,
}

struct Unit {
    m_index: usize,
    trial: usize,
    l1: Option<CellTrial>,
    ratios: Vec<RatioTrial>,
}

fn l1_trial(inst: &ProblemInstance, spec: &ExperimentSpec) -> Result<CellTrial> {
    let solver = AdmmSolver::new(&inst.a, spec.solver.rho)?;
    let path = solver.solve_path(&inst.y, &spec.lambda_grid, &spec.solver)?;
    let mut out = CellTrial {
        solves: 1,
        ..CellTrial::default()
    };
    for sol in &path {
        out.snr.push(recovered_snr(&sol.x, &inst.x_star)?);
        out.non_converged.push(usize::from(!sol.converged));
    }
    Ok(out)
}

fn ratio_trial(
    inst: &ProblemInstance,
    spec: &ExperimentSpec,
    m: usize,
    trial: usize,
    ratio_index: usize,
) -> Result<RatioTrial> {
    let ratio = spec.ratio_values[ratio_index];
    let k_max = spec.k_values.iter().copied().max().unwrap_or(0);
    let (l, samples): (usize, Vec<BootstrapIndexSet>) = match spec.sampling {
        SamplingMode::Bootstrap => {
            let l = bootstrap_size(ratio, m)?;
            let root = cell_stream(spec.seed, m, trial, ratio);
            let samples = (0..k_max)
                .map(|j| draw_bootstrap(m, l, &estimator_stream(&root, j)))
                .collect::<Result<_>>()?;
            (l, samples)
        }
        SamplingMode::FullIdentity => (m, vec![BootstrapIndexSet::full(m); k_max]),
    };

    // paths[j][λ]
    let paths: Vec<Vec<LassoSolution>> = samples
        .iter()
        .map(|s| solve_sample_path(&inst.a, &inst.y, s, &spec.lambda_grid, &spec.solver))
        .collect::<Result<_>>()?;

    let n_lambda = spec.lambda_grid.len();
    let mut out = RatioTrial {
        ratio_index,
        l,
        bagging: Vec::new(),
        bolasso: Vec::new(),
        jensen: JensenTally::default(),
    };
    for &k in &spec.k_values {
        let mut bag = CellTrial {
            solves: k,
            ..CellTrial::default()
        };
        let mut bol = bag.clone();
        for li in 0..n_lambda {
            let xs: Vec<&[f64]> = paths[..k].iter().map(|p| p[li].x.as_slice()).collect();
            let nc = paths[..k].iter().filter(|p| !p[li].converged).count();
            if spec.has(Scheme::Bagging) {
                let mean = order_invariant_mean(&xs);
                let lhs = dist_sq(&mean, &inst.x_star);
                let rhs = xs.iter().map(|x| dist_sq(x, &inst.x_star)).sum::<f64>() / k as f64;
                out.jensen.checks += 1;
                if !jensen_holds(lhs, rhs) {
                    out.jensen.violations += 1;
                }
                bag.snr.push(recovered_snr(&mean, &inst.x_star)?);
                bag.non_converged.push(nc);
            }
            if spec.has(Scheme::Bolasso) {
                let support = support_intersection(&xs, spec.support_eps);
                let (x, _) = refit_on_support(&inst.a, &inst.y, &support)?;
                bol.snr.push(recovered_snr(&x, &inst.x_star)?);
                bol.non_converged.push(nc);
            }
        }
        out.bagging.push(bag);
        out.bolasso.push(bol);
    }
    Ok(out)
}

fn run_unit(spec: &ExperimentSpec, m_index: usize, trial: usize) -> Result<Unit> {
    let m = spec.m_values[m_index];
    let inst = generate_instance(spec.n, m, spec.s, spec.snr_db, &instance_stream(spec.seed, m, trial))?;
    let l1 = if spec.has(Scheme::L1) {
        Some(l1_trial(&inst, spec)?)
    } else {
        None
    };
    let ratios = if spec.has(Scheme::Bagging) || spec.has(Scheme::Bolasso) {
        (0..spec.ratio_values.len())
            .into_par_iter()
            .map(|r| ratio_trial(&inst, spec, m, trial, r))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    Ok(Unit {
        m_index,
        trial,
        l1,
        ratios,
    })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// Aggregates per-trial cells (all for the same cell, in trial order) into
/// one record per λ.
fn aggregate(
    spec: &ExperimentSpec,
    scheme: Scheme,
    m: usize,
    ratio: f64,
    l: usize,
    k: usize,
    cells: &[&CellTrial],
) -> Vec<SweepRecord> {
    spec.lambda_grid
        .iter()
        .enumerate()
        .map(|(li, &lambda)| {
            let snrs: Vec<f64> = cells.iter().map(|c| c.snr[li]).collect();
            let (mean, std) = mean_std(&snrs);
            let nc: usize = cells.iter().map(|c| c.non_converged[li]).sum();
            let solves: usize = cells.iter().map(|c| c.solves).sum();
            SweepRecord {
                scheme,
                m,
                ratio,
                l,
                k,
                lambda,
                mean_snr_db: mean,
                std_snr_db: std,
                trials: cells.len(),
                non_converged_rate: nc as f64 / solves as f64,
                sentinel_hits: snrs.iter().filter(|&&v| v >= SNR_SENTINEL_DB).count(),
            }
        })
        .collect()
}

/// Runs the full sweep. Deterministic given `spec`, independent of the
/// number of worker threads.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<SweepOutput> {
    spec.validate()?;
    let work: Vec<(usize, usize)> = (0..spec.m_values.len())
        .flat_map(|mi| (0..spec.trials).map(move |t| (mi, t)))
        .collect();
    let mut units = work
        .par_iter()
        .map(|&(mi, t)| run_unit(spec, mi, t))
        .collect::<Result<Vec<_>>>()?;
    units.sort_by_key(|u| (u.m_index, u.trial));

    let mut records = Vec::new();
    let mut jensen = JensenTally::default();
    for (mi, &m) in spec.m_values.iter().enumerate() {
        let group: Vec<&Unit> = units.iter().filter(|u| u.m_index == mi).collect();
        if spec.has(Scheme::L1) {
            let cells: Vec<&CellTrial> = group.iter().filter_map(|u| u.l1.as_ref()).collect();
            records.extend(aggregate(spec, Scheme::L1, m, 1.0, m, 1, &cells));
        }
        for (ri, &ratio) in spec.ratio_values.iter().enumerate() {
            if !(spec.has(Scheme::Bagging) || spec.has(Scheme::Bolasso)) {
                break;
            }
            let per_trial: Vec<&RatioTrial> = group
                .iter()
                .map(|u| u.ratios.iter().find(|r| r.ratio_index == ri).expect("ratio computed"))
                .collect();
            let l = per_trial[0].l;
            for rt in &per_trial {
                jensen.checks += rt.jensen.checks;
                jensen.violations += rt.jensen.violations;
            }
            for (ki, &k) in spec.k_values.iter().enumerate() {
                for scheme in [Scheme::Bagging, Scheme::Bolasso] {
                    if !spec.has(scheme) {
                        continue;
                    }
                    let cells: Vec<&CellTrial> = per_trial
                        .iter()
                        .map(|rt| match scheme {
                            Scheme::Bagging => &rt.bagging[ki],
                            _ => &rt.bolasso[ki],
                        })
                        .collect();
                    records.extend(aggregate(spec, scheme, m, ratio, l, k, &cells));
                }
            }
        }
    }
    records.sort_by(|a, b| {
        (a.scheme, a.m, a.k)
            .cmp(&(b.scheme, b.m, b.k))
            .then(a.ratio.total_cmp(&b.ratio))
            .then(a.lambda.total_cmp(&b.lambda))
    });
    let best_lambda = select_best_lambda(&records);
    Ok(SweepOutput {
        records,
        best_lambda,
        jensen,
    })
}

/// Keeps, per `(scheme, m, ratio, K)`, the record with the largest mean SNR;
/// ties go to the smallest λ.
pub fn select_best_lambda(records: &[SweepRecord]) -> Vec<SweepRecord> {
    let mut best: Vec<SweepRecord> = Vec::new();
    for r in records {
        let slot = best.iter_mut().find(|b| {
            b.scheme == r.scheme && b.m == r.m && b.k == r.k && b.ratio.to_bits() == r.ratio.to_bits()
        });
        match slot {
            None => best.push(r.clone()),
            Some(b) => {
                if r.mean_snr_db > b.mean_snr_db
                    || (r.mean_snr_db == b.mean_snr_db && r.lambda < b.lambda)
                {
                    *b = r.clone();
                }
            }
        }
    }
    best
}

/// Row labels of the summary table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryLabel {
    L1,
    /// Bagging restricted to `L/m = 1`.
    ConventionalBagging,
    Bagging,
    Bolasso,
}

impl SummaryLabel {
    pub fn name(self) -> &'static str {
        match self {
            SummaryLabel::L1 => "l1",
            SummaryLabel::ConventionalBagging => "conventional_bagging",
            SummaryLabel::Bagging => "bagging",
            SummaryLabel::Bolasso => "bolasso",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestSummary {
    pub label: SummaryLabel,
    pub m: usize,
    pub best: SweepRecord,
}

/// Best record per `(label, m)` over all ratios, `K` and λ.
///
/// Conventional Bagging only considers records with ratio exactly 1. Groups
/// without records are omitted. Ties keep the first record in input order.
pub fn best_over(records: &[SweepRecord]) -> Vec<BestSummary> {
    let mut out: Vec<BestSummary> = Vec::new();
    let mut offer = |label: SummaryLabel, r: &SweepRecord| {
        match out.iter_mut().find(|b| b.label == label && b.m == r.m) {
            None => out.push(BestSummary {
                label,
                m: r.m,
                best: r.clone(),
            }),
            Some(b) => {
                if r.mean_snr_db > b.best.mean_snr_db {
                    b.best = r.clone();
                }
            }
        }
    };
    for r in records {
        match r.scheme {
            Scheme::L1 => offer(SummaryLabel::L1, r),
            Scheme::Bolasso => offer(SummaryLabel::Bolasso, r),
            Scheme::Bagging => {
                offer(SummaryLabel::Bagging, r);
                if r.ratio == 1.0 {
                    offer(SummaryLabel::ConventionalBagging, r);
                }
            }
        }
    }
    out.sort_by_key(|b| (b.m, b.label));
    out
}

/// Best summary for one label and `m`, if present.
pub fn summary_for(summaries: &[BestSummary], label: SummaryLabel, m: usize) -> Option<&BestSummary> {
    summaries.iter().find(|b| b.label == label && b.m == m)
}
