//! Bootstrap sampling and the recovery schemes built on it: generalized
//! Bagging, Bolasso and the plain ℓ1 baseline.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lasso::{solve_lasso, AdmmSolver, LassoConfig, LassoSolution};
use crate::linalg::{dist_sq, Cholesky, DenseMatrix};
use crate::rng::RngStream;

/// Multiset of `L` row indices in `[0, m)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BootstrapIndexSet {
    indices: Vec<usize>,
    population: usize,
}

impl BootstrapIndexSet {
    pub fn new(indices: Vec<usize>, population: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::domain("bootstrap sample must be non-empty"));
        }
        if let Some(&i) = indices.iter().find(|&&i| i >= population) {
            return Err(Error::domain(format!(
                "bootstrap index {i} out of range for {population} rows"
            )));
        }
        Ok(Self { indices, population })
    }

    /// The sample `(0, 1, …, m − 1)`: every row exactly once.
    pub fn full(m: usize) -> Self {
        Self {
            indices: (0..m).collect(),
            population: m,
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn population(&self) -> usize {
        self.population
    }

    /// Distinct indices with their multiplicities, sorted by index.
    pub fn counts(&self) -> Vec<(usize, usize)> {
        let mut sorted = self.indices.clone();
        sorted.sort_unstable();
        let mut out: Vec<(usize, usize)> = Vec::new();
        for i in sorted {
            match out.last_mut() {
                Some((j, c)) if *j == i => *c += 1,
                _ => out.push((i, 1)),
            }
        }
        out
    }

    pub fn distinct_count(&self) -> usize {
        self.counts().len()
    }
}

/// `L` i.i.d. uniform draws from `{0, …, m − 1}`.
pub fn draw_bootstrap(m: usize, l: usize, stream: &RngStream) -> Result<BootstrapIndexSet> {
    if m == 0 || l == 0 {
        return Err(Error::domain(format!(
            "bootstrap needs m >= 1 and L >= 1, got m = {m}, L = {l}"
        )));
    }
    let mut rng = stream.rng();
    let indices = (0..l).map(|_| rng.random_range(0..m)).collect();
    Ok(BootstrapIndexSet {
        indices,
        population: m,
    })
}

/// Bootstrap size for a ratio `L/m`: `round(ratio · m)`, at least 1.
pub fn bootstrap_size(ratio: f64, m: usize) -> Result<usize> {
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(Error::domain(format!("bootstrap ratio must be > 0, got {ratio}")));
    }
    Ok(((ratio * m as f64).round() as usize).max(1))
}

fn check_system(a: &DenseMatrix, y: &[f64]) -> Result<()> {
    if y.len() != a.rows() {
        return Err(Error::DimensionMismatch {
            context: "measurements vs matrix rows",
            expected: a.rows(),
            found: y.len(),
        });
    }
    Ok(())
}

fn check_sample(a: &DenseMatrix, sample: &BootstrapIndexSet) -> Result<()> {
    if let Some(&i) = sample.indices.iter().find(|&&i| i >= a.rows()) {
        return Err(Error::domain(format!(
            "bootstrap index {i} out of range for {} rows",
            a.rows()
        )));
    }
    Ok(())
}

/// `(A[I], y[I])` with repeated indices physically repeated.
pub fn subsample_rows(
    a: &DenseMatrix,
    y: &[f64],
    sample: &BootstrapIndexSet,
) -> Result<(DenseMatrix, Vec<f64>)> {
    check_system(a, y)?;
    check_sample(a, sample)?;
    let sub = a.select_rows(&sample.indices)?;
    let ys = sample.indices.iter().map(|&i| y[i]).collect();
    Ok((sub, ys))
}

/// Distinct rows of `(A[I], y[I])`, each scaled by the square root of its
/// multiplicity.
///
/// `‖y[I] − A[I]x‖²` equals `‖ỹ − Ãx‖²` for the returned pair, so the Lasso on
/// the compressed system has exactly the same objective as on the physically
/// repeated one while the solver works with fewer rows.
pub fn compress_sample(
    a: &DenseMatrix,
    y: &[f64],
    sample: &BootstrapIndexSet,
) -> Result<(DenseMatrix, Vec<f64>)> {
    check_system(a, y)?;
    check_sample(a, sample)?;
    let counts = sample.counts();
    let n = a.cols();
    let mut data = Vec::with_capacity(counts.len() * n);
    let mut ys = Vec::with_capacity(counts.len());
    for &(i, c) in &counts {
        if c == 1 {
            data.extend_from_slice(a.row(i));
            ys.push(y[i]);
        } else {
            let w = (c as f64).sqrt();
            data.extend(a.row(i).iter().map(|v| w * v));
            ys.push(w * y[i]);
        }
    }
    Ok((DenseMatrix::new(counts.len(), n, data)?, ys))
}

/// Lasso path on one bootstrap sample, one solution per entry of `lambdas`.
pub fn solve_sample_path(
    a: &DenseMatrix,
    y: &[f64],
    sample: &BootstrapIndexSet,
    lambdas: &[f64],
    solver: &LassoConfig,
) -> Result<Vec<LassoSolution>> {
    let (sub, ys) = compress_sample(a, y, sample)?;
    AdmmSolver::new(&sub, solver.rho)?.solve_path(&ys, lambdas, solver)
}

fn solve_sample(
    a: &DenseMatrix,
    y: &[f64],
    sample: &BootstrapIndexSet,
    cfg: &LassoConfig,
) -> Result<LassoSolution> {
    let (sub, ys) = compress_sample(a, y, sample)?;
    AdmmSolver::new(&sub, cfg.rho)?.solve(&ys, cfg)
}

/// Coordinate-wise mean whose value depends only on the multiset of inputs.
///
/// Each coordinate is summed in ascending order of value, so permuting the
/// vectors leaves the result bit-for-bit unchanged.
pub fn order_invariant_mean<V: AsRef<[f64]>>(vectors: &[V]) -> Vec<f64> {
    let k = vectors.len();
    if k == 0 {
        return Vec::new();
    }
    let n = vectors[0].as_ref().len();
    let mut column = Vec::with_capacity(k);
    (0..n)
        .map(|i| {
            column.clear();
            column.extend(vectors.iter().map(|v| v.as_ref()[i]));
            column.sort_unstable_by(f64::total_cmp);
            column.iter().sum::<f64>() / k as f64
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    /// Number of estimates `K`.
    pub k: usize,
    /// Bootstrap sample size `L`.
    pub l: usize,
    pub lambda: f64,
    pub solver: LassoConfig,
    pub rng: RngStream,
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::domain("K must be >= 1"));
        }
        if self.l == 0 {
            return Err(Error::domain("L must be >= 1"));
        }
        LassoConfig {
            lambda: self.lambda,
            ..self.solver
        }
        .validate()
    }

    fn lasso(&self) -> LassoConfig {
        LassoConfig {
            lambda: self.lambda,
            ..self.solver
        }
    }
}

/// Stream used for the `j`-th bootstrap sample of an ensemble.
pub fn estimator_stream(root: &RngStream, j: usize) -> RngStream {
    root.derive(j as u64)
}

/// The `K` bootstrap samples of an ensemble, sample `j` drawn from its own
/// child stream.
pub fn draw_ensemble_samples(m: usize, cfg: &EnsembleConfig) -> Result<Vec<BootstrapIndexSet>> {
    cfg.validate()?;
    (0..cfg.k)
        .map(|j| draw_bootstrap(m, cfg.l, &estimator_stream(&cfg.rng, j)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaggingResult {
    pub x_bagged: Vec<f64>,
    pub estimator_solutions: Vec<LassoSolution>,
    pub samples: Vec<BootstrapIndexSet>,
    /// Number of estimators whose solver hit `max_iter`.
    pub non_converged: usize,
}

impl BaggingResult {
    /// Both sides of `‖x̄ − x*‖² ≤ (1/K) Σ_j ‖x_j − x*‖²`.
    pub fn jensen_sides(&self, x_star: &[f64]) -> (f64, f64) {
        let lhs = dist_sq(&self.x_bagged, x_star);
        let rhs = self
            .estimator_solutions
            .iter()
            .map(|s| dist_sq(&s.x, x_star))
            .sum::<f64>()
            / self.estimator_solutions.len() as f64;
        (lhs, rhs)
    }
}

/// Whether `lhs ≤ rhs` up to the rounding of the two sums.
pub fn jensen_holds(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs * (1.0 + 1e-12) + f64::MIN_POSITIVE
}

/// Bagging: `K` Lasso fits on bootstrap samples of size `L`, averaged.
///
/// Estimators that fail to converge are still averaged; their count is
/// reported in [`BaggingResult::non_converged`].
pub fn bagging_recover(a: &DenseMatrix, y: &[f64], cfg: &EnsembleConfig) -> Result<BaggingResult> {
    check_system(a, y)?;
    let samples = draw_ensemble_samples(a.rows(), cfg)?;
    bagging_from_samples(a, y, samples, &cfg.lasso())
}

/// Bagging over caller-supplied bootstrap samples.
pub fn bagging_from_samples(
    a: &DenseMatrix,
    y: &[f64],
    samples: Vec<BootstrapIndexSet>,
    cfg: &LassoConfig,
) -> Result<BaggingResult> {
    check_system(a, y)?;
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::domain("K must be >= 1"));
    }
    let estimator_solutions = samples
        .par_iter()
        .map(|s| solve_sample(a, y, s, cfg))
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<&[f64]> = estimator_solutions.iter().map(|s| s.x.as_slice()).collect();
    let x_bagged = order_invariant_mean(&xs);
    let non_converged = estimator_solutions.iter().filter(|s| !s.converged).count();
    Ok(BaggingResult {
        x_bagged,
        estimator_solutions,
        samples,
        non_converged,
    })
}

/// Plain ℓ1 minimization on all measurements.
pub fn l1_baseline(
    a: &DenseMatrix,
    y: &[f64],
    lambda: f64,
    solver: &LassoConfig,
) -> Result<LassoSolution> {
    solve_lasso(a, y, &LassoConfig { lambda, ..*solver })
}

pub const DEFAULT_SUPPORT_EPS: f64 = 1e-6;

/// Indices where every estimate exceeds `eps` in magnitude.
pub fn support_intersection<V: AsRef<[f64]>>(estimates: &[V], eps: f64) -> Vec<usize> {
    let Some(first) = estimates.first() else {
        return Vec::new();
    };
    (0..first.as_ref().len())
        .filter(|&i| estimates.iter().all(|x| x.as_ref()[i].abs() > eps))
        .collect()
}

/// Unregularized least squares on the columns in `support`, zero elsewhere.
///
/// Returns the coefficients and whether the restricted Gram matrix was
/// rank-deficient, in which case a tiny ridge was added.
pub fn refit_on_support(a: &DenseMatrix, y: &[f64], support: &[usize]) -> Result<(Vec<f64>, bool)> {
    check_system(a, y)?;
    let mut x = vec![0.0; a.cols()];
    if support.is_empty() {
        return Ok((x, false));
    }
    let sub = a.select_columns(support)?;
    let mut gram = sub.gram();
    let rhs = sub.tr_mul_vec(y);
    let k = support.len();
    let max_diag = (0..k).map(|i| gram.get(i, i)).fold(0.0, f64::max);

    let well_posed = if k <= a.rows() {
        Cholesky::factor(&gram)
            .ok()
            .filter(|ch| ch.min_pivot().powi(2) > 1e-12 * max_diag)
    } else {
        None
    };
    let (ch, ridged) = match well_posed {
        Some(ch) => (ch, false),
        None => {
            let mean_diag = (0..k).map(|i| gram.get(i, i)).sum::<f64>() / k as f64;
            let ridge = RIDGE * mean_diag.max(1.0);
            let data = gram.data_mut();
            for i in 0..k {
                data[i * k + i] += ridge;
            }
            (Cholesky::factor(&gram)?, true)
        }
    };
    let mut coef = rhs;
    ch.solve_in_place(&mut coef);
    for (&j, c) in support.iter().zip(coef) {
        x[j] = c;
    }
    Ok((x, ridged))
}

const RIDGE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct BolassoResult {
    pub x: Vec<f64>,
    pub support: Vec<usize>,
    /// The refit needed a ridge because the support columns were dependent.
    pub ridge_used: bool,
    pub non_converged: usize,
}

/// Bolasso: bootstrap Lasso fits as in Bagging, support intersection at
/// threshold `support_eps`, then a least-squares refit on all rows.
pub fn bolasso_recover(
    a: &DenseMatrix,
    y: &[f64],
    cfg: &EnsembleConfig,
    support_eps: f64,
) -> Result<BolassoResult> {
    let bag = bagging_recover(a, y, cfg)?;
    bolasso_from_bagging(a, y, &bag, support_eps)
}

/// Bolasso refit from already computed bootstrap estimates.
pub fn bolasso_from_bagging(
    a: &DenseMatrix,
    y: &[f64],
    bag: &BaggingResult,
    support_eps: f64,
) -> Result<BolassoResult> {
    if !(support_eps > 0.0) {
        return Err(Error::domain("support threshold must be > 0"));
    }
    let xs: Vec<&[f64]> = bag.estimator_solutions.iter().map(|s| s.x.as_slice()).collect();
    let support = support_intersection(&xs, support_eps);
    let (x, ridge_used) = refit_on_support(a, y, &support)?;
    Ok(BolassoResult {
        x,
        support,
        ridge_used,
        non_converged: bag.non_converged,
    })
}
