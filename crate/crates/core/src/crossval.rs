//! Two-fold cross-validation of the l1 budget with recombined holdout
//! predictions.
//!
//! The pipeline:
//! 1. split the sample indices into `I` and `I^c` with independent fair coin flips;
//! 2. fit each half along its own budget grid (an empty half gets zero fits);
//! 3. size each grid from the *other* half's data only;
//! 4. choose `K1` by the holdout error of the `I^c` fits on `I`, and `K2` by
//!    the holdout error of the `I` fits on `I^c`;
//! 5. stitch the two sets of out-of-half predictions into `mu'` and pick the
//!    full-data budget `K` whose fitted values are closest to `mu'`;
//! 6. report the full-data fit at that budget and `||Y - X b||^2 / n`.

use nalgebra::{DMatrix, DVector};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, l1_norm, sq_dist, DesignMatrix};
use crate::solver::{fit_path, residual_ss, ConstrainedFit, LassoPath, SolverConfig};

/// Identifier recorded with every split: ChaCha20 (rand_chacha) keyed by
/// `seed_from_u64(seed)`; index `i` joins `I` when the top bit of the `i`-th
/// `next_u64` draw is set.
pub const SPLIT_GENERATOR: &str = "chacha20-seed_from_u64-msb";

pub const DEFAULT_DELTA: f64 = 0.05;

/// Grid length multiplier for the ridge sizing rule: `N = ceil(scale * |b_ridge|_1 / delta)`.
pub const DEFAULT_RIDGE_SCALE: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    /// `true` means the index belongs to `I`.
    pub membership: Vec<bool>,
    pub seed: u64,
    pub generator: String,
}

impl SplitAssignment {
    pub fn len(&self) -> usize {
        self.membership.len()
    }

    pub fn is_empty(&self) -> bool {
        self.membership.is_empty()
    }

    /// Indices in `I`, ascending.
    pub fn first_half(&self) -> Vec<usize> {
        self.indices(true)
    }

    /// Indices in `I^c`, ascending.
    pub fn second_half(&self) -> Vec<usize> {
        self.indices(false)
    }

    fn indices(&self, side: bool) -> Vec<usize> {
        self.membership
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| (m == side).then_some(i))
            .collect()
    }
}

pub fn random_split(n: usize, seed: u64) -> SplitAssignment {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let membership = (0..n).map(|_| rng.next_u64() >> 63 == 1).collect();
    SplitAssignment {
        membership,
        seed,
        generator: SPLIT_GENERATOR.to_string(),
    }
}

/// Budget grids `{0, delta, ..., n1 * delta}` and `{0, delta, ..., n2 * delta}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub delta: f64,
    pub n1: usize,
    pub n2: usize,
}

impl GridSpec {
    pub fn new(delta: f64, n1: usize, n2: usize) -> Result<Self> {
        validate_delta(delta)?;
        Ok(Self { delta, n1, n2 })
    }

    pub fn grid1(&self) -> Vec<f64> {
        budget_grid(self.delta, self.n1)
    }

    pub fn grid2(&self) -> Vec<f64> {
        budget_grid(self.delta, self.n2)
    }

    /// The grid searched for the final budget: up to `max(n1, n2) * delta`.
    pub fn grid_full(&self) -> Vec<f64> {
        budget_grid(self.delta, self.n1.max(self.n2))
    }
}

pub fn budget_grid(delta: f64, count: usize) -> Vec<f64> {
    (0..=count).map(|i| i as f64 * delta).collect()
}

fn validate_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::invalid(format!(
            "delta must be positive and finite, got {delta}"
        )));
    }
    Ok(())
}

/// Ridge-based grid sizing with the default multiplier.
///
/// `n1` depends only on the rows in `I^c`, `n2` only on the rows in `I`.
pub fn default_grid(
    x: &DesignMatrix,
    y: &[f64],
    split: &SplitAssignment,
    delta: f64,
) -> Result<GridSpec> {
    ridge_grid(x, y, split, delta, DEFAULT_RIDGE_SCALE)
}

pub fn ridge_grid(
    x: &DesignMatrix,
    y: &[f64],
    split: &SplitAssignment,
    delta: f64,
    scale: f64,
) -> Result<GridSpec> {
    validate_delta(delta)?;
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::invalid(format!(
            "grid scale must be positive, got {scale}"
        )));
    }
    check_split(x, y, split)?;
    let count = |rows: &[usize]| -> Result<usize> {
        let l1 = ridge_l1(&x.select_rows(rows), &select(y, rows))?;
        Ok(budget_count(scale * l1, delta))
    };
    let n1 = count(&split.second_half())?;
    let n2 = count(&split.first_half())?;
    Ok(GridSpec { delta, n1, n2 })
}

/// Smallest `N` with `N * delta >= radius`. Quotients within 1e-9 relative of
/// an integer snap to it, so that e.g. `3.0 / 0.1` gives 30.
pub fn budget_count(radius: f64, delta: f64) -> usize {
    if radius <= 0.0 {
        return 0;
    }
    let q = radius / delta;
    let r = q.round();
    let n = if (q - r).abs() <= 1e-9 * q {
        r
    } else {
        q.ceil()
    };
    n as usize
}

/// `|b|_1` of the unit-penalty ridge fit `(X^T X + I)^{-1} X^T y`; zero for no rows.
pub fn ridge_l1(x: &DesignMatrix, y: &[f64]) -> Result<f64> {
    if x.nrows() == 0 {
        return Ok(0.0);
    }
    let p = x.ncols();
    let mut gram = DMatrix::from_row_slice(p, p, &x.gram());
    for i in 0..p {
        gram[(i, i)] += 1.0;
    }
    let rhs = DVector::from_vec(x.tr_mul_vec(y));
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Numerical("ridge system is not positive definite".into()))?;
    let beta = chol.solve(&rhs);
    Ok(beta.iter().map(|b| b.abs()).sum())
}

/// Outcome of a grid search: the winning index and every criterion value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub index: usize,
    pub k: f64,
    pub criteria: Vec<f64>,
}

/// First index attaining the minimum (ties go to the smallest budget).
fn argmin_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// Picks the grid budget whose fit has the smallest holdout sum of squared errors.
pub fn select_k(
    path: &LassoPath,
    holdout_x: &DesignMatrix,
    holdout_y: &[f64],
) -> Result<Selection> {
    if path.is_empty() {
        return Err(Error::invalid("cannot select from an empty path"));
    }
    if holdout_x.nrows() != holdout_y.len() {
        return Err(Error::invalid(
            "holdout rows and responses differ in length",
        ));
    }
    let criteria: Vec<f64> = path
        .fits
        .iter()
        .map(|f| residual_ss(holdout_x, holdout_y, &f.beta))
        .collect();
    let index = argmin_first(&criteria);
    Ok(Selection {
        index,
        k: path.grid[index],
        criteria,
    })
}

/// `mu'_i = x_i b(K1, I^c fit)` for `i` in `I`, and `x_i b(K2, I fit)` for `i` in `I^c`.
pub fn combine_mu(
    split: &SplitAssignment,
    fit_from_second_half: &ConstrainedFit,
    fit_from_first_half: &ConstrainedFit,
    x: &DesignMatrix,
) -> Result<Vec<f64>> {
    if split.len() != x.nrows() {
        return Err(Error::invalid("split length does not match design rows"));
    }
    let p = x.ncols();
    if fit_from_second_half.beta.len() != p || fit_from_first_half.beta.len() != p {
        return Err(Error::invalid(
            "fit dimension does not match design columns",
        ));
    }
    Ok(x.rows()
        .zip(&split.membership)
        .map(|(row, &in_first)| {
            if in_first {
                dot(row, &fit_from_second_half.beta)
            } else {
                dot(row, &fit_from_first_half.beta)
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalSelection {
    pub selection: Selection,
    pub beta_cv: Vec<f64>,
    pub path: LassoPath,
}

/// Full-data fits along `grid_full`; returns the budget minimizing `||mu' - X b(K)||`.
pub fn select_khat(
    x: &DesignMatrix,
    y: &[f64],
    mu_prime: &[f64],
    grid_full: &[f64],
    cfg: &SolverConfig,
) -> Result<FinalSelection> {
    if mu_prime.len() != x.nrows() {
        return Err(Error::invalid("mu' length does not match design rows"));
    }
    let path = fit_path(x, y, grid_full, cfg)?;
    let criteria: Vec<f64> = path
        .fits
        .iter()
        .map(|f| sq_dist(mu_prime, &x.mul_vec(&f.beta)).sqrt())
        .collect();
    let index = argmin_first(&criteria);
    Ok(FinalSelection {
        selection: Selection {
            index,
            k: path.grid[index],
            criteria,
        },
        beta_cv: path.fits[index].beta.clone(),
        path,
    })
}

/// `||Y - X b||^2 / n`
pub fn estimate_sigma2(y: &[f64], x: &DesignMatrix, beta_cv: &[f64]) -> Result<f64> {
    if x.nrows() == 0 {
        return Err(Error::invalid(
            "error variance is undefined for an empty sample",
        ));
    }
    if y.len() != x.nrows() || beta_cv.len() != x.ncols() {
        return Err(Error::invalid(
            "dimension mismatch in error variance estimate",
        ));
    }
    Ok(residual_ss(x, y, beta_cv) / x.nrows() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub delta: f64,
    pub seed: u64,
    /// Replaces the ridge rule for `N1` when set.
    pub n1: Option<usize>,
    /// Replaces the ridge rule for `N2` when set.
    pub n2: Option<usize>,
    pub ridge_scale: f64,
    pub solver: SolverConfig,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            delta: DEFAULT_DELTA,
            seed: 0,
            n1: None,
            n2: None,
            ridge_scale: DEFAULT_RIDGE_SCALE,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvDiagnostics {
    pub size_first_half: usize,
    pub size_second_half: usize,
    pub solver_iterations: usize,
    pub nonconverged_fits: usize,
}

impl CvDiagnostics {
    pub fn all_converged(&self) -> bool {
        self.nonconverged_fits == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvEstimate {
    pub k_hat_1: f64,
    pub k_hat_2: f64,
    pub mu_prime: Vec<f64>,
    pub k_hat: f64,
    pub beta_cv: Vec<f64>,
    /// `None` only for an empty sample.
    pub sigma2_hat: Option<f64>,
    pub grid: GridSpec,
    pub seed: u64,
    pub generator: String,
    pub solver: SolverConfig,
    pub diagnostics: CvDiagnostics,
}

/// Everything computed along the way, for inspection and testing.
#[derive(Debug, Clone, PartialEq)]
pub struct CvTrace {
    pub split: SplitAssignment,
    /// Fits on `I` over grid 2.
    pub first_half_path: LassoPath,
    /// Fits on `I^c` over grid 1.
    pub second_half_path: LassoPath,
    pub select_1: Selection,
    pub select_2: Selection,
    pub final_selection: FinalSelection,
}

pub fn cv_lasso(x: &DesignMatrix, y: &[f64], opts: &CvOptions) -> Result<CvEstimate> {
    cv_lasso_traced(x, y, opts).map(|(est, _)| est)
}

pub fn cv_lasso_traced(
    x: &DesignMatrix,
    y: &[f64],
    opts: &CvOptions,
) -> Result<(CvEstimate, CvTrace)> {
    validate_delta(opts.delta)?;
    opts.solver.validate()?;
    if y.len() != x.nrows() {
        return Err(Error::invalid(format!(
            "response has length {} but design has {} rows",
            y.len(),
            x.nrows()
        )));
    }

    let split = random_split(x.nrows(), opts.seed);
    let grid = match (opts.n1, opts.n2) {
        (Some(n1), Some(n2)) => GridSpec::new(opts.delta, n1, n2)?,
        _ => {
            let ridge = ridge_grid(x, y, &split, opts.delta, opts.ridge_scale)?;
            GridSpec {
                delta: opts.delta,
                n1: opts.n1.unwrap_or(ridge.n1),
                n2: opts.n2.unwrap_or(ridge.n2),
            }
        }
    };

    let first = split.first_half();
    let second = split.second_half();
    let (x1, y1) = (x.select_rows(&first), select(y, &first));
    let (x2, y2) = (x.select_rows(&second), select(y, &second));

    let second_half_path = fit_path(&x2, &y2, &grid.grid1(), &opts.solver)?;
    let first_half_path = fit_path(&x1, &y1, &grid.grid2(), &opts.solver)?;

    let select_1 = select_k(&second_half_path, &x1, &y1)?;
    let select_2 = select_k(&first_half_path, &x2, &y2)?;

    let mu_prime = combine_mu(
        &split,
        &second_half_path.fits[select_1.index],
        &first_half_path.fits[select_2.index],
        x,
    )?;
    let final_selection = select_khat(x, y, &mu_prime, &grid.grid_full(), &opts.solver)?;

    let sigma2_hat = if x.nrows() == 0 {
        None
    } else {
        Some(estimate_sigma2(y, x, &final_selection.beta_cv)?)
    };

    let paths = [&first_half_path, &second_half_path, &final_selection.path];
    let diagnostics = CvDiagnostics {
        size_first_half: first.len(),
        size_second_half: second.len(),
        solver_iterations: paths.iter().map(|p| p.total_iterations()).sum(),
        nonconverged_fits: paths
            .iter()
            .map(|p| p.fits.iter().filter(|f| !f.converged).count())
            .sum(),
    };

    debug_assert!(
        l1_norm(&final_selection.beta_cv) <= final_selection.selection.k * (1.0 + 1e-9) + 1e-300
    );

    let estimate = CvEstimate {
        k_hat_1: select_1.k,
        k_hat_2: select_2.k,
        mu_prime,
        k_hat: final_selection.selection.k,
        beta_cv: final_selection.beta_cv.clone(),
        sigma2_hat,
        grid,
        seed: opts.seed,
        generator: split.generator.clone(),
        solver: opts.solver,
        diagnostics,
    };
    let trace = CvTrace {
        split,
        first_half_path,
        second_half_path,
        select_1,
        select_2,
        final_selection,
    };
    Ok((estimate, trace))
}

fn select(v: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| v[i]).collect()
}

fn check_split(x: &DesignMatrix, y: &[f64], split: &SplitAssignment) -> Result<()> {
    if split.len() != x.nrows() || y.len() != x.nrows() {
        return Err(Error::invalid(
            "split, design and response lengths disagree",
        ));
    }
    Ok(())
}
