//! Least squares over an l1 ball: `min ||y - X b||^2  s.t.  |b|_1 <= k`.
//!
//! The solver is an accelerated projected gradient method with monotone
//! restarts. Each step projects exactly onto the l1 ball, and the step size
//! is `1 / L` where `L` starts at a power-iteration estimate of the largest
//! eigenvalue of `X^T X` and is doubled whenever the quadratic upper bound
//! fails. The iteration always starts from the same point, so a fit is a
//! deterministic function of its inputs.
//!
//! Convergence is certified by the Frank-Wolfe gap
//! `<g, b> + k |g|_inf >= f(b) - f*`, compared against `tol * f(0)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{check_finite, dot, l1_norm, sq_norm, DesignMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Relative stopping threshold.
    pub tol: f64,
    pub max_iter: usize,
    /// Power iterations used for the initial step size.
    pub lipschitz_power_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 50_000,
            lipschitz_power_iters: 100,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::invalid(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be at least 1"));
        }
        Ok(())
    }
}

/// One solution of the constrained problem at budget `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstrainedFit {
    pub k: f64,
    pub beta: Vec<f64>,
    /// `||y - X beta||^2` over the rows the fit was computed on.
    pub residual_ss: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Fits along an ascending grid of budgets, each warm-started from the last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoPath {
    pub grid: Vec<f64>,
    pub fits: Vec<ConstrainedFit>,
}

impl LassoPath {
    pub fn len(&self) -> usize {
        self.fits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fits.is_empty()
    }

    pub fn all_converged(&self) -> bool {
        self.fits.iter().all(|f| f.converged)
    }

    pub fn total_iterations(&self) -> usize {
        self.fits.iter().map(|f| f.iterations).sum()
    }
}

/// Euclidean projection of `v` onto `{b : |b|_1 <= k}`.
pub fn project_l1_ball(v: &[f64], k: f64) -> Result<Vec<f64>> {
    if !(k >= 0.0) || !k.is_finite() {
        return Err(Error::invalid(format!(
            "l1 budget must be a finite value >= 0, got {k}"
        )));
    }
    check_finite("v", v)?;
    let mut out = vec![0.0; v.len()];
    let mut scratch = Vec::with_capacity(v.len());
    project_into(v, k, &mut out, &mut scratch);
    Ok(out)
}

/// Sorted-threshold projection. `scratch` is reused across calls.
fn project_into(v: &[f64], k: f64, out: &mut [f64], scratch: &mut Vec<f64>) {
    if l1_norm(v) <= k {
        out.copy_from_slice(v);
        return;
    }
    if k == 0.0 {
        out.fill(0.0);
        return;
    }
    scratch.clear();
    scratch.extend(v.iter().map(|x| x.abs()));
    // descending; equal magnitudes give the same threshold whatever their order
    scratch.sort_by(|a, b| b.total_cmp(a));

    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &a) in scratch.iter().enumerate() {
        cumsum += a;
        let t = (cumsum - k) / (j + 1) as f64;
        if a - t > 0.0 {
            theta = t;
        } else {
            break;
        }
    }
    for (o, &x) in out.iter_mut().zip(v) {
        let m = x.abs() - theta;
        *o = if m > 0.0 { m.copysign(x) } else { 0.0 };
    }
}

/// `||y - X beta||^2`
pub fn residual_ss(x: &DesignMatrix, y: &[f64], beta: &[f64]) -> f64 {
    x.rows()
        .zip(y)
        .map(|(r, &yi)| {
            let e = yi - dot(r, beta);
            e * e
        })
        .sum()
}

/// Solves at a single budget, starting from `beta = 0`.
pub fn solve_constrained_lasso(
    x: &DesignMatrix,
    y: &[f64],
    k: f64,
    cfg: &SolverConfig,
) -> Result<ConstrainedFit> {
    validate_problem(x, y, cfg)?;
    validate_budget(k)?;
    let quad = Quadratic::new(x, y, cfg);
    let start = vec![0.0; x.ncols()];
    Ok(quad.solve(&start, k, cfg).into_fit(x, y, k))
}

/// Solves along `grid` (strictly increasing, starting at a value >= 0). The fit at
/// `grid[i + 1]` is warm-started from the fit at `grid[i]`.
pub fn fit_path(
    x: &DesignMatrix,
    y: &[f64],
    grid: &[f64],
    cfg: &SolverConfig,
) -> Result<LassoPath> {
    validate_problem(x, y, cfg)?;
    if grid.is_empty() {
        return Err(Error::invalid("budget grid is empty"));
    }
    validate_budget(grid[0])?;
    if let Some(w) = grid.windows(2).find(|w| !(w[1] > w[0])) {
        return Err(Error::invalid(format!(
            "budget grid must be strictly increasing ({} followed by {})",
            w[0], w[1]
        )));
    }
    if !grid[grid.len() - 1].is_finite() {
        return Err(Error::invalid("budget grid contains a non-finite value"));
    }

    let quad = Quadratic::new(x, y, cfg);
    let mut start = vec![0.0; x.ncols()];
    let mut fits = Vec::with_capacity(grid.len());
    for &k in grid {
        let sol = quad.solve(&start, k, cfg);
        start.copy_from_slice(&sol.beta);
        fits.push(sol.into_fit(x, y, k));
    }
    Ok(LassoPath {
        grid: grid.to_vec(),
        fits,
    })
}

fn validate_problem(x: &DesignMatrix, y: &[f64], cfg: &SolverConfig) -> Result<()> {
    cfg.validate()?;
    if y.len() != x.nrows() {
        return Err(Error::invalid(format!(
            "response has length {} but design has {} rows",
            y.len(),
            x.nrows()
        )));
    }
    check_finite("y", y)
}

fn validate_budget(k: f64) -> Result<()> {
    if !(k >= 0.0) || !k.is_finite() {
        return Err(Error::invalid(format!(
            "l1 budget must be a finite value >= 0, got {k}"
        )));
    }
    Ok(())
}

/// `f(b) = 1/2 ||y - X b||^2`, evaluated through `X^T X` when that is cheaper.
struct Quadratic<'a> {
    op: Operator<'a>,
    /// `X^T y`
    xty: Vec<f64>,
    /// `f(0)`
    f0: f64,
    lipschitz: f64,
}

enum Operator<'a> {
    Gram(Vec<f64>),
    Direct(&'a DesignMatrix, &'a [f64]),
}

struct Eval {
    f: f64,
    grad: Vec<f64>,
}

struct Solution {
    beta: Vec<f64>,
    iterations: usize,
    converged: bool,
}

impl Solution {
    fn into_fit(self, x: &DesignMatrix, y: &[f64], k: f64) -> ConstrainedFit {
        ConstrainedFit {
            k,
            residual_ss: residual_ss(x, y, &self.beta),
            beta: self.beta,
            iterations: self.iterations,
            converged: self.converged,
        }
    }
}

impl<'a> Quadratic<'a> {
    fn new(x: &'a DesignMatrix, y: &'a [f64], cfg: &SolverConfig) -> Self {
        let (n, p) = (x.nrows(), x.ncols());
        let op = if p <= n {
            Operator::Gram(x.gram())
        } else {
            Operator::Direct(x, y)
        };
        let xty = x.tr_mul_vec(y);
        let f0 = 0.5 * sq_norm(y);
        let mut quad = Quadratic {
            op,
            xty,
            f0,
            lipschitz: 0.0,
        };
        quad.lipschitz = quad.power_iteration(p, cfg.lipschitz_power_iters);
        quad
    }

    fn p(&self) -> usize {
        self.xty.len()
    }

    /// `X^T X v`
    fn hess_mul(&self, v: &[f64]) -> Vec<f64> {
        match &self.op {
            Operator::Gram(g) => {
                let p = v.len();
                g.chunks_exact(p).map(|row| dot(row, v)).collect()
            }
            Operator::Direct(x, _) => x.tr_mul_vec(&x.mul_vec(v)),
        }
    }

    fn eval(&self, beta: &[f64]) -> Eval {
        match &self.op {
            Operator::Gram(_) => {
                let h = self.hess_mul(beta);
                let f = self.f0 - dot(&self.xty, beta) + 0.5 * dot(beta, &h);
                let grad = h.iter().zip(&self.xty).map(|(a, b)| a - b).collect();
                Eval { f, grad }
            }
            Operator::Direct(x, y) => {
                let mut r = x.mul_vec(beta);
                for (ri, yi) in r.iter_mut().zip(y.iter()) {
                    *ri -= yi;
                }
                Eval {
                    f: 0.5 * sq_norm(&r),
                    grad: x.tr_mul_vec(&r),
                }
            }
        }
    }

    fn power_iteration(&self, p: usize, iters: usize) -> f64 {
        let mut v = vec![1.0 / (p as f64).sqrt(); p];
        let mut lambda = 0.0;
        for _ in 0..iters.max(1) {
            let w = self.hess_mul(&v);
            let norm = sq_norm(&w).sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return norm.max(0.0);
            }
            lambda = norm;
            v = w.into_iter().map(|c| c / norm).collect();
        }
        lambda
    }

    fn fw_gap(k: f64, beta: &[f64], grad: &[f64]) -> f64 {
        let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        dot(grad, beta) + k * gmax
    }

    fn solve(&self, start: &[f64], k: f64, cfg: &SolverConfig) -> Solution {
        let p = self.p();
        let mut scratch = Vec::with_capacity(p);
        let mut x = vec![0.0; p];
        project_into(start, k, &mut x, &mut scratch);

        if k == 0.0 || self.f0 == 0.0 || self.lipschitz == 0.0 {
            // Only the origin is feasible, the origin is optimal, or the
            // objective is constant.
            if self.f0 == 0.0 {
                x.fill(0.0);
            }
            if k == 0.0 {
                x.fill(0.0);
            }
            return Solution {
                beta: x,
                iterations: 0,
                converged: true,
            };
        }

        let target = cfg.tol * self.f0;
        let mut ex = self.eval(&x);
        if Self::fw_gap(k, &x, &ex.grad) <= target {
            return Solution {
                beta: x,
                iterations: 0,
                converged: true,
            };
        }

        let mut lip = self.lipschitz;
        let mut z = x.clone();
        let mut ez = Eval {
            f: ex.f,
            grad: ex.grad.clone(),
        };
        let mut t = 1.0f64;
        let mut restarted = true;
        let mut u = vec![0.0; p];
        let mut step_point = vec![0.0; p];

        for iter in 1..=cfg.max_iter {
            let slack = 1e-13 * (self.f0 + ez.f.abs());
            let eu = loop {
                for ((s, zi), gi) in step_point.iter_mut().zip(&z).zip(&ez.grad) {
                    *s = zi - gi / lip;
                }
                project_into(&step_point, k, &mut u, &mut scratch);
                let eu = self.eval(&u);
                let mut lin = 0.0;
                let mut quad = 0.0;
                for ((ui, zi), gi) in u.iter().zip(&z).zip(&ez.grad) {
                    let d = ui - zi;
                    lin += gi * d;
                    quad += d * d;
                }
                if eu.f <= ez.f + lin + 0.5 * lip * quad + slack || !lip.is_finite() {
                    break eu;
                }
                lip *= 2.0;
            };

            if eu.f > ex.f {
                if restarted {
                    // A plain projected gradient step from the incumbent no
                    // longer decreases the objective: numerically stationary.
                    return Solution {
                        beta: x,
                        iterations: iter,
                        converged: true,
                    };
                }
                t = 1.0;
                z.copy_from_slice(&x);
                ez = Eval {
                    f: ex.f,
                    grad: ex.grad.clone(),
                };
                restarted = true;
                continue;
            }
            restarted = false;

            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let momentum = (t - 1.0) / t_next;
            z.copy_from_slice(&u);
            if momentum != 0.0 {
                for ((zi, ui), xi) in z.iter_mut().zip(&u).zip(&x) {
                    *zi += momentum * (ui - xi);
                }
            }
            x.copy_from_slice(&u);
            ex = eu;
            t = t_next;

            if Self::fw_gap(k, &x, &ex.grad) <= target {
                return Solution {
                    beta: x,
                    iterations: iter,
                    converged: true,
                };
            }
            ez = if momentum == 0.0 {
                Eval {
                    f: ex.f,
                    grad: ex.grad.clone(),
                }
            } else {
                self.eval(&z)
            };
        }
        Solution {
            beta: x,
            iterations: cfg.max_iter,
            converged: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn projection_inside_ball_is_identity() {
        let v = [0.3, -0.2];
        assert_eq!(project_l1_ball(&v, 1.0).unwrap(), v.to_vec());
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_l1_ball(&[3.0, 0.0], 1.0).unwrap(), vec![1.0, 0.0]);
        assert_eq!(project_l1_ball(&[2.0, 1.0], 1.0).unwrap(), vec![1.0, 0.0]);
        assert_eq!(project_l1_ball(&[-2.0, 2.0], 1.0).unwrap(), vec![-0.5, 0.5]);
        assert_eq!(project_l1_ball(&[5.0, -1.0], 0.0).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn projection_rejects_bad_input() {
        assert!(matches!(
            project_l1_ball(&[1.0], -0.1),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            project_l1_ball(&[f64::NAN], 1.0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            project_l1_ball(&[1.0], f64::NAN),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn zero_budget_gives_zero_fit() {
        let x =
            DesignMatrix::from_rows(&[vec![1.0, 2.0], vec![0.5, -1.0], vec![3.0, 0.0]]).unwrap();
        let y = [1.0, -2.0, 0.5];
        let fit = solve_constrained_lasso(&x, &y, 0.0, &SolverConfig::default()).unwrap();
        assert_eq!(fit.beta, vec![0.0, 0.0]);
        assert_eq!(fit.residual_ss, 1.0 + 4.0 + 0.25);
        assert!(fit.converged);
    }

    #[test]
    fn identity_design_reduces_to_projection() {
        let x = DesignMatrix::identity(2).unwrap();
        let fit = solve_constrained_lasso(&x, &[3.0, 1.0], 1.0, &SolverConfig::default()).unwrap();
        assert!(close(&fit.beta, &[1.0, 0.0], 1e-12), "{:?}", fit.beta);
    }

    #[test]
    fn inactive_constraint_gives_least_squares() {
        let x = DesignMatrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        let fit = solve_constrained_lasso(&x, &[1.0, 3.0], 5.0, &SolverConfig::default()).unwrap();
        assert!((fit.beta[0] - 2.0).abs() < 1e-9);
        assert!((fit.residual_ss - 2.0).abs() < 1e-9);
    }

    #[test]
    fn wide_design_uses_direct_operator() {
        // p > n: 2 rows, 3 columns; minimum-norm-free problem with a known
        // feasible interpolant of l1 norm 1, so the optimum has zero residual.
        let x = DesignMatrix::from_rows(&[vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 1.0]]).unwrap();
        let y = [0.5, 0.5];
        let fit = solve_constrained_lasso(&x, &y, 1.0, &SolverConfig::default()).unwrap();
        assert!(fit.residual_ss < 1e-9, "{fit:?}");
        assert!(l1_norm(&fit.beta) <= 1.0 + 1e-9);
    }

    #[test]
    fn empty_sample_gives_zero() {
        let x = DesignMatrix::zeros(0, 3).unwrap();
        let fit = solve_constrained_lasso(&x, &[], 2.0, &SolverConfig::default()).unwrap();
        assert_eq!(fit.beta, vec![0.0; 3]);
        assert_eq!(fit.residual_ss, 0.0);
        let path = fit_path(&x, &[], &[0.0, 1.0, 2.0], &SolverConfig::default()).unwrap();
        assert!(path.fits.iter().all(|f| f.beta == vec![0.0; 3]));
    }

    #[test]
    fn dimension_and_config_errors() {
        let x = DesignMatrix::identity(2).unwrap();
        let cfg = SolverConfig::default();
        assert!(solve_constrained_lasso(&x, &[1.0], 1.0, &cfg).is_err());
        assert!(solve_constrained_lasso(&x, &[1.0, 1.0], -1.0, &cfg).is_err());
        let bad = SolverConfig { tol: 0.0, ..cfg };
        assert!(solve_constrained_lasso(&x, &[1.0, 1.0], 1.0, &bad).is_err());
        let bad = SolverConfig { max_iter: 0, ..cfg };
        assert!(solve_constrained_lasso(&x, &[1.0, 1.0], 1.0, &bad).is_err());
    }

    #[test]
    fn path_examples() {
        let cfg = SolverConfig::default();
        let x = DesignMatrix::identity(2).unwrap();
        let y = [3.0, 1.0];
        let single = fit_path(&x, &y, &[0.0], &cfg).unwrap();
        assert_eq!(single.fits.len(), 1);
        assert_eq!(single.fits[0].beta, vec![0.0, 0.0]);

        let path = fit_path(&x, &y, &[0.0, 1.0, 4.0], &cfg).unwrap();
        let expect = [[0.0, 0.0], [1.0, 0.0], [3.0, 1.0]];
        for (f, e) in path.fits.iter().zip(expect) {
            assert!(close(&f.beta, &e, 1e-9), "{:?} vs {e:?}", f.beta);
        }
    }

    #[test]
    fn path_grid_errors() {
        let cfg = SolverConfig::default();
        let x = DesignMatrix::identity(2).unwrap();
        let y = [3.0, 1.0];
        assert!(fit_path(&x, &y, &[], &cfg).is_err());
        assert!(fit_path(&x, &y, &[0.0, 1.0, 1.0], &cfg).is_err());
        assert!(fit_path(&x, &y, &[1.0, 0.5], &cfg).is_err());
        assert!(fit_path(&x, &y, &[-1.0, 0.5], &cfg).is_err());
    }

    #[test]
    fn non_convergence_is_reported_not_raised() {
        let x = DesignMatrix::from_rows(&[
            vec![1.0, 0.99, 0.3],
            vec![0.98, 1.0, -0.2],
            vec![0.1, 0.2, 1.0],
            vec![1.0, 1.0, 1.0],
        ])
        .unwrap();
        let y = [1.0, 2.0, -1.0, 0.3];
        let cfg = SolverConfig {
            max_iter: 1,
            tol: 1e-15,
            ..SolverConfig::default()
        };
        let fit = solve_constrained_lasso(&x, &y, 3.0, &cfg).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.iterations, 1);
    }
}
