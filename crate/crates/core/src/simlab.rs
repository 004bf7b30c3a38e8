//! Monte Carlo harness: synthetic problems, repeated runs of the
//! cross-validated estimator, and comparison with the closed-form bounds.
//!
//! Replicate `i` draws everything (design, noise, split seed) from its own
//! ChaCha20 stream `i` under the master seed, so results do not depend on
//! which thread ran which replicate or in what order.

use std::path::PathBuf;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{bound_report, compute_m, BoundInputs, BoundReport};
use crate::crossval::{cv_lasso, CvOptions, DEFAULT_DELTA, DEFAULT_RIDGE_SCALE};
use crate::error::{Error, Result};
use crate::matrix::{check_finite, l1_norm, DesignMatrix};
use crate::solver::SolverConfig;

/// Identifier of the per-replicate stream construction.
pub const REPLICATE_GENERATOR: &str = "chacha20-seed_from_u64-stream=replicate";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignFamily {
    GaussianIid,
    Rademacher,
    FixedFromFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub n: usize,
    pub p: usize,
    pub design_family: DesignFamily,
    /// CSV design, required for `fixed-from-file`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design_path: Option<PathBuf>,
    pub beta_star: Vec<f64>,
    pub sigma: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub replications: usize,
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n1: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n2: Option<usize>,
    #[serde(default = "default_grid_scale")]
    pub grid_scale: f64,
    #[serde(default)]
    pub solver: SolverConfig,
}

fn default_delta() -> f64 {
    DEFAULT_DELTA
}

fn default_grid_scale() -> f64 {
    DEFAULT_RIDGE_SCALE
}

impl Scenario {
    /// `n = 200`, `p = 50`, five coefficients of 0.4 (`|beta*|_1 = 2`), unit
    /// noise, `delta = 0.05`, 200 Gaussian-design replicates.
    pub fn baseline() -> Self {
        let mut beta_star = vec![0.0; 50];
        beta_star[..5].fill(0.4);
        Scenario {
            n: 200,
            p: 50,
            design_family: DesignFamily::GaussianIid,
            design_path: None,
            beta_star,
            sigma: 1.0,
            delta: DEFAULT_DELTA,
            replications: 200,
            master_seed: 20_150_101,
            n1: None,
            n2: None,
            grid_scale: DEFAULT_RIDGE_SCALE,
            solver: SolverConfig::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(Error::invalid("scenario needs n >= 1 and p >= 1"));
        }
        if self.replications == 0 {
            return Err(Error::invalid("scenario needs at least one replication"));
        }
        if self.beta_star.len() != self.p {
            return Err(Error::invalid(format!(
                "beta_star has {} entries but p = {}",
                self.beta_star.len(),
                self.p
            )));
        }
        check_finite("beta_star", &self.beta_star)?;
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::invalid("sigma must be finite and >= 0"));
        }
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(Error::invalid("delta must be positive"));
        }
        if !(self.grid_scale > 0.0) || !self.grid_scale.is_finite() {
            return Err(Error::invalid("grid_scale must be positive"));
        }
        if self.design_family == DesignFamily::FixedFromFile && self.design_path.is_none() {
            return Err(Error::invalid("fixed-from-file design needs design_path"));
        }
        self.solver.validate()
    }

    pub fn l_star(&self) -> f64 {
        l1_norm(&self.beta_star)
    }

    fn cv_options(&self, seed: u64) -> CvOptions {
        CvOptions {
            delta: self.delta,
            seed,
            n1: self.n1,
            n2: self.n2,
            ridge_scale: self.grid_scale,
            solver: self.solver,
        }
    }
}

/// One synthetic data set.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub x: DesignMatrix,
    pub y: Vec<f64>,
    pub beta_star: Vec<f64>,
    /// Seed handed to the split.
    pub split_seed: u64,
}

/// `||X b* - X b||^2 / n`
pub fn mspe_sample(x: &DesignMatrix, beta_star: &[f64], beta_hat: &[f64]) -> Result<f64> {
    if x.nrows() == 0 {
        return Err(Error::invalid("prediction error needs at least one row"));
    }
    if beta_star.len() != x.ncols() || beta_hat.len() != x.ncols() {
        return Err(Error::invalid(
            "coefficient length does not match design columns",
        ));
    }
    let diff: Vec<f64> = beta_star.iter().zip(beta_hat).map(|(a, b)| a - b).collect();
    let fitted = x.mul_vec(&diff);
    Ok(fitted.iter().map(|v| v * v).sum::<f64>() / x.nrows() as f64)
}

/// Builds the problem for one replicate; loads the design file if the family needs one.
pub fn generate_problem(scenario: &Scenario, replicate_index: usize) -> Result<Problem> {
    Simulation::new(scenario.clone())?.problem(replicate_index)
}

fn load_fixed_design(scenario: &Scenario) -> Result<DesignMatrix> {
    let path = scenario
        .design_path
        .as_ref()
        .ok_or_else(|| Error::invalid("fixed-from-file design needs design_path"))?;
    let x = crate::cli::load_csv_matrix(path)?;
    if x.nrows() != scenario.n || x.ncols() != scenario.p {
        return Err(Error::invalid(format!(
            "design file {} is {}x{}, scenario expects {}x{}",
            path.display(),
            x.nrows(),
            x.ncols(),
            scenario.n,
            scenario.p
        )));
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub index: usize,
    /// `N1 delta >= |b*|_1` and `N2 delta >= |b*|_1`
    pub event: bool,
    pub mspe: f64,
    pub sigma2_hat: f64,
    pub n1: usize,
    pub n2: usize,
    pub k_hat_1: f64,
    pub k_hat_2: f64,
    pub k_hat: f64,
    pub m_stat: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    /// Standard error of the mean; zero with a single replicate.
    pub se: f64,
}

impl MeanSe {
    /// Sample mean and its standard error, accumulated in slice order.
    pub fn of(values: &[f64]) -> Self {
        let r = values.len() as f64;
        let mean = values.iter().sum::<f64>() / r;
        let se = if values.len() > 1 {
            let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
            (ss / (r - 1.0)).sqrt() / r.sqrt()
        } else {
            0.0
        };
        MeanSe { mean, se }
    }

    pub fn upper(&self, k: f64) -> f64 {
        self.mean + k * self.se
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub replications: usize,
    pub event_count: usize,
    pub event_frequency: f64,
    /// `E(MSPE; event)`: event-weighted contributions over all replicates.
    pub mspe_on_event: MeanSe,
    /// `E(|sigma2_hat - sigma^2|; event)`
    pub abs_sigma_err_on_event: MeanSe,
    pub mspe: MeanSe,
    pub abs_sigma_err: MeanSe,
    pub sigma2_hat: MeanSe,
    /// Estimate of `E log(N1 + 1)`.
    pub l1: MeanSe,
    /// Estimate of `E log(N2 + 1)`.
    pub l2: MeanSe,
    pub m_max: f64,
    pub m_mean: f64,
    pub nonconverged_replicates: usize,
}

/// Folds replicate records (in the given order) into summary statistics.
pub fn aggregate(records: &[ReplicateRecord], sigma: f64) -> Aggregates {
    let col = |f: &dyn Fn(&ReplicateRecord) -> f64| records.iter().map(f).collect::<Vec<f64>>();
    let ind = |r: &ReplicateRecord| if r.event { 1.0 } else { 0.0 };
    let s2 = sigma * sigma;
    let event_count = records.iter().filter(|r| r.event).count();
    let m_values = col(&|r| r.m_stat);
    Aggregates {
        replications: records.len(),
        event_count,
        event_frequency: event_count as f64 / records.len() as f64,
        mspe_on_event: MeanSe::of(&col(&|r| r.mspe * ind(r))),
        abs_sigma_err_on_event: MeanSe::of(&col(&|r| (r.sigma2_hat - s2).abs() * ind(r))),
        mspe: MeanSe::of(&col(&|r| r.mspe)),
        abs_sigma_err: MeanSe::of(&col(&|r| (r.sigma2_hat - s2).abs())),
        sigma2_hat: MeanSe::of(&col(&|r| r.sigma2_hat)),
        l1: MeanSe::of(&col(&|r| ((r.n1 + 1) as f64).ln())),
        l2: MeanSe::of(&col(&|r| ((r.n2 + 1) as f64).ln())),
        m_max: m_values.iter().copied().fold(0.0, f64::max),
        m_mean: m_values.iter().sum::<f64>() / m_values.len() as f64,
        nonconverged_replicates: records.iter().filter(|r| !r.converged).count(),
    }
}

/// Whether each empirical mean plus two standard errors stays under its bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Domination {
    pub mspe: bool,
    pub sigma: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub scenario: Scenario,
    pub generator: String,
    pub records: Vec<ReplicateRecord>,
    pub aggregates: Aggregates,
    /// Absent when the bounds are undefined (`sigma = 0`).
    pub bound_inputs: Option<BoundInputs>,
    pub bound_report: Option<BoundReport>,
    pub domination: Option<Domination>,
    pub warnings: Vec<String>,
}

/// A validated scenario with its fixed design (if any) loaded.
#[derive(Debug, Clone)]
pub struct Simulation {
    scenario: Scenario,
    fixed: Option<DesignMatrix>,
}

impl Simulation {
    pub fn new(scenario: Scenario) -> Result<Self> {
        scenario.validate()?;
        let fixed = match scenario.design_family {
            DesignFamily::FixedFromFile => Some(load_fixed_design(&scenario)?),
            _ => None,
        };
        Ok(Self { scenario, fixed })
    }

    /// Uses an in-memory design for the `fixed-from-file` family.
    pub fn with_design(scenario: Scenario, x: DesignMatrix) -> Result<Self> {
        let scenario = Scenario {
            design_family: DesignFamily::FixedFromFile,
            design_path: scenario
                .design_path
                .or_else(|| Some(PathBuf::from("<memory>"))),
            ..scenario
        };
        scenario.validate()?;
        if x.nrows() != scenario.n || x.ncols() != scenario.p {
            return Err(Error::invalid(
                "in-memory design does not match scenario dimensions",
            ));
        }
        Ok(Self {
            scenario,
            fixed: Some(x),
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    fn stream(&self, index: usize) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.scenario.master_seed);
        rng.set_stream(index as u64);
        rng
    }

    pub fn problem(&self, index: usize) -> Result<Problem> {
        let s = &self.scenario;
        let mut rng = self.stream(index);
        let x = match (&self.fixed, s.design_family) {
            (Some(x), _) => x.clone(),
            (None, DesignFamily::GaussianIid) => {
                let data = (0..s.n * s.p)
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect();
                DesignMatrix::from_row_major(s.n, s.p, data)?
            }
            (None, DesignFamily::Rademacher) => {
                let data = (0..s.n * s.p)
                    .map(|_| if rng.next_u64() >> 63 == 1 { 1.0 } else { -1.0 })
                    .collect();
                DesignMatrix::from_row_major(s.n, s.p, data)?
            }
            (None, DesignFamily::FixedFromFile) => load_fixed_design(s)?,
        };
        let signal = x.mul_vec(&s.beta_star);
        let y = signal
            .into_iter()
            .map(|mu| {
                let z: f64 = rng.sample(StandardNormal);
                mu + s.sigma * z
            })
            .collect();
        let split_seed = rng.next_u64();
        Ok(Problem {
            x,
            y,
            beta_star: s.beta_star.clone(),
            split_seed,
        })
    }

    pub fn replicate(&self, index: usize) -> Result<ReplicateRecord> {
        let s = &self.scenario;
        let prob = self.problem(index)?;
        let est = cv_lasso(&prob.x, &prob.y, &s.cv_options(prob.split_seed))?;
        let l_star = s.l_star();
        let event =
            est.grid.n1 as f64 * s.delta >= l_star && est.grid.n2 as f64 * s.delta >= l_star;
        Ok(ReplicateRecord {
            index,
            event,
            mspe: mspe_sample(&prob.x, &prob.beta_star, &est.beta_cv)?,
            sigma2_hat: est.sigma2_hat.unwrap_or(0.0),
            n1: est.grid.n1,
            n2: est.grid.n2,
            k_hat_1: est.k_hat_1,
            k_hat_2: est.k_hat_2,
            k_hat: est.k_hat,
            m_stat: compute_m(&prob.x)?,
            converged: est.diagnostics.all_converged(),
        })
    }

    /// Runs every replicate (in parallel on the current rayon pool) and reports.
    pub fn run(&self) -> Result<SimulationReport> {
        let records = (0..self.scenario.replications)
            .into_par_iter()
            .map(|i| self.replicate(i))
            .collect::<Result<Vec<_>>>()?;
        self.report(records)
    }

    /// Builds the report from records; they are sorted by index first.
    pub fn report(&self, mut records: Vec<ReplicateRecord>) -> Result<SimulationReport> {
        let s = &self.scenario;
        records.sort_by_key(|r| r.index);
        let aggregates = aggregate(&records, s.sigma);
        let mut warnings = Vec::new();
        if aggregates.event_count == 0 {
            warnings.push(
                "the event N1*delta >= |beta*|_1, N2*delta >= |beta*|_1 never occurred".to_string(),
            );
        }
        if aggregates.nonconverged_replicates > 0 {
            warnings.push(format!(
                "{} replicate(s) contain non-converged solves",
                aggregates.nonconverged_replicates
            ));
        }

        let (bound_inputs, bound_report, domination) = if s.sigma > 0.0 {
            let inputs = BoundInputs {
                n: s.n,
                p: s.p,
                sigma: s.sigma,
                l_star: s.l_star(),
                delta: s.delta,
                m_stat: aggregates.m_max,
                l1: aggregates.l1.mean,
                l2: aggregates.l2.mean,
            };
            let rep = bound_report(&inputs)?;
            let dom = Domination {
                mspe: aggregates.mspe_on_event.upper(2.0) <= rep.r,
                sigma: aggregates.abs_sigma_err_on_event.upper(2.0) <= rep.sigma_bound,
            };
            (Some(inputs), Some(rep), Some(dom))
        } else {
            warnings.push("bounds are undefined for sigma = 0".to_string());
            (None, None, None)
        };

        Ok(SimulationReport {
            scenario: s.clone(),
            generator: REPLICATE_GENERATOR.to_string(),
            records,
            aggregates,
            bound_inputs,
            bound_report,
            domination,
            warnings,
        })
    }
}

pub fn run_monte_carlo(scenario: &Scenario) -> Result<SimulationReport> {
    Simulation::new(scenario.clone())?.run()
}

/// Reruns `base` at each sample size. The grid multiplier grows like
/// `sqrt(n / n_values[0])`, so `N * delta` diverges while `log N` stays `O(log n)`.
pub fn consistency_sweep(base: &Scenario, n_values: &[usize]) -> Result<Vec<SimulationReport>> {
    if base.design_family == DesignFamily::FixedFromFile {
        return Err(Error::invalid(
            "a sample-size sweep needs a random design family",
        ));
    }
    let Some(&n0) = n_values.first() else {
        return Ok(Vec::new());
    };
    if n0 == 0 {
        return Err(Error::invalid("sample sizes must be positive"));
    }
    n_values
        .iter()
        .map(|&n| {
            let scenario = Scenario {
                n,
                grid_scale: base.grid_scale * (n as f64 / n0 as f64).sqrt(),
                ..base.clone()
            };
            run_monte_carlo(&scenario)
        })
        .collect()
}
