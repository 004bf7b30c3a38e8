//! Closed-form risk bounds for the cross-validated estimator and the
//! elementary concentration facts they rest on.
//!
//! All logarithms are natural.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DesignMatrix;

/// Inputs to the prediction-error bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub n: usize,
    pub p: usize,
    /// Noise standard deviation.
    pub sigma: f64,
    /// `|beta*|_1`
    pub l_star: f64,
    pub delta: f64,
    /// `max_j (1/n) sum_i x_ij^4`
    pub m_stat: f64,
    /// `E log(N1 + 1)`
    pub l1: f64,
    /// `E log(N2 + 1)`
    pub l2: f64,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(Error::invalid("bound inputs need n >= 1 and p >= 1"));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::invalid("sigma must be positive and finite"));
        }
        let named = [
            ("l_star", self.l_star),
            ("delta", self.delta),
            ("m_stat", self.m_stat),
            ("l1", self.l1),
            ("l2", self.l2),
        ];
        for (name, v) in named {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// `L = |beta*|_1 + delta`
    pub fn big_l(&self) -> f64 {
        self.l_star + self.delta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub big_l: f64,
    pub c1: f64,
    pub c2: f64,
    pub e_n: f64,
    /// Right-hand side of the prediction-error bound.
    pub r: f64,
    /// Bound on `E(|sigma2_hat - sigma^2|; event)`.
    pub sigma_bound: f64,
}

/// Constants of the prediction-error bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constants {
    pub big_l: f64,
    pub c1: f64,
    pub c2: f64,
    pub e_n: f64,
}

/// `max_j (1/n) sum_i x_ij^4`
pub fn compute_m(x: &DesignMatrix) -> Result<f64> {
    let n = x.nrows();
    if n == 0 {
        return Err(Error::invalid(
            "fourth-moment statistic needs at least one row",
        ));
    }
    let mut sums = vec![0.0; x.ncols()];
    for row in x.rows() {
        for (s, v) in sums.iter_mut().zip(row) {
            let sq = v * v;
            *s += sq * sq;
        }
    }
    Ok(sums.into_iter().map(|s| s / n as f64).fold(0.0, f64::max))
}

pub fn risk_constants(b: &BoundInputs) -> Result<Constants> {
    b.validate()?;
    let sigma = b.sigma;
    let big_l = b.big_l();
    let m_half = b.m_stat.sqrt();
    let m_quarter = m_half.sqrt();
    let s2 = sigma * sigma;
    let s4 = s2 * s2;
    let l2m = big_l * big_l * m_half;

    let c1 = 16.0 * (4.0 * s4 + 2.0 * l2m * s2).sqrt();
    let c2 = 96.0 * l2m + 57.0 * big_l * m_quarter * sigma;

    // 16 sqrt(A) rho^(n/2) in log space; rho^(n/2) underflows long before
    // the product does.
    let n = b.n as f64;
    let a = (n + 5.0) * s4 / n + (n + 1.0) * s2 / n * l2m;
    let rho = (1.0 + std::f64::consts::FRAC_1_SQRT_2) / 2.0;
    let e_n = (16f64.ln() + 0.5 * a.ln() + 0.5 * n * rho.ln()).exp();

    Ok(Constants { big_l, c1, c2, e_n })
}

/// `C1 (sqrt(l1) + sqrt(l2)) / sqrt(n) + C2 sqrt(log(2p) / n) + E_n`
pub fn prediction_bound(b: &BoundInputs) -> Result<f64> {
    let c = risk_constants(b)?;
    Ok(compose_rhs(&c, b))
}

fn compose_rhs(c: &Constants, b: &BoundInputs) -> f64 {
    let n = b.n as f64;
    let p = b.p as f64;
    c.c1 * (b.l1.sqrt() + b.l2.sqrt()) / n.sqrt() + c.c2 * ((2.0 * p).ln() / n).sqrt() + c.e_n
}

/// `sigma^2 sqrt(2/n) + 2 sigma sqrt(r) + r`
pub fn variance_bound(r: f64, sigma: f64, n: usize) -> Result<f64> {
    if !(r >= 0.0) || n == 0 || !(sigma >= 0.0) {
        return Err(Error::invalid(
            "variance bound needs r >= 0, sigma >= 0 and n >= 1",
        ));
    }
    Ok(sigma * sigma * (2.0 / n as f64).sqrt() + 2.0 * sigma * r.sqrt() + r)
}

/// Evaluates every constant and both bounds.
pub fn bound_report(b: &BoundInputs) -> Result<BoundReport> {
    let c = risk_constants(b)?;
    let r = compose_rhs(&c, b);
    Ok(BoundReport {
        big_l: c.big_l,
        c1: c.c1,
        c2: c.c2,
        e_n: c.e_n,
        r,
        sigma_bound: variance_bound(r, b.sigma, b.n)?,
    })
}

/// `E exp(Z^2 / (2 a sigma^2))` for `Z ~ N(mu, sigma^2)`, finite only for `a > 1`.
pub fn gaussian_square_mgf(mu: f64, sigma: f64, a: f64) -> Result<f64> {
    if !(a > 1.0) {
        return Err(Error::invalid(format!(
            "a must exceed 1 (integral diverges), got {a}"
        )));
    }
    if !(sigma > 0.0) {
        return Err(Error::invalid("sigma must be positive"));
    }
    Ok((mu * mu / (2.0 * (a - 1.0) * sigma * sigma)).exp() * (a / (a - 1.0)).sqrt())
}

/// Bounds on the expected maximum of `m` sub-Gaussian variables with variance proxy `sigma^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxBound {
    /// `E max xi_i <= sigma sqrt(2 log m)`
    pub one_sided: f64,
    /// `E max |xi_i| <= sigma sqrt(2 log 2m)`
    pub two_sided: f64,
}

pub fn subgaussian_max_bound(m: usize, sigma: f64) -> Result<MaxBound> {
    if m == 0 {
        return Err(Error::invalid("need at least one variable"));
    }
    let m = m as f64;
    Ok(MaxBound {
        one_sided: sigma * (2.0 * m.ln()).sqrt(),
        two_sided: sigma * (2.0 * (2.0 * m).ln()).sqrt(),
    })
}

/// `exp(theta^2 sum gamma_i^2 / 2)`: bound on the MGF of a sum of independent,
/// mean-zero variables with `|xi_i| <= gamma_i`.
pub fn hoeffding_mgf_bound(gammas: &[f64], theta: f64) -> Result<f64> {
    if gammas.iter().any(|g| !(*g >= 0.0)) {
        return Err(Error::invalid("gamma values must be >= 0"));
    }
    let s: f64 = gammas.iter().map(|g| g * g).sum();
    Ok((theta * theta * s / 2.0).exp())
}
