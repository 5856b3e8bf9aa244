use serde::Serialize;

use super::IneqParams;
use crate::error::{Error, Result};

/// Every constant attached to a choice of `(p, q, β, f)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Constants {
    /// `A(p, q, β)`.
    #[serde(rename = "A")]
    pub a: f64,
    /// Coefficient of `-f^p`.
    pub c1: f64,
    /// Coefficient of `∫ phi^q (M phi)^(p-q)`.
    pub c2: f64,
    /// `(p-1)/p`.
    pub t0: f64,
    /// Root of the slope function `F(t)` on `[t0, ∞)`.
    pub t_beta: f64,
    /// `h(β) = A(p, q, β)`.
    pub h_val: f64,
    /// `f^p / (p t_β - (p-1))`; absent when `t_β = t0`.
    pub x_beta: Option<f64>,
}

/// `h(β) = (q-1)β/(β+1)^q + ((p-q)/p)/(β+1)^(q-1)`.
pub fn h_beta(p: f64, q: f64, beta: f64) -> f64 {
    let b1 = beta + 1.0;
    (q - 1.0) * beta / b1.powf(q) + (p - q) / p / b1.powf(q - 1.0)
}

/// `h'(β) = (q(q-1)/p) (1 - (p-1)β) / (β+1)^(q+1)`.
pub fn h_beta_derivative(p: f64, q: f64, beta: f64) -> f64 {
    q * (q - 1.0) / p * (1.0 - (p - 1.0) * beta) / (beta + 1.0).powf(q + 1.0)
}

/// `F(t) = A + (q-1) t^q - (q(p-1)/p) t^(q-1)`, the derivative of [`envelope`]
/// written in the variable `t = (p-1)/p + f^p/(p x)`.
pub fn envelope_slope(params: &IneqParams, a: f64, t: f64) -> f64 {
    let IneqParams { p, q, .. } = *params;
    a + (q - 1.0) * t.powf(q) - q * (p - 1.0) / p * t.powf(q - 1.0)
}

/// `G(x) = A x - x ((p-1)/p + f^p/(p x))^q`.
pub fn envelope(params: &IneqParams, a: f64, x: f64) -> f64 {
    let IneqParams { p, q, f, .. } = *params;
    let t = (p - 1.0) / p + f.powf(p) / (p * x);
    a * x - x * t.powf(q)
}

/// Computes `A`, both inequality constants, `t_β` and `x_β`.
pub fn constants(params: &IneqParams) -> Result<Constants> {
    let IneqParams { p, q, beta, f } = *params;
    let b1 = beta + 1.0;
    let denom = (p - 1.0) * q * beta + (p - q);
    let a = h_beta(p, q, beta);
    let t0 = (p - 1.0) / p;
    let t_beta = root_of_slope(params, a, t0)?;
    let x_beta = (t_beta > t0).then(|| f.powf(p) / (p * t_beta - (p - 1.0)));
    Ok(Constants {
        a,
        c1: q * b1 / denom,
        c2: p * b1.powf(q) / denom,
        t0,
        t_beta,
        h_val: a,
        x_beta,
    })
}

fn root_of_slope(params: &IneqParams, a: f64, t0: f64) -> Result<f64> {
    let beta = params.beta;
    if params.q == 1.0 {
        // F vanishes identically; 1/(β+1) is the root the sharp range uses
        return Ok((1.0 / (beta + 1.0)).max(t0));
    }
    let slope = |t: f64| envelope_slope(params, a, t);
    if slope(t0) >= 0.0 {
        // only at β = 1/(p-1), where A = t0^q
        return Ok(t0);
    }
    let mut hi = (1.0f64).max(1.0 / (beta + 1.0) + 1.0);
    let mut doublings = 0;
    while slope(hi) <= 0.0 {
        hi *= 2.0;
        doublings += 1;
        if doublings > 200 {
            return Err(Error::Numerical(format!(
                "could not bracket t_beta for {params:?}"
            )));
        }
    }
    let mut lo = t0;
    loop {
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            break;
        }
        if slope(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(if slope(lo).abs() <= slope(hi).abs() { lo } else { hi })
}
