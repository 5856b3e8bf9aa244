//! The two-variable Bellman function of the tree maximal operator.
//!
//! `B(f, F) = F · ω_p(f^p / F)^p` where `ω_p` inverts
//! `H_p(z) = -(p-1) z^p + p z^(p-1)` on `[1, p/(p-1)]`. The same value is
//! reached by minimizing the one-parameter family of upper bounds
//! `((β+1)/β) · ((β+1)^(p-1) F - f^p) / (p-1)` over `β`.

use serde::Serialize;

use crate::error::{domain, Error, Result};

/// Largest supported exponent; beyond it `z^p` overflows at desk scale.
pub const MAX_P: f64 = 64.0;

/// Iteration cap for the bisection inverse.
pub const MAX_BISECTIONS: usize = 200;

pub(crate) fn check_p(p: f64) -> Result<()> {
    if p > 1.0 && p <= MAX_P {
        Ok(())
    } else {
        Err(domain(format!("p must lie in (1, {MAX_P}], got {p}")))
    }
}

/// `H_p` and its inverse for a fixed exponent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BellmanCurve {
    p: f64,
    /// Absolute bracket width at which bisection stops. Zero runs to
    /// machine precision, which the round trip `H_p(ω_p(x)) ≈ x` needs
    /// for large `p` where `H_p` is steep.
    pub tolerance: f64,
}

impl BellmanCurve {
    pub fn new(p: f64) -> Result<Self> {
        check_p(p)?;
        Ok(BellmanCurve { p, tolerance: 0.0 })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Right end of the domain of `H_p`, `p/(p-1)`.
    pub fn z_max(&self) -> f64 {
        self.p / (self.p - 1.0)
    }

    /// `H_p(z)`, evaluated as `z^(p-1) (p - (p-1) z)` to avoid cancellation.
    pub fn h(&self, z: f64) -> Result<f64> {
        if !(1.0..=self.z_max()).contains(&z) {
            return Err(domain(format!(
                "z must lie in [1, {}], got {z}",
                self.z_max()
            )));
        }
        Ok(self.h_unchecked(z))
    }

    fn h_unchecked(&self, z: f64) -> f64 {
        let p = self.p;
        (z.powf(p - 1.0) * (p - (p - 1.0) * z)).clamp(0.0, 1.0)
    }

    /// `ω_p(x)`: the unique `z` in `[1, p/(p-1)]` with `H_p(z) = x`.
    pub fn omega(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(domain(format!("x must lie in [0, 1], got {x}")));
        }
        if x == 1.0 {
            return Ok(1.0);
        }
        if x == 0.0 {
            return Ok(self.z_max());
        }
        // H_p is decreasing: H(lo) >= x >= H(hi)
        let (mut lo, mut hi) = (1.0, self.z_max());
        for _ in 0..MAX_BISECTIONS {
            let mid = 0.5 * (lo + hi);
            if !(mid > lo && mid < hi) || hi - lo <= self.tolerance {
                break;
            }
            if self.h_unchecked(mid) > x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        // pick whichever end reproduces x better
        let (elo, ehi) = (
            (self.h_unchecked(lo) - x).abs(),
            (self.h_unchecked(hi) - x).abs(),
        );
        Ok(if elo <= ehi { lo } else { hi })
    }
}

/// `H_p(z)`.
pub fn h_p(z: f64, p: f64) -> Result<f64> {
    BellmanCurve::new(p)?.h(z)
}

/// `ω_p(x)`.
pub fn omega_p(x: f64, p: f64) -> Result<f64> {
    BellmanCurve::new(p)?.omega(x)
}

fn check_moments(p: f64, f: f64, big_f: f64) -> Result<f64> {
    check_p(p)?;
    if !(f > 0.0 && f.is_finite() && big_f.is_finite()) {
        return Err(domain(format!("need f > 0 and finite F, got f = {f}, F = {big_f}")));
    }
    let fp = f.powf(p);
    // allow a few ulps so that F computed as f^p stays feasible
    if fp > big_f * (1.0 + 4.0 * f64::EPSILON) {
        return Err(Error::InfeasibleMoments { p, fp, big_f });
    }
    Ok(fp)
}

/// The Bellman value together with the parameters of its extremal power law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BellmanPoint {
    pub p: f64,
    pub f: f64,
    #[serde(rename = "F")]
    pub big_f: f64,
    pub value: f64,
    /// `ω_p(f^p / F)`.
    pub alpha: f64,
    /// `f / α`, the coefficient of `K t^(-1 + 1/α)`.
    #[serde(rename = "K")]
    pub k: f64,
}

/// `B(f, F) = F ω_p(f^p/F)^p`.
pub fn bellman_value(p: f64, f: f64, big_f: f64) -> Result<BellmanPoint> {
    let fp = check_moments(p, f, big_f)?;
    let x = (fp / big_f).min(1.0);
    let alpha = BellmanCurve::new(p)?.omega(x)?;
    Ok(BellmanPoint {
        p,
        f,
        big_f,
        value: big_f * alpha.powf(p),
        alpha,
        k: f / alpha,
    })
}

/// `((β+1)/β) · ((β+1)^(p-1) F − f^p) / (p−1)`.
pub fn corollary2_bound(p: f64, f: f64, big_f: f64, beta: f64) -> Result<f64> {
    let fp = check_moments(p, f, big_f)?;
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(domain(format!("beta must be positive, got {beta}")));
    }
    Ok(bound_unchecked(p, fp, big_f, beta))
}

fn bound_unchecked(p: f64, fp: f64, big_f: f64, beta: f64) -> f64 {
    (beta + 1.0) / beta * ((beta + 1.0).powf(p - 1.0) * big_f - fp) / (p - 1.0)
}

/// Result of the one-dimensional minimization over `β`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaMinimum {
    pub beta_opt: f64,
    pub min_value: f64,
    /// Set when a coarse scan finds the bound is not unimodal on the bracket.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Golden-section tolerance on `β`.
pub const BETA_TOL: f64 = 1e-10;

/// Minimizes the β-family of upper bounds over `(0, 1/(p-1)]`.
pub fn minimize_corollary2(p: f64, f: f64, big_f: f64) -> Result<BetaMinimum> {
    let fp = check_moments(p, f, big_f)?;
    if fp >= big_f {
        return Err(domain(
            "minimization needs f^p < F; at f^p = F the minimum is the limit β → 0",
        ));
    }
    let hi = 1.0 / (p - 1.0);
    let obj = |b: f64| bound_unchecked(p, fp, big_f, b);
    let warning = unimodality_warning(&obj, hi);

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (obj(c), obj(d));
    while b - a > BETA_TOL {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = obj(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = obj(d);
        }
    }
    let mut beta_opt = 0.5 * (a + b);
    let mut min_value = obj(beta_opt);
    // the minimum may sit on the closed right end
    let at_hi = obj(hi);
    if at_hi < min_value {
        beta_opt = hi;
        min_value = at_hi;
    }
    Ok(BetaMinimum {
        beta_opt,
        min_value,
        warning,
    })
}

fn unimodality_warning(obj: &impl Fn(f64) -> f64, hi: f64) -> Option<String> {
    let samples: Vec<f64> = (1..=64).map(|k| obj(hi * k as f64 / 64.0)).collect();
    let turn = samples
        .windows(2)
        .position(|w| w[1] > w[0])
        .unwrap_or(samples.len() - 1);
    let rises_again = samples[turn..].windows(2).any(|w| w[1] < w[0] * (1.0 - 1e-12));
    rises_again.then(|| "bound is not unimodal on (0, 1/(p-1)]".to_string())
}
