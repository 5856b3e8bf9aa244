use serde::Serialize;

use super::{constants, h_beta, h_beta_derivative, hardy_deficit, DeficitReport, IneqParams};
use crate::bellman::check_p;
use crate::error::{domain, Error, Result};
use crate::rearrangement::{hardy_moment, hardy_power, LineFunction, PowerLawFunction};

/// `G(α) = ((p/(p-1))^q (1-α)^q - 1) / (1 - αp)` for `α ∈ (0, 1/p)`.
///
/// Written as `expm1(q ln(1+δ)) / ((p-1) δ)` with `δ = (1-αp)/(p-1)`,
/// which stays accurate as `α → 1/p`.
pub fn sharpness_g(alpha: f64, p: f64, q: f64) -> Result<f64> {
    check_p(p)?;
    if !(1.0..=p).contains(&q) {
        return Err(domain(format!("q must lie in [1, p] = [1, {p}], got {q}")));
    }
    if !(alpha > 0.0 && alpha < 1.0 / p) {
        return Err(domain(format!("alpha must lie in (0, 1/p) = (0, {}), got {alpha}", 1.0 / p)));
    }
    let delta = (1.0 - alpha * p) / (p - 1.0);
    Ok((q * delta.ln_1p()).exp_m1() / ((p - 1.0) * delta))
}

/// Power-law extremizers `g(t) = f(1-α) t^(-α)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Grid over `α ∈ (0, 1/p)`; `β` taken from the parameters.
    GAlpha,
    /// Grid over `β ∈ (0, 1/(p-1)]`, with `α = β/(β+1)`.
    GBeta,
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "g_alpha" | "alpha" => Ok(Family::GAlpha),
            "g_beta" | "beta" => Ok(Family::GBeta),
            other => Err(domain(format!("unknown family `{other}` (g_alpha or g_beta)"))),
        }
    }
}

/// One grid point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub family: Family,
    /// The grid value, `α` or `β` depending on the family.
    pub grid: f64,
    pub alpha: f64,
    /// The residual `J` built from the closed-form integrals.
    #[serde(rename = "J")]
    pub j: Option<f64>,
    /// The value `J` is expected to take.
    pub j_target: Option<f64>,
    pub report: Option<DeficitReport>,
    pub skipped: Option<String>,
}

impl SweepPoint {
    fn skip(family: Family, grid: f64, reason: String) -> Self {
        SweepPoint {
            family,
            grid,
            alpha: f64::NAN,
            j: None,
            j_target: None,
            report: None,
            skipped: Some(reason),
        }
    }

    /// `|J - target| / |target|`, when both are known.
    pub fn relative_residual(&self) -> Option<f64> {
        let (j, t) = (self.j?, self.j_target?);
        Some((j - t).abs() / t.abs().max(f64::MIN_POSITIVE))
    }
}

/// Closed-form value of `J` for the family: for `GBeta`,
/// `(q/p)(β+1)^(1-q) f^p`; for `GAlpha`, `-f^p G(α)`.
pub fn j_identity_target(params: &IneqParams, family: Family, grid: f64) -> Result<f64> {
    let IneqParams { p, q, f, .. } = *params;
    match family {
        Family::GBeta => Ok(q / p * (grid + 1.0).powf(1.0 - q) * f.powf(p)),
        Family::GAlpha => Ok(-f.powf(p) * sharpness_g(grid, p, q)?),
    }
}

/// Evaluates the extremizer family on every grid point.
///
/// Inadmissible points are kept in the output with a reason instead of
/// aborting the sweep.
pub fn extremizer_sweep(params: &IneqParams, family: Family, grid: &[f64]) -> Vec<SweepPoint> {
    grid.iter()
        .map(|&x| match sweep_point(params, family, x) {
            Ok(pt) => pt,
            Err(e) => SweepPoint::skip(family, x, e.to_string()),
        })
        .collect()
}

fn sweep_point(params: &IneqParams, family: Family, x: f64) -> Result<SweepPoint> {
    let IneqParams { p, q, f, .. } = *params;
    let beta0 = 1.0 / (p - 1.0);
    match family {
        Family::GAlpha => {
            if !(x > 0.0 && x < 1.0 / p) {
                return Err(domain(format!("alpha {x} outside (0, 1/p)")));
            }
            let g: LineFunction = PowerLawFunction::with_mean(f, x)?.into();
            let j = hardy_power(&g, p)? - (p / (p - 1.0)).powf(q) * hardy_moment(&g, p, q)?;
            Ok(SweepPoint {
                family,
                grid: x,
                alpha: x,
                j: Some(j),
                j_target: Some(j_identity_target(params, family, x)?),
                report: Some(hardy_deficit(&g, params)?),
                skipped: None,
            })
        }
        Family::GBeta => {
            if !(x > 0.0 && x <= beta0 * (1.0 + 1e-15)) {
                return Err(domain(format!("beta {x} outside (0, 1/(p-1)]")));
            }
            let at_edge = (x - beta0).abs() <= 4.0 * f64::EPSILON * beta0;
            let local = IneqParams::with_f(p, q, if at_edge { beta0 } else { x }, f)?;
            let alpha = local.beta / (local.beta + 1.0);
            let (j, report) = if at_edge {
                // both integrals diverge; J is the one-sided limit
                (j_limit_at_edge(&local)?, None)
            } else {
                let g: LineFunction = PowerLawFunction::with_mean(f, alpha)?.into();
                let a = constants(&local)?.a;
                let j = hardy_moment(&g, p, q)? - a * hardy_power(&g, p)?;
                (j, Some(hardy_deficit(&g, &local)?))
            };
            Ok(SweepPoint {
                family,
                grid: x,
                alpha,
                j: Some(j),
                j_target: Some(j_identity_target(&local, family, local.beta)?),
                report,
                skipped: None,
            })
        }
    }
}

/// `lim_{β → 1/(p-1)^-} J(β)` for the `g_β` family.
///
/// `J = c^p N(β) / D(β)` with `c = f/(β+1)`,
/// `N = (β+1)^(p-q) - A(β)(β+1)^p` and `D = 1 - pβ/(β+1)`; both vanish at
/// the edge, so the limit is `c^p N'/D'`.
fn j_limit_at_edge(params: &IneqParams) -> Result<f64> {
    let IneqParams { p, q, beta, f } = *params;
    let b1 = beta + 1.0;
    let a = h_beta(p, q, beta);
    let da = h_beta_derivative(p, q, beta);
    let dn = (p - q) * b1.powf(p - q - 1.0) - da * b1.powf(p) - p * a * b1.powf(p - 1.0);
    let dd = -p / (b1 * b1);
    Ok((f / b1).powf(p) * dn / dd)
}
