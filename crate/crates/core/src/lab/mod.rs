//! Constants, deficits, sharpness families and search oracles for the
//! family of maximal and Hardy-type inequalities.

mod battery;
mod constants;
mod deficit;
mod oracle;
mod random;
mod sharpness;

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::bellman::check_p;
use crate::error::{domain, Error, Result};

pub use battery::{
    run_battery, write_battery_csv, ArgMin, BatteryConfig, BatteryRow, BatterySummary, IneqTally,
    ParamGrid,
};
pub use constants::{
    constants, envelope, envelope_slope, h_beta, h_beta_derivative, Constants,
};
pub use deficit::{deficit, hardy_deficit, DeficitReport, Integrals, VIOLATION_SLACK};
pub use oracle::{discretize_extremal, oracle_sup, OracleConfig, OracleResult};
pub use random::{derive_rng, random_step_function, PhiDistribution};
pub use sharpness::{extremizer_sweep, j_identity_target, sharpness_g, Family, SweepPoint};

/// Inequalities the lab can evaluate, named by their usual labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Inequality {
    /// `μ(M phi > λ) ≤ (1/λ) ∫_{M phi > λ} phi`.
    #[serde(rename = "1.2")]
    WeakType,
    /// `∫(M phi)^p ≤ -f^p/(p-1) + p/(p-1) ∫ phi (M phi)^(p-1)`.
    #[serde(rename = "1.7")]
    LinearMixed,
    /// The `q`-generalization with constants `q/(p-1)` and `(p/(p-1))^q`.
    #[serde(rename = "1.8")]
    QMixed,
    /// The two-parameter `(q, β)` family.
    #[serde(rename = "1.9")]
    BetaFamily,
    /// The one-dimensional Hardy version of the `(q, β)` family.
    #[serde(rename = "1.10")]
    Hardy,
}

impl Inequality {
    pub const TREE: [Inequality; 4] = [
        Inequality::WeakType,
        Inequality::LinearMixed,
        Inequality::QMixed,
        Inequality::BetaFamily,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Inequality::WeakType => "1.2",
            Inequality::LinearMixed => "1.7",
            Inequality::QMixed => "1.8",
            Inequality::BetaFamily => "1.9",
            Inequality::Hardy => "1.10",
        }
    }
}

impl fmt::Display for Inequality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Inequality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "1.2" => Ok(Inequality::WeakType),
            "1.7" => Ok(Inequality::LinearMixed),
            "1.8" => Ok(Inequality::QMixed),
            "1.9" => Ok(Inequality::BetaFamily),
            "1.10" => Ok(Inequality::Hardy),
            other => Err(domain(format!(
                "unknown inequality `{other}` (expected 1.2, 1.7, 1.8, 1.9 or 1.10)"
            ))),
        }
    }
}

/// Exponents `p`, `q`, the parameter `β`, and the prescribed mean `f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IneqParams {
    pub p: f64,
    pub q: f64,
    pub beta: f64,
    pub f: f64,
}

impl IneqParams {
    pub fn new(p: f64, q: f64, beta: f64) -> Result<Self> {
        Self::with_f(p, q, beta, 1.0)
    }

    pub fn with_f(p: f64, q: f64, beta: f64, f: f64) -> Result<Self> {
        check_p(p)?;
        if !(1.0..=p).contains(&q) {
            return Err(domain(format!("q must lie in [1, p] = [1, {p}], got {q}")));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(domain(format!("beta must be positive, got {beta}")));
        }
        if !(f > 0.0 && f.is_finite()) {
            return Err(domain(format!("f must be positive, got {f}")));
        }
        Ok(IneqParams { p, q, beta, f })
    }

    /// `1/(p-1)`, the largest `β` for which the family is sharp.
    pub fn beta_sharp(&self) -> f64 {
        1.0 / (self.p - 1.0)
    }
}
