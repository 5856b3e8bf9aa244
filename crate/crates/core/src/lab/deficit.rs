use serde::Serialize;

use super::{constants, Constants, IneqParams, Inequality};
use crate::error::{domain, Result};
use crate::maximal::maximal_values;
use crate::rearrangement::{hardy_moment, hardy_power, LineFunction};
use crate::tree::{moment, StepFunction, Tree};

/// Relative slack below zero tolerated before a deficit counts as a violation.
pub const VIOLATION_SLACK: f64 = 1e-9;

/// The integrals entering the mixed inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Integrals {
    pub f: f64,
    /// `∫ phi^p`.
    #[serde(rename = "F")]
    pub big_f: f64,
    /// `∫ (M phi)^p`.
    pub j0: f64,
    /// `∫ phi (M phi)^(p-1)`.
    pub j1: f64,
    /// `∫ phi^q (M phi)^(p-q)`.
    pub jq: f64,
}

impl Integrals {
    /// Exact leaf sums for one step function and its maximal function.
    pub fn on_tree(tree: &Tree, phi: &[f64], m: &[f64], p: f64, q: f64) -> Self {
        let pairs = || phi.iter().zip(m);
        Integrals {
            f: tree.integrate(phi.iter().copied()),
            big_f: tree.integrate(phi.iter().map(|v| v.powf(p))),
            j0: tree.integrate(m.iter().map(|v| v.powf(p))),
            j1: tree.integrate(pairs().map(|(v, mv)| v * mv.powf(p - 1.0))),
            jq: tree.integrate(pairs().map(|(v, mv)| v.powf(q) * mv.powf(p - q))),
        }
    }
}

/// One evaluation of an inequality: both sides, their gap, and the inputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeficitReport {
    pub ineq: Inequality,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`.
    pub deficit: f64,
    #[serde(flatten)]
    pub integrals: Integrals,
    pub params: IneqParams,
    /// The requested mean when it differed from the measured one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub requested_f: Option<f64>,
}

impl DeficitReport {
    /// Builds the report for one of the mixed inequalities from precomputed integrals.
    pub fn from_integrals(ineq: Inequality, params: &IneqParams, ints: Integrals) -> Result<Self> {
        let consts = match ineq {
            Inequality::BetaFamily | Inequality::Hardy => Some(constants(params)?),
            _ => None,
        };
        let rhs = mixed_rhs(ineq, params, consts.as_ref(), &ints)?;
        let lhs = ints.j0;
        let mut params = *params;
        let requested = params.f;
        params.f = ints.f;
        Ok(DeficitReport {
            ineq,
            lhs,
            rhs,
            deficit: rhs - lhs,
            integrals: ints,
            params,
            requested_f: ((requested - ints.f).abs() > 1e-12 * ints.f.max(1.0)).then_some(requested),
        })
    }

    /// `deficit / max(1, |rhs|)`.
    pub fn scaled_deficit(&self) -> f64 {
        self.deficit / self.rhs.abs().max(1.0)
    }

    pub fn is_violation(&self) -> bool {
        self.scaled_deficit() < -VIOLATION_SLACK
    }
}

/// Right-hand side of 1.7, 1.8, 1.9 or 1.10; `consts` is needed for the last two.
pub(crate) fn mixed_rhs(
    ineq: Inequality,
    params: &IneqParams,
    consts: Option<&Constants>,
    ints: &Integrals,
) -> Result<f64> {
    let IneqParams { p, q, .. } = *params;
    let fp = ints.f.powf(p);
    match ineq {
        Inequality::LinearMixed => Ok((-fp + p * ints.j1) / (p - 1.0)),
        Inequality::QMixed => Ok(-q / (p - 1.0) * fp + (p / (p - 1.0)).powf(q) * ints.jq),
        Inequality::BetaFamily | Inequality::Hardy => {
            let c = consts.ok_or_else(|| domain("constants required"))?;
            Ok(-c.c1 * fp + c.c2 * ints.jq)
        }
        Inequality::WeakType => Err(domain("the weak-type bound is evaluated per level λ")),
    }
}

/// Evaluates inequality `ineq` (1.7, 1.8 or 1.9) on a tree step function.
///
/// The mean `f` is always measured from `phi`; a different `params.f` is
/// kept in `requested_f`.
pub fn deficit(ineq: Inequality, phi: &StepFunction, params: &IneqParams) -> Result<DeficitReport> {
    if matches!(ineq, Inequality::Hardy) {
        return Err(domain("use hardy_deficit for the one-dimensional inequality"));
    }
    let m = maximal_values(phi);
    let ints = Integrals::on_tree(phi.tree(), phi.values(), &m, params.p, params.q);
    debug_assert_eq!(ints.f, moment(phi, 1.0));
    DeficitReport::from_integrals(ineq, params, ints)
}

/// The Hardy inequality for a non-increasing `g` on `(0, 1]`.
pub fn hardy_deficit(g: &LineFunction, params: &IneqParams) -> Result<DeficitReport> {
    if !g.is_non_increasing() {
        return Err(domain("g must be non-increasing"));
    }
    let IneqParams { p, q, .. } = *params;
    let ints = Integrals {
        f: g.mean(),
        big_f: g.moment(p)?,
        j0: hardy_power(g, p)?,
        j1: hardy_moment(g, p, 1.0)?,
        jq: hardy_moment(g, p, q)?,
    };
    DeficitReport::from_integrals(Inequality::Hardy, params, ints)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rearrangement::PowerLawFunction;

    fn golden() -> StepFunction {
        StepFunction::new(Tree::uniform(2, 2).unwrap(), vec![4.0, 2.0, 1.0, 1.0]).unwrap()
    }

    #[test]
    fn linear_mixed_golden() {
        let params = IneqParams::with_f(2.0, 1.0, 1.0, 2.0).unwrap();
        let r = deficit(Inequality::LinearMixed, &golden(), &params).unwrap();
        assert_eq!(r.integrals.j0, 8.25);
        assert_eq!(r.integrals.j1, 6.5);
        assert_eq!(r.rhs, 9.0);
        assert_eq!(r.deficit, 0.75);
        assert!(r.requested_f.is_none());
    }

    #[test]
    fn beta_family_golden() {
        let params = IneqParams::new(2.0, 2.0, 1.0).unwrap();
        let r = deficit(Inequality::BetaFamily, &golden(), &params).unwrap();
        assert_eq!(r.integrals.jq, 5.5);
        assert!((r.rhs - 14.0).abs() < 1e-14);
        assert!((r.deficit - 5.75).abs() < 1e-14);
        // f measured from phi, requested value recorded
        assert_eq!(r.params.f, 2.0);
        assert_eq!(r.requested_f, Some(1.0));
    }

    #[test]
    fn q_mixed_equals_beta_family_at_sharp_beta() {
        for (p, q) in [(2.0, 1.5), (3.0, 3.0), (1.5, 1.0)] {
            let params = IneqParams::new(p, q, 1.0 / (p - 1.0)).unwrap();
            let a = deficit(Inequality::QMixed, &golden(), &params).unwrap();
            let b = deficit(Inequality::BetaFamily, &golden(), &params).unwrap();
            assert!((a.rhs - b.rhs).abs() < 1e-12 * a.rhs.abs());
        }
    }

    #[test]
    fn hardy_equality_cases() {
        let params = IneqParams::new(2.0, 1.0, 1.0).unwrap();
        let g: LineFunction = PowerLawFunction::with_mean(1.0, 0.25).unwrap().into();
        let r = hardy_deficit(&g, &params).unwrap();
        assert!((r.lhs - 2.0).abs() < 1e-15);
        assert!((r.rhs - 2.0).abs() < 1e-15);
        let c: LineFunction = PowerLawFunction::with_mean(1.3, 0.0).unwrap().into();
        let r = hardy_deficit(&c, &IneqParams::new(3.0, 1.0, 0.5).unwrap()).unwrap();
        assert!(r.deficit.abs() < 1e-13);
    }

    #[test]
    fn rejects_increasing_g_and_weak_type() {
        let g: LineFunction = crate::rearrangement::LineStepFunction::uniform(vec![1.0, 2.0])
            .unwrap()
            .into();
        assert!(hardy_deficit(&g, &IneqParams::new(2.0, 1.0, 1.0).unwrap()).is_err());
        let params = IneqParams::new(2.0, 1.0, 1.0).unwrap();
        assert!(deficit(Inequality::WeakType, &golden(), &params).is_err());
        assert!(deficit(Inequality::Hardy, &golden(), &params).is_err());
    }
}
