//! Decreasing rearrangements, the one-dimensional Hardy average, and
//! rearrangement sampling on trees.
//!
//! Functions on `(0, 1]` come in two shapes: step functions with explicit
//! breakpoints, and power laws `c · t^(-a)`. Hardy integrals of power laws
//! are evaluated in closed form; step functions go through adaptive
//! Gauss–Legendre panels, one per piece, where the running average
//! `(1/t) ∫_0^t g` is smooth.

use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{domain, Error, Result};
use crate::quadrature;
use crate::tree::{StepFunction, Tree};

/// Relative tolerance used for every step-function Hardy integral.
pub const HARDY_REL_TOL: f64 = 1e-10;

/// A left-continuous step function on `(0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LineStepFunction {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl LineStepFunction {
    /// `values[i]` is taken on `(breakpoints[i], breakpoints[i + 1]]`.
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breakpoints.len() != values.len() + 1 || values.is_empty() {
            return Err(Error::Shape {
                expected: values.len() + 1,
                found: breakpoints.len(),
            });
        }
        if breakpoints[0] != 0.0 || (breakpoints[values.len()] - 1.0).abs() > 1e-12 {
            return Err(domain("breakpoints must run from 0 to 1"));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1] || w[0].is_nan() || w[1].is_nan()) {
            return Err(domain("breakpoints must be strictly increasing"));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(domain("values must be finite and nonnegative"));
        }
        Ok(LineStepFunction { breakpoints, values })
    }

    /// `n` equal pieces.
    pub fn uniform(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        let bp = (0..=n).map(|i| i as f64 / n as f64).collect();
        Self::new(bp, values)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn pieces(&self) -> usize {
        self.values.len()
    }

    pub fn is_non_increasing(&self) -> bool {
        self.values.windows(2).all(|w| w[0] >= w[1])
    }

    /// `∫_0^1 g^r`.
    pub fn moment(&self, r: f64) -> f64 {
        self.widths()
            .zip(&self.values)
            .map(|(w, v)| w * v.powf(r))
            .sum()
    }

    /// `|{g > λ}|`.
    pub fn level_set_measure(&self, lambda: f64) -> f64 {
        if self.is_non_increasing() {
            // {g > λ} is an initial interval; read its end off the breakpoints
            return self.breakpoints[self.values.partition_point(|v| *v > lambda)];
        }
        self.widths()
            .zip(&self.values)
            .filter(|(_, v)| **v > lambda)
            .map(|(w, _)| w)
            .sum()
    }

    fn widths(&self) -> impl Iterator<Item = f64> + '_ {
        self.breakpoints.windows(2).map(|w| w[1] - w[0])
    }

    /// Rows `t_i,value_i`; the value on a row is taken on the piece ending at `t_i`,
    /// and a leading `0,...` row is optional.
    pub fn read_csv(reader: impl BufRead) -> Result<Self> {
        let mut bp = vec![0.0];
        let mut values = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| Error::Parse {
                line: line_no,
                msg: e.to_string(),
            })?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (t, v) = line.split_once(',').ok_or_else(|| Error::Parse {
                line: line_no,
                msg: "expected `t,value`".into(),
            })?;
            let parse = |s: &str, what: &str| -> Result<f64> {
                s.trim().parse().map_err(|e| Error::Parse {
                    line: line_no,
                    msg: format!("{what} `{}`: {e}", s.trim()),
                })
            };
            let t = parse(t, "breakpoint")?;
            let v = parse(v, "value")?;
            if t == 0.0 && values.is_empty() {
                continue;
            }
            bp.push(t);
            values.push(v);
        }
        Self::new(bp, values)
    }

    pub fn write_csv(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        for (t, v) in self.breakpoints[1..].iter().zip(&self.values) {
            writeln!(w, "{t:.16e},{v:.16e}")?;
        }
        Ok(())
    }
}

/// The power law `t ↦ c · t^(-a)` on `(0, 1]` with mean `f = c / (1 - a)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFunction {
    pub c: f64,
    pub a: f64,
    pub f: f64,
}

impl PowerLawFunction {
    /// `c · t^(-a)` normalized to `∫ = f`.
    pub fn with_mean(f: f64, a: f64) -> Result<Self> {
        if !(f > 0.0 && f.is_finite()) {
            return Err(domain(format!("mean must be positive, got {f}")));
        }
        if !(0.0..1.0).contains(&a) {
            return Err(domain(format!("exponent must lie in [0, 1), got {a}")));
        }
        Ok(PowerLawFunction { c: f * (1.0 - a), a, f })
    }

    /// The self-similar extremal `g(t) = K t^(-1 + 1/α)` with `K = f/α`.
    pub fn extremal(f: f64, alpha: f64) -> Result<Self> {
        if alpha.is_nan() || alpha < 1.0 {
            return Err(domain(format!("alpha must be at least 1, got {alpha}")));
        }
        let mut g = Self::with_mean(f, 1.0 - 1.0 / alpha)?;
        // keep K exact rather than f(1 - a)
        g.c = f / alpha;
        Ok(g)
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.c * t.powf(-self.a)
    }

    /// `(1/t) ∫_0^t g = g(t) / (1 - a)`.
    pub fn running_average(&self, t: f64) -> f64 {
        self.eval(t) / (1.0 - self.a)
    }

    fn check_integrable(&self, p: f64) -> Result<()> {
        if self.a * p >= 1.0 {
            Err(Error::Divergent { exponent: self.a, p })
        } else {
            Ok(())
        }
    }

    /// `∫_0^1 g^p = c^p / (1 - a p)`.
    pub fn moment(&self, p: f64) -> Result<f64> {
        self.check_integrable(p)?;
        Ok(self.c.powf(p) / (1.0 - self.a * p))
    }

    /// `∫_x^y g`, computed without cancellation for narrow cells.
    pub fn cell_integral(&self, x: f64, y: f64) -> f64 {
        let s = 1.0 - self.a;
        if x <= 0.0 {
            return self.f * y.powf(s);
        }
        self.f * x.powf(s) * (s * (y / x).ln()).exp_m1()
    }

    /// Exact cell averages over `n` equal cells.
    pub fn discretize(&self, n: usize) -> LineStepFunction {
        if self.a == 0.0 {
            return LineStepFunction::uniform(vec![self.f; n]).expect("constant cells are valid");
        }
        let nf = n as f64;
        let values = (0..n)
            .map(|i| self.cell_integral(i as f64 / nf, (i + 1) as f64 / nf) * nf)
            .collect();
        LineStepFunction::uniform(values).expect("power-law cell averages are valid")
    }
}

impl fmt::Display for PowerLawFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "powerlaw:f={},alpha={}", self.f, self.a)
    }
}

impl FromStr for PowerLawFunction {
    type Err = Error;

    /// Parses `powerlaw:f=<v>,alpha=<v>`, the function `f(1-α) t^(-α)`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |msg: String| Error::Parse { line: 1, msg };
        let body = s
            .trim()
            .strip_prefix("powerlaw:")
            .ok_or_else(|| bad(format!("`{s}` does not start with `powerlaw:`")))?;
        let (mut f, mut alpha) = (None, None);
        for part in body.split(',') {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, got `{part}`")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|e| bad(format!("`{}`: {e}", v.trim())))?;
            match k.trim() {
                "f" => f = Some(v),
                "alpha" => alpha = Some(v),
                other => return Err(bad(format!("unknown key `{other}`"))),
            }
        }
        let f = f.ok_or_else(|| bad("missing f".into()))?;
        let alpha = alpha.ok_or_else(|| bad("missing alpha".into()))?;
        Self::with_mean(f, alpha)
    }
}

/// Either representation of a nonnegative function on `(0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub enum LineFunction {
    Step(LineStepFunction),
    Power(PowerLawFunction),
}

impl From<LineStepFunction> for LineFunction {
    fn from(g: LineStepFunction) -> Self {
        LineFunction::Step(g)
    }
}

impl From<PowerLawFunction> for LineFunction {
    fn from(g: PowerLawFunction) -> Self {
        LineFunction::Power(g)
    }
}

impl LineFunction {
    /// `∫_0^1 g`.
    pub fn mean(&self) -> f64 {
        match self {
            LineFunction::Step(g) => g.moment(1.0),
            LineFunction::Power(g) => g.f,
        }
    }

    pub fn moment(&self, p: f64) -> Result<f64> {
        match self {
            LineFunction::Step(g) => Ok(g.moment(p)),
            LineFunction::Power(g) => g.moment(p),
        }
    }

    pub fn is_non_increasing(&self) -> bool {
        match self {
            LineFunction::Step(g) => g.is_non_increasing(),
            LineFunction::Power(_) => true,
        }
    }
}

/// Sorts the leaf values of `phi` in decreasing order, keeping ties in leaf order.
pub fn decreasing_rearrangement(phi: &StepFunction) -> LineStepFunction {
    let tree = phi.tree();
    let mut values = phi.values().to_vec();
    // stable: equal values keep their leaf order
    values.sort_by(|a, b| b.total_cmp(a));
    let bp = (0..=values.len()).map(|k| tree.leaves_mass(k)).collect();
    LineStepFunction::new(bp, values).expect("sorted leaf values form a valid step function")
}

fn check_exponents(p: f64, q: f64) -> Result<()> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(domain(format!("p must exceed 1, got {p}")));
    }
    if !(1.0..=p).contains(&q) {
        return Err(domain(format!("q must lie in [1, p] = [1, {p}], got {q}")));
    }
    Ok(())
}

/// `∫_0^1 ((1/t)∫_0^t g)^(p-q) g(t)^q dt`.
pub fn hardy_moment(g: &LineFunction, p: f64, q: f64) -> Result<f64> {
    check_exponents(p, q)?;
    match g {
        LineFunction::Power(g) => {
            g.check_integrable(p)?;
            Ok(g.c.powf(p) * (1.0 - g.a).powf(-(p - q)) / (1.0 - g.a * p))
        }
        LineFunction::Step(g) => Ok(step_hardy(g, p - q, q)),
    }
}

/// `∫_0^1 ((1/t)∫_0^t g)^p dt`.
pub fn hardy_power(g: &LineFunction, p: f64) -> Result<f64> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(domain(format!("p must exceed 1, got {p}")));
    }
    match g {
        LineFunction::Power(g) => {
            g.check_integrable(p)?;
            Ok(g.c.powf(p) * (1.0 - g.a).powf(-p) / (1.0 - g.a * p))
        }
        LineFunction::Step(g) => Ok(step_hardy(g, p, 0.0)),
    }
}

/// `∫ (Hg)^u g^v` for a step function, piece by piece.
///
/// On `(t_{i-1}, t_i]` the running average is `v_i + (C - v_i t_{i-1}) / t`
/// with `C = ∫_0^{t_{i-1}} g`.
fn step_hardy(g: &LineStepFunction, u: f64, v: f64) -> f64 {
    let mut prefix = 0.0;
    let mut total = 0.0;
    for (w, &val) in g.breakpoints.windows(2).zip(&g.values) {
        let (lo, hi) = (w[0], w[1]);
        let gv = if v == 0.0 { 1.0 } else { val.powf(v) };
        if gv > 0.0 {
            let shift = prefix - val * lo;
            total += if lo == 0.0 || shift == 0.0 {
                // running average is constant on this piece
                (hi - lo) * (val + shift / hi.max(lo)).powf(u) * gv
            } else {
                let avg = |t: f64| val + shift / t;
                gv * quadrature::adaptive(|t| avg(t).powf(u), lo, hi, HARDY_REL_TOL)
            };
        }
        prefix += val * (hi - lo);
    }
    total
}

/// Places the values of `g` on the leaves in their given order.
pub fn identity_rearrangement(g: &LineStepFunction, tree: &Tree) -> Result<StepFunction> {
    check_pieces(g, tree)?;
    StepFunction::new(tree.clone(), g.values.clone())
}

/// A uniformly random placement of the pieces of `g` on the leaves.
pub fn random_rearrangement(g: &LineStepFunction, tree: &Tree, seed: u64) -> Result<StepFunction> {
    check_pieces(g, tree)?;
    let mut values = g.values.clone();
    values.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    StepFunction::new(tree.clone(), values)
}

fn check_pieces(g: &LineStepFunction, tree: &Tree) -> Result<()> {
    let n = tree.leaf_count();
    if g.pieces() != n {
        return Err(Error::Shape {
            expected: n,
            found: g.pieces(),
        });
    }
    let width = 1.0 / n as f64;
    if g
        .breakpoints
        .windows(2)
        .any(|w| ((w[1] - w[0]) - width).abs() > 1e-12)
    {
        return Err(domain("pieces must have equal width 1/leaves"));
    }
    Ok(())
}
