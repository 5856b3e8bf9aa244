use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::derive_rng;
use crate::bellman::bellman_value;
use crate::error::{domain, Error, Result};
use crate::maximal::maximal_values_into;
use crate::rearrangement::{LineStepFunction, PowerLawFunction};
use crate::tree::Tree;

/// Settings for the rearrangement search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleConfig {
    pub p: f64,
    pub f: f64,
    #[serde(rename = "F")]
    pub big_f: f64,
    pub arity: usize,
    pub depth: usize,
    /// Random rearrangements sampled besides the sorted one.
    pub budget: usize,
    pub seed: u64,
    /// Pairwise swap attempts per unit of budget.
    pub swaps_per_sample: usize,
    /// Retune the power-law exponent so the discretized `∫ phi^p` equals `F`.
    pub recalibrate: bool,
}

impl OracleConfig {
    pub fn new(p: f64, f: f64, big_f: f64, depth: usize, budget: usize, seed: u64) -> Self {
        OracleConfig {
            p,
            f,
            big_f,
            arity: 2,
            depth,
            budget,
            seed,
            swaps_per_sample: 50,
            recalibrate: true,
        }
    }
}

/// The best arrangement found and the bounds it is compared against.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    /// `∫ (M phi)^p` for the best arrangement.
    pub best_value: f64,
    /// `B(f, F)` for the requested moments.
    pub bellman: f64,
    /// `B(f, F_achieved)`, the bound for the moments actually used.
    pub bellman_achieved: f64,
    pub f_achieved: f64,
    #[serde(rename = "F_achieved")]
    pub big_f_achieved: f64,
    /// Exponent parameter of the discretized extremal.
    pub alpha: f64,
    pub leaves: usize,
    /// `identity`, `shuffle:<k>`, with `+swaps` when local moves helped.
    pub best_source: String,
    pub samples: usize,
    pub swaps_tried: usize,
    pub swaps_accepted: usize,
    pub best_min: f64,
    pub best_max: f64,
}

impl OracleResult {
    pub fn ratio(&self) -> f64 {
        self.best_value / self.bellman
    }
}

/// Cell averages of the extremal power law on `n` equal cells, in
/// decreasing order, together with the `α` used.
///
/// With `recalibrate`, `α` is raised above `ω_p(f^p/F)` until the cells
/// carry `∫ g^p = F` (from below); otherwise the discretization loses part
/// of `F` to averaging.
pub fn discretize_extremal(
    p: f64,
    f: f64,
    big_f: f64,
    n: usize,
    recalibrate: bool,
) -> Result<(LineStepFunction, f64)> {
    let point = bellman_value(p, f, big_f)?;
    let cells = |alpha: f64| -> Result<LineStepFunction> {
        Ok(PowerLawFunction::extremal(f, alpha)?.discretize(n))
    };
    if !recalibrate || point.alpha <= 1.0 {
        return Ok((cells(point.alpha)?, point.alpha));
    }
    let excess = |alpha: f64| -> Result<f64> { Ok(cells(alpha)?.moment(p) - big_f) };
    let mut lo = point.alpha;
    if excess(lo)? >= 0.0 {
        return Ok((cells(lo)?, lo));
    }
    let mut hi = 2.0 * lo;
    let mut doublings = 0;
    while excess(hi)? < 0.0 {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 60 {
            return Err(Error::Numerical(format!(
                "cannot reach F = {big_f} with {n} cells"
            )));
        }
    }
    loop {
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            break;
        }
        if excess(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((cells(lo)?, lo))
}

struct Scorer<'a> {
    tree: &'a Tree,
    p: f64,
    buf: Vec<f64>,
}

impl Scorer<'_> {
    fn score(&mut self, values: &[f64]) -> f64 {
        maximal_values_into(self.tree, values, &mut self.buf);
        let leaves = self.tree.level_range(self.tree.depth());
        let p = self.p;
        self.tree.integrate(self.buf[leaves].iter().map(|m| m.powf(p)))
    }
}

/// Searches rearrangements of the discretized extremal for a large
/// `∫ (M phi)^p`: the sorted placement, `budget` random shuffles, then
/// greedy pairwise swaps on the best of them.
pub fn oracle_sup(config: &OracleConfig) -> Result<OracleResult> {
    let OracleConfig { p, f, big_f, .. } = *config;
    let target = bellman_value(p, f, big_f)?;
    let tree = Tree::uniform(config.arity, config.depth)?;
    let n = tree.leaf_count();
    if n < 2 {
        return Err(domain("the oracle needs at least two leaves"));
    }
    let (g, alpha) = discretize_extremal(p, f, big_f, n, config.recalibrate)?;
    let base = g.values().to_vec();
    let f_achieved = tree.integrate(base.iter().copied());
    let big_f_achieved = tree.integrate(base.iter().map(|v| v.powf(p)));
    let bound = bellman_value(p, f_achieved, big_f_achieved.max(f_achieved.powf(p)))?.value;

    let scorer = || Scorer {
        tree: &tree,
        p,
        buf: vec![0.0; tree.node_count()],
    };
    let mut sc = scorer();
    let mut best = (sc.score(&base), base.clone(), "identity".to_string());
    let shuffled: Vec<(f64, usize)> = (0..config.budget)
        .into_par_iter()
        .map_init(scorer, |sc, k| {
            let mut v = base.clone();
            v.shuffle(&mut derive_rng(config.seed, k as u64 + 1));
            (sc.score(&v), k)
        })
        .collect();
    for (value, k) in shuffled {
        if value > best.0 {
            let mut v = base.clone();
            v.shuffle(&mut derive_rng(config.seed, k as u64 + 1));
            best = (value, v, format!("shuffle:{k}"));
        }
    }

    let (mut value, mut phi, mut source) = best;
    let mut rng = derive_rng(config.seed, 0);
    let tries = config.budget.max(1) * config.swaps_per_sample;
    let mut accepted = 0;
    for _ in 0..tries {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if phi[i] == phi[j] {
            continue;
        }
        phi.swap(i, j);
        let v = sc.score(&phi);
        if v > value {
            value = v;
            accepted += 1;
        } else {
            phi.swap(i, j);
        }
    }
    if accepted > 0 {
        source.push_str("+swaps");
    }
    let (best_min, best_max) = phi
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    Ok(OracleResult {
        best_value: value,
        bellman: target.value,
        bellman_achieved: bound,
        f_achieved,
        big_f_achieved,
        alpha,
        leaves: n,
        best_source: source,
        samples: config.budget + 1,
        swaps_tried: tries,
        swaps_accepted: accepted,
        best_min,
        best_max,
    })
}
