use std::collections::BTreeMap;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;

use super::deficit::mixed_rhs;
use super::{constants, derive_rng, random_step_function, Constants, IneqParams, Inequality};
use super::{Integrals, PhiDistribution, VIOLATION_SLACK};
use crate::error::{domain, Result};
use crate::maximal::{maximal_values_into, weak_type_sides};
use crate::tree::Tree;

/// Step functions handled per parallel batch; rows are emitted batch by batch.
const BATCH: usize = 64;

/// The `(p, q, β)` cells a battery visits.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamGrid {
    pub cells: Vec<IneqParams>,
}

impl ParamGrid {
    /// `p ∈ {1.5, 2, 3, 5}`, `q ∈ {1, (1+p)/2, p}`,
    /// `β ∈ {0.1, 1/(2(p-1)), 1/(p-1), 2/(p-1)}`.
    pub fn standard() -> Self {
        Self::for_exponents(&[1.5, 2.0, 3.0, 5.0]).expect("standard grid is valid")
    }

    /// The standard `q` and `β` choices for each given `p`.
    pub fn for_exponents(ps: &[f64]) -> Result<Self> {
        let mut cells = Vec::new();
        for &p in ps {
            let b0 = 1.0 / (p - 1.0);
            for q in [1.0, (1.0 + p) / 2.0, p] {
                for beta in [0.1, 0.5 * b0, b0, 2.0 * b0] {
                    cells.push(IneqParams::new(p, q, beta)?);
                }
            }
        }
        Ok(ParamGrid { cells })
    }

    /// A single cell.
    pub fn single(params: IneqParams) -> Self {
        ParamGrid { cells: vec![params] }
    }
}

/// What a battery run samples and checks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatteryConfig {
    pub grid: ParamGrid,
    /// Random step functions, shared by every cell.
    pub trials: usize,
    pub depths: Vec<usize>,
    pub arities: Vec<usize>,
    pub seed: u64,
    /// Inequalities to check, out of 1.2, 1.7, 1.8 and 1.9.
    pub inequalities: Vec<Inequality>,
    /// Weak-type levels, as multiples of the mean `f` unless `absolute_lambda`.
    pub lambda_factors: Vec<f64>,
    pub absolute_lambda: bool,
    pub distribution: PhiDistribution,
    /// Rescale every sample to this mean.
    pub target_f: Option<f64>,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        BatteryConfig {
            grid: ParamGrid::standard(),
            trials: 10_000,
            depths: (2..=10).collect(),
            arities: vec![2, 3],
            seed: 0,
            inequalities: Inequality::TREE.to_vec(),
            lambda_factors: vec![0.5, 1.0, 1.5, 2.0, 4.0],
            absolute_lambda: false,
            distribution: PhiDistribution::Mixture,
            target_f: None,
        }
    }
}

impl BatteryConfig {
    /// Tree shape used for sample `index`: arities cycle fastest, then depths.
    pub fn shape(&self, index: usize) -> (usize, usize) {
        let a = self.arities[index % self.arities.len()];
        let d = self.depths[(index / self.arities.len()) % self.depths.len()];
        (a, d)
    }

    fn validate(&self) -> Result<()> {
        if self.depths.is_empty() || self.arities.is_empty() {
            return Err(domain("battery needs at least one depth and one arity"));
        }
        if self.inequalities.contains(&Inequality::Hardy) {
            return Err(domain("1.10 is checked on the line, not on random tree functions"));
        }
        if self.lambda_factors.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(domain("lambda factors must be positive"));
        }
        Ok(())
    }
}

/// One CSV row. Parameters an inequality does not depend on are left
/// empty: `q` and `beta` for 1.7, `beta` for 1.8, all three and `F` for 1.2.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatteryRow {
    pub ineq: Inequality,
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub beta: Option<f64>,
    /// Stream index of the sample under the run seed.
    pub seed: u64,
    pub f: f64,
    #[serde(rename = "F")]
    pub big_f: Option<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub deficit: f64,
    pub lambda: Option<f64>,
}

impl BatteryRow {
    pub const CSV_HEADER: &'static str = "ineq,p,q,beta,seed,f,F,lhs,rhs,deficit,lambda";

    /// `deficit / max(1, |rhs|)`.
    pub fn scaled_deficit(&self) -> f64 {
        self.deficit / self.rhs.abs().max(1.0)
    }

    pub fn is_violation(&self) -> bool {
        self.scaled_deficit() < -VIOLATION_SLACK
    }

    /// Writes the row with every float at 17 significant digits.
    pub fn write_csv(&self, w: &mut impl Write) -> io::Result<()> {
        fn opt(v: Option<f64>) -> String {
            v.map(|x| format!("{x:.16e}")).unwrap_or_default()
        }
        writeln!(
            w,
            "{},{},{},{},{},{:.16e},{},{:.16e},{:.16e},{:.16e},{}",
            self.ineq,
            opt(self.p),
            opt(self.q),
            opt(self.beta),
            self.seed,
            self.f,
            opt(self.big_f),
            self.lhs,
            self.rhs,
            self.deficit,
            opt(self.lambda),
        )
    }
}

/// Identifies the worst row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArgMin {
    pub ineq: Inequality,
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub beta: Option<f64>,
    pub seed: u64,
    pub lambda: Option<f64>,
}

/// Per-inequality tallies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IneqTally {
    pub rows: usize,
    pub min_deficit: f64,
    pub violations: usize,
}

/// Summary of a run. Deficits are scaled by `max(1, |rhs|)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatterySummary {
    pub rows: usize,
    pub min_deficit: f64,
    pub argmin: Option<ArgMin>,
    pub violations: usize,
    pub by_inequality: BTreeMap<String, IneqTally>,
}

impl BatterySummary {
    fn new() -> Self {
        BatterySummary {
            rows: 0,
            min_deficit: f64::INFINITY,
            argmin: None,
            violations: 0,
            by_inequality: BTreeMap::new(),
        }
    }

    fn record(&mut self, row: &BatteryRow) {
        let d = row.scaled_deficit();
        let bad = row.is_violation() || d.is_nan();
        self.rows += 1;
        self.violations += bad as usize;
        if d < self.min_deficit || d.is_nan() && self.argmin.is_none() {
            self.min_deficit = d;
            self.argmin = Some(ArgMin {
                ineq: row.ineq,
                p: row.p,
                q: row.q,
                beta: row.beta,
                seed: row.seed,
                lambda: row.lambda,
            });
        }
        let t = self.by_inequality.entry(row.ineq.to_string()).or_insert(IneqTally {
            rows: 0,
            min_deficit: f64::INFINITY,
            violations: 0,
        });
        t.rows += 1;
        t.min_deficit = t.min_deficit.min(d);
        t.violations += bad as usize;
    }
}

/// Runs the battery, handing rows to `sink` in a fixed order: by sample,
/// then weak-type levels, then grid cells. Within a cell, 1.7 is emitted
/// for the first cell with its `p`, 1.8 for the first with its `(p, q)`.
///
/// Samples are evaluated in parallel; the output does not depend on the
/// number of threads.
pub fn run_battery(
    config: &BatteryConfig,
    mut sink: impl FnMut(&BatteryRow) -> io::Result<()>,
) -> Result<BatterySummary> {
    config.validate()?;
    let mut trees = BTreeMap::new();
    for &a in &config.arities {
        for &d in &config.depths {
            trees.insert((a, d), Tree::uniform(a, d)?);
        }
    }
    let cells: Vec<(IneqParams, Constants)> = config
        .grid
        .cells
        .iter()
        .map(|c| Ok((*c, constants(c)?)))
        .collect::<Result<_>>()?;

    let mut summary = BatterySummary::new();
    for start in (0..config.trials).step_by(BATCH) {
        let end = (start + BATCH).min(config.trials);
        let batches: Vec<Result<Vec<BatteryRow>>> = (start..end)
            .into_par_iter()
            .map(|i| sample_rows(config, &trees, &cells, i))
            .collect();
        for rows in batches {
            for row in rows? {
                summary.record(&row);
                sink(&row).map_err(|e| domain(format!("writing battery rows: {e}")))?;
            }
        }
    }
    Ok(summary)
}

/// Runs the battery and writes header plus rows as CSV.
pub fn write_battery_csv(config: &BatteryConfig, mut w: impl Write) -> Result<BatterySummary> {
    writeln!(w, "{}", BatteryRow::CSV_HEADER).map_err(|e| domain(e.to_string()))?;
    let summary = run_battery(config, |row| row.write_csv(&mut w))?;
    w.flush().map_err(|e| domain(e.to_string()))?;
    Ok(summary)
}

fn sample_rows(
    config: &BatteryConfig,
    trees: &BTreeMap<(usize, usize), Tree>,
    cells: &[(IneqParams, Constants)],
    index: usize,
) -> Result<Vec<BatteryRow>> {
    let (a, d) = config.shape(index);
    let tree = &trees[&(a, d)];
    let seed = index as u64;
    let mut rng = derive_rng(config.seed, seed);
    let phi = random_step_function(tree, config.distribution, config.target_f, &mut rng)?;
    let phi = phi.values();

    let mut buf = vec![0.0; tree.node_count()];
    maximal_values_into(tree, phi, &mut buf);
    let m = &buf[tree.level_range(tree.depth())];
    let f = tree.integrate(phi.iter().copied());

    let wanted = |i: Inequality| config.inequalities.contains(&i);
    let mut rows = Vec::new();
    for &c in config.lambda_factors.iter().filter(|_| wanted(Inequality::WeakType)) {
        let lambda = if config.absolute_lambda { c } else { c * f };
        let (lhs, rhs) = weak_type_sides(tree, phi, m, lambda);
        rows.push(BatteryRow {
            ineq: Inequality::WeakType,
            p: None,
            q: None,
            beta: None,
            seed,
            f,
            big_f: None,
            lhs,
            rhs,
            deficit: rhs - lhs,
            lambda: Some(lambda),
        });
    }
    let mixed = [Inequality::LinearMixed, Inequality::QMixed, Inequality::BetaFamily];
    if !mixed.iter().any(|&i| wanted(i)) {
        return Ok(rows);
    }

    // powers through logarithms: one exp per leaf and integral
    let ln_phi: Vec<f64> = phi.iter().map(|v| v.ln()).collect();
    let ln_m: Vec<f64> = m.iter().map(|v| v.ln()).collect();
    let power = |x: f64, y: f64| -> f64 {
        tree.integrate(ln_phi.iter().zip(&ln_m).map(|(lp, lm)| {
            let e = if x == 0.0 { y * lm } else { x * lp + y * lm };
            e.exp()
        }))
    };
    let mut per_p: Vec<(f64, f64, f64, f64)> = Vec::new();
    let mut per_pq: Vec<((f64, f64), f64)> = Vec::new();
    let (mut seen_p, mut seen_pq) = (Vec::new(), Vec::new());
    for (params, consts) in cells {
        let IneqParams { p, q, beta, .. } = *params;
        let (big_f, j0, j1) = match per_p.iter().find(|e| e.0 == p) {
            Some(&(_, a, b, c)) => (a, b, c),
            None => {
                let e = (p, power(p, 0.0), power(0.0, p), power(1.0, p - 1.0));
                per_p.push(e);
                (e.1, e.2, e.3)
            }
        };
        let jq = if q == 1.0 {
            j1
        } else if q == p {
            big_f
        } else {
            match per_pq.iter().find(|e| e.0 == (p, q)) {
                Some(e) => e.1,
                None => {
                    let v = power(q, p - q);
                    per_pq.push(((p, q), v));
                    v
                }
            }
        };
        let ints = Integrals { f, big_f, j0, j1, jq };
        let first_p = !seen_p.contains(&p);
        let first_pq = !seen_pq.contains(&(p, q));
        seen_p.push(p);
        seen_pq.push((p, q));
        for ineq in mixed {
            let (q, beta) = match ineq {
                Inequality::LinearMixed if first_p => (None, None),
                Inequality::QMixed if first_pq => (Some(q), None),
                Inequality::BetaFamily => (Some(q), Some(beta)),
                _ => continue,
            };
            if !wanted(ineq) {
                continue;
            }
            let rhs = mixed_rhs(ineq, params, Some(consts), &ints)?;
            rows.push(BatteryRow {
                ineq,
                p: Some(p),
                q,
                beta,
                seed,
                f,
                big_f: Some(big_f),
                lhs: j0,
                rhs,
                deficit: rhs - j0,
                lambda: None,
            });
        }
    }
    Ok(rows)
}
