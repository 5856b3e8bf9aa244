//! The tree maximal operator and its linearization.
//!
//! For a step function `phi`, `M phi(x)` is the largest average of `phi`
//! over the nodes containing `x`. Each leaf is assigned the *largest* node
//! attaining that maximum; grouping leaves by that node gives the sets
//! `A(phi, I)` and the family `S_phi`, which turn `M phi` into the finite
//! sum `Σ_{I ∈ S_phi} y_I · χ_{A(phi, I)}` with `y_I = Av_I(phi)`.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{domain, Result};
use crate::tree::{mean_within, NodeId, StepFunction, Tree};

/// Averages `Av_I(phi)` for every node, indexed by node id.
pub fn averages(phi: &StepFunction) -> Vec<f64> {
    let tree = phi.tree();
    let mut avg = vec![0.0; tree.node_count()];
    let leaves = tree.level_range(tree.depth());
    avg[leaves].copy_from_slice(phi.values());
    let a = tree.arity();
    for level in (0..tree.depth()).rev() {
        for id in tree.level_range(level) {
            let first = a * id + 1;
            avg[id] = mean_within(&avg[first..first + a]);
        }
    }
    avg
}

/// `M phi` on the leaves together with the node realizing it.
#[derive(Debug, Clone, PartialEq)]
pub struct MaximalResult {
    pub phi: StepFunction,
    pub m_phi: StepFunction,
    /// Per leaf, the largest node whose average equals `M phi` there.
    pub attaining_node: Vec<NodeId>,
    /// `Av_I(phi)` for every node.
    pub averages: Vec<f64>,
}

/// Evaluates `M phi` with one root-to-leaf prefix-max sweep.
///
/// Ties go to the ancestor closest to the root: a deeper node only takes
/// over when its average is strictly larger.
pub fn maximal_function(phi: &StepFunction) -> MaximalResult {
    let tree = phi.tree();
    let avg = averages(phi);
    let (best, arg) = prefix_max(tree, &avg);
    let leaves = tree.level_range(tree.depth());
    let m_values = best[leaves.clone()].to_vec();
    let attaining = arg[leaves].iter().map(|&i| NodeId(i)).collect();
    MaximalResult {
        m_phi: StepFunction::new(tree.clone(), m_values)
            .expect("maximal function of a valid step function is valid"),
        phi: phi.clone(),
        attaining_node: attaining,
        averages: avg,
    }
}

/// Values of `M phi` on the leaves only, skipping the bookkeeping.
pub fn maximal_values(phi: &StepFunction) -> Vec<f64> {
    let tree = phi.tree();
    let mut buf = vec![0.0; tree.node_count()];
    maximal_values_into(tree, phi.values(), &mut buf);
    buf.drain(..tree.level_range(tree.depth()).start);
    buf
}

/// Writes node averages into `buf`, then overwrites them with the running
/// max from the root. Afterwards the leaf slice of `buf` holds `M phi`.
pub(crate) fn maximal_values_into(tree: &Tree, leaf_values: &[f64], buf: &mut [f64]) {
    let leaves = tree.level_range(tree.depth());
    buf[leaves].copy_from_slice(leaf_values);
    let a = tree.arity();
    for level in (0..tree.depth()).rev() {
        for id in tree.level_range(level) {
            let first = a * id + 1;
            buf[id] = mean_within(&buf[first..first + a]);
        }
    }
    for level in 1..=tree.depth() {
        for id in tree.level_range(level) {
            let up = buf[(id - 1) / a];
            if up > buf[id] {
                buf[id] = up;
            }
        }
    }
}

fn prefix_max(tree: &Tree, avg: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut best = avg.to_vec();
    let mut arg: Vec<usize> = (0..avg.len()).collect();
    let a = tree.arity();
    for level in 1..=tree.depth() {
        for id in tree.level_range(level) {
            let parent = (id - 1) / a;
            if best[parent] >= avg[id] {
                best[id] = best[parent];
                arg[id] = arg[parent];
            }
        }
    }
    (best, arg)
}

/// The decomposition of `M phi` over the family `S_phi`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    /// Members of `S_phi` in increasing id order; always starts with the root.
    pub s_phi: Vec<NodeId>,
    /// `a_I = μ(A(phi, I))`.
    pub a_mass: BTreeMap<NodeId, f64>,
    /// `y_I = Av_I(phi)`.
    pub y_avg: BTreeMap<NodeId, f64>,
    /// `I -> I*`, the smallest member of `S_phi` strictly containing `I`.
    pub star: BTreeMap<NodeId, NodeId>,
}

/// Builds `S_phi`, the masses `a_I`, the averages `y_I` and the map `I -> I*`.
pub fn linearize(phi: &StepFunction) -> Linearization {
    linearize_result(&maximal_function(phi))
}

pub fn linearize_result(res: &MaximalResult) -> Linearization {
    let tree = res.phi.tree();
    let mut counts: BTreeMap<NodeId, usize> = BTreeMap::new();
    counts.insert(NodeId::ROOT, 0);
    for &node in &res.attaining_node {
        *counts.entry(node).or_default() += 1;
    }
    let s_phi: Vec<NodeId> = counts.keys().copied().collect();
    let a_mass = counts
        .iter()
        .map(|(&id, &n)| (id, tree.leaves_mass(n)))
        .collect();
    let y_avg = s_phi.iter().map(|&id| (id, res.averages[id.0])).collect();
    let star = s_phi
        .iter()
        .filter(|&&id| id != NodeId::ROOT)
        .map(|&id| {
            let mut up = tree.parent(id).expect("non-root has a parent");
            while !counts.contains_key(&up) {
                up = tree.parent(up).expect("root is always in S_phi");
            }
            (id, up)
        })
        .collect();
    Linearization {
        s_phi,
        a_mass,
        y_avg,
        star,
    }
}

impl Linearization {
    /// `Σ_{I ∈ S_phi} a_I y_I^p`, which equals `∫ (M phi)^p`.
    pub fn power_sum(&self, p: f64) -> f64 {
        self.s_phi
            .iter()
            .map(|id| self.a_mass[id] * self.y_avg[id].powf(p))
            .sum()
    }

    /// Rebuilds `M phi` on the leaves from the linearization.
    pub fn reconstruct(&self, tree: &Tree) -> Vec<f64> {
        let mut out = vec![f64::NAN; tree.leaf_count()];
        // deeper members overwrite shallower ones: A(phi, I) excludes the
        // starred children of I
        for id in &self.s_phi {
            let y = self.y_avg[id];
            out[tree.leaf_span(*id)].iter_mut().for_each(|v| *v = y);
        }
        out
    }

    /// `μ(I) - Σ_{J ∈ S_phi, J* = I} μ(J)` for `I` in `S_phi`.
    pub fn mass_from_children(&self, tree: &Tree, id: NodeId) -> f64 {
        let covered: f64 = self
            .star
            .iter()
            .filter(|(_, &up)| up == id)
            .map(|(&j, _)| tree.measure(j))
            .sum();
        tree.measure(id) - covered
    }

    pub fn dump(&self) -> LinearizationDump {
        LinearizationDump {
            s_phi: self.s_phi.iter().map(|id| id.0).collect(),
            a: self.s_phi.iter().map(|id| self.a_mass[id]).collect(),
            y: self.s_phi.iter().map(|id| self.y_avg[id]).collect(),
            star: self
                .star
                .iter()
                .map(|(k, v)| (k.0.to_string(), v.0))
                .collect(),
        }
    }
}

/// JSON shape of a linearization: `{s_phi, a, y, star}`.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct LinearizationDump {
    pub s_phi: Vec<usize>,
    pub a: Vec<f64>,
    pub y: Vec<f64>,
    pub star: BTreeMap<String, usize>,
}

/// `(1/λ) ∫_{M phi > λ} phi − μ({M phi > λ})`; nonnegative by the weak-type bound.
pub fn weak_type_deficit(phi: &StepFunction, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(domain(format!("lambda must be positive, got {lambda}")));
    }
    let m = maximal_values(phi);
    let (lhs, rhs) = weak_type_sides(phi.tree(), phi.values(), &m, lambda);
    Ok(rhs - lhs)
}

/// `(μ({M phi > λ}), (1/λ) ∫_{M phi > λ} phi)`.
pub(crate) fn weak_type_sides(tree: &Tree, phi: &[f64], m: &[f64], lambda: f64) -> (f64, f64) {
    let mut count = 0usize;
    let mut restricted = Vec::with_capacity(phi.len());
    for (&v, &mv) in phi.iter().zip(m) {
        if mv > lambda {
            count += 1;
            restricted.push(v);
        } else {
            restricted.push(0.0);
        }
    }
    (tree.leaves_mass(count), tree.integrate(restricted) / lambda)
}

/// Level-`m` approximation: every leaf takes the average of its level-`m` ancestor.
pub fn coarsen(phi: &StepFunction, level: usize) -> Result<StepFunction> {
    let tree = phi.tree();
    if level > tree.depth() {
        return Err(domain(format!(
            "level {level} is below the leaves (depth {})",
            tree.depth()
        )));
    }
    let avg = averages(phi);
    let block = tree.arity().pow((tree.depth() - level) as u32);
    let values = tree
        .level_range(level)
        .flat_map(|id| std::iter::repeat_n(avg[id], block))
        .collect();
    StepFunction::new(tree.clone(), values)
}
