//! Finite uniform measure trees and nonnegative step functions on their leaves.
//!
//! A tree of arity `a` and depth `d` partitions a probability space into
//! `a^d` leaves of equal mass. Every node `I` at level `m` has measure
//! `a^(-m)` and exactly `a` children, which are disjoint and cover `I`.
//!
//! Nodes are stored implicitly in heap order: the root is id 0 and the
//! children of node `i` are `a*i + 1 ..= a*i + a`. Level `m` therefore
//! occupies a contiguous id range, and leaves appear left to right in the
//! canonical depth-first order.

use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Default cap on the number of leaves (`arity^depth`).
pub const DEFAULT_LEAF_BUDGET: usize = 1 << 24;

/// Index of a node in heap order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);

    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A read-only view of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub level: usize,
    pub measure: f64,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
}

/// A uniform `arity`-ary tree of fixed depth over a probability space.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    arity: usize,
    depth: usize,
    // first node id of each level, plus one trailing entry = node count
    level_start: Vec<usize>,
    level_measure: Vec<f64>,
}

impl Tree {
    /// Builds the uniform tree, rejecting more than [`DEFAULT_LEAF_BUDGET`] leaves.
    pub fn uniform(arity: usize, depth: usize) -> Result<Self> {
        Self::uniform_with_budget(arity, depth, DEFAULT_LEAF_BUDGET)
    }

    pub fn uniform_with_budget(arity: usize, depth: usize, leaf_budget: usize) -> Result<Self> {
        if arity < 2 {
            return Err(domain(format!("arity must be at least 2, got {arity}")));
        }
        let too_big = || Error::Size {
            arity,
            depth,
            budget: leaf_budget,
        };
        let mut width = 1usize;
        let mut level_start = Vec::with_capacity(depth + 2);
        let mut start = 0usize;
        for level in 0..=depth {
            if level > 0 {
                width = width.checked_mul(arity).ok_or_else(too_big)?;
            }
            level_start.push(start);
            start = start.checked_add(width).ok_or_else(too_big)?;
        }
        if width > leaf_budget {
            return Err(too_big());
        }
        level_start.push(start);
        let level_measure = (0..=depth)
            .map(|m| 1.0 / (arity as f64).powi(m as i32))
            .collect();
        Ok(Tree {
            arity,
            depth,
            level_start,
            level_measure,
        })
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn node_count(&self) -> usize {
        self.level_start[self.depth + 1]
    }

    pub fn leaf_count(&self) -> usize {
        self.level_width(self.depth)
    }

    pub fn level_width(&self, level: usize) -> usize {
        self.level_start[level + 1] - self.level_start[level]
    }

    /// Node ids at `level`, left to right.
    pub fn level_range(&self, level: usize) -> std::ops::Range<usize> {
        self.level_start[level]..self.level_start[level + 1]
    }

    pub fn level_measure(&self, level: usize) -> f64 {
        self.level_measure[level]
    }

    pub fn leaf_measure(&self) -> f64 {
        self.level_measure[self.depth]
    }

    /// Measure of a union of `count` leaves.
    ///
    /// All set measures in the crate go through this so that equal leaf
    /// counts always give bit-identical masses.
    pub fn leaves_mass(&self, count: usize) -> f64 {
        count as f64 / self.leaf_count() as f64
    }

    pub fn level_of(&self, id: NodeId) -> usize {
        debug_assert!(id.0 < self.node_count());
        // levels are few; a linear scan beats a log
        self.level_start[1..]
            .iter()
            .position(|&end| id.0 < end)
            .expect("node id out of range")
    }

    pub fn measure(&self, id: NodeId) -> f64 {
        self.level_measure[self.level_of(id)]
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        (id.0 > 0).then(|| NodeId((id.0 - 1) / self.arity))
    }

    pub fn first_child(&self, id: NodeId) -> Option<NodeId> {
        (self.level_of(id) < self.depth).then(|| NodeId(self.arity * id.0 + 1))
    }

    pub fn children(&self, id: NodeId) -> Vec<NodeId> {
        match self.first_child(id) {
            Some(c) => (c.0..c.0 + self.arity).map(NodeId).collect(),
            None => Vec::new(),
        }
    }

    pub fn node(&self, id: NodeId) -> Node {
        Node {
            id,
            level: self.level_of(id),
            measure: self.measure(id),
            parent: self.parent(id),
            children: self.children(id),
        }
    }

    /// Node id of the `i`-th leaf in canonical order.
    pub fn leaf_id(&self, i: usize) -> NodeId {
        NodeId(self.level_start[self.depth] + i)
    }

    /// Canonical position of a leaf node, if `id` is a leaf.
    pub fn leaf_index(&self, id: NodeId) -> Option<usize> {
        let range = self.level_range(self.depth);
        range.contains(&id.0).then(|| id.0 - range.start)
    }

    /// Range of leaf positions lying under `id`.
    pub fn leaf_span(&self, id: NodeId) -> std::ops::Range<usize> {
        let level = self.level_of(id);
        let offset = id.0 - self.level_start[level];
        let width = self.arity.pow((self.depth - level) as u32);
        offset * width..(offset + 1) * width
    }

    /// Whether `outer` contains `inner` (a node contains itself).
    pub fn contains(&self, outer: NodeId, inner: NodeId) -> bool {
        let outer_level = self.level_of(outer);
        let mut cur = inner;
        let mut level = self.level_of(inner);
        while level > outer_level {
            cur = NodeId((cur.0 - 1) / self.arity);
            level -= 1;
        }
        cur == outer
    }

    /// Integral over X of a function given by its leaf values.
    ///
    /// Sums are reduced level by level (`arity` terms at a time), the same
    /// arithmetic used for node averages, so the integral of `phi` equals the
    /// root average of `phi` bit for bit.
    pub fn integrate(&self, leaf_values: impl IntoIterator<Item = f64>) -> f64 {
        let mut buf: Vec<f64> = leaf_values.into_iter().collect();
        assert_eq!(buf.len(), self.leaf_count(), "one value per leaf");
        let a = self.arity;
        let mut len = buf.len();
        while len > 1 {
            let next = len / a;
            for i in 0..next {
                let chunk = &buf[i * a..(i + 1) * a];
                buf[i] = mean_within(chunk);
            }
            len = next;
        }
        buf[0]
    }
}

/// Mean of a small group of children values, clamped into their range.
///
/// Clamping keeps the average of equal values exactly equal to them even
/// when `arity` is not a power of two.
pub(crate) fn mean_within(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        sum += v;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (sum / values.len() as f64).clamp(lo, hi)
}

/// Builds a uniform tree. Thin wrapper over [`Tree::uniform`].
pub fn build_uniform_tree(arity: usize, depth: usize) -> Result<Tree> {
    Tree::uniform(arity, depth)
}

/// A nonnegative function constant on each leaf of a tree.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    tree: Tree,
    values: Vec<f64>,
}

impl StepFunction {
    pub fn new(tree: Tree, values: Vec<f64>) -> Result<Self> {
        if values.len() != tree.leaf_count() {
            return Err(Error::Shape {
                expected: tree.leaf_count(),
                found: values.len(),
            });
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(domain(format!("leaf {i} has invalid value {v}")));
        }
        Ok(StepFunction { tree, values })
    }

    pub fn constant(tree: Tree, c: f64) -> Result<Self> {
        let n = tree.leaf_count();
        Self::new(tree, vec![c; n])
    }

    pub fn tree(&self) -> &Tree {
        &self.tree
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// `∫ phi^r dμ` as an exact finite sum over leaves.
    pub fn moment(&self, r: f64) -> f64 {
        moment(self, r)
    }

    /// Returns `c * phi`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.tree.clone(), self.values.iter().map(|v| c * v).collect())
    }

    /// Parses the CSV form: a line `<arity>,<depth>` (optionally preceded by
    /// the literal `arity,depth`), then one leaf value per line. Blank lines
    /// and `#` comments are skipped.
    pub fn read_csv(reader: impl BufRead) -> Result<Self> {
        let mut lines = reader
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| {
                l.as_ref()
                    .map_or(true, |s| !s.trim().is_empty() && !s.trim_start().starts_with('#'))
            });
        let missing = || Error::Parse {
            line: 1,
            msg: "missing `arity,depth` header".into(),
        };
        let (mut line_no, header) = lines.next().ok_or_else(missing)?;
        let mut header = header.map_err(|e| io_parse(line_no, e))?;
        if header.replace(' ', "").eq_ignore_ascii_case("arity,depth") {
            let (n, next) = lines.next().ok_or_else(missing)?;
            line_no = n;
            header = next.map_err(|e| io_parse(n, e))?;
        }
        let mut fields = header.split(',').map(str::trim);
        let mut field = |name: &str| -> Result<usize> {
            fields
                .next()
                .ok_or_else(|| Error::Parse {
                    line: line_no,
                    msg: format!("header is missing `{name}`"),
                })?
                .parse()
                .map_err(|e| Error::Parse {
                    line: line_no,
                    msg: format!("`{name}`: {e}"),
                })
        };
        let arity = field("arity")?;
        let depth = field("depth")?;
        let tree = Tree::uniform(arity, depth)?;
        let mut values = Vec::with_capacity(tree.leaf_count());
        for (line_no, line) in lines {
            let line = line.map_err(|e| io_parse(line_no, e))?;
            let v: f64 = line.trim().parse().map_err(|e| Error::Parse {
                line: line_no,
                msg: format!("leaf value `{}`: {e}", line.trim()),
            })?;
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("leaf value {v} is not a nonnegative number"),
                });
            }
            values.push(v);
        }
        Self::new(tree, values)
    }

    pub fn write_csv(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        writeln!(w, "{},{}", self.tree.arity, self.tree.depth)?;
        for v in &self.values {
            writeln!(w, "{v:.16e}")?;
        }
        Ok(())
    }
}

fn io_parse(line: usize, e: std::io::Error) -> Error {
    Error::Parse {
        line,
        msg: e.to_string(),
    }
}

/// `∫_X phi^r dμ`, the measure-weighted sum of leaf values raised to `r`.
pub fn moment(phi: &StepFunction, r: f64) -> f64 {
    if r == 1.0 {
        phi.tree.integrate(phi.values.iter().copied())
    } else {
        phi.tree.integrate(phi.values.iter().map(|v| v.powf(r)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_depth_two() {
        let t = Tree::uniform(2, 2).unwrap();
        assert_eq!(t.node_count(), 7);
        assert_eq!(t.leaf_count(), 4);
        assert_eq!(t.leaf_measure(), 0.25);
        assert_eq!(t.children(NodeId::ROOT), vec![NodeId(1), NodeId(2)]);
        assert_eq!(t.parent(NodeId(6)), Some(NodeId(2)));
        assert_eq!(t.leaf_id(0), NodeId(3));
        assert_eq!(t.leaf_span(NodeId(2)), 2..4);
        assert!(t.contains(NodeId(1), NodeId(4)));
        assert!(!t.contains(NodeId(1), NodeId(5)));
    }

    #[test]
    fn degenerate_tree() {
        let t = Tree::uniform(2, 0).unwrap();
        assert_eq!(t.node_count(), 1);
        let root = t.node(NodeId::ROOT);
        assert_eq!(root.measure, 1.0);
        assert!(root.children.is_empty());
        assert!(root.parent.is_none());
    }

    #[test]
    fn ternary_depth_two() {
        let t = Tree::uniform(3, 2).unwrap();
        assert_eq!(t.node_count(), 13);
        assert_eq!(t.leaf_count(), 9);
        assert!((t.leaf_measure() - 1.0 / 9.0).abs() < 1e-16);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(matches!(Tree::uniform(1, 3), Err(Error::Domain(_))));
        assert!(matches!(Tree::uniform(2, 25), Err(Error::Size { .. })));
        assert!(Tree::uniform(2, 24).is_ok());
        assert!(matches!(Tree::uniform(3, 400), Err(Error::Size { .. })));
    }

    #[test]
    fn children_measures_sum_to_parent() {
        for (arity, depth, tol) in [(2, 12, 1e-15), (3, 8, 1e-12), (5, 5, 1e-12)] {
            let t = Tree::uniform(arity, depth).unwrap();
            for id in 0..t.level_start[depth] {
                let id = NodeId(id);
                let s: f64 = t.children(id).iter().map(|&c| t.measure(c)).sum();
                assert!((s - t.measure(id)).abs() <= tol, "{arity} {depth} {id}");
                assert!(t.measure(id) > 0.0);
            }
            assert_eq!(t.measure(NodeId::ROOT), 1.0);
        }
    }

    #[test]
    fn moments_of_golden_function() {
        let t = Tree::uniform(2, 2).unwrap();
        let phi = StepFunction::new(t.clone(), vec![4.0, 2.0, 1.0, 1.0]).unwrap();
        assert_eq!(phi.moment(1.0), 2.0);
        assert_eq!(phi.moment(2.0), 5.5);
        let c = StepFunction::constant(t, 1.7).unwrap();
        assert!((c.moment(2.5) - 1.7f64.powf(2.5)).abs() < 1e-15);
    }

    #[test]
    fn rejects_negative_or_misshapen_values() {
        let t = Tree::uniform(2, 1).unwrap();
        assert!(StepFunction::new(t.clone(), vec![1.0, -1.0]).is_err());
        assert!(StepFunction::new(t.clone(), vec![1.0, f64::NAN]).is_err());
        assert!(matches!(
            StepFunction::new(t, vec![1.0]),
            Err(Error::Shape { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let src = "2,2\n4\n2\n1\n1\n";
        let phi = StepFunction::read_csv(src.as_bytes()).unwrap();
        assert_eq!(phi.values(), &[4.0, 2.0, 1.0, 1.0]);
        let mut out = Vec::new();
        phi.write_csv(&mut out).unwrap();
        assert_eq!(StepFunction::read_csv(out.as_slice()).unwrap(), phi);

        let err = StepFunction::read_csv("2,1\n1\n-3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = StepFunction::read_csv("2,x\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
        assert!(matches!(
            StepFunction::read_csv("2,1\n1\n".as_bytes()),
            Err(Error::Shape { .. })
        ));
    }
}
