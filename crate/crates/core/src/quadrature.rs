//! Adaptive Gauss–Legendre quadrature on smooth panels.

use std::f64::consts::PI;
use std::sync::OnceLock;

/// Points per panel.
pub const PANEL_NODES: usize = 32;

/// A Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Computes the `n`-point rule by Newton iteration on `P_n`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            // Tricomi's initial guess for the i-th largest root
            let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    /// Shared 32-point rule.
    pub fn panel() -> &'static GaussLegendre {
        static RULE: OnceLock<GaussLegendre> = OnceLock::new();
        RULE.get_or_init(|| GaussLegendre::new(PANEL_NODES))
    }

    pub fn integrate(&self, f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let s: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum();
        s * half
    }
}

// P_n(x) and P_n'(x) by the three-term recurrence
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Integrates `f` over `[a, b]`, bisecting panels until a panel and its two
/// halves agree to `rel_tol` relative.
pub fn adaptive(f: impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    let rule = GaussLegendre::panel();
    let whole = rule.integrate(&f, a, b);
    refine(&f, rule, a, b, whole, rel_tol, 0)
}

const MAX_DEPTH: u32 = 40;

fn refine(
    f: &impl Fn(f64) -> f64,
    rule: &GaussLegendre,
    a: f64,
    b: f64,
    whole: f64,
    rel_tol: f64,
    depth: u32,
) -> f64 {
    let mid = 0.5 * (a + b);
    let left = rule.integrate(f, a, mid);
    let right = rule.integrate(f, mid, b);
    let halves = left + right;
    let scale = halves.abs().max(f64::MIN_POSITIVE);
    if (halves - whole).abs() <= rel_tol * scale || depth >= MAX_DEPTH || !(mid > a && mid < b) {
        return halves;
    }
    refine(f, rule, a, mid, left, rel_tol, depth + 1)
        + refine(f, rule, mid, b, right, rel_tol, depth + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two_and_nodes_are_symmetric() {
        let rule = GaussLegendre::new(32);
        let s: f64 = rule.weights.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        for i in 0..32 {
            assert!((rule.nodes[i] + rule.nodes[31 - i]).abs() < 1e-15);
        }
        assert!(rule.nodes.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn exact_for_polynomials_up_to_degree_63() {
        let rule = GaussLegendre::new(32);
        let got = rule.integrate(&|x: f64| x.powi(62), -1.0, 1.0);
        assert!((got - 2.0 / 63.0).abs() < 1e-14);
        let three = GaussLegendre::new(3);
        assert!((three.integrate(&|x: f64| x.powi(4), 0.0, 1.0) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn adaptive_handles_oscillation_and_kinks() {
        let got = adaptive(|x| (30.0 * x).sin(), 0.0, 3.0, 1e-12);
        let want = (1.0 - 90f64.cos()) / 30.0;
        assert!((got - want).abs() < 1e-12);
        let got = adaptive(|x: f64| (x - 0.3).abs(), 0.0, 1.0, 1e-12);
        assert!((got - 0.29).abs() < 1e-10);
    }
}
