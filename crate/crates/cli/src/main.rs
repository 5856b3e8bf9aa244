//! `maxtree`: command-line access to the maximal operator, the Bellman
//! function and the inequality checks.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use maxtree_core::lab::{
    self, extremizer_sweep, oracle_sup, sharpness_g, write_battery_csv, BatteryConfig, Family,
    OracleConfig, ParamGrid, PhiDistribution,
};
use maxtree_core::{
    bellman_value, corollary2_bound, decreasing_rearrangement, hardy_power, linearize_result,
    maximal_function, maximal_values, minimize_corollary2, moment, random_rearrangement,
    IneqParams, Inequality, LineFunction, LineStepFunction, PowerLawFunction, StepFunction, Tree,
};

/// Exit status when a checked inequality or bound fails.
const VIOLATION: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "maxtree", version, about = "Maximal operator on regular trees, Bellman function and sharp inequality checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// M phi and its linearization for a step function read from a file.
    Maximal(MaximalArgs),
    /// Closed-form Bellman value and the best bound of the β family.
    Bellman(BellmanArgs),
    /// Deficits of 1.2, 1.7, 1.8, 1.9 on random or given inputs, or 1.10 on a given g.
    Verify(VerifyArgs),
    /// Extremizer sweeps and the G(α) table.
    Sharpness(SharpnessArgs),
    /// Rearrangement search for a large ∫(Mφ)^p at fixed (f, F).
    Oracle(OracleArgs),
    /// Random rearrangements of φ compared with the one-dimensional Hardy value.
    Symmetrize(SymmetrizeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug, Serialize)]
struct Output {
    /// Write to this file instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args, Debug, Serialize)]
struct MaximalArgs {
    /// Step function CSV: `arity,depth` header, then one value per leaf.
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    out: Output,
}

#[derive(Args, Debug, Serialize)]
struct BellmanArgs {
    #[arg(long)]
    p: f64,
    #[arg(long)]
    f: f64,
    #[arg(long = "F")]
    #[serde(rename = "F")]
    big_f: f64,
    /// Also report the β-family bound at this β.
    #[arg(long)]
    beta: Option<f64>,
    #[command(flatten)]
    out: Output,
}

#[derive(Args, Debug, Serialize)]
struct VerifyArgs {
    /// 1.2, 1.7, 1.8, 1.9, 1.10 or `all` (every tree inequality).
    #[arg(long, default_value = "all")]
    ineq: String,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Rescale random samples to this mean.
    #[arg(long)]
    f: Option<f64>,
    /// Weak-type levels (absolute); default 0.5, 1, 1.5, 2, 4 times the mean.
    #[arg(long, value_delimiter = ',')]
    lambda: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "2,3")]
    arity: Vec<usize>,
    /// A depth or an inclusive range such as `2..10`.
    #[arg(long, default_value = "2..10")]
    depth: String,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Check one function instead of random samples: a tree step function
    /// CSV, or for 1.10 a line CSV (`t,value`) or `powerlaw:f=..,alpha=..`.
    #[arg(long)]
    input: Option<String>,
    /// Also write the summary JSON here.
    #[arg(long)]
    summary: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args, Debug, Serialize)]
struct SharpnessArgs {
    #[arg(long)]
    p: f64,
    #[arg(long, default_value_t = 1.0)]
    q: f64,
    /// Defaults to 1/(p-1).
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    f: f64,
    /// `g_alpha` or `g_beta`; without it, tabulate G(α).
    #[arg(long)]
    family: Option<String>,
    /// Grid values (α or β); defaults depend on the family.
    #[arg(long, value_delimiter = ',')]
    grid: Vec<f64>,
    /// Evaluate G at these α only.
    #[arg(long, value_delimiter = ',')]
    alpha: Vec<f64>,
    #[command(flatten)]
    out: Output,
}

#[derive(Args, Debug, Serialize)]
struct OracleArgs {
    #[arg(long)]
    p: f64,
    #[arg(long)]
    f: f64,
    #[arg(long = "F")]
    #[serde(rename = "F")]
    big_f: f64,
    #[arg(long, default_value_t = 2)]
    arity: usize,
    #[arg(long, default_value_t = 12)]
    depth: usize,
    #[arg(long, default_value_t = 500)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep the plain discretization, which loses part of F.
    #[arg(long)]
    no_recalibrate: bool,
    #[command(flatten)]
    out: Output,
}

#[derive(Args, Debug, Serialize)]
struct SymmetrizeArgs {
    #[arg(long)]
    p: f64,
    /// Tree step function CSV whose values are rearranged.
    #[arg(long, conflicts_with_all = ["f", "big_f"])]
    input: Option<PathBuf>,
    /// With `--F`: use the discretized extremal for these moments instead.
    #[arg(long, requires = "big_f")]
    f: Option<f64>,
    #[arg(long = "F", requires = "f")]
    #[serde(rename = "F")]
    big_f: Option<f64>,
    #[arg(long, default_value_t = 2)]
    arity: usize,
    #[arg(long, default_value_t = 10)]
    depth: usize,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: Output,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = init_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(VIOLATION),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn init_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("MAXTREE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .with_context(|| format!("MAXTREE_THREADS must be a positive integer, got `{raw}`"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

/// Returns `Ok(false)` when an invariant check failed.
fn run(cmd: Command) -> anyhow::Result<bool> {
    match cmd {
        Command::Maximal(a) => maximal(a),
        Command::Bellman(a) => bellman(a),
        Command::Verify(a) => verify(a),
        Command::Sharpness(a) => sharpness(a),
        Command::Oracle(a) => oracle(a),
        Command::Symmetrize(a) => symmetrize(a),
    }
}

fn sink(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("--output: cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit_json(out: &Output, command: &str, config: &impl Serialize, body: Value) -> anyhow::Result<()> {
    let mut doc = json!({ "command": command, "config": config });
    if let (Value::Object(d), Value::Object(b)) = (&mut doc, body) {
        d.extend(b);
    }
    let mut w = sink(out.output.as_deref())?;
    serde_json::to_writer_pretty(&mut w, &doc)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn config_line(command: &str, config: &impl Serialize) -> anyhow::Result<String> {
    Ok(format!(
        "# config: {}",
        serde_json::to_string(&json!({ "command": command, "config": config }))?
    ))
}

fn read_step_function(path: &Path) -> anyhow::Result<StepFunction> {
    let file = File::open(path).with_context(|| format!("--input: cannot open {}", path.display()))?;
    StepFunction::read_csv(BufReader::new(file)).with_context(|| format!("--input: {}", path.display()))
}

fn maximal(a: MaximalArgs) -> anyhow::Result<bool> {
    let phi = read_step_function(&a.input)?;
    let res = maximal_function(&phi);
    let lin = linearize_result(&res);
    match a.out.format {
        Format::Json => emit_json(
            &a.out,
            "maximal",
            &a,
            json!({
                "arity": phi.tree().arity(),
                "depth": phi.tree().depth(),
                "phi": phi.values(),
                "m_phi": res.m_phi.values(),
                "attaining_node": res.attaining_node,
                "linearization": lin.dump(),
            }),
        )?,
        Format::Csv => {
            let mut w = sink(a.out.output.as_deref())?;
            writeln!(w, "{}", config_line("maximal", &a)?)?;
            writeln!(w, "leaf,phi,m_phi,attaining_node")?;
            for (i, ((v, m), node)) in phi
                .values()
                .iter()
                .zip(res.m_phi.values())
                .zip(&res.attaining_node)
                .enumerate()
            {
                writeln!(w, "{i},{v:.16e},{m:.16e},{node}")?;
            }
            w.flush()?;
        }
    }
    Ok(true)
}

fn bellman(a: BellmanArgs) -> anyhow::Result<bool> {
    let point = bellman_value(a.p, a.f, a.big_f)?;
    // at F = f^p the β family only reaches the value in the limit β → 0
    let (beta_opt, min_value) = match minimize_corollary2(a.p, a.f, a.big_f) {
        Ok(m) => (Some(m.beta_opt), Some(m.min_value)),
        Err(_) => (None, None),
    };
    let bound = a
        .beta
        .map(|b| corollary2_bound(a.p, a.f, a.big_f, b))
        .transpose()?;
    let body = json!({
        "value": point.value,
        "alpha": point.alpha,
        "K": point.k,
        "beta_opt": beta_opt,
        "min_value": min_value,
        "bound_at_beta": bound,
    });
    match a.out.format {
        Format::Json => emit_json(&a.out, "bellman", &a, body)?,
        Format::Csv => {
            let mut w = sink(a.out.output.as_deref())?;
            writeln!(w, "{}", config_line("bellman", &a)?)?;
            writeln!(w, "value,alpha,K,beta_opt,min_value")?;
            let opt = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{},{}",
                point.value,
                point.alpha,
                point.k,
                opt(beta_opt),
                opt(min_value)
            )?;
            w.flush()?;
        }
    }
    // the β family bounds B from above
    Ok(min_value.is_none_or(|m| m >= point.value * (1.0 - 1e-9)))
}

fn parse_depths(s: &str) -> anyhow::Result<Vec<usize>> {
    let parse = |t: &str| {
        t.trim()
            .parse::<usize>()
            .with_context(|| format!("--depth: `{t}` is not a depth"))
    };
    let v: Vec<usize> = match s.split_once("..") {
        Some((lo, hi)) => (parse(lo)?..=parse(hi)?).collect(),
        None => vec![parse(s)?],
    };
    if v.is_empty() {
        bail!("--depth: empty range `{s}`");
    }
    Ok(v)
}

fn parse_ineqs(s: &str) -> anyhow::Result<Vec<Inequality>> {
    if s.trim() == "all" {
        return Ok(Inequality::TREE.to_vec());
    }
    s.split(',')
        .map(|t| t.parse::<Inequality>().context("--ineq"))
        .collect()
}

fn verify(a: VerifyArgs) -> anyhow::Result<bool> {
    let ineqs = parse_ineqs(&a.ineq)?;
    if let Some(input) = &a.input {
        return verify_one(&a, &ineqs, input);
    }
    if ineqs.contains(&Inequality::Hardy) {
        bail!("--ineq 1.10 needs --input (a line step function or a power law)");
    }
    let grid = match a.p {
        None => {
            if a.q.is_some() || a.beta.is_some() {
                bail!("--q and --beta need --p");
            }
            ParamGrid::standard()
        }
        Some(p) => {
            let b0 = 1.0 / (p - 1.0);
            let qs = a.q.map_or(vec![1.0, (1.0 + p) / 2.0, p], |q| vec![q]);
            let betas = a.beta.map_or(vec![0.1, 0.5 * b0, b0, 2.0 * b0], |b| vec![b]);
            let mut cells = Vec::new();
            for &q in &qs {
                for &beta in &betas {
                    cells.push(IneqParams::new(p, q, beta).context("--p/--q/--beta")?);
                }
            }
            ParamGrid { cells }
        }
    };
    if let Some(f) = a.f {
        if !(f > 0.0 && f.is_finite()) {
            bail!("--f must be positive, got {f}");
        }
    }
    let defaults = BatteryConfig::default();
    let absolute = !a.lambda.is_empty();
    let config = BatteryConfig {
        grid,
        trials: a.trials,
        depths: parse_depths(&a.depth)?,
        arities: a.arity.clone(),
        seed: a.seed,
        inequalities: ineqs,
        lambda_factors: if absolute { a.lambda.clone() } else { defaults.lambda_factors },
        absolute_lambda: absolute,
        distribution: PhiDistribution::Mixture,
        target_f: a.f,
    };
    for &ar in &config.arities {
        for &d in &config.depths {
            Tree::uniform(ar, d).with_context(|| format!("--arity {ar} --depth {d}"))?;
        }
    }
    if a.format == Format::Json {
        bail!("--format json is not available for sweeps; rows are CSV and the summary is JSON");
    }
    let mut w = sink(a.output.as_deref())?;
    writeln!(w, "{}", config_line("verify", &config)?)?;
    let summary = write_battery_csv(&config, &mut w)?;
    drop(w);
    let text = serde_json::to_string_pretty(&summary)?;
    if let Some(path) = &a.summary {
        std::fs::write(path, format!("{text}\n")).with_context(|| format!("--summary: {}", path.display()))?;
    }
    eprintln!("{text}");
    Ok(summary.violations == 0)
}

fn verify_one(a: &VerifyArgs, ineqs: &[Inequality], input: &str) -> anyhow::Result<bool> {
    let p = a.p.context("--p is required with --input")?;
    let q = a.q.unwrap_or(1.0);
    let beta = a.beta.unwrap_or(1.0 / (p - 1.0));
    let mut reports = Vec::new();
    let mut ok = true;
    if ineqs == [Inequality::Hardy] {
        let g: LineFunction = if input.starts_with("powerlaw:") {
            input.parse::<PowerLawFunction>().context("--input")?.into()
        } else {
            let file = File::open(input).with_context(|| format!("--input: cannot open {input}"))?;
            LineStepFunction::read_csv(BufReader::new(file)).with_context(|| format!("--input: {input}"))?.into()
        };
        let params = IneqParams::with_f(p, q, beta, g.mean()).context("--p/--q/--beta")?;
        let r = lab::hardy_deficit(&g, &params)?;
        ok &= !r.is_violation();
        reports.push(serde_json::to_value(&r)?);
    } else {
        if ineqs.contains(&Inequality::Hardy) {
            bail!("--ineq 1.10 takes a line function and cannot be combined with tree inequalities");
        }
        let phi = read_step_function(Path::new(input))?;
        let f = moment(&phi, 1.0);
        let params = IneqParams::with_f(p, q, beta, a.f.unwrap_or(f)).context("--p/--q/--beta")?;
        for &ineq in ineqs {
            if ineq == Inequality::WeakType {
                let levels = if a.lambda.is_empty() { vec![f] } else { a.lambda.clone() };
                for lambda in levels {
                    let d = maxtree_core::weak_type_deficit(&phi, lambda).context("--lambda")?;
                    ok &= d >= -lab::VIOLATION_SLACK;
                    reports.push(json!({ "ineq": ineq, "lambda": lambda, "deficit": d }));
                }
            } else {
                let r = lab::deficit(ineq, &phi, &params)?;
                ok &= !r.is_violation();
                reports.push(serde_json::to_value(&r)?);
            }
        }
    }
    let out = Output {
        output: a.output.clone(),
        format: a.format,
    };
    emit_json(&out, "verify", a, json!({ "reports": reports }))?;
    Ok(ok)
}

fn sharpness(a: SharpnessArgs) -> anyhow::Result<bool> {
    let p = a.p;
    let beta = a.beta.unwrap_or(1.0 / (p - 1.0));
    let params = IneqParams::with_f(p, a.q, beta, a.f).context("--p/--q/--beta/--f")?;
    let Some(family) = &a.family else {
        let alphas = if a.alpha.is_empty() {
            // approach 1/p geometrically
            (1..=12).map(|k| (1.0 - 0.5f64.powi(k)) / p).collect()
        } else {
            a.alpha.clone()
        };
        let mut rows = Vec::new();
        for &alpha in &alphas {
            rows.push((alpha, sharpness_g(alpha, p, a.q).with_context(|| format!("--alpha {alpha}"))?));
        }
        let limit = a.q / (p - 1.0);
        return match a.out.format {
            Format::Json => {
                let table: Vec<Value> = rows.iter().map(|(x, g)| json!({ "alpha": x, "G": g })).collect();
                emit_json(&a.out, "sharpness", &a, json!({ "limit": limit, "table": table }))?;
                Ok(true)
            }
            Format::Csv => {
                let mut w = sink(a.out.output.as_deref())?;
                writeln!(w, "{}", config_line("sharpness", &a)?)?;
                writeln!(w, "alpha,G,limit")?;
                for (x, g) in rows {
                    writeln!(w, "{x:.16e},{g:.16e},{limit:.16e}")?;
                }
                w.flush()?;
                Ok(true)
            }
        };
    };
    let family: Family = family.parse().context("--family")?;
    let grid = if !a.grid.is_empty() {
        a.grid.clone()
    } else {
        match family {
            Family::GAlpha => vec![0.5 / p, 0.8 / p, 0.9 / p, 0.99 / p, 0.999 / p],
            Family::GBeta => vec![0.2 * beta, 0.5 * beta, beta],
        }
    };
    let points = extremizer_sweep(&params, family, &grid);
    match a.out.format {
        Format::Json => emit_json(&a.out, "sharpness", &a, json!({ "points": points }))?,
        Format::Csv => {
            let mut w = sink(a.out.output.as_deref())?;
            writeln!(w, "{}", config_line("sharpness", &a)?)?;
            writeln!(w, "family,grid,alpha,J,J_target,deficit,skipped")?;
            let opt = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
            for pt in &points {
                writeln!(
                    w,
                    "{},{:.16e},{:.16e},{},{},{},{}",
                    serde_json::to_value(pt.family)?.as_str().unwrap_or_default(),
                    pt.grid,
                    pt.alpha,
                    opt(pt.j),
                    opt(pt.j_target),
                    opt(pt.report.as_ref().map(|r| r.deficit)),
                    pt.skipped.as_deref().unwrap_or_default().replace(',', ";"),
                )?;
            }
            w.flush()?;
        }
    }
    Ok(points
        .iter()
        .filter_map(|pt| pt.report.as_ref())
        .all(|r| !r.is_violation()))
}

fn oracle(a: OracleArgs) -> anyhow::Result<bool> {
    let mut config = OracleConfig::new(a.p, a.f, a.big_f, a.depth, a.budget, a.seed);
    config.arity = a.arity;
    config.recalibrate = !a.no_recalibrate;
    let r = oracle_sup(&config)?;
    let body = json!({ "result": r, "ratio": r.ratio() });
    match a.out.format {
        Format::Json => emit_json(&a.out, "oracle", &config, body)?,
        Format::Csv => {
            let mut w = sink(a.out.output.as_deref())?;
            writeln!(w, "{}", config_line("oracle", &config)?)?;
            writeln!(w, "best_value,bellman,bellman_achieved,ratio,f_achieved,F_achieved,alpha,best_source")?;
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                r.best_value,
                r.bellman,
                r.bellman_achieved,
                r.ratio(),
                r.f_achieved,
                r.big_f_achieved,
                r.alpha,
                r.best_source
            )?;
            w.flush()?;
        }
    }
    Ok(r.best_value <= r.bellman_achieved * (1.0 + 1e-9))
}

fn symmetrize(a: SymmetrizeArgs) -> anyhow::Result<bool> {
    let p = a.p;
    let (tree, g) = match (&a.input, a.f, a.big_f) {
        (Some(path), _, _) => {
            let phi = read_step_function(path)?;
            (phi.tree().clone(), decreasing_rearrangement(&phi))
        }
        (None, Some(f), Some(big_f)) => {
            let tree = Tree::uniform(a.arity, a.depth).context("--arity/--depth")?;
            let (g, _) = lab::discretize_extremal(p, f, big_f, tree.leaf_count(), false)?;
            (tree, g)
        }
        _ => bail!("symmetrize needs --input or both --f and --F"),
    };
    let target = hardy_power(&LineFunction::from(g.clone()), p).context("--p")?;
    let values: Vec<(u64, f64)> = {
        use rayon::prelude::*;
        (0..a.trials as u64)
            .into_par_iter()
            .map(|k| -> anyhow::Result<(u64, f64)> {
                let phi = random_rearrangement(&g, &tree, a.seed.wrapping_add(k))?;
                let m = maximal_values(&phi);
                Ok((k, tree.integrate(m.iter().map(|v| v.powf(p)))))
            })
            .collect::<anyhow::Result<_>>()?
    };
    let best = values.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
    let ok = values.iter().all(|v| v.1 <= target * (1.0 + 1e-9) + 1e-9);
    match a.out.format {
        Format::Json => emit_json(
            &a.out,
            "symmetrize",
            &a,
            json!({ "hardy_target": target, "best": best, "ratio": best / target, "samples": values.len() }),
        )?,
        Format::Csv => {
            let mut w = sink(a.out.output.as_deref())?;
            writeln!(w, "{}", config_line("symmetrize", &a)?)?;
            writeln!(w, "sample,seed,value,hardy_target")?;
            for (k, v) in &values {
                writeln!(w, "{k},{},{v:.16e},{target:.16e}", a.seed.wrapping_add(*k))?;
            }
            w.flush()?;
        }
    }
    Ok(ok)
}
