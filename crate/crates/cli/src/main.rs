mod config;
mod svg;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use config::{load, usage, DecayConfig, GenConfig, UsageError, VerifyConfig, WhitneyConfig};
use nalgebra::DVector;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use vlab::decay::{decay_iterate, DecayParams, VarifoldSource};
use vlab::grid::Grid;
use vlab::suites::{rng, run_suite, scattered, smooth_derivative, SuiteConfig, SUITES};
use vlab::varifold::{gen_varifold, stationarity_audit, DiscreteVarifold};
use vlab::whitney::{whitney_extend, JetField};
use vlab::LabError;

const DEFAULT_SEED: u64 = 20240611;

#[derive(Parser)]
#[command(name = "vlab", version, about = "Numerical checks for stationary varifolds near minimal surfaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML config file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// output directory
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// run seed; overrides the config
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// grid nodes per axis; overrides the config
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// decay scale ratio; overrides the config
    #[arg(long, global = true)]
    ratio: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a varifold from a generator spec and audit its stationarity
    Gen,
    /// Run a verification suite and write its CSV report
    Verify {
        /// one of distance, jacobi, minsurf, varifold-ineq, qapprox, whitney
        suite: String,
    },
    /// Run the decay iteration and write the per-scale CSV and a log-log SVG
    Decay,
    /// Extend scattered jets of a smooth function and report the error
    WhitneyDemo,
}

/// A completed run whose outcome is not success.
#[derive(Debug)]
enum Outcome {
    ChecksFailed(usize),
    Truncated { k: usize, reason: String },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(Outcome::ChecksFailed(n))) => {
            eprintln!("{n} check(s) failed");
            ExitCode::from(1)
        }
        Ok(Some(Outcome::Truncated { k, reason })) => {
            eprintln!("decay truncated at k = {k}: {reason}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<Option<Outcome>> {
    std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    match &cli.command {
        Command::Gen => gen(cli),
        Command::Verify { suite } => verify(cli, suite),
        Command::Decay => decay(cli),
        Command::WhitneyDemo => whitney_demo(cli),
    }
}

fn write(dir: &Path, name: &str, text: &str) -> anyhow::Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn required_config(cli: &Cli) -> anyhow::Result<&Path> {
    cli.config.as_deref().ok_or_else(|| usage("this command needs --config PATH"))
}

fn gen(cli: &Cli) -> anyhow::Result<Option<Outcome>> {
    let cfg: GenConfig = load(required_config(cli)?)?;
    let seed = cli.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED);
    let v = gen_varifold(&cfg.varifold).map_err(|e| match e {
        LabError::Dimension(_) | LabError::Invalid(_) => usage(format!("varifold spec: {e}")),
        other => anyhow!(other),
    })?;
    let audit = stationarity_audit(&v, cfg.varifold.sampling(), cfg.audit_c, seed)?;
    let path = write(&cli.out, cfg.output.as_deref().unwrap_or("varifold.txt"), &v.to_text())?;
    println!("atoms {}", v.atoms.len());
    println!("audit {:.6e} (tolerance {:.6e}, {} fields)", audit.defect, audit.tol, audit.fields);
    println!("wrote {}", path.display());
    Ok(None)
}

fn verify(cli: &Cli, suite: &str) -> anyhow::Result<Option<Outcome>> {
    if !SUITES.contains(&suite) {
        return Err(usage(format!("unknown suite `{suite}`; expected one of {}", SUITES.join(", "))));
    }
    let cfg: VerifyConfig = match &cli.config {
        Some(p) => load(p)?,
        None => VerifyConfig::default(),
    };
    let grid = cli.grid.or(cfg.grid);
    if let Some(g) = grid {
        if g < 8 {
            return Err(usage(format!("--grid {g}: at least 8 nodes per axis")));
        }
    }
    let sc = SuiteConfig { seed: cli.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED), grid };
    let report = run_suite(suite, &sc)?;
    let path = write(&cli.out, &format!("verify-{suite}.csv"), &report.to_csv())?;
    for c in &report.checks {
        println!("{:<4} {} = {:.6e}", if c.pass { "ok" } else { "FAIL" }, c.id, c.value);
    }
    for e in &report.errors {
        println!("error {e}");
    }
    println!("wrote {}", path.display());
    let failed = report.failures().len();
    Ok((failed > 0).then_some(Outcome::ChecksFailed(failed)))
}

fn decay(cli: &Cli) -> anyhow::Result<Option<Outcome>> {
    let cfg: DecayConfig = load(required_config(cli)?)?;
    let mut p = cfg.params.apply(DecayParams::default());
    if let Some(g) = cli.grid {
        p.grid = g;
    }
    if let Some(r) = cli.ratio {
        p.ratio = r;
    }
    if p.ratio <= 1.0 || p.grid < 8 {
        return Err(usage("decay needs ratio > 1 and grid >= 8"));
    }
    let source = match (&cfg.varifold_file, &cfg.varifold) {
        (Some(f), None) => {
            let text = std::fs::read_to_string(f).map_err(|e| usage(format!("cannot read {}: {e}", f.display())))?;
            VarifoldSource::Fixed(DiscreteVarifold::from_text(&text)?)
        }
        (None, Some(spec)) => VarifoldSource::Generated(spec.clone()),
        _ => return Err(usage("decay config needs exactly one of `varifold_file` and `[varifold]`")),
    };
    let m0 = cfg.m0.build().map_err(|e| usage(format!("m0: {e}")))?;
    if cfg.center.len() != m0.dim() {
        return Err(usage(format!("center needs {} coordinates", m0.dim())));
    }
    let z = DVector::from_vec(cfg.center.clone());
    let run = decay_iterate(&source, &z, &m0, cfg.l, cfg.steps, &p)?;
    write(&cli.out, "decay.csv", &run.to_csv())?;
    let pts: Vec<(f64, f64)> = run.states.iter().filter(|s| s.eps > 0.0).map(|s| (s.r.ln(), s.eps.ln())).collect();
    let plot = svg::Plot { title: "decay of the excess", x_label: "log r_k", y_label: "log eps_k" };
    write(&cli.out, "decay.svg", &svg::polyline(&plot, &pts))?;
    for s in &run.states {
        println!("k {} r {:.6e} eps {:.6e}", s.k, s.r, s.eps);
    }
    if pts.len() >= 2 {
        println!("slope {:.6}", run.slope());
    }
    match run.failure {
        Some((k, e)) => Ok(Some(Outcome::Truncated { k, reason: e.to_string() })),
        None => Ok(None),
    }
}

fn whitney_demo(cli: &Cli) -> anyhow::Result<Option<Outcome>> {
    let cfg: WhitneyConfig = match &cli.config {
        Some(p) => load(p)?,
        None => WhitneyConfig::default(),
    };
    if !(1..=2).contains(&cfg.m) || cfg.spacing <= 0.0 {
        return Err(usage("whitney-demo supports m = 1 or 2 and a positive spacing"));
    }
    let nodes = cli.grid.or(cfg.grid).unwrap_or(if cfg.m == 1 { 801 } else { 81 });
    let grid = Grid::new(cfg.m, nodes, vec![0.0; cfg.m], 1.0).map_err(|e| usage(e.to_string()))?;
    if cfg.spacing < 2.0 * grid.h() {
        return Err(usage("spacing must be at least two grid cells"));
    }
    let mut r = rng(cli.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED), 0);
    let bases = scattered(&grid, cfg.spacing, &mut r);
    let field = JetField::sample(&bases, cfg.l, |x, a| vec![smooth_derivative(x, a)])?;
    let f = whitney_extend(&field, &grid)?;
    let zero = vec![0; cfg.m];
    let mut csv = String::new();
    for i in 0..cfg.m {
        csv.push_str(&format!("x{},", i + 1));
    }
    csv.push_str("extension,exact,error\n");
    let mut worst: f64 = 0.0;
    let mut pts = Vec::new();
    for k in 0..grid.len() {
        let x = grid.coords(k);
        let exact = smooth_derivative(&x, &zero);
        worst = worst.max((f[k] - exact).abs());
        for c in &x {
            csv.push_str(&format!("{c:.16e},"));
        }
        csv.push_str(&format!("{:.16e},{exact:.16e},{:.16e}\n", f[k], f[k] - exact));
        // m = 2 plots the middle row
        if cfg.m == 1 || grid.multi(k)[0] == nodes / 2 {
            pts.push((x[cfg.m - 1], f[k]));
        }
    }
    write(&cli.out, "whitney.csv", &csv)?;
    let plot = svg::Plot { title: "Whitney extension of scattered jets", x_label: "x", y_label: "extension" };
    write(&cli.out, "whitney.svg", &svg::polyline(&plot, &pts))?;
    println!("jets {} degree {}", bases.len(), cfg.l);
    println!("sup error {worst:.6e}");
    Ok(None)
}
