//! Batch front-end: every experiment is a subcommand driven by a TOML config
//! with flag overrides, writing `results.csv` plus a `manifest.jsonl` into
//! the output directory.
//!
//! Exit codes: 0 success, 1 validation/configuration error, 2 numerical
//! failure (blow-up, non-convergence, failed certificate).

mod config;
mod manifest;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use config::RunConfig;
use manifest::Manifest;
use spde_ldp::grid_noise::{oscillatory_family, sample_sheet, GridSpec};
use spde_ldp::kernel::{BoundCheckParams, HeatKernel, KernelConfig};
use spde_ldp::models::Coefficients;
use spde_ldp::rare_event::{
    a1_experiment, a2_experiment, estimate_probability, ldp_curve, A1Row, A2Point, A2Row,
    MCEstimate,
};
use spde_ldp::rate::{evaluate_rate_direct, minimize_rate, MinimizeOptions, RateResult};
use spde_ldp::solver::{export, solve, solve_skeleton};
use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "spde-ldp",
    version,
    about = "Small-noise semilinear SPDE lab: solvers, action functionals, rare events"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long, global = true, default_value = "config.toml")]
    config: PathBuf,
    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cap worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the noise intensity for solve-based subcommands.
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    /// Override the Monte Carlo sample count.
    #[arg(long, global = true)]
    n: Option<usize>,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Kernel bound certificates and identity checks.
    KernelCheck,
    /// One trajectory of the noisy dynamics.
    Simulate,
    /// The zero-noise controlled (skeleton) path.
    Skeleton,
    /// Action of a given control's skeleton path by direct inversion.
    RateEval,
    /// Minimize the action over controls for a terminal target.
    RateMin,
    /// One Monte Carlo probability estimate.
    Mc,
    /// The -eps log p curve over an epsilon ladder.
    Ldp,
    /// Skeleton continuity under oscillating controls.
    A1,
    /// Controlled-process convergence to the skeleton.
    A2,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::KernelCheck => "kernel-check",
            Command::Simulate => "simulate",
            Command::Skeleton => "skeleton",
            Command::RateEval => "rate-eval",
            Command::RateMin => "rate-min",
            Command::Mc => "mc",
            Command::Ldp => "ldp",
            Command::A1 => "a1",
            Command::A2 => "a2",
        }
    }
}

/// A run that completed its computation but failed its numerical contract.
#[derive(Debug)]
struct NumericalFailure(String);

impl fmt::Display for NumericalFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "numerical failure: {}", self.0)
    }
}

impl std::error::Error for NumericalFailure {}

fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<NumericalFailure>().is_some() {
        return 2;
    }
    if let Some(core) = err.downcast_ref::<spde_ldp::Error>() {
        return match core {
            spde_ldp::Error::BlowUp { .. } | spde_ldp::Error::ExcessiveExclusions { .. } => 2,
            _ => 1,
        };
    }
    1
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are not errors.
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match run(cli) {
        Ok(detail) => {
            println!("{detail}");
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(exit_code(&err));
        }
    }
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    grid: GridSpec,
    coeffs: Coefficients,
    master_seed: u64,
    out_dir: &'a Path,
    manifest: &'a Manifest,
}

impl Ctx<'_> {
    fn write_output(&self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.out_dir.join(name);
        std::fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        self.manifest.record_file(name, bytes)
    }
}

fn run(cli: Cli) -> Result<String> {
    let (mut cfg, config_text) = RunConfig::load(&cli.common.config)?;
    if let Some(seed) = cli.common.seed {
        cfg.mc.master_seed = seed;
    }
    if let Some(threads) = cli.common.threads {
        cfg.run.threads = threads;
    }
    if let Some(out) = &cli.common.out {
        cfg.output.dir = out.clone();
    }
    if let Some(eps) = cli.common.epsilon {
        cfg.solve.epsilon = eps;
    }
    if let Some(n) = cli.common.n {
        cfg.mc.n = n;
        cfg.ldp.n = n;
    }
    if cfg.run.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.run.threads)
            .build_global()
            .context("cannot configure the thread pool")?;
    }

    let grid = cfg.grid()?;
    let coeffs = cfg.coefficients()?;
    let manifest = Manifest::start(
        &cfg.output.dir,
        cli.command.name(),
        &cli.common.config,
        &config_text,
        cfg.mc.master_seed,
        cfg.run.threads,
        coeffs.name(),
        (grid.nx(), grid.nt(), grid.t_horizon()),
    )?;
    let ctx = Ctx {
        cfg: &cfg,
        grid,
        coeffs,
        master_seed: cfg.mc.master_seed,
        out_dir: &cfg.output.dir,
        manifest: &manifest,
    };

    let outcome = match cli.command {
        Command::KernelCheck => kernel_check(&ctx),
        Command::Simulate => simulate(&ctx, false),
        Command::Skeleton => simulate(&ctx, true),
        Command::RateEval => rate_eval(&ctx),
        Command::RateMin => rate_min(&ctx),
        Command::Mc => mc(&ctx),
        Command::Ldp => ldp(&ctx),
        Command::A1 => a1(&ctx),
        Command::A2 => a2(&ctx),
    };
    match outcome {
        Ok(detail) => {
            manifest.finish("ok", &detail)?;
            Ok(detail)
        }
        Err(err) => {
            manifest.finish("error", &format!("{err:#}"))?;
            Err(err)
        }
    }
}

fn kernel_check(ctx: &Ctx) -> Result<String> {
    let k = &ctx.cfg.kernel;
    let kernel = HeatKernel::new(KernelConfig::auto(k.tol, k.t_switch, ctx.grid.t_horizon())?);
    let params = BoundCheckParams {
        n_time: k.n_time,
        n_space: k.n_space,
        decay_a: k.decay_a,
        decay_b: k.decay_b,
        decay_d: k.decay_d,
        dim_d: k.dim_d,
        gamma: k.gamma,
        alpha: k.alpha,
    };
    let report = kernel.check_bounds(&params)?;
    ctx.write_output("results.csv", report.to_csv().as_bytes())?;

    // Identity checks: cross-form agreement and Chapman-Kolmogorov.
    let m = k.cross_form_samples.max(2);
    let mut cross = 0.0f64;
    for it in 0..m {
        let t = 1e-4 * (ctx.grid.t_horizon() / 1e-4).powf(it as f64 / (m - 1) as f64);
        for ix in 0..m {
            let x = ix as f64 / (m - 1) as f64;
            for iy in 0..m {
                let y = iy as f64 / (m - 1) as f64;
                cross = cross.max((kernel.g_spectral(t, x, y) - kernel.g_images(t, x, y)).abs());
            }
        }
    }
    let ck_grid = GridSpec::new(k.ck_nx, 1, ctx.grid.t_horizon())?;
    let mut lines = vec!["check,value,threshold,pass".to_string()];
    let mut all_pass = report.pass;
    let mut push = |name: String, value: f64, threshold: f64, all: &mut bool| {
        let pass = value < threshold;
        *all &= pass;
        lines.push(format!("{name},{value:e},{threshold:e},{pass}"));
    };
    push("cross_form_max_error".into(), cross, 1e-10, &mut all_pass);
    for (s, t) in [(0.05, 0.05), (0.1, 0.1), (0.5, 0.5)] {
        let e = kernel.semigroup_identity_error(s, t, &ck_grid)?;
        push(
            format!("chapman_kolmogorov_s{s}_t{t}"),
            e,
            1e-8,
            &mut all_pass,
        );
    }
    ctx.write_output("identities.csv", (lines.join("\n") + "\n").as_bytes())?;
    if !all_pass {
        bail!(NumericalFailure("kernel certificate failed".into()));
    }
    Ok(format!(
        "kernel certificate pass; worst cross-form error {cross:.3e}"
    ))
}

fn simulate(ctx: &Ctx, skeleton: bool) -> Result<String> {
    let eta = ctx.cfg.initial_field(&ctx.grid)?;
    let control = ctx.cfg.control_field(&ctx.grid)?;
    let use_control = skeleton || ctx.cfg.control.kind != "zero";
    let traj = if skeleton {
        solve_skeleton(&eta, &ctx.coeffs, &ctx.grid, &control)?
    } else {
        let cfg = ctx.cfg.solve_config();
        let sheet = (cfg.epsilon > 0.0).then(|| sample_sheet(&ctx.grid, ctx.master_seed));
        solve(
            &eta,
            &ctx.coeffs,
            &ctx.grid,
            &cfg,
            use_control.then_some(&control),
            sheet.as_ref(),
        )?
    };
    let mut csv = Vec::new();
    export::write_csv(&traj, &mut csv)?;
    ctx.write_output("results.csv", &csv)?;
    Ok(format!(
        "trajectory written; sup |U|_2 = {:.6}, content hash {}",
        traj.sup_l2(),
        export::content_hash(&traj)
    ))
}

fn rate_eval(ctx: &Ctx) -> Result<String> {
    let eta = ctx.cfg.initial_field(&ctx.grid)?;
    let v = ctx.cfg.control_field(&ctx.grid)?;
    let h = solve_skeleton(&eta, &ctx.coeffs, &ctx.grid, &v)?;
    let res = evaluate_rate_direct(&eta, &ctx.coeffs, &h, &ctx.grid)?;
    write_rate_outputs(ctx, &res)?;
    Ok(format!("action value {:.6}", res.value))
}

fn rate_min(ctx: &Ctx) -> Result<String> {
    let eta = ctx.cfg.initial_field(&ctx.grid)?;
    let target = ctx.cfg.target(&ctx.grid)?;
    let res = minimize_rate(
        &eta,
        &ctx.coeffs,
        &ctx.grid,
        &target,
        &MinimizeOptions::default(),
    )?;
    write_rate_outputs(ctx, &res)?;
    if !res.converged {
        bail!(NumericalFailure(format!(
            "minimization did not converge (grad_norm {:.3e})",
            res.grad_norm
        )));
    }
    Ok(format!(
        "minimized action {:.6} in {} iterations",
        res.value, res.iterations
    ))
}

fn write_rate_outputs(ctx: &Ctx, res: &RateResult) -> Result<()> {
    let csv = format!("{}\n{}\n", RateResult::csv_header(), res.to_csv_row());
    ctx.write_output("results.csv", csv.as_bytes())?;
    let mut control_csv = Vec::new();
    res.control.write_csv(&mut control_csv)?;
    ctx.write_output("control.csv", &control_csv)
}

fn mc(ctx: &Ctx) -> Result<String> {
    let eta = ctx.cfg.initial_field(&ctx.grid)?;
    let event = ctx.cfg.event(&ctx.grid)?;
    let epsilon = ctx.cfg.solve.epsilon;
    let tilt = match ctx.cfg.mc.tilt.as_str() {
        "none" => None,
        "control" => Some(ctx.cfg.control_field(&ctx.grid)?),
        "minimizer" => {
            let target = event
                .matching_target()
                .context("tilt = minimizer needs a terminal-projection event")?;
            Some(
                minimize_rate(
                    &eta,
                    &ctx.coeffs,
                    &ctx.grid,
                    &target,
                    &MinimizeOptions::default(),
                )?
                .control,
            )
        }
        other => bail!("unknown mc tilt {other:?}"),
    };
    let est = estimate_probability(
        &event,
        &eta,
        &ctx.coeffs,
        &ctx.grid,
        epsilon,
        ctx.cfg.mc.n,
        ctx.master_seed,
        tilt.as_ref(),
    )?;
    let csv = format!("{}\n{}\n", MCEstimate::csv_header(), est.to_csv_row());
    ctx.write_output("results.csv", csv.as_bytes())?;
    Ok(format!(
        "p_hat = {:.6e} +- {:.2e} ({} samples, {} excluded)",
        est.p_hat, est.std_error, est.n, est.n_excluded
    ))
}

fn ldp(ctx: &Ctx) -> Result<String> {
    let eta = ctx.cfg.initial_field(&ctx.grid)?;
    let event = ctx.cfg.event(&ctx.grid)?;
    let report = ldp_curve(
        &event,
        &eta,
        &ctx.coeffs,
        &ctx.grid,
        &ctx.cfg.ldp.epsilons,
        ctx.cfg.ldp.n,
        ctx.master_seed,
        ctx.cfg.tilt_policy()?,
    )?;
    ctx.write_output("results.csv", report.to_csv().as_bytes())?;
    let last = report.rows.last().context("empty curve")?;
    Ok(format!(
        "{} rows; smallest epsilon {}: -eps log p = {:.4}{}",
        report.rows.len(),
        last.epsilon,
        last.minus_eps_log_p,
        report
            .reference_rate
            .map(|r| format!(", reference rate {r:.4}"))
            .unwrap_or_default()
    ))
}

fn a1(ctx: &Ctx) -> Result<String> {
    let eta = ctx.cfg.initial_field(&ctx.grid)?;
    let v = ctx.cfg.control_field(&ctx.grid)?;
    let rows = a1_experiment(
        &eta,
        &ctx.coeffs,
        &ctx.grid,
        &v,
        &ctx.cfg.a1.n_list,
        ctx.cfg.a1.amplitude,
    )?;
    let mut csv = String::from(A1Row::csv_header());
    csv.push('\n');
    for r in &rows {
        csv.push_str(&r.to_csv_row());
        csv.push('\n');
    }
    ctx.write_output("results.csv", csv.as_bytes())?;
    Ok(format!("{} oscillation levels", rows.len()))
}

fn a2(ctx: &Ctx) -> Result<String> {
    let eta = ctx.cfg.initial_field(&ctx.grid)?;
    let v = ctx.cfg.control_field(&ctx.grid)?;
    let a2cfg = &ctx.cfg.a2;
    let points: Vec<A2Point> = a2cfg
        .epsilons
        .iter()
        .enumerate()
        .map(|(idx, &epsilon)| {
            let control = if a2cfg.oscillation_base > 0 {
                oscillatory_family(&v, a2cfg.oscillation_base << idx, 1.0)
            } else {
                v.clone()
            };
            A2Point {
                epsilon,
                eta: eta.clone(),
                control,
            }
        })
        .collect();
    let rows = a2_experiment(
        &points,
        &eta,
        &v,
        &ctx.coeffs,
        &ctx.grid,
        a2cfg.seeds_per_epsilon,
        ctx.master_seed,
        a2cfg.m_bound,
    )?;
    let mut csv = String::from(A2Row::csv_header());
    csv.push('\n');
    for r in &rows {
        csv.push_str(&r.to_csv_row());
        csv.push('\n');
    }
    ctx.write_output("results.csv", csv.as_bytes())?;
    Ok(format!("{} epsilon levels", rows.len()))
}
