//! The `xpi` command line.
//!
//! Every command renders its result as CSV: a `# xpi <version> ...` comment
//! line carrying the command name and master seed, a header row, then data
//! rows. Output goes to `--out` when given, otherwise to stdout.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::approx::{
    k_star, kappa_api, kappa_psdp, theorem_bounds, ApiTrace, BoundKind, BoundParams, CorruptionMode,
    GreedyOracleConfig,
};
use crate::concentrability::{coefficient_report, CoefficientReport, DEFAULT_I_MAX};
use crate::error::{Error, Result};
use crate::garnet::{generate_garnet, random_policy, GarnetSpec};
use crate::io::{load_distribution, load_mdp, mdp_to_json};
use crate::kappa::{exact_kappa_pi, xi};
use crate::mdp::{evaluate_policy, solve_optimal, solve_optimal_exact, Mdp, Policy, StateDistribution};
use crate::mixture::{
    closed_form_mixture_value, hesitant_policy, improvement_report, tightrope_mdp, GreedyMode, S0, S1,
};
use crate::online::{run_online_from, OnlineState, StepSchedule};
use crate::verify::{run_suite, Suite};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "XPI_THREADS";

#[derive(Debug, Parser)]
#[command(name = "xpi", version, about = "Multiple-step greedy policy iteration experiments")]
pub struct Cli {
    /// Worker threads for sweeps (overrides XPI_THREADS).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Master seed, recorded in every output.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimal value and policy by value iteration.
    Solve(SolveArgs),
    /// Exact κ-policy iteration from the uniform policy.
    Kpi(KpiArgs),
    /// Two-timescale online κ-PI.
    Online(OnlineArgs),
    /// κ-API with the approximate greedy oracle.
    Api(ApproxArgs),
    /// κ-PSDP with the approximate greedy oracle.
    Psdp(ApproxArgs),
    /// Concentrability coefficients.
    Coeffs(CoeffsArgs),
    /// Soft-update check on the Tightrope MDP.
    Tightrope(TightropeArgs),
    /// Soft-update sufficiency sweep over random MDPs.
    #[command(name = "theorem1-sweep")]
    Theorem1Sweep(SweepArgs),
    /// Write a random MDP as JSON.
    #[command(name = "garnet-gen")]
    GarnetGen(GarnetArgs),
    /// Run the property and acceptance checks.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// MDP file, `tightrope:c=..,gamma=..` or `garnet:n_states=..,n_actions=..,..`.
    #[arg(long)]
    pub mdp: String,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct KpiArgs {
    #[arg(long)]
    pub mdp: String,
    #[arg(long)]
    pub kappa: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_iters: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OnlineArgs {
    #[arg(long)]
    pub mdp: String,
    #[arg(long)]
    pub kappa: f64,
    #[arg(long, default_value_t = 100_000)]
    pub steps: u64,
    #[arg(long, default_value_t = 0.6)]
    pub fast_exp: f64,
    #[arg(long, default_value_t = 1.0)]
    pub slow_exp: f64,
    #[arg(long, default_value_t = 10_000)]
    pub snapshot_stride: u64,
    /// Sampling measure: `uniform` or a JSON file.
    #[arg(long, default_value = "uniform")]
    pub nu: String,
    /// Starting q and q_kappa: `optimistic` (R_max/(1-gamma)) or `zero`.
    #[arg(long, value_enum, default_value_t = OnlineInit::Optimistic)]
    pub init: OnlineInit,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OnlineInit {
    Optimistic,
    Zero,
}

#[derive(Debug, Args)]
pub struct ApproxArgs {
    #[arg(long)]
    pub mdp: String,
    #[arg(long)]
    pub kappa: f64,
    #[arg(long, default_value_t = 0.0)]
    pub delta: f64,
    /// Sampling measure: `uniform` or a JSON file.
    #[arg(long, default_value = "uniform")]
    pub nu: String,
    /// Loss measure: `uniform` or a JSON file.
    #[arg(long, default_value = "uniform")]
    pub mu: String,
    #[arg(long, conflicts_with = "auto_kstar")]
    pub iters: Option<usize>,
    /// Run `k* = ⌈ln(R_max/(δ(1-γ)))/(1-ξ)⌉` iterations.
    #[arg(long)]
    pub auto_kstar: bool,
    /// `none`, `worst_state_swap` or `random_swap`.
    #[arg(long, default_value = "worst_state_swap")]
    pub corruption: String,
    #[arg(long, default_value_t = DEFAULT_I_MAX)]
    pub imax: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CoeffsArgs {
    #[arg(long)]
    pub mdp: String,
    #[arg(long, default_value = "uniform")]
    pub mu: String,
    #[arg(long, default_value = "uniform")]
    pub nu: String,
    #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
    pub kappa_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
    pub k_list: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_I_MAX)]
    pub imax: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TightropeArgs {
    #[arg(long)]
    pub c: f64,
    #[arg(long, default_value_t = 0.9)]
    pub gamma: f64,
    #[arg(long)]
    pub alpha: f64,
    #[arg(long, conflicts_with = "h", required_unless_present = "h")]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub h: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, default_value_t = 200)]
    pub n_mdps: usize,
    #[arg(long, default_value_t = 6)]
    pub n_states: usize,
    #[arg(long, default_value_t = 3)]
    pub n_actions: usize,
    #[arg(long, default_value_t = 0.9)]
    pub gamma: f64,
    #[arg(long, value_delimiter = ',', default_value = "0,0.3,0.7,1")]
    pub kappas: Vec<f64>,
    /// Mixture weights drawn per (MDP, κ) cell, uniform on `[κ, 1]`.
    #[arg(long, default_value_t = 3)]
    pub alpha_draws: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GarnetArgs {
    #[arg(long)]
    pub n_states: usize,
    #[arg(long)]
    pub n_actions: usize,
    /// Defaults to ⌈n_states/2⌉.
    #[arg(long)]
    pub branching: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    pub density: f64,
    #[arg(long, default_value_t = 0.9)]
    pub gamma: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// `all` or one of: mixture, online, kappa, approx, concentrability, cli.
    #[arg(long, default_value = "all")]
    pub suite: String,
}

/// Rendered result of a command.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CommandOutput {
    /// CSV document, including the metadata line.
    pub csv: Option<String>,
    /// Free text for stdout (printed before any CSV sent to stdout).
    pub text: String,
    /// Where the CSV should go; stdout when `None`.
    pub out: Option<PathBuf>,
    /// Non-zero on a failed `verify`.
    pub exit_code: i32,
}

struct Csv {
    buf: String,
}

impl Csv {
    fn new(command: &str, seed: u64, header: &[&str]) -> Self {
        let mut buf = format!("# xpi {VERSION} command={command} seed={seed}\n");
        buf.push_str(&header.join(","));
        buf.push('\n');
        Self { buf }
    }

    fn row(&mut self, fields: &[String]) {
        self.buf.push_str(&fields.join(","));
        self.buf.push('\n');
    }

    fn finish(self) -> String {
        self.buf
    }
}

/// The data rows of a CSV document (metadata comment lines removed).
pub fn csv_data_rows(csv: &str) -> Vec<&str> {
    csv.lines().filter(|l| !l.starts_with('#')).collect()
}

fn parse_kv(spec: &str) -> Result<Vec<(&str, &str)>> {
    spec.split(',')
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::invalid(format!("expected key=value, got {p:?}")))
        })
        .collect()
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::invalid(format!("bad value {v:?} for {key}")))
}

/// Resolves an MDP source: a JSON file, `tightrope:..` or `garnet:..`.
pub fn load_mdp_source(src: &str) -> Result<Mdp> {
    if let Some(rest) = src.strip_prefix("tightrope:") {
        let (mut c, mut gamma) = (2.0, 0.9);
        for (k, v) in parse_kv(rest)? {
            match k {
                "c" => c = parse_num(k, v)?,
                "gamma" => gamma = parse_num(k, v)?,
                _ => return Err(Error::invalid(format!("unknown tightrope parameter {k:?}"))),
            }
        }
        return tightrope_mdp(c, gamma);
    }
    if let Some(rest) = src.strip_prefix("garnet:") {
        let kv = parse_kv(rest)?;
        let get = |key: &str| kv.iter().find(|(k, _)| *k == key).map(|(_, v)| *v);
        for (k, _) in &kv {
            if !["n_states", "n_actions", "branching", "density", "seed", "gamma"].contains(k) {
                return Err(Error::invalid(format!("unknown garnet parameter {k:?}")));
            }
        }
        let n_states = parse_num("n_states", get("n_states").ok_or_else(|| Error::invalid("garnet needs n_states"))?)?;
        let n_actions =
            parse_num("n_actions", get("n_actions").ok_or_else(|| Error::invalid("garnet needs n_actions"))?)?;
        let seed = get("seed").map(|v| parse_num("seed", v)).transpose()?.unwrap_or(0);
        let mut spec = GarnetSpec::new(n_states, n_actions, seed);
        if let Some(b) = get("branching") {
            spec.branching = parse_num("branching", b)?;
        }
        if let Some(d) = get("density") {
            spec.reward_density = parse_num("density", d)?;
        }
        if let Some(g) = get("gamma") {
            spec.gamma = parse_num("gamma", g)?;
        }
        return generate_garnet(&spec);
    }
    load_mdp(Path::new(src)).map_err(|e| Error::invalid(format!("{src}: {e}")))
}

fn load_measure(src: &str, n_states: usize) -> Result<StateDistribution> {
    if src == "uniform" {
        Ok(StateDistribution::uniform(n_states))
    } else {
        load_distribution(Path::new(src), n_states)
    }
}

fn fmt_actions(pi: &Policy) -> String {
    (0..pi.n_states())
        .map(|s| pi.mode_action(s).to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

fn thread_count(cli: Option<usize>) -> Result<Option<usize>> {
    if let Some(n) = cli {
        return Ok(Some(n));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::invalid(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

/// Parses `argv` (including the program name) and runs the command,
/// returning the process exit code: 0 on success, 1 on validation errors
/// or failed checks, 2 on usage errors.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli).and_then(emit) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn emit(output: CommandOutput) -> Result<i32> {
    if !output.text.is_empty() {
        print!("{}", output.text);
    }
    if let Some(csv) = &output.csv {
        match &output.out {
            Some(path) => std::fs::write(path, csv)?,
            None => print!("{csv}"),
        }
    }
    Ok(output.exit_code)
}

/// Runs a parsed command inside a worker pool sized by `--threads` or
/// `XPI_THREADS`, without touching stdout or the filesystem (except for
/// reading inputs).
pub fn execute(cli: &Cli) -> Result<CommandOutput> {
    match thread_count(cli.threads)? {
        Some(0) => Err(Error::invalid("thread count must be positive")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::invalid(format!("cannot build worker pool: {e}")))?
            .install(|| dispatch(cli)),
        None => dispatch(cli),
    }
}

/// Parses and executes without printing; used for determinism checks.
pub fn render<I, T>(argv: I) -> Result<CommandOutput>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| Error::invalid(e.to_string()))?;
    execute(&cli)
}

fn dispatch(cli: &Cli) -> Result<CommandOutput> {
    let seed = cli.seed;
    match &cli.command {
        Command::Solve(a) => cmd_solve(a, seed),
        Command::Kpi(a) => cmd_kpi(a, seed),
        Command::Online(a) => cmd_online(a, seed),
        Command::Api(a) => cmd_approx(a, seed, false),
        Command::Psdp(a) => cmd_approx(a, seed, true),
        Command::Coeffs(a) => cmd_coeffs(a, seed),
        Command::Tightrope(a) => cmd_tightrope(a, seed),
        Command::Theorem1Sweep(a) => cmd_sweep(a, seed),
        Command::GarnetGen(a) => cmd_garnet(a, seed),
        Command::Verify(a) => cmd_verify(a, seed),
    }
}

fn cmd_solve(a: &SolveArgs, seed: u64) -> Result<CommandOutput> {
    let mdp = load_mdp_source(&a.mdp)?;
    let (v, pi) = solve_optimal(&mdp, a.tol)?;
    let mut csv = Csv::new("solve", seed, &["state", "v_star", "action"]);
    for s in 0..mdp.n_states() {
        csv.row(&[s.to_string(), v[s].to_string(), pi.mode_action(s).to_string()]);
    }
    let text = if a.out.is_some() {
        format!("v* = {:?}\npi* = [{}]\n", v.as_slice(), fmt_actions(&pi))
    } else {
        String::new()
    };
    Ok(CommandOutput {
        csv: Some(csv.finish()),
        text,
        out: a.out.clone(),
        exit_code: 0,
    })
}

fn cmd_kpi(a: &KpiArgs, seed: u64) -> Result<CommandOutput> {
    let mdp = load_mdp_source(&a.mdp)?;
    let (v_star, _) = solve_optimal_exact(&mdp)?;
    let out = exact_kappa_pi(&mdp, a.kappa, a.tol, a.max_iters, Some(&v_star))?;
    let mut csv = Csv::new("kpi", seed, &["iter", "value_change", "error_to_optimal"]);
    for r in &out.records {
        csv.row(&[
            r.iter.to_string(),
            r.value_change.to_string(),
            r.error_to_optimal.unwrap_or(f64::NAN).to_string(),
        ]);
    }
    let mut text = String::new();
    if out.truncated {
        let _ = writeln!(text, "warning: stopped after {} iterations without converging", a.max_iters);
    }
    if a.out.is_some() {
        let _ = writeln!(text, "policy = [{}]", fmt_actions(&out.policy));
    }
    Ok(CommandOutput {
        csv: Some(csv.finish()),
        text,
        out: a.out.clone(),
        exit_code: 0,
    })
}

fn cmd_online(a: &OnlineArgs, seed: u64) -> Result<CommandOutput> {
    let mdp = load_mdp_source(&a.mdp)?;
    let nu = load_measure(&a.nu, mdp.n_states())?;
    let sched = StepSchedule::new(a.fast_exp, a.slow_exp)?;
    let initial = match a.init {
        OnlineInit::Optimistic => OnlineState::optimistic(&mdp),
        OnlineInit::Zero => OnlineState::new(mdp.n_states(), mdp.n_actions()),
    };
    let (_, trace) = run_online_from(&mdp, &nu, a.kappa, &sched, a.steps, seed, a.snapshot_stride, initial)?;
    let mut csv = Csv::new("online", seed, &["step", "q_err_inf", "qk_err_inf", "policy_match_frac"]);
    for s in &trace.snapshots {
        csv.row(&[
            s.step.to_string(),
            s.q_err_inf.to_string(),
            s.qk_err_inf.to_string(),
            s.policy_match_frac.to_string(),
        ]);
    }
    Ok(CommandOutput {
        csv: Some(csv.finish()),
        out: a.out.clone(),
        ..Default::default()
    })
}

/// Coefficients and bound parameters for the approximate schemes.
pub(crate) fn bound_params(
    mdp: &Mdp,
    report: &CoefficientReport,
    kappa: f64,
    delta: f64,
    k: usize,
    c2k: f64,
) -> BoundParams {
    let per = report.kappa(kappa).expect("kappa included in report");
    BoundParams {
        kappa,
        gamma: mdp.gamma(),
        delta,
        k,
        r_max: mdp.r_max(),
        c1: report.series.c1.upper(),
        c2: report.series.c2.upper(),
        c2k,
        c_pi_star_kappa: per.c_pi_star_kappa,
        c_pi_star_1_kappa: per.c_pi_star_1_kappa,
        g: BoundParams::DEFAULT_G,
    }
}

fn cmd_approx(a: &ApproxArgs, seed: u64, psdp: bool) -> Result<CommandOutput> {
    let mdp = load_mdp_source(&a.mdp)?;
    let nu = load_measure(&a.nu, mdp.n_states())?;
    let mu = load_measure(&a.mu, mdp.n_states())?;
    let mode: CorruptionMode = a.corruption.parse()?;
    let iters = match (a.iters, a.auto_kstar) {
        (Some(k), false) => k,
        (None, true) => k_star(mdp.gamma(), a.kappa, a.delta, mdp.r_max())?,
        (None, false) => return Err(Error::invalid("one of --iters or --auto-kstar is required")),
        (Some(_), true) => unreachable!("clap rejects both"),
    };
    let cfg = GreedyOracleConfig::new(a.delta, nu.clone(), mode, seed)?;
    let pi0 = Policy::uniform(mdp.n_states(), mdp.n_actions());
    let (_, pi_star) = solve_optimal_exact(&mdp)?;
    let report = coefficient_report(&mdp, &pi_star, &mu, &nu, &[a.kappa], &[], a.imax)?;
    let trace: ApiTrace = if psdp {
        kappa_psdp(&mdp, a.kappa, &cfg, iters, &pi0, &mu)?.1
    } else {
        kappa_api(&mdp, a.kappa, &cfg, iters, &pi0, &mu)?
    };
    let kind = if psdp { BoundKind::PsdpFixed } else { BoundKind::ApiFixed };
    let command = if psdp { "psdp" } else { "api" };
    let mut csv = Csv::new(command, seed, &["iter", "loss", "bound_thm", "achieved_slack"]);
    for r in &trace.records {
        let bound = theorem_bounds(kind, &bound_params(&mdp, &report, a.kappa, a.delta, r.iter, f64::NAN))?;
        csv.row(&[
            r.iter.to_string(),
            r.loss.to_string(),
            bound.to_string(),
            r.achieved_slack.to_string(),
        ]);
    }
    Ok(CommandOutput {
        csv: Some(csv.finish()),
        out: a.out.clone(),
        ..Default::default()
    })
}

fn cmd_coeffs(a: &CoeffsArgs, seed: u64) -> Result<CommandOutput> {
    let mdp = load_mdp_source(&a.mdp)?;
    let mu = load_measure(&a.mu, mdp.n_states())?;
    let nu = load_measure(&a.nu, mdp.n_states())?;
    for &k in &a.kappa_grid {
        xi(mdp.gamma(), k)?;
    }
    let (_, pi_star) = solve_optimal_exact(&mdp)?;
    let report = coefficient_report(&mdp, &pi_star, &mu, &nu, &a.kappa_grid, &a.k_list, a.imax)?;
    let tail_kind = format!("{:?}", report.series.tail_kind).to_lowercase();
    let floored = report.floored().to_string();
    let mut csv = Csv::new(
        "coeffs",
        seed,
        &["coefficient", "kappa", "k", "value", "tail", "truncation_index", "tail_kind", "floored"],
    );
    let mut series_row = |name: &str, k: String, v: &crate::concentrability::SeriesValue| {
        csv.row(&[
            name.into(),
            String::new(),
            k,
            v.value.to_string(),
            v.tail.to_string(),
            v.truncation_index.to_string(),
            tail_kind.clone(),
            floored.clone(),
        ]);
    };
    series_row("C1", String::new(), &report.series.c1);
    series_row("C2", String::new(), &report.series.c2);
    for (k, v) in &report.series.c2k {
        series_row("C2k", k.to_string(), v);
    }
    series_row("C_pi_star_1", String::new(), &report.series.c_pi_star_1);
    let exact = |name: &str, kappa: String, value: f64| {
        vec![
            name.to_string(),
            kappa,
            String::new(),
            value.to_string(),
            "0".into(),
            String::new(),
            "exact".into(),
            floored.clone(),
        ]
    };
    csv.row(&exact("c0", String::new(), report.c0()));
    csv.row(&exact("C_pi_star", String::new(), report.c_pi_star));
    for per in &report.per_kappa {
        csv.row(&exact("C_pi_star_kappa", per.kappa.to_string(), per.c_pi_star_kappa));
        csv.row(&exact("C_pi_star_1_kappa", per.kappa.to_string(), per.c_pi_star_1_kappa));
    }
    Ok(CommandOutput {
        csv: Some(csv.finish()),
        out: a.out.clone(),
        ..Default::default()
    })
}

fn cmd_tightrope(a: &TightropeArgs, seed: u64) -> Result<CommandOutput> {
    let mdp = tightrope_mdp(a.c, a.gamma)?;
    let mode = match (a.kappa, a.h) {
        (Some(k), None) => GreedyMode::Kappa(k),
        (None, Some(h)) => GreedyMode::H(h),
        _ => return Err(Error::invalid("exactly one of --kappa or --h is required")),
    };
    let pi0 = hesitant_policy();
    let v0 = evaluate_policy(&mdp, &pi0)?;
    let rep = improvement_report(&mdp, &pi0, a.alpha, mode, 1e-12)?;
    let (cf0, cf1) = closed_form_mixture_value(a.c, a.gamma, a.alpha)?;
    let mut csv = Csv::new(
        "tightrope",
        seed,
        &[
            "c",
            "gamma",
            "alpha",
            "mode",
            "greedy_policy",
            "v_pi_s0",
            "v_mix_s0",
            "v_mix_s1",
            "closed_form_s0",
            "closed_form_s1",
            "min_delta",
            "improved_everywhere",
        ],
    );
    csv.row(&[
        a.c.to_string(),
        a.gamma.to_string(),
        a.alpha.to_string(),
        mode.to_string(),
        fmt_actions(&rep.greedy_policy),
        v0[S0].to_string(),
        rep.mixture_value[S0].to_string(),
        rep.mixture_value[S1].to_string(),
        cf0.to_string(),
        cf1.to_string(),
        rep.min_delta().to_string(),
        rep.improved_everywhere.to_string(),
    ]);
    Ok(CommandOutput {
        csv: Some(csv.finish()),
        out: a.out.clone(),
        ..Default::default()
    })
}

/// One row of the soft-update sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub mdp_seed: u64,
    pub kappa: f64,
    pub alpha: f64,
    pub min_delta: f64,
    pub improved_everywhere: bool,
}

/// Soft-update sufficiency sweep: for each MDP seed `seed + i` and each κ,
/// a random stochastic policy and `alpha_draws` weights from `U[κ, 1]`.
/// Rows are ordered by (MDP, κ, draw).
#[allow(clippy::too_many_arguments)]
pub fn theorem1_sweep(
    seed: u64,
    n_mdps: usize,
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    kappas: &[f64],
    alpha_draws: usize,
) -> Result<Vec<SweepRow>> {
    let cells: Vec<Result<Vec<SweepRow>>> = (0..n_mdps as u64)
        .into_par_iter()
        .map(|i| {
            let mdp_seed = seed.wrapping_add(i);
            let mdp = generate_garnet(&GarnetSpec::new(n_states, n_actions, mdp_seed).with_gamma(gamma))?;
            let mut rng = ChaCha8Rng::seed_from_u64(mdp_seed ^ 0x5eed_7001);
            let mut rows = Vec::new();
            for &kappa in kappas {
                let pi = random_policy(n_states, n_actions, &mut rng);
                for _ in 0..alpha_draws {
                    let mut alpha = kappa + (1.0 - kappa) * rng.random::<f64>();
                    if alpha == 0.0 {
                        alpha = f64::MIN_POSITIVE;
                    }
                    let rep = improvement_report(&mdp, &pi, alpha, GreedyMode::Kappa(kappa), 1e-10)?;
                    rows.push(SweepRow {
                        mdp_seed,
                        kappa,
                        alpha,
                        min_delta: rep.min_delta(),
                        improved_everywhere: rep.improved_everywhere,
                    });
                }
            }
            Ok(rows)
        })
        .collect();
    let mut out = Vec::new();
    for c in cells {
        out.extend(c?);
    }
    Ok(out)
}

fn cmd_sweep(a: &SweepArgs, seed: u64) -> Result<CommandOutput> {
    let rows = theorem1_sweep(seed, a.n_mdps, a.n_states, a.n_actions, a.gamma, &a.kappas, a.alpha_draws)?;
    let mut csv = Csv::new(
        "theorem1-sweep",
        seed,
        &["mdp_seed", "kappa", "alpha", "min_delta", "improved_everywhere"],
    );
    for r in &rows {
        csv.row(&[
            r.mdp_seed.to_string(),
            r.kappa.to_string(),
            r.alpha.to_string(),
            r.min_delta.to_string(),
            r.improved_everywhere.to_string(),
        ]);
    }
    let failures = rows.iter().filter(|r| !r.improved_everywhere).count();
    Ok(CommandOutput {
        csv: Some(csv.finish()),
        text: if a.out.is_some() {
            format!("{} cells, {failures} without improvement\n", rows.len())
        } else {
            String::new()
        },
        out: a.out.clone(),
        exit_code: 0,
    })
}

fn cmd_garnet(a: &GarnetArgs, seed: u64) -> Result<CommandOutput> {
    let mut spec = GarnetSpec::new(a.n_states, a.n_actions, seed).with_gamma(a.gamma);
    if let Some(b) = a.branching {
        spec.branching = b;
    }
    spec.reward_density = a.density;
    let mdp = generate_garnet(&spec)?;
    Ok(CommandOutput {
        csv: Some(mdp_to_json(&mdp) + "\n"),
        out: a.out.clone(),
        ..Default::default()
    })
}

fn cmd_verify(a: &VerifyArgs, seed: u64) -> Result<CommandOutput> {
    let suite: Suite = a.suite.parse()?;
    let results = run_suite(suite, seed);
    let mut text = String::new();
    for r in &results {
        let _ = writeln!(text, "{r}");
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    let _ = writeln!(text, "{} checks, {} failed", results.len(), failed);
    Ok(CommandOutput {
        csv: None,
        text,
        out: None,
        exit_code: i32::from(failed > 0),
    })
}
