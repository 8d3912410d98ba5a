//! Command-line front end: argument parsing, dispatch and file output.
//!
//! Every file written under `--out` is a pure function of the arguments and
//! seeds; nothing depends on the clock or on thread scheduling.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::exactkernel::{self, build_kernel, exact_k_drift_all, uub_check, verify_lemma};
use crate::gallery;
use crate::lyapunov::{drift_profile, CountVector};
use crate::model::{solve_traffic, validate_network, NetworkSpec};
use crate::reduction::{build_reduction, verify_reduction, Slack};
use crate::simulate::{
    coupled_run_unchecked, monotone_coupled_run_model, NetworkModel, PolicyKind, PriorityOrder,
    RoutedScenario,
};
use crate::stability::{default_stride, stability_experiment, StabilityReport, StabilityThresholds};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "qnet", version, about = "Multiclass queueing network analysis and simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Traffic solution, loads, visit counts and drift constants.
    Analyze(RunConfig),
    /// Build and check the single-rate reduction S'.
    Reduce(RunConfig),
    /// Simulate and assess stability over seeds.
    Simulate(RunConfig),
    /// Couple S with its reduction and check total-count dominance.
    Couple(RunConfig),
    /// Compare a start in --x0 against the empty start queue by queue.
    Dominate(RunConfig),
    /// Exact truncated kernel: empty-queue ordering and k-step drifts.
    Kernel(RunConfig),
    /// Stability verdicts over a grid of arrival-rate multipliers.
    Sweep(RunConfig),
    /// Fixed-route priority scenario against its class-independent analogue.
    Demo(RunConfig),
}

#[derive(Debug, Clone, Args)]
pub struct RunConfig {
    /// Network JSON (NetworkSpec, or a routed scenario for simulate/demo).
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// fifo | lifo | priority | random (sweep also accepts all).
    #[arg(long, default_value = "fifo")]
    pub policy: String,
    /// Priority ranking: "1,0" for all servers or "1,0;0,1" per server.
    #[arg(long)]
    pub priority_order: Option<String>,
    #[arg(long, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub horizon: u64,
    /// A count N (seeds 0..N) or a comma-separated list.
    #[arg(long, default_value = "10")]
    pub seeds: String,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u32).range(1..))]
    pub cap: u32,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub n_max: u64,
    /// Step counts for k-step drift tables.
    #[arg(long, default_value = "1,10,100")]
    pub k: String,
    /// Output directory (default `qnet-out`; analyze writes only if given).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Keep every stride-th state in traces (default about 10^4 records).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub stride: Option<u64>,
    /// Sweep grid as multiples of the critical arrival rate, so a
    /// multiplier equals the busiest server's load.
    #[arg(long, default_value = "0.5,0.8,0.95,1.2")]
    pub multipliers: String,
    /// Start state for dominate, counts flattened class-major.
    #[arg(long)]
    pub x0: Option<String>,
    /// Common slack eta for the reduction (default: per-entry, see `Slack::default_for`).
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long, default_value_t = 0.15)]
    pub nested_tolerance: f64,
    #[arg(long, default_value_t = 0.95)]
    pub confidence: f64,
}

impl RunConfig {
    fn spec_path(&self) -> Result<&Path> {
        let p = self
            .spec
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument("--spec is required".into()))?;
        if !p.exists() {
            return Err(Error::InvalidArgument(format!("{} does not exist", p.display())));
        }
        Ok(p)
    }

    fn load_spec(&self) -> Result<NetworkSpec> {
        let spec = NetworkSpec::from_path(self.spec_path()?)?;
        validate_network(&spec).into_result()?;
        Ok(spec)
    }

    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("qnet-out"))
    }

    fn seeds(&self) -> Result<Vec<u64>> {
        parse_seeds(&self.seeds)
    }

    fn stride(&self) -> u64 {
        self.stride.unwrap_or_else(|| default_stride(self.horizon))
    }

    fn thresholds(&self) -> Result<StabilityThresholds> {
        if !(self.nested_tolerance > 0.0) || !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::InvalidArgument("need nested_tolerance > 0 and 0 < confidence < 1".into()));
        }
        Ok(StabilityThresholds {
            nested_tolerance: self.nested_tolerance,
            confidence: self.confidence,
            ..Default::default()
        })
    }

    fn priority(&self) -> Result<Option<PriorityOrder>> {
        self.priority_order.as_deref().map(parse_priority).transpose()
    }

    fn policy(&self) -> Result<PolicyKind> {
        policy_from(&self.policy, self.priority()?)
    }

    fn policies(&self) -> Result<Vec<PolicyKind>> {
        if self.policy.eq_ignore_ascii_case("all") {
            let order = self.priority()?.unwrap_or(PriorityOrder::Global(Vec::new()));
            Ok(["fifo", "lifo", "priority", "random"]
                .iter()
                .map(|p| policy_from(p, Some(order.clone())))
                .collect::<Result<_>>()?)
        } else {
            Ok(vec![self.policy()?])
        }
    }

    fn slack(&self, spec: &NetworkSpec, sol: &crate::model::TrafficSolution) -> Slack {
        match self.eta {
            Some(e) => Slack::Scalar(e),
            None => Slack::default_for(spec, sol),
        }
    }
}

fn policy_from(name: &str, order: Option<PriorityOrder>) -> Result<PolicyKind> {
    let base = PolicyKind::parse(name, None)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown policy {name}")))?;
    Ok(match (base, order) {
        (PolicyKind::StaticPriority(_), Some(o)) => PolicyKind::StaticPriority(o),
        (p, _) => p,
    })
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::InvalidArgument(format!("bad {what} entry {s:?}"))))
        .collect()
}

/// `"N"` means seeds `0..N`; anything with a comma is an explicit list.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let seeds: Vec<u64> = if text.contains(',') {
        parse_list(text, "seed")?
    } else {
        let n: u64 = text
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad seed count {text:?}")))?;
        (0..n).collect()
    };
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("need at least one seed".into()));
    }
    Ok(seeds)
}

pub fn parse_priority(text: &str) -> Result<PriorityOrder> {
    if text.contains(';') {
        Ok(PriorityOrder::PerServer(
            text.split(';').map(|s| parse_list(s, "priority")).collect::<Result<_>>()?,
        ))
    } else {
        Ok(PriorityOrder::Global(parse_list(text, "priority")?))
    }
}

/// Probabilistic spec or fixed-route scenario, told apart by a `routes` key.
pub enum LoadedNetwork {
    Spec(NetworkSpec),
    Routed(RoutedScenario),
}

pub fn load_network(path: &Path) -> Result<LoadedNetwork> {
    let text = fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    if value.get("routes").is_some() {
        Ok(LoadedNetwork::Routed(RoutedScenario::from_json_str(&text)?))
    } else {
        let spec: NetworkSpec = serde_json::from_value(value)?;
        validate_network(&spec).into_result()?;
        Ok(LoadedNetwork::Spec(spec))
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)?;
    Ok(())
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(dir, name, &text)
}

fn fmt_row(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:10.6}")).collect::<Vec<_>>().join(" ")
}

pub fn analyze(cfg: &RunConfig) -> Result<String> {
    let spec = cfg.load_spec()?;
    let sol = solve_traffic(&spec)?;
    let mut out = String::new();
    let _ = writeln!(out, "servers {}  classes {}  lambda {}", spec.num_servers, spec.num_classes, spec.lambda);
    let _ = writeln!(out, "Lambda[class][server]:");
    for row in &sol.arrival_rate {
        let _ = writeln!(out, "  {}", fmt_row(row));
    }
    let _ = writeln!(out, "rho[class][server]:");
    for row in &sol.load {
        let _ = writeln!(out, "  {}", fmt_row(row));
    }
    let _ = writeln!(out, "server load: {}", fmt_row(&sol.server_load));
    let _ = writeln!(out, "Gamma (visit counts):");
    for row in &sol.visit_counts {
        let _ = writeln!(out, "  {}", fmt_row(row));
    }
    let _ = writeln!(out, "traffic residual {:.3e}", sol.traffic_residual);
    let profile = drift_profile(&spec, &sol).ok();
    match &profile {
        Some(p) => {
            let _ = writeln!(out, "Q = {}", p.uniformization_rate);
            let _ = writeln!(out, "eta:     {}", fmt_row(&p.eta));
            let _ = writeln!(out, "epsilon: {}", fmt_row(&p.epsilon));
        }
        None => {
            let _ = writeln!(out, "drift constants need a single service rate; skipped");
        }
    }
    for (j, load) in sol.server_load.iter().enumerate() {
        if *load < 1.0 {
            let _ = writeln!(out, "traffic condition holds at server {j} (load {load:.6})");
        } else {
            let _ = writeln!(out, "traffic condition FAILS at server {j} (load {load:.6})");
        }
    }
    if let Some(dir) = &cfg.out {
        write_json(dir, "report.json", &json!({ "traffic": sol, "drift": profile }))?;
    }
    Ok(out)
}

pub fn reduce(cfg: &RunConfig) -> Result<String> {
    let spec = cfg.load_spec()?;
    let sol = solve_traffic(&spec)?;
    let red = build_reduction(&spec, &sol, &cfg.slack(&spec, &sol))?;
    let report = verify_reduction(&red);
    write_json(&cfg.out_dir(), "report.json", &json!({ "reduction": red, "checks": report }))?;
    let mut out = format!(
        "lambda' = {}  mu = {}  scale = {}  Q1 = {}  Q2 = {}\n",
        red.lambda_prime, red.mu, red.scale, red.q1, red.q2
    );
    out.push_str(&report.ledger());
    if !report.all_passed() {
        return Err(Error::Infeasible(format!("violated: {}", report.violations().join(", "))));
    }
    Ok(out)
}

fn network_model(cfg: &RunConfig) -> Result<(Arc<NetworkModel>, PolicyKind)> {
    match load_network(cfg.spec_path()?)? {
        LoadedNetwork::Spec(s) => Ok((Arc::new(NetworkModel::probabilistic(&s)?), cfg.policy()?)),
        LoadedNetwork::Routed(sc) => {
            let policy = sc.policy.clone();
            Ok((Arc::new(NetworkModel::routed(&sc)?), policy))
        }
    }
}

fn summary_line(label: &str, policy: &str, r: &StabilityReport) -> String {
    format!(
        "{label},{policy},{},{:.9e},{:.9e},{:.9e},{:.6},{:.6},{:.6},{}\n",
        r.horizon, r.slope, r.slope_lower, r.slope_upper, r.nested_spread, r.r_squared, r.final_mean_total, r.verdict
    )
}

const SUMMARY_HEADER: &str =
    "label,policy,horizon,slope,slope_lower,slope_upper,nested_spread,r_squared,final_mean_total,verdict\n";

pub fn simulate(cfg: &RunConfig) -> Result<String> {
    let (model, policy) = network_model(cfg)?;
    let seeds = cfg.seeds()?;
    let (runs, report) =
        stability_experiment(model, &policy, cfg.horizon, &seeds, cfg.stride(), &cfg.thresholds()?)?;
    for r in &runs {
        write_file(&cfg.out_dir(), &format!("trace_{}.csv", r.seed), &r.trace.to_csv())?;
    }
    write_json(&cfg.out_dir(), "report.json", &json!({ "policy": policy, "stability": report }))?;
    let summary = format!("{SUMMARY_HEADER}{}", summary_line("simulate", policy.name(), &report));
    write_file(&cfg.out_dir(), "summary.csv", &summary)?;
    Ok(format!("verdict: {}\n", report.verdict))
}

pub fn couple(cfg: &RunConfig) -> Result<String> {
    let spec = cfg.load_spec()?;
    let sol = solve_traffic(&spec)?;
    let red = build_reduction(&spec, &sol, &cfg.slack(&spec, &sol))?;
    let policy = cfg.policy()?;
    let seeds = cfg.seeds()?;
    let stride = cfg.stride();
    let outcomes = seeds
        .par_iter()
        .map(|&s| coupled_run_unchecked(&red, &policy, None, cfg.horizon, s, stride).map(|o| (s, o)))
        .collect::<Result<Vec<_>>>()?;
    let mut reports = Vec::new();
    let mut summary = String::from("seed,epochs,violations,first_violation_epoch,min_margin\n");
    for (seed, o) in &outcomes {
        let mut csv = String::from("epoch,total_s,total_s_prime\n");
        for (a, b) in o.trace_s.records.iter().zip(&o.trace_s_prime.records) {
            let _ = writeln!(csv, "{},{},{}", a.epoch, a.total, b.total);
        }
        write_file(&cfg.out_dir(), &format!("trace_{seed}.csv"), &csv)?;
        let first = o.report.first_violation_epoch.map_or(String::new(), |e| e.to_string());
        let _ = writeln!(
            summary,
            "{seed},{},{},{first},{}",
            o.report.epochs, o.report.violations, o.report.min_margin
        );
        reports.push(json!({ "seed": seed, "report": o.report }));
    }
    write_json(&cfg.out_dir(), "report.json", &json!({ "reduction": red, "runs": reports }))?;
    write_file(&cfg.out_dir(), "summary.csv", &summary)?;
    if let Some((seed, o)) = outcomes.iter().find(|(_, o)| !o.report.dominance_ok) {
        return Err(Error::CouplingBroken {
            epoch: o.report.first_violation_epoch.unwrap_or(0),
            detail: format!("total(S') < total(S) with seed {seed}"),
        });
    }
    Ok(format!("dominance held on {} seeds\n", outcomes.len()))
}

pub fn dominate(cfg: &RunConfig) -> Result<String> {
    let spec = cfg.load_spec()?;
    if spec.single_rate().is_none() {
        return Err(Error::NotSingleRate);
    }
    let x0 = match &cfg.x0 {
        Some(t) => {
            let flat: Vec<u32> = parse_list(t, "x0")?;
            if flat.len() != spec.num_classes * spec.num_servers {
                return Err(Error::DimensionMismatch {
                    expected: format!("{} counts", spec.num_classes * spec.num_servers),
                    got: format!("{}", flat.len()),
                });
            }
            CountVector::new(flat.chunks(spec.num_servers).map(<[u32]>::to_vec).collect())?
        }
        None => {
            let mut x = CountVector::zeros(spec.num_classes, spec.num_servers);
            for s in 0..spec.num_servers {
                x.set(0, s, 5);
            }
            x
        }
    };
    let model = Arc::new(NetworkModel::probabilistic(&spec)?);
    let policy = cfg.policy()?;
    let seeds = cfg.seeds()?;
    let reports = seeds
        .par_iter()
        .map(|&s| monotone_coupled_run_model(model.clone(), &policy, &x0, cfg.horizon, s).map(|r| (s, r)))
        .collect::<Result<Vec<_>>>()?;
    let mut summary = String::from("seed,epochs,violations,first_violation_epoch,min_margin\n");
    for (seed, r) in &reports {
        let first = r.first_violation_epoch.map_or(String::new(), |e| e.to_string());
        let _ = writeln!(summary, "{seed},{},{},{first},{}", r.epochs, r.violations, r.min_margin);
    }
    let runs: Vec<_> = reports.iter().map(|(s, r)| json!({ "seed": s, "report": r })).collect();
    write_json(&cfg.out_dir(), "report.json", &json!({ "x0": x0, "runs": runs }))?;
    write_file(&cfg.out_dir(), "summary.csv", &summary)?;
    if let Some((seed, r)) = reports.iter().find(|(_, r)| !r.dominance_ok) {
        return Err(Error::CouplingBroken {
            epoch: r.first_violation_epoch.unwrap_or(0),
            detail: format!("a queue of the x0 copy fell below the empty copy with seed {seed}"),
        });
    }
    Ok(format!("per-queue dominance held on {} seeds\n", reports.len()))
}

pub fn kernel(cfg: &RunConfig) -> Result<String> {
    let spec = cfg.load_spec()?;
    let chain = build_kernel(&spec, cfg.cap)?;
    let ks: Vec<u64> = parse_list(&cfg.k, "k")?;
    let gamma = chain.solution().visit_counts.clone();
    let mut lemma = Vec::new();
    let mut uub = Vec::new();
    let mut drift = String::from("server,state,k,direct,identity,interior\n");
    for j in 0..spec.num_servers {
        lemma.push(verify_lemma(&chain, j, cfg.n_max)?);
        for &k in &ks {
            uub.push(uub_check(&chain, j, k)?);
            let all = exact_k_drift_all(&chain, &gamma, j, k)?;
            for (state, d) in chain.states().iter().zip(&all) {
                let label: Vec<String> = state.iter().map(u32::to_string).collect();
                let _ = writeln!(
                    drift,
                    "{j},{},{k},{:.15e},{:.15e},{}",
                    label.join(" "),
                    d.direct,
                    d.identity,
                    d.interior
                );
            }
        }
    }
    write_json(
        &cfg.out_dir(),
        "report.json",
        &json!({
            "cap": chain.cap(),
            "states": chain.num_states(),
            "max_row_sum_error": chain.max_row_sum_error(),
            "state_bound": exactkernel::max_states_limit(),
            "lemma": lemma,
            "uub": uub,
        }),
    )?;
    write_file(&cfg.out_dir(), "drift.csv", &drift)?;
    let mut out = String::new();
    for r in &lemma {
        let _ = writeln!(
            out,
            "server {}: min slack {:+.3e} at {:?}, n={} ({})",
            r.server,
            r.min_slack,
            r.tightest_state,
            r.tightest_n,
            if r.passed { "ok" } else { "VIOLATED" }
        );
    }
    for u in &uub {
        let _ = writeln!(
            out,
            "server {} k={}: {} interior states, path gap {:.2e}, excess over empty state {:+.3e} ({})",
            u.server,
            u.k,
            u.interior_states,
            u.max_path_gap,
            u.max_excess_over_zero,
            if u.passed() { "ok" } else { "VIOLATED" }
        );
    }
    Ok(out)
}

pub fn sweep(cfg: &RunConfig) -> Result<String> {
    let spec = cfg.load_spec()?;
    let multipliers: Vec<f64> = parse_list(&cfg.multipliers, "multiplier")?;
    if multipliers.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
        return Err(Error::InvalidArgument("multipliers must be nonnegative".into()));
    }
    let seeds = cfg.seeds()?;
    let thresholds = cfg.thresholds()?;
    let mut summary = String::from(SUMMARY_HEADER);
    let mut points = Vec::new();
    let mut out = String::new();
    let base_load = solve_traffic(&spec)?.server_load.iter().cloned().fold(0.0, f64::max);
    if !(base_load > 0.0) {
        return Err(Error::InvalidArgument("sweep needs a network with positive load".into()));
    }
    let critical = spec.lambda / base_load;
    for policy in cfg.policies()? {
        for &m in &multipliers {
            let scaled = spec.with_lambda(critical * m);
            let max_load = solve_traffic(&scaled)?.server_load.iter().cloned().fold(0.0, f64::max);
            let model = Arc::new(NetworkModel::probabilistic(&scaled)?);
            let (_, rep) = stability_experiment(model, &policy, cfg.horizon, &seeds, cfg.stride(), &thresholds)?;
            summary.push_str(&summary_line(&format!("x{m}"), policy.name(), &rep));
            let _ = writeln!(out, "{:<8} x{m:<6} max load {max_load:.4}: {}", policy.name(), rep.verdict);
            points.push(json!({
                "policy": policy,
                "multiplier": m,
                "lambda": scaled.lambda,
                "max_load": max_load,
                "stability": rep,
            }));
        }
    }
    write_json(&cfg.out_dir(), "report.json", &json!({ "points": points }))?;
    write_file(&cfg.out_dir(), "summary.csv", &summary)?;
    Ok(out)
}

pub fn demo(cfg: &RunConfig) -> Result<String> {
    let scenario = match &cfg.spec {
        Some(_) => match load_network(cfg.spec_path()?)? {
            LoadedNetwork::Routed(sc) => sc,
            LoadedNetwork::Spec(_) => {
                return Err(Error::InvalidArgument("demo needs a routed scenario".into()))
            }
        },
        None => gallery::rybko_stolyar_demo(),
    };
    let (analogue, analogue_policy) = scenario.class_independent_analogue()?;
    let seeds = cfg.seeds()?;
    let thresholds = cfg.thresholds()?;
    let stride = cfg.stride();
    let (_, routed) = stability_experiment(
        Arc::new(NetworkModel::routed(&scenario)?),
        &scenario.policy,
        cfg.horizon,
        &seeds,
        stride,
        &thresholds,
    )?;
    let (_, probabilistic) = stability_experiment(
        Arc::new(NetworkModel::probabilistic(&analogue)?),
        &analogue_policy,
        cfg.horizon,
        &seeds,
        stride,
        &thresholds,
    )?;
    let loads = solve_traffic(&analogue)?.server_load;
    write_json(
        &cfg.out_dir(),
        "report.json",
        &json!({
            "station_loads": scenario.station_loads(),
            "routed": routed,
            "analogue_spec": analogue,
            "analogue_policy": analogue_policy,
            "analogue_loads": loads,
            "analogue": probabilistic,
        }),
    )?;
    let summary = format!(
        "{SUMMARY_HEADER}{}{}",
        summary_line("routed", scenario.policy.name(), &routed),
        summary_line("analogue", analogue_policy.name(), &probabilistic)
    );
    write_file(&cfg.out_dir(), "summary.csv", &summary)?;
    Ok(format!(
        "fixed routes: {} (slope {:.3e}, R^2 {:.3})\nclass-independent analogue: {} (slope {:.3e})\n",
        routed.verdict, routed.slope, routed.r_squared, probabilistic.verdict, probabilistic.slope
    ))
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::CouplingBroken { .. } => EXIT_INTERNAL,
        _ => EXIT_CONFIG,
    }
}

/// Runs a parsed command; returns text for stdout.
pub fn execute(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Analyze(c) => analyze(c),
        Command::Reduce(c) => reduce(c),
        Command::Simulate(c) => simulate(c),
        Command::Couple(c) => couple(c),
        Command::Dominate(c) => dominate(c),
        Command::Kernel(c) => kernel(c),
        Command::Sweep(c) => sweep(c),
        Command::Demo(c) => demo(c),
    }
}

/// Entry point shared by the binary and tests: parses `args`, runs, and
/// returns the process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(text) => {
            print!("{text}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
