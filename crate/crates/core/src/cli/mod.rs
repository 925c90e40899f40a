//! The `censorlab` command line: file loaders, run manifests and one
//! subcommand per measurement task.
//!
//! Exit status is 0 on success, 1 on operational errors and 2 on usage
//! errors. Every output file gets a sibling `*.manifest.json`.

mod load;
mod manifest;

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

pub use load::{
    load_domains, load_pfx2as, load_rules, parse_domain, parse_domains, parse_pfx2as, parse_pfx2as_line, parse_rules,
    LoadError, Loaded, Pfx2AsEntry,
};
pub use manifest::{manifest_path, RunManifest};

use crate::blocklist::{BlockRule, Blocklists, Protocol};
use crate::censorsim::{CensorConfig, Scenario, World};
use crate::evasion::{self, Lab};
use crate::inference::{self, WorldOracle};
use crate::prober::{self, CampaignPlan, IpClassification, IpStatus, Prober, ScanPlan};

const DEFAULT_SOURCE: Ipv4Addr = Ipv4Addr::new(198, 51, 100, 10);
const DEFAULT_CLIENT: Ipv4Addr = Ipv4Addr::new(198, 51, 100, 77);

#[derive(Debug, Parser)]
#[command(name = "censorlab", version, about = "Deterministic censorship-middlebox laboratory")]
pub struct Cli {
    /// Seed for all measurement randomness.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classify every address of announced prefixes as filtered or not.
    Scan(ScanArgs),
    /// Run a domain campaign against confirmed filtered targets.
    Probe(ProbeArgs),
    /// Infer the blocking rule behind one censored domain.
    Infer(InferArgs),
    /// Rank rules by the corpus names they match.
    Impact(ImpactArgs),
    /// Evaluate an evasion strategy against the simulated censor.
    Evade(EvadeArgs),
    /// Find the censor's hop with limited-TTL probes.
    Localize(LocalizeArgs),
    /// Run a scenario's packet script and export the event trace.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct Output {
    /// Output file (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Tab-separated prefix, length, ASN.
    #[arg(long)]
    pub pfx2as: PathBuf,
    /// Keep only prefixes originated by these ASes.
    #[arg(long, value_delimiter = ',')]
    pub asn: Vec<u32>,
    #[arg(long, value_delimiter = ',')]
    pub sources: Vec<Ipv4Addr>,
    #[arg(long)]
    pub pacing: Option<u32>,
    #[arg(long)]
    pub sleep_s: Option<u64>,
    #[arg(long)]
    pub retries: Option<u32>,
    /// Per-prefix filtered fractions as JSON.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    /// Campaign plan JSON.
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Domain list replacing the plan's domains.
    #[arg(long)]
    pub domains: Option<PathBuf>,
    /// Scan output whose Filtered addresses become the target pool.
    #[arg(long)]
    pub targets: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub sources: Vec<Ipv4Addr>,
    #[arg(long)]
    pub pacing: Option<u32>,
    #[arg(long)]
    pub sleep_s: Option<u64>,
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub domain: String,
    #[arg(long)]
    pub protocol: Protocol,
    #[arg(long)]
    pub budget: Option<usize>,
    /// In-country target address (first scenario host when absent).
    #[arg(long)]
    pub target: Option<Ipv4Addr>,
    #[arg(long, value_delimiter = ',')]
    pub sources: Vec<Ipv4Addr>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct ImpactArgs {
    #[arg(long)]
    pub rules: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct EvadeArgs {
    #[arg(long, conflicts_with = "builtin", required_unless_present = "builtin")]
    pub strategy: Option<String>,
    #[arg(long)]
    pub builtin: Option<String>,
    #[arg(long)]
    pub protocol: Protocol,
    #[arg(long)]
    pub domain: String,
    /// Scenario world; without one, a standard lab that blocks the domain.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_CLIENT)]
    pub client: Ipv4Addr,
    /// Packet trace of the strategy trial as JSON Lines.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct LocalizeArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub target: Ipv4Addr,
    /// A domain on the HTTP blocklist.
    #[arg(long, default_value = "twitter.com")]
    pub domain: String,
    #[arg(long, default_value_t = 30)]
    pub max_ttl: u8,
    #[arg(long, default_value_t = DEFAULT_SOURCE)]
    pub source: Ipv4Addr,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failed(_) => 1,
        }
    }
}

fn failed(e: impl std::fmt::Display) -> CliError {
    CliError::Failed(e.to_string())
}

/// Parses `args` (program name first), runs the subcommand and returns
/// the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let argv: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match dispatch(cli, argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("censorlab: {e}");
            e.exit_code()
        }
    }
}

pub fn dispatch(cli: Cli, argv: Vec<String>) -> Result<(), CliError> {
    let seed = cli.seed;
    match cli.command {
        Command::Scan(a) => scan(a, seed, argv),
        Command::Probe(a) => probe(a, seed, argv),
        Command::Infer(a) => infer(a, seed, argv),
        Command::Impact(a) => impact(a, seed, argv),
        Command::Evade(a) => evade(a, seed, argv),
        Command::Localize(a) => localize(a, seed, argv),
        Command::Simulate(a) => simulate(a, seed, argv),
    }
}

/// Writes `body` to `path` (or stdout) and, for files, the manifest.
fn emit(path: Option<&Path>, manifest: &mut RunManifest, body: &[u8]) -> Result<(), CliError> {
    match path {
        None => {
            let mut out = io::stdout().lock();
            out.write_all(body).and_then(|_| out.flush()).map_err(failed)
        }
        Some(p) => {
            std::fs::write(p, body).map_err(|e| failed(format!("cannot write {}: {e}", p.display())))?;
            manifest.outputs.push(p.to_path_buf());
            Ok(())
        }
    }
}

fn write_manifests(manifest: &RunManifest) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(manifest).map_err(failed)? + "\n";
    for out in &manifest.outputs {
        let mp = manifest_path(out);
        std::fs::write(&mp, &text).map_err(|e| failed(format!("cannot write {}: {e}", mp.display())))?;
    }
    Ok(())
}

fn jsonl<T: Serialize>(items: impl IntoIterator<Item = T>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    for it in items {
        serde_json::to_writer(&mut buf, &it).map_err(failed)?;
        buf.push(b'\n');
    }
    Ok(buf)
}

fn json<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut buf = serde_json::to_vec_pretty(value).map_err(failed)?;
    buf.push(b'\n');
    Ok(buf)
}

fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    Scenario::load(path).map_err(failed)
}

fn build_world(s: &Scenario) -> Result<World, CliError> {
    s.build_world().map_err(failed)
}

fn report_skipped<T>(what: &str, path: &Path, l: &Loaded<T>) {
    if l.skipped > 0 {
        eprintln!(
            "censorlab: skipped {} malformed {what} lines in {}",
            l.skipped,
            path.display()
        );
    }
}

fn scan(a: ScanArgs, seed: u64, argv: Vec<String>) -> Result<(), CliError> {
    let mut m = RunManifest::new("scan", argv, seed);
    m.input("scenario", Some(&a.scenario));
    m.input("pfx2as", Some(&a.pfx2as));
    let scenario = load_scenario(&a.scenario)?;
    let table = load_pfx2as(&a.pfx2as).map_err(failed)?;
    report_skipped("pfx2as", &a.pfx2as, &table);
    let prefixes: Vec<_> = table
        .records
        .iter()
        .filter(|e| a.asn.is_empty() || e.asns.iter().any(|x| a.asn.contains(x)))
        .map(Pfx2AsEntry::prefix)
        .collect();
    if prefixes.is_empty() {
        return Err(failed("no prefixes to scan"));
    }
    let mut plan = ScanPlan {
        seed,
        ..ScanPlan::default()
    };
    if !a.sources.is_empty() {
        plan.sources = a.sources;
    }
    plan.pacing_per_sec = a.pacing.unwrap_or(plan.pacing_per_sec);
    plan.sleep_s = a.sleep_s.unwrap_or(plan.sleep_s);
    plan.retries = a.retries.unwrap_or(plan.retries);

    let mut world = build_world(&scenario)?;
    m.start_us = world.now();
    let result = prober::scan_prefixes(&mut world, &prefixes, &plan).map_err(failed)?;
    m.end_us = world.now();
    emit(a.output.out.as_deref(), &mut m, &jsonl(&result.ips)?)?;
    if let Some(p) = &a.summary {
        emit(Some(p), &mut m, &json(&result.fractions)?)?;
    }
    write_manifests(&m)
}

/// Addresses marked Filtered for any of `protocols` in a scan output.
fn filtered_targets(path: &Path, protocols: &[Protocol]) -> Result<Vec<Ipv4Addr>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| failed(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let c: IpClassification =
            serde_json::from_str(line).map_err(|e| failed(format!("{}:{}: {e}", path.display(), i + 1)))?;
        if protocols.iter().any(|p| c.status.get(p) == Some(&IpStatus::Filtered)) {
            out.push(c.ip);
        }
    }
    Ok(out)
}

fn probe(a: ProbeArgs, seed: u64, argv: Vec<String>) -> Result<(), CliError> {
    let mut m = RunManifest::new("probe", argv, seed);
    m.input("plan", Some(&a.plan));
    m.input("scenario", a.scenario.as_deref());
    m.input("domains", a.domains.as_deref());
    m.input("targets", a.targets.as_deref());
    let text =
        std::fs::read_to_string(&a.plan).map_err(|e| failed(format!("cannot read {}: {e}", a.plan.display())))?;
    let mut plan: CampaignPlan =
        serde_json::from_str(&text).map_err(|e| failed(format!("{}: {e}", a.plan.display())))?;
    plan.seed = seed;
    if let Some(d) = &a.domains {
        let l = load_domains(d).map_err(failed)?;
        report_skipped("domain", d, &l);
        plan.domains = l.records;
    }
    if let Some(t) = &a.targets {
        plan.targets = filtered_targets(t, &plan.protocols)?;
    }
    if !a.sources.is_empty() {
        plan.sources = a.sources;
    }
    plan.pacing_per_sec = a.pacing.unwrap_or(plan.pacing_per_sec);
    plan.sleep_s = a.sleep_s.unwrap_or(plan.sleep_s);
    plan.validate().map_err(failed)?;

    let scenario = match &a.scenario {
        Some(p) => load_scenario(p)?,
        None => Scenario::default(),
    };
    let mut world = build_world(&scenario)?;
    m.start_us = world.now();
    let result = prober::run_campaign(&mut world, &plan).map_err(failed)?;
    m.end_us = world.now();
    emit(a.output.out.as_deref(), &mut m, &jsonl(&result.records)?)?;
    if let Some(p) = &a.summary {
        emit(Some(p), &mut m, &json(&result.summary)?)?;
    }
    write_manifests(&m)
}

/// First scenario host, else the first address of the first path prefix.
fn default_target(s: &Scenario) -> Option<Ipv4Addr> {
    s.hosts.first().map(|h| h.ip).or_else(|| {
        s.paths
            .first()
            .map(|p| p.prefix.hosts().next().unwrap_or(p.prefix.network()))
    })
}

#[derive(Serialize)]
struct InferOutput<'a> {
    domain: &'a str,
    protocol: Protocol,
    rule: String,
    probes_used: usize,
    transcript: &'a [inference::TranscriptEntry],
}

fn infer(a: InferArgs, seed: u64, argv: Vec<String>) -> Result<(), CliError> {
    let mut m = RunManifest::new("infer", argv, seed);
    m.input("scenario", Some(&a.scenario));
    let domain = parse_domain(&a.domain).map_err(CliError::Usage)?;
    let scenario = load_scenario(&a.scenario)?;
    let target = a
        .target
        .or_else(|| default_target(&scenario))
        .ok_or_else(|| failed("scenario has no hosts or paths; pass --target"))?;
    let sources = if a.sources.is_empty() {
        vec![DEFAULT_SOURCE]
    } else {
        a.sources
    };
    let mut world = build_world(&scenario)?;
    let mut prober = Prober::new(sources, seed);
    m.start_us = world.now();
    let mut oracle = WorldOracle::new(&mut world, &mut prober, a.protocol, target);
    let result = inference::infer_rule(&domain, a.protocol, &mut oracle, a.budget, seed);
    m.end_us = world.now();
    let r = result.map_err(failed)?;
    let body = json(&InferOutput {
        domain: &domain,
        protocol: a.protocol,
        rule: r.rule.to_string(),
        probes_used: r.probes_used,
        transcript: &r.transcript,
    })?;
    emit(a.output.out.as_deref(), &mut m, &body)?;
    write_manifests(&m)
}

fn impact(a: ImpactArgs, seed: u64, argv: Vec<String>) -> Result<(), CliError> {
    let mut m = RunManifest::new("impact", argv, seed);
    m.input("rules", Some(&a.rules));
    m.input("corpus", Some(&a.corpus));
    let rules = load_rules(&a.rules).map_err(failed)?;
    report_skipped("rule", &a.rules, &rules);
    let report = inference::impact_report(&rules.records, &a.corpus)
        .map_err(|e| failed(format!("cannot read {}: {e}", a.corpus.display())))?;
    emit(a.output.out.as_deref(), &mut m, &jsonl(&report)?)?;
    write_manifests(&m)
}

fn evade(a: EvadeArgs, seed: u64, argv: Vec<String>) -> Result<(), CliError> {
    let mut m = RunManifest::new("evade", argv, seed);
    m.input("scenario", a.scenario.as_deref());
    let domain = parse_domain(&a.domain).map_err(CliError::Usage)?;
    let strategy = match (&a.strategy, &a.builtin) {
        (Some(t), _) => evasion::parse_strategy(t).map_err(|e| CliError::Usage(format!("strategy: {e}")))?,
        (None, Some(n)) => evasion::builtin(n).map_err(|e| CliError::Usage(e.to_string()))?,
        (None, None) => return Err(CliError::Usage("pass --strategy or --builtin".into())),
    };
    let mut lab = match &a.scenario {
        Some(p) => Lab::from_scenario(load_scenario(p)?, a.client),
        None => {
            let rule = BlockRule::new(domain.clone(), false, false).map_err(failed)?;
            let mut lab = Lab::standard(CensorConfig::with_blocklists(Blocklists::uniform([rule])), &[&domain]);
            lab.client = a.client;
            lab
        }
    };
    lab.seed = seed;
    lab.trace = a.trace.is_some();
    let report = evasion::evaluate(&strategy, a.protocol, &domain, &lab).map_err(failed)?;
    emit(a.output.out.as_deref(), &mut m, &json(&report)?)?;
    if let Some(p) = &a.trace {
        emit(Some(p), &mut m, &jsonl(&report.trace)?)?;
    }
    write_manifests(&m)
}

fn localize(a: LocalizeArgs, seed: u64, argv: Vec<String>) -> Result<(), CliError> {
    let mut m = RunManifest::new("localize", argv, seed);
    m.input("scenario", Some(&a.scenario));
    let scenario = load_scenario(&a.scenario)?;
    let mut world = build_world(&scenario)?;
    let mut prober = Prober::new(vec![a.source], seed);
    m.start_us = world.now();
    let loc = prober::localize(&mut world, &mut prober, a.target, &a.domain, a.max_ttl).map_err(failed)?;
    m.end_us = world.now();
    emit(a.output.out.as_deref(), &mut m, &json(&loc)?)?;
    write_manifests(&m)
}

#[derive(Serialize)]
struct SimulateSummary {
    end_us: u64,
    injections: usize,
    trace_records: usize,
}

fn simulate(a: SimulateArgs, seed: u64, argv: Vec<String>) -> Result<(), CliError> {
    let mut m = RunManifest::new("simulate", argv, seed);
    m.input("scenario", Some(&a.scenario));
    let scenario = load_scenario(&a.scenario)?;
    let mut world = build_world(&scenario)?;
    world.enable_trace();
    m.start_us = world.now();
    scenario.run_script(&mut world).map_err(failed)?;
    m.end_us = world.now();
    let summary = SimulateSummary {
        end_us: world.now(),
        injections: world.injections().len(),
        trace_records: world.trace().len(),
    };
    emit(a.output.out.as_deref(), &mut m, &json(&summary)?)?;
    if let Some(p) = &a.trace {
        let f = File::create(p).map_err(|e| failed(format!("cannot write {}: {e}", p.display())))?;
        let mut w = BufWriter::new(f);
        world.write_trace(&mut w).and_then(|_| w.flush()).map_err(failed)?;
        m.outputs.push(p.clone());
    }
    write_manifests(&m)
}
