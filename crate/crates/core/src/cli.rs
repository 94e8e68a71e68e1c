//! Command-line front end: one subcommand per experiment, CSV or JSON
//! output, and a canonical config hash embedded in every report.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::branching::{
    carne_bound, chernoff_bound, binomial_cdf, chernoff_grid, displacement_tail_check, run_branching, sweep_one,
    tiny_box_sweep, OffspringLaw, SweepRow,
};
use crate::error::Error;
use crate::exceptional::{estimate_en, line_x, run_exceptional, EnEstimate, StopRule};
use crate::greedy::{greedy_summary, run_greedy_path};
use crate::lattice::{BoundingBox, FiniteSubgraph, Site, SubgraphOracle};
use crate::multiwalk::{run_multiwalk, MultiStop};
use crate::oracles::{
    decay_fit, decay_fit_values, escape_exponent, excursion_chain_en, gambler_exact, gambler_mc, local_time_exact,
    local_time_mc, srw_dp, teleport_f1f2,
};
use crate::report::{fmt_f64, fmt_seed, parse_report, ExperimentReport, ReportRow, REPORT_HEADER};
use crate::stats::{wilson, Z95};
use crate::stream::{LetterStream, StreamSeed};
use crate::walk::run_induced;

/// Version of the config and output layout.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Runtime(_) => "runtime",
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "exwalk", version, about = "Induced random walks on lattice subgraphs: simulations and exact checks")]
pub struct Cli {
    /// Master seed; required by every Monte Carlo subcommand.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of independent trials.
    #[arg(long, global = true)]
    pub trials: Option<u64>,
    /// Worker threads (0 = all cores). Output does not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Gambler's ruin: a fair walk from 1 reaches n before 0 with probability 1/n.
    Gambler(GamblerArgs),
    /// Local time at 0: the simple random walk on the integers makes at most
    /// 10 sqrt(N) expected visits to 0 in N steps.
    Localtime(LocaltimeArgs),
    /// Greedy north-east path: the unrolled walk steps outward with
    /// probability 2/3 at the ends of its range and is fair inside.
    Greedy(GreedyArgs),
    /// Exceptional graph for one walk: lines at x = 2^n - 1, one connecting
    /// row per gap, forced rightward acceptance.
    Exceptional(ExceptionalArgs),
    /// Back-crossing probability: after reaching line n the walk hits line
    /// n-1 before line n+1.
    En(EnArgs),
    /// Back-crossing probability from the abstract excursion chain (2/3 end
    /// probability off the connecting row, 1/2 on it).
    EnOracle(EnOracleArgs),
    /// Teleporting excursion chain: frequencies of no positive success and of
    /// some negative success among 3^n excursions.
    Teleport(TeleportArgs),
    /// Exceptional graph shared by several walks built in phases; back-crossing
    /// of walk i decays in n.
    Multi(MultiArgs),
    /// Branching random walk on the full lattice with the reduced offspring
    /// law (one extra child with probability eps).
    Branching(BranchingArgs),
    /// Every spanning subgraph of the [-1,1]^2 box: a branching walk certifies
    /// that some branch visits every reachable site r times.
    Tinybox(TinyboxArgs),
    /// Carne-Varopoulos bound p_t(x,y) <= 2 sqrt(deg y / deg x) exp(-rho^2/2t)
    /// on a finite graph, checked exactly.
    Carne(CarneArgs),
    /// Chernoff lower tail P(Bin(n,p) <= (1-eps) n p) <= exp(-eps^2 n p / 2),
    /// checked exactly.
    Chernoff(ChernoffArgs),
    /// Displacement tail P(dist(0, S_n) > delta n) against
    /// sqrt(8d) (2n+1)^d exp(-delta^2 n / 2).
    Displacement(DisplacementArgs),
    /// Exponential decay fit of back-crossing estimates read from a CSV.
    Fit(FitArgs),
    /// Growth exponent of the maximal displacement of a walk.
    Escape(EscapeArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GamblerArgs {
    #[arg(long, default_value_t = 10)]
    pub n: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct LocaltimeArgs {
    /// Number of steps.
    #[arg(long = "N", default_value_t = 100)]
    #[serde(rename = "N")]
    pub big_n: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct GreedyArgs {
    #[arg(long, default_value_t = 100_000)]
    pub letters: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct ExceptionalArgs {
    #[arg(long, default_value_t = 4)]
    pub stages: u32,
    /// Letter budget.
    #[arg(long, default_value_t = 10_000_000)]
    pub letters: u64,
    #[arg(long)]
    pub snapshot: Option<PathBuf>,
    #[arg(long)]
    pub dump_transcript: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EnArgs {
    #[arg(long, default_value_t = 2)]
    pub n: u32,
    /// Letter budget per trial; trials that exhaust it are censored.
    #[arg(long, default_value_t = 10_000_000)]
    pub horizon: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct EnOracleArgs {
    #[arg(long, default_value_t = 2)]
    pub n: u32,
}

#[derive(Debug, Args, Serialize)]
pub struct TeleportArgs {
    #[arg(long, default_value_t = 2)]
    pub n: u32,
}

#[derive(Debug, Args, Serialize)]
pub struct MultiArgs {
    #[arg(long, default_value_t = 3)]
    pub walks: usize,
    #[arg(long, default_value_t = 3)]
    pub phases: u32,
    /// Letter budget summed over all walks.
    #[arg(long, default_value_t = 50_000_000)]
    pub letters: u64,
    #[arg(long)]
    pub snapshot: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct BranchingArgs {
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    #[arg(long, default_value_t = 0.5)]
    pub eps: f64,
    #[arg(long, default_value_t = 20)]
    pub horizon: u64,
    #[arg(long, default_value_t = 1_000_000)]
    pub cap: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct TinyboxArgs {
    #[arg(long, default_value_t = 0.5)]
    pub eps: f64,
    #[arg(long, default_value_t = 10_000)]
    pub horizon: u64,
    #[arg(long, default_value_t = 3)]
    pub r: u64,
    #[arg(long, default_value_t = 100_000)]
    pub cap: usize,
    /// Run only this subgraph id.
    #[arg(long)]
    pub id: Option<u64>,
}

#[derive(Debug, Args, Serialize)]
pub struct CarneArgs {
    /// `path:N`, `grid:K` or `comb:W,T`.
    #[arg(long, default_value = "path:9")]
    pub graph: String,
    #[arg(long, default_value_t = 50)]
    pub tmax: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct ChernoffArgs {
    /// Single n, or the largest n of the grid when p and eps are absent.
    #[arg(long, default_value_t = 30)]
    pub n: u64,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct DisplacementArgs {
    /// `full:D` for the whole lattice, or a finite graph as for `carne`.
    #[arg(long, default_value = "full:2")]
    pub graph: String,
    #[arg(long, default_value_t = 0.5)]
    pub delta: f64,
    #[arg(long, default_value_t = 200)]
    pub n: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    /// Report CSV or back-crossing CSV.
    #[arg(long = "in")]
    #[serde(rename = "in")]
    pub input: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EscapeSource {
    Exceptional,
    Greedy,
    Lattice,
}

#[derive(Debug, Args, Serialize)]
pub struct EscapeArgs {
    #[arg(long, value_enum, default_value_t = EscapeSource::Exceptional)]
    pub source: EscapeSource,
    #[arg(long, default_value_t = 1_000_000)]
    pub letters: u64,
}

/// Everything that determines a run's output.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub format_version: u32,
    pub subcommand: String,
    pub params: serde_json::Value,
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Format,
}

impl RunConfig {
    pub fn from_cli(cli: &Cli) -> CliResult<Self> {
        let tagged = serde_json::to_value(&cli.command).map_err(|e| CliError::Runtime(Error::Parse(e.to_string())))?;
        let (subcommand, params) = match tagged {
            serde_json::Value::Object(m) if m.len() == 1 => m.into_iter().next().expect("one entry"),
            other => ("unknown".to_string(), other),
        };
        Ok(RunConfig {
            format_version: FORMAT_VERSION,
            subcommand,
            params,
            seed: cli.seed,
            trials: cli.trials,
            out: cli.out.clone(),
            format: cli.format,
        })
    }

    /// JSON with keys sorted at every level.
    pub fn canonical_json(&self) -> String {
        let v = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string(&v).expect("value serializes")
    }

    /// Hex SHA-256 of [`RunConfig::canonical_json`].
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical_json().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// A table cell.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    U(u64),
    I(i64),
    F(f64),
    B(bool),
    S(String),
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::U(v) => v.to_string(),
            Cell::I(v) => v.to_string(),
            Cell::F(v) => fmt_f64(*v),
            Cell::B(v) => v.to_string(),
            Cell::S(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> serde_json::Value {
        use serde_json::Value;
        match self {
            Cell::U(v) => Value::from(*v),
            Cell::I(v) => Value::from(*v),
            Cell::F(v) => serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number),
            Cell::B(v) => Value::Bool(*v),
            Cell::S(s) => Value::String(s.clone()),
            Cell::Empty => Value::Null,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(columns: &[&'static str]) -> Self {
        Table { columns: columns.to_vec(), rows: Vec::new() }
    }

    fn from_report(r: &ExperimentReport) -> Self {
        let mut t = Table::new(&REPORT_HEADER.split(',').collect::<Vec<_>>());
        for row in &r.rows {
            t.rows.push(vec![
                Cell::S(row.name.clone()),
                Cell::S(row.param.clone()),
                Cell::U(row.trials),
                Cell::F(row.estimate),
                Cell::F(row.ci_lo),
                Cell::F(row.ci_hi),
                Cell::U(row.censored),
                Cell::S(fmt_seed(&row.seed)),
                Cell::F(row.z),
            ]);
        }
        t
    }

    fn write<W: Write>(&self, cfg: &RunConfig, format: Format, mut w: W) -> std::io::Result<()> {
        match format {
            Format::Csv => {
                writeln!(w, "# config={}", cfg.canonical_json())?;
                writeln!(w, "# config_hash={}", cfg.hash())?;
                writeln!(w, "{}", self.columns.join(","))?;
                for r in &self.rows {
                    let line: Vec<String> = r.iter().map(Cell::csv).collect();
                    writeln!(w, "{}", line.join(","))?;
                }
            }
            Format::Json => {
                let mut doc = BTreeMap::new();
                doc.insert("config", serde_json::to_value(cfg).expect("config serializes"));
                doc.insert("config_hash", serde_json::Value::String(cfg.hash()));
                doc.insert("columns", serde_json::to_value(&self.columns).expect("strings"));
                let rows: Vec<Vec<serde_json::Value>> = self.rows.iter().map(|r| r.iter().map(Cell::json).collect()).collect();
                doc.insert("rows", serde_json::to_value(rows).expect("values"));
                writeln!(w, "{}", serde_json::to_string(&doc).expect("document serializes"))?;
            }
        }
        Ok(())
    }
}

/// Result of a subcommand: its table, plus an error to report after the
/// table is written (a cap that cut the run short).
struct Outcome {
    table: Table,
    late_error: Option<Error>,
}

impl From<Table> for Outcome {
    fn from(table: Table) -> Self {
        Outcome { table, late_error: None }
    }
}

/// Parse `argv` (including the program name), run, and return the exit code:
/// 0 on success, 1 on a usage error, 2 on a runtime error.
pub fn parse_and_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let msg = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{msg}");
            e.exit_code()
        }
    }
}

fn init_logging() {
    let env = env_logger::Env::new().filter("EXWALK_LOG");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Run a parsed command line.
pub fn run(cli: &Cli) -> CliResult<()> {
    let cfg = RunConfig::from_cli(cli)?;
    log::debug!("config {}", cfg.canonical_json());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| CliError::Runtime(Error::Domain(e.to_string())))?;
    let outcome = pool.install(|| dispatch(cli))?;
    match &cli.out {
        Some(p) => {
            let mut f = std::io::BufWriter::new(fs::File::create(p)?);
            outcome.table.write(&cfg, cli.format, &mut f)?;
            f.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            outcome.table.write(&cfg, cli.format, &mut lock)?;
            lock.flush()?;
        }
    }
    match outcome.late_error {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn require_seed(cli: &Cli) -> CliResult<StreamSeed> {
    cli.seed
        .map(|s| StreamSeed::new(s, 0))
        .ok_or_else(|| CliError::Usage("--seed is required for Monte Carlo subcommands".into()))
}

fn trials(cli: &Cli, default: u64) -> u64 {
    cli.trials.unwrap_or(default)
}

fn dispatch(cli: &Cli) -> CliResult<Outcome> {
    match &cli.command {
        Command::Gambler(a) => {
            gambler_exact(a.n)?;
            let seed = require_seed(cli)?;
            Ok(Table::from_report(&gambler_mc(a.n, trials(cli, 100_000), seed)?).into())
        }
        Command::Localtime(a) => {
            let exact = local_time_exact(a.big_n);
            let mut rep = ExperimentReport::default();
            let nan = f64::NAN;
            let zero = StreamSeed::new(0, 0);
            let row = |name: &str, v: f64| ReportRow {
                name: name.into(),
                param: format!("N={}", a.big_n),
                trials: 0,
                estimate: v,
                ci_lo: nan,
                ci_hi: nan,
                censored: 0,
                seed: zero,
                z: nan,
            };
            rep.push(row("localtime_exact", exact));
            rep.push(row("localtime_bound", 10.0 * (a.big_n as f64).sqrt()));
            if let Some(t) = cli.trials {
                let seed = require_seed(cli)?;
                rep.rows.extend(local_time_mc(a.big_n, t, seed).rows);
            }
            Ok(Table::from_report(&rep).into())
        }
        Command::Greedy(a) => {
            let seed = require_seed(cli)?;
            let mut t = Table::new(&[
                "seed",
                "letters",
                "boundary_visits",
                "outward",
                "inward",
                "interior_left",
                "interior_right",
                "returns_to_origin",
            ]);
            let runs: Vec<_> = (0..trials(cli, 1)).map(|i| greedy_summary(seed.trial(i), a.letters)).collect::<Result<_, _>>()?;
            for s in runs {
                t.rows.push(vec![
                    Cell::S(fmt_seed(&s.seed)),
                    Cell::U(s.letters),
                    Cell::U(s.stats.boundary_visits),
                    Cell::U(s.stats.outward_moves),
                    Cell::U(s.stats.inward_moves),
                    Cell::U(s.stats.interior_left),
                    Cell::U(s.stats.interior_right),
                    Cell::U(s.returns_to_origin),
                ]);
            }
            Ok(t.into())
        }
        Command::Exceptional(a) => exceptional_cmd(cli, a),
        Command::En(a) => {
            if a.n == 0 {
                return Err(Error::Domain("back-crossing needs n >= 1".into()).into());
            }
            line_x(a.n + 1)?;
            let seed = require_seed(cli)?;
            let e = estimate_en(a.n, trials(cli, 10_000), seed, a.horizon)?;
            let mut t = en_table();
            t.rows.push(en_row(&e));
            Ok(t.into())
        }
        Command::EnOracle(a) => {
            if a.n == 0 {
                return Err(Error::Domain("back-crossing needs n >= 1".into()).into());
            }
            line_x(a.n + 1)?;
            let seed = require_seed(cli)?;
            let e = excursion_chain_en(a.n, trials(cli, 10_000), seed)?;
            Ok(Table::from_report(&ExperimentReport::single(ReportRow::from_en("en-oracle", &e))).into())
        }
        Command::Teleport(a) => {
            if a.n == 0 || a.n > 8 {
                return Err(Error::Domain(format!("teleport chain needs 1 <= n <= 8, got {}", a.n)).into());
            }
            let seed = require_seed(cli)?;
            let e = teleport_f1f2(a.n, trials(cli, 10_000), seed)?;
            let mut rep = ExperimentReport::default();
            for (name, k, p) in [("p_no_positive", e.f1c, e.p_f1c), ("p_some_negative", e.f2c, e.p_f2c)] {
                let (lo, hi) = wilson(k, e.trials, Z95).unwrap_or((f64::NAN, f64::NAN));
                rep.push(ReportRow {
                    name: name.into(),
                    param: format!("n={}", a.n),
                    trials: e.trials,
                    estimate: p,
                    ci_lo: lo,
                    ci_hi: hi,
                    censored: 0,
                    seed,
                    z: f64::NAN,
                });
            }
            Ok(Table::from_report(&rep).into())
        }
        Command::Multi(a) => multi_cmd(cli, a),
        Command::Branching(a) => {
            let law = OffspringLaw::reduced(a.eps)?;
            let oracle = SubgraphOracle::full(a.d);
            let seed = require_seed(cli)?;
            let tree = run_branching(seed, a.d, &law, a.horizon, a.cap, &oracle)?;
            if tree.truncated {
                log::warn!("particle cap {} reached at time {:?}", a.cap, tree.truncated_at);
            }
            let mut t = Table::new(&["j", "population", "truncated"]);
            for (j, &n) in tree.population.iter().enumerate() {
                let cut = tree.truncated_at.is_some_and(|s| j as u64 >= s);
                t.rows.push(vec![Cell::U(j as u64), Cell::U(n), Cell::B(cut)]);
            }
            Ok(t.into())
        }
        Command::Tinybox(a) => {
            let law = OffspringLaw::reduced(a.eps)?;
            let bbox = BoundingBox::cube(2, 1)?;
            let seed = require_seed(cli)?;
            let rows: Vec<SweepRow> = match a.id {
                Some(id) => {
                    if id >= 1 << bbox.interior_edges().len() {
                        return Err(Error::Domain(format!("subgraph id {id} out of range")).into());
                    }
                    vec![sweep_one(&bbox, &law, a.horizon, a.cap, a.r, seed, id)?]
                }
                None => tiny_box_sweep(&bbox, &law, a.horizon, a.cap, a.r, seed)?,
            };
            let mut t = Table::new(&["subgraph_id", "edges_bitmask", "reachable", "certified", "witness", "horizon"]);
            for r in rows {
                let c = r.certificate;
                t.rows.push(vec![
                    Cell::U(r.subgraph_id),
                    Cell::U(r.edges_bitmask),
                    Cell::U(c.reachable as u64),
                    Cell::B(c.certified),
                    c.witness.map_or(Cell::Empty, |w| Cell::U(w as u64)),
                    Cell::U(c.horizon),
                ]);
            }
            Ok(t.into())
        }
        Command::Carne(a) => {
            let g = parse_finite_graph(&a.graph)?;
            Ok(carne_table(&g, a.tmax)?.into())
        }
        Command::Chernoff(a) => {
            let mut t = Table::new(&["n", "p", "eps", "threshold", "exact", "bound", "holds"]);
            let rows = match (a.p, a.eps) {
                (Some(p), Some(eps)) => {
                    let bound = chernoff_bound(a.n, p, eps)?;
                    let threshold = (a.n as f64 * p * (1.0 - eps) + 1e-9).floor() as u64;
                    let exact = binomial_cdf(a.n, p, threshold);
                    vec![(a.n, p, eps, threshold, exact, bound)]
                }
                (None, None) => {
                    chernoff_grid(a.n).into_iter().map(|r| (r.n, r.p, r.eps, r.threshold, r.exact, r.bound)).collect()
                }
                _ => return Err(CliError::Usage("--p and --eps go together".into())),
            };
            for (n, p, eps, k, exact, bound) in rows {
                t.rows.push(vec![
                    Cell::U(n),
                    Cell::F(p),
                    Cell::F(eps),
                    Cell::U(k),
                    Cell::F(exact),
                    Cell::F(bound),
                    Cell::B(exact <= bound),
                ]);
            }
            Ok(t.into())
        }
        Command::Displacement(a) => {
            let graph = match a.graph.strip_prefix("full:") {
                Some(d) => SubgraphOracle::full(parse_num(d)?),
                None => SubgraphOracle::ExplicitFinite(parse_finite_graph(&a.graph)?),
            };
            if !(a.delta > 0.0 && a.delta <= 1.0) || a.n == 0 {
                return Err(Error::Domain("need 0 < delta <= 1 and n >= 1".into()).into());
            }
            let seed = require_seed(cli)?;
            let r = displacement_tail_check(&graph, a.delta, a.n, trials(cli, 100_000), seed)?;
            let mut t = Table::new(&["d", "n", "delta", "trials", "exceed", "empirical", "bound", "holds"]);
            t.rows.push(vec![
                Cell::U(r.d as u64),
                Cell::U(r.n),
                Cell::F(r.delta),
                Cell::U(r.trials),
                Cell::U(r.exceed),
                Cell::F(r.empirical),
                Cell::F(r.bound),
                Cell::B(r.empirical <= r.bound),
            ]);
            Ok(t.into())
        }
        Command::Fit(a) => fit_cmd(&a.input),
        Command::Escape(a) => {
            let seed = require_seed(cli)?;
            let tr = match a.source {
                EscapeSource::Exceptional => run_exceptional(seed, StopRule::stage_capped(MAX_ESCAPE_STAGE, a.letters))?.0,
                EscapeSource::Greedy => run_greedy_path(seed, a.letters)?.1,
                EscapeSource::Lattice => {
                    let mut stream = LetterStream::new(seed, 2);
                    run_induced(&mut stream, &mut SubgraphOracle::full(2), a.letters)?
                }
            };
            let f = escape_exponent(&tr)?;
            let source = serde_json::to_value(a.source).expect("enum serializes");
            let row = ReportRow {
                name: "escape_exponent".into(),
                param: format!("source={}", source.as_str().unwrap_or("?")),
                trials: 1,
                estimate: f.alpha,
                ci_lo: f.ci.0,
                ci_hi: f.ci.1,
                censored: 0,
                seed,
                z: f64::NAN,
            };
            Ok(Table::from_report(&ExperimentReport::single(row)).into())
        }
    }
}

/// Stages an escape run may open before its letter budget decides.
const MAX_ESCAPE_STAGE: u32 = 39;

fn exceptional_cmd(cli: &Cli, a: &ExceptionalArgs) -> CliResult<Outcome> {
    if a.stages >= crate::exceptional::MAX_LINE {
        line_x(a.stages + 1)?;
    }
    let seed = require_seed(cli)?;
    let (tr, env) = run_exceptional(seed, StopRule::stage_capped(a.stages, a.letters))?;
    if let Some(p) = &a.snapshot {
        fs::write(p, env.snapshot()?)?;
    }
    if let Some(p) = &a.dump_transcript {
        let mut f = std::io::BufWriter::new(fs::File::create(p)?);
        tr.write_csv(&mut f)?;
        f.flush()?;
    }
    let mut t = Table::new(&["stage", "start_t", "end_t", "alpha"]);
    for (k, s) in env.history().iter().enumerate() {
        t.rows.push(vec![Cell::U(k as u64), Cell::U(s.start_t), Cell::U(s.end_t), Cell::I(s.alpha)]);
    }
    let late_error = (env.stage() < a.stages).then(|| {
        Error::Domain(format!("letter budget {} exhausted in stage {} of {}", a.letters, env.stage(), a.stages))
    });
    Ok(Outcome { table: t, late_error })
}

fn multi_cmd(cli: &Cli, a: &MultiArgs) -> CliResult<Outcome> {
    if a.walks == 0 {
        return Err(Error::Domain("need at least one walk".into()).into());
    }
    if a.phases >= crate::exceptional::MAX_LINE {
        line_x(a.phases + 1)?;
    }
    let seed = require_seed(cli)?;
    let run = run_multiwalk(seed, a.walks, MultiStop { max_phase: Some(a.phases), max_letters: Some(a.letters) })?;
    if let Some(p) = &a.snapshot {
        fs::write(p, run.env.snapshot()?)?;
    }
    let mut t = Table::new(&["phase", "walk", "entry_t", "freeze_t"]);
    for e in &run.phase_log {
        t.rows.push(vec![Cell::U(e.phase as u64), Cell::U(e.walk as u64), Cell::U(e.entry_t), Cell::U(e.freeze_t)]);
    }
    let late_error = run.truncated.then(|| {
        Error::Domain(format!("letter budget {} exhausted in phase {} of {}", a.letters, run.phase(), a.phases))
    });
    Ok(Outcome { table: t, late_error })
}

fn en_table() -> Table {
    Table::new(&["n", "trials", "hits", "completions", "censored", "p_hat", "ci_lo", "ci_hi", "seed", "horizon"])
}

fn en_row(e: &EnEstimate) -> Vec<Cell> {
    vec![
        Cell::U(e.n as u64),
        Cell::U(e.trials),
        Cell::U(e.hits),
        Cell::U(e.completions),
        Cell::U(e.censored),
        Cell::F(e.p_hat),
        Cell::F(e.ci_lo()),
        Cell::F(e.ci_hi()),
        Cell::S(fmt_seed(&e.seed)),
        Cell::U(e.horizon),
    ]
}

fn parse_num<T: std::str::FromStr>(s: &str) -> CliResult<T> {
    s.trim().parse().map_err(|_| CliError::Usage(format!("not a number: {s:?}")))
}

/// `path:N`, `grid:K` or `comb:W,T`.
pub fn parse_finite_graph(spec: &str) -> CliResult<FiniteSubgraph> {
    let (kind, rest) = spec.split_once(':').ok_or_else(|| CliError::Usage(format!("bad graph {spec:?}")))?;
    let g = match kind {
        "path" => FiniteSubgraph::path(parse_num(rest)?)?,
        "grid" => FiniteSubgraph::grid(parse_num(rest)?)?,
        "comb" => {
            let (w, h) = rest.split_once(',').ok_or_else(|| CliError::Usage(format!("bad comb {rest:?}")))?;
            FiniteSubgraph::comb(parse_num(w)?, parse_num(h)?)?
        }
        _ => return Err(CliError::Usage(format!("unknown graph kind {kind:?}"))),
    };
    Ok(g)
}

/// Exact check of the Carne-Varopoulos bound for the simple random walk:
/// one row per time with the worst ratio `p_t / bound` over all pairs.
pub fn carne_table(g: &FiniteSubgraph, tmax: u64) -> CliResult<Table> {
    let bbox = g.bbox();
    let sites: Vec<Site> = bbox.sites().filter(|s| g.degree(s) > 0).collect();
    let mut worst = vec![(0u64, 0u64, 0.0f64); tmax as usize + 1];
    for x in &sites {
        let dist = srw_dp(g, x, tmax)?;
        for y in &sites {
            if g.distance(x, y).is_none() {
                continue;
            }
            let iy = bbox.index_of(y).expect("in box");
            for (t, row) in dist.iter().enumerate() {
                let bound = carne_bound(g, x, y, t as u64)?;
                let p = row[iy];
                let w = &mut worst[t];
                w.0 += 1;
                if p > bound {
                    w.1 += 1;
                }
                if bound > 0.0 {
                    w.2 = w.2.max(p / bound);
                } else if p > 0.0 {
                    w.2 = f64::INFINITY;
                }
            }
        }
    }
    let mut t = Table::new(&["t", "pairs", "violations", "max_ratio"]);
    for (i, (pairs, viol, ratio)) in worst.into_iter().enumerate() {
        t.rows.push(vec![Cell::U(i as u64), Cell::U(pairs), Cell::U(viol), Cell::F(ratio)]);
    }
    Ok(t)
}

fn fit_cmd(input: &Path) -> CliResult<Outcome> {
    let text = fs::read_to_string(input)?;
    let header = text.lines().find(|l| !l.starts_with('#') && !l.trim().is_empty()).unwrap_or("");
    let fit = if header == REPORT_HEADER {
        let rep = parse_report(&text)?;
        let mut ns = Vec::new();
        let mut ps = Vec::new();
        let mut ws = Vec::new();
        for r in &rep.rows {
            let Some(n) = r.param.strip_prefix("n=").and_then(|v| v.parse::<f64>().ok()) else {
                continue;
            };
            if !(r.estimate > 0.0 && r.ci_hi > r.ci_lo) {
                continue;
            }
            let sd = (r.ci_hi - r.ci_lo) / (2.0 * Z95 * r.estimate);
            ns.push(n);
            ps.push(r.estimate);
            ws.push(1.0 / (sd * sd));
        }
        decay_fit_values(&ns, &ps, Some(&ws))?
    } else if header == en_table().columns.join(",") {
        let mut ests = Vec::new();
        for line in text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()).skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 10 {
                return Err(Error::Parse(format!("expected 10 fields in {line:?}")).into());
            }
            let int = |s: &str| s.parse::<u64>().map_err(|e| Error::Parse(format!("{s:?}: {e}")));
            let (m, s) = f[8].split_once(':').ok_or_else(|| Error::Parse(format!("bad seed {:?}", f[8])))?;
            ests.push(EnEstimate::from_counts(
                int(f[0])? as u32,
                int(f[1])?,
                int(f[2])?,
                int(f[3])?,
                int(f[4])?,
                StreamSeed::new(int(m)?, int(s)?),
                int(f[9])?,
            ));
        }
        decay_fit(&ests)?
    } else {
        return Err(Error::Parse(format!("unrecognised header {header:?}")).into());
    };
    let row = |name: &str, est: f64, lo: f64, hi: f64, z: f64| ReportRow {
        name: name.into(),
        param: format!("points={}", fit.xs.len()),
        trials: 0,
        estimate: est,
        ci_lo: lo,
        ci_hi: hi,
        censored: 0,
        seed: StreamSeed::new(0, 0),
        z,
    };
    let mut rep = ExperimentReport::default();
    rep.push(row("log_slope", fit.slope, fit.slope_ci.0, fit.slope_ci.1, fit.slope / fit.slope_se));
    rep.push(row("rate", fit.rate(), fit.slope_ci.0.exp(), fit.slope_ci.1.exp(), f64::NAN));
    Ok(Table::from_report(&rep).into())
}
