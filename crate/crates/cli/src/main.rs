use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bspow_chain::agents::{example_config, Campaign, CampaignConfig, RoundReport};
use bspow_chain::verify::{verify_chain, VerifyMode};
use bspow_chain::{Chain, ChainError, Digest};
use bspow_core::binning::{delta_cap, required_samples_state, StateSampleRule};
use bspow_core::economics::{
    bounds, nash_check, perf_table, quantum_rate, speedup_crossover, worst_case_cheat, PerfRow,
    REFERENCE_T_MINE_SECONDS,
};
use bspow_core::rng;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use serde::Serialize;

const EXIT_CONFIG: u8 = 2;
const EXIT_PROTOCOL: u8 = 3;
const EXIT_FLAGGED: u8 = 4;

#[derive(Parser)]
#[command(name = "bspow", version, about = "Boson-sampling proof-of-work simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single mining rounds.
    #[command(subcommand)]
    Round(RoundCmd),
    /// Multi-block campaigns.
    #[command(subcommand)]
    Campaign(CampaignCmd),
    /// Chain file inspection.
    #[command(subcommand)]
    Chain(ChainCmd),
    /// Hardware performance tables.
    #[command(subcommand)]
    Perf(ReportCmd),
    /// Equilibrium analysis and energy tables.
    #[command(subcommand)]
    Econ(ReportCmd),
    /// Derived protocol parameters.
    #[command(subcommand)]
    Params(ParamsCmd),
}

#[derive(Subcommand)]
enum RoundCmd {
    /// Mine one block on an empty chain.
    Run(RunArgs),
}

#[derive(Subcommand)]
enum CampaignCmd {
    /// Mine a sequence of blocks.
    Run {
        #[command(flatten)]
        run: RunArgs,
        /// Number of blocks (defaults to the config value).
        #[arg(long)]
        blocks: Option<u64>,
    },
}

#[derive(Subcommand)]
enum ChainCmd {
    /// Re-verify every block of a chain file.
    Verify {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long, value_enum, default_value = "classical")]
        mode: Mode,
    },
    /// Flip seeded transaction bytes and check the verifier flags the
    /// mutated block and every descendant.
    TamperTest {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        trials: u64,
        /// Where to write the last mutated chain.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ReportCmd {
    Report(ReportArgs),
}

#[derive(Subcommand)]
enum ParamsCmd {
    /// Sample counts, mining window and estimator caps for a config.
    Suggest {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// JSON campaign config; the built-in example network when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Desk-scale factor applied to the required sample counts.
    #[arg(long)]
    scale: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    scale: Option<f64>,
    /// Output directory for chain.jsonl, rounds.jsonl and summary.json.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    min_photons: u32,
    #[arg(long, default_value_t = 30)]
    max_photons: u32,
    #[arg(long, value_enum, default_value = "single-core")]
    machine: Machine,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Classical,
    QuantumOracle,
}

#[derive(Clone, Copy, ValueEnum)]
enum Machine {
    SingleCore,
    Supercomputer,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Protocol(String),
    Flagged,
}

impl From<ChainError> for Failure {
    fn from(e: ChainError) -> Self {
        match e {
            ChainError::Protocol(_) | ChainError::Phase { .. } => Failure::Protocol(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn io_err(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Config(format!("{}: {e}", path.display()))
}

fn load_config(path: Option<&Path>, seed: Option<u64>, scale: Option<f64>) -> Result<CampaignConfig, Failure> {
    let mut cfg = match path {
        None => example_config(),
        Some(p) => {
            let f = File::open(p).map_err(|e| io_err(p, e))?;
            serde_json::from_reader(BufReader::new(f)).map_err(|e| io_err(p, e))?
        }
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(s) = scale {
        cfg.desk_scale = s;
    }
    cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
    Ok(cfg)
}

fn read_chain(path: &Path) -> Result<Chain, Failure> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    Chain::read_jsonl(BufReader::new(f)).map_err(|e| io_err(path, e))
}

fn create(path: &Path) -> Result<io::BufWriter<File>, Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    File::create(path).map(io::BufWriter::new).map_err(|e| io_err(path, e))
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

#[derive(Serialize)]
struct ReportLine<'a> {
    config_hash: Digest,
    #[serde(flatten)]
    report: &'a RoundReport,
}

#[derive(Serialize)]
struct Summary {
    config_hash: Digest,
    desk_scale: f64,
    seed: u64,
    blocks_requested: u64,
    chain_length: usize,
    aborted_rounds: usize,
    t_mine: u64,
    stake: u64,
    ledger: std::collections::BTreeMap<String, i64>,
}

fn cmd_run(args: &RunArgs, blocks: Option<u64>) -> Outcome {
    let mut cfg = load_config(Some(&args.config), args.seed, args.scale)?;
    if let Some(b) = blocks {
        cfg.blocks = b;
    }
    let hash = cfg.config_hash();
    let mut campaign = Campaign::new(cfg.clone())?;
    for _ in 0..cfg.blocks {
        campaign.step()?;
    }
    let pm = campaign.params().clone();
    let result = campaign.finish();

    let write = |name: &str, bytes: &[u8]| -> Outcome {
        let path = args.out.join(name);
        let mut w = create(&path)?;
        w.write_all(bytes).and_then(|_| w.flush()).map_err(|e| io_err(&path, e))
    };
    write("chain.jsonl", &result.chain.to_jsonl())?;
    let mut lines = Vec::new();
    for r in &result.reports {
        serde_json::to_writer(&mut lines, &ReportLine { config_hash: hash, report: r }).expect("report serializes");
        lines.push(b'\n');
    }
    write("rounds.jsonl", &lines)?;
    let summary = Summary {
        config_hash: hash,
        desk_scale: cfg.desk_scale,
        seed: cfg.seed,
        blocks_requested: cfg.blocks,
        chain_length: result.chain.len(),
        aborted_rounds: result.reports.iter().filter(|r| r.aborted).count(),
        t_mine: pm.t_mine,
        stake: pm.stake,
        ledger: result.ledger,
    };
    let mut json = serde_json::to_vec_pretty(&summary).expect("summary serializes");
    json.push(b'\n');
    write("summary.json", &json)?;
    println!(
        "config_hash {hash}: {} blocks appended, {} aborted, output in {}",
        summary.chain_length,
        summary.aborted_rounds,
        args.out.display()
    );
    Ok(())
}

fn cmd_verify(path: &Path, mode: Mode) -> Outcome {
    let chain = read_chain(path)?;
    let mode = match mode {
        Mode::Classical => VerifyMode::Classical,
        Mode::QuantumOracle => VerifyMode::QuantumOracle,
    };
    let report = verify_chain(&chain, mode)?;
    for b in &report.blocks {
        if b.ok {
            println!("block {}: ok", b.height);
        } else {
            println!("block {}: FLAGGED ({})", b.height, b.reasons.join("; "));
        }
    }
    if report.all_ok() {
        Ok(())
    } else {
        Err(Failure::Flagged)
    }
}

fn cmd_tamper(path: &Path, seed: u64, trials: u64, out: Option<&Path>) -> Outcome {
    let chain = read_chain(path)?;
    let targets: Vec<(usize, usize, usize)> = chain
        .blocks
        .iter()
        .enumerate()
        .flat_map(|(b, block)| {
            block.transactions.iter().enumerate().flat_map(move |(t, tx)| (0..tx.payload.len()).map(move |k| (b, t, k)))
        })
        .collect();
    if targets.is_empty() {
        return Err(Failure::Config(format!("{}: no transaction bytes to mutate", path.display())));
    }
    let mut rng = rng::stream(seed);
    let (mut detected, mut cascades) = (0u64, 0u64);
    let mut last = None;
    for trial in 0..trials {
        let (b, t, k) = targets[rng.random_range(0..targets.len())];
        let mask: u8 = rng.random_range(1..=255);
        let mut mutated = chain.clone();
        mutated.blocks[b].transactions[t].payload[k] ^= mask;
        let flagged = verify_chain(&mutated, VerifyMode::Classical)?.flagged();
        let expected: Vec<usize> = (b..chain.len()).collect();
        let cascade = flagged == expected;
        detected += u64::from(flagged.contains(&b));
        cascades += u64::from(cascade);
        println!(
            "trial {trial}: block {b} tx {t} byte {k} ^ {mask:#04x} -> flagged {flagged:?} cascade {}",
            if cascade { "ok" } else { "MISMATCH" }
        );
        last = Some(mutated);
    }
    println!("summary: {detected}/{trials} mutations detected, {cascades}/{trials} full cascades");
    if let (Some(p), Some(m)) = (out, last) {
        let mut w = create(p)?;
        m.write_jsonl(&mut w)?;
        w.flush().map_err(|e| io_err(p, e))?;
    }
    if detected == trials {
        Err(Failure::Flagged)
    } else {
        Ok(())
    }
}

fn csv_writer(out: Option<&Path>, header: &[String]) -> Result<csv::Writer<Box<dyn Write>>, Failure> {
    let mut w = sink(out)?;
    for line in header {
        writeln!(w, "# {line}").map_err(|e| Failure::Config(e.to_string()))?;
    }
    Ok(csv::Writer::from_writer(w))
}

fn csv_fail(e: csv::Error) -> Failure {
    Failure::Config(e.to_string())
}

fn rows(cfg: &CampaignConfig, args: &ReportArgs) -> Result<Vec<PerfRow>, Failure> {
    if args.min_photons < 1 || args.min_photons > args.max_photons {
        return Err(Failure::Config(format!("invalid photon range {}..{}", args.min_photons, args.max_photons)));
    }
    perf_table(&cfg.hw, args.min_photons..=args.max_photons).map_err(|e| Failure::Config(e.to_string()))
}

fn cmd_perf(args: &ReportArgs) -> Outcome {
    let cfg = load_config(args.common.config.as_deref(), args.common.seed, args.common.scale)?;
    let table = rows(&cfg, args)?;
    let range = args.min_photons..=args.max_photons;
    let crossover = |hw: &bspow_core::economics::HardwareProfile| {
        speedup_crossover(hw, range.clone()).map_or("none".to_string(), |n| n.to_string())
    };
    let mut hw_super = cfg.hw;
    hw_super.classical = cfg.hw.supercomputer;
    let mut w = csv_writer(
        args.out.as_deref(),
        &[
            format!("config_hash: {}", cfg.config_hash()),
            format!("crossover_single_core: {}", crossover(&cfg.hw)),
            format!("crossover_supercomputer: {}", crossover(&hw_super)),
        ],
    )?;
    for r in &table {
        w.serialize(r).map_err(csv_fail)?;
    }
    w.flush().map_err(|e| Failure::Config(e.to_string()))
}

#[derive(Serialize)]
struct EconRow {
    n: u32,
    r_q: f64,
    r_c: f64,
    speedup: f64,
    e_q: f64,
    e_c: f64,
    ratio: f64,
}

fn cmd_econ(args: &ReportArgs) -> Outcome {
    let cfg = load_config(args.common.config.as_deref(), args.common.seed, args.common.scale)?;
    let table = rows(&cfg, args)?;
    let verdict = nash_check(&cfg.econ);
    let b = bounds(&cfg.econ);
    let mut header = vec![
        format!("config_hash: {}", cfg.config_hash()),
        format!("feasible: {}", b.feasible),
        format!("nash: {}", if verdict.passed { "pass" } else { "fail" }),
        format!("reward_range: ({}, {})", b.reward_range.0, b.reward_range.1),
        format!("penalty_range: ({}, {})", b.penalty_range.0, b.penalty_range.1),
        format!("penalty_window: ({}, {})", verdict.penalty_window.0, verdict.penalty_window.1),
        format!(
            "utility_per_sample: honest {} cheat {} classical {}",
            verdict.per_sample.honest, verdict.per_sample.cheat, verdict.per_sample.classical
        ),
        format!("worst_case_cheat_per_sample: {}", worst_case_cheat(&cfg.econ, 1000)),
    ];
    header.extend(verdict.reasons.iter().map(|r| format!("reason: {r}")));
    if !b.feasible {
        println!("infeasible: 2k >= k_classical");
    }
    let mut w = csv_writer(args.out.as_deref(), &header)?;
    for r in &table {
        let (r_c, speedup, e_c, ratio) = match args.machine {
            Machine::SingleCore => (r.r_c_single, r.speedup_single, r.e_c_single, r.ratio_single),
            Machine::Supercomputer => (r.r_c_super, r.speedup_super, r.e_c_super, r.ratio_super),
        };
        w.serialize(EconRow { n: r.n, r_q: r.r_q, r_c, speedup, e_q: r.e_q, e_c, ratio }).map_err(csv_fail)?;
    }
    w.flush().map_err(|e| Failure::Config(e.to_string()))
}

#[derive(Serialize)]
struct Suggestion {
    config_hash: Digest,
    desk_scale: f64,
    mode_samples: u64,
    state_samples: u64,
    state_rule: &'static str,
    r_q: f64,
    t_mine_seconds: f64,
    t_mine_desk_seconds: u64,
    t_mine_reference_seconds: f64,
    delta_cap_mode: f64,
    honest_budget: u64,
    stake: u64,
}

fn cmd_params(common: &CommonArgs, out: Option<&Path>) -> Outcome {
    let cfg = load_config(common.config.as_deref(), common.seed, common.scale)?;
    let pm = cfg.parameter_set()?;
    let bootstrap = required_samples_state(pm.d_sb as usize, pm.epsilon, pm.gamma, StateSampleRule::Bootstrap).is_ok();
    let s = Suggestion {
        config_hash: cfg.config_hash(),
        desk_scale: cfg.desk_scale,
        mode_samples: pm.mode_samples()?,
        state_samples: pm.state_samples()?,
        state_rule: if bootstrap { "bootstrap" } else { "hoeffding" },
        r_q: quantum_rate(&cfg.hw, pm.photons, pm.modes),
        t_mine_seconds: pm.mining_time_seconds(&cfg.hw, 1.0)?,
        t_mine_desk_seconds: pm.t_mine,
        t_mine_reference_seconds: REFERENCE_T_MINE_SECONDS,
        delta_cap_mode: delta_cap(pm.beta, pm.photons, pm.d_mb as usize),
        honest_budget: cfg.default_budget()?,
        stake: pm.stake,
    };
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, &s).map_err(|e| Failure::Config(e.to_string()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| Failure::Config(e.to_string()))
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Round(RoundCmd::Run(args)) => cmd_run(&args, Some(1)),
        Command::Campaign(CampaignCmd::Run { run, blocks }) => cmd_run(&run, blocks),
        Command::Chain(ChainCmd::Verify { chain, mode }) => cmd_verify(&chain, mode),
        Command::Chain(ChainCmd::TamperTest { chain, seed, trials, out }) => {
            cmd_tamper(&chain, seed, trials, out.as_deref())
        }
        Command::Perf(ReportCmd::Report(args)) => cmd_perf(&args),
        Command::Econ(ReportCmd::Report(args)) => cmd_econ(&args),
        Command::Params(ParamsCmd::Suggest { common, out }) => cmd_params(&common, out.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Protocol(msg)) => {
            eprintln!("protocol error: {msg}");
            ExitCode::from(EXIT_PROTOCOL)
        }
        Err(Failure::Flagged) => ExitCode::from(EXIT_FLAGGED),
    }
}
