use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use latchlock::attack::{run_attack, validate_key, AttackBudget, AttackStatus, StateMap};
use latchlock::constraints::{count_valid_keys, generate};
use latchlock::locking::{
    count_mismatches, lock, LatchManifest, LockConfig, LockError, ProxyStats,
};
use latchlock::netlist::{parse_bench_named, write_bench, KeyFile, KeyVector, Netlist};
use latchlock::rng;
use latchlock::sim::{bits_to_string, simulate, OracleSession, Trace};
use latchlock::timing::{default_period, ClockSpec, DelayModel, PathOptions};

const SCHEMA_VERSION: u32 = 1;

const VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    "\nschemas: key 1, manifest 1, trace 1, attack-result 1, stats 1, verify 1, count-keys-csv 1"
);

#[derive(Parser)]
#[command(name = "latchlock", version = VERSION, about = "Latch-based logic locking and its sequential SAT attack")]
struct Cli {
    /// Worker threads for passes that can use several.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lock a netlist with keyed latches.
    Lock {
        /// Netlist to lock (.bench).
        #[arg(long = "in")]
        input: PathBuf,
        /// Key length; two bits per keyed latch.
        #[arg(long)]
        bits: usize,
        /// Decoy latches per converted latch.
        #[arg(long, default_value_t = 0.5)]
        ratio: f64,
        /// Seed for group selection and decoy placement.
        #[arg(long)]
        seed: u64,
        /// Delay annotation file (JSON).
        #[arg(long)]
        delays: Option<PathBuf>,
        /// Clock period in ps; defaults to the delay file's, then to a derived one.
        #[arg(long)]
        period: Option<u64>,
        /// Community-finding restarts whose groups are scored.
        #[arg(long, default_value_t = 8)]
        samples: usize,
        /// Skip latch retiming.
        #[arg(long)]
        no_retime: bool,
        /// Locked netlist output.
        #[arg(long)]
        out: PathBuf,
        /// Correct-key output (JSON).
        #[arg(long)]
        key: PathBuf,
        /// Latch manifest output (JSON).
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Recover a key through a simulated oracle.
    Attack {
        /// Locked netlist to attack.
        #[arg(long)]
        net: PathBuf,
        /// Netlist simulated as the black-box chip.
        #[arg(long)]
        oracle_net: PathBuf,
        /// Key loaded into the oracle.
        #[arg(long)]
        oracle_key: PathBuf,
        /// Delay annotation file (JSON).
        #[arg(long)]
        delays: Option<PathBuf>,
        /// Clock period in ps.
        #[arg(long)]
        period: Option<u64>,
        /// Seed of the oracle's power-up state.
        #[arg(long, default_value_t = 0)]
        state_seed: u64,
        /// Wall-clock budget in seconds.
        #[arg(long, default_value_t = 60)]
        budget_s: u64,
        /// Solver conflicts per call before the depth grows.
        #[arg(long, default_value_t = 50_000)]
        conflicts: u64,
        /// Longest extension beyond the trace, in half-cycles.
        #[arg(long, default_value_t = 16)]
        max_depth: usize,
        /// Depth in half-cycles of the post-attack equivalence check.
        #[arg(long, default_value_t = 32)]
        validate_depth: usize,
        /// Attack result output (JSON).
        #[arg(long)]
        out: PathBuf,
    },
    /// Count keys passing the loop and timing constraints.
    CountKeys {
        /// Locked netlist.
        #[arg(long)]
        net: PathBuf,
        /// Delay annotation file (JSON).
        #[arg(long)]
        delays: Option<PathBuf>,
        /// Clock period in ps.
        #[arg(long)]
        period: Option<u64>,
        /// Refuse netlists with more key bits than this.
        #[arg(long, default_value_t = 24)]
        bits_max: usize,
        /// CSV output.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fill in the outputs of a trace.
    Simulate {
        /// Netlist to simulate.
        #[arg(long)]
        net: PathBuf,
        /// Key file; required when the netlist has key inputs.
        #[arg(long)]
        key: Option<PathBuf>,
        /// Trace to fill in (JSON).
        #[arg(long)]
        trace: PathBuf,
        /// Defaults to standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare a locked netlist under a key against the original.
    Verify {
        /// Original netlist.
        #[arg(long)]
        orig: PathBuf,
        /// Locked netlist.
        #[arg(long)]
        locked: PathBuf,
        /// Key to apply to the locked netlist.
        #[arg(long)]
        key: PathBuf,
        /// Manifest from `lock`; maps power-up state between the two netlists.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Clock cycles per stimulus seed.
        #[arg(long, default_value_t = 1000)]
        cycles: usize,
        /// Number of stimulus seeds.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        /// Base seed for stimuli and power-up state.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Report output; defaults to standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print cell, flip-flop, latch and key counts.
    Stats {
        /// Netlist to summarize.
        #[arg(long)]
        net: PathBuf,
        /// Report output; defaults to standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Timeout(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Timeout(_) => 3,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Validation(_) => "validation",
            CliError::Timeout(_) => "timeout",
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => write(p, text),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn json(v: &impl Serialize) -> String {
    serde_json::to_string_pretty(v).expect("plain data serializes")
}

fn load_net(path: &Path) -> Result<Netlist, CliError> {
    let text = read(path)?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("top");
    parse_bench_named(&text, name).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

/// A key file: `{"key": "0110", ...}` or a bare bit string.
fn load_key(path: &Path) -> Result<KeyVector, CliError> {
    let text = read(path)?;
    let parsed = match serde_json::from_str::<KeyFile>(&text) {
        Ok(f) => f.key_vector(),
        Err(_) => text.trim().trim_matches('"').parse(),
    };
    parsed.map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn load_delays(path: Option<&Path>) -> Result<DelayModel, CliError> {
    match path {
        Some(p) => {
            DelayModel::from_json(&read(p)?).map_err(|e| invalid(format!("{}: {e}", p.display())))
        }
        None => Ok(DelayModel::default()),
    }
}

fn clock(n: &Netlist, dm: &DelayModel, period: Option<u64>) -> Result<ClockSpec, CliError> {
    let p = period
        .or(dm.period)
        .unwrap_or_else(|| default_period(n, dm));
    if p == 0 {
        return Err(CliError::Usage("clock period must be positive".into()));
    }
    Ok(ClockSpec::new(p))
}

#[derive(Serialize)]
struct ManifestFile<'a> {
    format: u32,
    seed: u64,
    config: &'a LockConfig,
    #[serde(flatten)]
    manifest: &'a LatchManifest,
    stats: &'a ProxyStats,
}

#[derive(Serialize)]
struct TraceCycle {
    #[serde(rename = "in")]
    inputs: String,
    reset: bool,
    high: String,
    low: String,
}

#[derive(Serialize)]
struct AttackStatsOut {
    dis_count: usize,
    final_depth: usize,
    solver_calls: usize,
    dis_cycles: Vec<usize>,
}

#[derive(Serialize)]
struct Validation {
    depth: usize,
    passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    counterexample: Option<Vec<TraceCycle>>,
}

#[derive(Serialize)]
struct Timing {
    wall_ms: u128,
    solver_ms: u128,
}

#[derive(Serialize)]
struct AttackOut {
    format: u32,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    key: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    initial_state: Option<StateMap>,
    #[serde(skip_serializing_if = "Option::is_none")]
    witness: Option<[String; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    validation: Option<Validation>,
    stats: AttackStatsOut,
    trace: Vec<TraceCycle>,
    /// Wall-clock figures; the only part that varies between identical runs.
    timing: Timing,
}

#[derive(Serialize)]
struct VerifyOut {
    format: u32,
    cycles: usize,
    seeds: Vec<u64>,
    mismatches: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    first: Option<String>,
}

#[derive(Serialize)]
struct StatsOut {
    format: u32,
    #[serde(flatten)]
    stats: latchlock::netlist::NetlistStats,
    /// Keyed plus fixed-phase latches.
    latches: usize,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Command::Lock {
            input,
            bits,
            ratio,
            seed,
            delays,
            period,
            samples,
            no_retime,
            out,
            key,
            manifest,
        } => {
            let n = load_net(&input)?;
            let dm = load_delays(delays.as_deref())?;
            let clk = clock(&n, &dm, period)?;
            let cfg = LockConfig {
                key_bits: bits,
                decoy_ratio: ratio,
                seed,
                group_samples: samples,
                retime: !no_retime,
                ..LockConfig::default()
            };
            let r = lock(&n, &cfg, &dm, clk).map_err(|e| match e {
                LockError::Netlist(_) | LockError::Stage { .. } => invalid(e),
                _ => CliError::Usage(e.to_string()),
            })?;
            write(&out, &write_bench(&r.locked))?;
            write(&key, &json(&KeyFile::new(&r.locked, &r.correct_key)))?;
            let mf = ManifestFile {
                format: SCHEMA_VERSION,
                seed,
                config: &cfg,
                manifest: &r.manifest,
                stats: &r.stats,
            };
            write(&manifest, &json(&mf))?;
        }
        Command::Attack {
            net,
            oracle_net,
            oracle_key,
            delays,
            period,
            state_seed,
            budget_s,
            conflicts,
            max_depth,
            validate_depth,
            out,
        } => {
            let locked = load_net(&net)?;
            let onet = load_net(&oracle_net)?;
            let okey = load_key(&oracle_key)?;
            if okey.len() != onet.num_key_bits() {
                return Err(invalid(format!(
                    "oracle key has {} bits, netlist needs {}",
                    okey.len(),
                    onet.num_key_bits()
                )));
            }
            let dm = load_delays(delays.as_deref())?;
            let clk = clock(&locked, &dm, period)?;
            let mut oracle = OracleSession::new(&onet, &okey, state_seed).map_err(invalid)?;
            let budget = AttackBudget {
                wall: Duration::from_secs(budget_s),
                conflicts,
                max_depth,
                ..AttackBudget::default()
            };
            let r = run_attack(&locked, &dm, clk, &mut oracle, &budget).map_err(invalid)?;
            let cycle_out = |c: &latchlock::sim::CycleInput,
                             o: Option<&latchlock::sim::CycleOutput>| {
                TraceCycle {
                    inputs: bits_to_string(&c.inputs),
                    reset: c.reset,
                    high: o.map(|o| bits_to_string(&o.high)).unwrap_or_default(),
                    low: o.map(|o| bits_to_string(&o.low)).unwrap_or_default(),
                }
            };
            let mut doc = AttackOut {
                format: SCHEMA_VERSION,
                status: "",
                key: None,
                initial_state: None,
                witness: None,
                validation: None,
                stats: AttackStatsOut {
                    dis_count: r.stats.dis_count,
                    final_depth: r.stats.final_depth,
                    solver_calls: r.stats.solver_calls,
                    dis_cycles: r.stats.iterations.iter().map(|i| i.dis_cycles).collect(),
                },
                trace: r.trace.iter().map(|(c, o)| cycle_out(c, Some(o))).collect(),
                timing: Timing {
                    wall_ms: r.stats.wall_time.as_millis(),
                    solver_ms: r.stats.solver_time.as_millis(),
                },
            };
            let outcome = match &r.status {
                AttackStatus::Solved { key, initial_state } => {
                    doc.status = "solved";
                    doc.key = Some(key.to_string());
                    doc.initial_state = Some(initial_state.clone());
                    let same_net = write_bench(&onet) == write_bench(&locked);
                    if same_net {
                        let v = validate_key(&locked, &okey, key, initial_state, validate_depth);
                        let passed = v.is_ok();
                        doc.validation = Some(Validation {
                            depth: validate_depth,
                            passed,
                            counterexample: v
                                .err()
                                .map(|cex| cex.iter().map(|c| cycle_out(c, None)).collect()),
                        });
                        if passed {
                            Ok(())
                        } else {
                            Err(invalid(format!(
                                "recovered key {key} fails validation at depth {validate_depth}"
                            )))
                        }
                    } else {
                        Ok(())
                    }
                }
                AttackStatus::Timeout { witness } => {
                    doc.status = "timeout";
                    doc.witness = witness
                        .as_ref()
                        .map(|(a, b)| [a.to_string(), b.to_string()]);
                    Err(CliError::Timeout(format!(
                        "budget exhausted after {} DIS",
                        r.stats.dis_count
                    )))
                }
                AttackStatus::Infeasible => {
                    doc.status = "infeasible";
                    Err(invalid("no key satisfies the key constraints"))
                }
            };
            write(&out, &json(&doc))?;
            outcome?;
        }
        Command::CountKeys {
            net,
            delays,
            period,
            bits_max,
            out,
        } => {
            let n = load_net(&net)?;
            let dm = load_delays(delays.as_deref())?;
            let clk = clock(&n, &dm, period)?;
            let set = generate(&n, &dm, clk, PathOptions::default());
            let c =
                count_valid_keys(&n, &set, bits_max).map_err(|e| CliError::Usage(e.to_string()))?;
            let csv = format!(
                "bits,loop_count,timing_count,intersection\n{},{},{},{}\n",
                c.bits, c.loop_only, c.timing_only, c.intersection
            );
            write(&out, &csv)?;
        }
        Command::Simulate {
            net,
            key,
            trace,
            out,
        } => {
            let n = load_net(&net)?;
            let key = match key {
                Some(k) => load_key(&k)?,
                None => KeyVector::zeros(n.num_key_bits()),
            };
            if key.len() != n.num_key_bits() {
                return Err(invalid(format!(
                    "key has {} bits, netlist needs {}",
                    key.len(),
                    n.num_key_bits()
                )));
            }
            let t = Trace::from_json(&read(&trace)?).map_err(invalid)?;
            let filled = simulate(&n, &key, &t).map_err(invalid)?;
            emit(out.as_deref(), &filled.to_json())?;
        }
        Command::Verify {
            orig,
            locked,
            key,
            manifest,
            cycles,
            seeds,
            seed,
            out,
        } => {
            let a = load_net(&orig)?;
            let b = load_net(&locked)?;
            let key = load_key(&key)?;
            if key.len() != b.num_key_bits() {
                return Err(invalid(format!(
                    "key has {} bits, netlist needs {}",
                    key.len(),
                    b.num_key_bits()
                )));
            }
            let m: Option<LatchManifest> = match manifest {
                Some(p) => Some(
                    serde_json::from_str(&read(&p)?)
                        .map_err(|e| invalid(format!("{}: {e}", p.display())))?,
                ),
                None => None,
            };
            let list: Vec<u64> = (0..seeds)
                .map(|i| rng::derive(seed, &format!("verify/{i}")))
                .collect();
            let jobs = cli.jobs.max(1);
            let results: Vec<Result<latchlock::locking::Mismatches, String>> =
                std::thread::scope(|s| {
                    let chunks: Vec<Vec<u64>> = list
                        .chunks(list.len().div_ceil(jobs).max(1))
                        .map(|c| c.to_vec())
                        .collect();
                    let handles: Vec<_> = chunks
                        .into_iter()
                        .map(|chunk| {
                            let (a, b, key, m) = (&a, &b, &key, &m);
                            s.spawn(move || {
                                chunk
                                    .iter()
                                    .map(|&sd| count_mismatches(a, b, key, m.as_ref(), cycles, sd))
                                    .collect::<Vec<_>>()
                            })
                        })
                        .collect();
                    handles
                        .into_iter()
                        .flat_map(|h| h.join().expect("worker panicked"))
                        .collect()
                });
            let mut doc = VerifyOut {
                format: SCHEMA_VERSION,
                cycles,
                seeds: list,
                mismatches: 0,
                first: None,
            };
            for r in results {
                let r = r.map_err(invalid)?;
                doc.mismatches += r.count;
                if doc.first.is_none() {
                    doc.first = r.first;
                }
            }
            emit(out.as_deref(), &json(&doc))?;
            if doc.mismatches > 0 {
                return Err(invalid(format!(
                    "{} mismatching output bits",
                    doc.mismatches
                )));
            }
        }
        Command::Stats { net, out } => {
            let n = load_net(&net)?;
            let stats = n.stats();
            let latches = stats.klatches + stats.fixed_latches;
            emit(
                out.as_deref(),
                &json(&StatsOut {
                    format: SCHEMA_VERSION,
                    stats,
                    latches,
                }),
            )?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let diag: BTreeMap<&str, String> =
                BTreeMap::from([("error", e.kind().to_string()), ("message", e.to_string())]);
            eprintln!("{}", serde_json::to_string(&diag).expect("map serializes"));
            ExitCode::from(e.code())
        }
    }
}
