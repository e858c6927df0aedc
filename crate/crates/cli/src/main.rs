//! Command-line front end: experiment orchestration over policy grids and
//! seed sweeps, plan inspection, report comparison, transposition checking,
//! and fault-tolerance threshold estimation.
//!
//! Exit codes: 0 success, 1 run failure (infeasible plan without
//! --allow-infeasible, round-trip mismatch), 2 input error, 3 report
//! comparison mismatch, 4 index arithmetic guard.

mod spec;

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use xbarsim_core::arch::{CrossbarState, EnduranceModel, WearCounters};
use xbarsim_core::engine::{self, SimPolicy, SimReport, StopReason};
use xbarsim_core::error::Error as CoreError;
use xbarsim_core::fault::{self, FaultToleranceProfile, ToyEvaluator};
use xbarsim_core::sched;
use xbarsim_core::transpose;

/// Headline ratios reported by the reference evaluation at full scale,
/// printed alongside desk-scale comparisons for context.
const REFERENCE_LADDER: &str =
    "reference (full-scale, reported): total 13.2x; fault handling 4.6x; batching 2.6x";

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn input(message: impl Into<String>) -> Self {
        Self::new(2, message)
    }

    fn run(message: impl Into<String>) -> Self {
        Self::new(1, message)
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::ReportMismatch(_) => Self::new(3, e.to_string()),
            CoreError::IndexOverflow { .. } => Self::new(4, e.to_string()),
            CoreError::PlanInfeasible(_) => Self::run(e.to_string()),
            _ => Self::input(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "xbarsim",
    about = "Lifespan simulator for ReRAM crossbar DNN accelerators",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (policy, seed) cell of an experiment and write reports.
    Run {
        /// Experiment spec JSON.
        #[arg(long)]
        config: PathBuf,
        /// Output directory for reports, CSVs and index.json.
        #[arg(long)]
        out: PathBuf,
        /// Replace the experiment file's seed list with a single seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Exit 0 even when runs end with an infeasible plan.
        #[arg(long)]
        allow_infeasible: bool,
    },
    /// Emit the binding plan and schedule for one policy without simulating.
    Plan {
        #[arg(long)]
        config: PathBuf,
        /// Policy name from the experiment file's matrix (default: first).
        #[arg(long)]
        policy: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare reports against the first one (the baseline).
    Compare {
        /// Report JSON files.
        reports: Vec<PathBuf>,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Verify the in-situ transposition path for an N x M matrix.
    TransposeCheck {
        n: u64,
        m: u64,
        banks: u64,
        /// Machine-readable output.
        #[arg(long)]
        json: bool,
    },
    /// Estimate per-layer fault-tolerance thresholds with the built-in
    /// evaluator.
    EstimateThresholds {
        /// Experiment spec JSON (supplies the workload).
        #[arg(long)]
        config: PathBuf,
        /// Output profile JSON.
        #[arg(long)]
        out: PathBuf,
        /// Maximum acceptable mean accuracy loss.
        #[arg(long, default_value_t = 0.01)]
        limit: f64,
        #[arg(long, default_value_t = 4)]
        step: u64,
        #[arg(long, default_value_t = 32)]
        trials: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Upper bound of the fault-count sweep.
        #[arg(long, default_value_t = 256)]
        cap: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            out,
            seed,
            allow_infeasible,
        } => cmd_run(&config, &out, seed, allow_infeasible),
        Command::Plan {
            config,
            policy,
            seed,
            out,
        } => cmd_plan(&config, policy.as_deref(), seed, out.as_deref()),
        Command::Compare { reports, csv } => cmd_compare(&reports, csv.as_deref()),
        Command::TransposeCheck { n, m, banks, json } => cmd_transpose_check(n, m, banks, json),
        Command::EstimateThresholds {
            config,
            out,
            limit,
            step,
            trials,
            seed,
            cap,
        } => cmd_estimate_thresholds(&config, &out, limit, step, trials, seed, cap),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::run(format!("cannot create {}: {e}", parent.display())))?;
    }
    let mut f = std::fs::File::create(path)
        .map_err(|e| CliError::run(format!("cannot create {}: {e}", path.display())))?;
    f.write_all(contents.as_bytes())
        .and_then(|_| f.flush())
        .map_err(|e| CliError::run(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

fn throughput_csv(report: &SimReport) -> String {
    let mut out = String::from("inference,throughput_ips\n");
    for p in &report.throughput_series {
        out.push_str(&format!("{},{:.6}\n", p.inference, p.throughput_ips));
    }
    out
}

fn retired_csv(report: &SimReport) -> String {
    let mut out = String::from("inference,cumulative_retired\n");
    for p in &report.retired_columns_series {
        out.push_str(&format!("{},{}\n", p.inference, p.cumulative_retired));
    }
    out
}


fn cmd_run(
    spec_path: &Path,
    out_dir: &Path,
    seed_override: Option<u64>,
    allow_infeasible: bool,
) -> Result<(), CliError> {
    let spec = spec::load_spec(spec_path)?;
    let dir = spec::spec_dir(spec_path);
    let config = spec.resolve_config(&dir)?;
    let graph = spec.resolve_workload(&dir)?;
    let explicit_profile = spec.resolve_profile(&dir)?;
    let seeds = seed_override.map(|s| vec![s]).unwrap_or(spec.seeds.clone());
    if spec.policies.is_empty() {
        return Err(CliError::input("spec has no policies"));
    }

    let mut entries = Vec::new();
    let mut infeasible = false;
    for entry in &spec.policies {
        for &seed in &seeds {
            let policy = spec.resolve_policy(entry, seed)?;
            let profile = match (&explicit_profile, policy.approximation) {
                (Some(p), _) => p.clone(),
                (None, false) => FaultToleranceProfile::zero(&graph),
                (None, true) => {
                    // No profile supplied: estimate one with the built-in
                    // evaluator so approximation runs stay self-contained.
                    eprintln!(
                        "note: estimating tolerance profile for policy '{}' (seed {seed})",
                        entry.name
                    );
                    fault::estimate_thresholds(
                        &graph,
                        &ToyEvaluator::new(seed),
                        0.01,
                        4,
                        32,
                        seed,
                        256,
                    )?
                }
            };
            let cell = format!("{}_s{}", entry.name, seed);
            let (report, snapshot) =
                match engine::run_with_snapshot(&graph, &config, &policy, &profile) {
                    Ok(pair) => pair,
                    Err(CoreError::PlanInfeasible(msg)) => {
                        // The initial bind already failed: no report to write.
                        eprintln!("{cell}: infeasible plan ({msg})");
                        infeasible = true;
                        entries.push(serde_json::json!({
                            "policy": entry.name,
                            "seed": seed,
                            "error": format!("plan infeasible: {msg}"),
                        }));
                        continue;
                    }
                    Err(e) => return Err(e.into()),
                };
            if report.stop_reason == StopReason::PlanInfeasible {
                infeasible = true;
            }
            let report_rel = format!("{cell}/report.json");
            let tput_rel = format!("{cell}/throughput_series.csv");
            let retired_rel = format!("{cell}/retired_columns.csv");
            let snapshot_rel = format!("{cell}/state_snapshot.json");
            let report_json = serde_json::to_string_pretty(&report)
                .map_err(|e| CliError::run(e.to_string()))?;
            write_file(&out_dir.join(&report_rel), &report_json)?;
            write_file(&out_dir.join(&tput_rel), &throughput_csv(&report))?;
            write_file(&out_dir.join(&retired_rel), &retired_csv(&report))?;
            write_file(
                &out_dir.join(&snapshot_rel),
                &serde_json::to_string_pretty(&snapshot)
                    .map_err(|e| CliError::run(e.to_string()))?,
            )?;
            println!(
                "{cell}: lifespan {} inferences ({:.3e} days), {} reconfigs, stop {:?}",
                report.lifespan_inferences,
                report.lifespan_days,
                report.reconfigurations,
                report.stop_reason
            );
            entries.push(serde_json::json!({
                "policy": entry.name,
                "seed": seed,
                "report": report_rel,
                "throughput_csv": tput_rel,
                "retired_csv": retired_rel,
                "state_snapshot": snapshot_rel,
                "stop_reason": report.stop_reason,
                "lifespan_inferences": report.lifespan_inferences,
            }));
        }
    }
    // index.json is written last so a complete index implies complete runs.
    let index = serde_json::json!({ "runs": entries });
    write_file(
        &out_dir.join("index.json"),
        &serde_json::to_string_pretty(&index).map_err(|e| CliError::run(e.to_string()))?,
    )?;
    if infeasible && !allow_infeasible {
        return Err(CliError::run(
            "at least one run ended with an infeasible plan (use --allow-infeasible to ignore)",
        ));
    }
    Ok(())
}

fn cmd_plan(
    spec_path: &Path,
    policy_name: Option<&str>,
    seed_override: Option<u64>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let spec = spec::load_spec(spec_path)?;
    let dir = spec::spec_dir(spec_path);
    let config = spec.resolve_config(&dir)?;
    let graph = spec.resolve_workload(&dir)?;
    let entry = match policy_name {
        None => spec
            .policies
            .first()
            .ok_or_else(|| CliError::input("spec has no policies".to_string()))?,
        Some(name) => spec
            .policies
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| CliError::input(format!("no policy named '{name}' in spec")))?,
    };
    let seed = seed_override.unwrap_or_else(|| spec.seeds.first().copied().unwrap_or(0));
    let policy: SimPolicy = spec.resolve_policy(entry, seed)?;

    let batch = if policy.batching {
        sched::compute_batch_size(
            &graph,
            config.gbuffer_bytes,
            config.activation_bits,
            policy.batch_cap,
        )?
        .size
    } else {
        1
    };
    let state = CrossbarState::new(
        &config,
        EnduranceModel {
            mean: policy.endurance.mean,
            cov: policy.endurance.cov,
            seed: policy.seed,
        },
    );
    let wear = WearCounters::new(&config);
    let plan = sched::bind(&graph, &config, &state, &wear, batch, 0)?;
    let schedule = sched::schedule(&plan, &graph, &config)?;
    let latency = engine::inference_latency(&schedule, &config);
    let output = serde_json::json!({
        "policy": entry.name,
        "batch_size": batch,
        "batch_makespan_cycles": latency,
        "plan": plan,
        "schedule": schedule,
    });
    let text =
        serde_json::to_string_pretty(&output).map_err(|e| CliError::run(e.to_string()))?;
    match out {
        Some(path) => write_file(path, &text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn cmd_compare(reports: &[PathBuf], csv: Option<&Path>) -> Result<(), CliError> {
    if reports.len() < 2 {
        return Err(CliError::input("compare needs at least two reports"));
    }
    let loaded: Vec<SimReport> = reports
        .iter()
        .map(|p| spec::read_json(p))
        .collect::<Result<_, _>>()?;
    let table = engine::compare(&loaded)?;
    print!("{table}");
    println!("{REFERENCE_LADDER}");
    if let Some(path) = csv {
        write_file(path, &table.to_csv())?;
    }
    Ok(())
}

fn cmd_transpose_check(n: u64, m: u64, banks: u64, json: bool) -> Result<(), CliError> {
    if n < 1 || m < 1 || banks < 1 {
        return Err(CliError::input("N, M and banks must all be >= 1"));
    }
    let check = transpose::round_trip_check(n, m, banks)?;
    if json {
        println!(
            "{}",
            serde_json::to_string_pretty(&check).map_err(|e| CliError::run(e.to_string()))?
        );
    } else {
        if n * m <= 256 {
            let cycles: Vec<String> = check
                .cycles
                .iter()
                .map(|c| {
                    format!(
                        "{{{}}}",
                        c.iter()
                            .map(|v| v.to_string())
                            .collect::<Vec<_>>()
                            .join(",")
                    )
                })
                .collect();
            println!("cycles: {}", cycles.join(" "));
        } else {
            println!(
                "cycles: {} (of sizes up to {})",
                check.cycles.len(),
                check.cycles.iter().map(Vec::len).max().unwrap_or(0)
            );
        }
        println!(
            "transactions: {}  swapped elements: {}  collision micro-transactions: {}",
            check.stats.transactions, check.stats.swapped_elements, check.stats.micro_transactions
        );
        println!(
            "round-trip: {}",
            if check.round_trip_ok { "OK" } else { "MISMATCH" }
        );
    }
    if check.round_trip_ok {
        Ok(())
    } else {
        Err(CliError::run(format!(
            "bank-layout round trip does not match the direct transpose for {n}x{m}"
        )))
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_estimate_thresholds(
    spec_path: &Path,
    out: &Path,
    limit: f64,
    step: u64,
    trials: u32,
    seed: u64,
    cap: u64,
) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&limit) {
        return Err(CliError::input("limit must lie in [0, 1]"));
    }
    let spec = spec::load_spec(spec_path)?;
    let dir = spec::spec_dir(spec_path);
    let graph = spec.resolve_workload(&dir)?;
    let ev = ToyEvaluator::new(seed);
    let profile = fault::estimate_thresholds(&graph, &ev, limit, step, trials, seed, cap)?;
    let uniform = profile
        .per_layer_threshold
        .values()
        .next()
        .copied()
        .unwrap_or(0);
    write_file(
        out,
        &serde_json::to_string_pretty(&profile).map_err(|e| CliError::run(e.to_string()))?,
    )?;
    println!(
        "threshold {} faults/layer at loss limit {:.3} (baseline accuracy {:.4}); profile written to {}",
        uniform,
        limit,
        profile.baseline_accuracy,
        out.display()
    );
    Ok(())
}
