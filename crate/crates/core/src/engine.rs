//! The discrete-event core: executes schedules batch by batch, applies the
//! wear-leveling remaps while counting cell writes, throttles concurrent
//! weight writes against main-memory bandwidth, detects wear-out faults,
//! drives the Request / assess / re-bind loop, and stops once throughput
//! falls below the configured floor.
//!
//! Time advances per whole batch rather than per cycle: cell wear only
//! changes at write events, so the batch makespan is evaluated analytically
//! from the schedule's dependency graph and stays constant between
//! reconfigurations.

use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::arch::{AcceleratorConfig, CellAddress, CrossbarState, EnduranceModel, WearCounters};
use crate::error::{Error, Result};
use crate::fault::{self, Assessment, FaultLedger, FaultToleranceProfile};
use crate::sched::{self, BindingPlan, Schedule, SpareOutcome, Task, TaskKind};
use crate::wearlevel::{self, WlPolicy};
use crate::workload::NetworkGraph;

/// Endurance distribution parameters; the sampling seed is derived from the
/// policy seed so one seed reproduces the whole experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnduranceParams {
    pub mean: f64,
    pub cov: f64,
}

impl Default for EnduranceParams {
    fn default() -> Self {
        Self {
            mean: 2.5e9,
            cov: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimPolicy {
    #[serde(skip_serializing_if = "String::is_empty")]
    pub label: String,
    /// Throughput drop fraction ending the run (0.40: stop below 60% of
    /// peak).
    pub throughput_drop_limit: f64,
    /// Continue past wear-outs by retiring columns; off reproduces the
    /// stop-at-first-fault baseline.
    pub fault_handling: bool,
    /// Defer retirement while per-layer fault counts stay within the
    /// tolerance profile.
    pub approximation: bool,
    pub wl: WlPolicy,
    pub batching: bool,
    pub batch_cap: u32,
    pub max_inferences: u64,
    pub seed: u64,
    pub endurance: EnduranceParams,
}

impl Default for SimPolicy {
    fn default() -> Self {
        Self {
            label: String::new(),
            throughput_drop_limit: 0.40,
            fault_handling: true,
            approximation: false,
            wl: WlPolicy::default(),
            batching: true,
            batch_cap: 64,
            max_inferences: 10_000_000,
            seed: 0,
            endurance: EnduranceParams::default(),
        }
    }
}

impl SimPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.throughput_drop_limit > 0.0 && self.throughput_drop_limit < 1.0) {
            return Err(Error::InvalidArgument(
                "throughput_drop_limit must lie in (0, 1)".into(),
            ));
        }
        if self.batch_cap < 1 {
            return Err(Error::InvalidArgument("batch_cap must be >= 1".into()));
        }
        if !(self.endurance.mean > 0.0) || !(self.endurance.cov >= 0.0) {
            return Err(Error::InvalidArgument(
                "endurance mean must be > 0 and cov >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ThroughputFloor,
    FirstFault,
    MaxInferences,
    PlanInfeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThroughputPoint {
    pub inference: u64,
    pub throughput_ips: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetiredPoint {
    pub inference: u64,
    pub cumulative_retired: u64,
}

/// Identity of a run; compare() only accepts reports sharing it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub label: String,
    pub workload: String,
    pub seed: u64,
    pub config: AcceleratorConfig,
    pub policy: SimPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub meta: RunMeta,
    pub lifespan_inferences: u64,
    pub lifespan_days: f64,
    pub peak_throughput: f64,
    pub batch_size: u32,
    pub throughput_series: Vec<ThroughputPoint>,
    pub retired_columns_series: Vec<RetiredPoint>,
    pub reconfigurations: u64,
    pub inferences_per_reconfig: f64,
    /// Total cell writes; equals the sum of per-cell counters at
    /// termination.
    pub write_events_total: u64,
    /// Crossbar row-write events for static-weight layers.
    pub static_row_writes: u64,
    /// Crossbar row-write events for dynamic matmul operands.
    pub dynamic_row_writes: u64,
    pub stop_reason: StopReason,
}

/// Critical-path makespan of one batch in cycles. Computes cost
/// `xbar_compute_cycles` per input vector (elementwise layers use the SFU
/// per-token cost instead); writes cost `row_write_cycles` per row with
/// concurrent writes admitted greedily in schedule order while their
/// aggregate fetch rate fits main-memory bandwidth; transfers are free.
pub fn inference_latency(sched: &Schedule, config: &AcceleratorConfig) -> u64 {
    let n = sched.tasks.len();
    if n == 0 {
        return 0;
    }
    let duration = |t: &Task| -> u64 {
        match t.kind {
            TaskKind::Write => t.write_rows as u64 * config.row_write_cycles,
            TaskKind::Compute => {
                let per = if t.elementwise {
                    config.elementwise_cycles_per_token
                } else {
                    config.xbar_compute_cycles
                };
                t.compute_vectors * per
            }
            TaskKind::Transfer => 0,
        }
    };
    // Bandwidth cap expressed as bytes deliverable per row-write window, so
    // admission control stays in integer arithmetic.
    let cap_bytes = ((config.mm_bandwidth_bytes_per_s / config.freq_hz)
        * config.row_write_cycles as f64)
        .floor()
        .max(1.0) as u64;

    let mut deps_left = vec![0usize; n];
    let mut dependents: Vec<Vec<u32>> = vec![Vec::new(); n];
    for t in &sched.tasks {
        deps_left[t.id as usize] = t.depends_on.len();
        for &d in &t.depends_on {
            dependents[d as usize].push(t.id);
        }
    }

    let mut running: BinaryHeap<std::cmp::Reverse<(u64, u32)>> = BinaryHeap::new();
    let mut waiting_writes: BTreeSet<u32> = BTreeSet::new();
    let mut bw_used = 0u64;
    let mut makespan = 0u64;

    let start = |task: &Task,
                     now: u64,
                     running: &mut BinaryHeap<std::cmp::Reverse<(u64, u32)>>,
                     waiting: &mut BTreeSet<u32>| {
        if task.kind == TaskKind::Write {
            waiting.insert(task.id);
        } else {
            running.push(std::cmp::Reverse((now + duration(task), task.id)));
        }
    };

    for t in &sched.tasks {
        if deps_left[t.id as usize] == 0 {
            start(t, 0, &mut running, &mut waiting_writes);
        }
    }
    // Admission loop shared by startup and completions.
    let admit = |now: u64,
                 bw_used: &mut u64,
                 waiting: &mut BTreeSet<u32>,
                 running: &mut BinaryHeap<std::cmp::Reverse<(u64, u32)>>,
                 tasks: &[Task]| {
        while let Some(&head) = waiting.iter().next() {
            let bytes = tasks[head as usize].write_bytes_per_row;
            if *bw_used == 0 || *bw_used + bytes <= cap_bytes {
                waiting.remove(&head);
                *bw_used += bytes;
                running.push(std::cmp::Reverse((
                    now + duration(&tasks[head as usize]),
                    head,
                )));
            } else {
                break;
            }
        }
    };
    admit(0, &mut bw_used, &mut waiting_writes, &mut running, &sched.tasks);

    let mut completed = 0usize;
    while let Some(std::cmp::Reverse((time, id))) = running.pop() {
        completed += 1;
        makespan = makespan.max(time);
        let task = &sched.tasks[id as usize];
        if task.kind == TaskKind::Write {
            bw_used -= task.write_bytes_per_row;
        }
        for &dep in &dependents[id as usize] {
            deps_left[dep as usize] -= 1;
            if deps_left[dep as usize] == 0 {
                start(
                    &sched.tasks[dep as usize],
                    time,
                    &mut running,
                    &mut waiting_writes,
                );
            }
        }
        admit(
            time,
            &mut bw_used,
            &mut waiting_writes,
            &mut running,
            &sched.tasks,
        );
    }
    debug_assert!(waiting_writes.is_empty(), "schedule deadlocked in admission");
    assert_eq!(
        completed, n,
        "cyclic resource wait: {} of {n} tasks never became ready",
        n - completed
    );
    makespan
}

fn throughput_ips(batch: u32, makespan_cycles: u64, freq_hz: f64) -> f64 {
    batch as f64 * freq_hz / makespan_cycles.max(1) as f64
}

fn apply_bound_registry(state: &mut CrossbarState, plan: &BindingPlan) {
    state.clear_bound();
    for binding in &plan.bindings {
        for a in &binding.assignments {
            state.set_bound(a.apu, &a.cols, true);
        }
    }
}

#[derive(Default)]
struct WriteCounters {
    cells: u64,
    static_rows: u64,
    dynamic_rows: u64,
}

/// Fires every write task of the schedule once (one batch worth of weight
/// traffic), applying rotation, row shift and the per-group update
/// probabilities, and returns the wear-outs that surfaced. Row events are
/// deterministic; the active column set per row varies with the write-event
/// index of each layer.
#[allow(clippy::too_many_arguments)]
fn execute_batch(
    sched: &Schedule,
    plan: &BindingPlan,
    g: &NetworkGraph,
    config: &AcceleratorConfig,
    policy: &SimPolicy,
    state: &mut CrossbarState,
    events: &mut BTreeMap<u32, u64>,
    counters: &mut WriteCounters,
) -> Result<Vec<CellAddress>> {
    let mut faults = Vec::new();
    let mut active: Vec<u32> = Vec::new();
    for task in sched.tasks_of(TaskKind::Write) {
        let layer = g.layer(task.layer).unwrap();
        let binding = plan.binding(task.layer).unwrap();
        let groups = layer.weight_bits / config.cell_bits;
        let event_idx = {
            let e = events.entry(task.layer).or_insert(0);
            let v = *e;
            *e += 1;
            v
        };
        let wave_base = task.wave * binding.kernels_per_wave;
        for a in &binding.assignments {
            let global_first = wave_base + a.kernel_base;
            let count = a.kernels.min(layer.out_dim.saturating_sub(global_first));
            if count == 0 {
                continue;
            }
            let start = policy.wl.start_row(event_idx, a.rows, config.xbar_rows);
            for r in 0..a.rows {
                let phys = (start + r) % config.xbar_rows;
                let input_idx = a.stack_index as u64 * config.xbar_rows as u64 + r as u64;
                active.clear();
                for j in 0..count {
                    let kernel = (global_first + j) as u64;
                    let weight_idx = kernel * layer.in_dim as u64 + input_idx;
                    for gr in 0..groups {
                        if policy
                            .wl
                            .sample_group_update(event_idx, weight_idx, gr, policy.seed)
                        {
                            let off = policy.wl.bit_group_cell(event_idx, gr, groups);
                            active.push(a.cols[(j * groups + off) as usize]);
                        }
                    }
                }
                counters.cells += active.len() as u64;
                if layer.kind.is_dynamic() {
                    counters.dynamic_rows += 1;
                } else {
                    counters.static_rows += 1;
                }
                faults.extend(state.record_row_write(a.apu, phys, &active)?);
            }
        }
    }
    Ok(faults)
}

/// The weight-bit group count shared by all weight-bearing layers; the
/// per-group update probabilities are sized against it.
fn uniform_group_count(g: &NetworkGraph, config: &AcceleratorConfig) -> Result<u32> {
    let mut groups = None;
    for l in &g.layers {
        if !l.kind.bears_weights() {
            continue;
        }
        if l.weight_bits % config.cell_bits != 0 {
            return Err(Error::InvalidArgument(format!(
                "cell_bits {} does not divide weight_bits {} (layer {})",
                config.cell_bits, l.weight_bits, l.id
            )));
        }
        let gcount = l.weight_bits / config.cell_bits;
        match groups {
            None => groups = Some(gcount),
            Some(prev) if prev != gcount => {
                return Err(Error::InvalidArgument(
                    "mixed weight precisions are not supported in one workload".into(),
                ))
            }
            _ => {}
        }
    }
    groups.ok_or_else(|| Error::InvalidArgument("workload has no weight-bearing layers".into()))
}

/// Runs the full lifespan loop: bind, schedule, execute batches while
/// counting wear, pause on faults for the Request stage and the keep/retire
/// assessment, re-bind after retirements, and stop at the throughput floor,
/// the first fault (when fault handling is off), the inference budget, or an
/// infeasible re-bind.
pub fn run(
    g: &NetworkGraph,
    config: &AcceleratorConfig,
    policy: &SimPolicy,
    profile: &FaultToleranceProfile,
) -> Result<SimReport> {
    run_with_snapshot(g, config, policy, profile).map(|(report, _)| report)
}

/// Like [`run`], additionally returning the terminal hardware state snapshot
/// for post-mortem analysis.
pub fn run_with_snapshot(
    g: &NetworkGraph,
    config: &AcceleratorConfig,
    policy: &SimPolicy,
    profile: &FaultToleranceProfile,
) -> Result<(SimReport, crate::arch::StateSnapshot)> {
    config.validate()?;
    policy.validate()?;
    g.ensure_valid()?;
    let groups = uniform_group_count(g, config)?;
    policy.wl.validate(groups)?;

    let batch = if policy.batching {
        sched::compute_batch_size(g, config.gbuffer_bytes, config.activation_bits, policy.batch_cap)?
            .size
    } else {
        1
    };
    let model = EnduranceModel {
        mean: policy.endurance.mean,
        cov: policy.endurance.cov,
        seed: policy.seed,
    };
    let mut state = CrossbarState::new(config, model);
    let mut wear = WearCounters::new(config);
    let mut ledger = FaultLedger::default();
    let effective_profile = if policy.approximation {
        profile.clone()
    } else {
        FaultToleranceProfile::zero(g)
    };

    let mut generation = 0u32;
    let mut plan = sched::bind(g, config, &state, &wear, batch, generation)?;
    apply_bound_registry(&mut state, &plan);
    let mut schedule = sched::schedule(&plan, g, config)?;
    let makespan = inference_latency(&schedule, config);
    let peak = throughput_ips(batch, makespan, config.freq_hz);
    let mut current = peak;
    let floor = (1.0 - policy.throughput_drop_limit) * peak;

    let mut throughput_series = vec![ThroughputPoint {
        inference: 0,
        throughput_ips: peak,
    }];
    let mut retired_series = vec![RetiredPoint {
        inference: 0,
        cumulative_retired: 0,
    }];
    let mut events: BTreeMap<u32, u64> = BTreeMap::new();
    let mut counters = WriteCounters::default();
    let mut inferences = 0u64;
    let mut last_request = 0u64;
    let mut reconfigs = 0u64;

    let stop_reason = loop {
        if inferences >= policy.max_inferences {
            break StopReason::MaxInferences;
        }
        let wave_faults = execute_batch(
            &schedule,
            &plan,
            g,
            config,
            policy,
            &mut state,
            &mut events,
            &mut counters,
        )?;
        inferences += batch as u64;
        if wave_faults.is_empty() {
            continue;
        }
        let new_faults = ledger.detect_on_write(&wave_faults, inferences);
        // Request stage: wear levels catch up with the inferences executed
        // under the outgoing configuration.
        wearlevel::update_pe_row_counters(&mut wear, &plan, inferences - last_request);
        last_request = inferences;
        for addr in &new_faults {
            ledger.count_fault(addr, &plan);
        }
        if !policy.fault_handling {
            break StopReason::FirstFault;
        }
        match fault::assess(&ledger, &effective_profile) {
            Assessment::KeepConfig => continue,
            Assessment::RetireAll => {
                let retired = ledger.retire_all();
                state.retire_columns(&retired);
                retired_series.push(RetiredPoint {
                    inference: inferences,
                    cumulative_retired: state.total_masked_columns(),
                });
                reconfigs += 1;
                generation += 1;
                // Fast path: patch every affected binding with a spare column
                // of the same crossbar; any miss forces a full re-bind.
                let mut need_rebind = false;
                'swap: for addr in &retired {
                    let covering: Vec<usize> = plan
                        .bindings
                        .iter()
                        .enumerate()
                        .filter(|(_, b)| b.covers(addr.apu(), addr.col))
                        .map(|(i, _)| i)
                        .collect();
                    for i in covering {
                        match sched::reassign_spare_column(
                            &mut plan.bindings[i],
                            addr.apu(),
                            addr.col,
                            &mut state,
                        ) {
                            SpareOutcome::Reassigned { .. } | SpareOutcome::NotBound => {}
                            SpareOutcome::NoSpare => {
                                need_rebind = true;
                                break 'swap;
                            }
                        }
                    }
                }
                if need_rebind {
                    match sched::bind(g, config, &state, &wear, batch, generation) {
                        Ok(p) => plan = p,
                        Err(Error::PlanInfeasible(_)) => break StopReason::PlanInfeasible,
                        Err(e) => return Err(e),
                    }
                    apply_bound_registry(&mut state, &plan);
                    schedule = sched::schedule(&plan, g, config)?;
                    current = throughput_ips(batch, inference_latency(&schedule, config), config.freq_hz);
                } else {
                    plan.generation = generation;
                }
                debug_assert!(sched::verify_plan_against_masks(&plan, &state).is_empty());
                debug_assert!(sched::verify_phase_exclusivity(&plan).is_empty());
                ledger.recompute_counts(&plan);
                throughput_series.push(ThroughputPoint {
                    inference: inferences,
                    throughput_ips: current,
                });
                if current < floor {
                    break StopReason::ThroughputFloor;
                }
            }
        }
    };

    debug_assert_eq!(counters.cells, state.total_cell_writes());
    let lifespan_days =
        inferences as f64 / (peak * 86_400.0 * config.utilization).max(f64::MIN_POSITIVE);
    let report = SimReport {
        meta: RunMeta {
            label: policy.label.clone(),
            workload: g.name.clone(),
            seed: policy.seed,
            config: config.clone(),
            policy: policy.clone(),
        },
        lifespan_inferences: inferences,
        lifespan_days,
        peak_throughput: peak,
        batch_size: batch,
        throughput_series,
        retired_columns_series: retired_series,
        reconfigurations: reconfigs,
        inferences_per_reconfig: inferences as f64 / reconfigs.max(1) as f64,
        write_events_total: counters.cells,
        static_row_writes: counters.static_rows,
        dynamic_row_writes: counters.dynamic_rows,
        stop_reason,
    };
    Ok((report, state.snapshot()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub label: String,
    pub lifespan_inferences: u64,
    pub lifespan_ratio: f64,
    pub reconfigurations: u64,
    pub inferences_per_reconfig: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareTable {
    pub rows: Vec<CompareRow>,
}

impl CompareTable {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("label,lifespan_inferences,lifespan_ratio,reconfigurations,inferences_per_reconfig\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:.6},{},{:.3}\n",
                r.label,
                r.lifespan_inferences,
                r.lifespan_ratio,
                r.reconfigurations,
                r.inferences_per_reconfig
            ));
        }
        out
    }
}

impl std::fmt::Display for CompareTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "{:<24} {:>16} {:>8} {:>10} {:>18}",
            "policy", "lifespan (inf)", "ratio", "reconfigs", "inf/reconfig"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<24} {:>16} {:>8.2} {:>10} {:>18.1}",
                r.label,
                r.lifespan_inferences,
                r.lifespan_ratio,
                r.reconfigurations,
                r.inferences_per_reconfig
            )?;
        }
        Ok(())
    }
}

/// Lifespan ratios against the first (baseline) report. All reports must
/// share workload, seed, and accelerator configuration.
pub fn compare(reports: &[SimReport]) -> Result<CompareTable> {
    let first = reports
        .first()
        .ok_or_else(|| Error::ReportMismatch("no reports given".into()))?;
    for r in &reports[1..] {
        if r.meta.workload != first.meta.workload {
            return Err(Error::ReportMismatch(format!(
                "workload '{}' vs '{}'",
                r.meta.workload, first.meta.workload
            )));
        }
        if r.meta.seed != first.meta.seed {
            return Err(Error::ReportMismatch(format!(
                "seed {} vs {}",
                r.meta.seed, first.meta.seed
            )));
        }
        if r.meta.config != first.meta.config {
            return Err(Error::ReportMismatch(
                "accelerator configurations differ".into(),
            ));
        }
    }
    let base = first.lifespan_inferences.max(1) as f64;
    Ok(CompareTable {
        rows: reports
            .iter()
            .map(|r| CompareRow {
                label: if r.meta.label.is_empty() {
                    "(unnamed)".into()
                } else {
                    r.meta.label.clone()
                },
                lifespan_inferences: r.lifespan_inferences,
                lifespan_ratio: r.lifespan_inferences as f64 / base,
                reconfigurations: r.reconfigurations,
                inferences_per_reconfig: r.inferences_per_reconfig,
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{Layer, LayerKind};

    fn manual_task(kind: TaskKind, id: u32, deps: Vec<u32>) -> Task {
        Task {
            id,
            kind,
            layer: 0,
            wave: 0,
            inference: 0,
            depends_on: deps,
            write_rows: 0,
            write_bytes_per_row: 0,
            compute_vectors: 0,
            elementwise: false,
            transfer_micro_tx: 0,
        }
    }

    #[test]
    fn latency_of_single_write_and_compute() {
        let config = AcceleratorConfig::default();
        let mut write = manual_task(TaskKind::Write, 0, vec![]);
        write.write_rows = 128;
        write.write_bytes_per_row = 32;
        let sched = Schedule {
            batch_size: 1,
            tasks: vec![write],
        };
        assert_eq!(inference_latency(&sched, &config), 128 * 6000);

        let mut compute = manual_task(TaskKind::Compute, 0, vec![]);
        compute.compute_vectors = 16;
        let sched = Schedule {
            batch_size: 1,
            tasks: vec![compute],
        };
        assert_eq!(inference_latency(&sched, &config), 16 * 96);

        let empty = Schedule {
            batch_size: 1,
            tasks: vec![],
        };
        assert_eq!(inference_latency(&empty, &config), 0);
    }

    #[test]
    fn two_layer_chain_overlaps_second_write_with_first_compute() {
        // Bandwidth admits one write at a time, so the second layer's write
        // starts when the first finishes and overlaps the first layer's
        // computes: makespan = w1 + max(B*c1, w2) + B*c2.
        let config = AcceleratorConfig {
            // One 32-byte row per 6000 cycles fits; two do not.
            mm_bandwidth_bytes_per_s: 40.0 / 6000.0 * 1.0e9,
            ..AcceleratorConfig::default()
        };
        let b = 3u64;
        let w1_rows = 64u32;
        let w2_rows = 128u32;
        let tokens = 100u64;
        let mut tasks = Vec::new();
        let mut w1 = manual_task(TaskKind::Write, 0, vec![]);
        w1.write_rows = w1_rows;
        w1.write_bytes_per_row = 32;
        tasks.push(w1);
        let mut w2 = manual_task(TaskKind::Write, 1, vec![]);
        w2.write_rows = w2_rows;
        w2.write_bytes_per_row = 32;
        tasks.push(w2);
        let mut prev = 0u32;
        for inf in 0..b {
            let mut deps = vec![0];
            if inf > 0 {
                deps.push(prev);
            }
            let mut c = manual_task(TaskKind::Compute, 2 + inf as u32, deps);
            c.compute_vectors = tokens;
            c.inference = inf as u32;
            tasks.push(c);
            prev = 2 + inf as u32;
        }
        let mut prev2 = 0u32;
        for inf in 0..b {
            let mut deps = vec![1, 2 + (b as u32 - 1).min(inf as u32 + 0)];
            // layer-2 compute depends on its write and the matching layer-1
            // compute of the same inference
            deps[1] = 2 + inf as u32;
            if inf > 0 {
                deps.push(prev2);
            }
            let mut c = manual_task(TaskKind::Compute, 2 + b as u32 + inf as u32, deps);
            c.compute_vectors = tokens;
            c.inference = inf as u32;
            tasks.push(c);
            prev2 = 2 + b as u32 + inf as u32;
        }
        // Renumber ids to match positions.
        for (i, t) in tasks.iter_mut().enumerate() {
            t.id = i as u32;
        }
        let sched = Schedule {
            batch_size: b as u32,
            tasks,
        };
        let w1c = w1_rows as u64 * 6000;
        let w2c = w2_rows as u64 * 6000;
        let c1 = b * tokens * 96;
        let c2 = b * tokens * 96;
        assert_eq!(
            inference_latency(&sched, &config),
            w1c + c1.max(w2c) + c2
        );
    }

    fn single_layer_workload() -> NetworkGraph {
        NetworkGraph {
            name: "rewrite8x8".into(),
            layers: vec![Layer {
                id: 0,
                kind: LayerKind::StaticFc,
                in_dim: 8,
                out_dim: 2,
                tokens_or_windows: 1,
                weight_bits: 8,
                transposed_operand: false,
            }],
            edges: vec![],
        }
    }

    fn tiny_config() -> AcceleratorConfig {
        AcceleratorConfig {
            num_pes: 1,
            apu_rows_per_pe: 1,
            apu_cols_per_pe: 1,
            xbar_rows: 8,
            xbar_cols: 8,
            ..AcceleratorConfig::default()
        }
    }

    fn baseline_policy(batching: bool) -> SimPolicy {
        SimPolicy {
            label: "baseline".into(),
            fault_handling: false,
            approximation: false,
            wl: WlPolicy::disabled(4),
            batching,
            batch_cap: 4,
            max_inferences: 1_000_000,
            seed: 1,
            endurance: EnduranceParams {
                mean: 100.0,
                cov: 0.0,
            },
            ..SimPolicy::default()
        }
    }

    #[test]
    fn hand_computable_lifespan_is_exact() {
        // 8x8 crossbar, uniform endurance 100, full rewrite per inference:
        // the baseline dies on inference 100 exactly. Batching by 4 divides
        // the write traffic, giving 400.
        let g = single_layer_workload();
        let config = tiny_config();
        let profile = FaultToleranceProfile::zero(&g);
        let report = run(&g, &config, &baseline_policy(false), &profile).unwrap();
        assert_eq!(report.lifespan_inferences, 100);
        assert_eq!(report.stop_reason, StopReason::FirstFault);
        assert_eq!(report.write_events_total, 100 * 64);

        let report = run(&g, &config, &baseline_policy(true), &profile).unwrap();
        assert_eq!(report.batch_size, 4);
        assert_eq!(report.lifespan_inferences, 400);
        assert_eq!(report.stop_reason, StopReason::FirstFault);
        assert_eq!(report.write_events_total, 100 * 64);
    }

    #[test]
    fn runs_are_deterministic_and_fault_handling_dominates() {
        let g = crate::workload::build_encoder_block(8, 16, 2, 4).unwrap();
        let config = AcceleratorConfig {
            num_pes: 2,
            apu_rows_per_pe: 2,
            apu_cols_per_pe: 2,
            xbar_rows: 16,
            xbar_cols: 16,
            ..AcceleratorConfig::default()
        };
        let mut policy = SimPolicy {
            label: "fh".into(),
            fault_handling: true,
            approximation: false,
            wl: WlPolicy::uniform(4),
            batching: false,
            max_inferences: 200_000,
            seed: 3,
            endurance: EnduranceParams {
                mean: 300.0,
                cov: 0.2,
            },
            ..SimPolicy::default()
        };
        let profile = FaultToleranceProfile::zero(&g);
        let a = run(&g, &config, &policy, &profile).unwrap();
        let b = run(&g, &config, &policy, &profile).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        policy.fault_handling = false;
        policy.label = "base".into();
        let base = run(&g, &config, &policy, &profile).unwrap();
        assert_eq!(base.stop_reason, StopReason::FirstFault);
        assert!(a.lifespan_inferences >= base.lifespan_inferences);
        assert!(a.reconfigurations > 0);
        // Conservation surfaced in the report.
        assert!(a.write_events_total > 0);
    }

    #[test]
    fn latency_non_decreasing_in_masked_columns() {
        // Same workload, progressively more dead columns: per-batch makespan
        // never drops (capacity loss can only add waves or slots).
        let g = single_layer_graph_wide();
        let config = AcceleratorConfig {
            num_pes: 1,
            apu_rows_per_pe: 1,
            apu_cols_per_pe: 1,
            xbar_rows: 32,
            xbar_cols: 32,
            ..AcceleratorConfig::default()
        };
        let wear = WearCounters::new(&config);
        let mut prev = 0u64;
        for masked in 0..6u32 {
            let mut state = CrossbarState::new(
                &config,
                EnduranceModel {
                    mean: 1e9,
                    cov: 0.0,
                    seed: 0,
                },
            );
            let faults: Vec<CellAddress> = (0..masked * 4)
                .map(|c| CellAddress {
                    pe: 0,
                    apu_row: 0,
                    apu_col: 0,
                    row: 0,
                    col: c,
                })
                .collect();
            state.retire_columns(&faults);
            let plan = sched::bind(&g, &config, &state, &wear, 1, 0).unwrap();
            let schedule = sched::schedule(&plan, &g, &config).unwrap();
            let lat = inference_latency(&schedule, &config);
            assert!(lat >= prev, "masked {masked}: {lat} < {prev}");
            prev = lat;
        }
    }

    fn single_layer_graph_wide() -> NetworkGraph {
        NetworkGraph {
            name: "wide".into(),
            layers: vec![Layer {
                id: 0,
                kind: LayerKind::StaticFc,
                in_dim: 16,
                out_dim: 8,
                tokens_or_windows: 4,
                weight_bits: 8,
                transposed_operand: false,
            }],
            edges: vec![],
        }
    }

    #[test]
    fn default_policy_matches_reference_methodology() {
        let p = SimPolicy::default();
        assert_eq!(p.throughput_drop_limit, 0.40);
        assert_eq!(p.batch_cap, 64);
        assert_eq!(p.endurance.mean, 2.5e9);
        assert_eq!(p.endurance.cov, 0.2);
        assert!(p.fault_handling);
        p.validate().unwrap();
    }

    #[test]
    fn inference_budget_stops_the_run() {
        let g = single_layer_workload();
        let config = tiny_config();
        let mut policy = baseline_policy(false);
        policy.endurance.mean = 1.0e12; // never faults
        policy.max_inferences = 10;
        let profile = FaultToleranceProfile::zero(&g);
        let report = run(&g, &config, &policy, &profile).unwrap();
        assert_eq!(report.stop_reason, StopReason::MaxInferences);
        assert_eq!(report.lifespan_inferences, 10);
        assert_eq!(report.reconfigurations, 0);
    }

    #[test]
    fn exhausted_columns_end_with_infeasible_plan() {
        // Uniform endurance kills every bound cell at once; retirement masks
        // the full crossbar and the re-bind has nowhere left to place the
        // layer.
        let g = single_layer_workload();
        let config = tiny_config();
        let mut policy = baseline_policy(false);
        policy.fault_handling = true;
        let profile = FaultToleranceProfile::zero(&g);
        let report = run(&g, &config, &policy, &profile).unwrap();
        assert_eq!(report.stop_reason, StopReason::PlanInfeasible);
        assert_eq!(report.lifespan_inferences, 100);
        assert_eq!(report.reconfigurations, 1);
        assert_eq!(report.retired_columns_series.last().unwrap().cumulative_retired, 8);
    }

    #[test]
    fn compare_requires_matching_identity_and_reports_ratios() {
        let g = single_layer_workload();
        let config = tiny_config();
        let profile = FaultToleranceProfile::zero(&g);
        let a = run(&g, &config, &baseline_policy(false), &profile).unwrap();
        let b = a.clone();
        let table = compare(&[a.clone(), b]).unwrap();
        assert_eq!(table.rows[1].lifespan_ratio, 1.0);

        let mut policy = baseline_policy(false);
        policy.seed = 99;
        let c = run(&g, &config, &policy, &profile).unwrap();
        assert!(matches!(
            compare(&[a, c]),
            Err(Error::ReportMismatch(_))
        ));
    }

    #[test]
    fn report_json_shape() {
        let g = single_layer_workload();
        let config = tiny_config();
        let profile = FaultToleranceProfile::zero(&g);
        let report = run(&g, &config, &baseline_policy(false), &profile).unwrap();
        let json = serde_json::to_string_pretty(&report).unwrap();
        for field in [
            "lifespan_inferences",
            "lifespan_days",
            "peak_throughput",
            "throughput_series",
            "retired_columns_series",
            "reconfigurations",
            "inferences_per_reconfig",
            "write_events_total",
            "stop_reason",
        ] {
            assert!(json.contains(field), "missing {field}");
        }
        assert_eq!(report.throughput_series[0].inference, 0);
    }
}
