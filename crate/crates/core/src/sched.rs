//! The offline compiler: binds layers to PE rows, APUs, and column ranges
//! (wear-aware and mask-aware), sizes the inference batch against the global
//! buffer, and emits a timed task schedule that overlaps upcoming weight
//! writes with ongoing compute.
//!
//! Binding granularity is the PE row: all n APUs of a row share one input
//! buffer, so a row serves at most one layer at a time. A kernel occupies
//! `weight_bits / cell_bits` adjacent columns and stacks vertically across
//! `ceil(in_dim / xbar_rows)` APUs of one slot; the usable width of a slot is
//! the minimum unmasked-column count across its stacked members. Layers that
//! cannot fit the pool concurrently run in sequential waves over the same
//! columns. Resources are time-shared between phases: a later phase reuses
//! APUs once the earlier tenants' computations released them.

use serde::{Deserialize, Serialize};

use crate::arch::{AcceleratorConfig, ApuId, CrossbarState, WearCounters};
use crate::error::{Error, Result};
use crate::transpose;
use crate::workload::{Layer, LayerId, NetworkGraph};

/// Columns of one APU bound by a layer, grouped per kernel in
/// `cells_per_weight`-sized runs. Explicit indices rather than a contiguous
/// span so interleaved masked columns are avoided exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnRange {
    pub apu: ApuId,
    pub cols: Vec<u32>,
}

impl ColumnRange {
    pub fn start_col(&self) -> u32 {
        self.cols.first().copied().unwrap_or(0)
    }

    pub fn width(&self) -> u32 {
        self.cols.len() as u32
    }
}

/// One APU's share of a layer binding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApuAssignment {
    pub apu: ApuId,
    /// Slot ordinal within the layer (a slot is one vertical APU stack).
    pub slot: u32,
    /// Position of this APU within its slot's vertical stack.
    pub stack_index: u32,
    /// Crossbar rows written in this APU per weight-write pass.
    pub rows: u32,
    /// First kernel ordinal (within a wave) hosted by this slot.
    pub kernel_base: u32,
    /// Kernel capacity of this slot.
    pub kernels: u32,
    /// Bound columns: `kernels * cells_per_weight` unmasked column indices.
    pub cols: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerBinding {
    pub layer: LayerId,
    /// Time-sharing phase; bindings in the same phase hold disjoint APUs.
    pub phase: u32,
    /// APUs stacked vertically per kernel.
    pub vertical_span: u32,
    /// Sequential passes needed when the layer exceeds one allocation.
    pub waves: u32,
    /// Total kernel capacity across slots (kernels processed per wave).
    pub kernels_per_wave: u32,
    /// PE rows claimed by this binding (exclusive within its phase).
    pub pe_rows: Vec<(u32, u32)>,
    pub assignments: Vec<ApuAssignment>,
}

impl LayerBinding {
    pub fn column_ranges(&self) -> Vec<ColumnRange> {
        self.assignments
            .iter()
            .map(|a| ColumnRange {
                apu: a.apu,
                cols: a.cols.clone(),
            })
            .collect()
    }

    pub fn covers(&self, apu: ApuId, col: u32) -> bool {
        self.assignments
            .iter()
            .any(|a| a.apu == apu && a.cols.contains(&col))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BindingPlan {
    pub generation: u32,
    pub batch_size: u32,
    pub bindings: Vec<LayerBinding>,
}

impl BindingPlan {
    pub fn binding(&self, layer: LayerId) -> Option<&LayerBinding> {
        self.bindings.iter().find(|b| b.layer == layer)
    }

    /// Layers whose bindings cover the given cell's column, across all
    /// time-sharing phases.
    pub fn covering_layers(&self, apu: ApuId, col: u32) -> Vec<LayerId> {
        self.bindings
            .iter()
            .filter(|b| b.covers(apu, col))
            .map(|b| b.layer)
            .collect()
    }
}

/// Batch size decision: the largest batch whose live activations fit the
/// global buffer, floored at one with an overflow flag when even a single
/// inference does not fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchDecision {
    pub size: u32,
    pub overflow: bool,
}

/// Peak live activation bytes of a single inference, scanned layer-by-layer
/// over the schedule (topological) order. A layer's output stays live until
/// its last consumer finishes computing.
pub fn per_inference_peak_bytes(g: &NetworkGraph, activation_bits: u32) -> Result<u64> {
    let order = g.topo_order()?;
    let pos: std::collections::BTreeMap<LayerId, usize> =
        order.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let bytes = |l: &Layer| (l.output_elements() * activation_bits as u64).div_ceil(8);
    let mut peak = 0u64;
    for i in 0..order.len() {
        let mut live = 0u64;
        for layer in &g.layers {
            let p = pos[&layer.id];
            if p > i {
                continue;
            }
            let last_use = g
                .consumers(layer.id)
                .iter()
                .map(|c| pos[c])
                .max()
                .unwrap_or(p);
            if p == i || last_use >= i {
                live += bytes(layer);
            }
        }
        peak = peak.max(live);
    }
    Ok(peak)
}

pub fn compute_batch_size(
    g: &NetworkGraph,
    gbuffer_bytes: u64,
    activation_bits: u32,
    cap: u32,
) -> Result<BatchDecision> {
    let cap = cap.max(1);
    let peak = per_inference_peak_bytes(g, activation_bits)?;
    if peak == 0 {
        return Ok(BatchDecision {
            size: cap,
            overflow: false,
        });
    }
    if peak > gbuffer_bytes {
        return Ok(BatchDecision {
            size: 1,
            overflow: true,
        });
    }
    let fit = (gbuffer_bytes / peak) as u32;
    Ok(BatchDecision {
        size: fit.clamp(1, cap),
        overflow: false,
    })
}

struct Slot {
    members: Vec<ApuId>,
    kcap: u32,
}

/// PE rows of the free pool ordered for allocation: PEs ascending by wear
/// level (max row counter; ties by index), rows within a PE ascending by row
/// counter (ties by index).
fn ordered_rows(
    pool: &std::collections::BTreeSet<(u32, u32)>,
    config: &AcceleratorConfig,
    wear: &WearCounters,
) -> Vec<(u32, u32)> {
    let mut pes: Vec<u32> = (0..config.num_pes).collect();
    pes.sort_by_key(|&pe| (wear.pe_wear(pe), pe));
    let mut out = Vec::new();
    for pe in pes {
        let mut rows: Vec<u32> = (0..config.apu_rows_per_pe)
            .filter(|&r| pool.contains(&(pe, r)))
            .collect();
        rows.sort_by_key(|&r| (wear.get(pe, r), r));
        out.extend(rows.into_iter().map(|r| (pe, r)));
    }
    out
}

struct Allocation {
    claimed: Vec<(u32, u32)>,
    slots: Vec<Slot>,
    capacity: u64,
}

fn try_alloc(
    layer: &Layer,
    span: u32,
    group_cells: u32,
    pool: &std::collections::BTreeSet<(u32, u32)>,
    config: &AcceleratorConfig,
    state: &CrossbarState,
    wear: &WearCounters,
) -> Allocation {
    let ordered = ordered_rows(pool, config, wear);
    let mut rows_iter = ordered.into_iter();
    let mut claimed = Vec::new();
    let mut slots = Vec::new();
    let mut capacity = 0u64;
    'outer: loop {
        let mut group = Vec::with_capacity(span as usize);
        for _ in 0..span {
            match rows_iter.next() {
                Some(r) => group.push(r),
                None => break 'outer,
            }
        }
        claimed.extend(group.iter().copied());
        for apu_col in 0..config.apu_cols_per_pe {
            let members: Vec<ApuId> = group
                .iter()
                .map(|&(pe, apu_row)| ApuId {
                    pe,
                    apu_row,
                    apu_col,
                })
                .collect();
            let usable = members
                .iter()
                .map(|&a| state.usable_columns(a))
                .min()
                .unwrap_or(0);
            let kcap = usable / group_cells;
            if kcap == 0 {
                continue;
            }
            capacity += kcap as u64;
            slots.push(Slot { members, kcap });
            if capacity >= layer.out_dim as u64 {
                break 'outer;
            }
        }
    }
    Allocation {
        claimed,
        slots,
        capacity,
    }
}

fn commit_binding(
    layer: &Layer,
    phase: u32,
    span: u32,
    group_cells: u32,
    alloc: &Allocation,
    config: &AcceleratorConfig,
    state: &CrossbarState,
) -> LayerBinding {
    let waves = (layer.out_dim as u64).div_ceil(alloc.capacity.max(1)) as u32;
    let kernels_per_wave = alloc.capacity.min(layer.out_dim as u64) as u32;
    let mut assignments = Vec::new();
    let mut base = 0u32;
    for (slot_idx, slot) in alloc.slots.iter().enumerate() {
        let ks = if waves > 1 {
            slot.kcap
        } else {
            slot.kcap.min(layer.out_dim - base)
        };
        if ks == 0 {
            break;
        }
        let needed_cols = (ks * group_cells) as usize;
        for (stack_index, &apu) in slot.members.iter().enumerate() {
            let remaining = layer.in_dim as u64 - (stack_index as u64 * config.xbar_rows as u64);
            let rows = remaining.min(config.xbar_rows as u64) as u32;
            let cols: Vec<u32> = state
                .unmasked_columns(apu)
                .into_iter()
                .take(needed_cols)
                .collect();
            debug_assert_eq!(cols.len(), needed_cols);
            assignments.push(ApuAssignment {
                apu,
                slot: slot_idx as u32,
                stack_index: stack_index as u32,
                rows,
                kernel_base: base,
                kernels: ks,
                cols,
            });
        }
        base += ks;
    }
    LayerBinding {
        layer: layer.id,
        phase,
        vertical_span: span,
        waves,
        kernels_per_wave,
        pe_rows: alloc.claimed.clone(),
        assignments,
    }
}

/// Binds every weight-bearing layer of the graph, preferring the least-worn
/// PEs and rows, aligning slot widths to the minimum usable column count
/// across stacked APUs, and opening a new time-sharing phase whenever the
/// free pool cannot host the next layer.
pub fn bind(
    g: &NetworkGraph,
    config: &AcceleratorConfig,
    state: &CrossbarState,
    wear: &WearCounters,
    batch_size: u32,
    generation: u32,
) -> Result<BindingPlan> {
    g.ensure_valid()?;
    let all_rows: std::collections::BTreeSet<(u32, u32)> = (0..config.num_pes)
        .flat_map(|pe| (0..config.apu_rows_per_pe).map(move |r| (pe, r)))
        .collect();
    let mut pool = all_rows.clone();
    let mut phase = 0u32;
    let mut bindings = Vec::new();
    for id in g.topo_order()? {
        let layer = g.layer(id).unwrap();
        if !layer.kind.bears_weights() {
            continue;
        }
        if config.cell_bits == 0 || layer.weight_bits % config.cell_bits != 0 {
            return Err(Error::InvalidArgument(format!(
                "cell_bits {} does not divide weight_bits {} (layer {})",
                config.cell_bits, layer.weight_bits, layer.id
            )));
        }
        let group_cells = layer.weight_bits / config.cell_bits;
        let span = (layer.in_dim as u64).div_ceil(config.xbar_rows as u64) as u32;
        let mut alloc = try_alloc(layer, span, group_cells, &pool, config, state, wear);
        if alloc.capacity < layer.out_dim as u64 && pool != all_rows {
            // The residue of the current phase cannot host this layer; give
            // it a fresh pool in the next phase.
            phase += 1;
            pool = all_rows.clone();
            alloc = try_alloc(layer, span, group_cells, &pool, config, state, wear);
        }
        if alloc.capacity == 0 {
            return Err(Error::PlanInfeasible(format!(
                "layer {} (span {span}, {} cells/weight) finds no usable columns",
                layer.id, group_cells
            )));
        }
        let binding = commit_binding(layer, phase, span, group_cells, &alloc, config, state);
        for row in &binding.pe_rows {
            pool.remove(row);
        }
        bindings.push(binding);
    }
    Ok(BindingPlan {
        generation,
        batch_size,
        bindings,
    })
}

/// Outcome of trying to patch a binding around one faulty column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpareOutcome {
    /// The faulty column was replaced by an unused column of the same
    /// crossbar; widths and kernel alignment are unchanged.
    Reassigned { from: u32, to: u32 },
    /// No unbound, unmasked column is left in the crossbar; a full re-bind
    /// is required.
    NoSpare,
    /// The faulty column was not bound by this binding; nothing to do.
    NotBound,
}

pub fn reassign_spare_column(
    binding: &mut LayerBinding,
    apu: ApuId,
    fault_col: u32,
    state: &mut CrossbarState,
) -> SpareOutcome {
    let Some(assignment) = binding
        .assignments
        .iter_mut()
        .find(|a| a.apu == apu && a.cols.contains(&fault_col))
    else {
        return SpareOutcome::NotBound;
    };
    let Some(&spare) = state.spare_columns(apu).first() else {
        return SpareOutcome::NoSpare;
    };
    let pos = assignment.cols.iter().position(|&c| c == fault_col).unwrap();
    assignment.cols[pos] = spare;
    state.set_bound(apu, &[fault_col], false);
    state.set_bound(apu, &[spare], true);
    SpareOutcome::Reassigned {
        from: fault_col,
        to: spare,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Write,
    Compute,
    Transfer,
}

/// One schedule entry. Writes carry their row count and aggregate bytes per
/// row for the bandwidth model; computes carry the number of input vectors;
/// transfers route a transposed operand through the bank group (zero cycles,
/// with the collision fallback count reported for inspection).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: u32,
    pub kind: TaskKind,
    pub layer: LayerId,
    pub wave: u32,
    pub inference: u32,
    pub depends_on: Vec<u32>,
    #[serde(default)]
    pub write_rows: u32,
    #[serde(default)]
    pub write_bytes_per_row: u64,
    #[serde(default)]
    pub compute_vectors: u64,
    #[serde(default)]
    pub elementwise: bool,
    #[serde(default)]
    pub transfer_micro_tx: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub batch_size: u32,
    pub tasks: Vec<Task>,
}

impl Schedule {
    pub fn tasks_of(&self, kind: TaskKind) -> impl Iterator<Item = &Task> {
        self.tasks.iter().filter(move |t| t.kind == kind)
    }
}

struct ScheduleBuilder {
    tasks: Vec<Task>,
}

impl ScheduleBuilder {
    fn push(&mut self, mut task: Task) -> u32 {
        let id = self.tasks.len() as u32;
        task.id = id;
        task.depends_on.sort_unstable();
        task.depends_on.dedup();
        self.tasks.push(task);
        id
    }
}

/// Collision fallback count for streaming a rows x cols matrix through the
/// transposing bank group in row-major transactions of `banks` elements.
fn bank_micro_transactions(rows: u64, cols: u64, banks: u64) -> u64 {
    let nm = rows * cols;
    let mut micro = 0u64;
    let mut claimed = vec![false; banks as usize];
    for chunk_start in (0..nm).step_by(banks as usize) {
        claimed.fill(false);
        for alpha in chunk_start..(chunk_start + banks).min(nm) {
            let Ok((id, _)) = transpose::bank_slot(alpha, rows, cols, banks) else {
                return 0;
            };
            if claimed[id as usize] {
                micro += 1;
            } else {
                claimed[id as usize] = true;
            }
        }
    }
    micro
}

/// Emits the timed task list for one batch under the given plan: layer-by-
/// layer compute order respecting the data dependencies, upcoming writes
/// scheduled as soon as the resources they reuse are released, all batched
/// inferences of a static layer completing before its resources free, and one
/// operand write per inference for dynamic matmuls.
pub fn schedule(
    plan: &BindingPlan,
    g: &NetworkGraph,
    config: &AcceleratorConfig,
) -> Result<Schedule> {
    let batch = plan.batch_size.max(1);
    let mut b = ScheduleBuilder { tasks: Vec::new() };
    // Final (last-wave) compute task per inference for each finished layer.
    let mut final_computes: std::collections::BTreeMap<LayerId, Vec<u32>> =
        std::collections::BTreeMap::new();
    // Most recent tenant of each PE row, for release dependencies. Rows are
    // the binding granularity: all APUs of a row share one input buffer, so
    // a new tenant waits for the whole row even where it reuses an APU the
    // previous tenant left idle.
    let mut tenant: std::collections::BTreeMap<(u32, u32), LayerId> =
        std::collections::BTreeMap::new();

    let write_payload = |binding: &LayerBinding| -> (u32, u64) {
        let rows = binding
            .assignments
            .iter()
            .map(|a| a.rows)
            .max()
            .unwrap_or(0);
        let bytes: u64 = binding
            .assignments
            .iter()
            .map(|a| (a.cols.len() as u64 * config.cell_bits as u64).div_ceil(8))
            .sum();
        (rows, bytes)
    };

    for id in g.topo_order()? {
        let layer = g.layer(id).unwrap();
        if !layer.kind.bears_weights() {
            // Elementwise: one SFU pass per inference, no crossbar resources.
            let mut finals = Vec::with_capacity(batch as usize);
            for inf in 0..batch {
                let mut deps: Vec<u32> = g
                    .producers(id)
                    .iter()
                    .filter_map(|p| final_computes.get(p).map(|v| v[inf as usize]))
                    .collect();
                if inf > 0 {
                    deps.push(finals[inf as usize - 1]);
                }
                let tid = b.push(Task {
                    id: 0,
                    kind: TaskKind::Compute,
                    layer: id,
                    wave: 0,
                    inference: inf,
                    depends_on: deps,
                    write_rows: 0,
                    write_bytes_per_row: 0,
                    compute_vectors: layer.tokens_or_windows as u64,
                    elementwise: true,
                    transfer_micro_tx: 0,
                });
                finals.push(tid);
            }
            final_computes.insert(id, finals);
            continue;
        }

        let binding = plan.binding(id).ok_or_else(|| {
            Error::PlanInfeasible(format!("layer {id} has no binding in the plan"))
        })?;
        let (write_rows, write_bytes) = write_payload(binding);
        // Computes of the layers this binding evicts must finish first.
        let release_deps: Vec<u32> = {
            let mut tenants: Vec<LayerId> = binding
                .pe_rows
                .iter()
                .filter_map(|row| tenant.get(row).copied())
                .collect();
            tenants.sort_unstable();
            tenants.dedup();
            tenants
                .iter()
                .flat_map(|t| final_computes.get(t).cloned().unwrap_or_default())
                .collect()
        };

        let mut finals = Vec::with_capacity(batch as usize);
        if layer.kind.is_dynamic() {
            let stationary = g.stationary_producer(id).ok_or_else(|| {
                Error::InvalidArgument(format!("dynamic matmul {id} has no stationary producer"))
            })?;
            let streaming: Vec<LayerId> = g
                .producers(id)
                .into_iter()
                .filter(|&p| p != stationary)
                .collect();
            let micro_tx = if layer.transposed_operand {
                let prod = g.layer(stationary).unwrap();
                bank_micro_transactions(
                    prod.tokens_or_windows as u64,
                    prod.out_dim as u64,
                    config.transpose_banks as u64,
                )
            } else {
                0
            };
            for inf in 0..batch {
                let operand_ready = final_computes
                    .get(&stationary)
                    .map(|v| v[inf as usize])
                    .into_iter()
                    .collect::<Vec<_>>();
                let operand_dep = if layer.transposed_operand {
                    // Route through the transposing bank group.
                    vec![b.push(Task {
                        id: 0,
                        kind: TaskKind::Transfer,
                        layer: id,
                        wave: 0,
                        inference: inf,
                        depends_on: operand_ready.clone(),
                        write_rows: 0,
                        write_bytes_per_row: 0,
                        compute_vectors: 0,
                        elementwise: false,
                        transfer_micro_tx: micro_tx,
                    })]
                } else {
                    operand_ready
                };
                let mut last_compute: Option<u32> = None;
                for wave in 0..binding.waves {
                    let mut wdeps = operand_dep.clone();
                    if wave == 0 {
                        if inf == 0 {
                            wdeps.extend(release_deps.iter().copied());
                        } else {
                            // The previous inference's computes release the
                            // crossbars for the next operand write.
                            wdeps.push(finals[inf as usize - 1]);
                        }
                    } else {
                        wdeps.push(last_compute.unwrap());
                    }
                    let wid = b.push(Task {
                        id: 0,
                        kind: TaskKind::Write,
                        layer: id,
                        wave,
                        inference: inf,
                        depends_on: wdeps,
                        write_rows,
                        write_bytes_per_row: write_bytes,
                        compute_vectors: 0,
                        elementwise: false,
                        transfer_micro_tx: 0,
                    });
                    let mut cdeps = vec![wid];
                    cdeps.extend(streaming.iter().filter_map(|p| {
                        final_computes.get(p).map(|v| v[inf as usize])
                    }));
                    let cid = b.push(Task {
                        id: 0,
                        kind: TaskKind::Compute,
                        layer: id,
                        wave,
                        inference: inf,
                        depends_on: cdeps,
                        write_rows: 0,
                        write_bytes_per_row: 0,
                        compute_vectors: layer.tokens_or_windows as u64,
                        elementwise: false,
                        transfer_micro_tx: 0,
                    });
                    last_compute = Some(cid);
                }
                finals.push(last_compute.unwrap());
            }
        } else {
            // Static weights: one write per wave per residency, reused by all
            // batched inferences.
            let mut prev_wave_computes: Vec<u32> = Vec::new();
            let mut last_computes: Vec<u32> = Vec::new();
            for wave in 0..binding.waves {
                let wdeps = if wave == 0 {
                    release_deps.clone()
                } else {
                    prev_wave_computes.clone()
                };
                let wid = b.push(Task {
                    id: 0,
                    kind: TaskKind::Write,
                    layer: id,
                    wave,
                    inference: 0,
                    depends_on: wdeps,
                    write_rows,
                    write_bytes_per_row: write_bytes,
                    compute_vectors: 0,
                    elementwise: false,
                    transfer_micro_tx: 0,
                });
                let mut wave_computes = Vec::with_capacity(batch as usize);
                for inf in 0..batch {
                    let mut cdeps = vec![wid];
                    cdeps.extend(
                        g.producers(id)
                            .iter()
                            .filter_map(|p| final_computes.get(p).map(|v| v[inf as usize])),
                    );
                    if inf > 0 {
                        cdeps.push(wave_computes[inf as usize - 1]);
                    }
                    let cid = b.push(Task {
                        id: 0,
                        kind: TaskKind::Compute,
                        layer: id,
                        wave,
                        inference: inf,
                        depends_on: cdeps,
                        write_rows: 0,
                        write_bytes_per_row: 0,
                        compute_vectors: layer.tokens_or_windows as u64,
                        elementwise: false,
                        transfer_micro_tx: 0,
                    });
                    wave_computes.push(cid);
                }
                prev_wave_computes = wave_computes.clone();
                last_computes = wave_computes;
            }
            finals = last_computes;
        }
        final_computes.insert(id, finals);
        for &row in &binding.pe_rows {
            tenant.insert(row, id);
        }
    }
    Ok(Schedule {
        batch_size: batch,
        tasks: b.tasks,
    })
}

/// Post-hoc check: no bound column is masked.
pub fn verify_plan_against_masks(plan: &BindingPlan, state: &CrossbarState) -> Vec<String> {
    let mut violations = Vec::new();
    for binding in &plan.bindings {
        for a in &binding.assignments {
            for &col in &a.cols {
                if state.is_masked(a.apu, col) {
                    violations.push(format!(
                        "layer {} binds masked column {} of pe {} apu ({}, {})",
                        binding.layer, col, a.apu.pe, a.apu.apu_row, a.apu.apu_col
                    ));
                }
            }
        }
    }
    violations
}

/// Post-hoc check: within each phase, every APU column belongs to at most one
/// live binding.
pub fn verify_phase_exclusivity(plan: &BindingPlan) -> Vec<String> {
    let mut violations = Vec::new();
    let mut seen: std::collections::BTreeMap<(u32, ApuId, u32), LayerId> =
        std::collections::BTreeMap::new();
    for binding in &plan.bindings {
        for a in &binding.assignments {
            for &col in &a.cols {
                if let Some(other) = seen.insert((binding.phase, a.apu, col), binding.layer) {
                    violations.push(format!(
                        "phase {}: column {} of pe {} apu ({}, {}) bound by layers {} and {}",
                        binding.phase,
                        col,
                        a.apu.pe,
                        a.apu.apu_row,
                        a.apu.apu_col,
                        other,
                        binding.layer
                    ));
                }
            }
        }
    }
    violations
}
