//! Accelerator configuration and mutable hardware state: per-cell write
//! counters, lazily sampled endurance limits, per-column masks, and PE-row
//! wear counters.

use std::collections::BTreeSet;

use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Hierarchy dimensions, crossbar geometry, latencies, and bandwidth. The
/// default profile is the reference 64-PE configuration: 6x4 APUs per PE,
/// 128x128 crossbars of 2-bit cells, 16 ADCs per APU, 1.5 KB PE buffers, an
/// 8 MB global buffer, 1 GHz, 96-cycle crossbar compute, 6000-cycle row
/// writes, and 19.2 GB/s main-memory bandwidth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcceleratorConfig {
    pub num_pes: u32,
    /// APU rows per PE (m). A PE row is the minimum binding granularity.
    pub apu_rows_per_pe: u32,
    /// APU columns per PE (n).
    pub apu_cols_per_pe: u32,
    pub xbar_rows: u32,
    pub xbar_cols: u32,
    pub cell_bits: u32,
    pub adc_per_apu: u32,
    pub pe_buffer_bytes: u64,
    pub gbuffer_bytes: u64,
    pub freq_hz: f64,
    pub xbar_compute_cycles: u64,
    pub row_write_cycles: u64,
    pub mm_bandwidth_bytes_per_s: f64,
    /// Duty-cycle fraction used when converting lifespan to days.
    pub utilization: f64,
    /// Bits per activation element, used for buffer footprints.
    pub activation_bits: u32,
    /// Cycle cost per token for SFU elementwise layers.
    pub elementwise_cycles_per_token: u64,
    /// Host-side cycle penalty charged per reconfiguration.
    pub reconfig_penalty_cycles: u64,
    /// Banks in the transposing bank group.
    pub transpose_banks: u32,
}

impl Default for AcceleratorConfig {
    fn default() -> Self {
        Self {
            num_pes: 64,
            apu_rows_per_pe: 6,
            apu_cols_per_pe: 4,
            xbar_rows: 128,
            xbar_cols: 128,
            cell_bits: 2,
            adc_per_apu: 16,
            pe_buffer_bytes: 1536,
            gbuffer_bytes: 8 * 1024 * 1024,
            freq_hz: 1.0e9,
            xbar_compute_cycles: 96,
            row_write_cycles: 6000,
            mm_bandwidth_bytes_per_s: 19.2e9,
            utilization: 0.25,
            activation_bits: 8,
            elementwise_cycles_per_token: 1,
            reconfig_penalty_cycles: 0,
            transpose_banks: 16,
        }
    }
}

impl AcceleratorConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("num_pes", self.num_pes),
            ("apu_rows_per_pe", self.apu_rows_per_pe),
            ("apu_cols_per_pe", self.apu_cols_per_pe),
            ("xbar_rows", self.xbar_rows),
            ("xbar_cols", self.xbar_cols),
            ("adc_per_apu", self.adc_per_apu),
            ("transpose_banks", self.transpose_banks),
        ];
        for (name, v) in counts {
            if v < 1 {
                return Err(Error::InvalidArgument(format!("{name} must be >= 1")));
            }
        }
        if ![1, 2, 4].contains(&self.cell_bits) {
            return Err(Error::InvalidArgument(format!(
                "cell_bits must be 1, 2 or 4 (got {})",
                self.cell_bits
            )));
        }
        if self.freq_hz <= 0.0 || self.mm_bandwidth_bytes_per_s <= 0.0 {
            return Err(Error::InvalidArgument(
                "freq_hz and mm_bandwidth_bytes_per_s must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.utilization) || self.utilization == 0.0 {
            return Err(Error::InvalidArgument(
                "utilization must be in (0, 1]".into(),
            ));
        }
        if self.xbar_compute_cycles < 1 || self.row_write_cycles < 1 {
            return Err(Error::InvalidArgument(
                "cycle latencies must be >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn num_apus(&self) -> u32 {
        self.num_pes * self.apu_rows_per_pe * self.apu_cols_per_pe
    }

    pub fn cells_per_apu(&self) -> u64 {
        self.xbar_rows as u64 * self.xbar_cols as u64
    }
}

/// One crossbar in the PE grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ApuId {
    pub pe: u32,
    pub apu_row: u32,
    pub apu_col: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellAddress {
    pub pe: u32,
    pub apu_row: u32,
    pub apu_col: u32,
    pub row: u32,
    pub col: u32,
}

impl CellAddress {
    pub fn apu(&self) -> ApuId {
        ApuId {
            pe: self.pe,
            apu_row: self.apu_row,
            apu_col: self.apu_col,
        }
    }
}

/// Normal endurance distribution parameters for writes-to-failure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnduranceModel {
    pub mean: f64,
    pub cov: f64,
    pub seed: u64,
}

impl EnduranceModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.mean > 0.0) {
            return Err(Error::InvalidArgument("endurance mean must be > 0".into()));
        }
        if !(self.cov >= 0.0) {
            return Err(Error::InvalidArgument("endurance cov must be >= 0".into()));
        }
        Ok(())
    }
}

/// Writes-to-failure for one cell: Normal(mean, cov * mean) truncated below
/// at one write, deterministic in (address, seed).
pub fn sample_endurance(addr: &CellAddress, model: &EnduranceModel) -> u64 {
    if model.cov == 0.0 {
        return model.mean.round().max(1.0) as u64;
    }
    let mut rng = rng::keyed_rng(
        model.seed.wrapping_add(rng::DOMAIN_ENDURANCE),
        &[addr.pe, addr.apu_row, addr.apu_col, addr.row, addr.col],
    );
    let z: f64 = rand_distr::StandardNormal.sample(&mut rng);
    let value = model.mean * (1.0 + model.cov * z);
    value.round().max(1.0) as u64
}

/// Per-crossbar mutable state.
#[derive(Debug, Clone)]
struct ApuState {
    /// Writes applied to each cell, row-major. Counts keep incrementing past
    /// the limit for already-faulty cells so write conservation holds; the
    /// fault is reported exactly once, at the transition onto the limit.
    write_count: Vec<u64>,
    /// Sampled endurance limit per cell; zero means not yet sampled (sampled
    /// values are always >= 1).
    limit: Vec<u64>,
    /// Retired columns.
    masked: Vec<bool>,
    /// Columns claimed by the live binding plan (any phase).
    bound: Vec<bool>,
}

/// The wear ground truth for the whole accelerator.
#[derive(Debug, Clone)]
pub struct CrossbarState {
    num_pes: u32,
    apu_rows: u32,
    apu_cols: u32,
    xbar_rows: u32,
    xbar_cols: u32,
    model: EnduranceModel,
    apus: Vec<ApuState>,
    total_cell_writes: u64,
}

impl CrossbarState {
    pub fn new(config: &AcceleratorConfig, model: EnduranceModel) -> Self {
        let cells = config.cells_per_apu() as usize;
        let cols = config.xbar_cols as usize;
        let apus = (0..config.num_apus())
            .map(|_| ApuState {
                write_count: vec![0; cells],
                limit: vec![0; cells],
                masked: vec![false; cols],
                bound: vec![false; cols],
            })
            .collect();
        Self {
            num_pes: config.num_pes,
            apu_rows: config.apu_rows_per_pe,
            apu_cols: config.apu_cols_per_pe,
            xbar_rows: config.xbar_rows,
            xbar_cols: config.xbar_cols,
            model,
            apus,
            total_cell_writes: 0,
        }
    }

    pub fn xbar_cols(&self) -> u32 {
        self.xbar_cols
    }

    pub fn xbar_rows(&self) -> u32 {
        self.xbar_rows
    }

    fn apu_index(&self, apu: ApuId) -> usize {
        debug_assert!(apu.pe < self.num_pes && apu.apu_row < self.apu_rows && apu.apu_col < self.apu_cols);
        ((apu.pe * self.apu_rows + apu.apu_row) * self.apu_cols + apu.apu_col) as usize
    }

    pub fn each_apu(&self) -> impl Iterator<Item = ApuId> + '_ {
        let (pes, rows, cols) = (self.num_pes, self.apu_rows, self.apu_cols);
        (0..pes).flat_map(move |pe| {
            (0..rows).flat_map(move |apu_row| {
                (0..cols).map(move |apu_col| ApuId { pe, apu_row, apu_col })
            })
        })
    }

    /// Applies one concurrent row write: every cell at (physical_row, col)
    /// for col in `active_cols` gains one write. Returns cells that reached
    /// their endurance limit with this write, in column order.
    pub fn record_row_write(
        &mut self,
        apu: ApuId,
        physical_row: u32,
        active_cols: &[u32],
    ) -> Result<Vec<CellAddress>> {
        if physical_row >= self.xbar_rows {
            return Err(Error::InvalidArgument(format!(
                "row {} out of range ({} rows)",
                physical_row, self.xbar_rows
            )));
        }
        let idx = self.apu_index(apu);
        let model = self.model;
        let xbar_cols = self.xbar_cols;
        let state = &mut self.apus[idx];
        let mut new_faults = Vec::new();
        for &col in active_cols {
            if col >= xbar_cols {
                return Err(Error::InvalidArgument(format!(
                    "column {col} out of range ({xbar_cols} columns)"
                )));
            }
            if state.masked[col as usize] {
                return Err(Error::MaskedColumnWrite {
                    pe: apu.pe,
                    apu_row: apu.apu_row,
                    apu_col: apu.apu_col,
                    col,
                });
            }
            let cell = (physical_row * xbar_cols + col) as usize;
            let addr = CellAddress {
                pe: apu.pe,
                apu_row: apu.apu_row,
                apu_col: apu.apu_col,
                row: physical_row,
                col,
            };
            if state.limit[cell] == 0 {
                state.limit[cell] = sample_endurance(&addr, &model);
            }
            state.write_count[cell] += 1;
            self.total_cell_writes += 1;
            if state.write_count[cell] == state.limit[cell] {
                new_faults.push(addr);
            }
        }
        Ok(new_faults)
    }

    /// Masks the column of every fault. Idempotent; returns how many columns
    /// were newly masked.
    pub fn retire_columns(&mut self, faults: &[CellAddress]) -> usize {
        let mut newly = 0;
        for fault in faults {
            let idx = self.apu_index(fault.apu());
            let masked = &mut self.apus[idx].masked[fault.col as usize];
            if !*masked {
                *masked = true;
                newly += 1;
            }
        }
        newly
    }

    pub fn is_masked(&self, apu: ApuId, col: u32) -> bool {
        self.apus[self.apu_index(apu)].masked[col as usize]
    }

    pub fn usable_columns(&self, apu: ApuId) -> u32 {
        let state = &self.apus[self.apu_index(apu)];
        state.masked.iter().filter(|&&m| !m).count() as u32
    }

    pub fn masked_columns(&self, apu: ApuId) -> Vec<u32> {
        let state = &self.apus[self.apu_index(apu)];
        (0..self.xbar_cols)
            .filter(|&c| state.masked[c as usize])
            .collect()
    }

    pub fn total_masked_columns(&self) -> u64 {
        self.apus
            .iter()
            .map(|a| a.masked.iter().filter(|&&m| m).count() as u64)
            .sum()
    }

    /// Unmasked column indices of an APU, ascending.
    pub fn unmasked_columns(&self, apu: ApuId) -> Vec<u32> {
        let state = &self.apus[self.apu_index(apu)];
        (0..self.xbar_cols)
            .filter(|&c| !state.masked[c as usize])
            .collect()
    }

    /// Columns neither masked nor claimed by the live plan: candidates for
    /// spare reassignment.
    pub fn spare_columns(&self, apu: ApuId) -> Vec<u32> {
        let state = &self.apus[self.apu_index(apu)];
        (0..self.xbar_cols)
            .filter(|&c| !state.masked[c as usize] && !state.bound[c as usize])
            .collect()
    }

    pub fn set_bound(&mut self, apu: ApuId, cols: &[u32], bound: bool) {
        let idx = self.apu_index(apu);
        for &c in cols {
            self.apus[idx].bound[c as usize] = bound;
        }
    }

    pub fn clear_bound(&mut self) {
        for apu in &mut self.apus {
            apu.bound.fill(false);
        }
    }

    pub fn write_count(&self, addr: &CellAddress) -> u64 {
        let idx = self.apu_index(addr.apu());
        self.apus[idx].write_count[(addr.row * self.xbar_cols + addr.col) as usize]
    }

    /// Sum of all per-cell write counters; must equal the engine's own
    /// count of emitted cell writes.
    pub fn total_cell_writes(&self) -> u64 {
        self.total_cell_writes
    }

    pub fn sum_write_counts(&self) -> u64 {
        self.apus
            .iter()
            .map(|a| a.write_count.iter().sum::<u64>())
            .sum()
    }

    /// Post-mortem snapshot: masked columns and a power-of-two write-count
    /// histogram per crossbar.
    pub fn snapshot(&self) -> StateSnapshot {
        let mut apus = Vec::new();
        for apu in self.each_apu() {
            let idx = self.apu_index(apu);
            let state = &self.apus[idx];
            let mut zero = 0u64;
            let mut pow2 = vec![0u64; 64];
            for &c in &state.write_count {
                if c == 0 {
                    zero += 1;
                } else {
                    pow2[63 - c.leading_zeros() as usize] += 1;
                }
            }
            while pow2.last() == Some(&0) && pow2.len() > 1 {
                pow2.pop();
            }
            apus.push(ApuSnapshot {
                pe: apu.pe,
                apu_row: apu.apu_row,
                apu_col: apu.apu_col,
                masked_cols: self.masked_columns(apu),
                write_count_zero: zero,
                write_count_pow2: pow2,
            });
        }
        StateSnapshot {
            total_cell_writes: self.total_cell_writes,
            apus,
        }
    }
}

/// Histogram bucket k of `write_count_pow2` counts cells with write counts in
/// `[2^k, 2^(k+1))`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApuSnapshot {
    pub pe: u32,
    pub apu_row: u32,
    pub apu_col: u32,
    pub masked_cols: Vec<u32>,
    pub write_count_zero: u64,
    pub write_count_pow2: Vec<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub total_cell_writes: u64,
    pub apus: Vec<ApuSnapshot>,
}

/// Host-side PE-row usage counters. Updated only at the Request stage, by the
/// number of inferences executed under the outgoing configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WearCounters {
    num_pes: u32,
    rows_per_pe: u32,
    pe_row_writes: Vec<u64>,
}

impl WearCounters {
    pub fn new(config: &AcceleratorConfig) -> Self {
        Self {
            num_pes: config.num_pes,
            rows_per_pe: config.apu_rows_per_pe,
            pe_row_writes: vec![0; (config.num_pes * config.apu_rows_per_pe) as usize],
        }
    }

    pub fn add(&mut self, pe: u32, apu_row: u32, amount: u64) {
        self.pe_row_writes[(pe * self.rows_per_pe + apu_row) as usize] += amount;
    }

    pub fn get(&self, pe: u32, apu_row: u32) -> u64 {
        self.pe_row_writes[(pe * self.rows_per_pe + apu_row) as usize]
    }

    /// Wear level of a PE: the maximum over its row counters.
    pub fn pe_wear(&self, pe: u32) -> u64 {
        (0..self.rows_per_pe).map(|r| self.get(pe, r)).max().unwrap_or(0)
    }
}

/// Spare-column registry view used by binding: everything it needs to know
/// about masks without mutating state.
#[derive(Debug, Clone, Copy)]
pub struct MaskView<'a> {
    state: &'a CrossbarState,
}

impl<'a> MaskView<'a> {
    pub fn new(state: &'a CrossbarState) -> Self {
        Self { state }
    }

    pub fn unmasked_columns(&self, apu: ApuId) -> Vec<u32> {
        self.state.unmasked_columns(apu)
    }

    pub fn usable_columns(&self, apu: ApuId) -> u32 {
        self.state.usable_columns(apu)
    }
}

pub fn masked_write_set(seen: &mut BTreeSet<CellAddress>, faults: &[CellAddress]) -> usize {
    let mut new = 0;
    for f in faults {
        if seen.insert(*f) {
            new += 1;
        }
    }
    new
}
