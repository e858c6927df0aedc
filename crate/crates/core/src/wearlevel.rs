//! Crossbar-level wear leveling: bit-group rotation across the cells of one
//! weight, start-row shifting for partially occupied crossbars, and the
//! per bit-group update-probability model that gives rotation something to
//! equalize (LSB groups update far more often than MSB groups).

use serde::{Deserialize, Serialize};

use crate::arch::WearCounters;
use crate::error::{Error, Result};
use crate::rng;
use crate::sched::BindingPlan;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WlPolicy {
    #[serde(rename = "bit_rotation")]
    pub bit_rotation_enabled: bool,
    #[serde(rename = "row_shift")]
    pub row_shift_enabled: bool,
    /// Probability that each bit group actually changes in a write event,
    /// LSB group first. Length must equal weight_bits / cell_bits.
    pub update_prob: Vec<f64>,
}

impl Default for WlPolicy {
    fn default() -> Self {
        Self::skewed(4)
    }
}

impl WlPolicy {
    /// Rotation and row shift on, with the default LSB-heavy update skew.
    pub fn skewed(groups: u32) -> Self {
        Self {
            bit_rotation_enabled: true,
            row_shift_enabled: true,
            update_prob: default_update_prob(groups),
        }
    }

    /// Everything off and every group rewritten on every event.
    pub fn disabled(groups: u32) -> Self {
        Self {
            bit_rotation_enabled: false,
            row_shift_enabled: false,
            update_prob: vec![1.0; groups as usize],
        }
    }

    /// Rotation and row shift on, uniform rewrite of all groups.
    pub fn uniform(groups: u32) -> Self {
        Self {
            bit_rotation_enabled: true,
            row_shift_enabled: true,
            update_prob: vec![1.0; groups as usize],
        }
    }

    pub fn validate(&self, groups: u32) -> Result<()> {
        if self.update_prob.len() != groups as usize {
            return Err(Error::InvalidArgument(format!(
                "update_prob has {} entries but weights span {} cells",
                self.update_prob.len(),
                groups
            )));
        }
        if self.update_prob.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidArgument(
                "update_prob entries must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Physical cell offset hosting bit group `group_idx` of a weight at
    /// write event `event_idx`. The LSB group moves to the highest cell
    /// offset on the next event, i.e. (group - event) mod groups; identity
    /// when rotation is off.
    pub fn bit_group_cell(&self, event_idx: u64, group_idx: u32, groups: u32) -> u32 {
        debug_assert!(group_idx < groups);
        if !self.bit_rotation_enabled {
            return group_idx;
        }
        let shift = (event_idx % groups as u64) as u32;
        (group_idx + groups - shift) % groups
    }

    /// Physical start row of the weight-writing procedure for write event
    /// `event_idx`; logical row r lands on (start + r) mod xbar_rows.
    pub fn start_row(&self, event_idx: u64, rows_used: u32, xbar_rows: u32) -> u32 {
        debug_assert!(rows_used <= xbar_rows);
        if !self.row_shift_enabled {
            return 0;
        }
        (event_idx % xbar_rows as u64) as u32
    }

    /// Whether bit group `group_idx` of weight `weight_idx` actually changes
    /// in write event `event_idx`: a deterministic Bernoulli draw from the
    /// counter-based generator.
    pub fn sample_group_update(
        &self,
        event_idx: u64,
        weight_idx: u64,
        group_idx: u32,
        seed: u64,
    ) -> bool {
        let p = self.update_prob[group_idx as usize];
        if p >= 1.0 {
            return true;
        }
        if p <= 0.0 {
            return false;
        }
        let h = rng::mix(
            rng::mix(
                rng::mix(seed ^ rng::DOMAIN_GROUP_UPDATE, event_idx),
                weight_idx,
            ),
            group_idx as u64,
        );
        rng::unit_f64(h) < p
    }
}

/// Default LSB-to-MSB update skew: [0.9, 0.6, 0.4, 0.2] for four groups,
/// linearly interpolated between 0.9 and 0.2 for other group counts.
pub fn default_update_prob(groups: u32) -> Vec<f64> {
    match groups {
        0 => Vec::new(),
        1 => vec![0.9],
        4 => vec![0.9, 0.6, 0.4, 0.2],
        g => (0..g)
            .map(|i| 0.9 - (0.9 - 0.2) * i as f64 / (g - 1) as f64)
            .collect(),
    }
}

/// Request-stage bookkeeping: every PE row used by the plan gains the number
/// of inferences executed under it.
pub fn update_pe_row_counters(wear: &mut WearCounters, plan: &BindingPlan, inferences: u64) {
    if inferences == 0 {
        return;
    }
    let mut rows: std::collections::BTreeSet<(u32, u32)> = std::collections::BTreeSet::new();
    for binding in &plan.bindings {
        rows.extend(binding.pe_rows.iter().copied());
    }
    for (pe, apu_row) in rows {
        wear.add(pe, apu_row, inferences);
    }
}
