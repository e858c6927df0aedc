//! In-situ matrix transposition over flattened indices, plus an emulation of
//! the transposing bank group that stores a row-major stream so that reading
//! the banks entry-by-entry yields the transposed matrix.
//!
//! For an N x M row-major matrix, the element at flat index `alpha` lands at
//! flat index `N*alpha mod (N*M - 1)` in the transposed matrix (the last
//! element is a fixed point). The bank group splits that target index into a
//! bank id (`mod #banks`) and an entry within the bank (`div #banks`); a
//! swapping register reorders each incoming transaction so every element
//! reaches its bank in one shot when the bank ids are pairwise distinct.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Flat position of element `alpha` of an N x M row-major matrix inside the
/// flattened transpose.
pub fn transposed_index(alpha: u64, n: u64, m: u64) -> Result<u64> {
    let nm = n
        .checked_mul(m)
        .ok_or(Error::IndexOverflow { n, m })?;
    if nm == 0 {
        return Err(Error::InvalidArgument(
            "matrix dimensions must be at least 1x1".into(),
        ));
    }
    if alpha >= nm {
        return Err(Error::IndexOutOfRange { alpha, n, m });
    }
    if alpha == nm - 1 {
        return Ok(nm - 1);
    }
    let prod = n
        .checked_mul(alpha)
        .ok_or(Error::IndexOverflow { n, m })?;
    Ok(prod % (nm - 1))
}

/// Orbit decomposition of `transposed_index` over `0..N*M`. Cycles are listed
/// by ascending smallest member and each cycle starts at its smallest member,
/// so the output is stable. Singleton cycles are fixed points.
pub fn permutation_cycles(n: u64, m: u64) -> Result<Vec<Vec<u64>>> {
    let nm = n
        .checked_mul(m)
        .ok_or(Error::IndexOverflow { n, m })?;
    let mut visited = vec![false; nm as usize];
    let mut cycles = Vec::new();
    for start in 0..nm {
        if visited[start as usize] {
            continue;
        }
        let mut cycle = Vec::new();
        let mut cur = start;
        loop {
            visited[cur as usize] = true;
            cycle.push(cur);
            cur = transposed_index(cur, n, m)?;
            if cur == start {
                break;
            }
        }
        cycles.push(cycle);
    }
    Ok(cycles)
}

/// Bank id and entry index for element `alpha` of an N x M matrix stored
/// across `num_banks` banks in transposed order.
pub fn bank_slot(alpha: u64, n: u64, m: u64, num_banks: u64) -> Result<(u64, u64)> {
    if num_banks == 0 {
        return Err(Error::InvalidArgument("num_banks must be >= 1".into()));
    }
    let p = transposed_index(alpha, n, m)?;
    Ok((p % num_banks, p / num_banks))
}

/// A row-major matrix stored as one flat element list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlatMatrix {
    pub rows: u64,
    pub cols: u64,
    pub data: Vec<u32>,
}

impl FlatMatrix {
    pub fn new(rows: u64, cols: u64, data: Vec<u32>) -> Result<Self> {
        let expect = rows
            .checked_mul(cols)
            .ok_or(Error::IndexOverflow { n: rows, m: cols })?;
        if data.len() as u64 != expect {
            return Err(Error::InvalidArgument(format!(
                "flat matrix data length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Plain nested-loop transpose. Kept independent of the index mapping so
    /// the bank path can be checked against it.
    pub fn transposed(&self) -> FlatMatrix {
        let mut out = vec![0u32; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[(c * self.rows + r) as usize] = self.data[(r * self.cols + c) as usize];
            }
        }
        FlatMatrix {
            rows: self.cols,
            cols: self.rows,
            data: out,
        }
    }
}

/// Swapping-register record for one NoC transaction: where each arriving
/// element was steered, and how many follow-up micro-transactions the bank
/// conflicts forced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransactionAudit {
    /// (flat index, bank id, entry) per element, in arrival order.
    pub placements: Vec<(u64, u64, u64)>,
    /// Elements whose bank id differs from their arrival position.
    pub swapped_elements: u64,
    /// Extra serialized rounds beyond the single-shot write.
    pub micro_transactions: u64,
}

/// Aggregate statistics over all transactions written into a layout.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutStats {
    pub transactions: u64,
    pub swapped_elements: u64,
    pub micro_transactions: u64,
}

/// The transposing bank group: `num_banks` banks of single-element entries.
#[derive(Debug, Clone)]
pub struct BankLayout {
    rows: u64,
    cols: u64,
    num_banks: u64,
    banks: Vec<Vec<Option<u32>>>,
    stats: LayoutStats,
    audit: Vec<TransactionAudit>,
}

impl BankLayout {
    pub fn new(rows: u64, cols: u64, num_banks: u64) -> Result<Self> {
        if num_banks == 0 {
            return Err(Error::InvalidArgument("num_banks must be >= 1".into()));
        }
        let nm = rows
            .checked_mul(cols)
            .ok_or(Error::IndexOverflow { n: rows, m: cols })?;
        if nm == 0 {
            return Err(Error::InvalidArgument(
                "matrix dimensions must be at least 1x1".into(),
            ));
        }
        let entries = nm.div_ceil(num_banks) as usize;
        Ok(Self {
            rows,
            cols,
            num_banks,
            banks: vec![vec![None; entries]; num_banks as usize],
            stats: LayoutStats::default(),
            audit: Vec::new(),
        })
    }

    pub fn num_banks(&self) -> u64 {
        self.num_banks
    }

    pub fn stats(&self) -> LayoutStats {
        self.stats
    }

    pub fn audit(&self) -> &[TransactionAudit] {
        &self.audit
    }

    /// Stores one NoC transaction of `(flat index, value)` elements. Elements
    /// whose bank ids collide within the transaction are deferred to follow-up
    /// micro-transactions, which are counted in the stats.
    pub fn write_transaction(&mut self, elements: &[(u64, u32)]) -> Result<()> {
        if elements.len() as u64 > self.num_banks {
            return Err(Error::InvalidArgument(format!(
                "transaction of {} elements exceeds {} banks",
                elements.len(),
                self.num_banks
            )));
        }
        let mut placements = Vec::with_capacity(elements.len());
        let mut swapped = 0u64;
        for (pos, &(alpha, value)) in elements.iter().enumerate() {
            let (id, entry) = bank_slot(alpha, self.rows, self.cols, self.num_banks)?;
            if id != pos as u64 {
                swapped += 1;
            }
            placements.push((alpha, id, entry));
            self.banks[id as usize][entry as usize] = Some(value);
        }
        // Bank conflicts serialize: each extra element aimed at an already
        // claimed bank costs one follow-up micro-transaction.
        let mut claimed = vec![false; self.num_banks as usize];
        let mut micro = 0u64;
        for &(_, id, _) in &placements {
            if claimed[id as usize] {
                micro += 1;
            } else {
                claimed[id as usize] = true;
            }
        }
        self.stats.transactions += 1;
        self.stats.swapped_elements += swapped;
        self.stats.micro_transactions += micro;
        self.audit.push(TransactionAudit {
            placements,
            swapped_elements: swapped,
            micro_transactions: micro,
        });
        Ok(())
    }

    /// Streams a whole matrix row-major in transactions of `num_banks`
    /// elements, the way a producing FC layer emits it.
    pub fn write_matrix(&mut self, mat: &FlatMatrix) -> Result<()> {
        if mat.rows != self.rows || mat.cols != self.cols {
            return Err(Error::InvalidArgument(format!(
                "matrix {}x{} does not match layout {}x{}",
                mat.rows, mat.cols, self.rows, self.cols
            )));
        }
        let chunk = self.num_banks as usize;
        let indexed: Vec<(u64, u32)> = mat
            .data
            .iter()
            .enumerate()
            .map(|(i, &v)| (i as u64, v))
            .collect();
        for tx in indexed.chunks(chunk) {
            self.write_transaction(tx)?;
        }
        Ok(())
    }

    /// Reconstructs the transposed matrix purely from bank order, reading the
    /// banks entry-by-entry.
    pub fn read_transposed(&self) -> Result<FlatMatrix> {
        let nm = self.rows * self.cols;
        let mut data = Vec::with_capacity(nm as usize);
        let mut missing = 0usize;
        let mut first_missing = None;
        for p in 0..nm {
            let bank = (p % self.num_banks) as usize;
            let entry = (p / self.num_banks) as usize;
            match self.banks[bank][entry] {
                Some(v) => data.push(v),
                None => {
                    missing += 1;
                    first_missing.get_or_insert(p);
                }
            }
        }
        if missing > 0 {
            return Err(Error::IncompleteLayout {
                missing,
                first: first_missing.unwrap(),
            });
        }
        FlatMatrix::new(self.cols, self.rows, data)
    }
}

/// Round-trip outcome for one (N, M, banks) configuration, used by the CLI.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundTripCheck {
    pub rows: u64,
    pub cols: u64,
    pub num_banks: u64,
    pub cycles: Vec<Vec<u64>>,
    pub stats: LayoutStats,
    pub round_trip_ok: bool,
}

/// Writes a deterministic test matrix through the bank group and verifies the
/// entry-by-entry read against a direct transpose.
pub fn round_trip_check(rows: u64, cols: u64, num_banks: u64) -> Result<RoundTripCheck> {
    let nm = rows
        .checked_mul(cols)
        .ok_or(Error::IndexOverflow { n: rows, m: cols })?;
    let data: Vec<u32> = (0..nm).map(|i| i as u32).collect();
    let mat = FlatMatrix::new(rows, cols, data)?;
    let mut layout = BankLayout::new(rows, cols, num_banks)?;
    layout.write_matrix(&mat)?;
    let read = layout.read_transposed()?;
    Ok(RoundTripCheck {
        rows,
        cols,
        num_banks,
        cycles: permutation_cycles(rows, cols)?,
        stats: layout.stats(),
        round_trip_ok: read == mat.transposed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_index_mappings() {
        // 2x4 example: position 1 maps to 2, 3 maps to 6, the last element is
        // a fixed point, and 0 always stays put.
        assert_eq!(transposed_index(1, 2, 4).unwrap(), 2);
        assert_eq!(transposed_index(3, 2, 4).unwrap(), 6);
        assert_eq!(transposed_index(7, 2, 4).unwrap(), 7);
        assert_eq!(transposed_index(0, 2, 4).unwrap(), 0);
        assert_eq!(transposed_index(0, 5, 9).unwrap(), 0);
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(matches!(
            transposed_index(8, 2, 4),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            transposed_index(0, u64::MAX, u64::MAX),
            Err(Error::IndexOverflow { .. })
        ));
    }

    #[test]
    fn one_by_one_matrix() {
        assert_eq!(transposed_index(0, 1, 1).unwrap(), 0);
        let c = permutation_cycles(1, 1).unwrap();
        assert_eq!(c, vec![vec![0]]);
    }

    #[test]
    fn cycles_2x4_match_known_partition() {
        let cycles = permutation_cycles(2, 4).unwrap();
        assert_eq!(
            cycles,
            vec![vec![0], vec![1, 2, 4], vec![3, 6, 5], vec![7]]
        );
    }

    #[test]
    fn row_vector_is_all_fixed_points() {
        let cycles = permutation_cycles(1, 7).unwrap();
        assert_eq!(cycles.len(), 7);
        assert!(cycles.iter().all(|c| c.len() == 1));
    }

    #[test]
    fn cycles_3x3_apply_to_oracle() {
        // Applying the permutation to the flat array must equal the direct
        // transpose.
        let n = 3u64;
        let m = 3u64;
        let mat = FlatMatrix::new(n, m, (0..9).collect()).unwrap();
        let oracle = mat.transposed();
        let mut out = vec![u32::MAX; 9];
        for cycle in permutation_cycles(n, m).unwrap() {
            for &idx in &cycle {
                let dst = transposed_index(idx, n, m).unwrap();
                out[dst as usize] = mat.data[idx as usize];
            }
        }
        assert_eq!(out, oracle.data);
    }

    #[test]
    fn bank_slot_direct_mod_div() {
        // With N=1 the mapping is the identity, so alpha 35 hits P=35.
        assert_eq!(bank_slot(35, 1, 64, 16).unwrap(), (3, 2));
        assert_eq!(bank_slot(0, 1, 64, 16).unwrap(), (0, 0));
    }

    #[test]
    fn paper_example_2x4_reads_back_transposed() {
        let mat = FlatMatrix::new(2, 4, vec![101, 102, 103, 104, 201, 202, 203, 204]).unwrap();
        let mut layout = BankLayout::new(2, 4, 2).unwrap();
        layout.write_matrix(&mat).unwrap();
        let read = layout.read_transposed().unwrap();
        assert_eq!(read.data, vec![101, 201, 102, 202, 103, 203, 104, 204]);
        assert_eq!(read.rows, 4);
        assert_eq!(read.cols, 2);
    }

    #[test]
    fn single_element_round_trip() {
        let mat = FlatMatrix::new(1, 1, vec![9]).unwrap();
        let mut layout = BankLayout::new(1, 1, 1).unwrap();
        layout.write_matrix(&mat).unwrap();
        assert_eq!(layout.read_transposed().unwrap(), mat);
    }

    #[test]
    fn identity_transaction_records_zero_swaps() {
        // N=1 keeps flat order, so a transaction of 4 elements into 4 banks
        // already matches bank order.
        let mut layout = BankLayout::new(1, 4, 4).unwrap();
        layout
            .write_transaction(&[(0, 10), (1, 11), (2, 12), (3, 13)])
            .unwrap();
        assert_eq!(layout.stats().swapped_elements, 0);
        assert_eq!(layout.stats().micro_transactions, 0);
    }

    #[test]
    fn four_by_two_with_two_banks_serializes_conflicts() {
        // Row transactions of a 4x2 matrix across 2 banks collide (both
        // elements of a row target the same bank), exercising the multi-cycle
        // fallback. The round trip must still be exact.
        let check = round_trip_check(4, 2, 2).unwrap();
        assert!(check.round_trip_ok);
        assert!(check.stats.micro_transactions > 0);
    }

    #[test]
    fn random_8x16_full_write_matches_oracle() {
        let check = round_trip_check(8, 16, 16).unwrap();
        assert!(check.round_trip_ok);
    }

    #[test]
    fn incomplete_layout_lists_missing() {
        let layout = BankLayout::new(2, 4, 2).unwrap();
        match layout.read_transposed() {
            Err(Error::IncompleteLayout { missing, first }) => {
                assert_eq!(missing, 8);
                assert_eq!(first, 0);
            }
            other => panic!("expected incomplete layout, got {other:?}"),
        }
    }

    #[test]
    fn oversized_transaction_rejected() {
        let mut layout = BankLayout::new(2, 4, 2).unwrap();
        let tx: Vec<(u64, u32)> = (0..3).map(|i| (i, i as u32)).collect();
        assert!(layout.write_transaction(&tx).is_err());
    }

    proptest! {
        #[test]
        fn index_map_is_a_bijection(n in 1u64..=64, m in 1u64..=64) {
            let nm = n * m;
            let mut seen = vec![false; nm as usize];
            for alpha in 0..nm {
                let p = transposed_index(alpha, n, m).unwrap();
                prop_assert!(p < nm);
                prop_assert!(!seen[p as usize]);
                seen[p as usize] = true;
            }
        }

        #[test]
        fn transpose_is_an_involution_at_index_level(n in 1u64..=64, m in 1u64..=64) {
            for alpha in 0..n * m {
                let p = transposed_index(alpha, n, m).unwrap();
                let back = transposed_index(p, m, n).unwrap();
                prop_assert_eq!(back, alpha);
            }
        }

        #[test]
        fn cycles_partition_and_slots_bounded(n in 1u64..=32, m in 1u64..=32, banks in 1u64..=16) {
            let nm = n * m;
            let cycles = permutation_cycles(n, m).unwrap();
            let mut seen = vec![false; nm as usize];
            for cycle in &cycles {
                for &idx in cycle {
                    prop_assert!(!seen[idx as usize]);
                    seen[idx as usize] = true;
                }
            }
            prop_assert!(seen.iter().all(|&s| s));
            for alpha in 0..nm {
                let (id, entry) = bank_slot(alpha, n, m, banks).unwrap();
                prop_assert!(id < banks);
                prop_assert!(entry < nm.div_ceil(banks));
            }
        }

        #[test]
        fn random_round_trips_match_oracle(n in 1u64..=24, m in 1u64..=24, banks in 1u64..=16) {
            let check = round_trip_check(n, m, banks).unwrap();
            prop_assert!(check.round_trip_ok);
        }
    }
}
