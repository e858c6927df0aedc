//! Event-driven lifespan simulator and offline scheduler for ReRAM crossbar
//! DNN inference accelerators.
//!
//! The crate models an accelerator built from processing elements (PEs) of
//! analog processing units (APUs), each an m-row by n-column grid of ReRAM
//! crossbars. Weights are streamed into crossbars layer by layer, every write
//! wears the touched cells, and worn-out cells become stuck-at faults whose
//! columns can be retired. The simulator measures how many inferences the
//! machine sustains before throughput falls below a configurable floor, and
//! how often the offline scheduler must produce a new binding.
//!
//! Module map:
//! - [`workload`]: DNN layer graphs, including transformer encoder builders.
//! - [`arch`]: accelerator configuration, per-cell wear state, endurance
//!   sampling, PE-row wear counters.
//! - [`transpose`]: flat-index transposition math and the transposing bank
//!   group emulator.
//! - [`sched`]: binding (layer -> PE rows/APUs/columns), batch sizing, and
//!   timed schedules that overlap writes with compute.
//! - [`wearlevel`]: bit-group rotation, start-row shifting, and the per
//!   bit-group update-probability model.
//! - [`fault`]: fault ledger, fault-to-layer mapping, tolerance-threshold
//!   estimation, and the keep-vs-retire decision.
//! - [`engine`]: the discrete-event executor, lifespan reports, and report
//!   comparison.

pub mod arch;
pub mod engine;
pub mod error;
pub mod fault;
pub mod rng;
pub mod sched;
pub mod transpose;
pub mod wearlevel;
pub mod workload;

pub use error::{Error, Result};
