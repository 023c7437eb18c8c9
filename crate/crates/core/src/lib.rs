//! Best-quote event analytics: event classification, correlation and
//! response estimators, propagator and gap-kernel impact models, spread
//! dynamics, and synthetic stream generators used as estimator oracles.

pub mod error;
pub mod events;
pub mod gapmodel;
pub mod ingest;
pub mod propagator;
pub mod sim;
pub mod spread;
pub mod selftest;
pub mod stats;

pub use error::{Error, Result};
pub use events::{derive_side, EventStream, EventType, MarketEvent, N_TYPES};
pub use stats::{CorrelationSet, ResponseSet, StatsConfig};
pub use gapmodel::{GapKernelSet, ImpactDecomposition, KernelTable, RealizedGaps};
pub use propagator::{PropagatorSet, SignedFlowConfig};
pub use sim::{GeneratorConfig, GapProcess, SignProcess, TypeProcess};
pub use ingest::{BboRecord, IngestConfig, IngestReport, TradeRecord};
pub use spread::{SpreadAcf, SpreadModel};
