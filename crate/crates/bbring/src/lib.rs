//! Simulation and structure recovery for black box rings that encrypt
//! M2(F_q), q odd.
//!
//! The crate has two sides that are kept strictly apart:
//!
//! * the *oracle* side ([`field`], [`blackbox`]): explicit plaintext
//!   arithmetic and a reference oracle that hides it behind opaque strings;
//! * the *recovery* side ([`bbgroup`], [`recovery`]): algorithms that see
//!   nothing but the oracle interface and rebuild the matrix-ring structure
//!   from it — a labeled four-group, the swap involution, matrix units, a
//!   black box scalar field, and the two-way coordinatization maps.
//!
//! [`stats`], [`bench`], [`report`] and [`fieldmatch`] form the verification
//! harness: statistical validators for the success probabilities the
//! algorithms rely on, query-complexity benchmarking, and report emission.

pub mod bbgroup;
pub mod bench;
pub mod blackbox;
pub mod field;
pub mod fieldmatch;
pub mod recovery;
pub mod report;
pub mod stats;

pub use blackbox::reference::ReferenceOracle;
pub use blackbox::{BbRing, BlackboxError, Cryptoelement, OracleError, QueryCounters, RingOracle};
pub use field::{FieldError, FieldParams, FqElement, Mat2};
pub use recovery::{
    recover, verify_proxy, RecoveryConfig, RecoveryError, RecoveryFailure, StructuralProxy,
};
pub use report::{run_and_report, Mode, RecoveryReport, RunInfo};
pub use stats::{run_stat, StatClaim, StatReport, StatsError};
