//! Process matrices for quantum superpositions of causal orders.
//!
//! The crate covers labeled dense linear algebra, CJ states and the link
//! product, validity and causal-order checks, generalized quantum switches,
//! free operations (local operations with ancillary entanglement and
//! probabilistic lab swaps), single-copy conversion, and distillation.
//!
//! ```
//! use causalforge::{is_valid_process, switch::make_quantum_switch, ProcessMatrix};
//!
//! let w = ProcessMatrix::from_pure(&make_quantum_switch(2).unwrap()).unwrap();
//! let report = is_valid_process(&w, 1e-9);
//! assert!(report.pass);
//! assert!((report.trace_value - 8.0).abs() < 1e-9);
//! ```

pub mod conversion;
pub mod distillation;
pub mod error;
pub mod free_ops;
pub mod linalg;
pub mod process;
pub mod random;
pub mod switch;

pub use conversion::{ConversionPlan, FilterPlan, LabUnitaries};
pub use distillation::{CoveringDesign, MulticopyReport, SwitchBasisState};
pub use error::{Error, Result};
pub use free_ops::{FreeClass, FreeOperation, FreeSequence, FreeTerm, LoaeSpec, LoaeTerm};
pub use linalg::{FactorLabel, LabeledOperator, PureProcess, Role, C64};
pub use process::{
    cj_state, is_compatible_order, is_entangled_control_target, is_valid_process, link_product, pure_link,
    CausalOrder, LinearMap, ProcessMatrix, ValidityReport, DEFAULT_TOL,
};
pub use switch::{BinaryDistribution, GeneralizedSwitchSpec, SwitchUnitaries};
