pub mod error;
pub mod groups;
pub mod liouville;
pub mod metrics;
pub mod models;
pub mod nogo;
pub mod operator;
pub mod sparse;
pub mod spin;
pub mod steady;
pub mod superop;

pub use error::{Error, Result};
pub use liouville::{build_embedding, AuxKind, AuxSpec, EmbeddingModel};
pub use num_complex::Complex64 as C64;
pub use operator::Operator;
pub use spin::{collective_spin_ops, SpinOps, SpinSystem};
pub use superop::{lindblad_superop, Storage, SuperOperator};
