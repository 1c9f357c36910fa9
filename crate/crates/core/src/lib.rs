//! Non-interactive training of local-loss MLPs over CKKS-style SIMD
//! ciphertexts.
//!
//! [`api`] defines the backend contract and the depth ledger, [`sim`] is
//! an exact plaintext backend, [`packing`] and [`linalg`] implement the
//! slot-grid layouts and rotation-based matrix products, and [`nn`]
//! builds blocks, updates and the training loop on top.

pub mod api;
pub mod error;
pub mod linalg;
pub mod nn;
pub mod packing;
pub mod params;
pub mod sim;

pub use api::{
    Backend, BackendId, Bootstrapper, CipherVector, ElementwiseOp, Evaluator, KeyCustodian, Ledger, LedgerSnapshot,
    Operand, Plain, PlainVector,
};
pub use error::{HeError, Result};
pub use packing::{Architecture, BlockKind, Format, GridShape, LogicalDims, Matrix, Packed};
pub use params::{SchemeParams, Security};
pub use sim::{NoiseModel, SimBackend};
