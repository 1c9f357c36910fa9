//! Leveled RNS-CKKS backend for `hetrain`.
//!
//! Desk-scale only: keys are generated in memory, bootstrapping is the
//! custodian's decrypt/re-encrypt, and nothing here is constant time.

pub mod context;
pub mod encoding;
pub mod keys;
pub mod modulus;
pub mod ntt;
pub mod rns;
pub mod scheme;
pub mod serialize;

pub use context::{CkksContext, DEFAULT_GADGET_BITS};
pub use keys::{EvalKeys, SecretKey, ERROR_SIGMA};
pub use scheme::{CkksBackend, CkksCiphertext, CkksConfig};
