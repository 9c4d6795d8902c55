//! Exhaustive search for rank-3 special dephased log-Hadamard matrices over
//! Z_p, deciding the Fuglede spectral-set–tiling conjecture in Z_p^3.

pub mod davey;
pub mod error;
pub mod pruning;
pub mod search;
pub mod zp;

pub use error::{Error, Result};
