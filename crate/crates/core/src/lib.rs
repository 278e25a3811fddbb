pub mod chain;
pub mod error;
pub mod gram_schmidt;
pub mod hilbert;
pub mod operators;
pub mod scenario;
