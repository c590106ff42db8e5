//! Spectral-risk-constrained policy optimization on finite constrained MDPs.

pub mod distribution;
pub mod env;
pub mod inner;
pub mod normal;
pub mod oracle;
pub mod outer;
pub mod risk;
pub mod srcpo;
