//! Saddlepoint approximations for the loss distribution of credit-style
//! portfolios under one-factor conditional independence: tail probabilities,
//! VaR, expected shortfall, tranche values, risk contributions and the
//! shortfall Hessian, with exact and simulated references to check them.

pub mod contrib;
pub mod error;
pub mod kgf;
pub mod mixer;
pub mod model;
pub mod normal;
pub mod oracle;
mod par;
pub mod quadrature;
pub mod saddle;

pub use error::{Error, Result};
