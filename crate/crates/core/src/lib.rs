//! Equilibrium consumption and investment under Kihlstrom-Mirman CRRA-CES
//! preferences in a Black-Scholes market.
//!
//! The equilibrium value separates into a backward ODE hierarchy
//! ([`hjbode`]); [`benchmark`] holds the Epstein-Zin and Merton closed forms,
//! [`moments`] the wealth and consumption moments, [`dtoracle`] a
//! discrete-time lattice that converges to the continuous policy, and
//! [`verify`] residual and Monte Carlo checks of the representations.

pub mod benchmark;
pub mod cli;
pub mod dtoracle;
pub mod error;
pub mod golden;
pub mod hjbode;
pub mod interp;
pub mod model;
pub mod moments;
pub mod paths;
pub mod quadrature;
pub mod verify;

pub use benchmark::{ez_annuity, ez_nu, merton_annuity, EzSolution};
pub use error::{Error, Result};
pub use hjbode::{
    consumption_fraction, investment_fraction, solve_coefficients, solve_hierarchy, Closure,
    CoefficientTable, PolicyCurve,
};
pub use model::{
    exact_closure_order, validate, KmPreferences, MarketParams, Model, SolverConfig, Truncation,
    Variant,
};
