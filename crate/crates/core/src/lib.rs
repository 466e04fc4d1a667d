//! Frank-Wolfe self-play for the mixed-strategy saddle-point formulation of
//! best-arm identification.
//!
//! The experimenter picks an allocation `p` over arms, the skeptic a mixture
//! `mu` over confusing scenarios, and the payoff is
//! `F(p, mu) = sum_x mu_x D(p, x)`. Both players take one-hot Frank-Wolfe
//! steps against the linearized payoff.
//!
//! Module map:
//! - [`model`]: instances, best arm, scenario set
//! - [`divergences`]: `D(p, x)`, gradients, payoff
//! - [`dynamics`]: discrete self-play, Lyapunov and KKT diagnostics, Euler flow
//! - [`learning`]: posterior-sampling variant for gaussian linear bandits
//! - [`oracles`]: brute-force references used for verification
//! - [`experiment`]: config files, replicated runs, CSV output

pub mod builtins;
pub mod check;
pub mod divergences;
pub mod dynamics;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod format;
pub mod learning;
pub mod model;
pub mod oracles;
pub mod simplex;

pub use error::{Error, Result};
pub use model::{BanditInstance, Family, InstanceKind, InstanceSpec, ScenarioIndex};
pub use simplex::{Allocation, ScenarioMix};
