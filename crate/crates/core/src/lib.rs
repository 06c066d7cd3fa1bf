//! Steady-state heat transport through a strongly coupled qubit–qutrit
//! system attached to three thermal baths, operated as a thermal transistor.
//!
//! Pipeline: [`model`] (dressed states, transition channels) →
//! [`rates`] (population generator) → [`steadystate`] →
//! [`observables`] (heat currents, amplification) → [`sweeps`].

pub mod model;
pub mod observables;
pub mod precision;
pub mod rates;
pub mod steadystate;
pub mod sweeps;

pub use model::{diagonalize, eigenoperator_channels, validate_secular, Bath, BathMap, BathSet, EigenSystem, Level, ModelError, SystemParams, TransitionChannel};
pub use rates::{assemble_generator, assemble_paper_m, bose_occupation, generator_for, rate_pair, PopulationGenerator, RateError, RatePair};
pub use steadystate::{evolve_ode, solve_approximate, solve_full_liouvillian, solve_numerical, Method, SolveError, SteadyState};
