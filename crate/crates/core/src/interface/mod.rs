//! Sharp-interface two-domain models of channel flow over a porous layer
//! and the extraction of their parameters from simulated profiles.

mod extract;
mod fit;
mod two_domain;

pub use extract::{extract_interface_params, interface_position_candidates, ExtractOptions, InterfaceFit};
pub use fit::{fit_quadratic, fit_two_exponential, ExponentialFit, QuadraticFit};
pub use two_domain::{solve_two_domain, InterfaceCondition, TwoDomainConfig, TwoDomainSolution};
