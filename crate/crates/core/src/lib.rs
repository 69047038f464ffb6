//! Monte Carlo simulation and analysis of double and triple Compton scattering of
//! entangled annihilation photon pairs.

pub mod analysis;
pub mod config;
pub mod digitizer;
pub mod error;
pub mod geometry;
pub mod kinematics;
pub mod material;
pub mod pair;
pub mod pipeline;
pub mod plot;
pub mod report;
pub mod rng;
pub mod transport;
pub mod xsec;
pub mod xsec_table;

pub use error::{Error, Result};
