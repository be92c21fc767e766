//! Joint resource optimization for multicell networks whose relays harvest
//! RF energy through power splitting.
//!
//! The crate is organised bottom-up:
//!
//! * [`netgen`] builds the cell geometry and draws fading channels.
//! * [`linkmodel`] evaluates SINR, throughput, harvested energy and relay
//!   power caps for amplify-and-forward (AF) and decode-and-forward (DF)
//!   relaying.
//! * [`convexcore`] holds the log-sum-exp program representation, the
//!   geometric-program compiler and a barrier interior-point solver.
//! * [`sca_gp`] and [`sca_dc`] build the per-iteration convex subproblems
//!   of the two successive convex approximation schemes (monomial
//!   condensation and difference-of-convex linearization).
//! * [`driver`] runs the outer loop, baselines, the DF timeslot search and
//!   the experiment suites.

pub mod convexcore;
pub mod driver;
pub mod error;
pub mod linkmodel;
pub mod netgen;
pub mod sca_dc;
pub mod sca_gp;

pub use error::{Error, Result};
