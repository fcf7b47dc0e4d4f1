//! Computational hyperbolic dynamics on surfaces.
//!
//! The crate is organized bottom-up:
//!
//! * [`dynsys`] for the diffeomorphisms and model systems;
//! * [`orbits`] for periodic saddles and Lyapunov data;
//! * [`manifolds`] for grown stable/unstable curves and transverse intersections;
//! * [`homoclinic`] for the Smale preorder graph, homoclinic classes, periods and
//!   su-quadrilaterals;
//! * [`shadowing`] for pseudo-orbit graphs, shadowing and coded horseshoes;
//! * [`shift`] for Markov shifts: components, periods, Gurevich entropy, Parry and
//!   equilibrium measures;
//! * [`entropy`] for Bowen spanning counts, topological/Katok/tail entropy;
//! * [`lamination`] for laminations, holonomies, transverse dimension and the
//!   tangency (Sard) bound.

pub mod dynsys;
pub mod entropy;
pub mod error;
pub mod homoclinic;
pub mod lamination;
pub mod linalg;
pub mod manifolds;
pub mod orbits;
pub mod shadowing;
pub mod shift;
pub mod svg;

pub use dynsys::{Direction, Domain, Family, Mat2, Point, SmoothMap2D, Smoothness};
pub use error::{Error, Result};
