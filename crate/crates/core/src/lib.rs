//! Hyperbolic half-space models with their curvature, weight certificates for
//! weighted function spaces, indicial analysis of radial operators, and
//! polyhomogeneous expansions of solutions to semilinear model problems.

pub mod indicial;
pub mod models;
pub mod phg;
pub mod tensor;
pub mod weights;
