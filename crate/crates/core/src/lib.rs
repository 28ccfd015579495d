//! Numerical workbench for heteroclinic cycles and their neural-field
//! realizations.
//!
//! * [`lv`] designs competitive Lotka–Volterra targets with a prescribed,
//!   asymptotically stable heteroclinic cycle.
//! * [`nfield`] builds discrete neural-field systems `ẋ = −x + σ(Wx + b)` with
//!   prescribed equilibria and certifies numerically that they cannot carry
//!   such a cycle.
//! * [`approx`] trains the one-hidden-layer approximator
//!   `f_θ(x) = −x + Pσ(Wx + b)` and lifts it to an `N`-population system.
//! * [`analysis`] measures return times, periodic orbits, residence times and
//!   block connectivity.

pub mod activation;
pub mod analysis;
pub mod approx;
pub mod error;
pub mod field;
pub mod integrate;
pub mod linalg;
pub mod nfield;
pub mod lv;
pub mod quad;
pub mod trajectory;

pub use activation::{Activation, ActivationKind};
pub use error::{Error, Result};
pub use field::VectorField;
pub use integrate::{detect_crossings, integrate, IntegratorConfig, SectionSpec};
pub use trajectory::Trajectory;
