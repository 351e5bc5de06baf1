//! Pipeline library for contact force distribution datasets on soft tactile
//! sensors: hyperelastic material modeling and fitting, experimental stress
//! analysis, binning of nodal force exports into distribution labels, dense
//! optical-flow features, and a feedforward regression network with the
//! matching evaluation metrics.
//!
//! Units are fixed repo-wide: stresses in kPa, forces in N, lengths in mm,
//! angles in radians.

pub mod characterization;
pub mod constitutive;
pub mod error;
pub mod fitting;
pub mod flowfeat;
pub mod labeling;
pub mod learning;
pub mod seed;
pub mod synth;
pub mod util;

pub use error::{Error, Result};
