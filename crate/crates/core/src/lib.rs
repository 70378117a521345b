//! Universal curved-block adversarial patches for infrared pedestrian
//! detectors, searched by a black-box particle swarm.
//!
//! The pipeline: [`scene`] synthesizes or loads infrared frames,
//! [`patchgen`] renders a patch from its parameters, [`transforms`] models
//! physical variation, [`oracle`] scores boxes, [`optimizer`] searches for
//! the patch and [`eval`] measures attack success.

pub mod attack;
pub mod cli;
pub mod config;
pub mod eval;
pub mod imaging;
pub mod optimizer;
pub mod oracle;
pub mod patchgen;
pub mod rng;
pub mod scene;
pub mod transforms;
