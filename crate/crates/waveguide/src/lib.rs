//! Acoustic modeling and source localization in a three-layered ocean
//! waveguide.
//!
//! The crate has four layers of machinery:
//!
//! * [`config`] — geometry and material parameters of the stratified
//!   waveguide and the penetrable cuboid inclusion;
//! * [`modal`] — dispersion roots, vertical modes, and the Green's function
//!   (residue series plus an independent quadrature oracle);
//! * [`forward`] — volume-discretized fixed-point solver for the total
//!   field in the presence of the inclusion, receiver synthesis, noise;
//! * [`locator`] — matched-field indicator and the multilevel
//!   grid-refinement search for the source position.
//!
//! The [`scenario`] module ties everything into runnable experiment
//! descriptions with a plain-text config format, presets, and manifests;
//! the `waveguide` binary is a thin CLI over it.

pub mod bessel;
pub mod config;
pub mod forward;
pub mod locator;
pub mod modal;
pub mod scenario;
