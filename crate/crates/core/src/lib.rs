//! Link-level simulator and library for uplink power-domain NOMA.
//!
//! Several users transmit simultaneously on the same resource and are separated
//! at the base station by received power. The receiver here is *blind*: it fits
//! a Gaussian mixture to the received I/Q cloud with EM, reads the strongest
//! user's channel off the fitted centroids, resolves the rotational phase
//! ambiguity with a handful of pilots, demaps, subtracts, and repeats
//! (successive interference cancellation). Maximum-likelihood baselines with
//! full or pilot-estimated CSI, closed-form SER predictors, and a seeded Monte
//! Carlo harness with a CSV/CLI front end round out the crate.
//!
//! Module map:
//! - [`modem`] — constellations, bit/symbol maps, min-distance demapping.
//! - [`channel`] — channel draws, superimposed transmission, mixture sampling.
//! - [`gmm`] — EM fitting of 2-D Gaussian mixtures.
//! - [`receiver`] — GMM+SIC detection, grant-free variant, MLD baselines.
//! - [`theory`] — Q-function, EM error bound, SER approximations.
//! - [`harness`] — experiment configs, trial farms, CSV emission, CLI.

pub mod channel;
pub mod gmm;
pub mod harness;
pub mod modem;
pub mod receiver;
pub mod theory;

pub use modem::IqSample;
