//! Desk-scale framework for latent-space adversarial mixing on disentangled
//! generators: a reverse-mode autodiff engine, exactly-disentangled and
//! learned decoders, latent-inversion, restarted projected-gradient latent
//! attacks, five training regimes, and a bias-focused evaluation harness.

pub mod attacks;
pub mod autodiff;
pub mod data;
pub mod error;
pub mod eval;
pub mod generators;
pub mod inversion;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
pub use generators::{Decoder, FactorLatent, PerpRegion};
