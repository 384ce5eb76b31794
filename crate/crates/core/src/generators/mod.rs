//! Disentangled latent spaces and the decoders that render them.
//!
//! A latent is split into label-relevant coordinates `z_par` and
//! label-independent coordinates `z_perp`; decoders promise that only
//! `z_perp` controls the nuisance factor (color, here). Style mixing renders
//! one latent's `z_par` with another's `z_perp`.

mod learned;
mod procedural;
mod toy;

pub use learned::{train_learned_decoder, DecoderTrainConfig, ImitationSample, LearnedDecoder};
pub use procedural::ProceduralGlyphDecoder;
pub use toy::{FrozenToyDecoder, ToyDecoder, TOY_X1_STD, TOY_X2_STD, TOY_Z_PAR, TOY_Z_PERP};

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// A point in the factored latent space: `(z_par, z_perp)`, concatenated in
/// that order everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorLatent {
    pub z_par: Vec<f64>,
    pub z_perp: Vec<f64>,
}

impl FactorLatent {
    pub fn new(z_par: Vec<f64>, z_perp: Vec<f64>) -> Self {
        FactorLatent { z_par, z_perp }
    }
}

/// ℓ∞ neighborhood used by the latent attack: a ball of radius `radius_inf`
/// around `center`, optionally intersected with a coordinate box.
#[derive(Debug, Clone)]
pub struct PerpRegion {
    pub center: Vec<f64>,
    pub radius_inf: f64,
    pub box_lo: Option<Vec<f64>>,
    pub box_hi: Option<Vec<f64>>,
}

impl PerpRegion {
    pub fn new(center: Vec<f64>, radius_inf: f64) -> Result<Self> {
        if !(radius_inf > 0.0) {
            return Err(Error::Config(format!(
                "perp region radius must be positive, got {radius_inf}"
            )));
        }
        Ok(PerpRegion {
            center,
            radius_inf,
            box_lo: None,
            box_hi: None,
        })
    }

    pub fn with_box(mut self, lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != self.center.len() || hi.len() != self.center.len() {
            return Err(Error::Shape {
                op: "perp_region",
                lhs: vec![self.center.len()],
                rhs: vec![lo.len(), hi.len()],
            });
        }
        for i in 0..lo.len() {
            if !(lo[i] <= self.center[i] && self.center[i] <= hi[i]) {
                return Err(Error::Config(format!(
                    "perp region center coordinate {i} ({}) outside box [{}, {}]",
                    self.center[i], lo[i], hi[i]
                )));
            }
        }
        self.box_lo = Some(lo);
        self.box_hi = Some(hi);
        Ok(self)
    }
}

/// Coordinatewise clip onto the region: first to the ℓ∞ ball, then to the
/// box where bounds exist. Idempotent; because the center lies inside the
/// box, the result always stays within the ball as well.
pub fn project_perp(z: &[f64], region: &PerpRegion) -> Result<Vec<f64>> {
    if z.len() != region.center.len() {
        return Err(Error::Shape {
            op: "project_perp",
            lhs: vec![z.len()],
            rhs: vec![region.center.len()],
        });
    }
    let eps = region.radius_inf;
    let mut out = Vec::with_capacity(z.len());
    for i in 0..z.len() {
        let c = region.center[i];
        let mut v = z[i].clamp(c - eps, c + eps);
        if let (Some(lo), Some(hi)) = (&region.box_lo, &region.box_hi) {
            v = v.clamp(lo[i], hi[i]);
        }
        out.push(v);
    }
    Ok(out)
}

/// Whether `‖z‖₂` lies in the typical-set shell `√d ± δ·d^{1/4}`.
pub fn typical_shell_check(z_raw: &[f64], delta: f64) -> bool {
    let d = z_raw.len() as f64;
    let norm = z_raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    let center = d.sqrt();
    let band = delta * d.powf(0.25);
    (center - band) <= norm && norm <= (center + band)
}

/// Per-example constants prepared once per batch so that the attack's inner
/// loop only differentiates the `z_perp`-dependent part. Contents are owned
/// by the decoder that produced them.
pub struct PreparedPars {
    pub(crate) rows: Tensor,
}

impl PreparedPars {
    pub fn batch_len(&self) -> usize {
        self.rows.shape()[0]
    }
}

/// A deterministic renderer over the factored latent space.
///
/// `decode` is the plain forward render; `decode_rows_graph` builds the same
/// computation on an autodiff graph, differentiable in `z_perp` (the `z_par`
/// side enters through [`Decoder::prepare_pars`] as constants). Decoders are
/// immutable after construction and safe to share across threads.
pub trait Decoder: Send + Sync {
    fn d_par(&self) -> usize;
    fn d_perp(&self) -> usize;

    /// Output dimensions `(height, width, channels)`.
    fn image_dims(&self) -> (usize, usize, usize);

    /// Render a latent to a flat row-major `H×W×C` image.
    fn decode(&self, z: &FactorLatent) -> Result<Vec<f64>>;

    /// Precompute the `z_par`-dependent constants for a batch.
    fn prepare_pars(&self, pars: &[&[f64]]) -> Result<PreparedPars>;

    /// Batched differentiable render: `z_perp` is a `[B, d_perp]` graph
    /// variable, the result is `[B, H*W*C]`.
    fn decode_rows_graph(&self, g: &mut Graph, prep: &PreparedPars, z_perp: Var) -> Result<Var>;

    /// Draw a `z_perp` from the decoder's nuisance-factor distribution.
    fn sample_perp(&self, rng: &mut ChaCha8Rng) -> Vec<f64>;

    /// Valid coordinate box for `z_perp`, if the space is bounded.
    fn perp_box(&self) -> Option<(Vec<f64>, Vec<f64>)>;

    fn image_len(&self) -> usize {
        let (h, w, c) = self.image_dims();
        h * w * c
    }
}

/// Render `dec(z)`.
pub fn decode(dec: &dyn Decoder, z: &FactorLatent) -> Result<Vec<f64>> {
    dec.decode(z)
}

/// Style mixing: render `z_a`'s content with `z_b`'s nuisance factor.
pub fn mix(dec: &dyn Decoder, z_a: &FactorLatent, z_b: &FactorLatent) -> Result<Vec<f64>> {
    dec.decode(&FactorLatent {
        z_par: z_a.z_par.clone(),
        z_perp: z_b.z_perp.clone(),
    })
}

/// Single-example differentiable decode; returns the image variable of shape
/// `[1, H*W*C]` given a `[1, d_perp]` variable.
pub fn decode_graph(dec: &dyn Decoder, g: &mut Graph, z_par: &[f64], z_perp: Var) -> Result<Var> {
    let prep = dec.prepare_pars(&[z_par])?;
    dec.decode_rows_graph(g, &prep, z_perp)
}

/// How `z_perp` draws are produced for procedural decoders: either uniform
/// over a box, one of the three pure RGB colors by weight, or an empirical
/// palette (a recorded multiset of colors) with truncated Gaussian jitter.
#[derive(Debug, Clone)]
pub enum ColorSampler {
    UniformBox,
    Rgb { weights: [f64; 3] },
    Palette { colors: Vec<[f64; 3]>, jitter_std: f64 },
}

pub const RGB_BASE_COLORS: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Jitter is truncated at ±5σ so draws never leave the recorded palette's
/// neighborhood.
pub const PALETTE_JITTER_TRUNC: f64 = 5.0;

impl ColorSampler {
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match self {
            ColorSampler::UniformBox => (0..3).map(|_| rng.gen_range(0.0..1.0)).collect(),
            ColorSampler::Rgb { weights } => {
                let u: f64 = rng.gen_range(0.0..1.0);
                let idx = if u < weights[0] {
                    0
                } else if u < weights[0] + weights[1] {
                    1
                } else {
                    2
                };
                RGB_BASE_COLORS[idx].to_vec()
            }
            ColorSampler::Palette { colors, jitter_std } => {
                let idx = rng.gen_range(0..colors.len());
                let base = colors[idx];
                if *jitter_std == 0.0 {
                    return base.to_vec();
                }
                let normal = Normal::new(0.0, *jitter_std).expect("finite std");
                let cap = PALETTE_JITTER_TRUNC * *jitter_std;
                base.iter()
                    .map(|&b| {
                        let j = normal.sample(rng).clamp(-cap, cap);
                        (b + j).clamp(0.0, 1.0)
                    })
                    .collect()
            }
        }
    }
}

#[cfg(test)]
mod tests;
