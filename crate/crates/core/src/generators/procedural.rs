//! Exactly-disentangled glyph colorizer: `z_par` selects a grayscale glyph
//! from a fixed bank, `z_perp` is an RGB color, and the two never interact.
//! Every invariance claim about the factored latent space is testable
//! bit-exactly against this decoder.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use super::{ColorSampler, Decoder, FactorLatent, PreparedPars};
use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Pixel rule shared by the renderer and the dataset builder so cached
/// images and fresh decodes agree bitwise.
#[inline]
pub fn colorize_pixel(gray: f64, channel: f64) -> f64 {
    (gray * channel.clamp(0.0, 1.0)).clamp(0.0, 1.0)
}

pub struct ProceduralGlyphDecoder {
    glyphs: Arc<Vec<Vec<f64>>>,
    height: usize,
    width: usize,
    sampler: ColorSampler,
}

impl ProceduralGlyphDecoder {
    /// `glyphs` are flat `height×width` grayscale images in `[0, 1]`.
    pub fn new(
        glyphs: Arc<Vec<Vec<f64>>>,
        height: usize,
        width: usize,
        sampler: ColorSampler,
    ) -> Result<Self> {
        if glyphs.is_empty() {
            return Err(Error::Data("glyph bank is empty".into()));
        }
        for (i, gl) in glyphs.iter().enumerate() {
            if gl.len() != height * width {
                return Err(Error::Data(format!(
                    "glyph {i} has {} pixels, expected {}",
                    gl.len(),
                    height * width
                )));
            }
        }
        Ok(ProceduralGlyphDecoder {
            glyphs,
            height,
            width,
            sampler,
        })
    }

    pub fn glyph_count(&self) -> usize {
        self.glyphs.len()
    }

    pub fn glyph(&self, index: usize) -> &[f64] {
        &self.glyphs[index]
    }

    pub fn sampler(&self) -> &ColorSampler {
        &self.sampler
    }

    /// Same decoder over the same bank with a different `z_perp` sampler.
    pub fn with_sampler(&self, sampler: ColorSampler) -> Self {
        ProceduralGlyphDecoder {
            glyphs: Arc::clone(&self.glyphs),
            height: self.height,
            width: self.width,
            sampler,
        }
    }

    fn glyph_index(&self, z_par: &[f64]) -> Result<usize> {
        if z_par.len() != 1 {
            return Err(Error::Shape {
                op: "glyph_index",
                lhs: vec![z_par.len()],
                rhs: vec![1],
            });
        }
        let idx = z_par[0].round();
        if !idx.is_finite() || idx < 0.0 || idx as usize >= self.glyphs.len() {
            return Err(Error::Data(format!(
                "glyph index {} outside bank of {}",
                z_par[0],
                self.glyphs.len()
            )));
        }
        Ok(idx as usize)
    }

    /// Render a glyph with an explicit color; used directly by the dataset
    /// builder, which records (glyph, color) as provenance.
    pub fn render(&self, glyph_index: usize, color: &[f64; 3]) -> Vec<f64> {
        let gl = &self.glyphs[glyph_index];
        let mut img = Vec::with_capacity(gl.len() * 3);
        for &g in gl {
            for ch in color {
                img.push(colorize_pixel(g, *ch));
            }
        }
        img
    }
}

impl Decoder for ProceduralGlyphDecoder {
    fn d_par(&self) -> usize {
        1
    }

    fn d_perp(&self) -> usize {
        3
    }

    fn image_dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, 3)
    }

    fn decode(&self, z: &FactorLatent) -> Result<Vec<f64>> {
        let idx = self.glyph_index(&z.z_par)?;
        if z.z_perp.len() != 3 {
            return Err(Error::Shape {
                op: "decode",
                lhs: vec![z.z_perp.len()],
                rhs: vec![3],
            });
        }
        let color = [z.z_perp[0], z.z_perp[1], z.z_perp[2]];
        Ok(self.render(idx, &color))
    }

    fn prepare_pars(&self, pars: &[&[f64]]) -> Result<PreparedPars> {
        let hw = self.height * self.width;
        let mut rows = Vec::with_capacity(pars.len() * hw);
        for p in pars {
            let idx = self.glyph_index(p)?;
            rows.extend_from_slice(&self.glyphs[idx]);
        }
        Ok(PreparedPars {
            rows: Tensor::matrix(pars.len(), hw, rows)?,
        })
    }

    fn decode_rows_graph(&self, g: &mut Graph, prep: &PreparedPars, z_perp: Var) -> Result<Var> {
        let b = prep.batch_len();
        if g.shape(z_perp) != [b, 3] {
            return Err(Error::Shape {
                op: "decode_rows_graph",
                lhs: g.shape(z_perp).to_vec(),
                rhs: vec![b, 3],
            });
        }
        let gl = g.leaf(prep.rows.clone());
        let color = g.clamp01(z_perp)?;
        let raw = g.outer_rows(gl, color)?;
        g.clamp01(raw)
    }

    fn sample_perp(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.sampler.sample(rng)
    }

    fn perp_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        Some((vec![0.0; 3], vec![1.0; 3]))
    }
}
