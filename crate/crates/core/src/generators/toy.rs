//! Two-cluster-per-axis analytic decoder for the 2-D toy problem:
//! `x1 = z_perp + n1`, `x2 = z_par + n2` with `n1 ~ N(0, √3)`,
//! `n2 ~ N(0, 1)`. Labels live on `z_par ∈ {0, 20}` (so `z_par = 20·y`),
//! while `z_perp ∈ {0, 10}` carries no label information.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Decoder, FactorLatent, PreparedPars};
use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};

pub const TOY_Z_PAR: [f64; 2] = [0.0, 20.0];
pub const TOY_Z_PERP: [f64; 2] = [0.0, 10.0];
/// The second parameter in the sampling spec is read as a standard
/// deviation, so `x1`'s noise has σ = √3.
pub const TOY_X1_STD: f64 = 1.732_050_807_568_877_2;
pub const TOY_X2_STD: f64 = 1.0;

/// Stochastic renderer used when building the toy dataset; every call draws
/// fresh noise from the caller's RNG.
#[derive(Debug, Clone, Default)]
pub struct ToyDecoder;

impl ToyDecoder {
    pub fn decode(&self, z: &FactorLatent, rng: &mut ChaCha8Rng) -> (f64, f64) {
        let n1 = Normal::new(0.0, TOY_X1_STD).unwrap().sample(rng);
        let n2 = Normal::new(0.0, TOY_X2_STD).unwrap().sample(rng);
        (z.z_perp[0] + n1, z.z_par[0] + n2)
    }

    pub fn mix(
        &self,
        z_a: &FactorLatent,
        z_b: &FactorLatent,
        rng: &mut ChaCha8Rng,
    ) -> (f64, f64) {
        self.decode(
            &FactorLatent::new(z_a.z_par.clone(), z_b.z_perp.clone()),
            rng,
        )
    }

    pub fn sample_perp(&self, rng: &mut ChaCha8Rng) -> f64 {
        TOY_Z_PERP[rng.gen_range(0..2)]
    }
}

/// The same map with its noise draw frozen at construction, which makes it a
/// deterministic [`Decoder`]: the latent attack optimizes `z_perp` for one
/// fixed noise realization. Output is the raw point `(x1, x2)`, not confined
/// to `[0, 1]`.
#[derive(Debug, Clone)]
pub struct FrozenToyDecoder {
    pub n1: f64,
    pub n2: f64,
}

impl FrozenToyDecoder {
    pub fn draw(rng: &mut ChaCha8Rng) -> Self {
        let n1 = Normal::new(0.0, TOY_X1_STD).unwrap().sample(rng);
        let n2 = Normal::new(0.0, TOY_X2_STD).unwrap().sample(rng);
        FrozenToyDecoder { n1, n2 }
    }
}

impl Decoder for FrozenToyDecoder {
    fn d_par(&self) -> usize {
        1
    }

    fn d_perp(&self) -> usize {
        1
    }

    fn image_dims(&self) -> (usize, usize, usize) {
        (1, 1, 2)
    }

    fn decode(&self, z: &FactorLatent) -> Result<Vec<f64>> {
        if z.z_par.len() != 1 || z.z_perp.len() != 1 {
            return Err(Error::Shape {
                op: "toy_decode",
                lhs: vec![z.z_par.len(), z.z_perp.len()],
                rhs: vec![1, 1],
            });
        }
        Ok(vec![z.z_perp[0] + self.n1, z.z_par[0] + self.n2])
    }

    fn prepare_pars(&self, pars: &[&[f64]]) -> Result<PreparedPars> {
        let mut rows = Vec::with_capacity(pars.len() * 2);
        for p in pars {
            if p.len() != 1 {
                return Err(Error::Shape {
                    op: "toy_prepare",
                    lhs: vec![p.len()],
                    rhs: vec![1],
                });
            }
            rows.push(self.n1);
            rows.push(p[0] + self.n2);
        }
        Ok(PreparedPars {
            rows: Tensor::matrix(pars.len(), 2, rows)?,
        })
    }

    fn decode_rows_graph(&self, g: &mut Graph, prep: &PreparedPars, z_perp: Var) -> Result<Var> {
        let b = prep.batch_len();
        if g.shape(z_perp) != [b, 1] {
            return Err(Error::Shape {
                op: "toy_decode_rows",
                lhs: g.shape(z_perp).to_vec(),
                rhs: vec![b, 1],
            });
        }
        let rows = g.leaf(prep.rows.clone());
        // Place z_perp into the first output column via a constant selector.
        let selector = g.leaf(Tensor::matrix(1, 2, vec![1.0, 0.0])?);
        let spread = g.matmul(z_perp, selector)?;
        g.add(rows, spread)
    }

    fn sample_perp(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        vec![TOY_Z_PERP[rng.gen_range(0..2)]]
    }

    fn perp_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        None
    }
}
