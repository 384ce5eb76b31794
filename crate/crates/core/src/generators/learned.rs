//! Learned imitation decoder: per-glyph codes plus a shape branch and a color
//! branch, trained jointly to reproduce the procedural renderer on a possibly
//! biased sample of (glyph, color) pairs. The decoder records the color
//! multiset it was trained on; its `z_perp` sampler draws from that empirical
//! distribution with small truncated jitter, which is exactly where training
//! bias re-enters the pipeline.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ColorSampler, Decoder, FactorLatent, PreparedPars};
use crate::autodiff::{adam_step, AdamState, Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng;

pub const DECODER_MAGIC: &[u8; 8] = b"ADVMIXD1";

/// One imitation target: glyph `code` rendered in `color` should reproduce
/// `target` (a flat `H*W*C` image in `[0,1]`).
pub struct ImitationSample<'a> {
    pub code: usize,
    pub color: [f64; 3],
    pub target: &'a [f64],
}

#[derive(Debug, Clone)]
pub struct DecoderTrainConfig {
    pub d_par: usize,
    pub shape_hidden: usize,
    pub color_hidden: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub jitter_std: f64,
    pub seed: u64,
}

impl Default for DecoderTrainConfig {
    fn default() -> Self {
        DecoderTrainConfig {
            d_par: 8,
            shape_hidden: 128,
            color_hidden: 32,
            epochs: 12,
            batch: 64,
            lr: 1e-3,
            jitter_std: 0.02,
            seed: 0,
        }
    }
}

pub struct LearnedDecoder {
    d_par: usize,
    height: usize,
    width: usize,
    shape_hidden: usize,
    color_hidden: usize,
    n_codes: usize,
    /// code → glyph index the code was trained on.
    glyph_keys: Vec<i32>,
    embed: Vec<f64>, // n_codes × d_par
    sw1: Vec<f64>,
    sb1: Vec<f64>,
    sw2: Vec<f64>,
    sb2: Vec<f64>,
    cw1: Vec<f64>,
    cb1: Vec<f64>,
    cw2: Vec<f64>,
    cb2: Vec<f64>,
    color_table: Vec<[f64; 3]>,
    jitter_std: f64,
    train_rmse: f64,
    sampler: ColorSampler,
}

impl LearnedDecoder {
    pub fn train_rmse(&self) -> f64 {
        self.train_rmse
    }

    pub fn color_table(&self) -> &[[f64; 3]] {
        &self.color_table
    }

    pub fn n_codes(&self) -> usize {
        self.n_codes
    }

    /// The trained latent code for glyph slot `code`.
    pub fn code_latent(&self, code: usize) -> &[f64] {
        &self.embed[code * self.d_par..(code + 1) * self.d_par]
    }

    pub fn glyph_key(&self, code: usize) -> i32 {
        self.glyph_keys[code]
    }

    /// Slot trained on the given original glyph index, if any.
    pub fn code_for_glyph(&self, glyph_index: i32) -> Option<usize> {
        self.glyph_keys.iter().position(|&k| k == glyph_index)
    }

    /// A random trained code vector; the `z_par` analog of drawing from the
    /// mapped latent distribution.
    pub fn sample_par(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let code = rng.gen_range(0..self.n_codes);
        self.code_latent(code).to_vec()
    }

    // Accumulation order matches matmul-then-bias on the graph so plain and
    // graph decodes agree bitwise.
    fn dense(x: &[f64], rows: usize, din: usize, w: &[f64], b: &[f64], dout: usize) -> Vec<f64> {
        let mut out = vec![0.0; rows * dout];
        for r in 0..rows {
            let xr = &x[r * din..(r + 1) * din];
            let or = &mut out[r * dout..(r + 1) * dout];
            for (k, &xk) in xr.iter().enumerate() {
                let wrow = &w[k * dout..(k + 1) * dout];
                for j in 0..dout {
                    or[j] += xk * wrow[j];
                }
            }
            for j in 0..dout {
                or[j] += b[j];
            }
        }
        out
    }

    /// Shape branch without a graph: `z_par → raw per-pixel intensities`.
    pub fn shape_forward(&self, z_par: &[f64]) -> Result<Vec<f64>> {
        if z_par.len() != self.d_par {
            return Err(Error::Shape {
                op: "shape_forward",
                lhs: vec![z_par.len()],
                rhs: vec![self.d_par],
            });
        }
        let mut h = Self::dense(z_par, 1, self.d_par, &self.sw1, &self.sb1, self.shape_hidden);
        for v in &mut h {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        Ok(Self::dense(
            &h,
            1,
            self.shape_hidden,
            &self.sw2,
            &self.sb2,
            self.height * self.width,
        ))
    }

    /// Color branch without a graph: `z_perp → raw channel gains`.
    pub fn color_forward(&self, z_perp: &[f64]) -> Result<Vec<f64>> {
        if z_perp.len() != 3 {
            return Err(Error::Shape {
                op: "color_forward",
                lhs: vec![z_perp.len()],
                rhs: vec![3],
            });
        }
        let mut h = Self::dense(z_perp, 1, 3, &self.cw1, &self.cb1, self.color_hidden);
        for v in &mut h {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        Ok(Self::dense(&h, 1, self.color_hidden, &self.cw2, &self.cb2, 3))
    }

    fn color_graph(&self, g: &mut Graph, z_perp: Var) -> Result<Var> {
        let w1 = g.leaf(Tensor::matrix(3, self.color_hidden, self.cw1.clone())?);
        let b1 = g.leaf(Tensor::vector(self.cb1.clone()));
        let w2 = g.leaf(Tensor::matrix(self.color_hidden, 3, self.cw2.clone())?);
        let b2 = g.leaf(Tensor::vector(self.cb2.clone()));
        let h = g.matmul(z_perp, w1)?;
        let h = g.add_bias(h, b1)?;
        let h = g.relu(h)?;
        let q = g.matmul(h, w2)?;
        g.add_bias(q, b2)
    }

    fn shape_graph(&self, g: &mut Graph, z_par: Var) -> Result<Var> {
        let w1 = g.leaf(Tensor::matrix(self.d_par, self.shape_hidden, self.sw1.clone())?);
        let b1 = g.leaf(Tensor::vector(self.sb1.clone()));
        let w2 = g.leaf(Tensor::matrix(
            self.shape_hidden,
            self.height * self.width,
            self.sw2.clone(),
        )?);
        let b2 = g.leaf(Tensor::vector(self.sb2.clone()));
        let h = g.matmul(z_par, w1)?;
        let h = g.add_bias(h, b1)?;
        let h = g.relu(h)?;
        let s = g.matmul(h, w2)?;
        g.add_bias(s, b2)
    }

    /// Fully differentiable render: gradients flow into both `z_par` and
    /// `z_perp` variables (`[B, d_par]`, `[B, 3]` → `[B, H*W*3]`). Used by the
    /// latent-inversion optimizer.
    pub fn decode_full_graph(&self, g: &mut Graph, z_par: Var, z_perp: Var) -> Result<Var> {
        let s = self.shape_graph(g, z_par)?;
        let q = self.color_graph(g, z_perp)?;
        let raw = g.outer_rows(s, q)?;
        g.clamp01(raw)
    }
}

impl Decoder for LearnedDecoder {
    fn d_par(&self) -> usize {
        self.d_par
    }

    fn d_perp(&self) -> usize {
        3
    }

    fn image_dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, 3)
    }

    fn decode(&self, z: &FactorLatent) -> Result<Vec<f64>> {
        let s = self.shape_forward(&z.z_par)?;
        let q = self.color_forward(&z.z_perp)?;
        let mut img = Vec::with_capacity(s.len() * 3);
        for &sv in &s {
            for &qv in &q {
                img.push((sv * qv).clamp(0.0, 1.0));
            }
        }
        Ok(img)
    }

    fn prepare_pars(&self, pars: &[&[f64]]) -> Result<PreparedPars> {
        let hw = self.height * self.width;
        let mut rows = Vec::with_capacity(pars.len() * hw);
        for p in pars {
            rows.extend_from_slice(&self.shape_forward(p)?);
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
        let s = g.leaf(prep.rows.clone());
        let q = self.color_graph(g, z_perp)?;
        let raw = g.outer_rows(s, q)?;
        g.clamp01(raw)
    }

    fn sample_perp(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.sampler.sample(rng)
    }

    fn perp_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        Some((vec![0.0; 3], vec![1.0; 3]))
    }
}

fn init_dense(r: &mut ChaCha8Rng, din: usize, dout: usize, scale: f64) -> Vec<f64> {
    let std = scale * (2.0 / din as f64).sqrt();
    let normal = Normal::new(0.0, std).unwrap();
    (0..din * dout).map(|_| normal.sample(r)).collect()
}

/// Fit the imitation decoder on the given sample multiset. The color table
/// records every training color, so a biased multiset yields a biased
/// sampler.
pub fn train_learned_decoder(
    n_codes: usize,
    glyph_keys: Vec<i32>,
    height: usize,
    width: usize,
    samples: &[ImitationSample<'_>],
    cfg: &DecoderTrainConfig,
) -> Result<LearnedDecoder> {
    if samples.is_empty() {
        return Err(Error::Data("no imitation samples".into()));
    }
    if glyph_keys.len() != n_codes {
        return Err(Error::Shape {
            op: "train_learned_decoder",
            lhs: vec![glyph_keys.len()],
            rhs: vec![n_codes],
        });
    }
    let hw = height * width;
    for s in samples {
        if s.code >= n_codes {
            return Err(Error::Data(format!(
                "imitation sample code {} out of range {n_codes}",
                s.code
            )));
        }
        if s.target.len() != hw * 3 {
            return Err(Error::Shape {
                op: "train_learned_decoder",
                lhs: vec![s.target.len()],
                rhs: vec![hw * 3],
            });
        }
    }

    let mut r = rng::stream(cfg.seed, "decoder-init");
    let mut dec = LearnedDecoder {
        d_par: cfg.d_par,
        height,
        width,
        shape_hidden: cfg.shape_hidden,
        color_hidden: cfg.color_hidden,
        n_codes,
        glyph_keys,
        embed: {
            let normal = Normal::new(0.0, 0.5).unwrap();
            (0..n_codes * cfg.d_par).map(|_| normal.sample(&mut r)).collect()
        },
        sw1: init_dense(&mut r, cfg.d_par, cfg.shape_hidden, 1.0),
        sb1: vec![0.0; cfg.shape_hidden],
        sw2: init_dense(&mut r, cfg.shape_hidden, hw, 1.0),
        sb2: vec![0.0; hw],
        cw1: init_dense(&mut r, 3, cfg.color_hidden, 1.0),
        cb1: vec![0.0; cfg.color_hidden],
        cw2: init_dense(&mut r, cfg.color_hidden, 3, 1.0),
        cb2: vec![0.0; 3],
        color_table: samples.iter().map(|s| s.color).collect(),
        jitter_std: cfg.jitter_std,
        train_rmse: f64::NAN,
        sampler: ColorSampler::UniformBox, // replaced below
    };

    let mut states: Vec<AdamState> = [
        dec.embed.len(),
        dec.sw1.len(),
        dec.sb1.len(),
        dec.sw2.len(),
        dec.sb2.len(),
        dec.cw1.len(),
        dec.cb1.len(),
        dec.cw2.len(),
        dec.cb2.len(),
    ]
    .iter()
    .map(|&n| AdamState::new(n))
    .collect();

    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut shuffle_rng = rng::stream(cfg.seed, "decoder-shuffle");

    for _epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(cfg.batch) {
            let b = chunk.len();
            let mut emb = Vec::with_capacity(b * cfg.d_par);
            let mut colors = Vec::with_capacity(b * 3);
            let mut target = Vec::with_capacity(b * hw * 3);
            for &i in chunk {
                let s = &samples[i];
                emb.extend_from_slice(
                    &dec.embed[s.code * cfg.d_par..(s.code + 1) * cfg.d_par],
                );
                colors.extend_from_slice(&s.color);
                target.extend_from_slice(s.target);
            }

            let mut g = Graph::new();
            let emb_v = g.param(Tensor::matrix(b, cfg.d_par, emb)?);
            let col_v = g.leaf(Tensor::matrix(b, 3, colors)?);
            let sw1 = g.param(Tensor::matrix(cfg.d_par, cfg.shape_hidden, dec.sw1.clone())?);
            let sb1 = g.param(Tensor::vector(dec.sb1.clone()));
            let sw2 = g.param(Tensor::matrix(cfg.shape_hidden, hw, dec.sw2.clone())?);
            let sb2 = g.param(Tensor::vector(dec.sb2.clone()));
            let cw1 = g.param(Tensor::matrix(3, cfg.color_hidden, dec.cw1.clone())?);
            let cb1 = g.param(Tensor::vector(dec.cb1.clone()));
            let cw2 = g.param(Tensor::matrix(cfg.color_hidden, 3, dec.cw2.clone())?);
            let cb2 = g.param(Tensor::vector(dec.cb2.clone()));

            let h = g.matmul(emb_v, sw1)?;
            let h = g.add_bias(h, sb1)?;
            let h = g.relu(h)?;
            let s_rows = g.matmul(h, sw2)?;
            let s_rows = g.add_bias(s_rows, sb2)?;

            let hc = g.matmul(col_v, cw1)?;
            let hc = g.add_bias(hc, cb1)?;
            let hc = g.relu(hc)?;
            let q = g.matmul(hc, cw2)?;
            let q = g.add_bias(q, cb2)?;

            // Loss on the pre-clamp product: clamping here would zero
            // gradients for saturated pixels and stall early training.
            let pre = g.outer_rows(s_rows, q)?;
            let tv = g.leaf(Tensor::matrix(b, hw * 3, target)?);
            let diff = g.sub(pre, tv)?;
            let sq = g.square(diff)?;
            let loss = g.mean(sq)?;
            let lv = g.data(loss)[0];
            if !lv.is_finite() {
                return Err(Error::Numeric(format!(
                    "decoder imitation loss became non-finite: {lv}"
                )));
            }
            g.backward(loss)?;

            // Scatter batch embedding gradients back to their rows.
            let demb = g.grad(emb_v).unwrap();
            let mut embed_grad = vec![0.0; dec.embed.len()];
            for (row, &i) in chunk.iter().enumerate() {
                let code = samples[i].code;
                for d in 0..cfg.d_par {
                    embed_grad[code * cfg.d_par + d] += demb[row * cfg.d_par + d];
                }
            }
            adam_step(&mut dec.embed, &embed_grad, &mut states[0], cfg.lr)?;

            let blocks: [(&mut Vec<f64>, Var); 8] = [
                (&mut dec.sw1, sw1),
                (&mut dec.sb1, sb1),
                (&mut dec.sw2, sw2),
                (&mut dec.sb2, sb2),
                (&mut dec.cw1, cw1),
                (&mut dec.cb1, cb1),
                (&mut dec.cw2, cw2),
                (&mut dec.cb2, cb2),
            ];
            for (bi, (block, var)) in blocks.into_iter().enumerate() {
                let grad = g.grad(var).unwrap().to_vec();
                adam_step(block, &grad, &mut states[bi + 1], cfg.lr)?;
            }
        }
    }

    // Reconstruction quality on the training multiset (clamped render).
    let probe = samples.len().min(512);
    let mut sq_sum = 0.0;
    let mut count = 0usize;
    for s in samples.iter().take(probe) {
        let z = FactorLatent::new(dec.code_latent(s.code).to_vec(), s.color.to_vec());
        let img = dec.decode(&z)?;
        for (a, b) in img.iter().zip(s.target) {
            sq_sum += (a - b) * (a - b);
        }
        count += img.len();
    }
    dec.train_rmse = (sq_sum / count as f64).sqrt();
    dec.sampler = ColorSampler::Palette {
        colors: dec.color_table.clone(),
        jitter_std: dec.jitter_std,
    };
    Ok(dec)
}

// ── checkpoint io ───────────────────────────────────────────────────────
// Layout: magic, then 8 little-endian i32 dims
// (d_par, shape_hidden, color_hidden, height, width, channels, n_codes,
// n_colors), then n_codes i32 glyph keys, then f64s: jitter_std, train_rmse,
// parameter blocks (embed, sw1, sb1, sw2, sb2, cw1, cb1, cw2, cb2), and the
// color table.

fn write_i32(buf: &mut Vec<u8>, v: i32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn write_f64s(buf: &mut Vec<u8>, vs: &[f64]) {
    for v in vs {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::Data(format!(
                "{}: truncated at byte {} (wanted {n} more)",
                self.path.display(),
                self.pos
            )));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

impl LearnedDecoder {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(DECODER_MAGIC);
        for v in [
            self.d_par,
            self.shape_hidden,
            self.color_hidden,
            self.height,
            self.width,
            3,
            self.n_codes,
            self.color_table.len(),
        ] {
            write_i32(&mut buf, v as i32);
        }
        for k in &self.glyph_keys {
            write_i32(&mut buf, *k);
        }
        write_f64s(&mut buf, &[self.jitter_std, self.train_rmse]);
        for block in [
            &self.embed, &self.sw1, &self.sb1, &self.sw2, &self.sb2, &self.cw1, &self.cb1,
            &self.cw2, &self.cb2,
        ] {
            write_f64s(&mut buf, block);
        }
        let flat: Vec<f64> = self.color_table.iter().flatten().copied().collect();
        write_f64s(&mut buf, &flat);

        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut data = Vec::new();
        fs::File::open(path)
            .map_err(|e| Error::io(path, e))?
            .read_to_end(&mut data)
            .map_err(|e| Error::io(path, e))?;
        let mut r = Reader {
            data: &data,
            pos: 0,
            path,
        };
        let magic = r.take(8)?;
        if magic != DECODER_MAGIC {
            return Err(Error::Data(format!(
                "{}: wrong magic at offset 0 (got {magic:?})",
                path.display()
            )));
        }
        let d_par = r.i32()? as usize;
        let shape_hidden = r.i32()? as usize;
        let color_hidden = r.i32()? as usize;
        let height = r.i32()? as usize;
        let width = r.i32()? as usize;
        let channels = r.i32()? as usize;
        if channels != 3 {
            return Err(Error::Data(format!(
                "{}: unsupported channel count {channels}",
                path.display()
            )));
        }
        let n_codes = r.i32()? as usize;
        let n_colors = r.i32()? as usize;
        let mut glyph_keys = Vec::with_capacity(n_codes);
        for _ in 0..n_codes {
            glyph_keys.push(r.i32()?);
        }
        let jitter_std = r.f64()?;
        let train_rmse = r.f64()?;
        let hw = height * width;
        let embed = r.f64s(n_codes * d_par)?;
        let sw1 = r.f64s(d_par * shape_hidden)?;
        let sb1 = r.f64s(shape_hidden)?;
        let sw2 = r.f64s(shape_hidden * hw)?;
        let sb2 = r.f64s(hw)?;
        let cw1 = r.f64s(3 * color_hidden)?;
        let cb1 = r.f64s(color_hidden)?;
        let cw2 = r.f64s(color_hidden * 3)?;
        let cb2 = r.f64s(3)?;
        let flat = r.f64s(n_colors * 3)?;
        let color_table: Vec<[f64; 3]> = flat
            .chunks_exact(3)
            .map(|c| [c[0], c[1], c[2]])
            .collect();
        Ok(LearnedDecoder {
            d_par,
            height,
            width,
            shape_hidden,
            color_hidden,
            n_codes,
            glyph_keys,
            embed,
            sw1,
            sb1,
            sw2,
            sb2,
            cw1,
            cb1,
            cw2,
            cb2,
            sampler: ColorSampler::Palette {
                colors: color_table.clone(),
                jitter_std,
            },
            color_table,
            jitter_std,
            train_rmse,
        })
    }
}

/// Convenience used by pipelines: an `Arc`ed decoder is shared read-only by
/// parallel attack workers.
pub type SharedDecoder = Arc<dyn Decoder>;
