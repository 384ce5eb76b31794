//! Dataset construction: IDX ingestion, a built-in synthetic glyph corpus,
//! colorization with a tunable bias knob, biased resampling profiles for
//! decoder training, the 2-D toy dataset, and the binary dataset cache.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::generators::{
    ColorSampler, FactorLatent, ProceduralGlyphDecoder, ToyDecoder, TOY_Z_PERP,
};

pub const DATASET_MAGIC: &[u8; 8] = b"ADVMIXX1";
pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Grayscale glyphs with labels; pixels in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct GrayDataset {
    pub images: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub rows: usize,
    pub cols: usize,
}

impl GrayDataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

// ── IDX format ──────────────────────────────────────────────────────────

fn read_u32_be(data: &[u8], offset: usize, path: &Path) -> Result<u32> {
    if offset + 4 > data.len() {
        return Err(Error::Data(format!(
            "{}: truncated at byte {offset} (need 4 bytes)",
            path.display()
        )));
    }
    Ok(u32::from_be_bytes(data[offset..offset + 4].try_into().unwrap()))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    fs::File::open(path)
        .map_err(|e| Error::io(path, e))?
        .read_to_end(&mut buf)
        .map_err(|e| Error::io(path, e))?;
    Ok(buf)
}

/// Parse the classic big-endian IDX pair: images (magic 0x00000803, then
/// count/rows/cols and raw bytes) and labels (magic 0x00000801, then count
/// and raw bytes). Bytes are scaled to `[0, 1]` by division by 255.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<GrayDataset> {
    let img_raw = read_file(images_path)?;
    let lbl_raw = read_file(labels_path)?;

    let magic = read_u32_be(&img_raw, 0, images_path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Data(format!(
            "{}: wrong magic {magic:#010x} at offset 0, expected {IDX_IMAGES_MAGIC:#010x}",
            images_path.display()
        )));
    }
    let count = read_u32_be(&img_raw, 4, images_path)? as usize;
    let rows = read_u32_be(&img_raw, 8, images_path)? as usize;
    let cols = read_u32_be(&img_raw, 12, images_path)? as usize;
    let need = 16 + count * rows * cols;
    if img_raw.len() < need {
        return Err(Error::Data(format!(
            "{}: truncated at byte {} ({} pixel bytes expected)",
            images_path.display(),
            img_raw.len(),
            count * rows * cols
        )));
    }

    let lmagic = read_u32_be(&lbl_raw, 0, labels_path)?;
    if lmagic != IDX_LABELS_MAGIC {
        return Err(Error::Data(format!(
            "{}: wrong magic {lmagic:#010x} at offset 0, expected {IDX_LABELS_MAGIC:#010x}",
            labels_path.display()
        )));
    }
    let lcount = read_u32_be(&lbl_raw, 4, labels_path)? as usize;
    if lcount != count {
        return Err(Error::Data(format!(
            "label count {lcount} does not match image count {count} (offset 4)"
        )));
    }
    if lbl_raw.len() < 8 + count {
        return Err(Error::Data(format!(
            "{}: truncated at byte {} ({count} label bytes expected)",
            labels_path.display(),
            lbl_raw.len()
        )));
    }

    let mut images = Vec::with_capacity(count);
    for i in 0..count {
        let start = 16 + i * rows * cols;
        images.push(
            img_raw[start..start + rows * cols]
                .iter()
                .map(|&b| f64::from(b) / 255.0)
                .collect(),
        );
    }
    let labels: Vec<usize> = lbl_raw[8..8 + count].iter().map(|&b| b as usize).collect();
    Ok(GrayDataset {
        images,
        labels,
        rows,
        cols,
    })
}

// ── synthetic glyph corpus ──────────────────────────────────────────────

// Seven-segment endpoints on a 28×28 canvas.
const SEGMENTS: [((f64, f64), (f64, f64)); 7] = [
    ((8.0, 5.0), (20.0, 5.0)),    // A: top
    ((20.0, 5.0), (20.0, 14.0)),  // B: top right
    ((20.0, 14.0), (20.0, 23.0)), // C: bottom right
    ((8.0, 23.0), (20.0, 23.0)),  // D: bottom
    ((8.0, 14.0), (8.0, 23.0)),   // E: bottom left
    ((8.0, 5.0), (8.0, 14.0)),    // F: top left
    ((8.0, 14.0), (20.0, 14.0)),  // G: middle
];

const DIGIT_SEGMENTS: [&[usize]; 10] = [
    &[0, 1, 2, 3, 4, 5],    // 0
    &[1, 2],                // 1
    &[0, 1, 6, 4, 3],       // 2
    &[0, 1, 6, 2, 3],       // 3
    &[5, 6, 1, 2],          // 4
    &[0, 5, 6, 2, 3],       // 5
    &[0, 5, 6, 4, 3, 2],    // 6
    &[0, 1, 2],             // 7
    &[0, 1, 2, 3, 4, 5, 6], // 8
    &[0, 1, 2, 3, 5, 6],    // 9
];

fn dist_to_segment(px: f64, py: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    let (ax, ay) = a;
    let (bx, by) = b;
    let (dx, dy) = (bx - ax, by - ay);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((px - ax) * dx + (py - ay) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (ax + t * dx, ay + t * dy);
    ((px - cx) * (px - cx) + (py - cy) * (py - cy)).sqrt()
}

/// Deterministic handwriting-like digit corpus: jittered seven-segment
/// strokes with varying thickness and intensity, an occasional distractor
/// stroke, and pixel noise. Classes are shape-separable but not trivially so.
pub fn synth_glyphs(n_per_class: usize, rng: &mut ChaCha8Rng) -> GrayDataset {
    let side = 28;
    let noise = Normal::new(0.0, 0.06).unwrap();
    let mut images = Vec::with_capacity(n_per_class * 10);
    let mut labels = Vec::with_capacity(n_per_class * 10);
    for digit in 0..10 {
        for _ in 0..n_per_class {
            let shift_x: f64 = rng.gen_range(-2.0..2.0);
            let shift_y: f64 = rng.gen_range(-2.0..2.0);
            let thickness: f64 = rng.gen_range(1.2..2.3);
            let intensity: f64 = rng.gen_range(0.75..1.0);

            let mut strokes: Vec<((f64, f64), (f64, f64))> = DIGIT_SEGMENTS[digit]
                .iter()
                .map(|&s| {
                    let ((ax, ay), (bx, by)) = SEGMENTS[s];
                    (
                        (
                            ax + shift_x + rng.gen_range(-1.2..1.2),
                            ay + shift_y + rng.gen_range(-1.2..1.2),
                        ),
                        (
                            bx + shift_x + rng.gen_range(-1.2..1.2),
                            by + shift_y + rng.gen_range(-1.2..1.2),
                        ),
                    )
                })
                .collect();
            // Occasional short distractor stroke; keeps shapes from being a
            // plain segment-occupancy code.
            if rng.gen_bool(0.3) {
                let cx = rng.gen_range(6.0..22.0);
                let cy = rng.gen_range(6.0..22.0);
                let ex = cx + rng.gen_range(-4.0..4.0);
                let ey = cy + rng.gen_range(-4.0..4.0);
                strokes.push(((cx, cy), (ex, ey)));
            }

            let mut img = vec![0.0; side * side];
            for (a, b) in &strokes {
                let min_x = (a.0.min(b.0) - thickness - 1.5).floor().max(0.0) as usize;
                let max_x = (a.0.max(b.0) + thickness + 1.5).ceil().min(27.0) as usize;
                let min_y = (a.1.min(b.1) - thickness - 1.5).floor().max(0.0) as usize;
                let max_y = (a.1.max(b.1) + thickness + 1.5).ceil().min(27.0) as usize;
                for y in min_y..=max_y {
                    for x in min_x..=max_x {
                        let d = dist_to_segment(x as f64, y as f64, *a, *b);
                        let v = intensity * ((thickness - d) + 0.5).clamp(0.0, 1.0);
                        let px = &mut img[y * side + x];
                        if v > *px {
                            *px = v;
                        }
                    }
                }
            }
            for px in &mut img {
                *px = (*px + noise.sample(rng)).clamp(0.0, 1.0);
            }
            images.push(img);
            labels.push(digit);
        }
    }
    GrayDataset {
        images,
        labels,
        rows: side,
        cols: side,
    }
}

// ── colorization ────────────────────────────────────────────────────────

/// Ten maximally separated class colors: HSV hues k/10 at full saturation
/// and value.
pub fn palette_means() -> [[f64; 3]; 10] {
    let mut out = [[0.0; 3]; 10];
    for (k, slot) in out.iter_mut().enumerate() {
        *slot = hsv_to_rgb(k as f64 / 10.0, 1.0, 1.0);
    }
    out
}

pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let sector = (h6.floor() as usize) % 6;
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

/// How example colors are drawn at dataset build time.
#[derive(Debug, Clone)]
pub enum ColorSpec {
    /// Class-correlated palette: `clamp01(μ_y + σ·N(0, I₃))`. σ = 0 pins
    /// every class to its mean color; larger σ debiases.
    GaussianPalette { means: [[f64; 3]; 10], sigma: f64 },
    /// Pure red/green/blue with the given probabilities.
    RgbRestricted { weights: [f64; 3] },
    /// Uniform over the color cube; the unbiased test-set convention.
    UniformRandom,
}

impl ColorSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ColorSpec::GaussianPalette { means, sigma } => {
                if !sigma.is_finite() || *sigma < 0.0 {
                    return Err(Error::Config(format!("sigma must be ≥ 0, got {sigma}")));
                }
                for m in means {
                    if m.iter().any(|v| !(0.0..=1.0).contains(v)) {
                        return Err(Error::Config(format!("palette color {m:?} outside [0,1]")));
                    }
                }
            }
            ColorSpec::RgbRestricted { weights } => {
                if weights.iter().any(|w| *w < 0.0)
                    || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9
                {
                    return Err(Error::Config(format!(
                        "rgb weights must be non-negative and sum to 1, got {weights:?}"
                    )));
                }
            }
            ColorSpec::UniformRandom => {}
        }
        Ok(())
    }

    fn draw(&self, label: usize, rng: &mut ChaCha8Rng) -> [f64; 3] {
        match self {
            ColorSpec::GaussianPalette { means, sigma } => {
                let m = means[label];
                if *sigma == 0.0 {
                    return m;
                }
                let normal = Normal::new(0.0, *sigma).unwrap();
                [
                    (m[0] + normal.sample(rng)).clamp(0.0, 1.0),
                    (m[1] + normal.sample(rng)).clamp(0.0, 1.0),
                    (m[2] + normal.sample(rng)).clamp(0.0, 1.0),
                ]
            }
            ColorSpec::RgbRestricted { weights } => {
                let u: f64 = rng.gen_range(0.0..1.0);
                let idx = if u < weights[0] {
                    0
                } else if u < weights[0] + weights[1] {
                    1
                } else {
                    2
                };
                crate::generators::RGB_BASE_COLORS[idx]
            }
            ColorSpec::UniformRandom => [
                rng.gen_range(0.0..1.0),
                rng.gen_range(0.0..1.0),
                rng.gen_range(0.0..1.0),
            ],
        }
    }
}

/// One colorized glyph together with its ground-truth factors. The image is
/// exactly the procedural render of `(glyph_index, color)`.
#[derive(Debug, Clone)]
pub struct ColoredExample {
    pub image: Vec<f64>,
    pub label: usize,
    pub glyph_index: usize,
    pub color: [f64; 3],
}

impl ColoredExample {
    pub fn latent(&self) -> FactorLatent {
        FactorLatent::new(vec![self.glyph_index as f64], self.color.to_vec())
    }
}

/// Colorized dataset plus the padded glyph bank it renders from.
pub struct ColoredDataset {
    pub examples: Vec<ColoredExample>,
    pub glyphs: Arc<Vec<Vec<f64>>>,
    pub height: usize,
    pub width: usize,
}

impl ColoredDataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Procedural decoder over this dataset's glyph bank.
    pub fn decoder(&self, sampler: ColorSampler) -> Result<ProceduralGlyphDecoder> {
        ProceduralGlyphDecoder::new(Arc::clone(&self.glyphs), self.height, self.width, sampler)
    }

    /// The multiset of example colors, e.g. for palette samplers.
    pub fn color_table(&self) -> Vec<[f64; 3]> {
        self.examples.iter().map(|e| e.color).collect()
    }
}

/// Zero-pad a glyph into the center of a `size×size` canvas.
fn pad_glyph(img: &[f64], rows: usize, cols: usize, size: usize) -> Vec<f64> {
    let off_r = (size - rows) / 2;
    let off_c = (size - cols) / 2;
    let mut out = vec![0.0; size * size];
    for r in 0..rows {
        for c in 0..cols {
            out[(r + off_r) * size + (c + off_c)] = img[r * cols + c];
        }
    }
    out
}

pub const CANVAS_SIZE: usize = 32;

/// Colorize a grayscale corpus: pad every glyph to the 32×32 canvas, draw a
/// color per example according to `spec`, render procedurally, and record
/// (glyph, color) provenance.
pub fn colorize(
    gray: &GrayDataset,
    spec: &ColorSpec,
    rng: &mut ChaCha8Rng,
) -> Result<ColoredDataset> {
    spec.validate()?;
    if gray.is_empty() {
        return Err(Error::Data("cannot colorize an empty dataset".into()));
    }
    if gray.rows > CANVAS_SIZE || gray.cols > CANVAS_SIZE {
        return Err(Error::Data(format!(
            "glyphs of {}×{} exceed the {CANVAS_SIZE}×{CANVAS_SIZE} canvas",
            gray.rows, gray.cols
        )));
    }
    let glyphs: Arc<Vec<Vec<f64>>> = Arc::new(
        gray.images
            .iter()
            .map(|img| pad_glyph(img, gray.rows, gray.cols, CANVAS_SIZE))
            .collect(),
    );
    let dec = ProceduralGlyphDecoder::new(
        Arc::clone(&glyphs),
        CANVAS_SIZE,
        CANVAS_SIZE,
        ColorSampler::UniformBox,
    )?;
    let mut examples = Vec::with_capacity(gray.len());
    for (i, &label) in gray.labels.iter().enumerate() {
        if label >= 10 {
            return Err(Error::Data(format!(
                "label {label} at index {i} out of range"
            )));
        }
        let color = spec.draw(label, rng);
        examples.push(ColoredExample {
            image: dec.render(i, &color),
            label,
            glyph_index: i,
            color,
        });
    }
    Ok(ColoredDataset {
        examples,
        glyphs,
        height: CANVAS_SIZE,
        width: CANVAS_SIZE,
    })
}

// ── decoder-training bias profiles ──────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BiasProfile {
    Unbiased,
    LessBiased,
    MoreBiased,
}

impl BiasProfile {
    pub fn name(self) -> &'static str {
        match self {
            BiasProfile::Unbiased => "unbiased",
            BiasProfile::LessBiased => "less_biased",
            BiasProfile::MoreBiased => "more_biased",
        }
    }
}

/// Resample the example multiset to emphasize certain classes: "more biased"
/// is 90% class 0 with the rest uniform over 1–9; "less biased" is 45% class
/// 0, 45% class 1, 10% uniform over 2–9. Total count is preserved; the
/// unbiased profile returns the input as-is.
pub fn decoder_bias_subset(
    colored: &[ColoredExample],
    profile: BiasProfile,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<ColoredExample>> {
    if colored.is_empty() {
        return Err(Error::Data("cannot resample an empty dataset".into()));
    }
    if profile == BiasProfile::Unbiased {
        return Ok(colored.to_vec());
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); 10];
    for (i, ex) in colored.iter().enumerate() {
        by_class[ex.label].push(i);
    }
    let draw_class = |rng: &mut ChaCha8Rng| -> usize {
        let u: f64 = rng.gen_range(0.0..1.0);
        match profile {
            BiasProfile::MoreBiased => {
                if u < 0.9 {
                    0
                } else {
                    1 + rng.gen_range(0..9)
                }
            }
            BiasProfile::LessBiased => {
                if u < 0.45 {
                    0
                } else if u < 0.9 {
                    1
                } else {
                    2 + rng.gen_range(0..8)
                }
            }
            BiasProfile::Unbiased => unreachable!(),
        }
    };
    let mut out = Vec::with_capacity(colored.len());
    for _ in 0..colored.len() {
        let class = draw_class(rng);
        let pool = &by_class[class];
        if pool.is_empty() {
            return Err(Error::Data(format!(
                "bias profile {} needs class {class}, which is absent",
                profile.name()
            )));
        }
        out.push(colored[pool[rng.gen_range(0..pool.len())]].clone());
    }
    Ok(out)
}

// ── toy dataset ─────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct ToyDataset {
    pub points: Vec<(f64, f64)>,
    pub labels: Vec<usize>,
    /// Ground truth: `z_par = 20·y` exactly.
    pub z_par: Vec<f64>,
    pub z_perp: Vec<f64>,
}

impl ToyDataset {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn make_toy(n: usize, rng: &mut ChaCha8Rng) -> Result<ToyDataset> {
    if n == 0 {
        return Err(Error::Data("toy dataset needs at least one point".into()));
    }
    let toy = ToyDecoder;
    let mut out = ToyDataset {
        points: Vec::with_capacity(n),
        labels: Vec::with_capacity(n),
        z_par: Vec::with_capacity(n),
        z_perp: Vec::with_capacity(n),
    };
    for _ in 0..n {
        let y = usize::from(rng.gen_bool(0.5));
        let z_par = 20.0 * y as f64;
        let z_perp = TOY_Z_PERP[rng.gen_range(0..2)];
        let (x1, x2) = toy.decode(&FactorLatent::new(vec![z_par], vec![z_perp]), rng);
        out.points.push((x1, x2));
        out.labels.push(y);
        out.z_par.push(z_par);
        out.z_perp.push(z_perp);
    }
    Ok(out)
}

// ── provenance lookup ───────────────────────────────────────────────────

/// Index from rendered image bytes back to the factors that produced them;
/// the closed-form inverse of the procedural decoder for dataset images.
pub struct ProvenanceIndex {
    map: HashMap<u64, Vec<(usize, [f64; 3])>>,
}

fn image_fingerprint(image: &[f64]) -> u64 {
    // FNV-1a over the raw f64 bit patterns.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in image {
        for b in v.to_bits().to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

impl ProvenanceIndex {
    pub fn build(examples: &[ColoredExample]) -> Self {
        let mut map: HashMap<u64, Vec<(usize, [f64; 3])>> = HashMap::new();
        for ex in examples {
            map.entry(image_fingerprint(&ex.image))
                .or_default()
                .push((ex.glyph_index, ex.color));
        }
        ProvenanceIndex { map }
    }

    /// Exact factors for a dataset image; images that did not come from the
    /// dataset builder have no provenance and must go through the
    /// optimization-based encoder instead.
    pub fn lookup(&self, image: &[f64]) -> Result<FactorLatent> {
        let candidates = self.map.get(&image_fingerprint(image)).ok_or_else(|| {
            Error::Data(
                "image has no recorded provenance; use the optimization encoder for \
                 out-of-dataset images"
                    .into(),
            )
        })?;
        let (glyph, color) = candidates[0];
        Ok(FactorLatent::new(vec![glyph as f64], color.to_vec()))
    }
}

// ── binary dataset cache ────────────────────────────────────────────────

pub fn save_colored(ds: &ColoredDataset, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(DATASET_MAGIC);
    for v in [
        ds.examples.len() as i32,
        ds.height as i32,
        ds.width as i32,
        3i32,
        ds.glyphs.len() as i32,
    ] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for gl in ds.glyphs.iter() {
        for v in gl {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    for ex in &ds.examples {
        buf.extend_from_slice(&(ex.label as i32).to_le_bytes());
        for v in ex.color {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&(ex.glyph_index as i32).to_le_bytes());
        for v in &ex.image {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn load_colored(path: &Path) -> Result<ColoredDataset> {
    let data = read_file(path)?;
    if data.len() < 8 || &data[..8] != DATASET_MAGIC {
        return Err(Error::Data(format!(
            "{}: wrong magic at offset 0",
            path.display()
        )));
    }
    let mut pos = 8usize;
    let take_i32 = |pos: &mut usize| -> Result<i32> {
        if *pos + 4 > data.len() {
            return Err(Error::Data(format!(
                "{}: truncated at byte {pos}",
                path.display()
            )));
        }
        let v = i32::from_le_bytes(data[*pos..*pos + 4].try_into().unwrap());
        *pos += 4;
        Ok(v)
    };
    let count = take_i32(&mut pos)? as usize;
    let height = take_i32(&mut pos)? as usize;
    let width = take_i32(&mut pos)? as usize;
    let channels = take_i32(&mut pos)? as usize;
    let n_glyphs = take_i32(&mut pos)? as usize;
    if channels != 3 {
        return Err(Error::Data(format!(
            "{}: unsupported channel count {channels}",
            path.display()
        )));
    }
    let take_f64s = |pos: &mut usize, n: usize| -> Result<Vec<f64>> {
        if *pos + 8 * n > data.len() {
            return Err(Error::Data(format!(
                "{}: truncated at byte {pos}",
                path.display()
            )));
        }
        let out = data[*pos..*pos + 8 * n]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        *pos += 8 * n;
        Ok(out)
    };
    let hw = height * width;
    let mut glyphs = Vec::with_capacity(n_glyphs);
    for _ in 0..n_glyphs {
        glyphs.push(take_f64s(&mut pos, hw)?);
    }
    let mut examples = Vec::with_capacity(count);
    for _ in 0..count {
        let label = take_i32(&mut pos)? as usize;
        let c = take_f64s(&mut pos, 3)?;
        let glyph_index = take_i32(&mut pos)? as usize;
        let image = take_f64s(&mut pos, hw * 3)?;
        examples.push(ColoredExample {
            image,
            label,
            glyph_index,
            color: [c[0], c[1], c[2]],
        });
    }
    Ok(ColoredDataset {
        examples,
        glyphs: Arc::new(glyphs),
        height,
        width,
    })
}

#[cfg(test)]
#[path = "data_tests.rs"]
mod tests;
