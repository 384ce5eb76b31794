use std::sync::Arc;

use super::*;
use crate::autodiff::gradcheck::{central_diff, check_close};
use crate::autodiff::Graph;
use crate::rng;
use rand::Rng;

fn test_glyphs(n: usize, side: usize, seed: u64) -> Arc<Vec<Vec<f64>>> {
    let mut r = rng::stream(seed, "test-glyphs");
    Arc::new(
        (0..n)
            .map(|_| (0..side * side).map(|_| r.gen_range(0.0..1.0)).collect())
            .collect(),
    )
}

fn procedural(seed: u64) -> ProceduralGlyphDecoder {
    ProceduralGlyphDecoder::new(test_glyphs(5, 4, seed), 4, 4, ColorSampler::UniformBox).unwrap()
}

#[test]
fn pure_red_keeps_gray_structure_in_red_channel() {
    let dec = procedural(1);
    let img = dec
        .decode(&FactorLatent::new(vec![2.0], vec![1.0, 0.0, 0.0]))
        .unwrap();
    let glyph = dec.glyph(2);
    for (i, &g) in glyph.iter().enumerate() {
        assert_eq!(img[i * 3], g);
        assert_eq!(img[i * 3 + 1], 0.0);
        assert_eq!(img[i * 3 + 2], 0.0);
    }
}

#[test]
fn black_color_gives_black_image() {
    let dec = procedural(2);
    let img = dec
        .decode(&FactorLatent::new(vec![0.0], vec![0.0, 0.0, 0.0]))
        .unwrap();
    assert!(img.iter().all(|&v| v == 0.0));
}

#[test]
fn glyph_index_out_of_range_is_error() {
    let dec = procedural(3);
    assert!(dec
        .decode(&FactorLatent::new(vec![7.0], vec![0.5; 3]))
        .is_err());
    assert!(dec
        .decode(&FactorLatent::new(vec![0.0, 1.0], vec![0.5; 3]))
        .is_err());
}

#[test]
fn mixing_with_own_perp_is_identity() {
    let dec = procedural(4);
    let za = FactorLatent::new(vec![1.0], vec![0.3, 0.8, 0.1]);
    let zb = FactorLatent::new(vec![3.0], vec![0.3, 0.8, 0.1]);
    assert_eq!(mix(&dec, &za, &zb).unwrap(), dec.decode(&za).unwrap());
}

#[test]
fn mixing_transfers_color_exactly() {
    let dec = procedural(5);
    let za = FactorLatent::new(vec![1.0], vec![0.9, 0.2, 0.4]);
    let zb = FactorLatent::new(vec![4.0], vec![0.1, 0.7, 0.5]);
    let mixed = mix(&dec, &za, &zb).unwrap();
    let glyph = dec.glyph(1);
    for (i, &g) in glyph.iter().enumerate() {
        for ch in 0..3 {
            assert_eq!(mixed[i * 3 + ch], (g * zb.z_perp[ch]).clamp(0.0, 1.0));
        }
    }
}

/// z_par and z_perp never interact: rendering (i, c) equals mixing any
/// (i, c0) with (·, c), bit for bit.
#[test]
fn mixing_consistency_is_bitwise() {
    let dec = procedural(6);
    let mut r = rng::stream(6, "mixing");
    for _ in 0..100 {
        let i = r.gen_range(0..5) as f64;
        let c: Vec<f64> = (0..3).map(|_| r.gen_range(0.0..1.0)).collect();
        let c0: Vec<f64> = (0..3).map(|_| r.gen_range(0.0..1.0)).collect();
        let direct = dec.decode(&FactorLatent::new(vec![i], c.clone())).unwrap();
        let mixed = mix(
            &dec,
            &FactorLatent::new(vec![i], c0.clone()),
            &FactorLatent::new(vec![0.0], c.clone()),
        )
        .unwrap();
        assert_eq!(direct, mixed);
    }
}

#[test]
fn toy_mixing_shifts_only_x1_distribution() {
    let toy = ToyDecoder;
    let mut r = rng::stream(8, "toy-mix");
    let za = FactorLatent::new(vec![0.0], vec![0.0]);
    let zb = FactorLatent::new(vec![20.0], vec![10.0]);
    let n = 10_000;
    let (mut s1, mut s2, mut q1) = (0.0, 0.0, 0.0);
    for _ in 0..n {
        let (x1, x2) = toy.mix(&za, &zb, &mut r);
        s1 += x1;
        s2 += x2;
        q1 += x1 * x1;
    }
    let nf = n as f64;
    let mean1 = s1 / nf;
    let mean2 = s2 / nf;
    let var1 = q1 / nf - mean1 * mean1;
    // x1 takes zb's perp (10) with σ=√3; x2 keeps za's par (0) with σ=1.
    let se_mean1 = TOY_X1_STD / nf.sqrt();
    let se_mean2 = TOY_X2_STD / nf.sqrt();
    let se_var1 = TOY_X1_STD * TOY_X1_STD * (2.0 / nf).sqrt();
    assert!((mean1 - 10.0).abs() < 3.0 * se_mean1, "mean1={mean1}");
    assert!((mean2 - 0.0).abs() < 3.0 * se_mean2, "mean2={mean2}");
    assert!(
        (var1 - 3.0).abs() < 3.0 * se_var1,
        "var1={var1} (3 SE = {})",
        3.0 * se_var1
    );
}

#[test]
fn rgb_sampler_is_uniform_when_unweighted() {
    let dec = procedural(9).with_sampler(ColorSampler::Rgb {
        weights: [1.0 / 3.0; 3],
    });
    let mut r = rng::stream(9, "rgb-uniform");
    let mut counts = [0usize; 3];
    let n = 10_000;
    for _ in 0..n {
        let c = dec.sample_perp(&mut r);
        let idx = RGB_BASE_COLORS.iter().position(|b| b.as_slice() == c).unwrap();
        counts[idx] += 1;
    }
    for &cnt in &counts {
        let freq = cnt as f64 / n as f64;
        assert!((freq - 1.0 / 3.0).abs() < 0.02, "freq={freq}");
    }
}

#[test]
fn heavily_red_palette_reproduces_its_bias() {
    // Empirical table with exactly 99.9% red entries.
    let mut colors = vec![[1.0, 0.0, 0.0]; 999];
    colors.push([0.0, 1.0, 0.0]);
    let sampler = ColorSampler::Palette {
        colors,
        jitter_std: 0.0,
    };
    let mut r = rng::stream(10, "red-bias");
    let n = 100_000;
    let mut red = 0usize;
    for _ in 0..n {
        if sampler.sample(&mut r)[0] == 1.0 {
            red += 1;
        }
    }
    let freq = red as f64 / n as f64;
    assert!((freq - 0.999).abs() < 0.002, "red frequency {freq}");
}

#[test]
fn palette_jitter_stays_within_five_sigma() {
    let base = [0.5, 0.25, 0.75];
    let sampler = ColorSampler::Palette {
        colors: vec![base],
        jitter_std: 0.02,
    };
    let mut r = rng::stream(11, "jitter");
    let cap = PALETTE_JITTER_TRUNC * 0.02;
    for _ in 0..10_000 {
        let c = sampler.sample(&mut r);
        for ch in 0..3 {
            assert!((c[ch] - base[ch]).abs() <= cap + 1e-12);
            assert!((0.0..=1.0).contains(&c[ch]));
        }
    }
}

#[test]
fn shell_check_on_worked_examples() {
    // Shell center is always inside.
    let d = 512;
    let v = (512.0_f64).sqrt() / (d as f64).sqrt();
    let z = vec![v; d];
    assert!(typical_shell_check(&z, 1e-9));

    // ‖z‖ = 25 against √512 + 0.5·512^{1/4}: evaluate the bound itself
    // instead of trusting prose arithmetic.
    let upper = (512.0_f64).sqrt() + 0.5 * (512.0_f64).powf(0.25);
    let expect = 25.0 <= upper && 25.0 >= (512.0_f64).sqrt() - 0.5 * (512.0_f64).powf(0.25);
    let z25: Vec<f64> = {
        let scale = 25.0 / (512.0_f64).sqrt();
        vec![scale; 512]
    };
    assert_eq!(typical_shell_check(&z25, 0.5), expect);
    assert!(expect, "25.0 lies inside the δ=0.5 shell for d=512");

    // d=1, δ=0.5: the shell is [0.5, 1.5], so 2.0 is outside.
    assert!(!typical_shell_check(&[2.0], 0.5));
}

#[test]
fn projection_worked_examples() {
    let region = PerpRegion::new(vec![0.5], 0.03).unwrap();
    assert_eq!(project_perp(&[0.49], &region).unwrap(), vec![0.49]);
    assert_eq!(project_perp(&[0.55], &region).unwrap(), vec![0.53]);
}

#[test]
fn projection_is_idempotent_and_bounded() {
    let mut r = rng::stream(12, "proj");
    for _ in 0..10_000 {
        let dim = r.gen_range(1..5);
        let center: Vec<f64> = (0..dim).map(|_| r.gen_range(0.1..0.9)).collect();
        let eps = r.gen_range(1e-3..0.5);
        let mut region = PerpRegion::new(center.clone(), eps).unwrap();
        if r.gen_bool(0.5) {
            region = region.with_box(vec![0.0; dim], vec![1.0; dim]).unwrap();
        }
        let z: Vec<f64> = (0..dim).map(|_| r.gen_range(-2.0..2.0)).collect();
        let p1 = project_perp(&z, &region).unwrap();
        let p2 = project_perp(&p1, &region).unwrap();
        assert_eq!(
            p1.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            p2.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        for i in 0..dim {
            assert!((p1[i] - center[i]).abs() <= eps + 1e-12);
        }
    }
}

#[test]
fn procedural_gradient_matches_finite_differences_at_interior_colors() {
    let dec = procedural(13);
    let mut r = rng::stream(13, "proc-grad");
    for _ in 0..5 {
        let idx = r.gen_range(0..5) as f64;
        let color: Vec<f64> = (0..3).map(|_| r.gen_range(0.05..0.95)).collect();
        let run = |c: &[f64]| -> crate::error::Result<(f64, Vec<f64>)> {
            let mut g = Graph::new();
            let z = g.param(crate::autodiff::Tensor::matrix(1, 3, c.to_vec())?);
            let img = decode_graph(&dec, &mut g, &[idx], z)?;
            let sq = g.square(img)?;
            let loss = g.mean(sq)?;
            let v = g.data(loss)[0];
            g.backward(loss)?;
            Ok((v, g.grad(z).unwrap().to_vec()))
        };
        let (_, analytic) = run(&color).unwrap();
        let numeric = central_diff(|c| run(c).map(|t| t.0), &color, 1e-5).unwrap();
        check_close(&analytic, &numeric, 1e-4, 1e-6).unwrap();
    }
}

#[test]
fn graph_decode_matches_plain_decode() {
    let dec = procedural(14);
    let z = FactorLatent::new(vec![3.0], vec![0.2, 0.6, 0.9]);
    let plain = dec.decode(&z).unwrap();
    let mut g = Graph::new();
    let zv = g.leaf(crate::autodiff::Tensor::matrix(1, 3, z.z_perp.clone()).unwrap());
    let img = decode_graph(&dec, &mut g, &z.z_par, zv).unwrap();
    assert_eq!(g.data(img), plain.as_slice());
}

fn tiny_learned(seed: u64) -> (ProceduralGlyphDecoder, LearnedDecoder, Vec<(usize, [f64; 3])>) {
    let side = 8;
    let glyphs = test_glyphs(6, side, seed);
    let proc_dec =
        ProceduralGlyphDecoder::new(Arc::clone(&glyphs), side, side, ColorSampler::UniformBox)
            .unwrap();
    let mut r = rng::stream(seed, "tiny-learned-data");
    let mut keys = Vec::new();
    let mut pairs = Vec::new();
    let mut targets = Vec::new();
    for code in 0..6 {
        keys.push(code as i32);
        for _ in 0..24 {
            let color = [
                r.gen_range(0.0..1.0),
                r.gen_range(0.0..1.0),
                r.gen_range(0.0..1.0),
            ];
            targets.push(proc_dec.render(code, &color));
            pairs.push((code, color));
        }
    }
    let samples: Vec<ImitationSample<'_>> = pairs
        .iter()
        .zip(&targets)
        .map(|(&(code, color), t)| ImitationSample {
            code,
            color,
            target: t,
        })
        .collect();
    let cfg = DecoderTrainConfig {
        d_par: 4,
        shape_hidden: 48,
        color_hidden: 12,
        epochs: 120,
        batch: 24,
        lr: 3e-3,
        jitter_std: 0.02,
        seed,
    };
    let learned = train_learned_decoder(6, keys, side, side, &samples, &cfg).unwrap();
    (proc_dec, learned, pairs)
}

#[test]
fn learned_decoder_imitates_within_recorded_tolerance() {
    let (proc_dec, learned, pairs) = tiny_learned(21);
    let tol = learned.train_rmse();
    assert!(tol.is_finite() && tol < 0.15, "training rmse too high: {tol}");

    // Fresh in-distribution factor pairs: trained codes, uniform colors.
    let mut r = rng::stream(22, "holdout-colors");
    let mut sq = 0.0;
    let mut n = 0usize;
    for code in 0..6 {
        for _ in 0..8 {
            let color = [
                r.gen_range(0.0..1.0),
                r.gen_range(0.0..1.0),
                r.gen_range(0.0..1.0),
            ];
            let z = FactorLatent::new(learned.code_latent(code).to_vec(), color.to_vec());
            let img = learned.decode(&z).unwrap();
            let want = proc_dec.render(code, &color);
            for (a, b) in img.iter().zip(&want) {
                sq += (a - b) * (a - b);
            }
            n += img.len();
        }
    }
    let rmse = (sq / n as f64).sqrt();
    assert!(
        rmse <= 1.5 * tol.max(0.02),
        "held-out rmse {rmse} vs train tolerance {tol}"
    );
    let _ = pairs;
}

#[test]
fn learned_sampler_draws_from_recorded_colors() {
    let (_, learned, pairs) = tiny_learned(23);
    let mut r = rng::stream(23, "learned-sample");
    let cap = PALETTE_JITTER_TRUNC * 0.02;
    for _ in 0..2000 {
        let c = learned.sample_perp(&mut r);
        let close = pairs
            .iter()
            .any(|(_, base)| (0..3).all(|ch| (c[ch] - base[ch]).abs() <= cap + 1e-12));
        assert!(close, "draw {c:?} not near any recorded color");
    }
}

#[test]
fn learned_checkpoint_round_trips_bitwise() {
    let (_, learned, _) = tiny_learned(25);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dec.bin");
    learned.save(&path).unwrap();
    let loaded = LearnedDecoder::load(&path).unwrap();

    assert_eq!(learned.train_rmse().to_bits(), loaded.train_rmse().to_bits());
    assert_eq!(learned.n_codes(), loaded.n_codes());
    for code in 0..learned.n_codes() {
        assert_eq!(learned.code_latent(code), loaded.code_latent(code));
        assert_eq!(learned.glyph_key(code), loaded.glyph_key(code));
    }
    let z = FactorLatent::new(learned.code_latent(2).to_vec(), vec![0.3, 0.9, 0.1]);
    let a = learned.decode(&z).unwrap();
    let b = loaded.decode(&z).unwrap();
    assert_eq!(a, b);

    let mut r1 = rng::stream(5, "s");
    let mut r2 = rng::stream(5, "s");
    assert_eq!(learned.sample_perp(&mut r1), loaded.sample_perp(&mut r2));
}

#[test]
fn learned_graph_decode_matches_plain_decode() {
    let (_, learned, _) = tiny_learned(27);
    let color = vec![0.7, 0.2, 0.5];
    let z = FactorLatent::new(learned.code_latent(1).to_vec(), color.clone());
    let plain = learned.decode(&z).unwrap();

    let mut g = Graph::new();
    let zv = g.leaf(crate::autodiff::Tensor::matrix(1, 3, color).unwrap());
    let prep = learned.prepare_pars(&[&z.z_par]).unwrap();
    let img = learned.decode_rows_graph(&mut g, &prep, zv).unwrap();
    assert_eq!(g.data(img), plain.as_slice());
}

#[test]
fn frozen_toy_graph_matches_decode_and_gradient_is_unit() {
    let mut r = rng::stream(31, "frozen");
    let toy = FrozenToyDecoder::draw(&mut r);
    let z = FactorLatent::new(vec![20.0], vec![10.0]);
    let plain = toy.decode(&z).unwrap();

    let mut g = Graph::new();
    let zv = g.param(crate::autodiff::Tensor::matrix(1, 1, vec![10.0]).unwrap());
    let prep = toy.prepare_pars(&[&z.z_par]).unwrap();
    let out = toy.decode_rows_graph(&mut g, &prep, zv).unwrap();
    assert_eq!(g.data(out), plain.as_slice());

    // d x1 / d z_perp = 1, d x2 / d z_perp = 0.
    let sel = g.leaf(crate::autodiff::Tensor::matrix(2, 1, vec![1.0, 0.0]).unwrap());
    let x1 = g.matmul(out, sel).unwrap();
    let loss = g.sum(x1).unwrap();
    g.backward(loss).unwrap();
    assert_eq!(g.grad(zv).unwrap(), &[1.0]);
}
