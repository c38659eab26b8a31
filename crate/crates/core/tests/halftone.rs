use npcolor::colorimetry::{delta_e2000, spectrum_to_xyz, xyz_to_srgb8};
use npcolor::halftone::{
    bayer, blue_noise, halftone, measure_coverages, render_preview, HalftoneImage, NPacImage, ThresholdMatrix, Window,
};
use npcolor::neugebauer::{predict, predict_lab};
use npcolor::press::synth_np_table;
use npcolor::{NPac, PressModel, ViewingCondition, YnParams};
use proptest::prelude::*;
use std::f64::consts::PI;
use std::sync::LazyLock;

static BLUE: LazyLock<ThresholdMatrix> = LazyLock::new(|| blue_noise(64, 1).unwrap());

fn count(h: &HalftoneImage, id: u64) -> usize {
    h.ids.iter().filter(|&&x| x == id).count()
}

/// Mean power over DFT bins with `0 < |k| < cutoff`, computed directly.
fn low_frequency_power(pattern: &[f64], n: usize, cutoff: f64) -> (f64, usize) {
    let mean = pattern.iter().sum::<f64>() / pattern.len() as f64;
    let mut total = 0.0;
    let mut bins = 0;
    let half = n as i64 / 2;
    for ky in -half..half {
        for kx in -half..half {
            let r = ((kx * kx + ky * ky) as f64).sqrt();
            if r == 0.0 || r >= cutoff {
                continue;
            }
            let (mut re, mut im) = (0.0, 0.0);
            for y in 0..n {
                for x in 0..n {
                    let phase = -2.0 * PI * (kx as f64 * x as f64 + ky as f64 * y as f64) / n as f64;
                    let v = pattern[y * n + x] - mean;
                    re += v * phase.cos();
                    im += v * phase.sin();
                }
            }
            total += re * re + im * im;
            bins += 1;
        }
    }
    (total / bins as f64, bins)
}

#[test]
fn blue_noise_has_a_low_frequency_deficit() {
    let m = &*BLUE;
    let n = 64;
    assert!(m.histogram().iter().all(|&c| c == 16));
    // 1/8 of Nyquist: Nyquist is bin n/2.
    let cutoff = (n as f64 / 2.0) / 8.0;
    for level in [32u32, 64, 128, 192] {
        let pattern: Vec<f64> = m.values().iter().map(|&v| if v < level { 1.0 } else { 0.0 }).collect();
        let p = level as f64 / 256.0;
        // White noise with the same density: E|X_k|² = n² p (1 - p).
        let white = (n * n) as f64 * p * (1.0 - p);
        let (power, bins) = low_frequency_power(&pattern, n, cutoff);
        assert!(bins > 10);
        assert!(power < 0.5 * white, "level {level}: {power} vs white {white}");
    }
}

#[test]
fn substrate_everywhere() {
    let img = NPacImage::constant(32, 16, NPac::single(0));
    let h = halftone(&img, &BLUE);
    assert!(h.ids.iter().all(|&id| id == 0));
    assert_eq!(measure_coverages(&h, None).unwrap(), NPac::single(0));
}

#[test]
fn half_and_half_on_bayer_is_exact() {
    let img = NPacImage::constant(64, 64, NPac::new([(3, 0.5), (12, 0.5)]).unwrap());
    let h = halftone(&img, &bayer(16).unwrap());
    assert_eq!(count(&h, 3), 2048);
    assert_eq!(count(&h, 12), 2048);
    let m = measure_coverages(&h, None).unwrap();
    assert_eq!(m.entries(), &[(3, 0.5), (12, 0.5)]);
}

#[test]
fn thirty_seventy_within_one_level() {
    let npac = NPac::new([(1, 0.3), (2, 0.7)]).unwrap();
    for m in [bayer(16).unwrap(), BLUE.clone()] {
        let h = halftone(&NPacImage::constant(128, 128, npac.clone()), &m);
        let got = measure_coverages(&h, None).unwrap();
        assert!((got.weight(1) - 0.3).abs() <= 1.0 / 256.0);
        assert!((got.weight(2) - 0.7).abs() <= 1.0 / 256.0);
    }
}

#[test]
fn windowed_measurement() {
    let h = halftone(&NPacImage::constant(64, 64, NPac::new([(0, 0.25), (5, 0.75)]).unwrap()), &bayer(16).unwrap());
    let tile = Window {
        x: 16,
        y: 32,
        width: 16,
        height: 16,
    };
    let m = measure_coverages(&h, Some(tile)).unwrap();
    assert_eq!(m.entries(), &[(0, 0.25), (5, 0.75)]);
    let empty = Window { width: 0, ..tile };
    assert!(measure_coverages(&h, Some(empty)).is_err());
    let outside = Window { x: 60, ..tile };
    assert!(measure_coverages(&h, Some(outside)).is_err());
}

#[test]
fn per_pixel_field_follows_each_pixel() {
    let pixels: Vec<NPac> = (0..64 * 64)
        .map(|i| if i % 64 < 32 { NPac::single(1) } else { NPac::single(2) })
        .collect();
    let img = NPacImage::per_pixel(64, 64, pixels).unwrap();
    let h = halftone(&img, &BLUE);
    assert!(h.ids.iter().enumerate().all(|(i, &id)| id == if i % 64 < 32 { 1 } else { 2 }));
    assert!(NPacImage::per_pixel(2, 2, vec![NPac::single(0)]).is_err());
}

#[test]
fn npac_image_json_shapes() {
    let c: NPacImage = serde_json::from_str(r#"{"width":4,"height":2,"npac":{"0":0.5,"3":0.5}}"#).unwrap();
    assert_eq!(c.pixel(3, 1).weight(3), 0.5);
    let p: NPacImage = serde_json::from_str(r#"{"width":2,"height":1,"pixels":[{"0":1.0},{"1":1.0}]}"#).unwrap();
    assert_eq!(p.pixel(1, 0), &NPac::single(1));
}

#[test]
fn preview_is_deterministic_and_white_on_substrate() {
    let press = PressModel::demo_cmyk();
    let table = synth_np_table(&press).unwrap();
    let vc = ViewingCondition::d50();
    let h = halftone(&NPacImage::constant(32, 32, NPac::single(0)), &BLUE);
    let a = render_preview(&h, &table, &vc).unwrap();
    assert!(a.pixels().all(|p| p.0.iter().all(|&c| c > 220)));
    let mixed = halftone(&NPacImage::constant(32, 32, NPac::new([(0, 0.4), (9, 0.6)]).unwrap()), &BLUE);
    assert_eq!(
        render_preview(&mixed, &table, &vc).unwrap().into_raw(),
        render_preview(&mixed, &table, &vc).unwrap().into_raw()
    );
    let bad = HalftoneImage {
        width: 1,
        height: 1,
        ids: vec![999],
    };
    assert!(render_preview(&bad, &table, &vc).is_err());
}

fn decode(c: u8) -> f64 {
    let v = c as f64 / 255.0;
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

fn encode(v: f64) -> u8 {
    let e = if v <= 0.0031308 { 12.92 * v } else { 1.055 * v.powf(1.0 / 2.4) - 0.055 };
    (e.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[test]
fn preview_mean_matches_prediction_in_linear_light() {
    // With a Yule-Nielsen exponent of 1 the prediction is the area average
    // of NP spectra, which is what averaging the preview in linear light
    // computes.
    let yn = YnParams::new(1.0).unwrap();
    let press = PressModel::demo_cmyk().with_yn(yn);
    let table = synth_np_table(&press).unwrap();
    let vc = ViewingCondition::d50();
    let npac = NPac::new([(0, 0.3), (1, 0.2), (6, 0.25), (15, 0.25)]).unwrap();
    let h = halftone(&NPacImage::constant(256, 256, npac.clone()), &BLUE);
    let img = render_preview(&h, &table, &vc).unwrap();
    let mut mean = [0.0; 3];
    for p in img.pixels() {
        for c in 0..3 {
            mean[c] += decode(p.0[c]);
        }
    }
    let n = (256 * 256) as f64;
    let got = mean.map(|m| encode(m / n));
    let want = xyz_to_srgb8(spectrum_to_xyz(&predict(&npac, &table, yn).unwrap(), &vc), &vc);
    for c in 0..3 {
        assert!((got[c] as i32 - want[c] as i32).abs() <= 3, "{got:?} vs {want:?}");
    }
}

fn arb_npac() -> impl Strategy<Value = NPac> {
    prop::collection::vec((0u64..16, 0.01f64..1.0), 1..6)
        .prop_map(|e| NPac::from_unnormalized(e, 0.0).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn coverage_error_is_bounded(npac in arb_npac(), w in 16u32..160, h in 16u32..160, use_bayer in any::<bool>()) {
        let m = if use_bayer { bayer(16).unwrap() } else { BLUE.clone() };
        let ht = halftone(&NPacImage::constant(w, h, npac.clone()), &m);
        let got = measure_coverages(&ht, None).unwrap();
        prop_assert!((got.entries().iter().map(|e| e.1).sum::<f64>() - 1.0).abs() < 1e-12);
        let l = m.levels() as f64;
        let bound = 1.0 / l + l * (m.width() * m.height()) as f64 / (w * h) as f64;
        for &(id, want) in npac.entries() {
            prop_assert!((got.weight(id) - want).abs() <= bound, "{id}: {} vs {want}", got.weight(id));
        }
    }

    #[test]
    fn storage_order_does_not_matter(entries in prop::collection::vec((0u64..16, 0.01f64..1.0), 1..6), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let a = NPac::from_unnormalized(entries.clone(), 0.0).unwrap();
        let mut shuffled = entries;
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let b = NPac::from_unnormalized(shuffled, 0.0).unwrap();
        let ha = halftone(&NPacImage::constant(64, 32, a), &BLUE);
        let hb = halftone(&NPacImage::constant(64, 32, b), &BLUE);
        prop_assert_eq!(ha, hb);
    }

    #[test]
    fn halftone_keeps_the_predicted_color(npac in arb_npac()) {
        let press = PressModel::demo_cmyk();
        let table = synth_np_table(&press).unwrap();
        let vc = ViewingCondition::d50();
        let ht = halftone(&NPacImage::constant(256, 256, npac.clone()), &BLUE);
        let got = measure_coverages(&ht, None).unwrap();
        let de = delta_e2000(
            &predict_lab(&got, &table, press.yn(), &vc).unwrap(),
            &predict_lab(&npac, &table, press.yn(), &vc).unwrap(),
        );
        prop_assert!(de < 1.0, "{de}");
    }
}
