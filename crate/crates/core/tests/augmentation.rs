use offroad_seg::augmentation::*;
use offroad_seg::{Image, LabelMap, IGNORE_ID};
use proptest::prelude::*;

fn block_labels(h: usize, w: usize, cells: &[u8]) -> LabelMap {
    LabelMap::from_fn(h, w, |y, x| cells[((y / 8) * 7 + x / 8) % cells.len()])
}

/// Red channel encodes the class id.
fn encode(labels: &LabelMap) -> Image {
    Image::from_fn(labels.height(), labels.width(), |y, x| {
        [20.0 * labels.get(y, x) as f32 + 10.0, 0.0, 0.0]
    })
}

fn nearest_oracle(labels: &LabelMap, oh: usize, ow: usize) -> LabelMap {
    let (h, w) = (labels.height(), labels.width());
    let pick = |i: usize, n_in: usize, n_out: usize| {
        (((i as f64 + 0.5) * n_in as f64 / n_out as f64).floor() as usize).min(n_in - 1)
    };
    LabelMap::from_fn(oh, ow, |y, x| labels.get(pick(y, h, oh), pick(x, w, ow)))
}

fn histogram(l: &LabelMap) -> [u64; 256] {
    let mut h = [0u64; 256];
    for &v in l.data() {
        h[v as usize] += 1;
    }
    h
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn geometric_keeps_image_and_labels_aligned(
        cells in proptest::collection::vec(0u8..9, 1..20),
        scale in 0.5f64..2.0,
        seed in any::<u64>(),
        hc in 1usize..5,
        wc in 1usize..5,
    ) {
        let labels = block_labels(32, 32, &cells);
        let img = encode(&labels);
        let cfg = GeometricConfig { crop_size: [16 * hc, 16 * wc], ..Default::default() };
        let mut rng = RngStream::new(seed);
        let (out_img, out_lbl) = geometric_pipeline_with_scale(&img, &labels, &cfg, scale, &mut rng).unwrap();
        prop_assert_eq!((out_lbl.height(), out_lbl.width()), (16 * hc, 16 * wc));
        prop_assert_eq!((out_img.height(), out_img.width()), (16 * hc, 16 * wc));

        // sub-multiset of the nearest-neighbor resize
        let rh = (scale * 32.0).round() as usize;
        let rw = (scale * 32.0).round() as usize;
        let resized = histogram(&nearest_oracle(&labels, rh, rw));
        let got = histogram(&out_lbl);
        for k in 0..9 {
            prop_assert!(got[k] <= resized[k]);
        }

        // away from class boundaries the encoded value survives bilinear resampling
        let (oh, ow) = (out_lbl.height(), out_lbl.width());
        for y in 0..oh {
            for x in 0..ow {
                let k = out_lbl.get(y, x);
                let px = out_img.pixel(y, x);
                if k == IGNORE_ID {
                    prop_assert_eq!(px, [0.0; 3]);
                    continue;
                }
                let interior = y >= 2 && x >= 2 && y + 2 < oh && x + 2 < ow;
                let uniform = interior
                    && (y - 2..y + 3).all(|yy| (x - 2..x + 3).all(|xx| out_lbl.get(yy, xx) == k));
                if uniform {
                    prop_assert!((px[0] - (20.0 * k as f32 + 10.0)).abs() < 1e-3, "{:?} vs {}", px, k);
                }
            }
        }
    }

    #[test]
    fn photometric_output_in_range(
        pixels in proptest::collection::vec(0.0f32..=255.0, 3 * 6 * 5),
        p in 0.0f64..=1.0,
        bd in 0.0f64..120.0,
        c in (0.05f64..3.0, 0.0f64..3.0),
        s in (0.0f64..3.0, 0.0f64..3.0),
        hue in 0.0f64..=180.0,
        seed in any::<u64>(),
    ) {
        let img = Image::from_vec(6, 5, pixels).unwrap();
        let cfg = PhotometricConfig {
            p_apply: p,
            brightness_delta: bd,
            contrast_range: [c.0, c.0 + c.1],
            saturation_range: [s.0.max(1e-3), s.0.max(1e-3) + s.1],
            hue_delta: hue,
        };
        cfg.validate().unwrap();
        let out = photometric_distortion(&img, &cfg, &mut RngStream::new(seed)).unwrap();
        prop_assert!(out.data().iter().all(|v| (0.0..=255.0).contains(v)));
        let again = photometric_distortion(&img, &cfg, &mut RngStream::new(seed)).unwrap();
        prop_assert_eq!(out, again);
    }

    #[test]
    fn disabled_photometric_is_identity(
        pixels in proptest::collection::vec(0.0f32..=255.0, 3 * 4 * 4),
        seed in any::<u64>(),
    ) {
        let img = Image::from_vec(4, 4, pixels).unwrap();
        let cfg = PhotometricConfig { p_apply: 0.0, ..Default::default() };
        prop_assert_eq!(photometric_distortion(&img, &cfg, &mut RngStream::new(seed)).unwrap(), img);
    }

    #[test]
    fn hue_shift_then_complement_round_trips(
        rgb in proptest::collection::vec(0u8..=255, 3 * 8),
        delta in 0.0f64..360.0,
    ) {
        let img = Image::from_vec(2, 4, rgb.iter().map(|&v| v as f32).collect()).unwrap();
        let once = color_transform(&img, ColorKind::Hue, delta).unwrap();
        let back = color_transform(&once, ColorKind::Hue, 360.0 - delta).unwrap();
        let back8 = back.to_rgb8();
        for (a, b) in back8.as_raw().iter().zip(&rgb) {
            prop_assert!((*a as i32 - *b as i32).abs() <= 2);
        }
    }
}

#[test]
fn half_scale_of_large_input_pads_with_ignore() {
    let labels = LabelMap::new(256, 256, 3);
    let img = encode(&labels);
    let cfg = GeometricConfig {
        crop_size: [256, 256],
        ..Default::default()
    };
    let (out_img, out_lbl) =
        geometric_pipeline_with_scale(&img, &labels, &cfg, 0.5, &mut RngStream::new(0)).unwrap();
    assert_eq!(out_lbl.get(127, 127), 3);
    assert_eq!(out_lbl.get(128, 0), IGNORE_ID);
    assert_eq!(out_lbl.get(0, 128), IGNORE_ID);
    assert_eq!(out_img.pixel(200, 200), [0.0; 3]);
    assert_eq!(histogram(&out_lbl)[3], 128 * 128);
}

#[test]
fn apply_rate_is_half() {
    let img = Image::new(4, 4, [128.0; 3]);
    let cfg = PhotometricConfig::default();
    let mut applied = [0usize; 4];
    for seed in 0..1000 {
        let (_, trace) = photometric_distortion_traced(&img, &cfg, &mut RngStream::new(seed)).unwrap();
        for (count, t) in applied.iter_mut().zip(trace) {
            *count += t.is_some() as usize;
        }
    }
    for count in applied {
        let rate = count as f64 / 1000.0;
        assert!((rate - 0.5).abs() <= 0.05, "{rate}");
    }
}

#[test]
fn preview_matches_direct_transforms() {
    let img = Image::from_fn(10, 12, |y, x| [(y * 20) as f32, (x * 20) as f32, 100.0]);
    let cfg = PhotometricConfig::default();
    let grid = preview_grid(&img, &cfg).unwrap();
    let g = DEFAULT_GUTTER;
    assert_eq!((grid.height(), grid.width()), (30 + 2 * g, 36 + 2 * g));
    assert_eq!(grid.crop(0, 0, 10, 12).unwrap(), img);
    let bright = color_transform(&img, ColorKind::Brightness, 40.0).unwrap();
    let dark = color_transform(&img, ColorKind::Brightness, -40.0).unwrap();
    assert_eq!(grid.crop(10 + g, 0, 10, 12).unwrap(), bright);
    assert_eq!(grid.crop(10 + g, 12 + g, 10, 12).unwrap(), dark);
}
