use serde::{Deserialize, Serialize};

use super::RngStream;
use crate::error::{Error, Result};
use crate::raster::{Image, LabelMap};
use crate::resample::{linear_taps, nearest_indices};
use crate::taxonomy::IGNORE_ID;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometricConfig {
    pub scale_range: [f64; 2],
    /// `[height, width]` of the output.
    pub crop_size: [usize; 2],
    pub image_pad_value: f64,
    pub label_pad_value: u8,
}

impl Default for GeometricConfig {
    fn default() -> Self {
        GeometricConfig {
            scale_range: [0.5, 2.0],
            crop_size: [512, 512],
            image_pad_value: 0.0,
            label_pad_value: IGNORE_ID,
        }
    }
}

impl GeometricConfig {
    pub fn validate(&self) -> Result<()> {
        const P: &str = "augment.geometric";
        let [lo, hi] = self.scale_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::config(
                format!("{P}.scale_range"),
                format!("[{lo}, {hi}] violates 0 < lo ≤ hi"),
            ));
        }
        if self.crop_size.contains(&0) {
            return Err(Error::config(format!("{P}.crop_size"), "dimensions must be > 0"));
        }
        if !(0.0..=255.0).contains(&self.image_pad_value) {
            return Err(Error::config(
                format!("{P}.image_pad_value"),
                "must be an 8-bit intensity",
            ));
        }
        if self.label_pad_value != IGNORE_ID {
            return Err(Error::config(
                format!("{P}.label_pad_value"),
                format!("must equal the ignore id {IGNORE_ID}"),
            ));
        }
        Ok(())
    }
}

/// Random rescale followed by crop or pad to `crop_size`.
pub fn geometric_pipeline(
    img: &Image,
    labels: &LabelMap,
    cfg: &GeometricConfig,
    rng: &mut RngStream,
) -> Result<(Image, LabelMap)> {
    let scale = rng.uniform(cfg.scale_range[0], cfg.scale_range[1]);
    geometric_pipeline_with_scale(img, labels, cfg, scale, rng)
}

/// [`geometric_pipeline`] with the scale factor fixed by the caller. Crop
/// offsets still come from `rng`.
pub fn geometric_pipeline_with_scale(
    img: &Image,
    labels: &LabelMap,
    cfg: &GeometricConfig,
    scale: f64,
    rng: &mut RngStream,
) -> Result<(Image, LabelMap)> {
    if img.height() != labels.height() || img.width() != labels.width() {
        return Err(Error::Shape(format!(
            "image {}x{} vs labels {}x{}",
            img.height(),
            img.width(),
            labels.height(),
            labels.width()
        )));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidArgument(format!("scale factor {scale}")));
    }
    let rh = ((img.height() as f64 * scale).round() as usize).max(1);
    let rw = ((img.width() as f64 * scale).round() as usize).max(1);
    let img = resize_bilinear(img, rh, rw);
    let labels = resize_nearest(labels, rh, rw);

    let [ch, cw] = cfg.crop_size;
    let top = if rh > ch { rng.below((rh - ch + 1) as u64) as usize } else { 0 };
    let left = if rw > cw { rng.below((rw - cw + 1) as u64) as usize } else { 0 };
    let copy_h = rh.min(ch);
    let copy_w = rw.min(cw);

    let pad = cfg.image_pad_value as f32;
    let mut out_img = Image::new(ch, cw, [pad; 3]);
    let mut out_lbl = LabelMap::new(ch, cw, cfg.label_pad_value);
    for y in 0..copy_h {
        let src = ((top + y) * rw + left) * 3;
        let dst = y * cw * 3;
        out_img.data_mut()[dst..dst + copy_w * 3]
            .copy_from_slice(&img.data()[src..src + copy_w * 3]);
        let src = (top + y) * rw + left;
        let dst = y * cw;
        out_lbl.data_mut()[dst..dst + copy_w].copy_from_slice(&labels.data()[src..src + copy_w]);
    }
    Ok((out_img, out_lbl))
}

pub(crate) fn resize_bilinear(img: &Image, height: usize, width: usize) -> Image {
    if img.height() == height && img.width() == width {
        return img.clone();
    }
    let ty = linear_taps(img.height(), height);
    let tx = linear_taps(img.width(), width);
    let mut data = Vec::with_capacity(height * width * 3);
    for t in &ty {
        for s in &tx {
            let a = img.pixel(t.lo, s.lo);
            let b = img.pixel(t.lo, s.hi);
            let c = img.pixel(t.hi, s.lo);
            let d = img.pixel(t.hi, s.hi);
            for ch in 0..3 {
                let top = a[ch] as f64 * (1.0 - s.frac) + b[ch] as f64 * s.frac;
                let bot = c[ch] as f64 * (1.0 - s.frac) + d[ch] as f64 * s.frac;
                data.push((top * (1.0 - t.frac) + bot * t.frac) as f32);
            }
        }
    }
    Image::from_vec(height, width, data).expect("sized buffer")
}

pub(crate) fn resize_nearest(labels: &LabelMap, height: usize, width: usize) -> LabelMap {
    if labels.height() == height && labels.width() == width {
        return labels.clone();
    }
    let iy = nearest_indices(labels.height(), height);
    let ix = nearest_indices(labels.width(), width);
    LabelMap::from_fn(height, width, |y, x| labels.get(iy[y], ix[x]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(h: usize, w: usize) -> (Image, LabelMap) {
        let labels = LabelMap::from_fn(h, w, |y, x| ((y / 4 + x / 4) % 9) as u8);
        let img = Image::from_fn(h, w, |y, x| {
            let v = labels.get(y, x) as f32 * 20.0;
            [v, v, v]
        });
        (img, labels)
    }

    #[test]
    fn unit_scale_full_crop_is_identity() {
        let (img, labels) = sample(24, 40);
        let cfg = GeometricConfig {
            crop_size: [24, 40],
            ..Default::default()
        };
        let mut rng = RngStream::new(0);
        let (oi, ol) = geometric_pipeline_with_scale(&img, &labels, &cfg, 1.0, &mut rng).unwrap();
        assert_eq!(oi, img);
        assert_eq!(ol, labels);
        assert_eq!(rng.counter(), 0);
    }

    #[test]
    fn half_scale_pads_bottom_right() {
        let (img, labels) = sample(64, 64);
        let cfg = GeometricConfig {
            crop_size: [64, 64],
            image_pad_value: 7.0,
            ..Default::default()
        };
        let (oi, ol) =
            geometric_pipeline_with_scale(&img, &labels, &cfg, 0.5, &mut RngStream::new(0)).unwrap();
        assert_eq!((ol.height(), ol.width()), (64, 64));
        for y in 0..64 {
            for x in 0..64 {
                let inside = y < 32 && x < 32;
                assert_eq!(ol.get(y, x) == IGNORE_ID, !inside);
                if !inside {
                    assert_eq!(oi.pixel(y, x), [7.0; 3]);
                }
            }
        }
    }

    #[test]
    fn output_is_exactly_crop_size() {
        let (img, labels) = sample(30, 50);
        let cfg = GeometricConfig {
            crop_size: [32, 32],
            ..Default::default()
        };
        for seed in 0..20 {
            let (oi, ol) = geometric_pipeline(&img, &labels, &cfg, &mut RngStream::new(seed)).unwrap();
            assert_eq!((oi.height(), oi.width()), (32, 32));
            assert_eq!((ol.height(), ol.width()), (32, 32));
        }
    }

    #[test]
    fn mismatched_shapes_rejected() {
        let img = Image::new(4, 4, [0.0; 3]);
        let labels = LabelMap::new(4, 5, 0);
        let cfg = GeometricConfig::default();
        assert!(matches!(
            geometric_pipeline(&img, &labels, &cfg, &mut RngStream::new(0)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn validation() {
        GeometricConfig::default().validate().unwrap();
        let bad = GeometricConfig {
            label_pad_value: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = GeometricConfig {
            scale_range: [2.0, 0.5],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = GeometricConfig {
            crop_size: [0, 4],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
