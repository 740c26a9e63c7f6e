use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::RngStream;
use crate::error::{Error, Result};
use crate::raster::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ColorKind {
    Brightness,
    Contrast,
    Saturation,
    Hue,
}

impl ColorKind {
    /// Application order used by [`photometric_distortion`].
    pub const ORDER: [ColorKind; 4] = [
        ColorKind::Brightness,
        ColorKind::Contrast,
        ColorKind::Saturation,
        ColorKind::Hue,
    ];
}

impl FromStr for ColorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "brightness" => Ok(ColorKind::Brightness),
            "contrast" => Ok(ColorKind::Contrast),
            "saturation" => Ok(ColorKind::Saturation),
            "hue" => Ok(ColorKind::Hue),
            other => Err(Error::InvalidArgument(format!("unknown color transform `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotometricConfig {
    pub p_apply: f64,
    /// Additive shift bound in 8-bit units.
    pub brightness_delta: f64,
    pub contrast_range: [f64; 2],
    pub saturation_range: [f64; 2],
    /// Hue shift bound in degrees.
    pub hue_delta: f64,
}

impl Default for PhotometricConfig {
    fn default() -> Self {
        PhotometricConfig {
            p_apply: 0.5,
            brightness_delta: 40.0,
            contrast_range: [0.7, 1.3],
            saturation_range: [0.7, 1.3],
            hue_delta: 18.0,
        }
    }
}

impl PhotometricConfig {
    pub fn disabled() -> Self {
        PhotometricConfig {
            p_apply: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        const P: &str = "augment.photometric";
        if !(0.0..=1.0).contains(&self.p_apply) {
            return Err(Error::config(
                format!("{P}.p_apply"),
                format!("{} violates 0 ≤ p_apply ≤ 1", self.p_apply),
            ));
        }
        if !(self.brightness_delta >= 0.0 && self.brightness_delta.is_finite()) {
            return Err(Error::config(
                format!("{P}.brightness_delta"),
                "must be finite and ≥ 0",
            ));
        }
        for (name, [lo, hi]) in [
            ("contrast_range", self.contrast_range),
            ("saturation_range", self.saturation_range),
        ] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::config(
                    format!("{P}.{name}"),
                    format!("[{lo}, {hi}] violates 0 < lo ≤ hi"),
                ));
            }
        }
        if !(0.0..=180.0).contains(&self.hue_delta) {
            return Err(Error::config(
                format!("{P}.hue_delta"),
                format!("{} violates 0 ≤ hue_delta ≤ 180", self.hue_delta),
            ));
        }
        Ok(())
    }
}

/// Applies one color transform with a fixed amount.
///
/// Brightness adds `amount` (8-bit units), contrast multiplies by `amount`,
/// saturation scales HSV saturation, hue rotates HSV hue by `amount`
/// degrees. Results are clamped to `[0, 255]`.
pub fn color_transform(img: &Image, kind: ColorKind, amount: f64) -> Result<Image> {
    if !amount.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "non-finite {kind:?} amount {amount}"
        )));
    }
    let mut out = img.clone();
    match kind {
        ColorKind::Brightness => {
            let a = amount as f32;
            for v in out.data_mut() {
                *v = (*v + a).clamp(0.0, 255.0);
            }
        }
        ColorKind::Contrast => {
            let a = amount as f32;
            for v in out.data_mut() {
                *v = (*v * a).clamp(0.0, 255.0);
            }
        }
        ColorKind::Saturation => map_hsv(&mut out, |h, s, v| (h, (s * amount).clamp(0.0, 1.0), v)),
        ColorKind::Hue => map_hsv(&mut out, |h, s, v| ((h + amount).rem_euclid(360.0), s, v)),
    }
    Ok(out)
}

fn map_hsv(img: &mut Image, f: impl Fn(f64, f64, f64) -> (f64, f64, f64)) {
    for px in img.data_mut().chunks_exact_mut(3) {
        let (h, s, v) = rgb_to_hsv(px[0] as f64, px[1] as f64, px[2] as f64);
        let (h, s, v) = f(h, s, v);
        let (r, g, b) = hsv_to_rgb(h, s, v);
        px[0] = (r as f32).clamp(0.0, 255.0);
        px[1] = (g as f32).clamp(0.0, 255.0);
        px[2] = (b as f32).clamp(0.0, 255.0);
    }
}

/// Hue in degrees `[0, 360)`, saturation in `[0, 1]`, value on the input scale.
fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let c = max - min;
    let s = if max > 0.0 { c / max } else { 0.0 };
    let h = if c == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / c).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / c + 2.0)
    } else {
        60.0 * ((r - g) / c + 4.0)
    };
    (h, s, max)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    if s == 0.0 {
        return (v, v, v);
    }
    let c = v * s;
    let hp = h.rem_euclid(360.0) / 60.0;
    let x = c * (1.0 - (hp.rem_euclid(2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    (r + m, g + m, b + m)
}

/// Random photometric distortion. Each transform is applied with
/// probability `p_apply`, in the order of [`ColorKind::ORDER`].
pub fn photometric_distortion(
    img: &Image,
    cfg: &PhotometricConfig,
    rng: &mut RngStream,
) -> Result<Image> {
    photometric_distortion_traced(img, cfg, rng).map(|(img, _)| img)
}

/// Like [`photometric_distortion`], also returning the amount drawn for
/// each transform (`None` when it was skipped).
pub fn photometric_distortion_traced(
    img: &Image,
    cfg: &PhotometricConfig,
    rng: &mut RngStream,
) -> Result<(Image, [Option<f64>; 4])> {
    let mut out = img.clone();
    let mut trace = [None; 4];
    for (slot, kind) in trace.iter_mut().zip(ColorKind::ORDER) {
        if !rng.bernoulli(cfg.p_apply) {
            continue;
        }
        let amount = match kind {
            ColorKind::Brightness => rng.uniform(-cfg.brightness_delta, cfg.brightness_delta),
            ColorKind::Contrast => rng.uniform(cfg.contrast_range[0], cfg.contrast_range[1]),
            ColorKind::Saturation => rng.uniform(cfg.saturation_range[0], cfg.saturation_range[1]),
            ColorKind::Hue => rng.uniform(-cfg.hue_delta, cfg.hue_delta),
        };
        out = color_transform(&out, kind, amount)?;
        *slot = Some(amount);
    }
    Ok((out, trace))
}
