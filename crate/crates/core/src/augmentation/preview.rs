use super::{color_transform, ColorKind, PhotometricConfig};
use crate::error::Result;
use crate::raster::Image;

pub const DEFAULT_GUTTER: usize = 8;
const GUTTER_FILL: [f32; 3] = [255.0; 3];

/// 3×3 grid of deterministic distortion panels, row-major:
/// original, combined(+), combined(−), brightness ±Δ, contrast hi/lo,
/// saturation hi/lo.
pub fn preview_grid(img: &Image, cfg: &PhotometricConfig) -> Result<Image> {
    preview_grid_with_gutter(img, cfg, DEFAULT_GUTTER)
}

pub fn preview_grid_with_gutter(
    img: &Image,
    cfg: &PhotometricConfig,
    gutter: usize,
) -> Result<Image> {
    use ColorKind::*;
    let [c_lo, c_hi] = cfg.contrast_range;
    let [s_lo, s_hi] = cfg.saturation_range;
    let (db, dh) = (cfg.brightness_delta, cfg.hue_delta);

    let chain = |steps: &[(ColorKind, f64)]| -> Result<Image> {
        let mut out = img.clone();
        for &(kind, amount) in steps {
            out = color_transform(&out, kind, amount)?;
        }
        Ok(out)
    };
    let panels = [
        img.clone(),
        chain(&[(Brightness, db), (Contrast, c_hi), (Saturation, s_hi), (Hue, dh)])?,
        chain(&[(Brightness, -db), (Contrast, c_lo), (Saturation, s_lo), (Hue, -dh)])?,
        color_transform(img, Brightness, db)?,
        color_transform(img, Brightness, -db)?,
        color_transform(img, Contrast, c_hi)?,
        color_transform(img, Contrast, c_lo)?,
        color_transform(img, Saturation, s_hi)?,
        color_transform(img, Saturation, s_lo)?,
    ];

    let (h, w) = (img.height(), img.width());
    let mut grid = Image::new(3 * h + 2 * gutter, 3 * w + 2 * gutter, GUTTER_FILL);
    for (i, panel) in panels.iter().enumerate() {
        let (oy, ox) = ((i / 3) * (h + gutter), (i % 3) * (w + gutter));
        for y in 0..h {
            for x in 0..w {
                grid.set_pixel(oy + y, ox + x, panel.pixel(y, x));
            }
        }
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tile(grid: &Image, i: usize, h: usize, w: usize, gutter: usize) -> Image {
        grid.crop((i / 3) * (h + gutter), (i % 3) * (w + gutter), h, w).unwrap()
    }

    #[test]
    fn layout_and_panels() {
        let img = Image::from_fn(10, 14, |y, x| [(y * 20) as f32, (x * 15) as f32, 128.0]);
        let cfg = PhotometricConfig::default();
        let grid = preview_grid(&img, &cfg).unwrap();
        assert_eq!(grid.height(), 3 * 10 + 2 * DEFAULT_GUTTER);
        assert_eq!(grid.width(), 3 * 14 + 2 * DEFAULT_GUTTER);
        assert_eq!(tile(&grid, 0, 10, 14, DEFAULT_GUTTER), img);
        assert_eq!(
            tile(&grid, 3, 10, 14, DEFAULT_GUTTER),
            color_transform(&img, ColorKind::Brightness, 40.0).unwrap()
        );
        assert_eq!(
            tile(&grid, 4, 10, 14, DEFAULT_GUTTER),
            color_transform(&img, ColorKind::Brightness, -40.0).unwrap()
        );
        assert_eq!(
            tile(&grid, 8, 10, 14, DEFAULT_GUTTER),
            color_transform(&img, ColorKind::Saturation, 0.7).unwrap()
        );
        assert_eq!(preview_grid(&img, &cfg).unwrap(), grid);
    }

    #[test]
    fn zero_gutter() {
        let img = Image::new(4, 4, [1.0; 3]);
        let grid = preview_grid_with_gutter(&img, &PhotometricConfig::default(), 0).unwrap();
        assert_eq!((grid.height(), grid.width()), (12, 12));
    }
}
