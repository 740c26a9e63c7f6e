//! Sampling grids shared by image, label and feature resizing.
//!
//! Bilinear taps follow the half-pixel-center convention without corner
//! alignment: output index `i` samples source coordinate
//! `(i + 0.5) · in / out − 0.5`, clamped to the valid range.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearTap {
    pub lo: usize,
    pub hi: usize,
    /// Weight of `hi`; `lo` gets `1 - frac`.
    pub frac: f64,
}

pub fn linear_taps(len_in: usize, len_out: usize) -> Vec<LinearTap> {
    let scale = len_in as f64 / len_out as f64;
    (0..len_out)
        .map(|i| {
            let src = ((i as f64 + 0.5) * scale - 0.5).max(0.0);
            let lo = (src.floor() as usize).min(len_in - 1);
            let hi = (lo + 1).min(len_in - 1);
            let frac = if hi == lo { 0.0 } else { src - lo as f64 };
            LinearTap { lo, hi, frac }
        })
        .collect()
}

/// Half-pixel nearest source index, in integer arithmetic so exact ties
/// resolve the same way for every size pair.
pub fn nearest_indices(len_in: usize, len_out: usize) -> Vec<usize> {
    (0..len_out)
        .map(|i| ((2 * i + 1) * len_in / (2 * len_out)).min(len_in - 1))
        .collect()
}
