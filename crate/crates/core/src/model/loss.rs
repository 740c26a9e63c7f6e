use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::raster::LabelMap;

#[derive(Debug, Clone)]
pub struct LossOutput {
    /// Mean over non-ignored pixels; `0.0` when every pixel is ignored.
    pub loss: f64,
    pub valid_pixels: usize,
    /// Set when no pixel contributed.
    pub empty: bool,
    /// Gradient of `loss` w.r.t. the logits.
    pub grad: Tensor,
}

/// Pixel-wise softmax cross-entropy, averaged over non-ignored pixels.
pub fn cross_entropy_loss(logits: &Tensor, labels: &[LabelMap], ignore_id: u8) -> Result<LossOutput> {
    let (sum, valid, mut grad) = cross_entropy_sum(logits, labels, ignore_id)?;
    if valid == 0 {
        log::warn!("cross-entropy over a batch with every pixel ignored");
        return Ok(LossOutput {
            loss: 0.0,
            valid_pixels: 0,
            empty: true,
            grad,
        });
    }
    let scale = 1.0 / valid as f64;
    grad.data_mut().iter_mut().for_each(|g| *g *= scale);
    Ok(LossOutput {
        loss: sum * scale,
        valid_pixels: valid,
        empty: false,
        grad,
    })
}

/// Summed (not averaged) cross-entropy, the number of contributing pixels,
/// and the gradient of the sum. Callers normalizing over several batches
/// divide both by the combined pixel count.
pub fn cross_entropy_sum(
    logits: &Tensor,
    labels: &[LabelMap],
    ignore_id: u8,
) -> Result<(f64, usize, Tensor)> {
    let [n, k, h, w] = logits.shape();
    if labels.len() != n {
        return Err(Error::Shape(format!("{n} logit rasters vs {} label maps", labels.len())));
    }
    let hw = h * w;
    let mut grad = Tensor::zeros(logits.shape());
    let mut sum = 0.0;
    let mut valid = 0;
    let mut probs = vec![0.0; k];
    for (s, lbl) in labels.iter().enumerate() {
        if lbl.height() != h || lbl.width() != w {
            return Err(Error::Shape(format!(
                "logits {h}x{w} vs labels {}x{}",
                lbl.height(),
                lbl.width()
            )));
        }
        let base = s * k * hw;
        for (p, &target) in lbl.data().iter().enumerate() {
            if target == ignore_id {
                continue;
            }
            if target as usize >= k {
                return Err(Error::InvalidLabel {
                    id: target,
                    x: p % w,
                    y: p / w,
                });
            }
            let mut max = f64::NEG_INFINITY;
            for c in 0..k {
                max = max.max(logits.data()[base + c * hw + p]);
            }
            let mut z = 0.0;
            for c in 0..k {
                probs[c] = (logits.data()[base + c * hw + p] - max).exp();
                z += probs[c];
            }
            let log_z = z.ln() + max;
            sum += log_z - logits.data()[base + target as usize * hw + p];
            valid += 1;
            let g = grad.data_mut();
            for c in 0..k {
                g[base + c * hw + p] = probs[c] / z;
            }
            g[base + target as usize * hw + p] -= 1.0;
        }
    }
    Ok((sum, valid, grad))
}

/// Per-pixel argmax over the class axis; ties go to the lower class id.
pub fn argmax(logits: &Tensor) -> Vec<LabelMap> {
    let [n, k, h, w] = logits.shape();
    let hw = h * w;
    (0..n)
        .map(|s| {
            let base = s * k * hw;
            let data = (0..hw)
                .map(|p| {
                    let mut best = 0;
                    for c in 1..k {
                        if logits.data()[base + c * hw + p] > logits.data()[base + best * hw + p] {
                            best = c;
                        }
                    }
                    best as u8
                })
                .collect();
            LabelMap::from_vec(h, w, data).expect("sized buffer")
        })
        .collect()
}

/// Softmax over the class axis.
pub fn softmax(logits: &Tensor) -> Tensor {
    let [n, k, h, w] = logits.shape();
    let hw = h * w;
    let mut out = logits.clone();
    for s in 0..n {
        let base = s * k * hw;
        for p in 0..hw {
            let max = (0..k).map(|c| logits.data()[base + c * hw + p]).fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for c in 0..k {
                let e = (logits.data()[base + c * hw + p] - max).exp();
                out.data_mut()[base + c * hw + p] = e;
                z += e;
            }
            for c in 0..k {
                out.data_mut()[base + c * hw + p] /= z;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::IGNORE_ID;

    fn labels(h: usize, w: usize, f: impl FnMut(usize, usize) -> u8) -> LabelMap {
        LabelMap::from_fn(h, w, f)
    }

    #[test]
    fn uniform_logits_give_ln_k() {
        let logits = Tensor::zeros([1, 9, 4, 4]);
        let out = cross_entropy_loss(&logits, &[labels(4, 4, |y, x| ((y + x) % 9) as u8)], IGNORE_ID).unwrap();
        assert!((out.loss - 9f64.ln()).abs() < 1e-12);
        assert!((out.loss - 2.19722).abs() < 1e-5);
    }

    #[test]
    fn saturated_correct_prediction() {
        let lbl = labels(3, 3, |y, _| y as u8);
        let mut logits = Tensor::zeros([1, 9, 3, 3]);
        for y in 0..3 {
            for x in 0..3 {
                let i = logits.index(0, y, y, x);
                logits.data_mut()[i] = 20.0;
            }
        }
        let out = cross_entropy_loss(&logits, &[lbl], IGNORE_ID).unwrap();
        assert!(out.loss < 1e-6);
    }

    #[test]
    fn ignored_half_matches_loop_oracle() {
        let (h, w) = (4, 6);
        let logits = Tensor::from_vec(
            [1, 9, h, w],
            (0..9 * h * w).map(|i| ((i * 31) % 17) as f64 * 0.3 - 2.0).collect(),
        )
        .unwrap();
        let lbl = labels(h, w, |y, x| if x < w / 2 { IGNORE_ID } else { ((y * 5 + x) % 9) as u8 });
        let out = cross_entropy_loss(&logits, std::slice::from_ref(&lbl), IGNORE_ID).unwrap();

        let mut total = 0.0;
        let mut count = 0;
        for y in 0..h {
            for x in w / 2..w {
                let t = lbl.get(y, x) as usize;
                let z: f64 = (0..9).map(|c| logits.at(0, c, y, x).exp()).sum();
                total += -(logits.at(0, t, y, x).exp() / z).ln();
                count += 1;
            }
        }
        assert_eq!(out.valid_pixels, count);
        assert!((out.loss - total / count as f64).abs() < 1e-12);
        // ignored pixels receive no gradient
        for c in 0..9 {
            assert_eq!(out.grad.at(0, c, 0, 0), 0.0);
        }
    }

    #[test]
    fn all_ignored_is_flagged_zero() {
        let out = cross_entropy_loss(&Tensor::zeros([1, 9, 2, 2]), &[LabelMap::new(2, 2, IGNORE_ID)], IGNORE_ID).unwrap();
        assert!(out.empty);
        assert_eq!(out.loss, 0.0);
        assert!(out.grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn rejects_bad_inputs() {
        let logits = Tensor::zeros([1, 9, 2, 2]);
        assert!(cross_entropy_loss(&logits, &[LabelMap::new(2, 2, 9)], IGNORE_ID).is_err());
        assert!(cross_entropy_loss(&logits, &[LabelMap::new(2, 3, 0)], IGNORE_ID).is_err());
        assert!(cross_entropy_loss(&logits, &[], IGNORE_ID).is_err());
    }

    #[test]
    fn argmax_picks_max_channel() {
        let mut logits = Tensor::zeros([1, 9, 2, 3]);
        for y in 0..2 {
            for x in 0..3 {
                let i = logits.index(0, 4, y, x);
                logits.data_mut()[i] = 1.0;
            }
        }
        assert!(argmax(&logits)[0].data().iter().all(|&v| v == 4));
        // ties resolve low
        assert!(argmax(&Tensor::zeros([1, 9, 1, 1]))[0].data() == [0]);
    }
}
