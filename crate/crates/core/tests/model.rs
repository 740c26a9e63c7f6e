use offroad_seg::model::{cross_entropy_loss, ModelConfig, NormKind, ParamSet, SegNet, Tensor, STRIDES};
use offroad_seg::LabelMap;
use proptest::prelude::*;

fn tiny() -> (SegNet, ParamSet) {
    let net = SegNet::new(&ModelConfig::tiny()).unwrap();
    let params = net.init_params(21);
    (net, params)
}

fn smooth_input(h: usize, w: usize, phase: f64) -> Tensor {
    let mut data = Vec::with_capacity(3 * h * w);
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                let (fy, fx) = (y as f64, x as f64);
                data.push((0.11 * fy + phase).sin() * (0.07 * fx + c as f64).cos() + 0.2 * c as f64);
            }
        }
    }
    Tensor::from_vec([1, 3, h, w], data).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn shape_contract(hm in 1usize..=16, wm in 1usize..=16) {
        let (net, params) = tiny();
        let (h, w) = (32 * hm, 32 * wm);
        let x = smooth_input(h, w, 0.3);
        let pyr = net.backbone_forward(&params, x.clone()).unwrap();
        for (level, s) in pyr.levels.iter().zip(STRIDES) {
            prop_assert_eq!((level.height(), level.width()), (h / s, w / s));
        }
        let fused = net.decoder_forward(&params, &pyr).unwrap();
        prop_assert_eq!(fused.shape(), [1, 8, h / 4, w / 4]);
        prop_assert_eq!(net.segment(&params, x).unwrap().shape(), [1, 9, h, w]);
    }
}

#[test]
fn batch_order_does_not_change_mean_loss() {
    let (net, params) = tiny();
    let inputs: Vec<Tensor> = (0..3).map(|i| smooth_input(32, 64, i as f64)).collect();
    let labels: Vec<LabelMap> = (0..3)
        .map(|i| LabelMap::from_fn(32, 64, |y, x| ((y / 4 + x / 8 + i) % 10).min(8) as u8))
        .collect();
    let loss = |order: [usize; 3]| {
        let x = Tensor::stack(&order.map(|i| inputs[i].clone())).unwrap();
        let lbl: Vec<LabelMap> = order.iter().map(|&i| labels[i].clone()).collect();
        let logits = net.segment(&params, x).unwrap();
        cross_entropy_loss(&logits, &lbl, 255).unwrap().loss
    };
    let base = loss([0, 1, 2]);
    for order in [[2, 0, 1], [1, 2, 0], [2, 1, 0]] {
        assert!((loss(order) - base).abs() <= 1e-9 * base.abs().max(1.0));
    }
}

/// Convolutions commute with a 32-pixel shift away from the borders. Group
/// norm and the global pooling branch see the whole image, so the check runs
/// on the un-normalized backbone.
#[test]
fn backbone_translation_by_one_coarse_stride() {
    let net = SegNet::new(&ModelConfig {
        norm_kind: NormKind::None,
        ..ModelConfig::tiny()
    })
    .unwrap();
    let params = net.init_params(21);
    let wide = smooth_input(64, 544, 0.5);
    let a = net.backbone_forward(&params, wide.crop(0, 0, 64, 512).unwrap()).unwrap();
    let b = net.backbone_forward(&params, wide.crop(0, 32, 64, 512).unwrap()).unwrap();
    const MARGIN: usize = 6;
    for (l, s) in STRIDES.iter().enumerate() {
        let (la, lb) = (&a.levels[l], &b.levels[l]);
        let shift = 32 / s;
        for c in 0..la.channels() {
            for y in 0..la.height() {
                for x in MARGIN..lb.width() - shift - MARGIN {
                    let d = (la.at(0, c, y, x + shift) - lb.at(0, c, y, x)).abs();
                    assert!(d < 1e-10, "level {l} ({c},{y},{x}): {d}");
                }
            }
        }
    }
}
