use offroad_seg::evaluation::*;
use offroad_seg::{LabelMap, IGNORE_ID};
use proptest::prelude::*;

fn label_map(size: usize, ignore: bool) -> impl Strategy<Value = LabelMap> {
    let cell = if ignore {
        prop_oneof![8 => 0u8..9, 1 => Just(IGNORE_ID)].boxed()
    } else {
        (0u8..9).boxed()
    };
    proptest::collection::vec(cell, size * size)
        .prop_map(move |v| LabelMap::from_vec(size, size, v).unwrap())
}

/// Naive per-pixel oracle: counts TP/FP/FN per class directly.
fn oracle(pairs: &[(LabelMap, LabelMap)]) -> Vec<Option<f64>> {
    let mut tp = [0u64; 9];
    let mut fp = [0u64; 9];
    let mut fneg = [0u64; 9];
    for (pred, gt) in pairs {
        for y in 0..gt.height() {
            for x in 0..gt.width() {
                let (g, p) = (gt.get(y, x), pred.get(y, x));
                if g == IGNORE_ID {
                    continue;
                }
                if g == p {
                    tp[g as usize] += 1;
                } else {
                    fp[p as usize] += 1;
                    fneg[g as usize] += 1;
                }
            }
        }
    }
    (0..9)
        .map(|k| {
            let union = tp[k] + fp[k] + fneg[k];
            (union > 0).then(|| tp[k] as f64 / union as f64)
        })
        .collect()
}

fn matrix(pairs: &[(LabelMap, LabelMap)]) -> ConfusionMatrix {
    let mut cm = ConfusionMatrix::new(9);
    for (p, g) in pairs {
        cm.accumulate(p, g, IGNORE_ID).unwrap();
    }
    cm
}

proptest! {
    #[test]
    fn matches_pixel_oracle(pairs in proptest::collection::vec((label_map(16, false), label_map(16, true)), 1..4)) {
        let iou = iou_from_confusion(&matrix(&pairs));
        let expected = oracle(&pairs);
        prop_assert_eq!(&iou.per_class, &expected);
        for v in iou.per_class.iter().flatten() {
            prop_assert!((0.0..=1.0).contains(v));
        }
        prop_assert_eq!(iou.miou, mean_iou(&expected));
    }

    #[test]
    fn merge_is_commutative_and_associative(
        a in (label_map(8, false), label_map(8, true)),
        b in (label_map(8, false), label_map(8, true)),
        c in (label_map(8, false), label_map(8, true)),
    ) {
        let (ma, mb, mc) = (matrix(&[a]), matrix(&[b]), matrix(&[c]));
        let mut ab = ma.clone();
        ab.merge(&mb).unwrap();
        let mut ba = mb.clone();
        ba.merge(&ma).unwrap();
        prop_assert_eq!(&ab, &ba);
        let mut ab_c = ab;
        ab_c.merge(&mc).unwrap();
        let mut bc = mb;
        bc.merge(&mc).unwrap();
        let mut a_bc = ma;
        a_bc.merge(&bc).unwrap();
        prop_assert_eq!(ab_c, a_bc);
    }

    #[test]
    fn traversal_order_does_not_matter(pairs in proptest::collection::vec((label_map(8, false), label_map(8, true)), 2..6)) {
        let forward = matrix(&pairs);
        let mut reversed = pairs.clone();
        reversed.reverse();
        prop_assert_eq!(&forward, &matrix(&reversed));
        // transposing every map visits pixels in a different order
        let transposed: Vec<_> = pairs
            .iter()
            .map(|(p, g)| {
                let t = |m: &LabelMap| LabelMap::from_fn(m.width(), m.height(), |y, x| m.get(x, y));
                (t(p), t(g))
            })
            .collect();
        prop_assert_eq!(forward, matrix(&transposed));
    }
}

#[test]
fn table_rows_reproduce_printed_means() {
    let rows: [([f64; 9], f64); 3] = [
        ([92.04, 80.37, 92.48, 89.08, 76.89, 90.71, 88.88, 81.89, 97.53], 87.76),
        ([93.62, 81.61, 94.29, 89.6, 78.68, 91.78, 88.89, 83.83, 97.63], 88.88),
        ([91.18, 79.31, 93.6, 89.34, 76.18, 89.73, 88.35, 80.32, 97.47], 87.28),
    ];
    for (values, printed) in rows {
        let per_class: Vec<Option<f64>> = values.iter().map(|v| Some(v / 100.0)).collect();
        let m = mean_iou(&per_class).unwrap() * 100.0;
        assert!((m - printed).abs() <= 0.005, "{m} vs {printed}");
    }
}

#[test]
fn json_then_markdown_equals_direct_markdown() {
    let pairs = [(
        LabelMap::from_fn(8, 8, |y, _| (y % 9) as u8),
        LabelMap::from_fn(8, 8, |y, x| if x == 0 { IGNORE_ID } else { ((y + x / 5) % 9) as u8 }),
    )];
    let report = EvalReport::from_confusion(&matrix(&pairs), "live", "toy", 1, 0);
    let json = render_report(&report, ReportFormat::Json).unwrap();
    let parsed: EvalReport = serde_json::from_str(&json).unwrap();
    assert_eq!(
        render_report(&parsed, ReportFormat::Markdown).unwrap(),
        render_report(&report, ReportFormat::Markdown).unwrap()
    );
}
