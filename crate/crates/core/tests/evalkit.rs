use jellymon::evalkit::*;
use jellymon::gate::{apply_gate, GateConfig};
use jellymon::{ClassLabel, ConfidenceVector};
use proptest::prelude::*;

fn matrix(rows: [[u64; 6]; 6]) -> ConfusionMatrix {
    ConfusionMatrix { m: rows, reported_counts: None }
}

#[test]
fn two_class_hand_value() {
    // Class 1: {3, 5} -> std sqrt(2); class 2: {2, 2} -> 0.
    let y = std_sum(&[vec![3.0, 2.0], vec![5.0, 2.0]]).unwrap();
    assert!((y - 2f64.sqrt()).abs() < 1e-12);
}

#[test]
fn baseline_normalises_to_one() {
    let y = std_sum(&[vec![3.0, 2.0], vec![5.0, 2.0]]).unwrap();
    let n = normalize(&[y, 2.0 * y], y).unwrap();
    assert_eq!(n, vec![1.0, 2.0]);
}

#[test]
fn aggregate_hand_values() {
    let s = MeanStd::of(&[68.25, 70.63]).unwrap();
    assert!((s.mean - 69.44).abs() < 1e-12);
    assert!((s.std - 1.6829).abs() < 5e-5);
}

#[test]
fn fp_proportion_consistency() {
    // FP 282.1 over 16250 non-jellyfish events, scaled by 10 to whole counts.
    let mut m = [[0u64; 6]; 6];
    m[1][1] = 500;
    m[3][1] = 2000;
    m[3][3] = 100_000;
    m[4][1] = 821;
    m[4][4] = 59_679;
    let cm = ConfusionMatrix { m, reported_counts: None };
    assert_eq!(cm.jellyfish_fp(), 2821);
    assert_eq!(cm.non_jellyfish_total(), 162_500);
    let p = cm.jellyfish_fp_proportion().unwrap();
    assert!((p * 100.0 - 1.736).abs() < 5e-4, "{p}");
}

#[test]
fn gated_matrix_keeps_argmax_and_counts_reports() {
    let preds = [
        ConfidenceVector::new([0.1, 0.44, 0.1, 0.12, 0.12, 0.12]).unwrap(),
        ConfidenceVector::new([0.1, 0.5, 0.1, 0.1, 0.1, 0.1]).unwrap(),
        ConfidenceVector::new([0.1, 0.6, 0.1, 0.1, 0.05, 0.05]).unwrap(),
    ];
    let labels = [ClassLabel::Jellyfish, ClassLabel::Jellyfish, ClassLabel::Fish];
    let decisions: Vec<_> = preds.iter().map(|p| apply_gate(0, p, &GateConfig::default())).collect();
    let cm = ConfusionMatrix::from_gate(&labels, &decisions).unwrap();
    assert_eq!(cm.m[1][1], 2);
    assert_eq!(cm.m[3][1], 1);
    assert_eq!(cm.reported_counts, Some([0, 1, 0, 1, 0, 0]));
    assert_eq!(cm.jellyfish_accuracy(), Some(0.5));
    assert_eq!(cm.jellyfish_fp(), 1);
    assert!(cm.to_csv().starts_with("true\\pred,B,J,A,F,Sw,Sd,reported\n"));
}

#[test]
fn report_requires_two_runs() {
    let r = RunMetrics { seed: 0, frame_accuracy: 0.5, matrix: matrix([[1; 6]; 6]) };
    assert!(aggregate_runs(&[r.clone()]).is_err());
    let rep = aggregate_runs(&[r.clone(), r]).unwrap();
    assert_eq!(rep.event_accuracy.std, 0.0);
    assert_eq!(rep.frame_accuracy.std, 0.0);
    assert_eq!(rep.jellyfish_fp.std, 0.0);
    assert_eq!(rep.std_sum, 0.0);
    let json = serde_json::to_string(&rep).unwrap();
    assert_eq!(serde_json::from_str::<RunReport>(&json).unwrap(), rep);
    assert!(rep.to_csv().starts_with("metric,mean,std\nframe_accuracy,0.5,0\n"));
}

/// Five fixed run sets with hand-derived sums of sample stds.
#[test]
fn fixed_std_sum_sets() {
    let cases: [(Vec<Vec<f64>>, f64); 5] = [
        (vec![vec![3.0, 2.0], vec![5.0, 2.0]], 2f64.sqrt()),
        (vec![vec![1.0, 1.0, 1.0], vec![1.0, 1.0, 1.0]], 0.0),
        (vec![vec![0.0], vec![2.0], vec![4.0]], 2.0),
        (vec![vec![1.0, 10.0], vec![3.0, 10.0], vec![5.0, 16.0]], 2.0 + 12f64.sqrt()),
        (vec![vec![2.0, 4.0, 6.0], vec![4.0, 8.0, 12.0]], 2f64.sqrt() + 8f64.sqrt() + 18f64.sqrt()),
    ];
    for (runs, want) in cases {
        assert!((std_sum(&runs).unwrap() - want).abs() < 1e-9);
    }
}

fn rows_with_totals(totals: [u64; 6]) -> impl Strategy<Value = [[u64; 6]; 6]> {
    let rows: Vec<_> = totals
        .iter()
        .map(|&t| prop::collection::vec(0u64..=t, 5).prop_map(move |mut cuts| {
            cuts.sort_unstable();
            let mut row = [0u64; 6];
            let mut prev = 0;
            for (i, c) in cuts.iter().enumerate() {
                row[i] = c - prev;
                prev = *c;
            }
            row[5] = t - prev;
            row
        }))
        .collect();
    rows.prop_map(|r| std::array::from_fn(|i| r[i]))
}

proptest! {
    #[test]
    fn mean_matrix_accuracy_is_mean_accuracy(
        runs in prop::collection::vec(rows_with_totals([7, 2, 3, 9, 4, 5]), 2..6),
    ) {
        let metrics: Vec<RunMetrics> = runs.iter().enumerate()
            .map(|(i, m)| RunMetrics { seed: i as u64, frame_accuracy: 0.0, matrix: matrix(*m) })
            .collect();
        let rep = aggregate_runs(&metrics).unwrap();
        let trace: f64 = (0..6).map(|c| rep.mean_matrix[c][c]).sum();
        let total: f64 = rep.mean_matrix.iter().flatten().sum();
        prop_assert!((trace / total - rep.event_accuracy.mean).abs() < 1e-12);
    }

    #[test]
    fn std_sum_ignores_run_order(
        runs in prop::collection::vec(prop::collection::vec(0.0f64..100.0, 6), 2..8),
        rot in 0usize..8,
    ) {
        let mut rotated = runs.clone();
        let k = rot % runs.len();
        rotated.rotate_left(k);
        rotated.reverse();
        prop_assert!((std_sum(&runs).unwrap() - std_sum(&rotated).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn fp_bookkeeping(rows in rows_with_totals([5, 3, 4, 6, 2, 1])) {
        let cm = matrix(rows);
        let correct_rejections: u64 = [0, 2, 3, 4, 5].iter().map(|&c| cm.m[c].iter().sum::<u64>() - cm.m[c][1]).sum();
        prop_assert_eq!(cm.jellyfish_fp() + correct_rejections, cm.non_jellyfish_total());
    }
}
