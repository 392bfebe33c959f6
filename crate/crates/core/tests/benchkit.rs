use jellymon::benchkit::*;
use jellymon::eventfuse::build_fusion_model;
use jellymon::framecls::build_frame_model;

#[test]
fn rows_follow_lengths() {
    let (f, g) = (build_frame_model(0), build_fusion_model(0));
    let rows = bench_event_latency(&f, &g, &[4, 40], 10, 1).unwrap();
    assert_eq!(rows.iter().map(|r| r.length).collect::<Vec<_>>(), vec![4, 40]);
    for r in &rows {
        assert!(r.t_avg_ms > 0.0);
        assert!(r.overhead_ratio >= 0.0, "{r:?}");
        assert!((r.overhead_ratio - (r.t_fusion_ms / r.t_avg_ms - 1.0)).abs() < 1e-12);
    }
    let csv = bench_csv(&rows);
    assert!(csv.starts_with("length,t_avg_ms,t_fusion_ms,overhead_ratio\n4,"));
    assert_eq!(csv.lines().count(), 3);

    let meta = BenchMetadata::collect(&rows, 10, 1);
    assert_eq!(meta.lengths, vec![4, 40]);
    assert!(serde_json::to_string(&meta).unwrap().contains("\"os\""));
}

#[test]
fn invalid_requests_rejected() {
    let (f, g) = (build_frame_model(0), build_fusion_model(0));
    assert!(bench_event_latency(&f, &g, &[3], 10, 0).is_err());
    assert!(bench_event_latency(&f, &g, &[301], 10, 0).is_err());
    assert!(bench_event_latency(&f, &g, &[10], 9, 0).is_err());
    assert!(bench_event_latency(&f, &g, &[], 10, 0).is_err());
}
