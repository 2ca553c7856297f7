use houghreg::bench::{run_suite, BenchSuite};

// Lower inlier ratios should never do better, up to three trials of slack.
#[test]
fn recall_does_not_rise_as_inliers_thin_out() {
    let suite = BenchSuite::default_suite();
    let report = run_suite(&suite).unwrap();
    let slack = 3.0 / suite.trials as f64;
    let variants = suite.variants().len();
    for v in 0..variants {
        let mut cells: Vec<_> = report.rows.iter().skip(v).step_by(variants).collect();
        cells.sort_by(|a, b| b.inlier_ratio.total_cmp(&a.inlier_ratio));
        for w in cells.windows(2) {
            assert!(
                w[1].recall <= w[0].recall + slack,
                "{} recall {} at ratio {} vs {} at {}",
                w[0].method.as_str(),
                w[1].recall,
                w[1].inlier_ratio,
                w[0].recall,
                w[0].inlier_ratio
            );
        }
    }
    assert_eq!(report.records.len(), suite.scenarios().len() * variants * suite.trials);
}
