use pd_lab::asymptotics::{
    verify_gumbel, verify_ldp_p1, verify_ldp_pk, GumbelOptions, ScalingLaw, ThetaSweep, RESOLUTION,
};
use pd_lab::special::EULER_GAMMA;

#[test]
fn gumbel_mean_drifts_upward() {
    let sweep = ThetaSweep::new(vec![100.0, 300.0, 1000.0], 10_000, 3).unwrap();
    let report = verify_gumbel(&sweep, &GumbelOptions::default()).unwrap();
    let means: Vec<_> = report.rows_for("mean_y1").collect();
    assert_eq!(means.len(), 3);
    assert!(means[2].statistic > means[0].statistic + 3.0 * means[2].err.max(means[0].err));
    assert!(means
        .iter()
        .all(|r| r.target == ScalingLaw::new(1).unwrap().mean().unwrap()));
    assert!((means[0].target - EULER_GAMMA).abs() < 1e-8);
}

#[test]
fn gumbel_rejects_small_theta() {
    let sweep = ThetaSweep::new(vec![1.0, 10.0], 100, 0).unwrap();
    assert!(verify_gumbel(&sweep, &GumbelOptions::default()).is_err());
}

#[test]
fn rank_two_beyond_one_half_is_out_of_support() {
    let sweep = ThetaSweep::new(vec![20.0, 50.0], 1, 0).unwrap();
    let report = verify_ldp_pk(&sweep, 2, 0.55, None, RESOLUTION).unwrap();
    assert_eq!(report.verdict.label, "out of support");
    assert!(report.rows.iter().all(|r| r.target.is_infinite()));
}

#[test]
fn ldp_csv_schema() {
    let sweep = ThetaSweep::new(vec![20.0, 40.0], 1, 0).unwrap();
    let report = verify_ldp_p1(&sweep, 0.5, RESOLUTION).unwrap();
    let mut buf = Vec::new();
    report.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("quantity,theta,statistic,target,gap,err,method"));
    assert_eq!(lines.count(), 2);
    let json = report.verdict_json();
    assert_eq!(json["passed"], report.verdict.passed);
}
