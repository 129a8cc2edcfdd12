use hearthwire_bench::{
    compare_modes, Aggregate, BenchReport, IncomparableReports, Mode, StageTimings, CSV_HEADER, STAGES,
};
use proptest::prelude::*;

/// Independent percentile: the smallest sample `x` such that at least `pct`%
/// of the samples are `<= x`.
fn oracle_percentile(values: &[f64], pct: f64) -> f64 {
    let n = values.len() as f64;
    let mut candidates = values.to_vec();
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for &x in &candidates {
        let at_or_below = values.iter().filter(|&&v| v <= x).count() as f64;
        if at_or_below * 100.0 >= pct * n {
            return x;
        }
    }
    unreachable!()
}

fn oracle_mean(values: &[f64]) -> f64 {
    // Kahan summation, so the comparison is not against the same arithmetic.
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for &v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum / values.len() as f64
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

fn synthetic(mode: Mode, totals: &[(f64, f64, f64, f64)]) -> BenchReport {
    let samples = totals.iter().map(|&(s, t, v, e)| StageTimings::new(s, t, v, e)).collect();
    BenchReport::new(mode, "bulb-toggle", 100, samples)
}

#[test]
fn table_row_sums_to_its_total() {
    let row = StageTimings::new(20.0, 480.0, 525.0, 426.0);
    assert_eq!(row.total_ms, 1451.0);
    assert!(row.sum_holds());
}

#[test]
fn negative_stage_is_clamped() {
    let row = StageTimings::new(0.0, -0.01, 1.0, 2.0);
    assert_eq!(row.transport_ms, 0.0);
    assert_eq!(row.total_ms, 3.0);
}

#[test]
fn percentile_edges() {
    assert_eq!(Aggregate::of(&[7.0]), Aggregate { mean: 7.0, p50: 7.0, p95: 7.0 });
    let v: Vec<f64> = (1..=100).map(f64::from).collect();
    let a = Aggregate::of(&v);
    assert_eq!((a.p50, a.p95, a.mean), (50.0, 95.0, 50.5));
    let a = Aggregate::of(&[4.0, 1.0, 3.0, 2.0]);
    assert_eq!((a.p50, a.p95), (2.0, 4.0));
}

#[test]
fn csv_shape() {
    let r = synthetic(Mode::Mqtt, &[(0.0, 1.5, 0.0, 0.25), (0.0, 2.0, 0.0, 0.5)]);
    let csv = r.to_csv();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines[1], "mqtt,1,0,1.5,0,0.25,1.75");
    assert_eq!(lines[2], "mqtt,2,0,2,0,0.5,2.5");
}

#[test]
fn identical_reports_have_zero_deltas() {
    let r = synthetic(Mode::HttpSigned, &[(1.0, 2.0, 3.0, 4.0), (2.0, 2.0, 2.0, 2.0)]);
    let cmp = compare_modes(&r, &r).unwrap();
    for s in &cmp.stages {
        assert_eq!(s.delta, Aggregate { mean: 0.0, p50: 0.0, p95: 0.0 }, "{}", s.stage);
    }
    assert_eq!(cmp.payload_delta, 0);
    assert!(cmp.verdicts.iter().all(|v| v.contains(": equal (")));
}

#[test]
fn delta_arithmetic_on_fixed_timings() {
    let http = synthetic(Mode::HttpSigned, &[(1.0, 4.0, 2.0, 1.0); 4]);
    let mut mqtt = synthetic(Mode::Mqtt, &[(0.0, 2.5, 0.0, 0.5); 4]);
    mqtt.payload_bytes = 66;
    let cmp = compare_modes(&http, &mqtt).unwrap();
    let total = cmp.stages.iter().find(|s| s.stage == "total_ms").unwrap();
    assert_eq!((total.a.p50, total.b.p50, total.delta.p50), (8.0, 3.0, -5.0));
    assert_eq!(cmp.payload_delta, 66 - 100);
    assert!(cmp
        .verdicts
        .contains(&"total_ms p50: mqtt lower by 5 ms (http-signed 8, mqtt 3)".to_owned()));
    assert!(cmp
        .verdicts
        .contains(&"payload_bytes: mqtt lower by 34 bytes (http-signed 100, mqtt 66)".to_owned()));

    // Swapping arguments flips the sign but not the winner.
    let back = compare_modes(&mqtt, &http).unwrap();
    let total = back.stages.iter().find(|s| s.stage == "total_ms").unwrap();
    assert_eq!(total.delta.p50, 5.0);
    assert!(back.verdicts[4].starts_with("total_ms p50: mqtt lower by 5 ms"));
}

#[test]
fn mismatched_reports_are_incomparable() {
    let a = synthetic(Mode::HttpSigned, &[(1.0, 1.0, 1.0, 1.0); 3]);
    let b = synthetic(Mode::Mqtt, &[(1.0, 1.0, 1.0, 1.0); 2]);
    assert!(matches!(compare_modes(&a, &b), Err(IncomparableReports(_))));
    let mut c = synthetic(Mode::Mqtt, &[(1.0, 1.0, 1.0, 1.0); 3]);
    c.command_mix = "all-devices".into();
    assert!(compare_modes(&a, &c).is_err());
}

#[test]
fn mode_names() {
    for m in Mode::ALL {
        assert_eq!(m.to_string().parse::<Mode>().unwrap(), m);
        assert_eq!(serde_json::to_value(m).unwrap(), m.to_string());
    }
    assert!("https".parse::<Mode>().is_err());
}

fn stage() -> impl Strategy<Value = f64> {
    prop_oneof![0.0..2000.0f64, Just(0.0), (0u32..5000).prop_map(|v| v as f64 / 4.0)]
}

proptest! {
    #[test]
    fn every_row_sums(s in stage(), t in stage(), v in stage(), e in stage()) {
        let row = StageTimings::new(s, t, v, e);
        prop_assert!(row.sum_holds());
        prop_assert!(STAGES.iter().all(|name| row.stage(name).unwrap() >= 0.0));
    }

    #[test]
    fn aggregates_match_independent_recomputation(
        rows in prop::collection::vec((stage(), stage(), stage(), stage()), 1..120)
    ) {
        let report = synthetic(Mode::HttpUnsigned, &rows);
        for name in STAGES {
            let values: Vec<f64> = report.samples.iter().map(|s| s.stage(name).unwrap()).collect();
            let agg = report.aggregates.stage(name).unwrap();
            prop_assert!(close(agg.mean, oracle_mean(&values)), "{name} mean");
            prop_assert_eq!(agg.p50, oracle_percentile(&values, 50.0));
            prop_assert_eq!(agg.p95, oracle_percentile(&values, 95.0));
        }
    }

    #[test]
    fn json_round_trip(rows in prop::collection::vec((stage(), stage(), stage(), stage()), 1..20)) {
        let report = synthetic(Mode::HttpSigned, &rows);
        let back = BenchReport::from_json(&report.to_json()).unwrap();
        prop_assert_eq!(&back, &report);
        prop_assert!(back.samples.iter().all(StageTimings::sum_holds));
    }

    #[test]
    fn csv_rows_parse_back(rows in prop::collection::vec((stage(), stage(), stage(), stage()), 1..20)) {
        let report = synthetic(Mode::Mqtt, &rows);
        let csv = report.to_csv();
        for (line, sample) in csv.lines().skip(1).zip(&report.samples) {
            let cols: Vec<f64> = line.split(',').skip(2).map(|c| c.parse().unwrap()).collect();
            prop_assert_eq!(cols, vec![sample.sign_ms, sample.transport_ms, sample.verify_ms, sample.emulator_ms, sample.total_ms]);
        }
    }
}
