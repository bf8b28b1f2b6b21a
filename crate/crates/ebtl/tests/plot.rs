use ebtl::layout::RunDir;
use ebtl::plot::{emit_plots, histogram_svg, Band, HISTOGRAM_BINS};
use ebtl::records::{write_csv, MetricsRow};
use ebtl::Error;

fn metrics(seed: u64, scale: f64) -> Vec<MetricsRow> {
    (0..5)
        .map(|i| MetricsRow {
            seed,
            global_step: i * 100,
            mean_eval_return: scale * i as f64 / 4.0,
            guidance_issue_rate: 0.0,
            correct_guidance_rate: 0.0,
            incorrect_guidance_rate: 0.0,
            mean_phi_id: f64::NAN,
            mean_phi_ood: f64::NAN,
        })
        .collect()
}

#[test]
fn histogram_has_fifty_bins() {
    assert_eq!(HISTOGRAM_BINS, 50);
    let values: Vec<f64> = (0..500).map(|i| i as f64 / 10.0).collect();
    let svg = histogram_svg("t", "x", &[("all".into(), values)], HISTOGRAM_BINS);
    assert_eq!(svg.matches("fill-opacity=\"0.45\"").count(), 50);
}

#[test]
fn missing_csv_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let run = RunDir::new(dir.path());
    std::fs::create_dir_all(run.transfer("aa", 0)).unwrap();
    match emit_plots(&run) {
        Err(Error::MissingFile(p)) => assert!(p.ends_with("transfer/aa/seed-0/metrics.csv"), "{}", p.display()),
        other => panic!("{other:?}"),
    }
    let empty = tempfile::tempdir().unwrap();
    let err = emit_plots(&RunDir::new(empty.path())).unwrap_err();
    assert!(err.to_string().contains(empty.path().to_str().unwrap()));
}

#[test]
fn band_plot_averages_every_seed_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = RunDir::new(dir.path());
    for seed in 0..10 {
        write_csv(&run.transfer("no_transfer", seed).join("metrics.csv"), &metrics(seed, 1.0 + seed as f64 / 10.0)).unwrap();
    }
    let written = emit_plots(&run).unwrap();
    let svg = std::fs::read_to_string(run.plots().join("transfer_returns.svg")).unwrap();
    assert!(written.contains(&run.plots().join("transfer_returns.svg")));
    assert_eq!(svg.matches("<polyline").count(), 1);
    assert!(svg.contains("fill-opacity=\"0.2\""));
    emit_plots(&run).unwrap();
    assert_eq!(svg, std::fs::read_to_string(run.plots().join("transfer_returns.svg")).unwrap());
    let bands = ebtl::analysis::mean_curve(&(0..10).map(|s| metrics(s, 1.0 + s as f64 / 10.0).iter().map(|m| (m.global_step, m.mean_eval_return)).collect()).collect::<Vec<_>>());
    assert!((bands[4].1 - 1.45).abs() < 1e-12);
    let _ = Band { label: String::new(), points: bands };
}
