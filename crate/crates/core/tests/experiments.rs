use matchnet::experiment::{histogram, Preset, Sampling, Scale};

#[test]
fn ml_histogram_mean_falls_between_bounds() {
    let scale = Scale::desk(Preset::HistogramMl);
    let r = histogram(Preset::HistogramMl, &scale, &Sampling::default(), 1, 4).unwrap();
    let lo = r.bounds.lower_mean.value().unwrap();
    let hi = r.bounds.upper_mean.value().unwrap();
    assert_eq!(r.summary.n_runs, 200);
    assert!(lo <= r.empirical_mean && r.empirical_mean <= hi, "{lo} <= {} <= {hi}", r.empirical_mean);
}

#[test]
fn noisy_histogram_reports_noise_quantile() {
    let scale = Scale {
        runs: 40,
        ..Scale::desk(Preset::HistogramNoisy)
    };
    let r = histogram(Preset::HistogramNoisy, &scale, &Sampling::default(), 2, 4).unwrap();
    assert!(r.bounds.u_kappa > 0.0 && r.bounds.u_kappa <= 1.0);
    assert!(r.bounds.upper_mean.value().unwrap() > r.bounds.lower_mean.value().unwrap());
}
