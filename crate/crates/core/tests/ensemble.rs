use dla1d::dla::{run, RunConfig};
use dla1d::rng::substream;
use dla1d::stats::{ensemble_run, loglog_slope, Bootstrap};
use dla1d::Summary;

#[test]
fn single_run_ensemble_is_that_run() {
    let cfg = RunConfig::new(0.5, 300.0);
    let s: Summary = ensemble_run(1, 5, "echo".into(), |st| run(&cfg, st)).unwrap();
    let traj = run(&cfg, substream(5, 0)).unwrap();
    assert_eq!(s.times, traj.times());
    let fronts: Vec<f64> = traj.fronts().iter().map(|&f| f as f64).collect();
    assert_eq!(s.mean, fronts);
    assert_eq!(s.config_echo, "echo");
}

#[test]
fn ensemble_means_are_monotone_and_reproducible() {
    let cfg = RunConfig::new(0.5, 1000.0).fast();
    let a: Summary = ensemble_run(24, 6, String::new(), |st| run(&cfg, st)).unwrap();
    let b: Summary = ensemble_run(24, 6, String::new(), |st| run(&cfg, st)).unwrap();
    assert_eq!(a, b);
    assert!(a.mean.windows(2).all(|w| w[0] <= w[1]));
    assert!(a.n.iter().all(|&n| n == 24));
    let slope = loglog_slope(&a, 10.0, 1000.0, &Bootstrap::default()).unwrap();
    assert!(slope.ci_lo <= slope.slope && slope.slope <= slope.ci_hi);
}

#[test]
fn window_exhaustion_is_reported_not_imputed() {
    let mut cfg = RunConfig::new(0.5, 2000.0);
    cfg.window_override = Some(100);
    cfg.window_mode = Some(dla1d::field::WindowMode::Diffusive);
    // The override is below the diffusive bound and must be refused up front.
    assert!(run(&cfg, substream(0, 0)).is_err());
}
