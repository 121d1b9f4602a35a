use std::f64::consts::PI;

use stickyheat_core::config::Profile;
use stickyheat_core::diagnostics::{DiagnosticsPlan, DiagnosticsReport, PathSummary};
use stickyheat_core::dynamics::{simulate, LatticeRun};
use stickyheat_core::{BasisFn, Boundary, EigenSpec, HeatKernel, OutputKind, ScenarioConfig, SchemeKind};

fn heat_flow_errors(n: usize) -> (f64, f64) {
    let mut c = ScenarioConfig::example("heat");
    c.boundary = Boundary::Dirichlet;
    c.n = n;
    c.t_end = 0.1;
    c.dt = 1e-4;
    c.record_every = 1000;
    c.spec = EigenSpec::zero();
    c.lambda = Profile::Constant { value: 0.0 };
    c.g = Profile::Sine { offset: 0.0, amplitude: 1.0, j: 1 };
    c.ensemble = 1;
    let e = simulate(&c).unwrap();
    let x = e.paths[0].final_state();

    let nf = n as f64;
    let g0: Vec<f64> = (0..n).map(|k| ((PI * k as f64 / nf).cos() - (PI * (k + 1) as f64 / nf).cos()) * nf / PI).collect();
    let discrete = HeatKernel::build(n, Boundary::Dirichlet).unwrap().apply(c.t_end, &g0).unwrap();
    // continuum: the mode decays at rate π²/2 under ½∂²
    let decay = (-PI * PI * c.t_end / 2.0).exp();
    let sup = (0..n).map(|k| (x[k] - discrete[k]).abs()).fold(0.0, f64::max);
    let l2 = ((0..n).map(|k| (x[k] - decay * g0[k]).powi(2)).sum::<f64>() / nf).sqrt();
    (sup, l2)
}

#[test]
fn noiseless_dirichlet_flow_tracks_heat_semigroup() {
    let (sup32, l2_32) = heat_flow_errors(32);
    let (sup64, l2_64) = heat_flow_errors(64);
    assert!(sup32 < 1e-5 && sup64 < 1e-5, "{sup32} {sup64}");
    // zero ghost cells put the wall half a cell out: first order in 1/n
    let ratio = l2_64 / l2_32;
    assert!(l2_64 < 0.05 && (0.4..0.6).contains(&ratio), "{l2_32} {l2_64}");
}

#[test]
fn json_config_drives_diagnostics() {
    let mut c = ScenarioConfig::example("pipe");
    c.n = 8;
    c.t_end = 0.1;
    c.dt = 1e-3;
    c.record_every = 5;
    c.spec = EigenSpec::new(vec![(1.0, BasisFn::Constant), (0.5, BasisFn::Cosine { j: 1 })]);
    c.lambda = Profile::Constant { value: 0.5 };
    c.g = Profile::Constant { value: 0.2 };
    c.ensemble = 64;
    c.outputs = vec![OutputKind::Diag];
    let c = ScenarioConfig::from_json(&c.to_json()).unwrap();

    let run = LatticeRun::new(&c).unwrap();
    let plan = DiagnosticsPlan::standard(&run).unwrap();
    let paths: Vec<_> = (0..c.ensemble).map(|p| run.run_path(p).unwrap()).collect();
    assert!(paths.iter().all(|p| p.states.iter().flatten().all(|&v| v >= 0.0)));
    let summaries: Vec<_> = paths.iter().map(|p| PathSummary::compute(p, &plan).unwrap()).collect();
    let report = DiagnosticsReport::assemble(&c.hash(), c.master_seed, &paths[0].times, &plan, &summaries).unwrap();
    assert_eq!(report.martingale.len(), 2);
    for m in &report.martingale {
        assert_eq!(m.paths, 64);
        assert!(m.fraction_within_3 > 0.9, "{}: {}", m.phi, m.fraction_within_3);
    }
    assert!(report.aborted_paths.is_empty());
}

#[test]
fn schemes_agree_while_far_from_zero() {
    let mut c = ScenarioConfig::example("far");
    c.n = 4;
    c.t_end = 0.05;
    c.dt = 1e-3;
    c.spec = EigenSpec::new(vec![(0.1, BasisFn::Constant)]);
    c.g = Profile::Constant { value: 5.0 };
    c.ensemble = 3;
    c.epsilon = 0.01;
    let hard = simulate(&c).unwrap();
    c.scheme = SchemeKind::Regularized;
    let reg = simulate(&c).unwrap();
    assert_eq!(hard.paths.len(), reg.paths.len());
    for (a, b) in hard.paths.iter().zip(&reg.paths) {
        assert_eq!(a.states, b.states);
    }
}
