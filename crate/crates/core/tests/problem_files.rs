use geocontrol_core::problem_file::{heisenberg_file, ProblemFile};
use geocontrol_core::reduction::{self, ReducedState};
use geocontrol_core::{heisenberg, numeric, pmp, PmpSolverConfig};

fn load_from_disk(f: &ProblemFile) -> ProblemFile {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("problem.json");
    std::fs::write(&path, serde_json::to_string_pretty(f).unwrap()).unwrap();
    ProblemFile::load(&path).unwrap()
}

#[test]
fn file_problem_tracks_builtin_trajectory() {
    let prob = load_from_disk(&heisenberg_file()).build().unwrap();
    assert!(!prob.has_analytic_derivatives());
    let cfg = PmpSolverConfig::default().with_step(1e-2);
    let p0 = [0.6, 0.8, 1.5];
    let from_file = pmp::integrate_pmp(&prob, &[0.0; 3], &p0, None, 3.0, &cfg).unwrap();
    let builtin = pmp::integrate_pmp(&heisenberg::problem(), &[0.0; 3], &p0, None, 3.0, &cfg).unwrap();
    assert_eq!(from_file.len(), builtin.len());
    let mut worst = 0.0f64;
    for i in 0..builtin.len() {
        for block in ["x", "p", "u"] {
            let a = from_file.block_at(i, block).unwrap();
            let b = builtin.block_at(i, block).unwrap();
            worst = worst.max(numeric::max_abs_diff(a, b));
        }
    }
    assert!(worst <= 1e-6, "{worst}");
    let h = from_file.channel("H").unwrap();
    assert!(h.iter().all(|v| (v - 0.5).abs() <= 1e-6));
}

#[test]
fn file_problem_reduces_like_builtin() {
    let prob = heisenberg_file().build().unwrap();
    let rp = reduction::from_left_invariant(&prob).unwrap();
    let cfg = PmpSolverConfig::default().with_step(1e-2);
    let st0 = ReducedState::on_algebra(heisenberg::initial_momentum(0.4, 1.2), vec![0.0, 0.0]);
    let tr = reduction::integrate_reduced(&rp, &st0, 2.0, &cfg).unwrap();
    for (i, t) in tr.times.iter().enumerate() {
        let mu = tr.block_at(i, "mu").unwrap();
        assert!(numeric::max_abs_diff(mu, &heisenberg::momentum_at(0.4, 1.2, *t)) <= 1e-6);
    }
}

#[test]
fn generator_action_gives_spatial_momentum() {
    // Right-invariant fields generate left translations in exponential
    // coordinates; their momentum is conserved along extremals.
    let text = r#"{
        "name": "heisenberg-generators",
        "n": 3, "r": 2,
        "dynamics": ["u1", "u2", "(x1*u2 - x2*u1)/2"],
        "lagrangian": "0.5*(u1^2 + u2^2)",
        "algebra": {"dim": 3, "structure": [[1, 2, 3, 1]]},
        "action": {"kind": "generators", "fields": [["1", "0", "x2/2"], ["0", "1", "-x1/2"], ["0", "0", "1"]]}
    }"#;
    let prob = ProblemFile::from_json(text).unwrap().build().unwrap();
    let cfg = PmpSolverConfig::default().with_step(1e-2);
    let tr = pmp::integrate_pmp(&prob, &[0.2, -0.1, 0.0], &[1.0, 0.3, 0.7], None, 4.0, &cfg).unwrap();
    for name in ["J_1", "J_2", "J_3"] {
        let j = tr.channel(name).unwrap();
        let drift = j.iter().map(|v| (v - j[0]).abs()).fold(0.0, f64::max);
        assert!(drift <= 1e-6, "{name} drift {drift}");
    }
}
