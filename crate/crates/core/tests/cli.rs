//! End-to-end tests of the command-line binary: every subcommand, the file
//! contracts between them, and the exit-status conventions.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use canens::doc::{
    read_json, ForwardDoc, FullDensityDoc, InstanceDocument, SampleDoc, SamplerDoc, SolveDoc,
    SolverDoc, SpaceDoc, SystemDoc, TableDoc, TargetDoc, VerifyDoc,
};
use canens::solver::gauge_fix;
use canens::space::{StateSpace, SymmetricTable};
use std::sync::Arc;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_canens"))
}

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("canens-cli-{}-{name}", std::process::id()));
    if dir.exists() {
        fs::remove_dir_all(&dir).unwrap();
    }
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin()
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn assert_exit(output: &Output, expected: i32) {
    assert_eq!(
        output.status.code(),
        Some(expected),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

/// The worked pair instance: two particles on two unit cells, no internal
/// potential, and the target produced by u({0,0}) = ln 2. Exact values:
/// Z = 3.5, density (1/7, 2/7, 2/7).
fn pair_instance() -> InstanceDocument {
    InstanceDocument {
        space: SpaceDoc {
            num_cells: 2,
            weights: vec![1.0, 1.0],
        },
        system: SystemDoc { n: 2, m: 2 },
        w: Vec::new(),
        target: Some(TargetDoc {
            order: 2,
            values: vec![1.0 / 7.0, 2.0 / 7.0, 2.0 / 7.0],
        }),
        p: Some(FullDensityDoc {
            values: vec![1.0 / 7.0, 2.0 / 7.0, 2.0 / 7.0],
        }),
        solver: SolverDoc::default(),
        sampler: SamplerDoc {
            num_chains: 4,
            sweeps: 20_000,
            burn_in: 1_000,
            seed: 5,
        },
    }
}

fn pair_potential_table() -> TableDoc {
    TableDoc {
        order: 2,
        num_cells: 2,
        weights: vec![1.0, 1.0],
        values: vec![2.0f64.ln(), 0.0, 0.0],
    }
}

#[test]
fn generate_is_deterministic_and_self_consistent() {
    let dir = workdir("generate-deterministic");
    let args = [
        "generate",
        "--cells",
        "4",
        "--particles",
        "3",
        "--order",
        "2",
        "--seed",
        "7",
    ];
    assert_exit(&run_in(&dir, &args), 0);
    let first_instance = fs::read(dir.join("instance.json")).unwrap();
    let first_answer = fs::read(dir.join("instance.answer.json")).unwrap();
    assert_exit(&run_in(&dir, &args), 0);
    assert_eq!(first_instance, fs::read(dir.join("instance.json")).unwrap());
    assert_eq!(
        first_answer,
        fs::read(dir.join("instance.answer.json")).unwrap()
    );

    // The recorded target is the density of the recorded answer potential.
    let doc = InstanceDocument::from_path(&dir.join("instance.json")).unwrap();
    let sys = doc.build_system().unwrap();
    let answer = TableDoc::from_path(&dir.join("instance.answer.json"))
        .unwrap()
        .to_table_on(sys.space())
        .unwrap();
    let density = sys.m_density(&answer).unwrap();
    let space = doc.build_space().unwrap();
    let target = doc.target_table(&space).unwrap().unwrap();
    assert!(density.sup_distance(&target).unwrap() <= 1e-15);
    // A full-order density is included and reduces to the target.
    let full = doc.full_density_table(&space).unwrap().unwrap();
    let reduced = canens::ensemble::reduce_density(&full, 2).unwrap();
    assert!(reduced.sup_distance(&target).unwrap() <= 1e-12);
}

#[test]
fn generate_zero_range_writes_zero_answer() {
    let dir = workdir("generate-zero");
    let output = run_in(
        &dir,
        &[
            "generate",
            "--cells",
            "3",
            "--particles",
            "3",
            "--order",
            "2",
            "--potential-range",
            "0",
            "0",
        ],
    );
    assert_exit(&output, 0);
    let answer = TableDoc::from_path(&dir.join("instance.answer.json")).unwrap();
    assert!(answer.values.iter().all(|&v| v == 0.0));
}

#[test]
fn generate_refuses_oversized_instances() {
    let dir = workdir("generate-oversized");
    let output = run_in(
        &dir,
        &[
            "generate",
            "--cells",
            "10",
            "--particles",
            "12",
            "--order",
            "2",
        ],
    );
    assert_exit(&output, 1);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("1000000000000"), "stderr: {stderr}");
}

#[test]
fn forward_reproduces_the_hand_computed_density() {
    let dir = workdir("forward-pair");
    pair_instance().to_path(&dir.join("instance.json")).unwrap();
    pair_potential_table().to_path(&dir.join("u.json")).unwrap();
    let output = run_in(
        &dir,
        &["forward", "instance.json", "--potential", "u.json"],
    );
    assert_exit(&output, 0);
    let forward: ForwardDoc = read_json(&dir.join("forward.json")).unwrap();
    assert!((forward.log_z - 3.5f64.ln()).abs() <= 1e-12);
    let expected = [1.0 / 7.0, 2.0 / 7.0, 2.0 / 7.0];
    for (got, want) in forward.density.values.iter().zip(expected) {
        assert!((got - want).abs() <= 1e-12);
    }
    // log_f is reported because the instance carries a target, and the
    // upper bound because it carries the full-order density. The inner
    // product picks up u only on the {0,0} entry: (1/7) * ln 2.
    let log_f = forward.log_f.unwrap();
    let expected_log_f = -(2.0f64.ln()) / 7.0 - 3.5f64.ln();
    assert!((log_f - expected_log_f).abs() <= 1e-12, "log_f {log_f}");
    assert!(forward.upper_bound_log.is_some());

    // The written density re-reads and re-integrates to one.
    let table = forward.density.to_table().unwrap();
    assert!((table.integrate() - 1.0).abs() <= 1e-10);
}

#[test]
fn forward_defaults_to_zero_interaction() {
    let dir = workdir("forward-zero");
    let mut doc = pair_instance();
    doc.target = None;
    doc.p = None;
    doc.to_path(&dir.join("instance.json")).unwrap();
    let output = run_in(&dir, &["forward", "instance.json"]);
    assert_exit(&output, 0);
    let forward: ForwardDoc = read_json(&dir.join("forward.json")).unwrap();
    for &v in &forward.density.values {
        assert!((v - 0.25).abs() <= 1e-14);
    }
    assert!((forward.log_z - 4.0f64.ln()).abs() <= 1e-13);
    assert!(forward.log_f.is_none());
}

#[test]
fn forward_uses_the_answer_sidecar_when_present() {
    let dir = workdir("forward-answer");
    assert_exit(
        &run_in(
            &dir,
            &[
                "generate",
                "--cells",
                "3",
                "--particles",
                "3",
                "--order",
                "2",
                "--seed",
                "3",
            ],
        ),
        0,
    );
    assert_exit(&run_in(&dir, &["forward", "instance.json"]), 0);
    let forward: ForwardDoc = read_json(&dir.join("forward.json")).unwrap();
    let doc = InstanceDocument::from_path(&dir.join("instance.json")).unwrap();
    let target = doc.target.unwrap();
    for (got, want) in forward.density.values.iter().zip(&target.values) {
        assert!((got - want).abs() <= 1e-15);
    }
}

#[test]
fn forward_missing_potential_file_is_an_input_error() {
    let dir = workdir("forward-missing");
    pair_instance().to_path(&dir.join("instance.json")).unwrap();
    let output = run_in(
        &dir,
        &["forward", "instance.json", "--potential", "nope.json"],
    );
    assert_exit(&output, 1);
}

#[test]
fn invert_round_trips_the_generated_answer() {
    let dir = workdir("invert-roundtrip");
    assert_exit(
        &run_in(
            &dir,
            &[
                "generate",
                "--cells",
                "4",
                "--particles",
                "3",
                "--order",
                "2",
                "--seed",
                "11",
            ],
        ),
        0,
    );
    let output = run_in(&dir, &["invert", "instance.json"]);
    assert_exit(&output, 0);
    let solve: SolveDoc = read_json(&dir.join("solve.json")).unwrap();
    assert!(solve.converged);
    assert!(solve.final_residual <= 1e-10);
    let recovered = solve.u.to_table().unwrap();
    let space = Arc::new(StateSpace::new(solve.u.weights.clone()).unwrap());
    let answer_doc = TableDoc::from_path(&dir.join("instance.answer.json")).unwrap();
    let answer = SymmetricTable::new(space, answer_doc.order, answer_doc.values).unwrap();
    assert!(
        recovered.sup_distance(&gauge_fix(&answer)).unwrap() <= 1e-7,
        "distance {}",
        recovered.sup_distance(&gauge_fix(&answer)).unwrap()
    );
}

#[test]
fn invert_without_budget_exits_nonconverged() {
    let dir = workdir("invert-budget");
    pair_instance().to_path(&dir.join("instance.json")).unwrap();
    let output = run_in(&dir, &["invert", "instance.json", "--max-iters", "0"]);
    assert_exit(&output, 2);
    let solve: SolveDoc = read_json(&dir.join("solve.json")).unwrap();
    assert!(!solve.converged);
    assert_eq!(solve.iterations, 0);
    assert!(solve.final_residual > 0.0);
}

#[test]
fn invert_without_target_is_an_input_error() {
    let dir = workdir("invert-notarget");
    let mut doc = pair_instance();
    doc.target = None;
    doc.to_path(&dir.join("instance.json")).unwrap();
    let output = run_in(&dir, &["invert", "instance.json"]);
    assert_exit(&output, 1);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("target"), "stderr: {stderr}");
}

#[test]
fn invert_rejects_an_unnormalized_target() {
    let dir = workdir("invert-unnormalized");
    let mut doc = pair_instance();
    doc.target = Some(TargetDoc {
        order: 2,
        values: vec![0.5, 0.5, 0.5],
    });
    doc.to_path(&dir.join("instance.json")).unwrap();
    let output = run_in(&dir, &["invert", "instance.json"]);
    assert_exit(&output, 1);
}

#[test]
fn sample_matches_the_exact_density_within_noise() {
    let dir = workdir("sample-pair");
    pair_instance().to_path(&dir.join("instance.json")).unwrap();
    pair_potential_table().to_path(&dir.join("u.json")).unwrap();
    assert_exit(
        &run_in(
            &dir,
            &["forward", "instance.json", "--potential", "u.json"],
        ),
        0,
    );
    assert_exit(
        &run_in(
            &dir,
            &["sample", "instance.json", "--potential", "u.json"],
        ),
        0,
    );
    let forward: ForwardDoc = read_json(&dir.join("forward.json")).unwrap();
    let sample: SampleDoc = read_json(&dir.join("sample.json")).unwrap();
    for rank in 0..forward.density.values.len() {
        let exact = forward.density.values[rank];
        let mean = sample.mean.values[rank];
        let stderr = sample.stderr.values[rank];
        assert!(
            (mean - exact).abs() <= 3.0 * stderr,
            "rank {rank}: |{mean} - {exact}| > 3 * {stderr}"
        );
    }
    assert!(sample.acceptance_rate > 0.0 && sample.acceptance_rate <= 1.0);
}

#[test]
fn sample_trapped_chain_exits_nonconverged() {
    let dir = workdir("sample-trapped");
    let mut doc = pair_instance();
    doc.target = None;
    doc.p = None;
    doc.to_path(&dir.join("instance.json")).unwrap();
    TableDoc {
        order: 2,
        num_cells: 2,
        weights: vec![1.0, 1.0],
        values: vec![-60.0, 60.0, 60.0],
    }
    .to_path(&dir.join("trap.json"))
    .unwrap();
    let output = run_in(
        &dir,
        &["sample", "instance.json", "--potential", "trap.json"],
    );
    assert_exit(&output, 2);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("acceptance"), "stderr: {stderr}");
}

#[test]
fn verify_passes_on_a_generated_instance() {
    let dir = workdir("verify-pass");
    assert_exit(
        &run_in(
            &dir,
            &[
                "generate",
                "--cells",
                "3",
                "--particles",
                "3",
                "--order",
                "2",
                "--seed",
                "2",
                "--potential-range",
                "-0.5",
                "0.5",
                "--internal-range",
                "-0.3",
                "0.3",
            ],
        ),
        0,
    );
    let output = run_in(&dir, &["verify", "instance.json"]);
    assert_exit(&output, 0);
    let stdout = String::from_utf8_lossy(&output.stdout);
    for name in [
        "concavity",
        "gradient_fd",
        "uniqueness",
        "consistency",
        "upper_bound",
        "minorization",
    ] {
        assert!(stdout.contains(name), "missing {name} in: {stdout}");
    }
    let report: VerifyDoc = read_json(&dir.join("verify.json")).unwrap();
    assert!(report.passed);
    assert_eq!(report.reports.len(), 7);
}

#[test]
fn verify_catches_a_corrupted_target() {
    let dir = workdir("verify-corrupt");
    assert_exit(
        &run_in(
            &dir,
            &[
                "generate",
                "--cells",
                "3",
                "--particles",
                "3",
                "--order",
                "2",
                "--seed",
                "2",
                "--potential-range",
                "-0.5",
                "0.5",
                "--internal-range",
                "-0.3",
                "0.3",
            ],
        ),
        0,
    );
    let path = dir.join("instance.json");
    let mut doc = InstanceDocument::from_path(&path).unwrap();
    let target = doc.target.as_mut().unwrap();
    target.values[1] += 1e-3;
    let total: f64 = {
        let space = Arc::new(StateSpace::new(doc.space.weights.clone()).unwrap());
        SymmetricTable::new(space, 2, target.values.clone())
            .unwrap()
            .integrate()
    };
    for v in &mut target.values {
        *v /= total;
    }
    doc.to_path(&path).unwrap();
    let output = run_in(&dir, &["verify", "instance.json"]);
    assert_exit(&output, 3);
    let report: VerifyDoc = read_json(&dir.join("verify.json")).unwrap();
    assert!(!report.passed);
    let consistency = report
        .reports
        .iter()
        .find(|r| r.name == "consistency")
        .unwrap();
    assert!(!consistency.passed);
}

#[test]
fn verify_unreachable_target_is_inconclusive() {
    let dir = workdir("verify-inconclusive");
    let doc = InstanceDocument {
        space: SpaceDoc {
            num_cells: 2,
            weights: vec![1.0, 1.0],
        },
        system: SystemDoc { n: 3, m: 2 },
        w: Vec::new(),
        // Mixed-pair density 0.45 exceeds the 1/3 extreme of three particles
        // on two cells, so no interaction reproduces it: the uniqueness
        // check's solver runs cannot converge.
        target: Some(TargetDoc {
            order: 2,
            values: vec![0.05, 0.45, 0.05],
        }),
        p: None,
        solver: SolverDoc {
            max_iters: 60,
            ..SolverDoc::default()
        },
        sampler: SamplerDoc::default(),
    };
    doc.to_path(&dir.join("instance.json")).unwrap();
    let output = run_in(&dir, &["verify", "instance.json"]);
    assert_exit(&output, 2);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("inconclusive"), "stdout: {stdout}");
}

#[test]
fn malformed_instance_is_an_input_error() {
    let dir = workdir("malformed");
    fs::write(dir.join("instance.json"), "{ not json").unwrap();
    for sub in ["forward", "invert", "sample", "verify"] {
        let output = run_in(&dir, &[sub, "instance.json"]);
        assert_exit(&output, 1);
    }
}

#[test]
fn usage_errors_and_help() {
    let dir = workdir("usage");
    assert_exit(&run_in(&dir, &["frobnicate"]), 1);
    assert_exit(&run_in(&dir, &[]), 1);
    let help = run_in(&dir, &["--help"]);
    assert_exit(&help, 0);
    let text = String::from_utf8_lossy(&help.stdout);
    for sub in ["generate", "forward", "invert", "sample", "verify"] {
        assert!(text.contains(sub), "help missing {sub}");
    }
}
