use std::fs;
use std::path::Path;
use std::process::Command;

use proptest::prelude::*;
use temrl_cli::runner::{
    aggregate, aggregate_csv, emit_results, parse_records_csv, records_csv, run_bundle, run_cell, run_config,
    CellResult, Format, JsonResults, ResultBundle, Welford, RECORD_HEADER,
};
use temrl_cli::{verify_suite, ExperimentConfig, Variant};
use temrl_core::CurvePoint;

fn exact_config(out: &Path, variants: &str, seeds: &str) -> ExperimentConfig {
    format!(
        "experiment.mode = exact-dp\n\
         experiment.variants = {variants}\n\
         experiment.seeds = {seeds}\n\
         experiment.output = {}\n\
         env.kind = random\n\
         env.n_states = 6\n\
         env.n_actions = 3\n\
         env.gamma = 0.9\n\
         exact.tau = 0.1\n\
         exact.alpha = 0.5\n\
         exact.iters = 40\n",
        out.display()
    )
    .parse()
    .unwrap()
}

fn sampled_config(out: &Path) -> ExperimentConfig {
    format!(
        "experiment.variants = temdqn, tsallisdqn\n\
         experiment.seeds = 0..3\n\
         experiment.output = {}\n\
         env.width = 4\n\
         env.height = 4\n\
         agent.total_steps = 3000\n\
         agent.update_period = 256\n",
        out.display()
    )
    .parse()
    .unwrap()
}

fn csv_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    names
}

#[test]
fn single_exact_cell_writes_cell_and_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = exact_config(dir.path(), "temdqn", "0");
    let bundle = run_config(&cfg).unwrap();
    assert_eq!(bundle.cells.len(), 1);
    assert_eq!(csv_files(dir.path()), vec!["aggregate.csv".to_string(), "temdqn-s0.csv".to_string()]);

    let cell = fs::read_to_string(dir.path().join("temdqn-s0.csv")).unwrap();
    assert_eq!(cell.lines().next().unwrap(), RECORD_HEADER.join(","));
    assert_eq!(cell.lines().count(), 41);
}

#[test]
fn reruns_produce_identical_bytes() {
    for make in [|p: &Path| exact_config(p, "temdqn, mdqn, sql, movi", "0..3"), sampled_config] {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        run_config(&make(a.path())).unwrap();
        run_config(&make(b.path())).unwrap();
        let names = csv_files(a.path());
        assert_eq!(names, csv_files(b.path()));
        for name in names {
            assert_eq!(fs::read(a.path().join(&name)).unwrap(), fs::read(b.path().join(&name)).unwrap(), "{name}");
        }
    }
}

#[test]
fn parallel_and_sequential_runs_agree() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = sampled_config(dir.path());
    let parallel = run_bundle(&cfg).unwrap();
    let mut sequential = ResultBundle::default();
    for &v in &cfg.variants {
        for &s in &cfg.seeds {
            sequential.cells.push(run_cell(&cfg, v, s).unwrap());
        }
    }
    assert_eq!(parallel, sequential);
}

#[test]
fn json_round_trip_reproduces_the_csv() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = run_bundle(&exact_config(dir.path(), "temdqn, log_sparsemax_mdqn", "0..2")).unwrap();
    emit_results(&bundle, Format::Json, dir.path()).unwrap();
    emit_results(&bundle, Format::Csv, dir.path()).unwrap();

    let parsed = JsonResults::from_json(&fs::read_to_string(dir.path().join("results.json")).unwrap()).unwrap();
    assert_eq!(parsed.summary, bundle.summary());
    let direct = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(records_csv(&parsed.records), direct);
    assert_eq!(parse_records_csv(&direct).unwrap(), bundle.records());
}

#[test]
fn empty_bundle_gives_header_only_csv() {
    let dir = tempfile::tempdir().unwrap();
    emit_results(&ResultBundle::default(), Format::Csv, dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(text, format!("{}\n", RECORD_HEADER.join(",")));
    assert_eq!(aggregate_csv(&aggregate(&ResultBundle::default())).lines().count(), 1);
    let json = JsonResults::from_json(&JsonResults::from_bundle(&ResultBundle::default()).to_json()).unwrap();
    assert!(json.records.is_empty() && json.summary.is_empty());
}

fn synthetic_bundle(curves: &[Vec<f64>]) -> ResultBundle {
    let cells = curves
        .iter()
        .enumerate()
        .map(|(seed, curve)| CellResult {
            run_id: format!("temdqn-s{seed}"),
            variant: Variant::Temdqn,
            seed: seed as u64,
            points: curve
                .iter()
                .enumerate()
                .map(|(i, &r)| CurvePoint { env_step: 100 * i, exact_return: r, episode_return: 1.0 - r })
                .collect(),
        })
        .collect();
    ResultBundle { cells }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn welford_matches_two_pass(xs in prop::collection::vec(-1e3f64..1e3, 1..200), offset in -1e6f64..1e6) {
        let shifted: Vec<f64> = xs.iter().map(|x| x + offset).collect();
        let mut acc = Welford::default();
        shifted.iter().for_each(|&x| acc.push(x));
        let n = shifted.len() as f64;
        let mean = shifted.iter().sum::<f64>() / n;
        let var = if shifted.len() > 1 {
            shifted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        prop_assert!((acc.mean() - mean).abs() <= 1e-12 * mean.abs().max(1.0));
        prop_assert!((acc.std() - var.sqrt()).abs() <= 1e-12 * var.sqrt().max(1.0) * offset.abs().max(1.0) / 1e3);
    }

    #[test]
    fn aggregate_matches_brute_force(curves in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 5), 1..8)) {
        let rows = aggregate(&synthetic_bundle(&curves));
        prop_assert_eq!(rows.len(), 5);
        for (i, row) in rows.iter().enumerate() {
            let column: Vec<f64> = curves.iter().map(|c| c[i]).collect();
            let n = column.len() as f64;
            let mean = column.iter().sum::<f64>() / n;
            let std = if column.len() > 1 {
                (column.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            prop_assert_eq!(row.n, column.len());
            prop_assert_eq!(row.env_step, 100 * i);
            prop_assert!((row.mean_exact_return - mean).abs() <= 1e-12);
            prop_assert!((row.std_exact_return - std).abs() <= 1e-12);
            prop_assert!((row.mean_episode_return - (1.0 - mean)).abs() <= 1e-12);
        }
    }
}

#[test]
fn errors_name_the_offending_field() {
    let cases = [
        ("experiment.variants = dqn\n", "experiment.variants"),
        ("experiment.seeds = \n", "experiment.seeds"),
        ("experiment.variants = sql\n", "experiment.variants"),
        ("agent.tau = hot\n", "agent.tau"),
        ("env.kind = maze\n", "env.kind"),
        ("temdqn.learning_rate = -1\n", "temdqn"),
        ("nonsense.key = 1\n", "nonsense.key"),
    ];
    for (text, field) in cases {
        let err = text.parse::<ExperimentConfig>().unwrap_err().to_string();
        assert!(err.contains(field), "{text:?} gave {err:?}");
    }

    let blocker = tempfile::NamedTempFile::new().unwrap();
    let cfg = exact_config(&blocker.path().join("sub"), "temdqn", "0");
    let err = run_config(&cfg).unwrap_err().to_string();
    assert!(err.contains("experiment.output"), "{err}");
}

#[test]
fn verify_report_is_deterministic_and_passes() {
    let a = verify_suite().unwrap();
    assert!(a.passed, "failures: {:?}", a.failures().collect::<Vec<_>>());
    assert_eq!(a.entries.iter().filter(|e| e.group == "equivalence").count(), 270);
    assert!(a.entries.iter().filter(|e| e.group == "divergence_forms").any(|e| e.informational));
    assert_eq!(a.to_json(), verify_suite().unwrap().to_json());
}

fn temrl() -> Command {
    Command::new(env!("CARGO_BIN_EXE_temrl"))
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "experiment.mode = sideways\n").unwrap();
    let status = temrl().args(["solve", "--config"]).arg(&bad).status().unwrap();
    assert_eq!(status.code(), Some(2));

    let missing = temrl().args(["train", "--config", "/nonexistent/temrl.cfg"]).status().unwrap();
    assert_eq!(missing.code(), Some(2));

    let out = dir.path().join("verify");
    let status = temrl().arg("verify").arg("--out").arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(out.join("verify.json").exists());
}

#[test]
fn binary_solve_writes_json_and_cells() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    fs::write(
        &cfg,
        "# two exact variants on a small random MDP\n\
         experiment.variants = temdqn, movi\n\
         env.kind = random\n\
         env.n_states = 5\n\
         env.n_actions = 2\n\
         exact.iters = 20   # short\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let status = temrl()
        .args(["solve", "--format", "json", "--seed", "4,7", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0), "{}", String::from_utf8_lossy(&status.stderr));
    let json = JsonResults::from_json(&fs::read_to_string(out.join("results.json")).unwrap()).unwrap();
    assert_eq!(json.records.len(), 2 * 2 * 20);
    assert_eq!(json.summary.len(), 2);
    for name in ["temdqn-s4.csv", "temdqn-s7.csv", "movi-s4.csv", "movi-s7.csv", "aggregate.csv"] {
        assert!(out.join(name).exists(), "{name}");
    }
}

#[test]
fn binary_sweep_covers_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.cfg");
    fs::write(
        &cfg,
        "experiment.mode = exact-dp\n\
         experiment.variants = temdqn, tsallisdqn\n\
         experiment.seeds = 0\n\
         env.kind = chain\n\
         env.length = 5\n\
         exact.iters = 10\n\
         sweep.tau = 0.1, 1\n\
         sweep.alpha = 0.5, 0.9\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let status = temrl().arg("sweep").arg("--config").arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(0));
    let text = fs::read_to_string(out.join("sweep.csv")).unwrap();
    // temdqn over 2 × 2 cells, tsallisdqn over τ only
    assert_eq!(text.lines().count(), 1 + 4 + 2);
}
