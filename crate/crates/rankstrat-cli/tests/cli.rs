//! End-to-end checks of the `rankstrat` binary: output shapes, exit codes,
//! and run-to-run purity.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rankstrat"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn tmp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("rankstrat-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn stratify_prints_the_hierarchy() {
    let out = run(&["stratify", "--model", "matfac:d=4"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("rank(f*) = 1"), "{text}");
    assert!(
        text.lines().any(|l| l.trim_start().starts_with("7 |")),
        "{text}"
    );
}

#[test]
fn stratify_json_is_machine_readable() {
    let out = run(&["stratify", "--model", "matfac:d=4", "--json"]);
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["rows"][1]["rank"], 7);
    assert_eq!(doc["upper_bound"], false);

    let deep = run(&["stratify", "--model", "deepfc:widths=4-3-1", "--json"]);
    let doc: serde_json::Value = serde_json::from_str(&stdout(&deep)).unwrap();
    assert_eq!(doc["upper_bound"], true);
}

#[test]
fn verify_lemma_reports_all_cells() {
    let out = run(&["verify-lemma", "--d", "3", "--trials", "20"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("all 16 (rank A, rank B) cells pass"));
}

#[test]
fn gradcheck_exit_codes_follow_the_tolerance() {
    let out = run(&[
        "gradcheck",
        "--model",
        "fc2:d=5,m=3,bias",
        "--trials",
        "100",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout(&out).contains("max scaled gradient discrepancy"));

    // an absurd tolerance turns the same measurement into a failure
    let out = run(&[
        "gradcheck",
        "--model",
        "fc2:d=5,m=3,bias",
        "--trials",
        "10",
        "--tol",
        "1e-30",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn rank_and_stable_consume_files() {
    let dir = tmp_dir("rank");
    let params = dir.join("theta.txt");
    std::fs::write(&params, "1.0 1.0 0.0 0.0\n").unwrap();
    let data = dir.join("data.txt");
    // two generic points of 1 + x1
    std::fs::write(&data, "0.7,-0.4,1.7\n-1.3,0.9,-0.3\n").unwrap();

    let out = run(&[
        "rank",
        "--model",
        "toynl",
        "--params",
        params.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["model_rank_numeric"], 2);

    let out = run(&[
        "stable",
        "--model",
        "toynl",
        "--params",
        params.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["stable"], true);
    assert_eq!(doc["report"]["empirical_rank"], 2);

    // one point cannot certify stability
    let one = dir.join("one.txt");
    std::fs::write(&one, "0.7,-0.4,1.7\n").unwrap();
    let out = run(&[
        "stable",
        "--model",
        "toynl",
        "--params",
        params.to_str().unwrap(),
        "--data",
        one.to_str().unwrap(),
    ]);
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["stable"], false);
}

#[test]
fn stable_rejects_non_interpolating_points() {
    let dir = tmp_dir("noninterp");
    let params = dir.join("theta.txt");
    std::fs::write(&params, "1 1 0 0\n").unwrap();
    let data = dir.join("data.txt");
    std::fs::write(&data, "0.5,0.5,99.0\n").unwrap();
    let out = run(&[
        "stable",
        "--model",
        "toynl",
        "--params",
        params.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("precondition"));
}

#[test]
fn sweep_is_pure_in_its_config() {
    let dir = tmp_dir("sweep");
    let config = dir.join("sweep.cfg");
    std::fs::write(
        &config,
        "model = matfac:d=4\ntarget = M1\nsizes = 7\ntrials = 2\nseed = 5\nmax_steps = 400000\n",
    )
    .unwrap();
    let out1 = dir.join("run1");
    let out2 = dir.join("run2");
    for out in [&out1, &out2] {
        let res = run(&[
            "sweep",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(
            res.status.success(),
            "{}",
            String::from_utf8_lossy(&res.stderr)
        );
    }
    for file in ["cells.csv", "aggregate.csv", "sweep.json", "config.txt"] {
        let a = std::fs::read(out1.join(file)).unwrap();
        let b = std::fs::read(out2.join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
    let cells = std::fs::read_to_string(out1.join("cells.csv")).unwrap();
    assert!(cells.starts_with("# rankstrat cells\n# master_seed = 5\n"));
    assert!(cells.contains("target,n,trial,seed,test_error,train_loss,converged"));
}

#[test]
fn sequence_and_spectrum_write_reports() {
    let dir = tmp_dir("seqspec");
    let seq_cfg = dir.join("seq.cfg");
    std::fs::write(
        &seq_cfg,
        "model = matfac:d=4\ntarget = M2\ntrials = 1\nseed = 9\nmax_steps = 400000\n\
         sizes = 8,9\nsequences = builtin\n",
    )
    .unwrap();
    let out = dir.join("seq-out");
    let res = run(&[
        "sequence",
        "--config",
        seq_cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    assert!(stdout(&res).contains("n_t ="));
    let agg = std::fs::read_to_string(out.join("aggregate.csv")).unwrap();
    assert!(agg.contains("sequence,n,mean_test_error,success_fraction,n_t"));

    let spec_cfg = dir.join("spec.cfg");
    std::fs::write(
        &spec_cfg,
        "model = matfac:d=4\ntarget = M8\ntrials = 2\nseed = 9\nmax_steps = 2000000\nmasks = builtin\n",
    )
    .unwrap();
    let out = dir.join("spec-out");
    let res = run(&[
        "spectrum",
        "--config",
        spec_cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let csv = std::fs::read_to_string(out.join("spectra.csv")).unwrap();
    assert!(csv.contains("n,kind,idx,mean_sigma"));
    assert!(csv.contains("tangent_full"));
}

#[test]
fn bad_flags_and_inputs_exit_one() {
    let out = run(&["stratify", "--model", "matfac:d=4", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));

    let out = run(&["stratify", "--model", "unknown:d=1"]);
    assert_eq!(out.status.code(), Some(1));

    let out = run(&["rank", "--model", "toynl", "--params", "/nonexistent/file"]);
    assert_eq!(out.status.code(), Some(1));

    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
}
