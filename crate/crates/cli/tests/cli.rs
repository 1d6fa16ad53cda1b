use std::fs;
use std::process::{Command, Output};

fn sleap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sleap"))
        .args(args)
        .env_remove("SLEAP_SEED")
        .output()
        .expect("failed to launch sleap")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn simulate_prints_header_and_grid_rows() {
    let out = sleap(&["simulate", "--model", "dimer_nonstiff", "--method", "s"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "run_id,time,S1,S2,S3");
    assert_eq!(lines.len(), 26);
    assert!(lines[25].starts_with("0,10,"));
}

#[test]
fn track_selects_columns() {
    let out = sleap(&["simulate", "--model", "dimer_nonstiff", "--track", "S3,S1"]);
    assert!(out.status.success());
    assert!(stdout(&out).starts_with("run_id,time,S3,S1\n"));
}

#[test]
fn unknown_method_or_model_is_a_usage_error() {
    let out = sleap(&["simulate", "--model", "dimer_nonstiff", "--method", "euler"]);
    assert_eq!(out.status.code(), Some(2));
    let out = sleap(&["simulate", "--model", "no_such_model"]);
    assert_eq!(out.status.code(), Some(2));
    let out = sleap(&["simulate", "--model", "dimer_nonstiff", "--eps", "-1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn file_models_load() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("iso.txt");
    fs::write(
        &path,
        "species A B\ninit 50 0\nreaction R1 : A -> B ; rate 1\nreaction R2 : B -> A ; rate 1\n",
    )
    .unwrap();
    let model = format!("file:{}", path.display());
    let out = sleap(&["simulate", "--model", &model, "--method", "ssa", "--t-end", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for line in stdout(&out).lines().skip(1) {
        let cols: Vec<i64> = line.split(',').skip(2).map(|v| v.parse().unwrap()).collect();
        assert_eq!(cols.iter().sum::<i64>(), 50);
    }
    let out = sleap(&["simulate", "--model", "file:/nonexistent/model.txt"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn reruns_are_byte_identical_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = vec![];
    for jobs in ["1", "3"] {
        let sub = dir.path().join(jobs);
        let out = sleap(&[
            "simulate", "--model", "bsubtilis", "--method", "r", "--ns", "8", "--seed", "7",
            "--jobs", jobs, "--out", sub.to_str().unwrap(),
        ]);
        assert!(out.status.success());
        outputs.push(fs::read(sub.join("trajectories.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let text = String::from_utf8(outputs[0].clone()).unwrap();
    assert_eq!(text.lines().count(), 1 + 8 * 25);
}

#[test]
fn seed_falls_back_to_environment() {
    let run = |env: Option<&str>, flag: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_sleap"));
        cmd.args(["simulate", "--model", "dimer_nonstiff", "--method", "tau"]);
        cmd.env_remove("SLEAP_SEED");
        if let Some(s) = env {
            cmd.env("SLEAP_SEED", s);
        }
        if let Some(s) = flag {
            cmd.args(["--seed", s]);
        }
        cmd.output().unwrap().stdout
    };
    assert_eq!(run(Some("99"), None), run(None, Some("99")));
    assert_ne!(run(Some("99"), None), run(None, None));
    assert_eq!(run(None, None), run(None, Some("1")));
}

#[test]
fn compare_writes_errors_and_speedup() {
    let dir = tempfile::tempdir().unwrap();
    let out = sleap(&[
        "compare", "--model", "dimer_nonstiff", "--ns", "100", "--eps", "0.05",
        "--methods", "tau,s", "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("0.3568"));
    let eps_dir = dir.path().join("eps_0.05");
    for method in ["tau", "s"] {
        let errors = fs::read_to_string(eps_dir.join(method).join("errors.csv")).unwrap();
        let lines: Vec<&str> = errors.lines().collect();
        assert_eq!(lines[0], "time,species,d,self_distance");
        assert_eq!(lines.len(), 1 + 25 * 3);
    }
    let speedup = fs::read_to_string(eps_dir.join("speedup.csv")).unwrap();
    let methods: Vec<&str> = speedup.lines().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(methods, ["method", "ssa", "tau", "s"]);
}

#[test]
fn validate_quick_passes_and_detects_fault() {
    let out = sleap(&["validate", "--quick"]);
    assert!(out.status.success(), "{}", stdout(&out));
    assert!(!stdout(&out).contains("FAIL"));
    let out = sleap(&["validate", "--quick", "--inject-fault", "poisson"]);
    assert!(!out.status.success());
    assert!(stdout(&out).contains("FAIL"));
}
