use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_oblivion");

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

/// Copies the chain fixture into a scratch directory.
fn chain_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for f in ["program.json", "campaign.toml"] {
        std::fs::copy(fixture("chain").join(f), dir.path().join(f)).unwrap();
    }
    dir
}

fn oblivion(args: &[&str], cwd: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn run_lists_m1_as_failure_oblivious() {
    let dir = chain_dir();
    let o = oblivion(&["run", "--config", "campaign.toml"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = stdout(&o);
    let row = report
        .lines()
        .find(|l| l.starts_with("m0@0") && l.contains("| m1 "))
        .unwrap_or_else(|| panic!("no m1 row in\n{report}"));
    assert!(row.contains("IOException"));
    assert!(row.contains("m2"));
    for f in ["journal.jsonl", "report.json", "report.txt", "matrix.csv"] {
        assert!(dir.path().join("out").join(f).exists(), "{f}");
    }
}

#[test]
fn malformed_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[target\nbackend=").unwrap();
    let o = oblivion(&["validate-config", "--config", "bad.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = oblivion(&["run", "--config", "bad.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));

    let good = chain_dir();
    let o = oblivion(
        &["validate-config", "--config", "campaign.toml"],
        good.path(),
    );
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn unknown_flag_exits_2_with_usage() {
    let o = oblivion(&["run", "--bogus"], Path::new("."));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).to_lowercase().contains("usage"));
}

#[test]
fn csv_report_after_run() {
    let dir = chain_dir();
    assert!(oblivion(&["run", "--config", "campaign.toml"], dir.path())
        .status
        .success());
    let o = oblivion(
        &["report", "--config", "campaign.toml", "--format", "csv"],
        dir.path(),
    );
    assert!(o.status.success());
    let csv = stdout(&o);
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines[0], "origin,achieved,count");
    assert_eq!(lines.len(), 7);
    assert_eq!(lines[6], "immunized,immunized,1");
    assert!(stderr(&o).contains("(0 new)"));
}

#[test]
fn stages_are_idempotent() {
    let dir = chain_dir();
    for stage in ["detect", "classify", "discover", "assess", "report"] {
        let args = ["--config", "campaign.toml"];
        let first = oblivion(&[&[stage][..], &args].concat(), dir.path());
        assert!(first.status.success(), "{stage}: {}", stderr(&first));
        let second = oblivion(&[&[stage][..], &args].concat(), dir.path());
        assert!(second.status.success());
        assert_eq!(stdout(&first), stdout(&second), "{stage}");
        assert!(
            stderr(&second).contains("(0 new)"),
            "{stage}: {}",
            stderr(&second)
        );
    }
    let journal = std::fs::read_to_string(dir.path().join("out/journal.jsonl")).unwrap();
    assert_eq!(journal.lines().count(), 7);

    let before = std::fs::read(dir.path().join("out/report.json")).unwrap();
    let again = oblivion(&["run", "--config", "campaign.toml"], dir.path());
    assert!(stderr(&again).contains("(0 new)"));
    assert_eq!(
        std::fs::read(dir.path().join("out/report.json")).unwrap(),
        before
    );
}

#[test]
fn parallel_needs_the_simulator() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("c.toml"),
        "[target]\nbackend = \"external\"\nlaunch = \"true\"\nhealth_check = \"true\"\nrestart = \"true\"\n",
    )
    .unwrap();
    let o = oblivion(
        &["run", "--config", "c.toml", "--parallel", "4"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unrecoverable_target_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("c.toml"),
        "[target]\nbackend = \"external\"\nlaunch = \"true\"\nhealth_check = \"false\"\nrestart = \"false\"\n",
    )
    .unwrap();
    let o = oblivion(&["run", "--config", "c.toml"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unrecoverable"));
}

#[test]
fn agent_backend_matches_simulator() {
    let sim = chain_dir();
    let o = oblivion(
        &["run", "--config", "campaign.toml", "--format", "structured"],
        sim.path(),
    );
    assert!(o.status.success());
    let expected = stdout(&o);

    let ext = chain_dir();
    std::fs::write(
        ext.path().join("ext.toml"),
        format!(
            "[target]\nbackend = \"external\"\nlaunch = \"'{BIN}' agent-sim --program program.json\"\n\
             health_check = \"true\"\nrestart = \"true\"\n\
             [oracle]\ncheck = \"trace_contains\"\nexpected = [\"done\"]\ntimeout_ms = 10000\n"
        ),
    )
    .unwrap();
    let o = oblivion(
        &["run", "--config", "ext.toml", "--format", "structured"],
        ext.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), expected);
    assert!(ext.path().join("out/experiments/1/activation.txt").exists());
}
