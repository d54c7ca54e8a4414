use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_ergowass");

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(BIN).args(args).current_dir(cwd).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, name: &str, theory: &str) -> std::path::PathBuf {
    let text = format!(
        r#"
[process]
drift = "linear"
rate = 1.0
sigma = 1.4142135623730951
dim = 1
dt = 0.0625

[target]
kind = "ou"

[experiment]
p = 1.0
t_min = 4.0
t_max = 256.0
replications = 16
seed = 5
metric = "exact-1d"
slope_tolerance = 0.25

{theory}

[output]
dir = "{}"
name = "{name}"
"#,
        dir.join("out").display()
    );
    let path = dir.join(format!("{name}.toml"));
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn rate_prints_exponents() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["rate", "--p", "1", "--q", "8", "--d", "3", "--hurst", "0.75"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for label in ["abstract", "poincare", "non-Markov", "q -> inf", "fbm"] {
        assert!(text.contains(label), "missing {label} in\n{text}");
    }
}

#[test]
fn rate_table_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["rate", "--table", "--out", "tables"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("tables/rate_table.csv")).unwrap();
    assert!(csv.lines().count() > 10);
}

#[test]
fn verify_then_plot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ou", "");
    let cfg = cfg.to_str().unwrap();
    let o = run(&["verify", "--config", cfg], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("verdict: PASS"));

    let out = dir.path().join("out");
    let names = |ext: &str| -> Vec<_> {
        std::fs::read_dir(&out)
            .unwrap()
            .filter_map(|e| {
                let p = e.unwrap().path();
                (p.extension().and_then(|x| x.to_str()) == Some(ext)).then_some(p)
            })
            .collect()
    };
    assert_eq!(names("csv").len(), 2);
    let svg = names("svg").pop().unwrap();
    let before = std::fs::read(&svg).unwrap();
    std::fs::remove_file(&svg).unwrap();
    let o = run(&["plot", "--config", cfg], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read(&svg).unwrap(), before);
}

#[test]
fn verdict_failure_exits_one() {
    // A fixed theory exponent of 2 is far faster than the OU can deliver.
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "strict", "[theory]\nkind = \"fixed\"\nexponent = 2.0");
    let o = run(&["verify", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("verdict: FAIL"));
}

#[test]
fn simulate_writes_occupation_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sim", "");
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", "9"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let files: Vec<_> = std::fs::read_dir(dir.path().join("out")).unwrap().collect();
    assert_eq!(files.len(), 2);
}

#[test]
fn covcheck_passes_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["covcheck", "--samples", "50000", "--out", "cov"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let csv = std::fs::read_to_string(dir.path().join("cov/covcheck.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 96);
}

#[test]
fn usage_and_config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["verify"], dir.path()).status.code(), Some(2));
    assert_eq!(run(&["verify", "--config", "missing.toml"], dir.path()).status.code(), Some(2));
    assert_eq!(run(&["bogus"], dir.path()).status.code(), Some(2));
    assert_eq!(run(&["rate", "--jobs", "0"], dir.path()).status.code(), Some(2));
    assert_eq!(run(&["rate", "--p", "-1"], dir.path()).status.code(), Some(2));
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[process]\nnot_a_field = 1\n").unwrap();
    assert_eq!(run(&["verify", "--config", bad.to_str().unwrap()], dir.path()).status.code(), Some(2));
}
