use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cmi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cmi")).args(args).env_remove("CMI_SEED").output().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn value_of(csv: &str) -> f64 {
    let row = csv.lines().nth(1).unwrap();
    row.split(',').nth(1).unwrap().parse().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn records(csv: &str) -> Vec<Vec<String>> {
    csv.lines().skip(1).map(|l| l.split(',').map(str::to_owned).collect()).collect()
}

fn column(header: &str, name: &str) -> usize {
    header.split(',').position(|h| h == name).unwrap()
}

#[test]
fn estimate_discrete_on_identical_columns() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "d.csv", "x,y\n0,0\n1,1\n0,0\n1,1\n2,2\n2,2\n");
    let out = stdout(&cmi(&["estimate", "--estimator", "discrete", &input]));
    assert!(out.starts_with("estimator,value,N,sigma2,alpha,L\n"));
    assert!((value_of(&out) - 2.0).abs() < 1e-9, "{out}");
    let hgr = stdout(&cmi(&["estimate", "--estimator", "hgr", &input]));
    assert!((value_of(&hgr) - 1.0).abs() < 1e-9, "{hgr}");
}

#[test]
fn estimate_analog_matches_generated_dependence() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("g.csv");
    stdout(&cmi(&["gen", "--smi", "0.5", "--samples", "4000", "--seed", "11", "--out", data.to_str().unwrap()]));
    let path = data.to_str().unwrap();
    let exact = value_of(&stdout(&cmi(&["estimate", "--sigma2", "0.4", path])));
    let fast = value_of(&stdout(&cmi(&["estimate", "--estimator", "fast", "--sigma2", "0.4", path])));
    let reduced = value_of(&stdout(&cmi(&["estimate", "--sigma2", "0.4", "--bias-reduce", path])));
    assert!(exact > 0.05 && exact < 0.5, "{exact}");
    assert!((fast - exact).abs() < 0.5 * exact, "{fast} vs {exact}");
    assert!(reduced < exact);
}

#[test]
fn estimate_reads_standard_input() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_cmi"))
        .args(["estimate", "--estimator", "discrete", "-"])
        .stdin(std::process::Stdio::piped())
        .stdout(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    use std::io::Write;
    child.stdin.take().unwrap().write_all(b"x,y\n0,1\n1,0\n0,1\n1,0\n").unwrap();
    let out = stdout(&child.wait_with_output().unwrap());
    assert!((value_of(&out) - 1.0).abs() < 1e-9);
}

#[test]
fn missing_column_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "m.csv", "x,z\n0.1,0.2\n0.3,0.4\n");
    let o = cmi(&["estimate", &input]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("`y`"));
}

#[test]
fn malformed_row_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "bad.csv", "x,y\n0.1,0.2\n0.3,abc\n0.5,0.6\n");
    let o = cmi(&["estimate", &input]);
    assert_ne!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn conflicting_flags_are_usage_errors() {
    let o = cmi(&["estimate", "--sigma2", "0.1", "--silverman-p", "0.3", "whatever.csv"]);
    assert_eq!(o.status.code(), Some(2));
    let o = cmi(&["estimate", "--dim", "31", "--k", "2", "whatever.csv"]);
    assert_eq!(o.status.code(), Some(2));
    let o = cmi(&["estimate", "--shift", "3", "whatever.csv"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "d.csv", "x,y\n0,0\n1,1\n0,1\n1,0\n0,0\n");
    let cfg = write(dir.path(), "c.conf", "estimator = hgr\n");
    let from_config = stdout(&cmi(&["estimate", "--config", &cfg, &input]));
    assert!(from_config.lines().nth(1).unwrap().starts_with("hgr,"));
    let overridden = stdout(&cmi(&["estimate", "--config", &cfg, "--estimator", "discrete", &input]));
    assert!(overridden.lines().nth(1).unwrap().starts_with("discrete,"));
}

#[test]
fn gen_is_seeded() {
    let a = stdout(&cmi(&["gen", "--r", "0.7", "--samples", "50", "--seed", "5"]));
    let b = stdout(&cmi(&["gen", "--r", "0.7", "--samples", "50", "--seed", "5"]));
    let c = stdout(&cmi(&["gen", "--r", "0.7", "--samples", "50", "--seed", "6"]));
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.lines().count(), 51);
    let ch = stdout(&cmi(&["gen", "--channel", "3,4", "--samples", "20", "--seed", "1"]));
    for row in ch.lines().skip(1) {
        let v: Vec<usize> = row.split(',').map(|s| s.parse().unwrap()).collect();
        assert!(v[0] < 3 && v[1] < 4);
    }
}

#[test]
fn genie_reports_gaussian_values() {
    let out = stdout(&cmi(&["genie", "--rho", "0.5", "--mc-samples", "100000", "--seed", "2"]));
    let smi: f64 = out
        .lines()
        .find(|l| l.starts_with("smi,"))
        .and_then(|l| l.split(',').nth(1))
        .unwrap()
        .parse()
        .unwrap();
    assert!((smi - 1.0 / 3.0).abs() < 0.01, "{out}");
    assert!(out.contains("mi_closed_form"));
}

const PLAN: &str = "scenario = fig5\nsmi = 0.2, 0.5\nsamples = 400\nsigma2 = 0.4\ntrials = 3\nestimators = analog, bias_reduced\ngenie_samples = 20000\nseed = 7\n";

#[test]
fn sweep_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let plan = write(dir.path(), "plan.txt", PLAN);
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    stdout(&cmi(&["sweep", "--plan", &plan, "--out", a.to_str().unwrap()]));
    stdout(&cmi(&["sweep", "--plan", &plan, "--out", b.to_str().unwrap()]));
    let (a, b) = (fs::read(a).unwrap(), fs::read(b).unwrap());
    assert_eq!(a, b);
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 5);
}

#[test]
fn sweep_resumes_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let plan = write(dir.path(), "plan.txt", PLAN);
    let full = dir.path().join("full.csv");
    stdout(&cmi(&["sweep", "--plan", &plan, "--out", full.to_str().unwrap()]));
    let text = fs::read_to_string(&full).unwrap();
    // keep two complete records and half of the third
    let lines: Vec<&str> = text.lines().collect();
    let partial = format!("{}\n{}\n{}\n{}", lines[0], lines[1], lines[2], &lines[3][..10]);
    let resumed = dir.path().join("resumed.csv");
    fs::write(&resumed, partial).unwrap();
    stdout(&cmi(&["sweep", "--plan", &plan, "--out", resumed.to_str().unwrap()]));
    assert_eq!(fs::read_to_string(resumed).unwrap(), text);
}

#[test]
fn single_trial_has_zero_variance() {
    let dir = tempfile::tempdir().unwrap();
    let plan = write(dir.path(), "plan.txt", &PLAN.replace("trials = 3", "trials = 1"));
    let out = stdout(&cmi(&["sweep", "--plan", &plan]));
    let var = column(out.lines().next().unwrap(), "variance");
    for r in records(&out) {
        assert_eq!(r[var].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn seed_flag_overrides_environment_and_plan() {
    let dir = tempfile::tempdir().unwrap();
    let plan = write(dir.path(), "plan.txt", &PLAN.replace("trials = 3", "trials = 1"));
    let flagged = stdout(&cmi(&["sweep", "--plan", &plan, "--seed", "99"]));
    let env = Command::new(env!("CARGO_BIN_EXE_cmi")).args(["sweep", "--plan", &plan, "--seed", "99"]).env("CMI_SEED", "1").output().unwrap();
    assert_eq!(stdout(&env), flagged);
    assert_ne!(flagged, stdout(&cmi(&["sweep", "--plan", &plan])));
}

#[test]
fn sweep_record_is_reproducible_by_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let plan = write(dir.path(), "plan.txt", &PLAN.replace("smi = 0.2, 0.5", "smi = 0.5").replace(", bias_reduced", ""));
    let out = stdout(&cmi(&["sweep", "--plan", &plan]));
    let header = out.lines().next().unwrap();
    let rec = &records(&out)[0];
    let mean: f64 = rec[column(header, "mean")].parse().unwrap();
    let n = &rec[column(header, "N")];
    let mut total = 0.0;
    for t in 0..3 {
        let data = dir.path().join(format!("t{t}.csv"));
        let stream = t.to_string();
        stdout(&cmi(&["gen", "--smi", "0.5", "--samples", "400", "--seed", "7", "--stream", &stream, "--out", data.to_str().unwrap()]));
        total += value_of(&stdout(&cmi(&["estimate", "--sigma2", "0.4", "--dim", n, data.to_str().unwrap()])));
    }
    assert!((total / 3.0 - mean).abs() < 1e-12 * mean.abs().max(1.0), "{} vs {mean}", total / 3.0);
}

#[test]
fn fig8_gap_column_shrinks_with_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let plan = write(
        dir.path(),
        "plan.txt",
        "scenario = fig8\nsamples = 20000\ntrials = 2\ngenie_samples = 10000\nestimators = fast_gap\nseed = 3\n",
    );
    let out = stdout(&cmi(&["sweep", "--plan", &plan]));
    let header = out.lines().next().unwrap();
    let (mean, n) = (column(header, "mean"), column(header, "N"));
    let rows = records(&out);
    let dims: Vec<usize> = rows.iter().map(|r| r[n].parse().unwrap()).collect();
    assert_eq!(dims, [17, 31, 61]);
    let gaps: Vec<f64> = rows.iter().map(|r| r[mean].parse().unwrap()).collect();
    assert!(gaps.windows(2).all(|w| w[1] <= w[0]), "{gaps:?}");
}

#[test]
fn fig3_sweep_uses_exact_channel_values() {
    let dir = tempfile::tempdir().unwrap();
    let plan = write(dir.path(), "plan.txt", "scenario = fig3\nchannels = 3\nsamples = 2000\ntrials = 2\nseed = 4\n");
    let out = stdout(&cmi(&["sweep", "--plan", &plan]));
    let header = out.lines().next().unwrap();
    let (genie, mi, est) = (column(header, "genie_smi"), column(header, "genie_mi"), column(header, "estimator"));
    let rows = records(&out);
    assert_eq!(rows.len(), 3);
    for r in rows {
        assert_eq!(r[est], "discrete");
        let (s, m): (f64, f64) = (r[genie].parse().unwrap(), r[mi].parse().unwrap());
        assert!(m <= (1.0 + s).ln() + 1e-12 && (1.0 + s).ln() <= s + 1e-12);
    }
}

#[test]
fn bad_plan_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let plan = write(dir.path(), "plan.txt", "scenario = fig5\ntrials = 0\n");
    assert_ne!(cmi(&["sweep", "--plan", &plan]).status.code(), Some(0));
    let plan = write(dir.path(), "plan2.txt", "bogus = 1\n");
    assert_ne!(cmi(&["sweep", "--plan", &plan]).status.code(), Some(0));
}
