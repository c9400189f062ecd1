use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn twosample(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twosample"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn records(text: &str) -> Vec<csv::StringRecord> {
    csv::Reader::from_reader(text.as_bytes())
        .records()
        .collect::<Result<_, _>>()
        .unwrap()
}

fn write(dir: &Path, name: &str, contents: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, contents).unwrap();
    path.to_str().unwrap().to_owned()
}

const DUPLICATED: &str =
    "f0,f1,label\n0,1,0\n1,0,0\n2,2,0\n-1,0.5,0\n0,1,1\n1,0,1\n2,2,1\n-1,0.5,1\n";

const SEPARATED: &str =
    "f0,f1,label\n0,0,0\n0.1,0,0\n0,0.2,0\n0.1,0.1,0\n9,9,1\n9.2,9,1\n9,9.1,1\n9.1,9.2,1\n";

#[test]
fn theory_at_zero_signal_is_alpha() {
    let out = twosample(&[
        "theory", "--d", "100", "--n", "100", "--psi", "0", "--alpha", "0.05",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(
        text.lines().next().unwrap(),
        "d,n,psi,alpha,z_alpha,minimax,low_snr,lda_approx,lda_approx_low_snr,lda_expected"
    );
    let rows = records(&text);
    assert_eq!(rows.len(), 1);
    for (col, field) in rows[0].iter().enumerate().skip(5) {
        let p: f64 = field.parse().unwrap();
        assert!((p - 0.05).abs() < 1e-12, "column {col}: {p}");
    }
}

#[test]
fn theory_grid_is_a_cartesian_product() {
    let out = twosample(&[
        "theory",
        "--d",
        "10,20",
        "--n",
        "10,11",
        "--psi",
        "0,0.5,1",
        "--z-alpha",
        "2",
    ]);
    assert!(out.status.success());
    let rows = records(&stdout(&out));
    assert_eq!(rows.len(), 12);
    // Odd n has no expected-error curve.
    assert!(rows.iter().any(|r| r[9].is_empty()));
    assert!(rows.iter().all(|r| &r[4] == "2.0"));
}

#[test]
fn reproduce_constant_power_writes_thirty_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("curve.csv");
    let out = twosample(&[
        "reproduce",
        "constant-power",
        "--seed",
        "1",
        "--reps",
        "2",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = fs::read_to_string(&out_path).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "d,n,psi,empirical_power,mc_stderr,theory_minimax,theory_lda_approx,theory_lda_expected"
    );
    let rows = records(&text);
    assert_eq!(rows.len(), 30);
    assert_eq!(&rows[0][0], "20");
    assert_eq!(&rows[29][0], "600");

    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("curve.csv.meta.json")).unwrap())
            .unwrap();
    assert!(meta["created_unix_secs"].as_u64().unwrap() > 0);
}

#[test]
fn increasing_power_fixed_d_layout() {
    let out = twosample(&[
        "reproduce",
        "increasing-power",
        "--fixed-d",
        "--reps",
        "2",
        "--json",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let points: Vec<serde_json::Value> = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(points.len(), 30);
    assert!(points.iter().all(|p| p["d"] == 100 && p["n"] == 100));

    let out = twosample(&[
        "reproduce",
        "increasing-power",
        "--fixed-d",
        "40",
        "--reps",
        "2",
    ]);
    assert!(records(&stdout(&out)).iter().all(|r| &r[0] == "40"));

    let out = twosample(&["reproduce", "increasing-power", "--reps", "1"]);
    let rows = records(&stdout(&out));
    assert_eq!(&rows[1][0], "40");

    let out = twosample(&["reproduce", "constant-power", "--fixed-d"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("fixed-d"));
}

#[test]
fn duplicated_classes_do_not_reject() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "dup.csv", DUPLICATED);
    let out = twosample(&[
        "test",
        "--input",
        &input,
        "--scheme",
        "split-accuracy",
        "--alpha",
        "0.05",
        "--sigma",
        "identity",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = records(&stdout(&out));
    assert_eq!(&rows[0][3], "false");
    assert!(rows[0][4].parse::<f64>().unwrap() >= 0.5);

    for scheme in ["hotelling", "sd", "split-accuracy-nb"] {
        let out = twosample(&["test", "--input", &input, "--scheme", scheme]);
        assert!(out.status.success(), "{scheme}: {}", stderr(&out));
        assert_eq!(&records(&stdout(&out))[0][3], "false", "{scheme}");
    }
}

#[test]
fn separated_classes_reject() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "sep.csv", SEPARATED);
    let out = twosample(&["test", "--input", &input, "--scheme", "hotelling", "--json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v[0]["reject"], true);
    assert_eq!(v[0]["scheme"], "hotelling");

    let out = twosample(&[
        "perm", "--input", &input, "--method", "direct", "--P", "99", "--seed", "3",
    ]);
    let rows = records(&stdout(&out));
    assert_eq!(&rows[0][0], "perm-direct");
    assert_eq!(&rows[0][3], "true");
    // Only 70 distinct splits of 8 rows exist, and swapping the two groups
    // leaves the statistic unchanged, so a permuted tie is likely.
    assert!(rows[0][4].parse::<f64>().unwrap() <= 0.05);
}

#[test]
fn permutation_output_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "dup.csv", DUPLICATED);
    for method in ["1", "2", "direct"] {
        let a = twosample(&[
            "perm",
            "--input",
            &input,
            "--method",
            method,
            "--seed",
            "5",
            "--workers",
            "1",
        ]);
        let b = twosample(&[
            "perm",
            "--input",
            &input,
            "--method",
            method,
            "--seed",
            "5",
            "--workers",
            "4",
        ]);
        assert!(a.status.success(), "{}", stderr(&a));
        assert_eq!(a.stdout, b.stdout, "method {method}");
    }
}

#[test]
fn covariance_files() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "sep.csv", SEPARATED);
    let dense = write(dir.path(), "dense.csv", "2,0.5\n0.5,1\n");
    let diag = write(dir.path(), "diag.csv", "2,1\n");
    for sigma in [format!("dense:{dense}"), format!("diagonal:{diag}")] {
        let out = twosample(&[
            "test",
            "--input",
            &input,
            "--scheme",
            "hotelling",
            "--sigma",
            &sigma,
        ]);
        assert!(out.status.success(), "{sigma}: {}", stderr(&out));
        assert_eq!(&records(&stdout(&out))[0][3], "true");
    }
    let bad = write(dir.path(), "bad.csv", "1,2\n2,1\n");
    let out = twosample(&[
        "test",
        "--input",
        &input,
        "--scheme",
        "hotelling",
        "--sigma",
        &format!("dense:{bad}"),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr(&out).contains("positive definite"),
        "{}",
        stderr(&out)
    );

    let out = twosample(&[
        "power",
        "--d",
        "2",
        "--n",
        "10",
        "--psi",
        "1",
        "--reps",
        "5",
        "--sigma",
        &format!("dense:{dense}"),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = records(&stdout(&out));
    assert!((rows[0][2].parse::<f64>().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn power_with_permutation_method() {
    let out = twosample(&[
        "power",
        "--d",
        "4",
        "--n",
        "10",
        "--psi",
        "3",
        "--method",
        "2",
        "--P",
        "19",
        "--reps",
        "10",
        "--z-alpha",
        "1.5",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = records(&stdout(&out));
    assert_eq!(rows.len(), 1);
    let power: f64 = rows[0][3].parse().unwrap();
    assert!((0.0..=1.0).contains(&power));
}

#[test]
fn usage_errors_exit_with_two() {
    for args in [
        vec!["frobnicate"],
        vec!["theory", "--d", "10"],
        vec![
            "theory",
            "--d",
            "10",
            "--n",
            "10",
            "--psi",
            "0",
            "--alpha",
            "0.1",
            "--z-alpha",
            "2",
        ],
        vec!["power", "--d", "x", "--n", "10", "--psi", "1"],
        vec!["test", "--input", "a.csv", "--scheme", "lda"],
        vec!["test", "--input", "a.csv", "--sigma", "full:x.csv"],
        vec!["reproduce", "constant-powr"],
    ] {
        let out = twosample(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn runtime_errors_exit_with_one_and_name_the_problem() {
    let out = twosample(&["test", "--input", "/nonexistent/data.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("/nonexistent/data.csv"));

    let out = twosample(&["power", "--d", "10", "--n", "21", "--psi", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("`n`"), "{}", stderr(&out));

    let out = twosample(&[
        "theory", "--d", "10", "--n", "10", "--psi", "0", "--alpha", "1.5",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("alpha"));

    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "bad.csv", "f0,label\n1,0\n2,1\n3,1\n");
    let out = twosample(&["test", "--input", &input]);
    assert_eq!(out.status.code(), Some(1));

    let out = twosample(&["perm", "--input", &input, "--P", "0"]);
    assert_eq!(out.status.code(), Some(1));
}
