use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use specpc::io::{parse_numeric_table, read_series_csv};

fn specpc(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_specpc"))
        .args(args)
        .current_dir(cwd)
        .env_remove("SPECPC_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "status {:?}\nstderr: {}", out.status, String::from_utf8_lossy(&out.stderr));
}

fn table(path: &Path) -> (Vec<String>, nalgebra::DMatrix<f64>) {
    parse_numeric_table(fs::File::open(path).unwrap()).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn simulate(dir: &Path, args: &[&str]) -> (PathBuf, PathBuf) {
    let mut all = vec!["simulate", "-o", dir.to_str().unwrap()];
    all.extend_from_slice(args);
    let out = specpc(&all, dir);
    ok(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    (PathBuf::from(lines.next().unwrap()), PathBuf::from(lines.next().unwrap()))
}

#[test]
fn simulate_then_detect_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (series, truth) = simulate(dir.path(), &["--scenario", "figure1", "--seed", "2"]);
    let (_, t) = table(&truth);
    assert_eq!(t.iter().copied().collect::<Vec<_>>(), vec![400.0, 700.0]);

    let out_dir = dir.path().join("run");
    ok(&specpc(&["detect", series.to_str().unwrap(), "-o", out_dir.to_str().unwrap()], dir.path()));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    for key in ["change_times", "change_seconds", "component", "threshold", "explained_variance"] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
    assert!((report["threshold"].as_f64().unwrap() - 57.98125902738).abs() < 1e-9);

    let (header, tf) = table(&out_dir.join("time_frequency.csv"));
    assert_eq!(tf.nrows(), 10);
    assert_eq!(header.len(), 2 + 51);
    let (_, cusum) = table(&out_dir.join("cusum.csv"));
    assert_eq!(cusum.nrows(), 9);
    assert_eq!(read_series_csv(&series, 100.0).unwrap().channels(), 20);
}

#[test]
fn simulate_shapes_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let (a, truth) = simulate(dir.path(), &["--scenario", "I", "--channels-changed", "16", "--seed", "7"]);
    let bytes = fs::read(&a).unwrap();
    let s = read_series_csv(&a, 100.0).unwrap();
    assert_eq!((s.len(), s.channels()), (1000, 128));
    assert_eq!(table(&truth).1.iter().copied().collect::<Vec<_>>(), vec![550.0]);
    let again = dir.path().join("again");
    fs::create_dir(&again).unwrap();
    let (b, _) = simulate(&again, &["--scenario", "I", "--channels-changed", "16", "--seed", "7"]);
    assert_eq!(bytes, fs::read(&b).unwrap());

    let (cho, truth) = simulate(dir.path(), &["--scenario", "appendix_cho", "--seed", "1"]);
    let s = read_series_csv(&cho, 100.0).unwrap();
    assert_eq!((s.len(), s.channels()), (1000, 100));
    assert_eq!(table(&truth).1.iter().copied().collect::<Vec<_>>(), vec![500.0]);
}

#[test]
fn detect_outputs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (series, _) = simulate(dir.path(), &["--scenario", "appendix_var", "--seed", "4"]);
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let d = dir.path().join(name);
        ok(&specpc(&["detect", series.to_str().unwrap(), "--threshold", "3", "-o", d.to_str().unwrap()], dir.path()));
        outputs.push(d);
    }
    for f in ["report.json", "report.txt", "cusum.csv", "time_frequency.csv"] {
        assert_eq!(fs::read(outputs[0].join(f)).unwrap(), fs::read(outputs[1].join(f)).unwrap(), "{f}");
    }
}

fn write_csv(dir: &Path, name: &str, rows: usize, bad_row: Option<usize>) -> PathBuf {
    let mut text = String::from("a,b\n");
    for r in 1..=rows {
        if Some(r) == bad_row {
            text += "0.5,oops\n";
        } else {
            text += &format!("{},{}\n", (r as f64 * 0.37).sin(), (r as f64 * 1.3).cos());
        }
    }
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn data_errors_name_the_row_and_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_csv(dir.path(), "bad.csv", 300, Some(7));
    let out = specpc(&["detect", bad.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 7"));

    let ragged = dir.path().join("ragged.csv");
    fs::write(&ragged, "a,b\n1,2\n3,4,5\n").unwrap();
    let out = specpc(&["detect", ragged.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 2"));

    let short = write_csv(dir.path(), "short.csv", 150, None);
    let out = specpc(&["detect", short.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 150"));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = specpc(&["simulate", "--scenario", "IV", "-o", "x"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = specpc(&["evaluate", "--scenario", "I", "--replicates", "0", "-o", "x"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = specpc(&["detect"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let good = write_csv(dir.path(), "good.csv", 300, None);
    let out = specpc(&["detect", good.to_str().unwrap(), "--band", "3.2,3.8", "-o", "x"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn single_channel_json_and_env_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("one.csv");
    let mut text = String::from("x\n");
    for t in 0..400 {
        text += &format!("{}\n", (t as f64 * 0.7).sin() + if t >= 200 { 3.0 * (t as f64 * 2.1).sin() } else { 0.0 });
    }
    fs::write(&p, text).unwrap();
    let env_dir = dir.path().join("from-env");
    let out = Command::new(env!("CARGO_BIN_EXE_specpc"))
        .args(["--json", "detect", p.to_str().unwrap()])
        .env("SPECPC_OUTPUT_DIR", &env_dir)
        .current_dir(dir.path())
        .output()
        .unwrap();
    ok(&out);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["channels"], 1);
    assert!(env_dir.join("report.json").exists());
}

#[test]
fn config_file_sits_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let series = write_csv(dir.path(), "s.csv", 400, None);
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "B = 50\nthreshold = 2.5\n").unwrap();
    let d1 = dir.path().join("cfg");
    ok(&specpc(
        &["detect", series.to_str().unwrap(), "--config", cfg.to_str().unwrap(), "-o", d1.to_str().unwrap()],
        dir.path(),
    ));
    assert_eq!(table(&d1.join("time_frequency.csv")).1.nrows(), 8);
    let d2 = dir.path().join("flag");
    ok(&specpc(
        &[
            "detect",
            series.to_str().unwrap(),
            "--config",
            cfg.to_str().unwrap(),
            "-B",
            "100",
            "-o",
            d2.to_str().unwrap(),
        ],
        dir.path(),
    ));
    assert_eq!(table(&d2.join("time_frequency.csv")).1.nrows(), 4);
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(d2.join("report.json")).unwrap()).unwrap();
    assert_eq!(r["threshold"].as_f64(), Some(2.5));
}

#[test]
fn evaluate_emits_one_row_per_method() {
    let dir = tempfile::tempdir().unwrap();
    let out = specpc(
        &[
            "evaluate",
            "--scenario",
            "appendix_var",
            "--replicates",
            "2",
            "--seed",
            "5",
            "--source",
            "spectral,contemporaneous",
            "--threshold",
            "3",
            "-o",
            ".",
        ],
        dir.path(),
    );
    ok(&out);
    let mut rdr = csv::Reader::from_path(dir.path().join("metrics.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(&rows[0][1], "spectral");
    assert_eq!(&rows[1][1], "contemporaneous");
    assert_eq!(&rows[0][4], &rows[1][4]);
    assert!(dir.path().join("histogram.csv").exists());
}
