//! Black-box tests of the `mtrav` binary.

use std::path::Path;
use std::process::{Command, Output};

fn mtrav(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mtrav"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = mtrav(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const CONFIG: &str = r#"{"id": "t", "sigma": 0.01, "rNbrs": 0.08, "radiusC1": 1, "radiusC2": 1, "radiusK": 1}"#;

fn setup(dir: &Path) {
    std::fs::write(dir.join("config.json"), CONFIG).unwrap();
    ok(
        dir,
        &[
            "generate",
            "--manifold",
            "swiss",
            "--n",
            "2000",
            "--sigma",
            "0.01",
            "--seed",
            "1",
            "--out",
            "train.mtds",
        ],
    );
    ok(
        dir,
        &[
            "generate",
            "--manifold",
            "swiss",
            "--n",
            "200",
            "--sigma",
            "0.01",
            "--seed",
            "2",
            "--out",
            "test.mtds",
        ],
    );
    ok(
        dir,
        &[
            "train",
            "--data",
            "train.mtds",
            "--config",
            "config.json",
            "--out",
            "net.json",
        ],
    );
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn pipeline_writes_parseable_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    setup(dir);
    let summary = ok(
        dir,
        &[
            "denoise",
            "--net",
            "net.json",
            "--data",
            "test.mtds",
            "--method",
            "mixed",
            "--out",
            "d.csv",
        ],
    );
    assert!(summary.contains("method=mixed points=200"), "{summary}");
    let (header, rows) = read_csv(&dir.join("d.csv"));
    assert_eq!(header, ["index", "terminalVertex", "squaredError", "totalMults"]);
    assert_eq!(rows.len(), 200);
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row[0].parse::<usize>().unwrap(), i);
        assert!(row[2].parse::<f64>().unwrap() >= 0.0);
        assert!(row[3].parse::<u64>().unwrap() > 0);
    }

    ok(
        dir,
        &[
            "benchmark",
            "--train",
            "train.mtds",
            "--test",
            "test.mtds",
            "--configs",
            "config.json",
            "--out",
            "b.csv",
        ],
    );
    let (header, rows) = read_csv(&dir.join("b.csv"));
    assert_eq!(
        header,
        [
            "denoiserId",
            "method",
            "numLandmarks",
            "avgMultiplications",
            "testMSE",
            "sigma2d",
            "sigma2D"
        ]
    );
    assert_eq!(rows.iter().map(|r| r[1].as_str()).collect::<Vec<_>>(), ["mixed", "nn"]);
    assert!(rows.iter().all(|r| r[0] == "t"));
}

#[test]
fn training_is_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    setup(dir);
    ok(
        dir,
        &[
            "train",
            "--data",
            "train.mtds",
            "--config",
            "config.json",
            "--out",
            "again.json",
        ],
    );
    assert_eq!(
        std::fs::read(dir.join("net.json")).unwrap(),
        std::fs::read(dir.join("again.json")).unwrap()
    );
}

/// `denoise --method nn` terminals agree with a scan over the landmarks
/// exported by `export-graph`.
#[test]
fn nn_denoise_matches_exported_landmarks() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    setup(dir);
    ok(
        dir,
        &[
            "denoise",
            "--net",
            "net.json",
            "--data",
            "test.mtds",
            "--method",
            "nn",
            "--out",
            "nn.csv",
        ],
    );
    ok(
        dir,
        &[
            "generate",
            "--manifold",
            "swiss",
            "--n",
            "200",
            "--sigma",
            "0.01",
            "--seed",
            "2",
            "--out",
            "t.mtds",
            "--csv",
            "t.csv",
        ],
    );
    ok(dir, &["export-graph", "--net", "net.json", "--out", "g.csv"]);

    let (header, rows) = read_csv(&dir.join("g.csv"));
    let x0 = header.iter().position(|h| h == "x0").unwrap();
    let landmarks: Vec<(usize, Vec<f64>)> = rows
        .iter()
        .filter(|r| r[0] == "vertex")
        .map(|r| {
            (
                r[1].parse().unwrap(),
                r[x0..].iter().map(|v| v.parse().unwrap()).collect(),
            )
        })
        .collect();
    assert!(rows
        .iter()
        .filter(|r| r[0] == "edge")
        .all(|r| r[4] == "0" || r[4] == "1"));

    let (theader, trows) = read_csv(&dir.join("t.csv"));
    let n0 = theader.iter().position(|h| h == "noisy0").unwrap();
    let (_, nn_rows) = read_csv(&dir.join("nn.csv"));
    for (trow, nrow) in trows.iter().zip(&nn_rows) {
        let x: Vec<f64> = trow[n0..n0 + 3].iter().map(|v| v.parse().unwrap()).collect();
        let best = landmarks
            .iter()
            .map(|(id, q)| (*id, q.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()))
            .fold(
                (usize::MAX, f64::INFINITY),
                |acc, (id, d)| if d < acc.1 { (id, d) } else { acc },
            );
        assert_eq!(nrow[1].parse::<usize>().unwrap(), best.0);
    }
}

#[test]
fn exit_codes_follow_error_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("bad.mtds"), b"NOPE0000000000000000000000000000").unwrap();
    std::fs::write(dir.join("config.json"), CONFIG).unwrap();
    let bad = mtrav(
        dir,
        &[
            "train",
            "--data",
            "bad.mtds",
            "--config",
            "config.json",
            "--out",
            "n.json",
        ],
    );
    assert_eq!(bad.status.code(), Some(2));
    let missing = mtrav(
        dir,
        &[
            "train",
            "--data",
            "missing.mtds",
            "--config",
            "config.json",
            "--out",
            "n.json",
        ],
    );
    assert_eq!(missing.status.code(), Some(4));
    let usage = mtrav(dir, &["denoise", "--method", "bogus"]);
    assert_eq!(usage.status.code(), Some(2));
}

#[test]
fn eps_flags_require_the_101_method() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    setup(dir);
    let out = mtrav(
        dir,
        &[
            "denoise",
            "--net",
            "net.json",
            "--data",
            "test.mtds",
            "--method",
            "nn",
            "--eps1",
            "0.1",
            "--out",
            "x.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}
