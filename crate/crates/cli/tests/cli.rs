use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gloss(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gloss"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn generate_small(dir: &Path) -> std::path::PathBuf {
    let data = dir.join("data.csv");
    let out = gloss(&[
        "generate", "--n", "150", "--d", "4", "--clusters", "3", "--outliers", "8", "--seed", "3",
        "-o", p(&data),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    data
}

#[test]
fn generate_writes_labelled_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let out = gloss(&[
        "generate", "--n", "1000", "--d", "10", "--clusters", "3", "--mu-upper", "3",
        "--outliers", "50", "--seed", "7", "-o", p(&data),
    ]);
    assert!(out.status.success());
    let text = fs::read_to_string(&data).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header.len(), 12);
    assert_eq!(&header[10..], ["outlier", "cluster"]);
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 1000);
    let positives = rows.iter().filter(|r| r.split(',').nth(10) == Some("1")).count();
    assert_eq!(positives, 50);

    let sidecar: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("data.csv.json")).unwrap()).unwrap();
    assert_eq!(sidecar["seed"], 7);
    assert_eq!(sidecar["n_outliers"], 50);
}

#[test]
fn detect_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_small(dir.path());
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for target in [&a, &b] {
        let out = gloss(&[
            "detect", "--algo", "gloss", "-i", p(&data), "-o", p(target), "--seed", "7", "-M", "10",
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let first = fs::read(&a).unwrap();
    assert_eq!(first, fs::read(&b).unwrap());
    let text = String::from_utf8(first).unwrap();
    assert!(text.starts_with("point_id,aggregate_score,best_subspace\n"));
    assert_eq!(text.lines().count(), 151);
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_small(dir.path());
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for (threads, target) in [("1", &a), ("3", &b)] {
        let out = gloss(&[
            "--threads", threads, "detect", "-i", p(&data), "-o", p(target), "--seed", "1", "-M", "8",
        ]);
        assert!(out.status.success());
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn given_subspaces_skip_the_search() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_small(dir.path());
    let subs = dir.path().join("subs.json");
    fs::write(&subs, "[[0, 1], [2, 3]]").unwrap();
    let (scores, matrix) = (dir.path().join("s.csv"), dir.path().join("m.csv"));
    // no seed: a search would draw one and echo it to stderr
    let out = gloss(&[
        "detect", "--algo", "gloss", "--subspaces", p(&subs), "-i", p(&data), "-o", p(&scores),
        "--matrix", p(&matrix),
    ]);
    assert!(out.status.success());
    assert!(!String::from_utf8_lossy(&out.stderr).contains("seed"));
    let m = fs::read_to_string(&matrix).unwrap();
    assert!(m.lines().next().unwrap().contains("0|1"));
    let s = fs::read_to_string(&scores).unwrap();
    let best: Vec<&str> = s.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
    assert!(best.iter().all(|b| *b == "0|1" || *b == "2|3"));
}

#[test]
fn missing_seed_is_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let out = gloss(&["generate", "--n", "50", "--d", "3", "--outliers", "2", "-o", p(&data)]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("seed: "));
}

#[test]
fn search_and_baselines() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_small(dir.path());
    let subs = dir.path().join("subs.json");
    let contrast = dir.path().join("contrast.csv");
    let out = gloss(&[
        "search", "-i", p(&data), "-o", p(&subs), "--contrast", p(&contrast), "--mode", "hics",
        "--seed", "2", "-M", "10", "--max-subspaces", "3",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let parsed: Vec<Vec<usize>> = serde_json::from_str(&fs::read_to_string(&subs).unwrap()).unwrap();
    assert_eq!(parsed.len(), 3);
    assert!(parsed.iter().all(|s| s.len() >= 2));
    assert!(fs::read_to_string(&contrast).unwrap().starts_with("subspace,contrast\n"));

    for algo in ["loop", "lof", "local-loop", "hics"] {
        let scores = dir.path().join(format!("{algo}.csv"));
        let out = gloss(&[
            "detect", "--algo", algo, "-i", p(&data), "-o", p(&scores), "--seed", "1", "-M", "5",
            "--max-subspaces", "5", "-k", "10",
        ]);
        assert!(out.status.success(), "{algo}: {}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(fs::read_to_string(&scores).unwrap().lines().count(), 151);
    }

    let knn = dir.path().join("knn.csv");
    let out = gloss(&[
        "detect", "--algo", "loop", "-i", p(&data), "-o", p(&dir.path().join("x.csv")),
        "--knn-dump", p(&knn), "-k", "5",
    ]);
    assert!(out.status.success());
    let dump = fs::read_to_string(&knn).unwrap();
    assert_eq!(dump.lines().count(), 1 + 150 * 5);
}

#[test]
fn evaluate_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let matrix = dir.path().join("matrix.json");
    fs::write(
        &matrix,
        r#"{"algorithms": ["loop", "lof"],
            "datasets": [{"kind": "synthetic", "id": "s", "config": {"n": 120, "d": 4, "n_outliers": 6}}],
            "seeds": [0, 1],
            "settings": {"loop": {"k": 10}}}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = gloss(&["evaluate", "--matrix", p(&matrix), "-o", p(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = fs::read_to_string(out_dir.join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 1 + 2 * 3);
    assert!(out_dir.join("roc/lof_s_1.csv").exists());
    assert!(!out_dir.join("failures.csv").exists());
}

#[test]
fn exit_codes() {
    assert_eq!(gloss(&["detect", "--bogus"]).status.code(), Some(1));
    assert_eq!(gloss(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(gloss(&["--help"]).status.code(), Some(0));
    assert_eq!(gloss(&["detect", "--help"]).status.code(), Some(0));
    let out = gloss(&["detect", "-i", "/nonexistent/data.csv", "-o", "/tmp/never.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "a,b\n1,2\n3,NaN\n").unwrap();
    let out = gloss(&["detect", "--algo", "loop", "-i", p(&bad), "-o", p(&dir.path().join("o.csv"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_documents_defaults() {
    let out = gloss(&["detect", "--help"]);
    let text = String::from_utf8_lossy(&out.stdout);
    for needle in ["[default: 20]", "[default: 3]", "[default: euclidean]", "[default: 0.1]", "[default: 400]", "[default: 100]", "[default: 5]", "[default: 50]"] {
        assert!(text.contains(needle), "missing {needle}");
    }
}
