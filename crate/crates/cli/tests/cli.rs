use std::path::Path;
use std::process::{Command, Output};

fn sli(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sli"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn sli")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let o = sli(dir, args);
    assert!(
        o.status.success(),
        "sli {args:?} failed:\n{}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p).unwrap()
}

fn rows(text: &str) -> usize {
    text.lines().count() - 1
}

/// 2-D scattered data with a smooth field.
fn write_2d(path: &Path, n: usize, phase: f64) {
    let mut s = String::from("c1,c2,value\n");
    for i in 0..n {
        let x = ((i as f64 * 0.618034 + phase) % 1.0) * 10.0;
        let y = ((i as f64 * 0.754878 + 0.5 * phase) % 1.0) * 10.0;
        let v = (0.4 * x).sin() * (0.3 * y).cos() * 5.0 + 0.2 * x;
        s.push_str(&format!("{x},{y},{v}\n"));
    }
    std::fs::write(path, s).unwrap();
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let args = ["simulate", "--kind", "matern", "--n", "300", "--sigma", "10", "--nu", "3.5", "--xi", "10", "--train", "60", "--seed", "7"];
    ok(d, &[&args[..], &["--out", "a"]].concat());
    ok(d, &[&args[..], &["--out", "b"]].concat());
    for f in ["train.csv", "valid.csv", "dataset.txt"] {
        assert_eq!(read(d.join("a").join(f)), read(d.join("b").join(f)), "{f}");
    }
    assert_eq!(rows(&read(d.join("a/train.csv"))), 60);
    assert_eq!(rows(&read(d.join("a/valid.csv"))), 240);
    assert!(read(d.join("a/dataset.txt")).contains("seed = 7"));

    ok(d, &["simulate", "--kind", "testfn", "--train", "100", "--valid", "50", "--seed", "7", "--out", "t"]);
    let t = read(d.join("t/train.csv"));
    assert!(t.starts_with("c1,c2,c3,c4,value\n"));
    assert_eq!(rows(&t), 100);
}

#[test]
fn fit_validate_predict_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_2d(&d.join("train.csv"), 150, 0.0);
    write_2d(&d.join("valid.csv"), 60, 0.37);
    ok(d, &["fit", "--data", "train.csv", "--kernel", "quadratic", "--k", "2", "--out", "model.txt", "--loo", "loo.csv"]);
    let card = read(d.join("model.txt"));
    for key in ["kernel = quadratic", "k = 2", "N = 150", "d = 2", "lambda = "] {
        assert!(card.contains(key), "{key} missing from\n{card}");
    }
    assert_eq!(rows(&read(d.join("loo.csv"))), 150);

    // Deterministic refit.
    ok(d, &["fit", "--data", "train.csv", "--kernel", "quadratic", "--k", "2", "--out", "model2.txt"]);
    assert_eq!(card, read(d.join("model2.txt")));

    let report = ok(d, &["validate", "--model", "model.txt", "--data", "train.csv", "--valid", "valid.csv", "--out", "pairs.csv"]);
    assert!(report.contains("pearson"));
    let pairs = read(d.join("pairs.csv"));
    assert!(pairs.starts_with("predicted,observed\n"));
    assert_eq!(rows(&pairs), 60);

    // Predicting at the training points gives finite values close to the data.
    let out = ok(d, &["predict", "--model", "model.txt", "--data", "train.csv", "--query", "train.csv"]);
    assert!(out.starts_with("c1,c2,prediction,conditional_std\n"));
    let mut worst = 0.0f64;
    for (line, obs) in out.lines().skip(1).zip(read(d.join("train.csv")).lines().skip(1)) {
        let p: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        let o: f64 = obs.split(',').nth(2).unwrap().parse().unwrap();
        assert!(p.is_finite());
        worst = worst.max((p - o).abs());
    }
    assert!(worst < 3.0, "{worst}");

    ok(d, &["predict", "--model", "model.txt", "--data", "train.csv", "--grid", "100", "--out", "grid.csv"]);
    assert_eq!(rows(&read(d.join("grid.csv"))), 10_000);
}

#[test]
fn empty_query_gives_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_2d(&d.join("train.csv"), 80, 0.0);
    std::fs::write(d.join("empty.csv"), "c1,c2\n").unwrap();
    ok(d, &["fit", "--data", "train.csv", "--out", "model.txt", "--max-iters", "20"]);
    let out = ok(d, &["predict", "--model", "model.txt", "--data", "train.csv", "--query", "empty.csv"]);
    assert_eq!(out, "c1,c2,prediction,conditional_std\n");
}

#[test]
fn mismatched_dimension_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_2d(&d.join("train.csv"), 80, 0.0);
    std::fs::write(d.join("q3.csv"), "c1,c2,c3\n0.1,0.2,0.3\n").unwrap();
    ok(d, &["fit", "--data", "train.csv", "--out", "model.txt", "--max-iters", "20"]);
    let o = sli(d, &["predict", "--model", "model.txt", "--data", "train.csv", "--query", "q3.csv"]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("d = 2") && err.contains("d = 3"), "{err}");
    assert!(o.stdout.is_empty());
}

#[test]
fn constant_data_fit_fails() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut s = String::from("c1,value\n");
    for i in 0..30 {
        s.push_str(&format!("{},4.5\n", i as f64 * 0.7));
    }
    std::fs::write(d.join("flat.csv"), s).unwrap();
    let o = sli(d, &["fit", "--data", "flat.csv", "--out", "model.txt"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("degenerate data"));
    assert!(!d.join("model.txt").exists());
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_2d(&d.join("train.csv"), 80, 0.0);
    std::fs::write(d.join("run.cfg"), "kernel = tricube\nk = 3\nmax_iters = 20\ndata = train.csv\n").unwrap();
    ok(d, &["--config", "run.cfg", "fit", "--out", "a.txt"]);
    assert!(read(d.join("a.txt")).contains("kernel = tricube\nk = 3\n"));
    ok(d, &["--config", "run.cfg", "fit", "--k", "2", "--out", "b.txt"]);
    assert!(read(d.join("b.txt")).contains("k = 2\n"));

    std::fs::write(d.join("bad.cfg"), "kernal = tricube\n").unwrap();
    assert!(!sli(d, &["--config", "bad.cfg", "fit"]).status.success());
}

#[test]
fn multistart_never_worse_and_thread_count_irrelevant() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_2d(&d.join("train.csv"), 100, 0.0);
    let cost = |f: &str| -> f64 {
        read(d.join(f))
            .lines()
            .find_map(|l| l.strip_prefix("cost = "))
            .unwrap()
            .parse()
            .unwrap()
    };
    ok(d, &["fit", "--data", "train.csv", "--seed", "3", "--multistart", "0", "--out", "one.txt"]);
    ok(d, &["fit", "--data", "train.csv", "--seed", "3", "--multistart", "4", "--out", "many.txt"]);
    assert!(cost("many.txt") <= cost("one.txt"));
    ok(d, &["--threads", "1", "fit", "--data", "train.csv", "--seed", "3", "--multistart", "4", "--out", "t1.txt"]);
    assert_eq!(read(d.join("many.txt")), read(d.join("t1.txt")));
}

#[test]
fn stability_and_nll_check() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_2d(&d.join("train.csv"), 40, 0.0);
    ok(d, &["stability", "--data", "train.csv", "--max-iters", "30", "--out", "stab.csv"]);
    let s = read(d.join("stab.csv"));
    assert!(s.starts_with("removed,alpha1,alpha2,mu,lambda,cost,converged\n"));
    assert_eq!(rows(&s), 40);
    assert!(!sli(d, &["stability", "--data", "train.csv", "--max-n", "10"]).status.success());

    ok(d, &["fit", "--data", "train.csv", "--out", "model.txt"]);
    let out = ok(d, &["nll-check", "--model", "model.txt", "--data", "train.csv"]);
    assert!(out.contains("N/2              2.0000000000000000e1"), "{out}");
}
