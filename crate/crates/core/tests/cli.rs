use std::fs;
use std::io::BufReader;
use std::path::Path;

use tempfile::TempDir;

use peersign::cli::run_with_args;
use peersign::graph::{load_edge_list, EdgeListFormat};
use peersign::opinion::{predict_sign, read_predictors};

fn run(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let mut argv = vec!["peersign"];
    argv.extend_from_slice(args);
    let code = run_with_args(argv, &mut out);
    (code, String::from_utf8(out).unwrap())
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_owned()
}

fn synth(dir: &TempDir, nodes: &str) -> String {
    let graph = path(dir, "planted.txt");
    let (code, _) = run(&["synth", "--out", &graph, "--nodes", nodes, "--targets-per-node", "50"]);
    assert_eq!(code, 0);
    graph
}

/// Three sources with identical out-links: each one is a perfect peer for
/// the others.
fn twins(dir: &TempDir) -> String {
    let mut text = String::new();
    for t in 0..60 {
        let sign = if t % 3 == 0 { -1 } else { 1 };
        for src in ["a", "b", "c"] {
            text.push_str(&format!("{src} t{t} {sign}\n"));
        }
    }
    let p = path(dir, "twins.txt");
    fs::write(&p, text).unwrap();
    p
}

fn accuracy_field(report: &str) -> (String, String) {
    let row: Vec<&str> = report.lines().nth(1).unwrap().split('\t').collect();
    (row[1].to_owned(), row[2].to_owned())
}

#[test]
fn stats_prints_counts() {
    let dir = TempDir::new().unwrap();
    let data = path(&dir, "g.txt");
    fs::write(&data, "# comment\n1 2 1\n2 3 -1\n3 1 1\n1 1 1\n").unwrap();
    let (code, out) = run(&["stats", "--dataset", &data]);
    assert_eq!(code, 0);
    assert_eq!(out, "nodes\tedges\tpositive_pct\tnegative_pct\n3\t3\t66.7\t33.3\n");
}

#[test]
fn stats_on_empty_file_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let data = path(&dir, "empty.txt");
    fs::write(&data, "").unwrap();
    assert_eq!(run(&["stats", "--dataset", &data]).0, 3);
    assert_eq!(run(&["stats", "--dataset", &path(&dir, "missing.txt")]).0, 3);
}

#[test]
fn config_errors_exit_with_2() {
    let dir = TempDir::new().unwrap();
    let data = twins(&dir);
    let out = path(&dir, "run");
    assert_eq!(run(&["train", "--dataset", &data, "--out", &out, "--d", "30", "--solver", "exact"]).0, 2);
    assert_eq!(run(&["train", "--dataset", &data, "--out", &out, "--variant", "nope"]).0, 2);
    assert_eq!(run(&["train", "--dataset", &data]).0, 2);
    assert_eq!(run(&["frobnicate"]).0, 2);

    let cfg = path(&dir, "bad.cfg");
    fs::write(&cfg, "dataset=x\ncolour=blue\n").unwrap();
    assert_eq!(run(&["stats", "--config", &cfg]).0, 2);
    assert!(!Path::new(&out).exists());
}

#[test]
fn config_file_with_flag_override() {
    let dir = TempDir::new().unwrap();
    let data = twins(&dir);
    let cfg = path(&dir, "run.cfg");
    fs::write(&cfg, format!("# twins\ndataset={data}\nd=4\np=1\nq=1\nseed=5\n")).unwrap();
    let out = path(&dir, "run");
    let (code, _) = run(&["train", "--config", &cfg, "--d", "6", "--out", &out]);
    assert_eq!(code, 0);
    let text = fs::read_to_string(Path::new(&out).join("predictors.txt")).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.contains("\td=6\t") && header.contains("\tseed=5\t"), "{header}");
}

#[test]
fn perfect_toy_pipeline() {
    let dir = TempDir::new().unwrap();
    let data = twins(&dir);
    let out = path(&dir, "run");
    assert_eq!(run(&["train", "--dataset", &data, "--p", "1", "--q", "1", "--out", &out]).0, 0);
    let (code, report) = run(&["evaluate", "--dataset", &data, "--q", "1", "--out", &out]);
    assert_eq!(code, 0, "{report}");
    let row: Vec<&str> = report.lines().nth(1).unwrap().split('\t').collect();
    assert_eq!(row[0], "raw");
    assert!(row[1].parse::<usize>().unwrap() > 0);
    assert_eq!(row[3], "1.000000");

    let log = fs::read_to_string(Path::new(&out).join("train_log.tsv")).unwrap();
    assert_eq!(log.lines().count(), 4);
}

#[test]
fn train_is_deterministic_and_resumable() {
    let dir = TempDir::new().unwrap();
    let data = synth(&dir, "60");
    let first = path(&dir, "first");
    let second = path(&dir, "second");
    for out in [&first, &second] {
        assert_eq!(run(&["train", "--dataset", &data, "--out", out, "--workers", "3"]).0, 0);
    }
    let file = |d: &str| fs::read(Path::new(d).join("predictors.txt")).unwrap();
    let reference = file(&first);
    assert_eq!(reference, file(&second));

    // rerun: every node is skipped and the file is rewritten unchanged
    let (code, out) = run(&["train", "--dataset", &data, "--out", &first]);
    assert_eq!(code, 0);
    assert!(out.starts_with("trained\t0\n"), "{out}");
    assert_eq!(reference, file(&first));

    // drop a few nodes and resume
    let text = String::from_utf8(reference.clone()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let truncated = lines[..lines.len() - 5].join("\n") + "\n";
    fs::write(Path::new(&second).join("predictors.txt"), truncated).unwrap();
    let (code, out) = run(&["train", "--dataset", &data, "--out", &second]);
    assert_eq!(code, 0);
    assert!(out.starts_with("trained\t5\n"), "{out}");
    assert_eq!(reference, file(&second));

    // settings that change training refuse to resume
    assert_eq!(run(&["train", "--dataset", &data, "--out", &second, "--d", "8"]).0, 2);
}

#[test]
fn evaluate_rejects_a_foreign_predictor_file() {
    let dir = TempDir::new().unwrap();
    let data = twins(&dir);
    let out = path(&dir, "run");
    assert_eq!(run(&["train", "--dataset", &data, "--p", "1", "--out", &out]).0, 0);
    let other = path(&dir, "other.txt");
    fs::write(&other, fs::read_to_string(&data).unwrap().replace("c t0", "d t0")).unwrap();
    assert_eq!(run(&["evaluate", "--dataset", &other, "--out", &out]).0, 3);
}

#[test]
fn sweep_cell_matches_train_and_evaluate() {
    let dir = TempDir::new().unwrap();
    let data = synth(&dir, "60");
    let (code, table) = run(&["sweep", "--dataset", &data, "--p-list", "5,40", "--q-list", "0,30"]);
    assert_eq!(code, 0);
    let rows: Vec<Vec<String>> = table
        .lines()
        .skip(1)
        .map(|l| l.split('\t').map(str::to_owned).collect())
        .collect();
    assert_eq!(rows.len(), 4);

    let out = path(&dir, "p40");
    assert_eq!(run(&["train", "--dataset", &data, "--p", "40", "--out", &out]).0, 0);
    let (_, report) = run(&["evaluate", "--dataset", &data, "--q", "30", "--out", &out]);
    let (tested, correct) = accuracy_field(&report);
    let cell = rows.iter().find(|r| r[0] == "40" && r[1] == "30").unwrap();
    assert_eq!((cell[2].clone(), cell[3].clone()), (tested, correct));
}

#[test]
fn accuracy_does_not_drop_with_q_at_default_p() {
    let dir = TempDir::new().unwrap();
    let data = synth(&dir, "80");
    let (code, table) = run(&["sweep", "--dataset", &data, "--p-list", "15", "--q-list", "0,10,20,40"]);
    assert_eq!(code, 0);
    let acc: Vec<f64> = table
        .lines()
        .skip(1)
        .map(|l| l.split('\t').nth(4).unwrap().parse().unwrap())
        .collect();
    assert!(acc.windows(2).all(|w| w[1] >= w[0]), "{acc:?}");
}

#[test]
fn synth_model_reproduces_the_emitted_signs() {
    let dir = TempDir::new().unwrap();
    let data = synth(&dir, "50");
    let g = load_edge_list(BufReader::new(fs::File::open(&data).unwrap()), &EdgeListFormat::default()).unwrap();
    let model = fs::File::open(format!("{data}.model")).unwrap();
    let (header, predictors) = read_predictors(BufReader::new(model)).unwrap();
    assert_eq!(header.get("graph"), Some(g.fingerprint().as_str()));
    assert_eq!(predictors.len(), 45);
    for p in &predictors {
        for &(y, sign) in g.out_edges(p.source()) {
            assert_eq!(predict_sign(&g, p, y), sign);
        }
    }
}

#[test]
fn convert_ratings_then_stats() {
    let dir = TempDir::new().unwrap();
    let ratings = path(&dir, "u.data");
    fs::write(&ratings, "1\t10\t5\t0\n1\t11\t2\t0\n2\t10\t3\t0\n2\t12\t4\t0\n").unwrap();
    let edges = path(&dir, "edges.txt");
    let (code, out) = run(&["convert", "--dataset", &ratings, "--out", &edges]);
    assert_eq!(code, 0);
    assert!(out.ends_with("5\t4\t50.0\t50.0\n"), "{out}");
    let (code, again) = run(&["stats", "--dataset", &edges]);
    assert_eq!(code, 0);
    assert_eq!(out, again);
}

#[test]
fn averaged_and_balanced_regimes_run() {
    let dir = TempDir::new().unwrap();
    let data = synth(&dir, "60");
    let out = path(&dir, "run");
    assert_eq!(run(&["train", "--dataset", &data, "--out", &out]).0, 0);
    let (code, report) = run(&["evaluate", "--dataset", &data, "--out", &out, "--regime", "averaged"]);
    assert_eq!(code, 0);
    assert!(report.lines().nth(1).unwrap().starts_with("averaged\t"));
    let (code, report) = run(&["evaluate", "--dataset", &data, "--regime", "balanced"]);
    assert_eq!(code, 0, "{report}");
    assert!(report.lines().nth(1).unwrap().starts_with("balanced\t"));
}
