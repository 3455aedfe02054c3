use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use serde_json::Value;
use statrs::function::gamma::ln_gamma;

use vpmix::checkpoint::Checkpoint;
use vpmix::data::{ingest, Column, Schema};
use vpmix::model::FeatureParams;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn vpmix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vpmix")).args(args).env("VPMIX_LOG", "warn").output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = vpmix(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Partitions a bundled fixture into `dir/parts`.
fn partitioned(dir: &Path, fixture: &str) -> PathBuf {
    let f = fixtures().join(fixture);
    let parts = dir.join("parts");
    ok(&["partition", "--input", p(&f.join("data.csv")), "--schema", p(&f.join("schema.toml")), "--out-dir", p(&parts)]);
    parts
}

fn last_json(stdout: &str) -> Value {
    serde_json::from_str(stdout.lines().last().expect("output")).unwrap()
}

fn metrics(run: &Path) -> Vec<Value> {
    fs::read_to_string(run.join("metrics.jsonl")).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn partition_writes_one_file_per_party_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let parts = partitioned(dir.path(), "small");
    let mut names: Vec<String> = fs::read_dir(&parts).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["manifest.json", "party_0.csv", "party_1.csv"]);
    let snapshot = |d: &Path| names.iter().map(|n| fs::read(d.join(n)).unwrap()).collect::<Vec<_>>();
    let first = snapshot(&parts);
    partitioned(dir.path(), "small");
    assert_eq!(snapshot(&parts), first);
}

#[test]
fn invalid_input_exits_one_with_coordinates() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "age,region,income,tier\n30,north,10,basic\n30,mars,10,basic\n").unwrap();
    let schema = fixtures().join("small/schema.toml");
    let out = vpmix(&["partition", "--input", p(&bad), "--schema", p(&schema), "--out-dir", p(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3") && err.contains("region") && err.contains("mars"), "{err}");
    // usage errors are validation errors too
    assert_eq!(vpmix(&["train", "--config"]).status.code(), Some(1));
    assert_eq!(vpmix(&["account", "--sigma", "2", "--q", "1.5", "--iters", "10"]).status.code(), Some(1));
}

#[test]
fn runtime_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let parts = partitioned(dir.path(), "small");
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let config = fixtures().join("small/job.toml");
    let out = vpmix(&["train", "--config", p(&config), "--data-dir", p(&parts), "--out", p(&blocker.join("run"))]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn smoke_train_is_fast_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let parts = partitioned(dir.path(), "small");
    let config = fixtures().join("small/job.toml");
    let start = Instant::now();
    let run = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec!["train", "--config", p(&config), "--data-dir", p(&parts), "--out", p(&out)];
        args.extend_from_slice(extra);
        (last_json(&ok(&args)), out)
    };
    let (summary, a) = run("a", &[]);
    assert!(start.elapsed() < Duration::from_secs(60));
    assert_eq!(summary["trainer"], "vpd-fixed-point");
    assert_eq!(summary["iterations"], 10);
    assert!(summary["epsilon"].as_f64().unwrap() > 0.0);
    for f in ["checkpoint.json", "metrics.jsonl", "config.toml"] {
        assert!(a.join(f).exists(), "{f}");
    }
    let ck = Checkpoint::load(&a.join("checkpoint.json")).unwrap();
    assert_eq!(ck.config.as_ref().unwrap().iterations, 10);
    assert_eq!(metrics(&a).len(), 3);

    let (_, b) = run("b", &[]);
    assert_eq!(fs::read(a.join("checkpoint.json")).unwrap(), fs::read(b.join("checkpoint.json")).unwrap());
    let (_, c) = run("c", &["--seed", "2"]);
    assert_ne!(fs::read(a.join("checkpoint.json")).unwrap(), fs::read(c.join("checkpoint.json")).unwrap());

    let (summary, _) = run("plain", &["--plain"]);
    assert_eq!(summary["trainer"], "plain");
    let (summary, mpc) = run("mpc", &["--backend", "mpc", "--iterations", "3"]);
    assert_eq!(summary["trainer"], "vpd-mpc");
    assert!(mpc.join("transcript.jsonl").exists());
}

#[test]
fn no_normalizer_flag_flattens_the_vanishing_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let parts = partitioned(dir.path(), "vanishing");
    let config = fixtures().join("vanishing/job.toml");
    let flat = dir.path().join("flat");
    ok(&["train", "--config", p(&config), "--data-dir", p(&parts), "--out", p(&flat), "--no-normalizer"]);
    let nll: Vec<f64> = metrics(&flat).iter().map(|m| m["train_nll"].as_f64().unwrap()).collect();
    assert_eq!(nll.len(), 31);
    assert!((nll[nll.len() - 1] - nll[0]).abs() < 1e-3, "{nll:?}");

    let learns = dir.path().join("learns");
    ok(&["train", "--config", p(&config), "--data-dir", p(&parts), "--out", p(&learns), "--iterations", "500"]);
    let nll: Vec<f64> = metrics(&learns).iter().map(|m| m["train_nll"].as_f64().unwrap()).collect();
    assert!(nll.windows(2).all(|w| w[1] < w[0]), "{nll:?}");
}

fn account(args: &[&str]) -> f64 {
    let mut a = vec!["account", "--json"];
    a.extend_from_slice(args);
    last_json(&ok(&a))["epsilon"].as_f64().unwrap()
}

#[test]
fn account_reports_expected_ranges() {
    let q = (100.0f64 / 30162.0).to_string();
    let analyst = account(&["--sigma", "2.042", "--q", &q, "--iters", "20000", "--delta", "1e-5"]);
    assert!((0.8..=1.3).contains(&analyst), "{analyst}");
    let party = account(&["--sigma", "2.042", "--q", &q, "--iters", "66", "--known-indices"]);
    assert!((21.0..=34.0).contains(&party), "{party}");
    let more_noise = account(&["--sigma", "3", "--q", &q, "--iters", "20000"]);
    assert!(more_noise < analyst);
    let text = ok(&["account", "--sigma", "2.042", "--q", &q, "--iters", "100", "--party", "--colluding", "1", "--topology", "distributed"]);
    assert!(text.contains("view: party") && text.contains("epsilon:"), "{text}");
}

/// A trained checkpoint on the small fixture with no held-out rows.
fn trained_without_holdout(dir: &Path) -> (PathBuf, PathBuf, f64) {
    let parts = partitioned(dir, "small");
    let job = dir.join("job.toml");
    fs::write(&job, "[model]\nk = 3\n[data]\ntest_fraction = 0.0\n[train]\niterations = 30\nbatch = 40\nseed = 4\n").unwrap();
    let run = dir.join("run");
    let summary = last_json(&ok(&["train", "--config", p(&job), "--data-dir", p(&parts), "--out", p(&run)]));
    (run.join("checkpoint.json"), parts, summary["final_train_nll"].as_f64().unwrap())
}

#[test]
fn eval_on_training_rows_reproduces_the_logged_nll() {
    let dir = tempfile::tempdir().unwrap();
    let (ck, parts, logged) = trained_without_holdout(dir.path());
    let from_dir = last_json(&ok(&["eval", "--checkpoint", p(&ck), "--test", p(&parts)]));
    assert!((from_dir["test_nll"].as_f64().unwrap() - logged).abs() < 1e-6);
    let csv = fixtures().join("small/data.csv");
    let from_csv = last_json(&ok(&["eval", "--checkpoint", p(&ck), "--test", p(&csv)]));
    assert_eq!(from_csv["n_rows"], 200);
    assert!((from_csv["test_nll"].as_f64().unwrap() - logged).abs() < 1e-6);
}

fn beta_logpdf(x: f64, a: f64, b: f64) -> f64 {
    (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() + ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b)
}

#[test]
fn eval_with_one_component_matches_the_product_density() {
    let dir = tempfile::tempdir().unwrap();
    let parts = partitioned(dir.path(), "small");
    let job = dir.path().join("job.toml");
    fs::write(&job, "[model]\nk = 1\n[data]\ntest_fraction = 0.0\n[train]\niterations = 20\nbatch = 40\n").unwrap();
    let run = dir.path().join("run");
    ok(&["train", "--config", p(&job), "--data-dir", p(&parts), "--out", p(&run)]);
    let ck_path = run.join("checkpoint.json");
    let test = fixtures().join("small/test.csv");
    let reported = last_json(&ok(&["eval", "--checkpoint", p(&ck_path), "--test", p(&test)]))["test_nll"].as_f64().unwrap();

    let ck = Checkpoint::load(&ck_path).unwrap();
    let theta = ck.point_estimate().unwrap();
    let data = ingest(&test, ck.schema.as_ref().unwrap()).unwrap();
    let mut total = 0.0;
    for (f, col) in data.columns.iter().enumerate() {
        total += match (&theta.params[0][f], col) {
            (FeatureParams::Beta { a, b }, Column::Continuous(v)) => v.iter().map(|&x| beta_logpdf(x, *a, *b)).sum::<f64>(),
            (FeatureParams::Categorical(w), Column::Categorical(v)) => v.iter().map(|&c| w[c as usize].ln()).sum::<f64>(),
            _ => unreachable!(),
        };
    }
    let oracle = -total / data.n_rows as f64;
    assert!((reported - oracle).abs() < 1e-9, "{reported} vs {oracle}");
}

#[test]
fn generate_writes_valid_rows_at_model_frequencies() {
    let dir = tempfile::tempdir().unwrap();
    let (ck_path, _, _) = trained_without_holdout(dir.path());
    let ck = Checkpoint::load(&ck_path).unwrap();
    let schema: Schema = ck.schema.clone().unwrap();

    let empty = dir.path().join("empty.csv");
    ok(&["generate", "--checkpoint", p(&ck_path), "--n", "0", "--out", p(&empty)]);
    assert_eq!(fs::read_to_string(&empty).unwrap(), "age,region,income,tier\n");

    let n = 100_000;
    let out = dir.path().join("synthetic.csv");
    ok(&["generate", "--checkpoint", p(&ck_path), "--n", &n.to_string(), "--out", p(&out), "--seed", "9"]);
    let data = ingest(&out, &schema).unwrap();
    assert_eq!(data.n_rows, n);
    let theta = ck.point_estimate().unwrap();
    for (f, col) in data.columns.iter().enumerate() {
        let Column::Categorical(v) = col else { continue };
        let n_cat = schema.features[f].kind().con_dims();
        for c in 0..n_cat {
            // marginal category probability under the mixture
            let expected: f64 = (0..ck.spec.k)
                .map(|k| match &theta.params[k][f] {
                    FeatureParams::Categorical(w) => theta.pi[k] * w[c],
                    _ => unreachable!(),
                })
                .sum();
            let observed = v.iter().filter(|&&x| x as usize == c).count() as f64 / n as f64;
            let se = (expected * (1.0 - expected) / n as f64).sqrt();
            assert!((observed - expected).abs() <= 5.0 * se, "feature {f} category {c}: {observed} vs {expected}");
        }
    }
    let again = dir.path().join("again.csv");
    ok(&["generate", "--checkpoint", p(&ck_path), "--n", &n.to_string(), "--out", p(&again), "--seed", "9"]);
    assert_eq!(fs::read(&out).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn bundled_configs_and_adult_schema_parse() {
    let adult = Schema::load(&fixtures().join("adult/schema.toml")).unwrap();
    assert_eq!(adult.n_parties(), 2);
    assert_eq!(adult.features.len(), 13);
    let dir = tempfile::tempdir().unwrap();
    // every bundled job validates against its fixture; one iteration each
    for name in ["small", "vanishing", "five_component"] {
        let sub = dir.path().join(name);
        fs::create_dir(&sub).unwrap();
        let parts = partitioned(&sub, name);
        let config = fixtures().join(name).join("job.toml");
        ok(&["train", "--config", p(&config), "--data-dir", p(&parts), "--out", p(&sub.join("run")), "--iterations", "1"]);
    }
}
