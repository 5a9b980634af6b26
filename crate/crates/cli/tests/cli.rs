use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

const TINY: &str = "\
synth.samples = 12
synth.count_target = 60
synth.count_nontarget = 600
model.alphabet = 8
model.query_size = 3
model.sequences = 4
model.feature_len = 4
model.hidden = 6
model.conv = 3:3:1,4:3:2,3:2:1,3:1:1,3:1:1
train.batches_per_epoch = 3
train.val_trials = 20
session.trials = 100
";

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_markovtyper"));
    cmd.env_remove("MARKOVTYPER_SEED");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn ok(args: &[&str]) {
    let out = run(args);
    assert_eq!(code(&out), 0, "{args:?}\n{}", String::from_utf8_lossy(&out.stderr));
}

struct Work {
    dir: tempfile::TempDir,
}

impl Work {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("tiny.cfg"), TINY).unwrap();
        Work { dir }
    }

    fn p(&self, name: &str) -> String {
        self.dir.path().join(name).to_str().unwrap().to_string()
    }

    fn data(&self, name: &str, delta: &str, seed: &str) -> String {
        ok(&["gen-data", "--config", &self.p("tiny.cfg"), "--delta", delta, "--seed", seed, "--out", &self.p(name)]);
        self.p(name)
    }
}

fn bytes(dir: &str, file: &str) -> Vec<u8> {
    fs::read(Path::new(dir).join(file)).unwrap()
}

#[test]
fn gen_data_is_byte_reproducible() {
    let w = Work::new();
    let a = w.data("a", "3", "0");
    let b = w.data("b", "3", "0");
    for f in ["dataset.json", "target.f32", "nontarget.f32", "config.txt"] {
        assert_eq!(bytes(&a, f), bytes(&b, f), "{f}");
    }
    let c = w.data("c", "3", "1");
    assert_ne!(bytes(&a, "target.f32"), bytes(&c, "target.f32"));
}

#[test]
fn seed_env_var_is_the_fallback() {
    let w = Work::new();
    let flagged = w.data("flag", "2", "3");
    let out = bin()
        .env("MARKOVTYPER_SEED", "3")
        .args(["gen-data", "--config", &w.p("tiny.cfg"), "--delta", "2", "--out", &w.p("env")])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert_eq!(bytes(&flagged, "target.f32"), bytes(&w.p("env"), "target.f32"));
    // the flag wins over the environment
    let out = bin()
        .env("MARKOVTYPER_SEED", "5")
        .args(["gen-data", "--config", &w.p("tiny.cfg"), "--delta", "2", "--seed", "3", "--out", &w.p("both")])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert_eq!(bytes(&flagged, "target.f32"), bytes(&w.p("both"), "target.f32"));
}

#[test]
fn usage_errors_exit_2() {
    let w = Work::new();
    let data = w.data("d", "1", "0");
    let cases: Vec<Vec<String>> = vec![
        vec!["gen-data".into(), "--delta".into(), "-1".into(), "--out".into(), w.p("x")],
        vec!["train".into(), "--data".into(), data.clone(), "--method".into(), "bogus".into(), "--out".into(), w.p("x")],
        vec!["train".into(), "--data".into(), data.clone(), "--discount".into(), "inv4".into(), "--out".into(), w.p("x")],
        vec!["train".into(), "--data".into(), data.clone(), "--set".into(), "train.epoch=3".into(), "--out".into(), w.p("x")],
        vec!["gen-data".into(), "--seed".into(), "minus".into(), "--out".into(), w.p("x")],
        vec!["nonsense".into()],
    ];
    for args in cases {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = run(&args);
        assert_eq!(code(&out), 2, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = run(&["train", "--data", &data, "--method", "bogus", "--out", &w.p("x")]);
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("markovtype") && msg.contains("rb1d"), "{msg}");
}

fn train(w: &Work, data: &str, out: &str, extra: &[&str]) -> String {
    let cfg = w.p("tiny.cfg");
    let dir = w.p(out);
    let mut args = vec!["train", "--config", &cfg, "--data", data, "--epochs", "2", "--out", &dir];
    args.extend_from_slice(extra);
    ok(&args);
    dir
}

fn eval(w: &Work, checkpoint_dir: &str, out: &str, extra: &[&str]) -> String {
    let ckpt = format!("{checkpoint_dir}/checkpoint.json");
    let dir = w.p(out);
    let mut args = vec!["eval", "--checkpoint", &ckpt, "--out", &dir];
    args.extend_from_slice(extra);
    ok(&args);
    dir
}

#[test]
fn train_and_eval_are_reproducible_and_fast() {
    let w = Work::new();
    let data = w.data("d", "2", "0");
    let start = Instant::now();
    let t1 = train(&w, &data, "t1", &["--seed", "1"]);
    assert!(start.elapsed() < Duration::from_secs(60));
    let t2 = train(&w, &data, "t2", &["--seed", "1"]);
    for f in ["checkpoint.bin", "history.csv", "config.txt"] {
        assert_eq!(bytes(&t1, f), bytes(&t2, f), "{f}");
    }
    let e1 = eval(&w, &t1, "e1", &["--mode", "both"]);
    let e2 = eval(&w, &t2, "e2", &["--mode", "both"]);
    for f in ["summary.csv", "histogram.csv", "sweep.csv"] {
        assert_eq!(bytes(&e1, f), bytes(&e2, f), "{f}");
    }
    let history = String::from_utf8(bytes(&t1, "history.csv")).unwrap();
    assert!(history.starts_with("epoch,train_loss,val_accuracy,learning_rate\n"));
    assert_eq!(history.lines().count(), 3);
}

#[test]
fn resolved_config_is_recorded_and_reloadable() {
    let w = Work::new();
    let data = w.data("d", "2", "0");
    let t = train(&w, &data, "t", &["--discount", "inv3", "--method", "rb1d"]);
    let text = String::from_utf8(bytes(&t, "config.txt")).unwrap();
    for line in ["run.method = rb1d", "train.discount = inv3", "train.lambda = 0.1", "train.epochs = 2", "model.hidden = 6"] {
        assert!(text.lines().any(|l| l == line), "missing `{line}` in\n{text}");
    }
    // training again from the recorded config alone gives the same weights
    let again = w.p("again");
    ok(&["train", "--config", &format!("{t}/config.txt"), "--data", &data, "--out", &again]);
    assert_eq!(bytes(&t, "checkpoint.bin"), bytes(&again, "checkpoint.bin"));
}

#[test]
fn defaults_match_the_reference_hyperparameters() {
    let w = Work::new();
    let data = w.data("d", "2", "0");
    // one epoch keeps this fast; everything else is default
    let t = train(&w, &data, "t", &["--set", "train.epochs=1"]);
    let text = String::from_utf8(bytes(&t, "config.txt")).unwrap();
    for line in [
        "train.learning_rate = 0.001",
        "train.decay = 0.97",
        "train.batch = 28",
        "session.tau = 0.8",
    ] {
        assert!(text.lines().any(|l| l == line), "missing `{line}`");
    }
    let defaults = w.p("defaults");
    ok(&["gen-data", "--out", &defaults]);
    let text = String::from_utf8(bytes(&defaults, "config.txt")).unwrap();
    assert!(text.lines().any(|l| l == "train.epochs = 200"));
    assert!(text.lines().any(|l| l == "session.trials = 1000"));
}

#[test]
fn eval_modes_and_checkpoint_errors() {
    let w = Work::new();
    let data = w.data("d", "2", "0");
    let t = train(&w, &data, "t", &[]);
    let e = eval(&w, &t, "threshold", &["--mode", "threshold", "--tau", "0.8", "--trials", "50"]);
    let summary = String::from_utf8(bytes(&e, "summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2);
    assert_eq!(String::from_utf8(bytes(&e, "sweep.csv")).unwrap().lines().count(), 1);
    let s = eval(&w, &t, "sweep", &["--mode", "sweep"]);
    assert_eq!(String::from_utf8(bytes(&s, "summary.csv")).unwrap().lines().count(), 1);
    assert_eq!(String::from_utf8(bytes(&s, "sweep.csv")).unwrap().lines().count(), 5);

    let ckpt = format!("{t}/checkpoint.json");
    let tau = run(&["eval", "--checkpoint", &ckpt, "--tau", "1.1", "--out", &w.p("x")]);
    assert_eq!(code(&tau), 2);
    let shape = run(&["eval", "--checkpoint", &ckpt, "--set", "model.hidden=9", "--out", &w.p("x")]);
    assert_eq!(code(&shape), 1);
    let other = w.data("other", "2", "0");
    fs::write(Path::new(&other).join("dataset.json"), "{\"channels\": 3}").unwrap();
    let bad_data = run(&["eval", "--checkpoint", &ckpt, "--data", &other, "--out", &w.p("x")]);
    assert_eq!(code(&bad_data), 1);
    let missing = run(&["eval", "--checkpoint", &w.p("nope.json"), "--out", &w.p("x")]);
    assert_eq!(code(&missing), 1);
    let no_data = run(&["train", "--data", &w.p("nowhere"), "--out", &w.p("x")]);
    assert_eq!(code(&no_data), 1);
    assert!(!String::from_utf8_lossy(&no_data.stderr).is_empty());
}

fn lines(path: PathBuf) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().map(str::to_string).collect()
}

#[test]
fn report_merges_seeds_and_methods() {
    let w = Work::new();
    let data = w.data("d", "2", "0");
    let sessions = w.p("sessions");
    for seed in 0..5 {
        let s = seed.to_string();
        let t = train(&w, &data, &format!("t{seed}"), &["--seed", &s, "--set", "train.epochs=1"]);
        eval(&w, &t, &format!("sessions/mt{seed}"), &["--trials", "40"]);
    }
    let merged = w.p("merged");
    ok(&["report", "--out", &merged, &sessions]);
    let summary = lines(Path::new(&merged).join("summary.csv"));
    assert_eq!(summary.len(), 2);
    assert!(summary[1].starts_with("markovtype,linear,"));
    assert_eq!(summary[1].split(',').nth(3), Some("5"));
    let hist = lines(Path::new(&merged).join("histogram.csv"));
    let total: usize = hist[1..]
        .iter()
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            f[2].parse::<usize>().unwrap() + f[3].parse::<usize>().unwrap()
        })
        .sum();
    assert_eq!(total, 40 * 5);

    let rb = train(&w, &data, "rb", &["--method", "rb1d", "--set", "train.epochs=1"]);
    eval(&w, &rb, "sessions/rb", &["--trials", "40"]);
    ok(&["report", "--out", &merged, &sessions]);
    assert_eq!(lines(Path::new(&merged).join("summary.csv")).len(), 3);

    fs::create_dir_all(w.p("empty")).unwrap();
    assert_eq!(code(&run(&["report", "--out", &w.p("x"), &w.p("empty")])), 1);
    let broken = w.p("broken");
    fs::create_dir_all(&broken).unwrap();
    fs::write(Path::new(&broken).join("session.json"), "{\"method\": 3}").unwrap();
    let out = run(&["report", "--out", &w.p("x"), &broken]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("broken"));
}
