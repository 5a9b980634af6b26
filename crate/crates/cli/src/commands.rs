use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use markovtype::eval::{
    export_reports, run_session, sweep_no_threshold, Decoder, MarkovDecoder, Method, RbDecoder,
    SessionRecord, ThresholdSummary, SESSION_JSON,
};
use markovtype::model::MarkovType;
use markovtype::nn::{load_checkpoint, save_checkpoint};
use markovtype::rb::{train_binary_with_progress, BinaryClassifier};
use markovtype::sim::{load_pools, save_pools, synth_pools, DataSplit, ResponsePool, DATASET_MANIFEST};
use markovtype::trainer::{train_with_progress, EpochRecord};
use serde_json::json;

use crate::config::{Mode, Overrides, RunConfig, RESOLVED_CONFIG};
use crate::Failure;

pub const CHECKPOINT: &str = "checkpoint.json";
pub const HISTORY_CSV: &str = "history.csv";

type Outcome = Result<(), Failure>;

fn write_resolved(cfg: &RunConfig, out: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    fs::write(out.join(RESOLVED_CONFIG), cfg.to_text())?;
    Ok(())
}

fn manifest_path(data: &Path) -> PathBuf {
    if data.is_dir() {
        data.join(DATASET_MANIFEST)
    } else {
        data.to_path_buf()
    }
}

fn load_data(data: &Path) -> anyhow::Result<(ResponsePool<f32>, PathBuf)> {
    let manifest = manifest_path(data);
    let pool = load_pools(&manifest).with_context(|| format!("cannot load dataset {}", data.display()))?;
    let manifest = manifest.canonicalize().unwrap_or(manifest);
    Ok((pool, manifest))
}

fn split(cfg: &RunConfig, pool: &ResponsePool<f32>) -> anyhow::Result<DataSplit> {
    Ok(DataSplit::new(
        pool,
        cfg.split.test_fraction,
        cfg.split.val_fraction,
        cfg.split.seed,
    )?)
}

pub fn gen_data(overrides: &Overrides, env_seed: Option<&str>, out: &Path) -> Outcome {
    let cfg = RunConfig::resolve(&RunConfig::default(), overrides, env_seed)?;
    let pool = synth_pools(&cfg.synth).map_err(anyhow::Error::from)?;
    let manifest = save_pools(&pool, out)
        .with_context(|| format!("cannot write dataset to {}", out.display()))?;
    write_resolved(&cfg, out)?;
    println!("{}", manifest.display());
    Ok(())
}

fn write_history(history: &[EpochRecord], path: &Path) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for record in history {
        w.serialize(record)?;
    }
    w.flush()?;
    Ok(())
}

fn progress(total: usize) -> impl FnMut(&EpochRecord) {
    move |r: &EpochRecord| {
        eprintln!(
            "epoch {}/{total}  loss {:.5}  val_acc {:.4}  lr {:.3e}",
            r.epoch, r.train_loss, r.val_accuracy, r.learning_rate
        )
    }
}

pub fn train(overrides: &Overrides, env_seed: Option<&str>, data: &Path, out: &Path) -> Outcome {
    let mut cfg = RunConfig::resolve(&RunConfig::default(), overrides, env_seed)?;
    let (pool, manifest) = load_data(data)?;
    // the response shape comes from the data unless pinned
    for (key, slot, found) in [
        ("model.channels", &mut cfg.model.channels, pool.channels()),
        ("model.samples", &mut cfg.model.samples, pool.samples()),
    ] {
        if !overrides.contains(key) {
            *slot = found;
        } else if *slot != found {
            return Err(anyhow!("{key} = {slot} but the dataset has {found}").into());
        }
    }
    cfg.validate()?;
    let parts = split(&cfg, &pool)?;

    let epochs = cfg.train.epochs;
    let (params, history) = match cfg.run.method {
        Method::Markovtype => {
            let t = train_with_progress(&parts.train, &parts.validation, &cfg.model, &cfg.train, progress(epochs))
                .map_err(anyhow::Error::from)?;
            (t.params, t.history)
        }
        Method::Rb1d => {
            let t = train_binary_with_progress(
                &parts.train,
                &parts.validation,
                &cfg.model,
                &cfg.train,
                progress(epochs),
            )
            .map_err(anyhow::Error::from)?;
            (t.params, t.history)
        }
    };

    write_resolved(&cfg, out)?;
    let meta = json!({ "config": cfg.flat(), "data": manifest });
    save_checkpoint(&params, &out.join(CHECKPOINT), meta).context("cannot write checkpoint")?;
    write_history(&history, &out.join(HISTORY_CSV))?;
    println!("{}", out.join(CHECKPOINT).display());
    Ok(())
}

fn restore_config(meta: &serde_json::Value, path: &Path) -> anyhow::Result<RunConfig> {
    let flat: BTreeMap<String, String> = serde_json::from_value(meta["config"].clone())
        .with_context(|| format!("{}: checkpoint has no run configuration", path.display()))?;
    let mut o = Overrides::default();
    for (k, v) in &flat {
        o.set(k, v);
    }
    RunConfig::default()
        .apply(&o)
        .map_err(|e| anyhow!("{}: {e}", path.display()))
}

struct Evaluation {
    threshold: Option<ThresholdSummary>,
    sweep: Option<Vec<f64>>,
}

fn evaluate<D: Decoder>(decoder: &D, pool: &ResponsePool<f32>, cfg: &RunConfig) -> anyhow::Result<Evaluation> {
    let mode = cfg.eval.mode;
    let threshold = match mode {
        Mode::Threshold | Mode::Both => {
            let result = run_session(decoder, pool, &cfg.session)?;
            Some(ThresholdSummary::new(cfg.session.tau, &result))
        }
        Mode::Sweep => None,
    };
    let sweep = match mode {
        Mode::Sweep | Mode::Both => Some(sweep_no_threshold(
            decoder,
            pool,
            cfg.session.trials,
            cfg.session.seed,
            cfg.session.parallelism,
        )?),
        Mode::Threshold => None,
    };
    Ok(Evaluation { threshold, sweep })
}

pub fn eval(overrides: &Overrides, checkpoint: &Path, data: Option<&Path>, out: &Path) -> Outcome {
    let (params, meta) = load_checkpoint(checkpoint)
        .with_context(|| format!("cannot load checkpoint {}", checkpoint.display()))?;
    let trained = restore_config(&meta, checkpoint)?;
    // training-side settings are fixed by the checkpoint
    if let Some(key) = trained.conflict(overrides, &["run", "synth", "split", "model", "train"])? {
        return Err(anyhow!("`{key}` differs from the value in checkpoint {}", checkpoint.display()).into());
    }
    let mut cfg = trained.apply(overrides)?;
    if overrides.contains("seed") && !overrides.contains("session.seed") {
        cfg.session.seed = cfg.seed;
    }
    cfg.validate()?;

    let data = match data {
        Some(d) => d.to_path_buf(),
        None => meta["data"]
            .as_str()
            .map(PathBuf::from)
            .ok_or_else(|| anyhow!("checkpoint names no dataset; pass --data"))?,
    };
    let (pool, _) = load_data(&data)?;
    if (pool.channels(), pool.samples()) != (cfg.model.channels, cfg.model.samples) {
        return Err(anyhow!(
            "dataset responses are [{}, {}] but the checkpoint expects [{}, {}]",
            pool.channels(),
            pool.samples(),
            cfg.model.channels,
            cfg.model.samples
        )
        .into());
    }
    let test = split(&cfg, &pool)?.test;

    let shape = |e: markovtype::Error| anyhow!("checkpoint does not match its configuration: {e}");
    let (result, discount) = match cfg.run.method {
        Method::Markovtype => {
            let model = MarkovType::bind(&cfg.model, &params).map_err(shape)?;
            (evaluate(&MarkovDecoder::new(&model, &params), &test, &cfg)?, Some(cfg.train.discount))
        }
        Method::Rb1d => {
            let clf = BinaryClassifier::bind(&cfg.model, &params).map_err(shape)?;
            (evaluate(&RbDecoder::new(&clf, &params), &test, &cfg)?, None)
        }
    };
    let summary = result.threshold.as_ref().map(|t| {
        format!(
            "{}: accuracy {:.4}  n_tau {:.3}  itr/selection {:.3}  itr/sequence {:.3}",
            cfg.run.method, t.accuracy, t.n_tau, t.itr_selection, t.itr_sequence
        )
    });
    let record = SessionRecord {
        method: cfg.run.method,
        discount,
        num_params: params.num_params(),
        seed: cfg.seed,
        alphabet: cfg.model.alphabet,
        sequences: cfg.model.sequences,
        threshold: result.threshold,
        sweep: result.sweep,
        config: serde_json::to_value(cfg.flat()).map_err(anyhow::Error::from)?,
    };

    write_resolved(&cfg, out)?;
    fs::write(
        out.join(SESSION_JSON),
        serde_json::to_string_pretty(&record).map_err(anyhow::Error::from)? + "\n",
    )
    .map_err(anyhow::Error::from)?;
    export_reports(&[record], out).map_err(anyhow::Error::from)?;
    if let Some(line) = summary {
        println!("{line}");
    }
    Ok(())
}

fn find_sessions(dir: &Path, found: &mut Vec<PathBuf>) -> anyhow::Result<()> {
    if dir.is_file() {
        found.push(dir.to_path_buf());
        return Ok(());
    }
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("cannot read {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    entries.sort();
    for path in entries {
        if path.is_dir() {
            find_sessions(&path, found)?;
        } else if path.file_name().is_some_and(|n| n == SESSION_JSON) {
            found.push(path);
        }
    }
    Ok(())
}

pub fn report(inputs: &[PathBuf], out: &Path) -> Outcome {
    let mut files = Vec::new();
    for input in inputs {
        find_sessions(input, &mut files)?;
    }
    if files.is_empty() {
        return Err(anyhow!("no {SESSION_JSON} found under the inputs").into());
    }
    let mut records: Vec<SessionRecord> = Vec::with_capacity(files.len());
    for path in &files {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let record: SessionRecord =
            serde_json::from_str(&text).with_context(|| format!("{}: not a session record", path.display()))?;
        let n = record.sequences;
        let bad_hist = record.threshold.as_ref().is_some_and(|t| t.histogram.len() != n);
        let bad_sweep = record.sweep.as_ref().is_some_and(|s| s.len() != n);
        if bad_hist || bad_sweep {
            return Err(anyhow!("{}: histogram or sweep length differs from {n} sequences", path.display()).into());
        }
        if let Some(first) = records.iter().find(|r| r.method == record.method && r.discount == record.discount) {
            if (first.alphabet, first.sequences) != (record.alphabet, record.sequences) {
                return Err(anyhow!(
                    "{}: {} uses A={} N={}, earlier sessions used A={} N={}",
                    path.display(),
                    record.label(),
                    record.alphabet,
                    record.sequences,
                    first.alphabet,
                    first.sequences
                )
                .into());
            }
        }
        records.push(record);
    }
    let paths = export_reports(&records, out).map_err(anyhow::Error::from)?;
    println!("{}", paths.summary.display());
    Ok(())
}
