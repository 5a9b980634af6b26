use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::real::Real;
use crate::rng::{self, Rng};
use crate::sim::Query;

/// Labeled response tensors: `target` is `[count_t, c, f]`, `nontarget` is
/// `[count_nt, c, f]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponsePool<T = f32> {
    target: Tensor<T>,
    nontarget: Tensor<T>,
}

/// Which pool items were drawn for one sequence, in query order. Each index
/// refers to the target pool when the symbol at that position is the target,
/// otherwise to the non-target pool.
pub type DrawnItems = Vec<usize>;

impl<T: Real> ResponsePool<T> {
    pub fn new(target: Tensor<T>, nontarget: Tensor<T>) -> Result<Self> {
        if target.rank() != 3 || nontarget.rank() != 3 {
            return Err(Error::dim("response pool", "rank-3 tensors", "other rank"));
        }
        if target.shape()[1..] != nontarget.shape()[1..] {
            return Err(Error::dim(
                "response pool",
                format!("non-target items shaped {:?}", &target.shape()[1..]),
                format!("{:?}", &nontarget.shape()[1..]),
            ));
        }
        if target.dim(0) == 0 || nontarget.dim(0) == 0 {
            return Err(Error::Invariant(
                "response pools need at least one item per class".into(),
            ));
        }
        if !target.all_finite() || !nontarget.all_finite() {
            return Err(Error::Invariant("response pool contains non-finite values".into()));
        }
        Ok(ResponsePool { target, nontarget })
    }

    pub fn target(&self) -> &Tensor<T> {
        &self.target
    }

    pub fn nontarget(&self) -> &Tensor<T> {
        &self.nontarget
    }

    pub fn channels(&self) -> usize {
        self.target.dim(1)
    }

    pub fn samples(&self) -> usize {
        self.target.dim(2)
    }

    pub fn count_target(&self) -> usize {
        self.target.dim(0)
    }

    pub fn count_nontarget(&self) -> usize {
        self.nontarget.dim(0)
    }

    pub fn cast<U: Real>(&self) -> ResponsePool<U> {
        ResponsePool {
            target: self.target.cast(),
            nontarget: self.nontarget.cast(),
        }
    }

    fn class(&self, is_target: bool) -> &Tensor<T> {
        if is_target {
            &self.target
        } else {
            &self.nontarget
        }
    }

    /// Sample one item per query position, with replacement.
    pub fn draw_items(&self, query: &Query, target: usize, rng: &mut Rng) -> DrawnItems {
        query
            .symbols()
            .iter()
            .map(|&s| rng.gen_range(0..self.class(s == target).dim(0)))
            .collect()
    }

    /// Stack the drawn items into a `[K, c, f]` tensor.
    pub fn gather(&self, query: &Query, target: usize, items: &[usize]) -> Tensor<T> {
        let item_len = self.target.item_len();
        let mut data = Vec::with_capacity(items.len() * item_len);
        for (&s, &idx) in query.symbols().iter().zip(items) {
            data.extend_from_slice(self.class(s == target).item(idx));
        }
        Tensor::from_vec(&[items.len(), self.channels(), self.samples()], data)
            .expect("pool item shape")
    }

    /// Split each class by shuffled item order; `held_fraction` of the items
    /// (at least one, leaving at least one) go to the second pool.
    pub fn split(&self, held_fraction: f64, rng: &mut Rng) -> Result<(Self, Self)> {
        let split_class = |t: &Tensor<T>, rng: &mut Rng| -> Result<(Tensor<T>, Tensor<T>)> {
            let n = t.dim(0);
            if n < 2 {
                return Err(Error::Config(format!(
                    "cannot split a class with {n} item(s)"
                )));
            }
            let held = ((n as f64 * held_fraction).round() as usize).clamp(1, n - 1);
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(rng);
            let pick = |idx: &[usize]| {
                let items: Vec<Tensor<T>> = idx.iter().map(|&i| t.item_tensor(i)).collect();
                Tensor::stack(&items.iter().collect::<Vec<_>>())
            };
            Ok((pick(&order[held..])?, pick(&order[..held])?))
        };
        let (tk, th) = split_class(&self.target, rng)?;
        let (nk, nh) = split_class(&self.nontarget, rng)?;
        Ok((ResponsePool::new(tk, nk)?, ResponsePool::new(th, nh)?))
    }
}

/// Draw one response per query position: target-pool items where the
/// symbol is the target, non-target items elsewhere.
pub fn draw_responses<T: Real>(
    query: &Query,
    target: usize,
    pool: &ResponsePool<T>,
    rng: &mut Rng,
) -> (Tensor<T>, DrawnItems) {
    let items = pool.draw_items(query, target, rng);
    (pool.gather(query, target, &items), items)
}

/// Synthetic pool parameters. `delta` is the peak distance between class
/// means in units of the per-element standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub channels: usize,
    pub samples: usize,
    pub delta: f64,
    pub count_target: usize,
    pub count_nontarget: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            channels: 2,
            samples: 48,
            delta: 1.0,
            count_target: 400,
            count_nontarget: 4000,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return Err(Error::Config(format!("delta must be >= 0, got {}", self.delta)));
        }
        if self.count_target == 0 || self.count_nontarget == 0 {
            return Err(Error::Config("pool counts must be >= 1".into()));
        }
        if self.channels == 0 || self.samples == 0 {
            return Err(Error::Config("channels and samples must be >= 1".into()));
        }
        Ok(())
    }
}

/// Unit-amplitude mean pattern of a target response, `[c, f]` row-major:
/// a half-sine bump over the middle third of the window on the first
/// `ceil(c / 2)` channels, zero elsewhere.
pub fn target_pattern(channels: usize, samples: usize) -> Vec<f64> {
    let active = channels.div_ceil(2);
    let width = samples as f64 / 3.0;
    let mut pattern = vec![0.0; channels * samples];
    for c in 0..active {
        for t in 0..samples {
            let x = (t as f64 + 0.5 - width) / width;
            if (0.0..=1.0).contains(&x) {
                pattern[c * samples + t] = (std::f64::consts::PI * x).sin();
            }
        }
    }
    pattern
}

pub fn synth_pools(cfg: &SynthConfig) -> Result<ResponsePool<f32>> {
    cfg.validate()?;
    let pattern = target_pattern(cfg.channels, cfg.samples);
    let mut rng = rng::stream(cfg.seed, rng::domain::SYNTH, 0);
    let draw = |count: usize, shift: f64, rng: &mut Rng| {
        let mut data = Vec::with_capacity(count * pattern.len());
        for _ in 0..count {
            for &w in &pattern {
                let z: f64 = rng.sample(StandardNormal);
                data.push((z + shift * w) as f32);
            }
        }
        Tensor::from_vec(&[count, cfg.channels, cfg.samples], data)
    };
    let target = draw(cfg.count_target, cfg.delta, &mut rng)?;
    let nontarget = draw(cfg.count_nontarget, 0.0, &mut rng)?;
    ResponsePool::new(target, nontarget)
}

/// On-disk dataset manifest; blobs are row-major `[count, c, f]` f32 LE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub channels: usize,
    pub samples: usize,
    pub count_target: usize,
    pub count_nontarget: usize,
    pub dtype: String,
    pub target_file: String,
    pub nontarget_file: String,
}

pub const DATASET_MANIFEST: &str = "dataset.json";

fn f32_bytes(t: &Tensor<f32>) -> Vec<u8> {
    t.data().iter().flat_map(|v| v.to_le_bytes()).collect()
}

/// Write `dataset.json`, `target.f32` and `nontarget.f32` into `dir`.
pub fn save_pools(pool: &ResponsePool<f32>, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let manifest = DatasetManifest {
        channels: pool.channels(),
        samples: pool.samples(),
        count_target: pool.count_target(),
        count_nontarget: pool.count_nontarget(),
        dtype: "f32le".into(),
        target_file: "target.f32".into(),
        nontarget_file: "nontarget.f32".into(),
    };
    fs::write(dir.join(&manifest.target_file), f32_bytes(pool.target()))?;
    fs::write(dir.join(&manifest.nontarget_file), f32_bytes(pool.nontarget()))?;
    let path = dir.join(DATASET_MANIFEST);
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(path)
}

/// Load a pool from its manifest. Any inconsistency fails the whole load.
pub fn load_pools(manifest_path: &Path) -> Result<ResponsePool<f32>> {
    let text = fs::read_to_string(manifest_path)
        .map_err(|e| Error::load(manifest_path, "manifest", e))?;
    let m: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| Error::load(manifest_path, "manifest", e))?;
    if m.dtype != "f32le" {
        return Err(Error::load(manifest_path, "dtype", format!("unsupported `{}`", m.dtype)));
    }
    if m.channels == 0 || m.samples == 0 {
        return Err(Error::load(manifest_path, "channels", "dimensions must be positive"));
    }
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let read = |file: &str, field: &str, count: usize| -> Result<Tensor<f32>> {
        let path = dir.join(file);
        let bytes = fs::read(&path).map_err(|e| Error::load(&path, field, e))?;
        let expected = count * m.channels * m.samples * 4;
        if bytes.len() != expected {
            return Err(Error::load(
                &path,
                field,
                format!("expected {expected} bytes, found {}", bytes.len()),
            ));
        }
        let data: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::load(&path, field, "non-finite value"));
        }
        Tensor::from_vec(&[count, m.channels, m.samples], data)
    };
    let target = read(&m.target_file, "target_file", m.count_target)?;
    let nontarget = read(&m.nontarget_file, "nontarget_file", m.count_nontarget)?;
    ResponsePool::new(target, nontarget)
        .map_err(|e| Error::load(manifest_path, "pool", e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn tiny_pool() -> ResponsePool<f32> {
        let target = Tensor::from_vec(&[1, 1, 2], vec![9.0, 9.5]).unwrap();
        let nontarget = Tensor::from_vec(&[3, 1, 2], vec![0.0, 0.1, 1.0, 1.1, 2.0, 2.1]).unwrap();
        ResponsePool::new(target, nontarget).unwrap()
    }

    #[test]
    fn target_absent_draws_nontargets_only() {
        let pool = tiny_pool();
        let q = Query::new(vec![0, 1, 2], 5).unwrap();
        let mut rng = seeded(3);
        for _ in 0..50 {
            let (resp, _) = draw_responses(&q, 4, &pool, &mut rng);
            assert!(resp.data().iter().all(|&v| v < 3.0));
        }
    }

    #[test]
    fn single_target_item_is_copied_exactly() {
        let pool = tiny_pool();
        let q = Query::new(vec![3, 1], 5).unwrap();
        let (resp, items) = draw_responses(&q, 3, &pool, &mut seeded(0));
        assert_eq!(resp.item(0), &[9.0, 9.5]);
        assert_eq!(items[0], 0);
        assert_eq!(resp.shape(), &[2, 1, 2]);
    }

    #[test]
    fn synth_is_deterministic() {
        let cfg = SynthConfig {
            count_target: 5,
            count_nontarget: 7,
            ..SynthConfig::default()
        };
        assert_eq!(synth_pools(&cfg).unwrap(), synth_pools(&cfg).unwrap());
        let other = SynthConfig { seed: 1, ..cfg.clone() };
        assert_ne!(synth_pools(&cfg).unwrap(), synth_pools(&other).unwrap());
        assert!(synth_pools(&SynthConfig { delta: -1.0, ..cfg }).is_err());
    }

    #[test]
    fn pattern_touches_first_half_of_channels() {
        let p = target_pattern(3, 12);
        assert!(p[..24].iter().any(|&v| v > 0.5));
        assert!(p[24..].iter().all(|&v| v == 0.0));
        assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn split_keeps_both_classes() {
        let pool = synth_pools(&SynthConfig {
            count_target: 10,
            count_nontarget: 20,
            ..SynthConfig::default()
        })
        .unwrap();
        let (kept, held) = pool.split(0.1, &mut seeded(0)).unwrap();
        assert_eq!(kept.count_target() + held.count_target(), 10);
        assert_eq!(held.count_target(), 1);
        assert_eq!(held.count_nontarget(), 2);
    }
}
