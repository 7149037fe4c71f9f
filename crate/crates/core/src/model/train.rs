//! Deterministic training loop: seeded on-line mixture sampling, batched
//! gradients, Adam updates, periodic validation, and resumable checkpoints.
//!
//! Everything a run produces is a pure function of the corpus, the mix
//! policy, and [`TrainConfig`]. Two RNG streams are derived from the seed:
//! one initializes the parameters, one drives mixture sampling; the data
//! stream's position is checkpointed, so an interrupted run resumed from
//! its last checkpoint is bit-identical to an uninterrupted one. Batch
//! items may be evaluated on worker threads, but gradients are accumulated
//! in item order, so the thread count never changes the result.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::clc::NormConfig;
use crate::data::{make_mixture, sample_spec, Corpus, MixPolicy, Split};
use crate::error::{Error, Result};
use crate::filterbank::{FbConfig, Filterbank, Waveform};
use crate::model::adam::{Adam, AdamConfig};
use crate::model::checkpoint::Checkpoint;
use crate::model::mlp::{ModelGeometry, ModelParams};
use crate::model::pipeline::{
    forward_pass, item_loss_and_grads, loss_and_gradient, loss_region, LossParts, LossWeights,
};

/// Decorrelates the mixture-sampling stream from parameter initialization.
const DATA_STREAM_SALT: u64 = 0xA02F_9E51_73C1_D4B7;
/// Decorrelates the fixed validation set from the training stream.
const VAL_STREAM_SALT: u64 = 0x51E9_02BD_4C88_16F3;

/// Complete training recipe. `max_steps` and `threads` control execution
/// only and are excluded from the checkpointed settings text: resuming may
/// raise the step budget or change the thread count without changing what
/// is computed.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub fb: FbConfig,
    pub norm: NormConfig,
    pub hidden: [usize; 3],
    /// Coefficient stack order; taps run `0..=order`.
    pub order: usize,
    /// Frame offset of the coefficient stack.
    pub offset: i32,
    /// Look-back context in milliseconds; must be a whole number of hops.
    pub tau1_ms: f64,
    /// Look-ahead context in milliseconds; must be a whole number of hops.
    pub tau2_ms: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub batch_size: usize,
    pub max_steps: u64,
    pub seed: u64,
    pub w_rmse: f64,
    pub w_sdr: f64,
    pub sdr_epsilon: f64,
    /// Training snippet length in seconds; longer mixtures are cropped at
    /// a seeded random position, shorter ones used whole.
    pub snippet_s: f64,
    /// Validate every this many steps (the final step always validates).
    pub val_every: u64,
    /// Fixed validation mixtures drawn once per seed.
    pub val_count: usize,
    /// Worker threads for batch evaluation; 1 is the reference path.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            fb: FbConfig::default(),
            norm: NormConfig::default(),
            hidden: [512, 512, 512],
            order: 5,
            offset: 1,
            tau1_ms: 200.0,
            tau2_ms: 2.0,
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            batch_size: 8,
            max_steps: 1000,
            seed: 0,
            w_rmse: 1.0,
            w_sdr: 1.0,
            sdr_epsilon: 1e-8,
            snippet_s: 2.0,
            val_every: 25,
            val_count: 8,
            threads: 1,
        }
    }
}

impl TrainConfig {
    fn context_frames(&self, tau_ms: f64, name: &str) -> Result<usize> {
        let frames = tau_ms / self.fb.hop_ms();
        if frames < -1e-9 || (frames - frames.round()).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "{name} = {tau_ms} ms is not a whole number of {} ms hops",
                self.fb.hop_ms()
            )));
        }
        Ok(frames.round() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        self.fb.validate()?;
        self.adam_config().validate()?;
        self.context_frames(self.tau1_ms, "tau1_ms")?;
        self.context_frames(self.tau2_ms, "tau2_ms")?;
        if self.batch_size == 0 || self.max_steps == 0 || self.val_every == 0 {
            return Err(Error::Config(
                "batch_size, max_steps and val_every must be positive".into(),
            ));
        }
        if self.val_count == 0 || self.threads == 0 {
            return Err(Error::Config("val_count and threads must be positive".into()));
        }
        if !(self.snippet_s > 0.0) {
            return Err(Error::Config(format!("snippet_s must be positive, got {}", self.snippet_s)));
        }
        self.geometry()?.validate()
    }

    pub fn geometry(&self) -> Result<ModelGeometry> {
        Ok(ModelGeometry {
            bins: self.fb.processed_bins(),
            tau1_frames: self.context_frames(self.tau1_ms, "tau1_ms")?,
            tau2_frames: self.context_frames(self.tau2_ms, "tau2_ms")?,
            order: self.order,
            offset: self.offset,
            hidden: self.hidden,
        })
    }

    pub fn adam_config(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.adam_epsilon,
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights { w_rmse: self.w_rmse, w_sdr: self.w_sdr, sdr_epsilon: self.sdr_epsilon }
    }

    /// The settings text stored in checkpoints: one `key = value` per line
    /// in a fixed order. Resuming requires an exact match, so this text
    /// deliberately omits `max_steps` and `threads`.
    pub fn to_canonical_text(&self, policy: &MixPolicy) -> String {
        fn list(vals: &[f64]) -> String {
            vals.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
        }
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        kv("format", "1".into());
        kv("sample_rate", self.fb.sample_rate.to_string());
        kv("frame_len", self.fb.frame_len.to_string());
        kv("hop", self.fb.hop.to_string());
        kv("norm_time_constant_s", self.norm.time_constant_s.to_string());
        kv("norm_epsilon", self.norm.epsilon.to_string());
        kv("hidden", format!("{},{},{}", self.hidden[0], self.hidden[1], self.hidden[2]));
        kv("order", self.order.to_string());
        kv("offset", self.offset.to_string());
        kv("tau1_ms", self.tau1_ms.to_string());
        kv("tau2_ms", self.tau2_ms.to_string());
        kv("learning_rate", self.learning_rate.to_string());
        kv("beta1", self.beta1.to_string());
        kv("beta2", self.beta2.to_string());
        kv("adam_epsilon", self.adam_epsilon.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("seed", self.seed.to_string());
        kv("w_rmse", self.w_rmse.to_string());
        kv("w_sdr", self.w_sdr.to_string());
        kv("sdr_epsilon", self.sdr_epsilon.to_string());
        kv("snippet_s", self.snippet_s.to_string());
        kv("val_every", self.val_every.to_string());
        kv("val_count", self.val_count.to_string());
        kv("mix_snr_set_db", list(&policy.snr_set_db));
        kv("mix_offset_set_db", list(&policy.offset_set_db));
        kv("mix_max_noises", policy.max_noises.to_string());
        kv("mix_delta_snr_t_db", policy.delta_snr_t_db.to_string());
        s
    }

    /// Parses the canonical settings text back. `max_steps` and `threads`
    /// are not part of the text and come back at their defaults.
    pub fn from_canonical_text(text: &str) -> Result<(TrainConfig, MixPolicy)> {
        let mut map = std::collections::BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("settings line {}: no '=' in {line:?}", i + 1)))?;
            if map.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("settings key {:?} appears twice", k.trim())));
            }
        }
        let mut take = |k: &str| -> Result<String> {
            map.remove(k).ok_or_else(|| Error::Config(format!("settings text is missing {k:?}")))
        };
        fn num<T: std::str::FromStr>(k: &str, v: String) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("bad value for {k}: {v:?}")))
        }
        fn nums(k: &str, v: String) -> Result<Vec<f64>> {
            v.split(',').map(|p| num(k, p.trim().to_string())).collect()
        }
        let format: u32 = num("format", take("format")?)?;
        if format != 1 {
            return Err(Error::Config(format!("unsupported settings format {format}")));
        }
        let mut cfg = TrainConfig::default();
        cfg.fb = FbConfig {
            sample_rate: num("sample_rate", take("sample_rate")?)?,
            frame_len: num("frame_len", take("frame_len")?)?,
            hop: num("hop", take("hop")?)?,
        };
        cfg.norm = NormConfig {
            time_constant_s: num("norm_time_constant_s", take("norm_time_constant_s")?)?,
            epsilon: num("norm_epsilon", take("norm_epsilon")?)?,
        };
        let hidden = nums("hidden", take("hidden")?)?;
        if hidden.len() != 3 || hidden.iter().any(|&h| h < 1.0 || h.fract() != 0.0) {
            return Err(Error::Config(format!("hidden must be three positive integers, got {hidden:?}")));
        }
        cfg.hidden = [hidden[0] as usize, hidden[1] as usize, hidden[2] as usize];
        cfg.order = num("order", take("order")?)?;
        cfg.offset = num("offset", take("offset")?)?;
        cfg.tau1_ms = num("tau1_ms", take("tau1_ms")?)?;
        cfg.tau2_ms = num("tau2_ms", take("tau2_ms")?)?;
        cfg.learning_rate = num("learning_rate", take("learning_rate")?)?;
        cfg.beta1 = num("beta1", take("beta1")?)?;
        cfg.beta2 = num("beta2", take("beta2")?)?;
        cfg.adam_epsilon = num("adam_epsilon", take("adam_epsilon")?)?;
        cfg.batch_size = num("batch_size", take("batch_size")?)?;
        cfg.seed = num("seed", take("seed")?)?;
        cfg.w_rmse = num("w_rmse", take("w_rmse")?)?;
        cfg.w_sdr = num("w_sdr", take("w_sdr")?)?;
        cfg.sdr_epsilon = num("sdr_epsilon", take("sdr_epsilon")?)?;
        cfg.snippet_s = num("snippet_s", take("snippet_s")?)?;
        cfg.val_every = num("val_every", take("val_every")?)?;
        cfg.val_count = num("val_count", take("val_count")?)?;
        let policy = MixPolicy {
            snr_set_db: nums("mix_snr_set_db", take("mix_snr_set_db")?)?,
            offset_set_db: nums("mix_offset_set_db", take("mix_offset_set_db")?)?,
            max_noises: num("mix_max_noises", take("mix_max_noises")?)?,
            delta_snr_t_db: num("mix_delta_snr_t_db", take("mix_delta_snr_t_db")?)?,
        };
        if let Some(k) = map.keys().next() {
            return Err(Error::Config(format!("unknown settings key {k:?}")));
        }
        Ok((cfg, policy))
    }
}

/// Summary of one `train` call (resumed runs report their own steps only).
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Step count at exit.
    pub steps: u64,
    /// Mean training loss over the first (up to) 10 steps of this call.
    pub initial_loss: f64,
    /// Mean training loss over the last (up to) 10 steps of this call.
    pub final_loss: f64,
    pub best_val_loss: f64,
    pub final_val_loss: f64,
    pub final_val_sisdr_db: f64,
    pub best_path: PathBuf,
    pub last_path: PathBuf,
    pub log_path: PathBuf,
}

/// One prepared training or validation item.
struct Item {
    noisy: Waveform<f64>,
    target: Vec<f64>,
    region: (usize, usize),
}

fn make_item(
    corpus: &Corpus,
    policy: &MixPolicy,
    split: Split,
    geom: &ModelGeometry,
    fb: &FbConfig,
    snippet_len: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Item> {
    let spec = sample_spec(rng, corpus, split, policy)?;
    let mix = make_mixture(&spec, corpus)?;
    let full = mix.noisy.len();
    let (start, len) = if full > snippet_len {
        (rng.gen_range(0..=full - snippet_len), snippet_len)
    } else {
        (0, full)
    };
    let region = loss_region(geom, fb, len)?;
    Ok(Item {
        noisy: Waveform::new(
            mix.noisy.samples[start..start + len].to_vec(),
            mix.noisy.sample_rate,
        ),
        target: mix.target.samples[start..start + len].to_vec(),
        region,
    })
}

/// Loss and gradients for every item, preserving item order. With more
/// than one thread the items are split into contiguous chunks, but the
/// caller still accumulates in index order, so results are identical for
/// any thread count.
fn batch_results(
    params: &ModelParams<f64>,
    fbank: &Filterbank<f64>,
    norm: &NormConfig,
    weights: &LossWeights,
    items: &[Item],
    threads: usize,
) -> Vec<Result<(LossParts<f64>, Vec<f64>)>> {
    let run = |item: &Item| {
        item_loss_and_grads(params, fbank, norm, &item.noisy, &item.target, item.region, weights)
    };
    if threads <= 1 || items.len() <= 1 {
        return items.iter().map(run).collect();
    }
    let mut out: Vec<Option<Result<(LossParts<f64>, Vec<f64>)>>> =
        items.iter().map(|_| None).collect();
    let per = items.len().div_ceil(threads);
    std::thread::scope(|s| {
        for (slots, chunk) in out.chunks_mut(per).zip(items.chunks(per)) {
            s.spawn(move || {
                for (slot, item) in slots.iter_mut().zip(chunk) {
                    *slot = Some(run(item));
                }
            });
        }
    });
    out.into_iter().map(|o| o.expect("worker fills every slot")).collect()
}

/// Mean validation loss and mean SI-SDR (dB, estimate vs. target) over the
/// fixed validation items.
fn validate_model(
    params: &ModelParams<f64>,
    fbank: &Filterbank<f64>,
    norm: &NormConfig,
    weights: &LossWeights,
    items: &[Item],
) -> Result<(f64, f64)> {
    let mut loss_sum = 0.0;
    let mut sdr_sum = 0.0;
    for item in items {
        let pass = forward_pass(params, fbank, norm, &item.noisy)?;
        let (lo, hi) = item.region;
        let est = &pass.enhanced.samples[lo..hi];
        let tgt = &item.target[lo..hi];
        let (parts, _) = loss_and_gradient(est, tgt, weights)?;
        loss_sum += parts.total;
        sdr_sum += crate::metrics::si_sdr(tgt, est, 100.0)?;
    }
    let n = items.len() as f64;
    Ok((loss_sum / n, sdr_sum / n))
}

fn assemble_checkpoint(
    config_text: &str,
    params: &ModelParams<f64>,
    adam: &Adam<f64>,
    best_val_loss: f64,
    rng: &ChaCha8Rng,
) -> Checkpoint {
    let layout = params.geom.layout();
    let mut arrays = Vec::with_capacity(3 * layout.len());
    for (name, r) in &layout {
        arrays.push((name.to_string(), params.theta[r.clone()].to_vec()));
    }
    for (name, r) in &layout {
        arrays.push((format!("m_{name}"), adam.m[r.clone()].to_vec()));
    }
    for (name, r) in &layout {
        arrays.push((format!("v_{name}"), adam.v[r.clone()].to_vec()));
    }
    Checkpoint {
        config_text: config_text.to_string(),
        arrays,
        step: adam.step,
        best_val_loss,
        rng_seed: rng.get_seed(),
        rng_word_pos: rng.get_word_pos(),
    }
}

/// Rebuilds (theta, first moments, second moments) from a checkpoint's
/// named arrays, verifying every block exists at the expected length.
pub fn restore_arrays(
    ck: &Checkpoint,
    geom: &ModelGeometry,
    origin: &Path,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let mut theta = vec![0.0; geom.param_count()];
    let mut m = vec![0.0; geom.param_count()];
    let mut v = vec![0.0; geom.param_count()];
    for (name, r) in geom.layout() {
        for (prefix, dst) in [("", &mut theta), ("m_", &mut m), ("v_", &mut v)] {
            let key = format!("{prefix}{name}");
            let arr = ck
                .array(&key)
                .ok_or_else(|| Error::checkpoint(origin, format!("missing array {key:?}")))?;
            if arr.len() != r.len() {
                return Err(Error::checkpoint(
                    origin,
                    format!("array {key:?} has {} values, expected {}", arr.len(), r.len()),
                ));
            }
            dst[r.clone()].copy_from_slice(arr);
        }
    }
    Ok((theta, m, v))
}

/// First line where two settings texts disagree, for resume diagnostics.
fn first_text_diff(a: &str, b: &str) -> String {
    for (la, lb) in a.lines().zip(b.lines()) {
        if la != lb {
            return format!("checkpoint has {la:?}, requested {lb:?}");
        }
    }
    format!("texts differ in length ({} vs {} lines)", a.lines().count(), b.lines().count())
}

/// Runs (or resumes) training and returns where the artifacts live.
///
/// Writes `checkpoints/best.ckpt` (lowest validation loss), an always-fresh
/// `checkpoints/last.ckpt` at every validation step, and a CSV log
/// `logs/train.csv` with header `step,loss,rmse,neg_sisdr,val_sisdr` (the
/// validation column is empty between validations). Resuming appends to
/// the log and requires the checkpoint's settings text to match `cfg` and
/// `policy` exactly.
pub fn train(
    corpus: &Corpus,
    policy: &MixPolicy,
    cfg: &TrainConfig,
    run_dir: &Path,
    resume: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let geom = cfg.geometry()?;
    let fbank = Filterbank::<f64>::new(cfg.fb)?;
    let weights = cfg.loss_weights();
    let canonical = cfg.to_canonical_text(policy);
    let snippet_len = (cfg.snippet_s * cfg.fb.sample_rate as f64).round() as usize;

    let (mut params, mut adam, mut best_val_loss, mut rng_data) = match resume {
        None => (
            ModelParams::<f64>::init(geom, &mut ChaCha8Rng::seed_from_u64(cfg.seed))?,
            Adam::new(geom.param_count(), cfg.adam_config())?,
            f64::INFINITY,
            ChaCha8Rng::seed_from_u64(cfg.seed ^ DATA_STREAM_SALT),
        ),
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            if ck.config_text != canonical {
                return Err(Error::Config(format!(
                    "cannot resume {}: settings differ — {}",
                    path.display(),
                    first_text_diff(&ck.config_text, &canonical)
                )));
            }
            if ck.step >= cfg.max_steps {
                return Err(Error::Config(format!(
                    "checkpoint is already at step {}, max_steps is {}",
                    ck.step, cfg.max_steps
                )));
            }
            let (theta, m, v) = restore_arrays(&ck, &geom, path)?;
            let mut rng = ChaCha8Rng::from_seed(ck.rng_seed);
            rng.set_word_pos(ck.rng_word_pos);
            (
                ModelParams { geom, theta },
                Adam { cfg: cfg.adam_config(), m, v, step: ck.step },
                ck.best_val_loss,
                rng,
            )
        }
    };

    // Fixed validation set from its own stream; rebuilding it on resume
    // yields the same items because it never advances during training.
    let mut rng_val = ChaCha8Rng::seed_from_u64(cfg.seed ^ VAL_STREAM_SALT);
    let val_items: Vec<Item> = (0..cfg.val_count)
        .map(|_| {
            // Validation scores full mixtures; no snippet cropping.
            make_item(corpus, policy, Split::Validation, &geom, &cfg.fb, usize::MAX, &mut rng_val)
        })
        .collect::<Result<_>>()?;

    let ck_dir = run_dir.join("checkpoints");
    let log_dir = run_dir.join("logs");
    std::fs::create_dir_all(&ck_dir).map_err(|e| Error::io(&ck_dir, e))?;
    std::fs::create_dir_all(&log_dir).map_err(|e| Error::io(&log_dir, e))?;
    let best_path = ck_dir.join("best.ckpt");
    let last_path = ck_dir.join("last.ckpt");
    let log_path = log_dir.join("train.csv");
    let fresh_log = resume.is_none() || !log_path.exists();
    let mut log = std::io::BufWriter::new(
        std::fs::OpenOptions::new()
            .create(true)
            .append(!fresh_log)
            .write(true)
            .truncate(fresh_log)
            .open(&log_path)
            .map_err(|e| Error::io(&log_path, e))?,
    );
    if fresh_log {
        writeln!(log, "step,loss,rmse,neg_sisdr,val_sisdr").map_err(|e| Error::io(&log_path, e))?;
    }

    let mut losses = Vec::new();
    let mut final_val = (f64::NAN, f64::NAN);
    let mut grads = vec![0.0f64; geom.param_count()];
    while adam.step < cfg.max_steps {
        let step = adam.step + 1;
        let items: Vec<Item> = (0..cfg.batch_size)
            .map(|_| {
                make_item(corpus, policy, Split::Train, &geom, &cfg.fb, snippet_len, &mut rng_data)
            })
            .collect::<Result<_>>()?;
        let results = batch_results(&params, &fbank, &cfg.norm, &weights, &items, cfg.threads);
        grads.fill(0.0);
        let mut loss = 0.0;
        let mut rmse = 0.0;
        let mut neg_sisdr = 0.0;
        for r in results {
            let (parts, g) = r?;
            loss += parts.total;
            rmse += parts.rmse;
            neg_sisdr += parts.neg_sisdr;
            for (acc, v) in grads.iter_mut().zip(&g) {
                *acc += v;
            }
        }
        let scale = 1.0 / cfg.batch_size as f64;
        loss *= scale;
        rmse *= scale;
        neg_sisdr *= scale;
        for g in grads.iter_mut() {
            *g *= scale;
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                what: "training loss".into(),
                detail: format!("{loss} at step {step}"),
            });
        }
        adam.step(&mut params.theta, &grads)?;
        losses.push(loss);

        if step % cfg.val_every == 0 || step == cfg.max_steps {
            let (val_loss, val_sisdr) =
                validate_model(&params, &fbank, &cfg.norm, &weights, &val_items)?;
            final_val = (val_loss, val_sisdr);
            writeln!(log, "{step},{loss},{rmse},{neg_sisdr},{val_sisdr}")
                .map_err(|e| Error::io(&log_path, e))?;
            if val_loss < best_val_loss {
                best_val_loss = val_loss;
                assemble_checkpoint(&canonical, &params, &adam, best_val_loss, &rng_data)
                    .save(&best_path)?;
            }
            assemble_checkpoint(&canonical, &params, &adam, best_val_loss, &rng_data)
                .save(&last_path)?;
            log.flush().map_err(|e| Error::io(&log_path, e))?;
        } else {
            writeln!(log, "{step},{loss},{rmse},{neg_sisdr},")
                .map_err(|e| Error::io(&log_path, e))?;
        }
    }
    log.flush().map_err(|e| Error::io(&log_path, e))?;

    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let head = &losses[..losses.len().min(10)];
    let tail = &losses[losses.len().saturating_sub(10)..];
    Ok(TrainOutcome {
        steps: adam.step,
        initial_loss: mean(head),
        final_loss: mean(tail),
        best_val_loss,
        final_val_loss: final_val.0,
        final_val_sisdr_db: final_val.1,
        best_path,
        last_path,
        log_path,
    })
}
