//! Run configuration: a TOML file with `[filterbank]`, `[model]`,
//! `[train]`, `[data]` and `[metrics]` sections. Every key is optional
//! and defaults to the library defaults; unknown keys are rejected. The
//! effective (post-override) configuration is echoed into each output
//! directory so any run can be reproduced from its artifacts alone.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::clc::NormConfig;
use crate::data::{synth::NoiseKind, Corpus, MixPolicy, SynthCorpusConfig};
use crate::error::{Error, Result};
use crate::filterbank::FbConfig;
use crate::metrics::EvalOptions;
use crate::model::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub filterbank: FilterbankSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub data: DataSection,
    pub metrics: MetricsSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterbankSection {
    pub frame_len: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

impl Default for FilterbankSection {
    fn default() -> Self {
        let fb = FbConfig::default();
        Self { frame_len: fb.frame_len, hop: fb.hop, sample_rate: fb.sample_rate }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub hidden: [usize; 3],
    pub order: usize,
    pub offset: i32,
    pub tau1_ms: f64,
    pub tau2_ms: f64,
    pub norm_time_constant_s: f64,
    pub norm_epsilon: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let tc = TrainConfig::default();
        Self {
            hidden: tc.hidden,
            order: tc.order,
            offset: tc.offset,
            tau1_ms: tc.tau1_ms,
            tau2_ms: tc.tau2_ms,
            norm_time_constant_s: tc.norm.time_constant_s,
            norm_epsilon: tc.norm.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
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
    pub snippet_s: f64,
    pub val_every: u64,
    pub val_count: usize,
    pub threads: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let tc = TrainConfig::default();
        Self {
            learning_rate: tc.learning_rate,
            beta1: tc.beta1,
            beta2: tc.beta2,
            adam_epsilon: tc.adam_epsilon,
            batch_size: tc.batch_size,
            max_steps: tc.max_steps,
            seed: tc.seed,
            w_rmse: tc.w_rmse,
            w_sdr: tc.w_sdr,
            sdr_epsilon: tc.sdr_epsilon,
            snippet_s: tc.snippet_s,
            val_every: tc.val_every,
            val_count: tc.val_count,
            threads: tc.threads,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Directory with `speech/*.wav` and `noise/*.wav`; when unset, a
    /// deterministic synthetic corpus is generated instead.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus_dir: Option<PathBuf>,
    pub n_speech: usize,
    pub n_noise: usize,
    pub duration_s: f64,
    pub f0_lo_hz: f64,
    pub f0_hi_hz: f64,
    pub noise_kinds: Vec<String>,
    pub corpus_seed: u64,
    pub snr_set_db: Vec<f64>,
    pub offset_set_db: Vec<f64>,
    pub max_noises: usize,
    pub delta_snr_t_db: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        let sc = SynthCorpusConfig::default();
        let mp = MixPolicy::default();
        Self {
            corpus_dir: None,
            n_speech: sc.n_speech,
            n_noise: sc.n_noise,
            duration_s: sc.duration_s,
            f0_lo_hz: sc.f0_range.0,
            f0_hi_hz: sc.f0_range.1,
            noise_kinds: NoiseKind::ALL.iter().map(|k| k.to_string()).collect(),
            corpus_seed: sc.seed,
            snr_set_db: mp.snr_set_db,
            offset_set_db: mp.offset_set_db,
            max_noises: mp.max_noises,
            delta_snr_t_db: mp.delta_snr_t_db,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    pub si_sdr_cap_db: f64,
    pub edge_trim: usize,
    /// SNR buckets cycled over evaluation utterances.
    pub bucket_snrs_db: Vec<f64>,
    /// Least-squares fit window (odd frame count) for the oracle CLC
    /// baseline in `evaluate --oracle clc`.
    pub oracle_window: usize,
    pub oracle_ridge: f64,
}

impl Default for MetricsSection {
    fn default() -> Self {
        let eo = EvalOptions::default();
        Self {
            si_sdr_cap_db: eo.si_sdr_cap_db,
            edge_trim: eo.edge_trim,
            bucket_snrs_db: vec![20.0, 10.0, 5.0, 0.0, -5.0],
            oracle_window: 9,
            oracle_ridge: 1e-6,
        }
    }
}

impl RunConfig {
    /// Loads a TOML file, or the built-in defaults when no path is given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                toml::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {}", p.display(), e.message())))
            }
        }
    }

    /// The effective configuration as TOML; written next to every
    /// command's outputs and loadable again via `--config`.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn fb(&self) -> FbConfig {
        FbConfig {
            frame_len: self.filterbank.frame_len,
            hop: self.filterbank.hop,
            sample_rate: self.filterbank.sample_rate,
        }
    }

    pub fn norm(&self) -> NormConfig {
        NormConfig {
            time_constant_s: self.model.norm_time_constant_s,
            epsilon: self.model.norm_epsilon,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            fb: self.fb(),
            norm: self.norm(),
            hidden: self.model.hidden,
            order: self.model.order,
            offset: self.model.offset,
            tau1_ms: self.model.tau1_ms,
            tau2_ms: self.model.tau2_ms,
            learning_rate: self.train.learning_rate,
            beta1: self.train.beta1,
            beta2: self.train.beta2,
            adam_epsilon: self.train.adam_epsilon,
            batch_size: self.train.batch_size,
            max_steps: self.train.max_steps,
            seed: self.train.seed,
            w_rmse: self.train.w_rmse,
            w_sdr: self.train.w_sdr,
            sdr_epsilon: self.train.sdr_epsilon,
            snippet_s: self.train.snippet_s,
            val_every: self.train.val_every,
            val_count: self.train.val_count,
            threads: self.train.threads,
        }
    }

    pub fn mix_policy(&self) -> MixPolicy {
        MixPolicy {
            snr_set_db: self.data.snr_set_db.clone(),
            offset_set_db: self.data.offset_set_db.clone(),
            max_noises: self.data.max_noises,
            delta_snr_t_db: self.data.delta_snr_t_db,
        }
    }

    pub fn synth_config(&self) -> Result<SynthCorpusConfig> {
        let kinds: Vec<NoiseKind> =
            self.data.noise_kinds.iter().map(|k| k.parse()).collect::<Result<_>>()?;
        if kinds.is_empty() {
            return Err(Error::Config("noise_kinds must not be empty".into()));
        }
        Ok(SynthCorpusConfig {
            n_speech: self.data.n_speech,
            n_noise: self.data.n_noise,
            duration_s: self.data.duration_s,
            sample_rate: self.filterbank.sample_rate,
            f0_range: (self.data.f0_lo_hz, self.data.f0_hi_hz),
            kinds,
            seed: self.data.corpus_seed,
        })
    }

    /// The corpus this configuration describes: WAV files from
    /// `data.corpus_dir` when set, a synthetic corpus otherwise.
    pub fn corpus(&self) -> Result<Corpus> {
        match &self.data.corpus_dir {
            Some(dir) => Corpus::load_dir(dir, self.filterbank.sample_rate),
            None => Ok(Corpus::synthetic(&self.synth_config()?)),
        }
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            delay_samples: 0,
            edge_trim: self.metrics.edge_trim,
            si_sdr_cap_db: self.metrics.si_sdr_cap_db,
        }
    }
}
