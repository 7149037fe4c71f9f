//! Command-line interface: one binary with `mix`, `train`, `enhance`,
//! `evaluate` and `export-spec` subcommands.
//!
//! Every subcommand reads the same optional TOML file (`--config`); the
//! effective settings are echoed to `config.echo` in each output directory
//! so results stay reproducible. Exit codes: 0 success, 1 usage or
//! configuration error, 2 data error, 3 numeric failure.

pub mod config;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::clc::{
    apply_clc, apply_complex_mask, apply_real_mask, oracle_cirm, oracle_clc_coeffs, oracle_iam,
    oracle_wiener_gain,
};
use crate::data::{make_mixture, sample_spec, wav, Mixture, Split};
use crate::error::{Error, Result};
use crate::filterbank::{algorithmic_latency_samples, Filterbank, Waveform};
use crate::metrics::{evaluate, EvalItem};
use crate::model::{enhance, restore_arrays, train, Checkpoint, ModelParams, TrainConfig};
use config::RunConfig;

/// Mask ceiling for the ideal amplitude mask oracle.
const IAM_CAP: f64 = 10.0;
/// Denominator floor for the complex ideal ratio mask oracle.
const CIRM_EPSILON: f64 = 1e-6;

/// Top-level argument parser.
#[derive(Debug, Parser)]
#[command(
    name = "clc-enhance",
    version,
    about = "Low-latency monaural speech enhancement via complex linear coding",
    after_long_help = config_help()
)]
pub struct Cli {
    /// TOML settings file; any key may be omitted and falls back to the
    /// built-in default (see --help for the full template).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Cmd,
}

/// Subcommands.
#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Render noisy/clean/target WAV triples plus a manifest CSV.
    Mix {
        /// Output directory (created if missing).
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Number of mixtures to render.
        #[arg(long, default_value_t = 10)]
        count: usize,
        /// Seed for mixture sampling.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Pin every mixture to this SNR (dB) instead of the configured set.
        #[arg(long, allow_negative_numbers = true)]
        snr: Option<f64>,
        /// Corpus split to draw sources from.
        #[arg(long, default_value = "train", value_parser = parse_split)]
        split: Split,
    },
    /// Train a coefficient predictor; artifacts land in the run directory.
    Train {
        /// Run name under the run root (`runs/`, or $CLC_RUN_DIR if set).
        #[arg(long, default_value = "run")]
        run: String,
        /// Override the coefficient stack offset l.
        #[arg(long, value_name = "L", allow_negative_numbers = true)]
        offset: Option<i32>,
        /// Override the training seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the optimizer step budget.
        #[arg(long, value_name = "N")]
        steps: Option<u64>,
        /// Override the worker thread count (1 is the reference path).
        #[arg(long, value_name = "N")]
        threads: Option<usize>,
        /// Resume from a checkpoint; without a value, resumes from this
        /// run's checkpoints/last.ckpt.
        #[arg(long, value_name = "CKPT")]
        resume: Option<Option<PathBuf>>,
    },
    /// Enhance one WAV file with a trained checkpoint.
    Enhance {
        /// Trained checkpoint to load.
        #[arg(long, value_name = "CKPT")]
        checkpoint: PathBuf,
        /// Input WAV (mono, at the model's sample rate).
        #[arg(long, value_name = "WAV")]
        input: PathBuf,
        /// Output WAV path.
        #[arg(long, value_name = "WAV")]
        output: PathBuf,
    },
    /// Score a trained model or an oracle baseline on fresh mixtures.
    Evaluate {
        /// Checkpoint to evaluate (pass exactly one of this or --oracle).
        #[arg(long, value_name = "CKPT", conflicts_with = "oracle")]
        checkpoint: Option<PathBuf>,
        /// Oracle baseline to evaluate instead of a model.
        #[arg(long, value_enum)]
        oracle: Option<OracleKind>,
        /// Output directory for the CSV reports.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Number of evaluation mixtures.
        #[arg(long, default_value_t = 25)]
        count: usize,
        /// Seed for mixture sampling.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Corpus split to draw sources from.
        #[arg(long, default_value = "test", value_parser = parse_split)]
        split: Split,
    },
    /// Export a power spectrogram (dB) as CSV for plotting.
    ExportSpec {
        /// Input WAV.
        #[arg(long, value_name = "WAV")]
        input: PathBuf,
        /// Output CSV path.
        #[arg(long, value_name = "CSV")]
        output: PathBuf,
    },
}

/// Oracle baselines accepted by `evaluate --oracle`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OracleKind {
    /// Oracle Wiener gain per bin.
    Wf,
    /// Least-squares oracle coefficient stacks.
    Clc,
    /// Ideal amplitude mask.
    Iam,
    /// Complex ideal ratio mask.
    Cirm,
}

/// Parses the arguments, runs the selected subcommand and returns the
/// process exit code.
pub fn run_main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests land here too; they are not errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Cmd::Mix { out, count, seed, snr, split } => cmd_mix(&cfg, &out, count, seed, snr, split),
        Cmd::Train { run, offset, seed, steps, threads, resume } => {
            cmd_train(cfg, &run, offset, seed, steps, threads, resume)
        }
        Cmd::Enhance { checkpoint, input, output } => cmd_enhance(&checkpoint, &input, &output),
        Cmd::Evaluate { checkpoint, oracle, out, count, seed, split } => {
            cmd_evaluate(&cfg, checkpoint.as_deref(), oracle, &out, count, seed, split)
        }
        Cmd::ExportSpec { input, output } => cmd_export_spec(&cfg, &input, &output),
    }
}

/// Root directory for training runs: $CLC_RUN_DIR, or `runs/`.
fn run_root() -> PathBuf {
    std::env::var_os("CLC_RUN_DIR").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"))
}

fn parse_split(s: &str) -> std::result::Result<Split, String> {
    match s {
        "train" => Ok(Split::Train),
        "validation" => Ok(Split::Validation),
        "test" => Ok(Split::Test),
        other => Err(format!("unknown split {other:?}; expected train, validation or test")),
    }
}

fn config_help() -> String {
    let template: String =
        RunConfig::default().to_toml().lines().map(|l| format!("  {l}\n")).collect();
    format!(
        "Configuration:\n  All subcommands accept --config <FILE>, a TOML file in which every \
         key is optional. The built-in defaults are:\n\n{template}"
    )
}

/// Writes the effective settings next to the artifacts they produced.
fn write_echo(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let path = dir.join("config.echo");
    std::fs::write(&path, cfg.to_toml()).map_err(|e| Error::io(&path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Loads a checkpoint and rebuilds the settings and parameters stored in it.
fn load_model(path: &Path) -> Result<(TrainConfig, ModelParams<f64>)> {
    let ck = Checkpoint::load(path)?;
    let (tc, _policy) = TrainConfig::from_canonical_text(&ck.config_text)
        .map_err(|e| Error::checkpoint(path, format!("bad embedded settings: {e}")))?;
    let geom = tc.geometry()?;
    let (theta, _m, _v) = restore_arrays(&ck, &geom, path)?;
    Ok((tc, ModelParams { geom, theta }))
}

fn join_db(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

fn cmd_mix(
    cfg: &RunConfig,
    out: &Path,
    count: usize,
    seed: u64,
    snr: Option<f64>,
    split: Split,
) -> Result<()> {
    if count == 0 {
        return Err(Error::Config("--count must be positive".into()));
    }
    let corpus = cfg.corpus()?;
    let mut policy = cfg.mix_policy();
    if let Some(s) = snr {
        policy.snr_set_db = vec![s];
    }
    create_dir(out)?;
    write_echo(cfg, out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut manifest =
        String::from("id,speech_id,noise_ids,level_offsets_db,snr_db,delta_snr_t_db,mix_seed\n");
    for i in 0..count {
        let spec = sample_spec(&mut rng, &corpus, split, &policy)?;
        let mix = make_mixture(&spec, &corpus)?;
        let id = format!("mix-{i:04}");
        for (suffix, wave) in
            [("noisy", &mix.noisy), ("clean", &mix.clean), ("target", &mix.target)]
        {
            wav::write_wav(&out.join(format!("{id}_{suffix}.wav")), wave)?;
        }
        manifest.push_str(&format!(
            "{id},{},{},{},{},{},{}\n",
            spec.speech_id,
            spec.noise_ids.join(";"),
            join_db(&spec.level_offsets_db),
            spec.snr_db,
            spec.delta_snr_t_db,
            spec.seed,
        ));
    }
    let path = out.join("manifest.csv");
    std::fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
    println!("wrote {count} mixture triples to {}", out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    mut cfg: RunConfig,
    run: &str,
    offset: Option<i32>,
    seed: Option<u64>,
    steps: Option<u64>,
    threads: Option<usize>,
    resume: Option<Option<PathBuf>>,
) -> Result<()> {
    if let Some(l) = offset {
        cfg.model.offset = l;
    }
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    if let Some(n) = steps {
        cfg.train.max_steps = n;
    }
    if let Some(t) = threads {
        cfg.train.threads = t;
    }
    let tc = cfg.train_config();
    tc.validate()?;
    let run_dir = run_root().join(run);
    create_dir(&run_dir)?;
    write_echo(&cfg, &run_dir)?;
    let corpus = cfg.corpus()?;
    let policy = cfg.mix_policy();
    let resume_path = match resume {
        None => None,
        Some(Some(p)) => Some(p),
        Some(None) => Some(run_dir.join("checkpoints").join("last.ckpt")),
    };
    let d = algorithmic_latency_samples(&tc.fb, tc.offset);
    println!("run directory: {}", run_dir.display());
    println!(
        "algorithmic latency at offset {}: {d} samples ({:.2} ms)",
        tc.offset,
        d as f64 * 1000.0 / f64::from(tc.fb.sample_rate)
    );
    let outcome = train(&corpus, &policy, &tc, &run_dir, resume_path.as_deref())?;
    println!("steps completed: {}", outcome.steps);
    println!("training loss: {:.6} -> {:.6}", outcome.initial_loss, outcome.final_loss);
    println!(
        "validation loss: {:.6} (best {:.6}), SI-SDR vs target: {:.2} dB",
        outcome.final_val_loss, outcome.best_val_loss, outcome.final_val_sisdr_db
    );
    println!("best checkpoint: {}", outcome.best_path.display());
    println!("last checkpoint: {}", outcome.last_path.display());
    println!("log: {}", outcome.log_path.display());
    Ok(())
}

fn cmd_enhance(checkpoint: &Path, input: &Path, output: &Path) -> Result<()> {
    let (tc, params) = load_model(checkpoint)?;
    let fbank = Filterbank::<f64>::new(tc.fb)?;
    let noisy = wav::read_wav(input)?;
    let aligned = enhance(&params, &fbank, &tc.norm, &noisy)?;
    // A real-time implementation cannot emit a sample before its analysis
    // frame (plus any look-ahead frames) has arrived, so the time-aligned
    // output is delayed by that budget; the file then matches the streamed
    // signal sample for sample.
    let d = algorithmic_latency_samples(&tc.fb, params.geom.offset);
    let mut samples = vec![0.0; noisy.len()];
    if d < noisy.len() {
        samples[d..].copy_from_slice(&aligned.samples[..noisy.len() - d]);
    }
    wav::write_wav(output, &Waveform::new(samples, noisy.sample_rate))?;
    println!(
        "enhanced {} -> {} ({} samples, algorithmic latency {d} samples = {:.2} ms)",
        input.display(),
        output.display(),
        noisy.len(),
        d as f64 * 1000.0 / f64::from(tc.fb.sample_rate)
    );
    Ok(())
}

enum EvalSource {
    Model { tc: TrainConfig, params: ModelParams<f64>, fbank: Filterbank<f64> },
    Oracle(OracleKind),
}

fn cmd_evaluate(
    cfg: &RunConfig,
    checkpoint: Option<&Path>,
    oracle: Option<OracleKind>,
    out: &Path,
    count: usize,
    seed: u64,
    split: Split,
) -> Result<()> {
    let source = match (checkpoint, oracle) {
        (Some(p), None) => {
            let (tc, params) = load_model(p)?;
            let fbank = Filterbank::<f64>::new(tc.fb)?;
            EvalSource::Model { tc, params, fbank }
        }
        (None, Some(k)) => EvalSource::Oracle(k),
        _ => return Err(Error::Config("pass exactly one of --checkpoint or --oracle".into())),
    };
    if count == 0 {
        return Err(Error::Config("--count must be positive".into()));
    }
    let buckets = &cfg.metrics.bucket_snrs_db;
    if buckets.is_empty() {
        return Err(Error::Config("metrics.bucket_snrs_db must not be empty".into()));
    }
    let corpus = cfg.corpus()?;
    create_dir(out)?;
    write_echo(cfg, out)?;
    let oracle_fbank = Filterbank::<f64>::new(cfg.fb())?;
    let base_policy = cfg.mix_policy();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items = Vec::with_capacity(count);
    for i in 0..count {
        // Cycle the SNR buckets so every bucket receives utterances.
        let mut policy = base_policy.clone();
        policy.snr_set_db = vec![buckets[i % buckets.len()]];
        let spec = sample_spec(&mut rng, &corpus, split, &policy)?;
        let mix = make_mixture(&spec, &corpus)?;
        let enhanced = match &source {
            EvalSource::Model { tc, params, fbank } => enhance(params, fbank, &tc.norm, &mix.noisy)?,
            EvalSource::Oracle(kind) => oracle_enhance(*kind, &oracle_fbank, &mix, cfg)?,
        };
        items.push(EvalItem {
            id: format!("utt-{i:04}-{}", spec.speech_id),
            snr_db: spec.snr_db,
            clean: mix.clean,
            noisy: mix.noisy,
            enhanced,
        });
    }
    let report = evaluate(&items, &cfg.eval_options())?;
    let utt_path = out.join("utterances.csv");
    std::fs::write(&utt_path, report.utterance_csv()).map_err(|e| Error::io(&utt_path, e))?;
    let agg_path = out.join("aggregate.csv");
    std::fs::write(&agg_path, report.aggregate_csv()).map_err(|e| Error::io(&agg_path, e))?;
    for b in &report.buckets {
        let mean_of = |name: &str| {
            b.summaries.iter().find(|s| s.metric == name).map(|s| s.mean).unwrap_or(f64::NAN)
        };
        println!(
            "snr {:>5.1} dB (n={}): SI-SDR {:>6.2} -> {:>6.2} dB, STOI {:.3} -> {:.3}",
            b.snr_db,
            b.summaries.first().map_or(0, |s| s.count),
            mean_of("si_sdr_noisy_db"),
            mean_of("si_sdr_db"),
            mean_of("stoi_noisy"),
            mean_of("stoi"),
        );
    }
    println!("wrote {} and {}", utt_path.display(), agg_path.display());
    Ok(())
}

/// Enhances one mixture with an oracle that sees the clean signal.
fn oracle_enhance(
    kind: OracleKind,
    fbank: &Filterbank<f64>,
    mix: &Mixture,
    cfg: &RunConfig,
) -> Result<Waveform<f64>> {
    let x = fbank.analyze(&mix.noisy)?;
    let s = fbank.analyze(&mix.clean)?;
    let shat = match kind {
        OracleKind::Wf => {
            let noise = Waveform::new(
                mix.noisy.samples.iter().zip(&mix.clean.samples).map(|(n, c)| n - c).collect(),
                mix.noisy.sample_rate,
            );
            let n = fbank.analyze(&noise)?;
            apply_real_mask(&x, &oracle_wiener_gain(&s, &n)?)?
        }
        OracleKind::Iam => apply_real_mask(&x, &oracle_iam(&s, &x, IAM_CAP)?)?,
        OracleKind::Cirm => apply_complex_mask(&x, &oracle_cirm(&s, &x, CIRM_EPSILON)?)?,
        OracleKind::Clc => {
            let coeffs = oracle_clc_coeffs(
                &x,
                &s,
                cfg.model.order,
                cfg.model.offset,
                cfg.metrics.oracle_ridge,
                cfg.metrics.oracle_window,
            )?;
            apply_clc(&x, &coeffs)?
        }
    };
    let mut est = fbank.synthesize(&shat)?;
    est.samples.truncate(mix.noisy.len());
    Ok(est)
}

fn cmd_export_spec(cfg: &RunConfig, input: &Path, output: &Path) -> Result<()> {
    let w = wav::read_wav(input)?;
    let fbank = Filterbank::<f64>::new(cfg.fb())?;
    let x = fbank.analyze(&w)?;
    let bins = x.processed_bins();
    let mut csv = String::from("frame,time_s");
    for f in 0..bins {
        csv.push_str(&format!(",bin_{f}"));
    }
    csv.push('\n');
    let rate = f64::from(cfg.filterbank.sample_rate);
    for k in 0..x.n_frames() {
        csv.push_str(&format!("{k},{}", k as f64 * cfg.filterbank.hop as f64 / rate));
        for f in 0..bins {
            // Power in dB with a -120 dB floor so silence stays finite.
            let db = (10.0 * x.at(k, f).norm_sqr().log10()).max(-120.0);
            csv.push_str(&format!(",{db}"));
        }
        csv.push('\n');
    }
    std::fs::write(output, csv).map_err(|e| Error::io(output, e))?;
    println!("wrote {} frames x {bins} bins to {}", x.n_frames(), output.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn argument_definitions_are_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn subcommands_parse() {
        let cli = Cli::try_parse_from(["clc-enhance", "mix", "--out", "d", "--count", "3"]).unwrap();
        match cli.command {
            Cmd::Mix { count, seed, snr, split, .. } => {
                assert_eq!(count, 3);
                assert_eq!(seed, 0);
                assert_eq!(snr, None);
                assert_eq!(split, Split::Train);
            }
            other => panic!("parsed {other:?}"),
        }

        let cli = Cli::try_parse_from(["clc-enhance", "train", "--resume"]).unwrap();
        match cli.command {
            Cmd::Train { run, resume, .. } => {
                assert_eq!(run, "run");
                assert_eq!(resume, Some(None));
            }
            other => panic!("parsed {other:?}"),
        }

        let cli = Cli::try_parse_from([
            "clc-enhance",
            "train",
            "--resume",
            "some/other.ckpt",
            "--offset",
            "-1",
        ])
        .unwrap();
        match cli.command {
            Cmd::Train { offset, resume, .. } => {
                assert_eq!(offset, Some(-1));
                assert_eq!(resume, Some(Some(PathBuf::from("some/other.ckpt"))));
            }
            other => panic!("parsed {other:?}"),
        }
    }

    #[test]
    fn evaluate_rejects_checkpoint_and_oracle_together() {
        let err = Cli::try_parse_from([
            "clc-enhance",
            "evaluate",
            "--checkpoint",
            "a.ckpt",
            "--oracle",
            "wf",
            "--out",
            "d",
        ])
        .unwrap_err();
        assert!(err.use_stderr());
    }

    #[test]
    fn evaluate_requires_a_source() {
        let err = dispatch(
            Cli::try_parse_from(["clc-enhance", "evaluate", "--out", "/nonexistent/d"]).unwrap(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)), "got {err:?}");
    }

    #[test]
    fn bad_split_is_a_usage_error() {
        let err =
            Cli::try_parse_from(["clc-enhance", "mix", "--out", "d", "--split", "dev"]).unwrap_err();
        assert!(err.use_stderr());
        assert!(err.to_string().contains("expected train, validation or test"));
    }

    #[test]
    fn help_includes_the_default_settings_template() {
        let help = Cli::command().render_long_help().to_string();
        assert!(help.contains("snippet_s = 2.0"), "help was:\n{help}");
        assert!(help.contains("[filterbank]"));
    }
}
