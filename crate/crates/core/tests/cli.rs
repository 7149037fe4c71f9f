//! End-to-end tests of the `clc-enhance` binary: exit codes, artifact
//! layout, determinism, and the delay contract of file enhancement.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use clc_enhance::data::synth::{synth_noise, NoiseKind};
use clc_enhance::data::{speech_active_power, wav, MixPolicy};
use clc_enhance::filterbank::Waveform;
use clc_enhance::model::{Checkpoint, ModelParams, TrainConfig};

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clc-enhance"))
        .args(args)
        .env("CLC_RUN_DIR", dir.join("runs"))
        .current_dir(dir)
        .output()
        .expect("binary should spawn")
}

fn assert_status(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Writes a TOML settings file with a small, quickly synthesized corpus.
/// Seven sources per kind puts one of each in validation and test.
fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("cfg.toml");
    let text = format!(
        "[data]\nn_speech = 7\nn_noise = 7\nduration_s = 1.0\n\
         noise_kinds = [\"white\", \"hum\"]\n{extra}"
    );
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn usage_and_config_errors_map_to_documented_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    assert_status(&run_in(dir, &["--help"]), 0);
    assert_status(&run_in(dir, &["--version"]), 0);
    // Missing subcommand and unknown flags are usage errors.
    assert_status(&run_in(dir, &[]), 1);
    assert_status(&run_in(dir, &["mix", "--out", "d", "--bogus"]), 1);

    // Unknown keys in the settings file are configuration errors.
    let bad = dir.join("bad.toml");
    fs::write(&bad, "[data]\nspeeches = 3\n").unwrap();
    let out = run_in(dir, &["mix", "--out", "d", "--config", bad.to_str().unwrap()]);
    assert_status(&out, 1);
    assert!(stderr(&out).starts_with("error:"), "stderr: {}", stderr(&out));

    // A settings file that does not exist is a data error.
    let out = run_in(dir, &["mix", "--out", "d", "--config", "nope.toml"]);
    assert_status(&out, 2);

    // Unknown noise kinds surface once the corpus is built.
    let glitter = dir.join("glitter.toml");
    fs::write(&glitter, "[data]\nnoise_kinds = [\"glitter\"]\n").unwrap();
    let out = run_in(dir, &["mix", "--out", "d", "--config", glitter.to_str().unwrap()]);
    assert_status(&out, 1);

    // Evaluate needs exactly one enhancement source.
    let out = run_in(dir, &["evaluate", "--out", "d"]);
    assert_status(&out, 1);
    assert!(stderr(&out).contains("exactly one"), "stderr: {}", stderr(&out));
    let out = run_in(
        dir,
        &["evaluate", "--out", "d", "--checkpoint", "a.ckpt", "--oracle", "wf"],
    );
    assert_status(&out, 1);
}

#[test]
fn mix_is_deterministic_and_hits_the_requested_snr() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = write_config(dir, "");
    let args = |out: &str| {
        vec![
            "mix".to_string(),
            "--config".into(),
            cfg.to_str().unwrap().into(),
            "--out".into(),
            out.into(),
            "--count".into(),
            "3".into(),
            "--seed".into(),
            "7".into(),
            "--snr".into(),
            "-5".into(),
        ]
    };
    for out_dir in ["a", "b"] {
        let argv = args(out_dir);
        let argv: Vec<&str> = argv.iter().map(String::as_str).collect();
        assert_status(&run_in(dir, &argv), 0);
    }

    // Identical settings and seed must produce identical bytes.
    let manifest_a = fs::read(dir.join("a/manifest.csv")).unwrap();
    let manifest_b = fs::read(dir.join("b/manifest.csv")).unwrap();
    assert_eq!(manifest_a, manifest_b);
    assert_eq!(
        fs::read(dir.join("a/mix-0000_noisy.wav")).unwrap(),
        fs::read(dir.join("b/mix-0000_noisy.wav")).unwrap()
    );

    let manifest = String::from_utf8(manifest_a).unwrap();
    let lines: Vec<&str> = manifest.lines().collect();
    assert_eq!(lines[0], "id,speech_id,noise_ids,level_offsets_db,snr_db,delta_snr_t_db,mix_seed");
    assert_eq!(lines.len(), 4);
    for (i, row) in lines[1..].iter().enumerate() {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[0], format!("mix-{i:04}"));
        assert_eq!(fields[4], "-5", "row: {row}");
        for suffix in ["noisy", "clean", "target"] {
            assert!(dir.join(format!("a/mix-{i:04}_{suffix}.wav")).exists());
        }
    }
    assert!(fs::read_to_string(dir.join("a/config.echo")).unwrap().contains("n_speech = 7"));

    // Re-derive the SNR from the rendered files: active-speech power of the
    // clean signal over the noise power inside the same activity mask.
    let clean = wav::read_wav(&dir.join("a/mix-0000_clean.wav")).unwrap();
    let noisy = wav::read_wav(&dir.join("a/mix-0000_noisy.wav")).unwrap();
    let noise: Vec<f64> =
        noisy.samples.iter().zip(&clean.samples).map(|(n, c)| n - c).collect();
    let (p_speech, mask) = speech_active_power(&clean.samples, clean.sample_rate).unwrap();
    let p_noise = mask.mean_power(&noise);
    let snr_db = 10.0 * (p_speech / p_noise).log10();
    assert!((snr_db - (-5.0)).abs() < 0.1, "re-derived SNR {snr_db} dB");
}

/// Zero network with unit normalization gains and an output bias of 3 on
/// the real part of tap `offset` for every bin: the predicted stacks become
/// `tanh(3) ≈ 0.995` at the tap that selects the current frame, so the
/// model passes its (normalized) input through almost unchanged.
fn save_passthrough_checkpoint(path: &Path) {
    let tc = TrainConfig { hidden: [8, 8, 8], ..TrainConfig::default() };
    let geom = tc.geometry().unwrap();
    let mut params = ModelParams::<f64>::zeros(geom).unwrap();
    let bins = params.geom.bins;
    for f in 0..bins {
        params.theta[f] = 1.0;
    }
    let tap = params.geom.offset as usize;
    {
        let (_w4, b4) = params.layer_mut(3);
        for f in 0..bins {
            b4[(tap * bins + f) * 2] = 3.0;
        }
    }
    let layout = params.geom.layout();
    let mut arrays = Vec::new();
    for (name, r) in &layout {
        arrays.push((name.to_string(), params.theta[r.clone()].to_vec()));
    }
    for prefix in ["m_", "v_"] {
        for (name, r) in &layout {
            arrays.push((format!("{prefix}{name}"), vec![0.0; r.len()]));
        }
    }
    let ck = Checkpoint {
        config_text: tc.to_canonical_text(&MixPolicy::default()),
        arrays,
        step: 1,
        best_val_loss: f64::INFINITY,
        rng_seed: [0u8; 32],
        rng_word_pos: 0,
    };
    ck.save(path).unwrap();
}

#[test]
fn enhance_delays_output_by_the_reported_latency() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let ckpt = dir.join("model.ckpt");
    save_passthrough_checkpoint(&ckpt);

    let input = dir.join("in.wav");
    let noise = synth_noise(11, 0.5, NoiseKind::White, 24000);
    wav::write_wav(&input, &noise).unwrap();

    let out = run_in(
        dir,
        &[
            "enhance",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--input",
            input.to_str().unwrap(),
            "--output",
            "out.wav",
        ],
    );
    assert_status(&out, 0);
    assert!(
        stdout(&out).contains("latency 144 samples"),
        "stdout: {}",
        stdout(&out)
    );

    let enhanced = wav::read_wav(&dir.join("out.wav")).unwrap();
    assert_eq!(enhanced.len(), noise.len());
    assert!(enhanced.samples[..144].iter().all(|&v| v == 0.0));

    // White noise decorrelates across lags, so the cross-correlation with
    // the input must peak exactly at the inserted delay.
    let best_lag = (0..=300)
        .max_by(|&a, &b| {
            let c = |lag: usize| -> f64 {
                enhanced.samples[lag..]
                    .iter()
                    .zip(&noise.samples)
                    .map(|(y, x)| y * x)
                    .sum()
            };
            c(a).total_cmp(&c(b))
        })
        .unwrap();
    assert_eq!(best_lag, 144);
}

#[test]
fn evaluate_with_the_complex_mask_oracle_nearly_restores_the_clean_signal() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    // Hum is narrowband, so the complex ratio mask can cancel essentially
    // everything the synthesis bank can represent.
    let cfg = dir.join("cfg.toml");
    fs::write(
        &cfg,
        "[data]\nn_speech = 7\nn_noise = 7\nduration_s = 1.0\nnoise_kinds = [\"hum\"]\n",
    )
    .unwrap();

    let out = run_in(
        dir,
        &[
            "evaluate",
            "--config",
            cfg.to_str().unwrap(),
            "--oracle",
            "cirm",
            "--out",
            "report",
            "--count",
            "3",
        ],
    );
    assert_status(&out, 0);

    let utt = fs::read_to_string(dir.join("report/utterances.csv")).unwrap();
    let lines: Vec<&str> = utt.lines().collect();
    assert_eq!(
        lines[0],
        "id,snr_db,si_sdr_noisy_db,si_sdr_db,stoi_noisy,stoi,delta_stoi"
    );
    assert_eq!(lines.len(), 4);
    for row in &lines[1..] {
        let fields: Vec<&str> = row.split(',').collect();
        let si_sdr: f64 = fields[3].parse().unwrap();
        assert!(si_sdr >= 60.0, "oracle SI-SDR {si_sdr} dB in row: {row}");
    }

    let agg = fs::read_to_string(dir.join("report/aggregate.csv")).unwrap();
    assert!(agg.starts_with("snr_db,metric,count,mean,q1,median,q3"), "aggregate: {agg}");
    // Three utterances cycle through the first three SNR buckets.
    for snr in ["20", "10", "5"] {
        assert!(
            agg.lines().any(|l| l.starts_with(&format!("{snr},si_sdr_db,1,"))),
            "missing bucket {snr} in:\n{agg}"
        );
    }
}

#[test]
fn export_spec_places_a_pure_tone_in_its_bin() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let input = dir.join("tone.wav");
    let rate = 24000u32;
    let samples: Vec<f64> = (0..6000)
        .map(|t| 0.5 * (2.0 * std::f64::consts::PI * 250.0 * t as f64 / rate as f64).sin())
        .collect();
    wav::write_wav(&input, &Waveform::new(samples, rate)).unwrap();

    let out = run_in(
        dir,
        &["export-spec", "--input", input.to_str().unwrap(), "--output", "spec.csv"],
    );
    assert_status(&out, 0);

    let csv = fs::read_to_string(dir.join("spec.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    let header: Vec<&str> = lines[0].split(',').collect();
    assert_eq!(header[0], "frame");
    assert_eq!(header[1], "time_s");
    assert_eq!(header[2], "bin_0");
    assert_eq!(header.len(), 2 + 48);

    // 250 Hz sits in bin 1 of a 96-sample bank at 24 kHz (250 Hz spacing).
    let mid: Vec<f64> = lines[60].split(',').skip(2).map(|v| v.parse().unwrap()).collect();
    let peak = (0..48).max_by(|&a, &b| mid[a].total_cmp(&mid[b])).unwrap();
    assert_eq!(peak, 1);
    assert!(mid.iter().all(|&db| db >= -120.0));

    let first: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(first[0], "0");
    assert_eq!(first[1], "0");
}

#[test]
fn train_cli_runs_resumes_and_echoes_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = write_config(
        dir,
        "[model]\nhidden = [8, 8, 8]\ntau1_ms = 8.0\ntau2_ms = 2.0\n\
         [train]\nsnippet_s = 0.25\nbatch_size = 2\nval_every = 2\nval_count = 2\n",
    );
    let base = vec![
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--run",
        "smoke",
        "--seed",
        "3",
    ];

    let mut first = base.clone();
    first.extend(["--steps", "4"]);
    let out = run_in(dir, &first);
    assert_status(&out, 0);
    let text = stdout(&out);
    assert!(text.contains("steps completed: 4"), "stdout: {text}");
    assert!(text.contains("algorithmic latency at offset 1: 144 samples"), "stdout: {text}");

    let run_dir = dir.join("runs/smoke");
    for artifact in ["config.echo", "checkpoints/best.ckpt", "checkpoints/last.ckpt", "logs/train.csv"] {
        assert!(run_dir.join(artifact).exists(), "missing {artifact}");
    }

    // Resuming from last.ckpt with a raised budget continues the same log.
    let mut second = base.clone();
    second.extend(["--steps", "6", "--resume"]);
    let out = run_in(dir, &second);
    assert_status(&out, 0);
    assert!(stdout(&out).contains("steps completed: 6"), "stdout: {}", stdout(&out));

    let log = fs::read_to_string(run_dir.join("logs/train.csv")).unwrap();
    assert_eq!(log.lines().count(), 7, "log:\n{log}");
    assert!(log.starts_with("step,loss,rmse,neg_sisdr,val_sisdr"));
    assert!(
        fs::read_to_string(run_dir.join("config.echo")).unwrap().contains("max_steps = 6")
    );

    // A second resume against the same budget has nothing left to do.
    let out = run_in(dir, &second);
    assert_status(&out, 1);
    assert!(stderr(&out).contains("error:"), "stderr: {}", stderr(&out));
}
