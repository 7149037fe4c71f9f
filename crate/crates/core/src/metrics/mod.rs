//! Objective quality metrics and batch evaluation reports.

pub mod resample;
mod stoi;

pub use stoi::stoi;

use crate::error::{Error, Result};
use crate::filterbank::Waveform;
use crate::num::{rl, Real};

/// Root-mean-square error between two equally long signals.
pub fn rmse<T: Real>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { a: a.len(), b: b.len() });
    }
    if a.is_empty() {
        return Err(Error::Empty);
    }
    let e: T = a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum();
    Ok((e / rl(a.len() as f64)).sqrt())
}

/// Scale-invariant signal-to-distortion ratio in dB, capped at `cap_db`.
///
/// The estimate is projected onto the reference; the ratio of projected
/// energy to residual energy is reported. Invariant under rescaling of the
/// estimate. An all-zero reference is an error; a perfect (or perfectly
/// scaled) estimate returns the cap.
pub fn si_sdr<T: Real>(reference: &[T], estimate: &[T], cap_db: f64) -> Result<T> {
    if reference.len() != estimate.len() {
        return Err(Error::LengthMismatch { a: reference.len(), b: estimate.len() });
    }
    if reference.is_empty() {
        return Err(Error::Empty);
    }
    let rr: T = reference.iter().map(|&r| r * r).sum();
    if !(rr > T::zero()) {
        return Err(Error::ZeroReference);
    }
    let er: T = reference.iter().zip(estimate).map(|(&r, &e)| r * e).sum();
    let alpha = er / rr;
    let num = alpha * alpha * rr;
    let den: T = reference.iter().zip(estimate).map(|(&r, &e)| {
        let d = alpha * r - e;
        d * d
    }).sum();
    let cap = rl::<T>(cap_db);
    if !(den > T::zero()) {
        return Ok(cap);
    }
    Ok((rl::<T>(10.0) * (num / den).log10()).min(cap))
}

/// One utterance to score: clean reference, noisy input, enhanced output.
#[derive(Debug, Clone)]
pub struct EvalItem<T> {
    pub id: String,
    pub snr_db: f64,
    pub clean: Waveform<T>,
    pub noisy: Waveform<T>,
    pub enhanced: Waveform<T>,
}

/// Scoring options.
#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    /// Known pipeline delay of the enhanced signal in samples; the enhanced
    /// signal is shifted back by this much before scoring.
    pub delay_samples: usize,
    /// Samples dropped at both ends of the compared region, keeping
    /// filter-bank edge effects out of the scores.
    pub edge_trim: usize,
    /// SI-SDR cap in dB.
    pub si_sdr_cap_db: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { delay_samples: 0, edge_trim: 96, si_sdr_cap_db: 100.0 }
    }
}

/// Per-utterance scores.
#[derive(Debug, Clone)]
pub struct UttScores<T> {
    pub id: String,
    pub snr_db: f64,
    pub si_sdr_noisy_db: T,
    pub si_sdr_db: T,
    pub stoi_noisy: T,
    pub stoi: T,
}

/// Five-number-ish summary of one metric within one SNR bucket.
#[derive(Debug, Clone)]
pub struct MetricSummary<T> {
    pub metric: &'static str,
    pub count: usize,
    pub mean: T,
    pub q1: T,
    pub median: T,
    pub q3: T,
}

/// All summaries for one SNR bucket.
#[derive(Debug, Clone)]
pub struct BucketStats<T> {
    pub snr_db: f64,
    pub summaries: Vec<MetricSummary<T>>,
}

/// Full evaluation result.
#[derive(Debug, Clone)]
pub struct EvalReport<T> {
    pub utterances: Vec<UttScores<T>>,
    pub buckets: Vec<BucketStats<T>>,
}

/// Sorted-order mean: independent of input permutation down to the bit.
fn stable_mean<T: Real>(values: &[T]) -> T {
    let mut v: Vec<f64> = values.iter().map(|x| x.to_f64().unwrap()).collect();
    v.sort_by(f64::total_cmp);
    rl::<T>(v.iter().sum::<f64>() / v.len() as f64)
}

/// Linear-interpolation quantile of already meaningful (finite) values.
fn quantile<T: Real>(values: &[T], p: f64) -> T {
    let mut v: Vec<f64> = values.iter().map(|x| x.to_f64().unwrap()).collect();
    v.sort_by(f64::total_cmp);
    if v.len() == 1 {
        return rl(v[0]);
    }
    let h = (v.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    rl(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
}

fn summarize<T: Real>(metric: &'static str, values: &[T]) -> MetricSummary<T> {
    MetricSummary {
        metric,
        count: values.len(),
        mean: stable_mean(values),
        q1: quantile(values, 0.25),
        median: quantile(values, 0.5),
        q3: quantile(values, 0.75),
    }
}

/// Scores every utterance and aggregates per SNR bucket.
///
/// The compared region is the overlap of the delay-compensated enhanced
/// signal with the references, minus `edge_trim` samples at each end; the
/// same region is used for the noisy baseline so the comparison is fair.
pub fn evaluate<T: Real>(items: &[EvalItem<T>], opts: &EvalOptions) -> Result<EvalReport<T>> {
    if items.is_empty() {
        return Err(Error::Empty);
    }
    let mut utterances = Vec::with_capacity(items.len());
    for item in items {
        let len = item.clean.len();
        if item.noisy.len() != len || item.enhanced.len() != len {
            return Err(Error::LengthMismatch { a: len, b: item.noisy.len().min(item.enhanced.len()) });
        }
        let usable = len.checked_sub(opts.delay_samples + 2 * opts.edge_trim).ok_or(
            Error::TooShort { len, min: opts.delay_samples + 2 * opts.edge_trim + 1 },
        )?;
        if usable == 0 {
            return Err(Error::TooShort { len, min: opts.delay_samples + 2 * opts.edge_trim + 1 });
        }
        let lo = opts.edge_trim;
        let hi = lo + usable;
        let clean = &item.clean.samples[lo..hi];
        let noisy = &item.noisy.samples[lo..hi];
        let enh = &item.enhanced.samples[lo + opts.delay_samples..hi + opts.delay_samples];
        let rate = item.clean.sample_rate;
        let clean_w = Waveform::new(clean.to_vec(), rate);
        utterances.push(UttScores {
            id: item.id.clone(),
            snr_db: item.snr_db,
            si_sdr_noisy_db: si_sdr(clean, noisy, opts.si_sdr_cap_db)?,
            si_sdr_db: si_sdr(clean, enh, opts.si_sdr_cap_db)?,
            stoi_noisy: stoi(&clean_w, &Waveform::new(noisy.to_vec(), rate))?,
            stoi: stoi(&clean_w, &Waveform::new(enh.to_vec(), rate))?,
        });
    }

    // Bucket by SNR, ascending.
    let mut snrs: Vec<f64> = utterances.iter().map(|u| u.snr_db).collect();
    snrs.sort_by(f64::total_cmp);
    snrs.dedup();
    let mut buckets = Vec::new();
    for &snr in &snrs {
        let rows: Vec<&UttScores<T>> =
            utterances.iter().filter(|u| u.snr_db == snr).collect();
        let col = |f: &dyn Fn(&UttScores<T>) -> T| -> Vec<T> { rows.iter().map(|r| f(r)).collect() };
        let si_noisy = col(&|r| r.si_sdr_noisy_db);
        let si_enh = col(&|r| r.si_sdr_db);
        let si_gain: Vec<T> =
            rows.iter().map(|r| r.si_sdr_db - r.si_sdr_noisy_db).collect();
        let st_noisy = col(&|r| r.stoi_noisy);
        let st_enh = col(&|r| r.stoi);
        let st_delta: Vec<T> = rows.iter().map(|r| r.stoi - r.stoi_noisy).collect();
        buckets.push(BucketStats {
            snr_db: snr,
            summaries: vec![
                summarize("si_sdr_noisy_db", &si_noisy),
                summarize("si_sdr_db", &si_enh),
                summarize("si_sdr_gain_db", &si_gain),
                summarize("stoi_noisy", &st_noisy),
                summarize("stoi", &st_enh),
                summarize("delta_stoi", &st_delta),
            ],
        });
    }
    Ok(EvalReport { utterances, buckets })
}

impl<T: Real> EvalReport<T> {
    /// Per-utterance CSV: one row per utterance.
    pub fn utterance_csv(&self) -> String {
        let mut out = String::from("id,snr_db,si_sdr_noisy_db,si_sdr_db,stoi_noisy,stoi,delta_stoi\n");
        for u in &self.utterances {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                u.id,
                u.snr_db,
                u.si_sdr_noisy_db,
                u.si_sdr_db,
                u.stoi_noisy,
                u.stoi,
                u.stoi - u.stoi_noisy
            ));
        }
        out
    }

    /// Aggregate CSV: one row per (SNR bucket, metric) with quartiles.
    pub fn aggregate_csv(&self) -> String {
        let mut out = String::from("snr_db,metric,count,mean,q1,median,q3\n");
        for b in &self.buckets {
            for s in &b.summaries {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    b.snr_db, s.metric, s.count, s.mean, s.q1, s.median, s.q3
                ));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn randvec(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn rmse_basics() {
        let a = vec![1.0f64, 2.0, 3.0];
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        let b = vec![2.0f64, 3.0, 4.0];
        assert!((rmse(&a, &b).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(rmse(&a, &b[..2]), Err(Error::LengthMismatch { .. })));
        assert!(matches!(rmse::<f64>(&[], &[]), Err(Error::Empty)));
    }

    #[test]
    fn si_sdr_perfect_estimate_hits_cap() {
        let r = randvec(1, 1000);
        assert_eq!(si_sdr(&r, &r, 100.0).unwrap(), 100.0);
        // A scaled copy is also perfect under scale invariance.
        let scaled: Vec<f64> = r.iter().map(|&v| 3.0 * v).collect();
        let v = si_sdr(&r, &scaled, 100.0).unwrap();
        assert!(v >= 99.0, "scaled copy scored {v}");
    }

    #[test]
    fn si_sdr_scale_invariance() {
        let r = randvec(2, 2000);
        let e = randvec(3, 2000);
        let a = si_sdr(&r, &e, 100.0).unwrap();
        for &c in &[0.1, 7.3, 1e4] {
            let ec: Vec<f64> = e.iter().map(|&v| c * v).collect();
            let b = si_sdr(&r, &ec, 100.0).unwrap();
            assert!((a - b).abs() <= 1e-9, "scale {c}: {a} vs {b}");
        }
    }

    #[test]
    fn si_sdr_orthogonal_error_analytic() {
        // estimate = ref + e with e ⟂ ref and ||e||² = ||ref||²/100: 20 dB.
        let r = randvec(4, 4096);
        let raw = randvec(5, 4096);
        let rr: f64 = r.iter().map(|v| v * v).sum();
        let proj: f64 = r.iter().zip(&raw).map(|(a, b)| a * b).sum::<f64>() / rr;
        let mut e: Vec<f64> = raw.iter().zip(&r).map(|(&v, &rv)| v - proj * rv).collect();
        let ee: f64 = e.iter().map(|v| v * v).sum();
        let scale = (rr / (100.0 * ee)).sqrt();
        for v in &mut e {
            *v *= scale;
        }
        let est: Vec<f64> = r.iter().zip(&e).map(|(&a, &b)| a + b).collect();
        let got = si_sdr(&r, &est, 100.0).unwrap();
        assert!((got - 20.0).abs() <= 1e-6, "got {got}");
    }

    #[test]
    fn si_sdr_zero_reference_is_error() {
        let z = vec![0.0f64; 100];
        let e = randvec(6, 100);
        assert!(matches!(si_sdr(&z, &e, 100.0), Err(Error::ZeroReference)));
    }

    #[test]
    fn quantiles_interpolate() {
        let v = vec![1.0f64, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
    }

    fn eval_fixture(n_utts: usize, perfect: bool) -> Vec<EvalItem<f64>> {
        let rate = 24_000u32;
        (0..n_utts)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(100 + i as u64);
                let n = 3 * rate as usize;
                let clean: Vec<f64> = (0..n)
                    .map(|k| {
                        let t = k as f64 / rate as f64;
                        let gate = if (t * 2.0).fract() < 0.75 { 1.0 } else { 0.0 };
                        gate * 0.3
                            * (1..=12)
                                .map(|h| {
                                    (2.0 * std::f64::consts::PI * 120.0 * h as f64 * t).sin()
                                        / h as f64
                                })
                                .sum::<f64>()
                    })
                    .collect();
                let noisy: Vec<f64> =
                    clean.iter().map(|&v| v + 0.05 * rng.gen_range(-1.0..1.0)).collect();
                let enhanced = if perfect {
                    clean.clone()
                } else {
                    clean.iter().map(|&v| v + 0.01 * rng.gen_range(-1.0..1.0)).collect()
                };
                EvalItem {
                    id: format!("utt{i:03}"),
                    snr_db: if i % 2 == 0 { 0.0 } else { 10.0 },
                    clean: Waveform::new(clean, rate),
                    noisy: Waveform::new(noisy, rate),
                    enhanced: Waveform::new(enhanced, rate),
                }
            })
            .collect()
    }

    #[test]
    fn perfect_enhancement_hits_cap_and_nonnegative_delta_stoi() {
        let items = eval_fixture(4, true);
        let report = evaluate(&items, &EvalOptions::default()).unwrap();
        for u in &report.utterances {
            assert_eq!(u.si_sdr_db, 100.0, "{}", u.id);
            assert!(u.stoi - u.stoi_noisy >= 0.0, "{}", u.id);
        }
    }

    #[test]
    fn aggregates_are_permutation_invariant() {
        let items = eval_fixture(6, false);
        let report_a = evaluate(&items, &EvalOptions::default()).unwrap();
        let mut rev = items.clone();
        rev.reverse();
        let report_b = evaluate(&rev, &EvalOptions::default()).unwrap();
        assert_eq!(report_a.aggregate_csv(), report_b.aggregate_csv());
    }

    #[test]
    fn delay_compensation_restores_cap_scores() {
        let mut items = eval_fixture(2, true);
        let delay = 144usize;
        for item in &mut items {
            let mut shifted = vec![0.0f64; item.clean.len()];
            for n in delay..item.clean.len() {
                shifted[n] = item.clean.samples[n - delay];
            }
            item.enhanced = Waveform::new(shifted, item.clean.sample_rate);
        }
        let opts = EvalOptions { delay_samples: delay, ..EvalOptions::default() };
        let report = evaluate(&items, &opts).unwrap();
        for u in &report.utterances {
            assert_eq!(u.si_sdr_db, 100.0);
        }
    }

    #[test]
    fn csv_shapes() {
        let items = eval_fixture(4, false);
        let report = evaluate(&items, &EvalOptions::default()).unwrap();
        let utt = report.utterance_csv();
        assert_eq!(utt.lines().count(), 1 + 4);
        assert!(utt.starts_with("id,snr_db,"));
        let agg = report.aggregate_csv();
        // Two buckets (0 and 10 dB) x six metrics + header.
        assert_eq!(agg.lines().count(), 1 + 2 * 6);
    }
}
