//! End-to-end differentiable enhancement pipeline.
//!
//! Forward: analysis → adaptive normalization → per-frame features → MLP →
//! coefficient stacks → linear recombination → synthesis. The recombination
//! and synthesis steps are fixed linear operators, so the reverse pass
//! differentiates them exactly; normalization statistics `mu` are treated
//! as constants, with gradients flowing through the numerator and the
//! trained per-bin gains only.

use num_complex::Complex;

use crate::clc::{apply_clc, normalize_traced, CoeffTensor, NormConfig, NormGains, NormState};
use crate::error::{Error, Result};
use crate::filterbank::{FbConfig, Filterbank, Spectrogram, Waveform};
use crate::model::mlp::{FrameTrace, ModelGeometry, ModelParams};
use crate::num::{rl, Real};

/// Writes the feature vector of frame `k`: real and imaginary parts of
/// every processed bin over frames `k-tau1 ..= k+tau2`, frame-major,
/// bin-minor, real before imaginary, zero-extended past the edges.
pub fn featurize<T: Real>(
    x_norm: &Spectrogram<T>,
    k: usize,
    tau1: usize,
    tau2: usize,
    out: &mut [T],
) {
    let bins = x_norm.processed_bins();
    debug_assert_eq!(out.len(), 2 * bins * (tau1 + 1 + tau2));
    let mut pos = 0;
    for dk in 0..(tau1 + 1 + tau2) {
        let frame = k as i64 - tau1 as i64 + dk as i64;
        if frame < 0 || frame >= x_norm.n_frames() as i64 {
            out[pos..pos + 2 * bins].fill(T::zero());
            pos += 2 * bins;
            continue;
        }
        for &c in &x_norm.frame(frame as usize)[..bins] {
            out[pos] = c.re;
            out[pos + 1] = c.im;
            pos += 2;
        }
    }
}

/// Everything recorded by one forward run; the backward pass consumes it.
#[derive(Debug, Clone)]
pub struct ForwardPass<T> {
    /// Raw analysis of the input.
    pub x: Spectrogram<T>,
    /// Normalization statistic per (frame, processed bin), frame-major.
    pub mu: Vec<T>,
    /// Normalized spectrogram feeding both the network and the operator.
    pub x_norm: Spectrogram<T>,
    /// Per-frame network traces.
    pub traces: Vec<FrameTrace<T>>,
    /// Predicted coefficient stacks.
    pub coeffs: CoeffTensor<T>,
    /// Enhanced spectrogram.
    pub s_hat: Spectrogram<T>,
    /// Synthesized output at natural (overlap-add) length.
    pub enhanced: Waveform<T>,
}

/// Forward run starting from an already-analyzed spectrogram.
pub fn forward_from_spectrogram<T: Real>(
    params: &ModelParams<T>,
    fbank: &Filterbank<T>,
    norm: &NormConfig,
    x: Spectrogram<T>,
) -> Result<ForwardPass<T>> {
    let geom = &params.geom;
    if geom.bins != x.processed_bins() {
        return Err(Error::Geometry(format!(
            "model covers {} bins, spectrogram has {} processed bins",
            geom.bins,
            x.processed_bins()
        )));
    }
    let mut state = NormState::new(norm, fbank.cfg());
    let gains = NormGains { gamma: params.gamma().to_vec() };
    let (x_norm, mu) = normalize_traced(&x, &mut state, &gains)?;
    let n_frames = x.n_frames();
    let bins = geom.bins;
    let mut feat = vec![T::zero(); geom.input_dim()];
    let mut traces = Vec::with_capacity(n_frames);
    let mut coeffs = CoeffTensor::zeros(n_frames, bins, geom.order, geom.offset);
    for k in 0..n_frames {
        featurize(&x_norm, k, geom.tau1_frames, geom.tau2_frames, &mut feat);
        let trace = params.forward_frame(&feat)?;
        {
            let frame = coeffs.frame_mut(k);
            for (pair, slot) in trace.y.chunks_exact(2).zip(frame.iter_mut()) {
                *slot = Complex::new(pair[0], pair[1]);
            }
        }
        traces.push(trace);
    }
    let s_hat = apply_clc(&x_norm, &coeffs)?;
    let enhanced = fbank.synthesize(&s_hat)?;
    Ok(ForwardPass { x, mu, x_norm, traces, coeffs, s_hat, enhanced })
}

/// Full forward run from a waveform.
pub fn forward_pass<T: Real>(
    params: &ModelParams<T>,
    fbank: &Filterbank<T>,
    norm: &NormConfig,
    noisy: &Waveform<T>,
) -> Result<ForwardPass<T>> {
    forward_from_spectrogram(params, fbank, norm, fbank.analyze(noisy)?)
}

/// Enhances a waveform and truncates the result to the input length
/// (time-aligned with the input; no extra delay is inserted).
pub fn enhance<T: Real>(
    params: &ModelParams<T>,
    fbank: &Filterbank<T>,
    norm: &NormConfig,
    noisy: &Waveform<T>,
) -> Result<Waveform<T>> {
    let mut pass = forward_pass(params, fbank, norm, noisy)?;
    pass.enhanced.samples.truncate(noisy.len());
    Ok(Waveform::new(pass.enhanced.samples, noisy.sample_rate))
}

/// Loss blend: `w_rmse * RMSE + w_sdr * (−SI-SDR/10)`, both terms of the
/// ratio epsilon-stabilized so gradients stay finite at the extremes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub w_rmse: f64,
    pub w_sdr: f64,
    pub sdr_epsilon: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { w_rmse: 1.0, w_sdr: 1.0, sdr_epsilon: 1e-8 }
    }
}

/// Loss value and its two components.
#[derive(Debug, Clone, Copy)]
pub struct LossParts<T> {
    pub total: T,
    pub rmse: T,
    /// Stabilized `−SI-SDR/10` term (natural scale, not dB).
    pub neg_sisdr: T,
}

/// Loss and its gradient with respect to the estimate samples.
pub fn loss_and_gradient<T: Real>(
    estimate: &[T],
    target: &[T],
    w: &LossWeights,
) -> Result<(LossParts<T>, Vec<T>)> {
    if estimate.len() != target.len() {
        return Err(Error::LengthMismatch { a: estimate.len(), b: target.len() });
    }
    if estimate.is_empty() {
        return Err(Error::Empty);
    }
    let n = estimate.len();
    let nt = rl::<T>(n as f64);
    let rr: T = target.iter().map(|&t| t * t).sum();
    if !(rr > T::zero()) {
        return Err(Error::ZeroReference);
    }
    let er: T = estimate.iter().zip(target).map(|(&e, &t)| e * t).sum();
    let alpha = er / rr;
    let num = alpha * alpha * rr;
    let den: T = estimate
        .iter()
        .zip(target)
        .map(|(&e, &t)| {
            let d = alpha * t - e;
            d * d
        })
        .sum();
    let eps = rl::<T>(w.sdr_epsilon);
    let ratio = (num + eps) / (den + eps);
    let neg_sisdr = -ratio.log10();
    let se: T = estimate
        .iter()
        .zip(target)
        .map(|(&e, &t)| {
            let d = e - t;
            d * d
        })
        .sum();
    let rmse = (se / nt).sqrt();
    let w_rmse = rl::<T>(w.w_rmse);
    let w_sdr = rl::<T>(w.w_sdr);
    let total = w_rmse * rmse + w_sdr * neg_sisdr;

    let ln10 = rl::<T>(std::f64::consts::LN_10);
    let cross = alpha * rr - er; // exactly zero in exact arithmetic
    let rmse_scale = if rmse > T::zero() { w_rmse / (nt * rmse) } else { T::zero() };
    let two = rl::<T>(2.0);
    let grad: Vec<T> = estimate
        .iter()
        .zip(target)
        .map(|(&e, &t)| {
            let d_num = two * alpha * t;
            let d_den = two * ((t / rr) * cross - (alpha * t - e));
            let d_sdr = -(d_num / (num + eps) - d_den / (den + eps)) / ln10;
            rmse_scale * (e - t) + w_sdr * d_sdr
        })
        .collect();
    Ok((LossParts { total, rmse, neg_sisdr }, grad))
}

/// Region of a length-`len` item that the loss is computed on: the leading
/// look-back context plus one frame of synthesis taper is dropped at the
/// head, the look-ahead context plus one frame at the tail.
pub fn loss_region(geom: &ModelGeometry, fb: &FbConfig, len: usize) -> Result<(usize, usize)> {
    let lo = geom.tau1_frames * fb.hop + fb.frame_len;
    let tail = geom.tau2_frames * fb.hop + fb.frame_len;
    if len <= lo + tail {
        return Err(Error::TooShort { len, min: lo + tail + 1 });
    }
    Ok((lo, len - tail))
}

/// Reverse pass: pulls a gradient on the enhanced waveform (natural
/// length) back to a flat parameter gradient, matching `theta`'s layout.
pub fn backward_pass<T: Real>(
    params: &ModelParams<T>,
    fbank: &Filterbank<T>,
    pass: &ForwardPass<T>,
    g_enhanced: &[T],
) -> Result<Vec<T>> {
    let geom = &params.geom;
    let n_frames = pass.x.n_frames();
    if g_enhanced.len() != fbank.natural_length(n_frames) {
        return Err(Error::LengthMismatch {
            a: g_enhanced.len(),
            b: fbank.natural_length(n_frames),
        });
    }
    let bins = geom.bins;
    let g_shat = fbank.synthesize_adjoint(g_enhanced, n_frames);
    let mut g_xnorm = Spectrogram::<T>::zeros(fbank.cfg(), n_frames);
    let mut grads = vec![T::zero(); geom.param_count()];
    let mut g_y = vec![T::zero(); geom.output_dim()];
    let mut g_feat = vec![T::zero(); geom.input_dim()];
    let mut feat = vec![T::zero(); geom.input_dim()];
    let ctx = geom.tau1_frames + 1 + geom.tau2_frames;
    for k in 0..n_frames {
        // Linear recombination: S(k,f) = Σ_i A(k,i,f) · Xn(k−i+offset, f).
        // For the real-pair convention, the coefficient gradient is
        // G_S·conj(Xn) and the input gradient G_S·conj(A).
        for i in 0..=geom.order {
            let src = k as i64 - i as i64 + geom.offset as i64;
            let in_range = src >= 0 && src < n_frames as i64;
            for f in 0..bins {
                let ga = if in_range {
                    g_shat.at(k, f) * pass.x_norm.at(src as usize, f).conj()
                } else {
                    Complex::new(T::zero(), T::zero())
                };
                g_y[(i * bins + f) * 2] = ga.re;
                g_y[(i * bins + f) * 2 + 1] = ga.im;
            }
            if in_range {
                let dst = g_xnorm.frame_mut(src as usize);
                for f in 0..bins {
                    dst[f] += g_shat.at(k, f) * pass.coeffs.at(k, i, f).conj();
                }
            }
        }
        featurize(&pass.x_norm, k, geom.tau1_frames, geom.tau2_frames, &mut feat);
        params.backward_frame(&feat, &pass.traces[k], &g_y, &mut grads, &mut g_feat);
        for dk in 0..ctx {
            let frame = k as i64 - geom.tau1_frames as i64 + dk as i64;
            if frame < 0 || frame >= n_frames as i64 {
                continue;
            }
            let dst = g_xnorm.frame_mut(frame as usize);
            for f in 0..bins {
                dst[f] += Complex::new(g_feat[(dk * bins + f) * 2], g_feat[(dk * bins + f) * 2 + 1]);
            }
        }
    }
    // Gains: Xn = gamma·X/mu, mu held constant.
    for k in 0..n_frames {
        let gx = g_xnorm.frame(k);
        let xr = pass.x.frame(k);
        let mu = &pass.mu[k * bins..(k + 1) * bins];
        for f in 0..bins {
            grads[f] += (gx[f].re * xr[f].re + gx[f].im * xr[f].im) / mu[f];
        }
    }
    Ok(grads)
}

/// Loss and parameter gradients for one (noisy, target) training item over
/// `region` (sample bounds within the item).
pub fn item_loss_and_grads<T: Real>(
    params: &ModelParams<T>,
    fbank: &Filterbank<T>,
    norm: &NormConfig,
    noisy: &Waveform<T>,
    target: &[T],
    region: (usize, usize),
    weights: &LossWeights,
) -> Result<(LossParts<T>, Vec<T>)> {
    let pass = forward_pass(params, fbank, norm, noisy)?;
    let (lo, hi) = region;
    let natural = pass.enhanced.len();
    if hi <= lo || hi > target.len() || hi > natural {
        return Err(Error::Geometry(format!(
            "loss region {lo}..{hi} outside item of {} target / {natural} enhanced samples",
            target.len()
        )));
    }
    let (parts, g_region) =
        loss_and_gradient(&pass.enhanced.samples[lo..hi], &target[lo..hi], weights)?;
    let mut g_enh = vec![T::zero(); natural];
    g_enh[lo..hi].copy_from_slice(&g_region);
    let grads = backward_pass(params, fbank, &pass, &g_enh)?;
    Ok((parts, grads))
}
