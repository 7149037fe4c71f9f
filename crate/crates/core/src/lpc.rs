//! Linear predictive coding over real or complex sequences.
//!
//! The predictor estimates each sample from the `order` previous ones,
//! `x̂[k] = Σ_{i=1..order} a[i]·x[k-i]`, with coefficients obtained from the
//! autocorrelation normal equations via the Levinson–Durbin recursion in its
//! Hermitian (complex-conjugate) form. No windowing happens here; callers
//! window or slice their data before calling in.

use num_complex::ComplexFloat;

use crate::error::{Error, Result};
use crate::num::{rl, Real};

/// Sample type prediction works on: the scalar `T` itself or `Complex<T>`.
pub trait LpcSample<T: Real>: ComplexFloat<Real = T> + From<T> + 'static {}

impl<T: Real, C: ComplexFloat<Real = T> + From<T> + 'static> LpcSample<T> for C {}

/// Prediction coefficients `a[1..=order]`, stored as `a[0]` = lag-1 tap.
#[derive(Debug, Clone, PartialEq)]
pub struct LpcCoeffs<C> {
    pub a: Vec<C>,
}

impl<C> LpcCoeffs<C> {
    pub fn order(&self) -> usize {
        self.a.len()
    }
}

/// Biased autocorrelation `r[τ] = Σ_k x[k]·conj(x[k-τ])` for τ = 0..=max_lag.
///
/// The sum runs over all `k` where both factors exist; no normalization is
/// applied, so `r[0]` is the signal energy.
pub fn autocorrelation<T: Real, C: LpcSample<T>>(x: &[C], max_lag: usize) -> Result<Vec<C>> {
    if x.is_empty() {
        return Err(Error::Empty);
    }
    if max_lag >= x.len() {
        return Err(Error::Config(format!(
            "autocorrelation lag {} needs more than {} samples",
            max_lag,
            x.len()
        )));
    }
    let mut r = Vec::with_capacity(max_lag + 1);
    for tau in 0..=max_lag {
        let mut acc = C::zero();
        for k in tau..x.len() {
            acc = acc + x[k] * x[k - tau].conj();
        }
        r.push(acc);
    }
    Ok(r)
}

/// Solves the order-`order` normal equations from autocorrelation values
/// `r[0..=order]` by the Hermitian Levinson–Durbin recursion.
///
/// Returns the prediction coefficients and the final prediction error power
/// `E = r[0]·Π(1-|k_m|²)`. Fails on non-positive `r[0]` (degenerate signal)
/// and on a non-positive error power at any recursion lag (ill-conditioned
/// system, e.g. an over-ordered fit on a pure sinusoid).
pub fn levinson_durbin<T: Real, C: LpcSample<T>>(
    r: &[C],
    order: usize,
) -> Result<(LpcCoeffs<C>, T)> {
    if order == 0 {
        return Err(Error::Config("lpc order must be at least 1".into()));
    }
    if r.len() < order + 1 {
        return Err(Error::Config(format!(
            "need {} autocorrelation lags for order {}, got {}",
            order + 1,
            order,
            r.len()
        )));
    }
    let r0 = r[0].re();
    if !(r0 > T::zero()) || r[0].im().abs() > rl::<T>(1e-9) * r0 {
        return Err(Error::Degenerate("autocorrelation at lag 0 is not positive real".into()));
    }

    // An error power at (or numerically indistinguishable from) zero means
    // the next reflection coefficient would divide by nothing.
    let tol = r0 * T::epsilon() * rl::<T>(64.0);
    let mut a: Vec<C> = Vec::with_capacity(order);
    let mut err = r0;
    for m in 1..=order {
        if !(err > tol) {
            return Err(Error::IllConditioned { lag: m });
        }
        // Reflection coefficient from the current prediction of r[m].
        let mut acc = r[m];
        for i in 1..m {
            acc = acc - a[i - 1] * r[m - i];
        }
        let k = acc * <C as From<T>>::from(T::one() / err);
        // Order update: a_i <- a_i - k·conj(a_{m-i}).
        let prev = a.clone();
        a.push(k);
        for i in 1..m {
            a[i - 1] = prev[i - 1] - k * prev[m - i - 1].conj();
        }
        err = (err * (T::one() - (k.abs() * k.abs()))).max(T::zero());
    }
    Ok((LpcCoeffs { a }, err))
}

/// Convenience: autocorrelation followed by [`levinson_durbin`].
pub fn fit<T: Real, C: LpcSample<T>>(x: &[C], order: usize) -> Result<(LpcCoeffs<C>, T)> {
    let r = autocorrelation(x, order)?;
    levinson_durbin(&r, order)
}

/// One-step predictions `x̂[k] = Σ_i a[i]·x[k-i]` for `k = order..x.len()`.
///
/// The returned vector has length `x.len() - order`; element `j` is the
/// prediction of `x[order + j]`.
pub fn predict<T: Real, C: LpcSample<T>>(x: &[C], coeffs: &LpcCoeffs<C>) -> Result<Vec<C>> {
    let order = coeffs.order();
    if x.len() < order {
        return Err(Error::TooShort { len: x.len(), min: order });
    }
    let mut out = Vec::with_capacity(x.len() - order);
    for k in order..x.len() {
        let mut acc = C::zero();
        for (i, &ai) in coeffs.a.iter().enumerate() {
            acc = acc + ai * x[k - 1 - i];
        }
        out.push(acc);
    }
    Ok(out)
}

/// Prediction residual `d[k] = x[k] - x̂[k]` for `k = order..x.len()`,
/// aligned like [`predict`].
pub fn residual<T: Real, C: LpcSample<T>>(x: &[C], coeffs: &LpcCoeffs<C>) -> Result<Vec<C>> {
    let pred = predict(x, coeffs)?;
    Ok(x[coeffs.order()..].iter().zip(pred).map(|(&xi, p)| xi - p).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rms<T: Real, C: LpcSample<T>>(x: &[C]) -> T {
        let e: T = x.iter().map(|v| v.abs() * v.abs()).fold(T::zero(), |a, b| a + b);
        (e / T::from_usize(x.len()).unwrap()).sqrt()
    }

    /// Fits on a Hann-windowed copy (leakage suppression); callers of this
    /// module are expected to pre-window exactly like this.
    fn fit_windowed(x: &[Complex<f64>], order: usize) -> LpcCoeffs<Complex<f64>> {
        let n = x.len();
        let windowed: Vec<Complex<f64>> = x
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                let w = 0.5 * (1.0 - (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos());
                v * w
            })
            .collect();
        fit(&windowed, order).unwrap().0
    }

    #[test]
    fn autocorrelation_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let x: Vec<Complex<f64>> = (0..200)
            .map(|_| Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let r = autocorrelation(&x, 8).unwrap();
        for tau in 0..=8usize {
            let mut want = Complex::new(0.0, 0.0);
            for k in 0..200 {
                if k >= tau {
                    want += x[k] * x[k - tau].conj();
                }
            }
            assert!((r[tau] - want).norm() < 1e-10);
        }
    }

    #[test]
    fn autocorrelation_lag0_is_energy() {
        let x = vec![1.0f64, -2.0, 3.0];
        let r = autocorrelation(&x, 1).unwrap();
        assert_eq!(r[0], 14.0);
    }

    #[test]
    fn real_sinusoid_order2_recovers_known_coefficients() {
        // A pure cosine satisfies x[k] = 2cos(w)·x[k-1] - x[k-2] exactly; the
        // long-signal limit of the order-2 fit approaches a = [2cos(w), -1].
        let w = 0.3f64;
        let n = 1 << 20;
        let x: Vec<f64> = (0..n).map(|k| (w * k as f64).cos()).collect();
        let (coeffs, _err) = fit(&x, 2).unwrap();
        assert!((coeffs.a[0] - 2.0 * w.cos()).abs() < 1e-3, "a1 = {}", coeffs.a[0]);
        assert!((coeffs.a[1] + 1.0).abs() < 1e-3, "a2 = {}", coeffs.a[1]);
    }

    #[test]
    fn single_complex_exponential_order1() {
        let w = 0.7f64;
        let n = 1 << 16;
        let x: Vec<Complex<f64>> = (0..n).map(|k| Complex::cis(w * k as f64)).collect();
        let coeffs = fit_windowed(&x, 1);
        // a1 annihilates the exponential: x[k] = e^{jw}·x[k-1].
        assert!((coeffs.a[0] - Complex::cis(w)).norm() < 1e-8);
        let d = residual(&x, &coeffs).unwrap();
        let rel = rms::<f64, _>(&d) / rms::<f64, _>(&x[1..]);
        assert!(rel < 1e-6, "relative residual RMS {rel:.3e}");
    }

    #[test]
    fn three_complex_exponentials_order3_fit_is_exact() {
        let ws = [0.31f64, 0.9, 1.7];
        let n = 1 << 17;
        let x: Vec<Complex<f64>> = (0..n)
            .map(|k| {
                ws.iter().map(|&w| Complex::cis(w * k as f64 + 0.2 * w)).sum::<Complex<f64>>()
            })
            .collect();
        let coeffs = fit_windowed(&x, 3);
        let d = residual(&x, &coeffs).unwrap();
        let rel = rms::<f64, _>(&d) / rms::<f64, _>(&x[3..]);
        assert!(rel < 1e-6, "relative residual RMS {rel:.3e}");
    }

    #[test]
    fn reported_error_power_matches_measured_residual() {
        // AR(3) noise: x[k] = 1.2x[k-1] - 0.5x[k-2] + 0.1x[k-3] + e[k].
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 100_000;
        let mut x = vec![0.0f64; n];
        for k in 3..n {
            x[k] = 1.2 * x[k - 1] - 0.5 * x[k - 2] + 0.1 * x[k - 3] + rng.gen_range(-1.0..1.0);
        }
        let (coeffs, err) = fit(&x, 3).unwrap();
        let d = residual(&x, &coeffs).unwrap();
        let measured: f64 = d.iter().map(|v| v * v).sum();
        let rel = (measured - err).abs() / err;
        assert!(rel < 0.05, "measured {measured:.1} vs reported {err:.1} ({rel:.3})");
    }

    #[test]
    fn scale_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let x: Vec<f64> = (0..4000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = x.iter().map(|&v| 3.5 * v).collect();
        let (ax, ex) = fit(&x, 6).unwrap();
        let (ay, ey) = fit(&y, 6).unwrap();
        for i in 0..6 {
            assert!((ax.a[i] - ay.a[i]).abs() < 1e-9 * ax.a[i].abs().max(1e-3));
        }
        assert!((ey / ex - 3.5 * 3.5).abs() < 1e-6);
    }

    #[test]
    fn zero_signal_is_degenerate() {
        let r = autocorrelation(&vec![0.0f64; 100], 4).unwrap();
        assert!(matches!(levinson_durbin::<f64, f64>(&r, 4), Err(Error::Degenerate(_))));
    }

    #[test]
    fn over_ordered_exact_sinusoid_autocorrelation_is_ill_conditioned() {
        // The ideal autocorrelation of a cosine, r[t] = cos(w·t), is exactly
        // annihilated at order 2; asking for order 3 divides by a vanished
        // error power and must report the offending lag.
        let w = 0.8f64;
        let r: Vec<f64> = (0..4).map(|t| (w * t as f64).cos()).collect();
        assert!(levinson_durbin::<f64, f64>(&r, 2).is_ok());
        match levinson_durbin::<f64, f64>(&r, 3) {
            Err(Error::IllConditioned { lag: 3 }) => {}
            other => panic!("expected ill-conditioned at lag 3, got {other:?}"),
        }
    }

    #[test]
    fn bad_arguments_are_config_errors() {
        let x = vec![1.0f64; 10];
        assert!(matches!(autocorrelation(&x, 10), Err(Error::Config(_))));
        assert!(matches!(autocorrelation::<f64, f64>(&[], 0), Err(Error::Empty)));
        let r = autocorrelation(&x, 4).unwrap();
        assert!(matches!(levinson_durbin::<f64, f64>(&r, 0), Err(Error::Config(_))));
        assert!(matches!(levinson_durbin::<f64, f64>(&r, 5), Err(Error::Config(_))));
    }

    #[test]
    fn predict_alignment() {
        // With a = [1] the prediction of x[k] is x[k-1].
        let x = vec![1.0f64, 2.0, 3.0, 4.0];
        let coeffs = LpcCoeffs { a: vec![1.0f64] };
        assert_eq!(predict(&x, &coeffs).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(residual(&x, &coeffs).unwrap(), vec![1.0, 1.0, 1.0]);
    }
}
