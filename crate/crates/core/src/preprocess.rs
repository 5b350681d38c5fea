//! Signal conditioning: baseline drift removal, powerline cancellation and
//! polarity correction.
//!
//! The stages are exposed separately. The pipeline combines the first two
//! into one orthogonal projection: the signal is notched and the trend is
//! then fitted against a notched polynomial basis. The result is orthogonal
//! to both the polynomials and the notch band, so running the pipeline on
//! its own output changes nothing.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Error, Result};
use crate::signal::{EcgRecord, Stage};

/// Flip statistics with magnitude below this count as a tie (not flipped).
pub const FLIP_TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessConfig {
    pub poly_order: usize,
    pub pli_freq_hz: f64,
    /// Half-width of the spectral notch around `pli_freq_hz`.
    pub pli_bandwidth_hz: f64,
    pub flip_check: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            poly_order: 5,
            pli_freq_hz: 50.0,
            pli_bandwidth_hz: 1.0,
            flip_check: true,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.poly_order > 10 {
            return invalid(format!("poly_order {} exceeds 10", self.poly_order));
        }
        if self.pli_freq_hz != 50.0 && self.pli_freq_hz != 60.0 {
            return invalid(format!("pli_freq_hz must be 50 or 60, got {}", self.pli_freq_hz));
        }
        if !(self.pli_bandwidth_hz > 0.0 && self.pli_bandwidth_hz < self.pli_freq_hz / 2.0) {
            return invalid(format!(
                "pli_bandwidth_hz must lie in (0, {}), got {}",
                self.pli_freq_hz / 2.0,
                self.pli_bandwidth_hz
            ));
        }
        Ok(())
    }
}

/// Least-squares polynomial trend of `samples` on a uniform grid.
///
/// Time is mapped onto `[-1, 1]` and expanded in Legendre polynomials, which
/// keeps the normal equations well conditioned up to order 10.
pub fn fit_trend(samples: &[f64], order: usize) -> Result<Vec<f64>> {
    let n = samples.len();
    if n <= order + 1 {
        return invalid(format!(
            "polynomial order {order} needs more than {} samples, got {n}",
            order + 1
        ));
    }
    let k = order + 1;
    let basis = legendre_basis(n, k);
    let coef = solve_normal(&basis, samples)?;
    Ok((&basis * coef).iter().copied().collect())
}

fn solve_normal(basis: &DMatrix<f64>, samples: &[f64]) -> Result<DVector<f64>> {
    let gram = basis.transpose() * basis;
    let rhs = basis.transpose() * DVector::from_column_slice(samples);
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Numerical("normal equations are rank deficient".into()))?;
    let coef = chol.solve(&rhs);
    if coef.iter().any(|c| !c.is_finite()) {
        return Err(Error::Numerical("non-finite polynomial coefficients".into()));
    }
    Ok(coef)
}

fn legendre_basis(n: usize, k: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, k);
    for i in 0..n {
        let x = if n == 1 {
            0.0
        } else {
            2.0 * i as f64 / (n - 1) as f64 - 1.0
        };
        a[(i, 0)] = 1.0;
        if k > 1 {
            a[(i, 1)] = x;
        }
        for d in 1..k.saturating_sub(1) {
            let df = d as f64;
            a[(i, d + 1)] = ((2.0 * df + 1.0) * x * a[(i, d)] - df * a[(i, d - 1)]) / (df + 1.0);
        }
    }
    a
}

/// Subtract the least-squares polynomial trend of the given order.
pub fn remove_baseline(record: &EcgRecord, order: usize) -> Result<EcgRecord> {
    let trend = fit_trend(record.samples(), order)?;
    let out = record
        .samples()
        .iter()
        .zip(&trend)
        .map(|(x, t)| x - t)
        .collect();
    record.with_samples(out)
}

fn plans(n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    let mut planner = FftPlanner::new();
    (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
}

/// Zero every DFT bin within `bandwidth_hz` of `freq_hz` (and its mirror).
pub fn notch(samples: &[f64], fs: f64, freq_hz: f64, bandwidth_hz: f64) -> Result<Vec<f64>> {
    if !(bandwidth_hz >= 0.0) || !(freq_hz > bandwidth_hz) {
        return invalid(format!(
            "notch band {freq_hz} ± {bandwidth_hz} Hz must be positive"
        ));
    }
    if freq_hz + bandwidth_hz >= fs / 2.0 {
        return invalid(format!(
            "notch band {freq_hz} ± {bandwidth_hz} Hz reaches Nyquist {} Hz",
            fs / 2.0
        ));
    }
    let n = samples.len();
    let (fwd, inv) = plans(n);
    let mut buf: Vec<Complex<f64>> = samples.iter().map(|&x| Complex::new(x, 0.0)).collect();
    fwd.process(&mut buf);
    let (lo, hi) = (freq_hz - bandwidth_hz, freq_hz + bandwidth_hz);
    for k in 1..=n / 2 {
        let f = k as f64 * fs / n as f64;
        if f >= lo && f <= hi {
            buf[k] = Complex::new(0.0, 0.0);
            buf[n - k] = Complex::new(0.0, 0.0);
        }
    }
    inv.process(&mut buf);
    let scale = 1.0 / n as f64;
    let norm = samples.iter().map(|x| x * x).sum::<f64>().sqrt();
    let max_imag = buf.iter().map(|c| (c.im * scale).abs()).fold(0.0, f64::max);
    if max_imag > 1e-9 * norm.max(f64::MIN_POSITIVE) {
        return Err(Error::Numerical(format!(
            "inverse transform left imaginary residue {max_imag:e}"
        )));
    }
    Ok(buf.iter().map(|c| c.re * scale).collect())
}

/// Cancel powerline interference with a spectral notch.
pub fn remove_pli(record: &EcgRecord, freq_hz: f64, bandwidth_hz: f64) -> Result<EcgRecord> {
    let out = notch(record.samples(), record.fs(), freq_hz, bandwidth_hz)?;
    record.with_samples(out)
}

/// Dominant-deflection sign: `max + min` of the samples.
pub fn flip_statistic(samples: &[f64]) -> f64 {
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    hi + lo
}

/// Negate the record when its dominant deflection is negative.
pub fn correct_flip(record: &EcgRecord) -> Result<(EcgRecord, bool)> {
    let stat = flip_statistic(record.samples());
    if stat < -FLIP_TIE_EPS {
        let out = record.samples().iter().map(|v| -v).collect();
        Ok((record.with_samples(out)?, true))
    } else {
        Ok((record.clone(), false))
    }
}

/// Remove the polynomial trend and the notch band together.
pub fn detrend_and_notch(
    samples: &[f64],
    fs: f64,
    order: usize,
    freq_hz: f64,
    bandwidth_hz: f64,
) -> Result<Vec<f64>> {
    let n = samples.len();
    if n <= order + 1 {
        return invalid(format!(
            "polynomial order {order} needs more than {} samples, got {n}",
            order + 1
        ));
    }
    let notched = notch(samples, fs, freq_hz, bandwidth_hz)?;
    let mut basis = legendre_basis(n, order + 1);
    for mut col in basis.column_iter_mut() {
        let filtered = notch(col.as_slice(), fs, freq_hz, bandwidth_hz)?;
        col.copy_from_slice(&filtered);
    }
    let coef = solve_normal(&basis, &notched)?;
    let trend = &basis * coef;
    Ok(notched.iter().zip(trend.iter()).map(|(x, t)| x - t).collect())
}

/// Joint detrend and notch, then (optionally) flip correction.
pub fn preprocess_pipeline(record: &EcgRecord, config: &PreprocessConfig) -> Result<EcgRecord> {
    config.validate()?;
    let out = detrend_and_notch(
        record.samples(),
        record.fs(),
        config.poly_order,
        config.pli_freq_hz,
        config.pli_bandwidth_hz,
    )?;
    let rec = record.with_samples(out)?;
    let rec = if config.flip_check {
        correct_flip(&rec)?.0
    } else {
        rec
    };
    Ok(rec.with_stage(Stage::Preprocessed))
}
