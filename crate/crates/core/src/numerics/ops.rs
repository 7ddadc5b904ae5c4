//! Elementwise and row-wise kernels shared by the tape and the
//! tape-free forward passes.

use alloc::format;

use super::Matrix;
use crate::error::{Error, Result};

/// Floor applied to probabilities before taking a logarithm on the loss side.
pub const LOG_FLOOR: f64 = 1e-12;

pub fn check_slope(slope: f64) -> Result<()> {
    if !(slope > 0.0 && slope < 1.0) {
        return Err(Error::Parameter(format!(
            "leaky relu slope must lie in (0, 1), got {slope}"
        )));
    }
    Ok(())
}

pub fn check_temperature(temperature: f64) -> Result<()> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::Parameter(format!(
            "temperature must be positive and finite, got {temperature}"
        )));
    }
    Ok(())
}

#[inline]
pub fn leaky(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

/// `x` for `x >= 0`, `slope·x` otherwise. The derivative at 0 is taken as 1.
pub fn leaky_relu(x: &Matrix, slope: f64) -> Result<Matrix> {
    check_slope(slope)?;
    Ok(x.map(|v| leaky(v, slope)))
}

#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Matrix) -> Matrix {
    x.map(logistic)
}

/// Row-wise softmax of `x / temperature`, with the row maximum subtracted first.
pub fn softmax_rows(x: &Matrix, temperature: f64) -> Result<Matrix> {
    check_temperature(temperature)?;
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = libm::exp((*v - max) / temperature);
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    Ok(out)
}

/// Row-wise log-softmax of `x / temperature`.
pub fn log_softmax_rows(x: &Matrix, temperature: f64) -> Result<Matrix> {
    check_temperature(temperature)?;
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max) / temperature;
            total += libm::exp(*v);
        }
        let lse = libm::log(total);
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    Ok(out)
}
