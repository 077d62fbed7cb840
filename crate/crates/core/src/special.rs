//! Bessel functions of the first kind for integer order.
//!
//! Small arguments use the ascending power series. Everything else uses
//! Miller's backward recurrence normalized with `J_0 + 2 sum_k J_2k = 1`,
//! which keeps the absolute error near machine precision for `|x| <= 50`
//! and any order.

use crate::{Error, Result};

const SERIES_LIMIT: f64 = 2.0;
const RESCALE_THRESHOLD: f64 = 1e250;

/// `J_n(x)` for integer order `n >= 0`.
pub fn bessel_jn(n: u32, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("bessel_jn: non-finite argument {x}")));
    }
    if x == 0.0 {
        return Ok(if n == 0 { 1.0 } else { 0.0 });
    }
    let ax = x.abs();
    let value = if ax <= SERIES_LIMIT {
        series(n, ax)
    } else {
        miller(n, ax)
    };
    // J_n(-x) = (-1)^n J_n(x)
    Ok(if x < 0.0 && n % 2 == 1 { -value } else { value })
}

fn series(n: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut term = 1.0;
    for i in 1..=n {
        term *= half / f64::from(i);
    }
    if term == 0.0 {
        return 0.0;
    }
    let q = -half * half;
    let mut sum = term;
    let nf = f64::from(n);
    for k in 1..200 {
        let kf = f64::from(k);
        term *= q / (kf * (kf + nf));
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

fn miller(n: u32, x: f64) -> f64 {
    let top = n.max(x.ceil() as u32);
    let mut start = top + 20 + (60.0 * f64::from(top)).sqrt().ceil() as u32;
    if start % 2 == 1 {
        start += 1;
    }
    let two_over_x = 2.0 / x;

    let mut j_next = 0.0;
    let mut j = 1.0;
    let mut norm = if start % 2 == 0 { 2.0 * j } else { 0.0 };
    let mut wanted = if start == n { j } else { 0.0 };

    for k in (1..=start).rev() {
        let j_prev = f64::from(k) * two_over_x * j - j_next;
        j_next = j;
        j = j_prev;
        let idx = k - 1;
        if idx == n {
            wanted = j;
        }
        if idx > 0 && idx % 2 == 0 {
            norm += 2.0 * j;
        }
        if j.abs() > RESCALE_THRESHOLD {
            let s = 1.0 / RESCALE_THRESHOLD;
            j *= s;
            j_next *= s;
            norm *= s;
            wanted *= s;
        }
    }
    norm += j;
    wanted / norm
}
