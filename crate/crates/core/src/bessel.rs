//! Modified Bessel functions of the first kind, orders 0 and 1.
//!
//! The power series has only positive terms, so it is used up to `|x| = 20`;
//! beyond that the Hankel asymptotic expansion of `e^{-x} I_ν(x)` is accurate
//! to well below `1e-15`.

use crate::math;
use core::f64::consts::PI;

const SERIES_LIMIT: f64 = 20.0;

/// `I_order(x)` for `order ∈ {0, 1}`.
///
/// # Panics
/// On any other order.
pub fn bessel_i(order: u32, x: f64) -> f64 {
    let ax = x.abs();
    let v = if ax <= SERIES_LIMIT {
        series(order, ax)
    } else {
        math::exp(ax) * asymptotic_scaled(order, ax)
    };
    if order == 1 && x < 0.0 {
        -v
    } else {
        v
    }
}

/// Exponentially scaled `e^{-|x|} I_order(x)`, finite for all `x`.
pub fn bessel_i_scaled(order: u32, x: f64) -> f64 {
    let ax = x.abs();
    let v = if ax <= SERIES_LIMIT {
        math::exp(-ax) * series(order, ax)
    } else {
        asymptotic_scaled(order, ax)
    };
    if order == 1 && x < 0.0 {
        -v
    } else {
        v
    }
}

/// `I_1(x) / I_0(x)`: the mean of `cos θ` under the density `∝ e^{x cos θ}`.
pub fn bessel_ratio(x: f64) -> f64 {
    bessel_i_scaled(1, x) / bessel_i_scaled(0, x)
}

fn series(order: u32, x: f64) -> f64 {
    assert!(order <= 1, "only orders 0 and 1 are supported");
    let q = 0.25 * x * x;
    let mut term = if order == 0 { 1.0 } else { 0.5 * x };
    let mut sum = term;
    let nu = f64::from(order);
    let mut m = 1.0;
    while term > 1e-17 * sum {
        term *= q / (m * (m + nu));
        sum += term;
        m += 1.0;
    }
    sum
}

fn asymptotic_scaled(order: u32, x: f64) -> f64 {
    assert!(order <= 1, "only orders 0 and 1 are supported");
    let mu = 4.0 * f64::from(order * order);
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        let odd = 2.0 * k - 1.0;
        let next = -term * (mu - odd * odd) / (k * 8.0 * x);
        if next.abs() >= term.abs() || next.abs() < 1e-17 {
            break;
        }
        sum += next;
        term = next;
        k += 1.0;
    }
    sum / math::sqrt(2.0 * PI * x)
}
