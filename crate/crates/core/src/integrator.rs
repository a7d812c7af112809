//! Dormand-Prince 5(4) with PI step-size control and continuous output.
//!
//! Step control, error norm, initial step heuristic and the fifth-order
//! dense output follow Hairer, Nørsett and Wanner's DOPRI5.

use alloc::vec;
use alloc::vec::Vec;

use crate::{math, Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dopri5Options {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; chosen automatically when `None`.
    pub h_init: Option<f64>,
    pub h_max: Option<f64>,
    pub max_steps: usize,
    /// PI-controller weight of the previous error.
    pub beta: f64,
    pub safety: f64,
}

impl Default for Dopri5Options {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            h_init: None,
            h_max: None,
            max_steps: 10_000_000,
            beta: 0.04,
            safety: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Dopri5Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// States at the requested output times.
#[derive(Debug, Clone, PartialEq)]
pub struct Dopri5Output {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub stats: Dopri5Stats,
}

struct Stages {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
}

impl Stages {
    fn new(n: usize) -> Self {
        Self {
            k: core::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
        }
    }

    /// One Dormand-Prince step from `(t, y)` with `k[0] = f(t, y)` already
    /// set. Leaves the fifth-order solution in `y1` and `f(t+h, y1)` in `k[6]`.
    fn step<F: FnMut(f64, &[f64], &mut [f64])>(&mut self, f: &mut F, t: f64, y: &[f64], h: f64, y1: &mut [f64]) {
        let n = y.len();
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        let tmp = &mut self.tmp;
        for i in 0..n {
            tmp[i] = y[i] + h * A21 * k1[i];
        }
        f(t + C2 * h, tmp, k2);
        for i in 0..n {
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        f(t + C3 * h, tmp, k3);
        for i in 0..n {
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        f(t + C4 * h, tmp, k4);
        for i in 0..n {
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        f(t + C5 * h, tmp, k5);
        for i in 0..n {
            tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        f(t + h, tmp, k6);
        for i in 0..n {
            y1[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        f(t + h, y1, k7);
    }

    fn error_norm(&self, y: &[f64], y1: &[f64], h: f64, opts: &Dopri5Options) -> f64 {
        let [k1, _, k3, k4, k5, k6, k7] = &self.k;
        let n = y.len();
        let mut sum = 0.0;
        for i in 0..n {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sk = opts.atol + opts.rtol * y[i].abs().max(y1[i].abs());
            sum += (e / sk) * (e / sk);
        }
        math::sqrt(sum / n.max(1) as f64)
    }

    /// Coefficients of the continuous extension on `[t, t+h]`.
    fn dense(&self, y: &[f64], y1: &[f64], h: f64) -> [Vec<f64>; 5] {
        let [k1, _, k3, k4, k5, k6, k7] = &self.k;
        let n = y.len();
        let mut r: [Vec<f64>; 5] = core::array::from_fn(|_| vec![0.0; n]);
        for i in 0..n {
            let dy = y1[i] - y[i];
            let bspl = h * k1[i] - dy;
            r[0][i] = y[i];
            r[1][i] = dy;
            r[2][i] = bspl;
            r[3][i] = dy - h * k7[i] - bspl;
            r[4][i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
        }
        r
    }
}

fn eval_dense(r: &[Vec<f64>; 5], theta: f64) -> Vec<f64> {
    let th1 = 1.0 - theta;
    (0..r[0].len())
        .map(|i| r[0][i] + theta * (r[1][i] + th1 * (r[2][i] + theta * (r[3][i] + th1 * r[4][i]))))
        .collect()
}

fn initial_step<F: FnMut(f64, &[f64], &mut [f64])>(
    f: &mut F,
    t: f64,
    y: &[f64],
    f0: &[f64],
    h_max: f64,
    opts: &Dopri5Options,
) -> f64 {
    let n = y.len().max(1) as f64;
    let sk: Vec<f64> = y.iter().map(|v| opts.atol + opts.rtol * v.abs()).collect();
    let dnf = f0.iter().zip(&sk).map(|(f, s)| (f / s) * (f / s)).sum::<f64>() / n;
    let dny = y.iter().zip(&sk).map(|(v, s)| (v / s) * (v / s)).sum::<f64>() / n;
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
        1e-6
    } else {
        math::sqrt(dny / dnf) * 0.01
    };
    h = h.min(h_max);
    let y1: Vec<f64> = y.iter().zip(f0).map(|(v, d)| v + h * d).collect();
    let mut f1 = vec![0.0; y.len()];
    f(t + h, &y1, &mut f1);
    let der2 = math::sqrt(
        f1.iter()
            .zip(f0)
            .zip(&sk)
            .map(|((a, b), s)| ((a - b) / s) * ((a - b) / s))
            .sum::<f64>()
            / n,
    ) / h;
    let der12 = der2.abs().max(math::sqrt(dnf));
    let h1 = if der12 <= 1e-15 {
        (h * 1e-3).max(1e-6)
    } else {
        libm::pow(0.01 / der12, 0.2)
    };
    (100.0 * h).min(h1).min(h_max)
}

/// Integrates `y' = f(t, y)` from `t0` to `t_end`, returning the solution at
/// each of `sample_times` (ascending, within `[t0, t_end]`). `on_step` sees
/// every accepted step's end point.
pub fn integrate<F, S>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    sample_times: &[f64],
    opts: &Dopri5Options,
    mut on_step: S,
) -> Result<Dopri5Output>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    S: FnMut(f64, &[f64]) -> Result<()>,
{
    if !(t_end > t0) {
        return Err(Error::InvalidParameter {
            name: "t_end",
            reason: alloc::format!("must exceed t0 = {t0}, got {t_end}"),
        });
    }
    if !(opts.rtol > 0.0 && opts.atol >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "tolerances",
            reason: "rtol must be positive and atol nonnegative".into(),
        });
    }
    if sample_times.windows(2).any(|w| w[1] < w[0]) || sample_times.iter().any(|&s| s < t0 || s > t_end) {
        return Err(Error::InvalidParameter {
            name: "sample_times",
            reason: "must be ascending and lie within [t0, t_end]".into(),
        });
    }
    let n = y0.len();
    let h_max = opts.h_max.unwrap_or(t_end - t0).min(t_end - t0);
    let mut stats = Dopri5Stats::default();
    let mut st = Stages::new(n);
    let mut y = y0.to_vec();
    let mut y1 = vec![0.0; n];
    let mut t = t0;
    f(t, &y, &mut st.k[0]);
    stats.evaluations += 1;

    let mut out = Dopri5Output {
        times: Vec::with_capacity(sample_times.len()),
        states: Vec::with_capacity(sample_times.len()),
        stats,
    };
    let mut next = 0;
    while next < sample_times.len() && sample_times[next] <= t0 {
        out.times.push(sample_times[next]);
        out.states.push(y.clone());
        next += 1;
    }

    let mut h = match opts.h_init {
        Some(h) => h.min(h_max),
        None => {
            stats.evaluations += 1;
            let k0 = st.k[0].clone();
            initial_step(&mut f, t, &y, &k0, h_max, opts)
        }
    };
    let expo1 = 0.2 - opts.beta * 0.75;
    let (facc1, facc2) = (1.0 / 0.2, 1.0 / 10.0);
    let mut facold: f64 = 1e-4;
    let mut last_rejected = false;
    let mut steps = 0;

    loop {
        if steps >= opts.max_steps {
            return Err(Error::TooManySteps(opts.max_steps));
        }
        if 0.1 * h.abs() <= t.abs() * f64::EPSILON || h <= 0.0 {
            return Err(Error::StepSizeUnderflow { t, h, state: y });
        }
        let last = t + 1.01 * h >= t_end;
        if last {
            h = t_end - t;
        }
        steps += 1;
        st.step(&mut f, t, &y, h, &mut y1);
        stats.evaluations += 6;
        let err = st.error_norm(&y, &y1, h, opts);
        let fac11 = if err.is_finite() {
            libm::pow(err, expo1)
        } else {
            f64::INFINITY
        };
        if err.is_finite() && err <= 1.0 {
            let fac =
                (fac11 / libm::pow(facold, opts.beta)).clamp(facc2 * opts.safety, facc1 * opts.safety) / opts.safety;
            facold = err.max(1e-4);
            stats.accepted += 1;
            let t_new = if last { t_end } else { t + h };
            if next < sample_times.len() && sample_times[next] <= t_new {
                let r = st.dense(&y, &y1, h);
                while next < sample_times.len() && sample_times[next] <= t_new {
                    let theta = ((sample_times[next] - t) / h).clamp(0.0, 1.0);
                    out.times.push(sample_times[next]);
                    out.states.push(if theta == 1.0 {
                        y1.clone()
                    } else {
                        eval_dense(&r, theta)
                    });
                    next += 1;
                }
            }
            core::mem::swap(&mut y, &mut y1);
            let (head, tail) = st.k.split_at_mut(6);
            core::mem::swap(&mut head[0], &mut tail[0]);
            t = t_new;
            on_step(t, &y)?;
            if last {
                break;
            }
            let mut h_new = (h / fac).min(h_max);
            if last_rejected {
                h_new = h_new.min(h);
            }
            last_rejected = false;
            h = h_new;
        } else {
            stats.rejected += 1;
            last_rejected = true;
            let shrink = if fac11.is_finite() {
                facc1.min(fac11 / opts.safety)
            } else {
                facc1
            };
            h /= shrink;
        }
    }
    out.stats = stats;
    Ok(out)
}

/// Fixed-step Dormand-Prince (fifth-order solution), for order studies.
pub fn integrate_fixed<F>(mut f: F, t0: f64, y0: &[f64], t_end: f64, steps: usize) -> Vec<f64>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let h = (t_end - t0) / steps as f64;
    let mut st = Stages::new(n);
    let mut y = y0.to_vec();
    let mut y1 = vec![0.0; n];
    f(t0, &y, &mut st.k[0]);
    for s in 0..steps {
        let t = t0 + s as f64 * h;
        st.step(&mut f, t, &y, h, &mut y1);
        core::mem::swap(&mut y, &mut y1);
        let (head, tail) = st.k.split_at_mut(6);
        core::mem::swap(&mut head[0], &mut tail[0]);
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    // y' = [[-2, 10], [-10, -2]] y has y(t) = e^{-2t} R(-10t) y0
    fn spiral(_: f64, y: &[f64], dy: &mut [f64]) {
        dy[0] = -2.0 * y[0] + 10.0 * y[1];
        dy[1] = -10.0 * y[0] - 2.0 * y[1];
    }

    fn spiral_exact(t: f64) -> [f64; 2] {
        let d = math::exp(-2.0 * t);
        [d * math::cos(10.0 * t), -d * math::sin(10.0 * t)]
    }

    #[test]
    fn fixed_step_is_fifth_order() {
        let exact = spiral_exact(2.0);
        let err = |steps| {
            let y = integrate_fixed(spiral, 0.0, &[1.0, 0.0], 2.0, steps);
            ((y[0] - exact[0]).powi(2) + (y[1] - exact[1]).powi(2)).sqrt()
        };
        let mut prev = err(100);
        for steps in [200, 400] {
            let e = err(steps);
            let order = (prev / e).log2();
            assert!((order - 5.0).abs() < 0.3, "observed order {order}");
            prev = e;
        }
    }

    #[test]
    fn adaptive_meets_tolerance() {
        let samples: Vec<f64> = (0..=20).map(|i| 0.1 * i as f64).collect();
        let opts = Dopri5Options {
            rtol: 1e-10,
            atol: 1e-12,
            ..Default::default()
        };
        let out = integrate(spiral, 0.0, &[1.0, 0.0], 2.0, &samples, &opts, |_, _| Ok(())).unwrap();
        assert_eq!(out.states.len(), samples.len());
        for (t, y) in out.times.iter().zip(&out.states) {
            let e = spiral_exact(*t);
            assert!((y[0] - e[0]).abs() < 1e-8 && (y[1] - e[1]).abs() < 1e-8, "t = {t}");
        }
        assert!(out.stats.accepted > 10);
    }

    #[test]
    fn dense_output_is_accurate_between_steps() {
        // few large steps, many samples inside each
        let samples: Vec<f64> = (0..=1000).map(|i| 0.002 * i as f64).collect();
        let opts = Dopri5Options {
            rtol: 1e-7,
            atol: 1e-9,
            ..Default::default()
        };
        let out = integrate(spiral, 0.0, &[1.0, 0.0], 2.0, &samples, &opts, |_, _| Ok(())).unwrap();
        assert!(out.stats.accepted < samples.len() / 4, "{}", out.stats.accepted);
        let worst = out
            .times
            .iter()
            .zip(&out.states)
            .map(|(t, y)| {
                let e = spiral_exact(*t);
                (y[0] - e[0]).abs().max((y[1] - e[1]).abs())
            })
            .fold(0.0, f64::max);
        assert!(worst < 1e-5, "{worst}");
    }

    #[test]
    fn blow_up_reports_step_underflow() {
        // y' = y², y(0) = 1 blows up at t = 1
        let res = integrate(
            |_, y: &[f64], dy: &mut [f64]| dy[0] = y[0] * y[0],
            0.0,
            &[1.0],
            2.0,
            &[2.0],
            &Dopri5Options::default(),
            |_, _| Ok(()),
        );
        assert!(matches!(
            res,
            Err(Error::StepSizeUnderflow { .. }) | Err(Error::TooManySteps(_))
        ));
    }

    #[test]
    fn rejects_bad_sample_times() {
        let res = integrate(
            spiral,
            0.0,
            &[1.0, 0.0],
            1.0,
            &[0.5, 0.2],
            &Dopri5Options::default(),
            |_, _| Ok(()),
        );
        assert!(res.is_err());
    }

    #[test]
    fn step_callback_sees_every_accepted_step() {
        let mut count = 0;
        let out = integrate(
            spiral,
            0.0,
            &[1.0, 0.0],
            1.0,
            &[1.0],
            &Dopri5Options::default(),
            |_, _| {
                count += 1;
                Ok(())
            },
        )
        .unwrap();
        assert_eq!(count, out.stats.accepted);
    }
}
