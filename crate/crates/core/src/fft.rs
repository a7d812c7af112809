//! In-place radix-2 complex FFT with a precomputed twiddle table.

use crate::math;
use crate::C64;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[derive(Debug, Clone)]
pub(crate) struct FftPlan {
    n: usize,
    /// `e^{-2πik/n}` for `k < n/2`.
    twiddles: Vec<C64>,
}

impl FftPlan {
    pub(crate) fn new(n: usize) -> Self {
        assert!(n.is_power_of_two(), "FFT length must be a power of two");
        let twiddles = (0..n / 2)
            .map(|k| {
                let th = -2.0 * PI * k as f64 / n as f64;
                C64::new(math::cos(th), math::sin(th))
            })
            .collect();
        Self { n, twiddles }
    }

    pub(crate) fn len(&self) -> usize {
        self.n
    }

    /// `X_k = Σ_j x_j e^{-2πi jk/n}` (unnormalized).
    pub(crate) fn forward(&self, buf: &mut [C64]) {
        self.transform(buf, false);
    }

    /// `x_j = Σ_k X_k e^{2πi jk/n}` (unnormalized).
    pub(crate) fn inverse(&self, buf: &mut [C64]) {
        self.transform(buf, true);
    }

    fn transform(&self, buf: &mut [C64], conj: bool) {
        let n = self.n;
        assert_eq!(buf.len(), n);
        if n <= 1 {
            return;
        }
        let bits = n.trailing_zeros();
        for i in 0..n {
            let j = i.reverse_bits() >> (usize::BITS - bits);
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let stride = n / len;
            for start in (0..n).step_by(len) {
                for k in 0..half {
                    let w = self.twiddles[k * stride];
                    let w = if conj { w.conj() } else { w };
                    let a = buf[start + k];
                    let b = buf[start + k + half] * w;
                    buf[start + k] = a + b;
                    buf[start + k + half] = a - b;
                }
            }
            len <<= 1;
        }
    }
}
