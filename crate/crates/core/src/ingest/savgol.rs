//! Savitzky-Golay convolution weights.
//!
//! A window of `2m + 1` samples is fitted by a least-squares polynomial of
//! the given order; the weights below evaluate that polynomial (or one of
//! its derivatives) at any offset inside the window. Interior samples use
//! the centred window; the first and last `m` samples reuse the edge window
//! evaluated off-centre.

use nalgebra::DMatrix;

#[derive(Debug, Clone)]
pub struct SavGolKernel {
    half: usize,
    order: usize,
    /// Pseudo-inverse of the Vandermonde matrix, `(order + 1) x window`.
    /// Row `j` maps window samples to the coefficient of `s^j`.
    fit: DMatrix<f64>,
}

impl SavGolKernel {
    /// `window` must be odd and greater than `order`.
    pub fn new(window: usize, order: usize) -> Option<Self> {
        if window.is_multiple_of(2) || window < 3 || order >= window {
            return None;
        }
        let half = window / 2;
        let vander = DMatrix::from_fn(window, order + 1, |i, j| {
            (i as f64 - half as f64).powi(j as i32)
        });
        let fit = vander.svd(true, true).pseudo_inverse(1e-12).ok()?;
        Some(Self { half, order, fit })
    }

    pub fn window(&self) -> usize {
        2 * self.half + 1
    }

    pub fn half(&self) -> usize {
        self.half
    }

    /// Weights for the `deriv`-th derivative (in sample units) at window
    /// offset `s` in `[-m, m]`.
    pub fn weights(&self, deriv: usize, s: i64) -> Vec<f64> {
        let s = s as f64;
        let mut w = vec![0.0; self.window()];
        for j in deriv..=self.order {
            // d^deriv/ds^deriv s^j = j!/(j-deriv)! s^(j-deriv)
            let falling: f64 = ((j - deriv + 1)..=j).map(|q| q as f64).product();
            let scale = falling * s.powi((j - deriv) as i32);
            if scale == 0.0 {
                continue;
            }
            for (wi, fi) in w.iter_mut().zip(self.fit.row(j).iter()) {
                *wi += scale * fi;
            }
        }
        w
    }

    /// Applies the filter to a whole signal sampled every `dt`, returning the
    /// `deriv`-th derivative in physical units. The signal must be at least
    /// one window long.
    pub fn apply(&self, signal: &[f64], deriv: usize, dt: f64) -> Vec<f64> {
        let n = signal.len();
        let win = self.window();
        assert!(n >= win, "signal shorter than the smoothing window");
        let m = self.half;
        let unit = dt.powi(deriv as i32);
        let centre = self.weights(deriv, 0);
        let dot = |w: &[f64], start: usize| -> f64 {
            w.iter().zip(&signal[start..start + win]).map(|(a, b)| a * b).sum::<f64>() / unit
        };
        let mut out = vec![0.0; n];
        for (i, o) in out.iter_mut().enumerate() {
            *o = if i < m {
                dot(&self.weights(deriv, i as i64 - m as i64), 0)
            } else if i + m >= n {
                let start = n - win;
                dot(&self.weights(deriv, (i - start) as i64 - m as i64), start)
            } else {
                dot(&centre, i - m)
            };
        }
        out
    }
}
