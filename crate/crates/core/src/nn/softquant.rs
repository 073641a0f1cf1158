//! Differentiable staircase: a sum of sigmoids approximating the hard
//! mid-rise quantizer on [0, 1].
//!
//! ```text
//! G(x, B, beta) = (0.5 + sum_{k=1}^{2^B} sigmoid(beta * (2^B * x - k))) / 2^B
//! ```
//!
//! As beta grows, G converges to the staircase of level (k + 0.5) / 2^B on
//! the k-th cell, which is exactly `hard_dequant(hard_quant(x))`. G is
//! defined and monotone on all of R; training uses its analytic derivative
//! in place of the non-differentiable quantize/dequantize pair.

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Evaluates the surrogate and its exact x-derivative.
///
/// `bits` must be in 1..=16 and `beta > 0` (checked by the network spec);
/// inputs outside [0, 1] are allowed.
pub fn soft_quant(x: f64, bits: u8, beta: f64) -> (f64, f64) {
    let levels = 1u32 << bits;
    let scaled = levels as f64 * x;
    let mut sum = 0.5;
    let mut deriv = 0.0;
    for k in 1..=levels {
        let s = sigmoid(beta * (scaled - k as f64));
        sum += s;
        deriv += s * (1.0 - s);
    }
    (sum / levels as f64, beta * deriv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantize::{hard_dequant, hard_quant};

    #[test]
    fn midpoint_is_a_fixed_point() {
        let (v, _) = soft_quant(0.5, 3, 500.0);
        assert_eq!(v, 0.5);
    }

    #[test]
    fn sharp_surrogate_matches_hard_levels() {
        let (v, _) = soft_quant(0.3, 3, 500.0);
        assert!((v - 0.3125).abs() <= 1e-6, "got {v}");
        assert_eq!(hard_dequant(hard_quant(0.3, 3), 3), 0.3125);
    }

    #[test]
    fn derivative_matches_central_difference() {
        let h = 1e-6;
        let (x, bits, beta) = (0.37, 3u8, 30.0);
        let (_, analytic) = soft_quant(x, bits, beta);
        let (fp, _) = soft_quant(x + h, bits, beta);
        let (fm, _) = soft_quant(x - h, bits, beta);
        let numeric = (fp - fm) / (2.0 * h);
        let rel = (analytic - numeric).abs() / numeric.abs().max(analytic.abs());
        assert!(rel <= 1e-8, "rel error {rel}");
    }

    #[test]
    fn monotone_on_dense_grid() {
        for beta in [1.0, 30.0, 500.0] {
            let mut prev = f64::NEG_INFINITY;
            for i in 0..=10_000 {
                let x = i as f64 / 10_000.0;
                let (v, d) = soft_quant(x, 3, beta);
                assert!(v >= prev, "beta={beta} x={x}");
                assert!(d >= 0.0);
                prev = v;
            }
        }
    }

    #[test]
    fn staircase_sharpens_with_beta() {
        // Max deviation from the hard staircase over [0, 1] outside the
        // breakpoint transition zones. The zones are sized by the smoother
        // curve (+-1/(2*30) around each breakpoint k/8) and shared by both
        // curves: at the edge of a +-1/(2*beta) zone the deviation is
        // sigmoid(-2^B/2)/2^B for every beta, so only a common region makes
        // the curves comparable.
        let bits = 3u8;
        let guard = 1.0 / (2.0 * 30.0);
        let max_dev = |beta: f64| -> f64 {
            let mut worst = 0.0f64;
            for i in 0..=100_000 {
                let x = i as f64 / 100_000.0;
                let near_break = (1..=8).any(|k| (x - k as f64 / 8.0).abs() < guard);
                if near_break {
                    continue;
                }
                let (v, _) = soft_quant(x, bits, beta);
                worst = worst.max((v - hard_dequant(hard_quant(x, bits), bits)).abs());
            }
            worst
        };
        let at_30 = max_dev(30.0);
        let at_500 = max_dev(500.0);
        assert!(at_500 < at_30, "expected sharpening: {at_500} !< {at_30}");
        assert!(at_500 <= 1e-3, "beta=500 deviation {at_500}");
    }
}
