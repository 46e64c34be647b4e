use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CumulantLagPair {
    pub k1: i64,
    pub k2: i64,
}

impl CumulantLagPair {
    pub fn new(k1: i64, k2: i64) -> Self {
        Self { k1, k2 }
    }
}

/// Biased third-order cumulant estimate `(1/N) Σ x[n] x[n+k1] x[n+k2]` of the
/// mean-removed frame. Products that would index outside the frame are
/// dropped, the normalization stays `1/N`.
pub fn third_order_cumulant(frame: &[f64], lags: CumulantLagPair) -> Result<f64> {
    let n = frame.len();
    let reach = lags.k1.unsigned_abs().max(lags.k2.unsigned_abs()) as usize;
    if n == 0 || n < reach + 1 {
        return Err(Error::LagOutOfRange {
            k1: lags.k1,
            k2: lags.k2,
            len: n,
        });
    }
    let mean = frame.iter().sum::<f64>() / n as f64;
    let x: Vec<f64> = frame.iter().map(|v| v - mean).collect();

    // valid i: 0 <= i, i + k1, i + k2 < n
    let lo = 0i64.max(-lags.k1).max(-lags.k2);
    let hi = (n as i64).min(n as i64 - lags.k1).min(n as i64 - lags.k2);
    let mut acc = 0.0;
    for i in lo..hi {
        let a = x[i as usize];
        let b = x[(i + lags.k1) as usize];
        let c = x[(i + lags.k2) as usize];
        // b * c is exactly commutative, so exchanging the lags is bit-exact
        acc += a * (b * c);
    }
    Ok(acc / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_frame() {
        let f = vec![0.0; 16];
        for (a, b) in [(0, 0), (3, -2), (15, 15)] {
            assert_eq!(
                third_order_cumulant(&f, CumulantLagPair::new(a, b)).unwrap(),
                0.0
            );
        }
    }

    #[test]
    fn ramp_at_zero_lag() {
        // mean-removed {1,2,3,4} is symmetric about zero, so Σx³ = 0
        let c = third_order_cumulant(&[1.0, 2.0, 3.0, 4.0], CumulantLagPair::new(0, 0)).unwrap();
        assert_eq!(c, 0.0);
    }

    #[test]
    fn skewed_frame_matches_direct_sum() {
        let f = [0.0, 0.0, 0.0, 4.0];
        // x̃ = {-1,-1,-1,3}: (1/4)(-1-1-1+27) = 6
        let c = third_order_cumulant(&f, CumulantLagPair::new(0, 0)).unwrap();
        assert!((c - 6.0).abs() < 1e-12);
    }

    #[test]
    fn lag_bounds() {
        let f = [1.0, 2.0, 3.0, 4.0];
        assert!(third_order_cumulant(&f, CumulantLagPair::new(3, -3)).is_ok());
        assert!(matches!(
            third_order_cumulant(&f, CumulantLagPair::new(4, 0)),
            Err(Error::LagOutOfRange {
                k1: 4,
                k2: 0,
                len: 4
            })
        ));
        assert!(third_order_cumulant(&[], CumulantLagPair::new(0, 0)).is_err());
    }

    #[test]
    fn lag_exchange_symmetry() {
        let f: Vec<f64> = (0..50).map(|i| ((i * 7919) % 31) as f64 / 31.0).collect();
        for (a, b) in [(1, 4), (-3, 7), (0, -12)] {
            let x = third_order_cumulant(&f, CumulantLagPair::new(a, b)).unwrap();
            let y = third_order_cumulant(&f, CumulantLagPair::new(b, a)).unwrap();
            assert_eq!(x, y);
        }
    }
}
