//! Two-dimensional frequency-domain smoothing stencils for bispectral grids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default Rao-Gabr bandwidth, in grid points.
pub const DEFAULT_BANDWIDTH: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothingKind {
    RaoGabr,
    None,
}

/// Serialized form of a [`SmoothingWindow`]; the taps are rebuilt on load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmoothingDescriptor {
    pub kind: SmoothingKind,
    pub bandwidth: usize,
}

/// A unit-sum, nonnegative weight stencil over bifrequency offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SmoothingDescriptor", into = "SmoothingDescriptor")]
pub struct SmoothingWindow {
    pub kind: SmoothingKind,
    pub bandwidth: usize,
    taps: Vec<(isize, isize, f64)>,
}

impl TryFrom<SmoothingDescriptor> for SmoothingWindow {
    type Error = Error;

    fn try_from(d: SmoothingDescriptor) -> Result<Self> {
        Self::from_descriptor(d.kind, d.bandwidth)
    }
}

impl From<SmoothingWindow> for SmoothingDescriptor {
    fn from(w: SmoothingWindow) -> Self {
        w.descriptor()
    }
}

impl SmoothingWindow {
    /// Identity smoothing.
    pub fn none() -> Self {
        Self {
            kind: SmoothingKind::None,
            bandwidth: 1,
            taps: vec![(0, 0, 1.0)],
        }
    }

    /// Rebuilds the stencil from its descriptor (the taps are not serialized).
    pub fn from_descriptor(kind: SmoothingKind, bandwidth: usize) -> Result<Self> {
        match kind {
            SmoothingKind::None => Ok(Self::none()),
            SmoothingKind::RaoGabr => rao_gabr_window(bandwidth),
        }
    }

    pub fn descriptor(&self) -> SmoothingDescriptor {
        SmoothingDescriptor {
            kind: self.kind,
            bandwidth: self.bandwidth,
        }
    }

    /// `(d1, d2, weight)` triples.
    pub fn taps(&self) -> &[(isize, isize, f64)] {
        &self.taps
    }

    pub fn radius(&self) -> usize {
        self.taps()
            .iter()
            .map(|&(d, e, _)| d.unsigned_abs().max(e.unsigned_abs()))
            .max()
            .unwrap_or(0)
    }

    pub fn weight(&self, d1: isize, d2: isize) -> f64 {
        self.taps()
            .iter()
            .find(|&&(d, e, _)| d == d1 && e == d2)
            .map_or(0.0, |&(_, _, w)| w)
    }

    pub fn max_weight(&self) -> f64 {
        self.taps.iter().fold(0.0, |m, t| m.max(t.2))
    }

    /// The stencil's support with every weight raised to the maximum weight.
    /// It dominates the stencil pointwise and agrees with it at the centre.
    pub fn flat_envelope(&self) -> Vec<(isize, isize, f64)> {
        let w = self.max_weight();
        self.taps.iter().map(|&(d1, d2, _)| (d1, d2, w)).collect()
    }

    /// Convolves a symmetric `dim x dim` grid with the stencil, treating
    /// points outside the grid as zero. Only the lower triangle is computed;
    /// the upper one is mirrored so symmetry is exact.
    pub fn apply<T>(&self, grid: &[T], dim: usize) -> Vec<T>
    where
        T: Copy + Default + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
    {
        apply_taps(self.taps(), grid, dim)
    }
}

/// [`SmoothingWindow::apply`] for an arbitrary point-symmetric tap list.
pub fn apply_taps<T>(taps: &[(isize, isize, f64)], grid: &[T], dim: usize) -> Vec<T>
where
    T: Copy + Default + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
{
    debug_assert_eq!(grid.len(), dim * dim);
    if taps.len() == 1 && taps[0] == (0, 0, 1.0) {
        return grid.to_vec();
    }
    let mut out = vec![T::default(); dim * dim];
    for m in 0..dim {
        for n in 0..=m {
            let mut acc = T::default();
            for &(d1, d2, w) in taps {
                let (i, j) = (m as isize + d1, n as isize + d2);
                if i < 0 || j < 0 || i >= dim as isize || j >= dim as isize {
                    continue;
                }
                acc = acc + grid[i as usize * dim + j as usize] * w;
            }
            out[m * dim + n] = acc;
            out[n * dim + m] = acc;
        }
    }
    out
}

/// Discrete Rao-Gabr optimal window on a hexagonal support of radius
/// `bandwidth / 2`, weights proportional to `1 - (d1² + d2² + d1·d2)/(r+1)²`.
pub fn rao_gabr_window(bandwidth: usize) -> Result<SmoothingWindow> {
    if bandwidth == 0 {
        return Err(Error::ParameterOutOfRange(
            "smoothing bandwidth must be >= 1".into(),
        ));
    }
    let r = (bandwidth / 2) as isize;
    let scale = ((r + 1) * (r + 1)) as f64;
    let mut taps = Vec::new();
    for d1 in -r..=r {
        for d2 in -r..=r {
            if d1.abs() + d2.abs() + (d1 + d2).abs() > 2 * r {
                continue;
            }
            let q = (d1 * d1 + d2 * d2 + d1 * d2) as f64;
            taps.push((d1, d2, 1.0 - q / scale));
        }
    }
    let total: f64 = taps.iter().map(|t| t.2).sum();
    for t in &mut taps {
        t.2 /= total;
    }
    Ok(SmoothingWindow {
        kind: SmoothingKind::RaoGabr,
        bandwidth,
        taps,
    })
}

impl Default for SmoothingWindow {
    fn default() -> Self {
        rao_gabr_window(DEFAULT_BANDWIDTH).expect("default bandwidth is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bandwidth_one_is_identity() {
        let w = rao_gabr_window(1).unwrap();
        assert_eq!(w.taps(), &[(0, 0, 1.0)]);
    }

    #[test]
    fn zero_bandwidth_rejected() {
        assert!(rao_gabr_window(0).is_err());
    }

    #[test]
    fn weights_are_normalized_and_nonnegative() {
        for bw in 1..=15 {
            let w = rao_gabr_window(bw).unwrap();
            let sum: f64 = w.taps().iter().map(|t| t.2).sum();
            assert!((sum - 1.0).abs() < 1e-12, "bw {bw}: {sum}");
            assert!(w.taps().iter().all(|t| t.2 >= 0.0));
        }
    }

    #[test]
    fn hexagonal_support() {
        let w = rao_gabr_window(3).unwrap();
        // radius-1 hexagon: centre plus six neighbours, no (1,1) or (-1,-1)
        assert_eq!(w.taps().len(), 7);
        assert_eq!(w.weight(1, 1), 0.0);
        assert!(w.weight(1, -1) > 0.0);
        assert_eq!(rao_gabr_window(5).unwrap().taps().len(), 19);
    }

    #[test]
    fn envelope_dominates_stencil() {
        let w = rao_gabr_window(5).unwrap();
        let env = w.flat_envelope();
        assert_eq!(env.len(), w.taps().len());
        for (&(d1, d2, a), &(e1, e2, b)) in w.taps().iter().zip(&env) {
            assert_eq!((d1, d2), (e1, e2));
            assert!(b >= a);
        }
        assert_eq!(w.weight(0, 0), w.max_weight());
    }

    #[test]
    fn delta_grid_reproduces_stencil() {
        let dim = 9;
        let c = 4;
        let mut grid = vec![0.0f64; dim * dim];
        grid[c * dim + c] = 1.0;
        let w = rao_gabr_window(3).unwrap();
        let out = w.apply(&grid, dim);
        // convolution with a delta: out(c+d) = w(-d), and the stencil is point-symmetric
        for i in 0..dim {
            for j in 0..dim {
                let (d1, d2) = (i as isize - c as isize, j as isize - c as isize);
                let expect = w.weight(-d1, -d2);
                assert!((out[i * dim + j] - expect).abs() < 1e-15, "({i},{j})");
            }
        }
    }
}
