//! Uniform periodic grid on the box [-L, L)^N, the carrier for fields,
//! grid weights and density measures.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, Real};

pub const MAX_DIM: usize = 3;

/// Node k along an axis sits at -L + k*h with h = 2L/n; the node set is
/// symmetric in the sense that it contains 0 and -L but not +L.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Grid<T> {
    dim: usize,
    n: usize,
    half_width: T,
}

impl<T: Real> Grid<T> {
    pub fn new(dim: usize, n: usize, half_width: T) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::invalid(format!(
                "grid dimension must be 1..={MAX_DIM}, got {dim}"
            )));
        }
        if n < 32 || !n.is_power_of_two() {
            return Err(Error::invalid(format!(
                "nodes per axis must be a power of two >= 32, got {n}"
            )));
        }
        if !(half_width > T::zero()) || !half_width.is_finite() {
            return Err(Error::invalid("grid half-width must be positive and finite"));
        }
        Ok(Grid { dim, n, half_width })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn nodes_per_axis(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn half_width(&self) -> T {
        self.half_width
    }

    /// Cell width h = 2L/n.
    #[inline]
    pub fn spacing(&self) -> T {
        lit::<T>(2.0) * self.half_width / from_usize(self.n)
    }

    /// Total node count n^dim.
    #[inline]
    pub fn node_count(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    /// Volume of one cell, h^dim.
    #[inline]
    pub fn cell_volume(&self) -> T {
        self.spacing().powi(self.dim as i32)
    }

    /// Coordinate of node k along one axis.
    #[inline]
    pub fn axis_coord(&self, k: usize) -> T {
        -self.half_width + from_usize::<T>(k) * self.spacing()
    }

    /// Decomposes a flat row-major node index (axis 0 slowest).
    #[inline]
    pub fn unravel(&self, flat: usize) -> [usize; MAX_DIM] {
        let mut idx = [0usize; MAX_DIM];
        let mut rem = flat;
        for axis in (0..self.dim).rev() {
            idx[axis] = rem % self.n;
            rem /= self.n;
        }
        idx
    }

    #[inline]
    pub fn ravel(&self, idx: &[usize]) -> usize {
        let mut flat = 0usize;
        for axis in 0..self.dim {
            flat = flat * self.n + idx[axis];
        }
        flat
    }

    /// Physical coordinates of a node; only the first `dim` entries are used.
    #[inline]
    pub fn node(&self, flat: usize) -> [T; MAX_DIM] {
        let idx = self.unravel(flat);
        let mut x = [T::zero(); MAX_DIM];
        for axis in 0..self.dim {
            x[axis] = self.axis_coord(idx[axis]);
        }
        x
    }

    /// Discrete frequency along one axis for FFT bin k, in the ordering
    /// 0, 1, .., n/2, -n/2+1, .., -1 scaled by the fundamental pi/L.
    /// Bin n/2 carries the positive Nyquist frequency.
    #[inline]
    pub fn frequency(&self, k: usize) -> T {
        let signed = if k <= self.n / 2 {
            k as isize
        } else {
            k as isize - self.n as isize
        };
        let fundamental = T::pi() / self.half_width;
        lit::<T>(signed as f64) * fundamental
    }

    /// Frequency vector for a flat spectral index; entries beyond `dim` are 0.
    #[inline]
    pub fn frequency_vector(&self, flat: usize) -> [T; MAX_DIM] {
        let idx = self.unravel(flat);
        let mut xi = [T::zero(); MAX_DIM];
        for axis in 0..self.dim {
            xi[axis] = self.frequency(idx[axis]);
        }
        xi
    }

    /// True when any axis bin equals n/2; odd symbols are zeroed there to
    /// keep real fields real (the Nyquist bin has no conjugate partner).
    #[inline]
    pub fn touches_nyquist(&self, flat: usize) -> bool {
        let idx = self.unravel(flat);
        (0..self.dim).any(|axis| idx[axis] == self.n / 2)
    }

    /// Grid with the same box and doubled resolution per axis.
    pub fn refined(&self) -> Result<Self> {
        Grid::new(self.dim, self.n * 2, self.half_width)
    }

    /// Nearest node index to a point (componentwise rounding, clamped to the
    /// box). Returns None when the point lies outside [-L, L).
    pub fn nearest_node(&self, x: &[T]) -> Option<usize> {
        let h = self.spacing();
        let mut idx = [0usize; MAX_DIM];
        for axis in 0..self.dim {
            if x[axis] < -self.half_width || x[axis] >= self.half_width {
                return None;
            }
            let k = ((x[axis] + self.half_width) / h).round();
            let k = k.to_usize().unwrap_or(0).min(self.n - 1);
            idx[axis] = k;
        }
        Some(self.ravel(&idx[..self.dim]))
    }

    /// Flat indices of nodes inside the open ball B(center, r), restricted
    /// to the box. Scans only the bounding index range per axis.
    pub fn nodes_in_ball(&self, center: &[T], r: T) -> Vec<usize> {
        let h = self.spacing();
        let mut lo = [0usize; MAX_DIM];
        let mut hi = [0usize; MAX_DIM];
        for axis in 0..self.dim {
            let a = ((center[axis] - r + self.half_width) / h).ceil();
            let b = ((center[axis] + r + self.half_width) / h).floor();
            if b < T::zero() || a > from_usize(self.n - 1) {
                return Vec::new();
            }
            let top = from_usize::<T>(self.n - 1);
            lo[axis] = a.clamp(T::zero(), top).to_usize().unwrap_or(0);
            hi[axis] = b.clamp(T::zero(), top).to_usize().unwrap_or(self.n - 1);
        }
        let r2 = r * r;
        let mut out = Vec::new();
        let mut idx = lo;
        loop {
            let mut d2 = T::zero();
            for axis in 0..self.dim {
                let d = self.axis_coord(idx[axis]) - center[axis];
                d2 += d * d;
            }
            if d2 < r2 {
                out.push(self.ravel(&idx[..self.dim]));
            }
            // odometer increment over the index box
            let mut axis = self.dim;
            loop {
                if axis == 0 {
                    return out;
                }
                axis -= 1;
                if idx[axis] < hi[axis] {
                    idx[axis] += 1;
                    break;
                }
                idx[axis] = lo[axis];
            }
        }
    }

    /// Multilinear interpolation weights: the 2^dim cell corners around x
    /// with their weights. Returns None outside the box.
    pub fn interp_stencil(&self, x: &[T]) -> Option<Vec<(usize, T)>> {
        let h = self.spacing();
        let mut base = [0usize; MAX_DIM];
        let mut frac = [T::zero(); MAX_DIM];
        for axis in 0..self.dim {
            if x[axis] < -self.half_width || x[axis] >= self.half_width {
                return None;
            }
            let t = (x[axis] + self.half_width) / h;
            let fl = t.floor();
            let k = fl.to_usize().unwrap_or(0).min(self.n - 1);
            base[axis] = k;
            frac[axis] = (t - fl).clamp(T::zero(), T::one());
        }
        let corners = 1usize << self.dim;
        let mut stencil = Vec::with_capacity(corners);
        for corner in 0..corners {
            let mut idx = [0usize; MAX_DIM];
            let mut weight = T::one();
            for axis in 0..self.dim {
                let hi = (corner >> axis) & 1 == 1;
                if hi {
                    // clamp at the upper box edge; the fractional weight
                    // vanishes there only if x sits exactly on the last node
                    idx[axis] = (base[axis] + 1).min(self.n - 1);
                    weight *= frac[axis];
                } else {
                    idx[axis] = base[axis];
                    weight *= T::one() - frac[axis];
                }
            }
            stencil.push((self.ravel(&idx[..self.dim]), weight));
        }
        Some(stencil)
    }
}
