//! Small dense complex linear algebra helpers shared by the symbol
//! computations: ranges, kernels and subspace intersections with a uniform
//! rank tolerance. Matrices here are tiny (operator fibers), so SVD cost is
//! irrelevant; everything favors robustness.

use nalgebra::DMatrix;
use num_complex::Complex;

use crate::scalar::{lit, Real};

/// Singular values below RANK_TOL * sigma_max count as zero.
pub const RANK_TOL: f64 = 1e-10;

pub fn singular_values<T: Real>(a: &DMatrix<Complex<T>>) -> Vec<T> {
    a.clone().svd(false, false).singular_values.iter().copied().collect()
}

pub fn smallest_singular_value<T: Real>(a: &DMatrix<Complex<T>>) -> T {
    // thin SVD yields min(rows, cols) values, the full set for rows >= cols
    singular_values(a)
        .into_iter()
        .reduce(|acc, s| if s < acc { s } else { acc })
        .unwrap_or_else(T::zero)
}

pub fn spectral_norm<T: Real>(a: &DMatrix<Complex<T>>) -> T {
    singular_values(a)
        .into_iter()
        .fold(T::zero(), |acc, s| if s > acc { s } else { acc })
}

fn rank_cutoff<T: Real>(sv: &[T]) -> T {
    let max = sv.iter().copied().fold(T::zero(), |a, b| if b > a { b } else { a });
    lit::<T>(RANK_TOL) * max
}

pub fn rank<T: Real>(a: &DMatrix<Complex<T>>) -> usize {
    let sv = singular_values(&pad_to_tall(a));
    let cut = rank_cutoff(&sv);
    sv.iter().filter(|s| **s > cut).count()
}

/// Orthonormal basis of the column space (columns with sigma above cutoff).
pub fn range_basis<T: Real>(a: &DMatrix<Complex<T>>) -> DMatrix<Complex<T>> {
    let rows = a.nrows();
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("svd with u");
    let sv: Vec<T> = svd.singular_values.iter().copied().collect();
    let cut = rank_cutoff(&sv);
    let keep: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] > cut).collect();
    let mut basis = DMatrix::zeros(rows, keep.len());
    for (out, &i) in keep.iter().enumerate() {
        basis.set_column(out, &u.column(i));
    }
    basis
}

/// Zero-pads with extra rows so the thin SVD exposes the full right factor;
/// needed to read kernels of wide matrices.
fn pad_to_tall<T: Real>(a: &DMatrix<Complex<T>>) -> DMatrix<Complex<T>> {
    if a.nrows() >= a.ncols() {
        return a.clone();
    }
    let mut padded = DMatrix::zeros(a.ncols(), a.ncols());
    padded.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    padded
}

/// Orthonormal basis of the null space.
pub fn kernel_basis<T: Real>(a: &DMatrix<Complex<T>>) -> DMatrix<Complex<T>> {
    let cols = a.ncols();
    let padded = pad_to_tall(a);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("svd with v_t");
    let sv: Vec<T> = svd.singular_values.iter().copied().collect();
    let cut = rank_cutoff(&sv);
    let keep: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] <= cut).collect();
    let mut basis = DMatrix::zeros(cols, keep.len());
    for (out, &i) in keep.iter().enumerate() {
        for c in 0..cols {
            basis[(c, out)] = v_t[(i, c)].conj();
        }
    }
    basis
}

/// Intersection of two subspaces given by orthonormal column bases.
/// Solves [U, -V] (a; b)^T = 0 and maps the a-part through U.
pub fn intersect_subspaces<T: Real>(
    u: &DMatrix<Complex<T>>,
    v: &DMatrix<Complex<T>>,
) -> DMatrix<Complex<T>> {
    let rows = u.nrows();
    assert_eq!(rows, v.nrows(), "subspaces of a common ambient space");
    if u.ncols() == 0 || v.ncols() == 0 {
        return DMatrix::zeros(rows, 0);
    }
    let mut stacked = DMatrix::zeros(rows, u.ncols() + v.ncols());
    stacked.view_mut((0, 0), (rows, u.ncols())).copy_from(u);
    stacked
        .view_mut((0, u.ncols()), (rows, v.ncols()))
        .copy_from(&(-v.clone()));
    let null = kernel_basis(&stacked);
    if null.ncols() == 0 {
        return DMatrix::zeros(rows, 0);
    }
    let a_part = null.view((0, 0), (u.ncols(), null.ncols())).into_owned();
    // vectors in the intersection, possibly linearly dependent
    let vectors = u * a_part;
    range_basis(&vectors)
}

/// Pseudo-inverse with an absolute singular-value floor on top of the shared
/// relative tolerance; a matrix that is tiny across the board (sigma_max
/// below the floor) is rejected even though its relative conditioning looks
/// fine. Returns None when rank-deficient; errors are the caller's concern.
pub fn pseudo_inverse_with_floor<T: Real>(
    a: &DMatrix<Complex<T>>,
    floor: T,
) -> Option<(DMatrix<Complex<T>>, T, T)> {
    let svd = a.clone().svd(true, true);
    let sv: Vec<T> = svd.singular_values.iter().copied().collect();
    let smax = sv.iter().copied().fold(T::zero(), |x, y| if y > x { y } else { x });
    let smin = sv
        .iter()
        .copied()
        .reduce(|x, y| if y < x { y } else { x })?;
    let cut = (lit::<T>(RANK_TOL) * smax).max(floor);
    if !(smin > cut) {
        return None;
    }
    let u = svd.u.expect("u");
    let v_t = svd.v_t.expect("v_t");
    // pinv = V diag(1/s) U^H
    let k = sv.len();
    let mut vs = DMatrix::<Complex<T>>::zeros(v_t.ncols(), k);
    for i in 0..k {
        let inv = Complex::new(T::one() / sv[i], T::zero());
        for c in 0..v_t.ncols() {
            vs[(c, i)] = v_t[(i, c)].conj() * inv;
        }
    }
    let pinv = vs * u.adjoint();
    Some((pinv, smin, smax))
}
