//! Homogeneous constant-coefficient operators A(D) = sum a_alpha d^alpha,
//! their symbols, and the structural checks: ellipticity margin, canceling
//! and cocanceling defects, annihilator pairing, and the kernel symbol H.
//!
//! The quantifier "for all xi != 0" is discretized over a unit-sphere sample;
//! every report records the sample size for that reason.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::{lit, norm, Real};

/// Exponent vector alpha with |alpha| = sum of entries.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        MultiIndex(exponents)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    /// xi^alpha as a real scalar.
    pub fn xi_pow<T: Real>(&self, xi: &[T]) -> T {
        let mut acc = T::one();
        for (axis, &e) in self.0.iter().enumerate() {
            if e > 0 {
                acc *= xi[axis].powi(e as i32);
            }
        }
        acc
    }

    /// All multi-indices of the given order in `dim` variables, in
    /// lexicographic order. Used for derivative magnitudes and R^alpha.
    pub fn all_of_order(dim: usize, order: u32) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        let mut current = vec![0u32; dim];
        fn rec(axis: usize, left: u32, current: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
            if axis + 1 == current.len() {
                current[axis] = left;
                out.push(MultiIndex(current.clone()));
                return;
            }
            for e in (0..=left).rev() {
                current[axis] = e;
                rec(axis + 1, left - e, current, out);
            }
        }
        if dim == 0 {
            return out;
        }
        rec(0, order, &mut current, &mut out);
        out
    }
}

/// A(D) with constant matrix coefficients a_alpha in L(E, F), all of a
/// common order m >= 1. Zero coefficient matrices are representable so the
/// degenerate operators used by the structural checks stay constructible.
#[derive(Clone, Debug)]
pub struct HomogeneousOperator<T: Real> {
    dim: usize,
    order: u32,
    e_dim: usize,
    f_dim: usize,
    terms: BTreeMap<MultiIndex, DMatrix<Complex<T>>>,
}

impl<T: Real> HomogeneousOperator<T> {
    pub fn new(
        dim: usize,
        order: u32,
        e_dim: usize,
        f_dim: usize,
        terms: impl IntoIterator<Item = (MultiIndex, DMatrix<Complex<T>>)>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("operator dimension must be >= 1"));
        }
        if order == 0 {
            return Err(Error::invalid("operator order must be >= 1"));
        }
        if e_dim == 0 || f_dim == 0 {
            return Err(Error::invalid("operator spaces must be nontrivial"));
        }
        let mut map = BTreeMap::new();
        for (alpha, matrix) in terms {
            if alpha.dim() != dim {
                return Err(Error::DimensionMismatch {
                    context: "multi-index length",
                    expected: dim,
                    got: alpha.dim(),
                });
            }
            if alpha.order() != order {
                return Err(Error::invalid(format!(
                    "term |alpha| = {} differs from operator order {}",
                    alpha.order(),
                    order
                )));
            }
            if matrix.nrows() != f_dim || matrix.ncols() != e_dim {
                return Err(Error::invalid(format!(
                    "coefficient matrix is {}x{}, operator needs {}x{}",
                    matrix.nrows(),
                    matrix.ncols(),
                    f_dim,
                    e_dim
                )));
            }
            if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::invalid("coefficient matrices must be finite"));
            }
            if map.insert(alpha, matrix).is_some() {
                return Err(Error::invalid("duplicate multi-index term"));
            }
        }
        if map.is_empty() {
            return Err(Error::invalid("operator needs at least one term"));
        }
        Ok(HomogeneousOperator { dim, order, e_dim, f_dim, terms: map })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn e_dim(&self) -> usize {
        self.e_dim
    }

    pub fn f_dim(&self) -> usize {
        self.f_dim
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &DMatrix<Complex<T>>)> {
        self.terms.iter()
    }

    /// A(xi) = sum a_alpha xi^alpha. Polynomial evaluation, hence exactly
    /// homogeneous: A(t xi) = t^m A(xi).
    pub fn eval_symbol(&self, xi: &[T]) -> Result<DMatrix<Complex<T>>> {
        if xi.len() < self.dim {
            return Err(Error::DimensionMismatch {
                context: "symbol argument",
                expected: self.dim,
                got: xi.len(),
            });
        }
        let mut acc = DMatrix::<Complex<T>>::zeros(self.f_dim, self.e_dim);
        for (alpha, matrix) in &self.terms {
            let scale = Complex::new(alpha.xi_pow(&xi[..self.dim]), T::zero());
            acc += matrix * scale;
        }
        Ok(acc)
    }

    /// Min over the sample of the smallest singular value of A(xi).
    /// A positive margin is evidence of ellipticity with respect to the
    /// sample; e_dim > f_dim is structurally non-elliptic.
    pub fn ellipticity_margin(&self, sphere: &SphereSample<T>) -> EllipticityReport<T> {
        if self.e_dim > self.f_dim {
            return EllipticityReport {
                margin: T::zero(),
                structurally_non_elliptic: true,
                samples: sphere.count(),
            };
        }
        let mut margin: Option<T> = None;
        for xi in sphere.directions() {
            let a = self.eval_symbol(xi).expect("sphere direction has operator dim");
            let s = linalg::smallest_singular_value(&a);
            margin = Some(match margin {
                Some(m) if m <= s => m,
                _ => s,
            });
        }
        EllipticityReport {
            margin: margin.unwrap_or_else(T::zero),
            structurally_non_elliptic: false,
            samples: sphere.count(),
        }
    }

    /// Dimension of the intersection over the sample of the ranges A(xi)[E].
    /// Zero certifies canceling with respect to the sample.
    pub fn canceling_defect(&self, sphere: &SphereSample<T>) -> usize {
        let mut iter = sphere.directions();
        let first = match iter.next() {
            Some(xi) => xi,
            None => return self.f_dim,
        };
        let mut basis = linalg::range_basis(&self.eval_symbol(first).expect("dim"));
        for xi in iter {
            if basis.ncols() == 0 {
                break;
            }
            let next = linalg::range_basis(&self.eval_symbol(xi).expect("dim"));
            basis = linalg::intersect_subspaces(&basis, &next);
        }
        basis.ncols()
    }

    /// Dimension of the intersection over the sample of ker A(xi), taken in
    /// the operator's input space. Zero certifies cocanceling on the sample.
    pub fn cocanceling_defect(&self, sphere: &SphereSample<T>) -> usize {
        let mut iter = sphere.directions();
        let first = match iter.next() {
            Some(xi) => xi,
            None => return self.e_dim,
        };
        let mut basis = linalg::kernel_basis(&self.eval_symbol(first).expect("dim"));
        for xi in iter {
            if basis.ncols() == 0 {
                break;
            }
            let next = linalg::kernel_basis(&self.eval_symbol(xi).expect("dim"));
            basis = linalg::intersect_subspaces(&basis, &next);
        }
        basis.ncols()
    }

    /// Sum of coefficient spectral norms: bounds the symbol's largest
    /// singular value at |xi| = 1 and sets the natural absolute scale.
    pub fn coefficient_scale(&self) -> T {
        self.terms.values().map(linalg::spectral_norm).fold(T::zero(), |a, b| a + b)
    }

    /// H(xi): the left inverse of A(xi) of minimal norm, homogeneous of
    /// degree -m. Fails at xi = 0 and on rank-deficient symbols; rank is
    /// judged against the operator's own scale at |xi|, so a symbol that is
    /// tiny across the board counts as singular, not as well conditioned.
    pub fn kernel_symbol(&self, xi: &[T]) -> Result<DMatrix<Complex<T>>> {
        let len = norm(&xi[..self.dim.min(xi.len())]);
        if len == T::zero() {
            return Err(Error::domain("kernel symbol undefined at xi = 0"));
        }
        let a = self.eval_symbol(xi)?;
        let floor = lit::<T>(linalg::RANK_TOL) * len.powi(self.order as i32) * self.coefficient_scale();
        match linalg::pseudo_inverse_with_floor(&a, floor) {
            Some((pinv, _, _)) => Ok(pinv),
            None => Err(Error::Singular(
                "symbol is rank-deficient; operator not elliptic at this xi".into(),
            )),
        }
    }

    /// Formal adjoint (-1)^m sum_alpha a_alpha^H d^alpha mapping F-valued
    /// fields to E-valued ones; for the gradient this is minus the
    /// divergence. Its symbol is (-1)^m A(xi)^H.
    pub fn adjoint(&self) -> HomogeneousOperator<T> {
        let sign = if self.order % 2 == 0 { T::one() } else { -T::one() };
        let scale = Complex::new(sign, T::zero());
        let terms = self
            .terms
            .iter()
            .map(|(alpha, matrix)| (alpha.clone(), matrix.adjoint() * scale));
        HomogeneousOperator::new(self.dim, self.order, self.f_dim, self.e_dim, terms)
            .expect("adjoint of a valid operator")
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct EllipticityReport<T> {
    pub margin: T,
    pub structurally_non_elliptic: bool,
    pub samples: usize,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct AnnihilatorReport<T> {
    /// max over the sample of the spectral norm of L(xi) A(xi)
    pub composition_residual: T,
    /// max over the sample of |dim ker L(xi) - rank A(xi)|
    pub kernel_match_defect: usize,
    pub samples: usize,
}

impl<T: Real> AnnihilatorReport<T> {
    pub fn is_valid_pair(&self) -> bool {
        self.composition_residual <= lit::<T>(1e-10) && self.kernel_match_defect == 0
    }
}

/// Checks ker L(xi) = A(xi)[E] numerically: the composition must vanish and
/// the kernel dimension must match the range dimension at every sample.
pub fn annihilator_pair_check<T: Real>(
    a: &HomogeneousOperator<T>,
    l: &HomogeneousOperator<T>,
    sphere: &SphereSample<T>,
) -> Result<AnnihilatorReport<T>> {
    if a.dim != l.dim {
        return Err(Error::DimensionMismatch {
            context: "annihilator pair ambient dimension",
            expected: a.dim,
            got: l.dim,
        });
    }
    if l.e_dim != a.f_dim {
        return Err(Error::DimensionMismatch {
            context: "annihilator input space",
            expected: a.f_dim,
            got: l.e_dim,
        });
    }
    let mut residual = T::zero();
    let mut defect = 0usize;
    for xi in sphere.directions() {
        let a_xi = a.eval_symbol(xi)?;
        let l_xi = l.eval_symbol(xi)?;
        let composed = &l_xi * &a_xi;
        let s = linalg::spectral_norm(&composed);
        if s > residual {
            residual = s;
        }
        let ker = linalg::kernel_basis(&l_xi).ncols();
        let rank = linalg::rank(&a_xi);
        defect = defect.max(ker.abs_diff(rank));
    }
    Ok(AnnihilatorReport { composition_residual: residual, kernel_match_defect: defect, samples: sphere.count() })
}

/// Unit directions standing in for "all xi != 0".
#[derive(Clone, Debug)]
pub struct SphereSample<T> {
    directions: Vec<Vec<T>>,
}

pub const DEFAULT_SPHERE_COUNT: usize = 2048;
pub const MIN_SPHERE_COUNT: usize = 16;

impl<T: Real> SphereSample<T> {
    /// Deterministic sample: +-1 alternating for N=1, uniform angles for
    /// N=2, a Fibonacci lattice for N=3.
    pub fn standard(dim: usize, count: usize) -> Result<Self> {
        if count < MIN_SPHERE_COUNT {
            return Err(Error::invalid(format!(
                "sphere sample needs at least {MIN_SPHERE_COUNT} directions"
            )));
        }
        let mut directions = Vec::with_capacity(count);
        match dim {
            1 => {
                for j in 0..count {
                    directions.push(vec![if j % 2 == 0 { T::one() } else { -T::one() }]);
                }
            }
            2 => {
                for j in 0..count {
                    let theta = lit::<T>(2.0) * T::pi() * lit::<T>(j as f64) / lit::<T>(count as f64);
                    directions.push(vec![theta.cos(), theta.sin()]);
                }
            }
            3 => {
                // golden-angle spiral; offsets keep the poles off the sample
                let golden = lit::<T>(0.618_033_988_749_894_9);
                for j in 0..count {
                    let z = T::one() - lit::<T>(2.0) * (lit::<T>(j as f64) + lit::<T>(0.5)) / lit::<T>(count as f64);
                    let r = (T::one() - z * z).max(T::zero()).sqrt();
                    let phi = lit::<T>(2.0) * T::pi() * (lit::<T>(j as f64) * golden).fract();
                    directions.push(vec![r * phi.cos(), r * phi.sin(), z]);
                }
            }
            d => {
                return Err(Error::invalid(format!("sphere sampling implemented for dim 1..=3, got {d}")));
            }
        }
        Self::from_directions(directions)
    }

    pub fn default_for_dim(dim: usize) -> Result<Self> {
        let count = match dim {
            1 => MIN_SPHERE_COUNT,
            _ => DEFAULT_SPHERE_COUNT,
        };
        Self::standard(dim, count)
    }

    /// Validates unit length to 1e-12 (after a defensive renormalization of
    /// exactly representable inputs this is an invariant, not a tolerance).
    pub fn from_directions(directions: Vec<Vec<T>>) -> Result<Self> {
        if directions.len() < MIN_SPHERE_COUNT {
            return Err(Error::invalid(format!(
                "sphere sample needs at least {MIN_SPHERE_COUNT} directions"
            )));
        }
        let dim = directions[0].len();
        for d in &directions {
            if d.len() != dim {
                return Err(Error::invalid("sphere directions of mixed dimension"));
            }
            let len = norm(d);
            if (len - T::one()).abs() > lit::<T>(1e-12) {
                return Err(Error::invalid("sphere direction is not unit length"));
            }
        }
        Ok(SphereSample { directions })
    }

    pub fn count(&self) -> usize {
        self.directions.len()
    }

    pub fn dim(&self) -> usize {
        self.directions.first().map(|d| d.len()).unwrap_or(0)
    }

    pub fn directions(&self) -> impl Iterator<Item = &[T]> {
        self.directions.iter().map(|d| d.as_slice())
    }

    /// Prefix sub-sample; intersections only shrink as the sample grows, so
    /// prefixes give the monotonicity property a concrete handle.
    pub fn prefix(&self, count: usize) -> Result<Self> {
        Self::from_directions(self.directions.iter().take(count).cloned().collect())
    }
}

/// The worked operators: gradient, Laplacian, divergence and the curl-type
/// row system annihilating gradient-shaped (and vector Riesz) fields.
pub mod catalog {
    use super::*;

    fn unit_alpha(dim: usize, axis: usize, order: u32) -> MultiIndex {
        let mut e = vec![0u32; dim];
        e[axis] = order;
        MultiIndex::new(e)
    }

    /// A = grad: E = C, F = C^N.
    pub fn gradient<T: Real>(dim: usize) -> HomogeneousOperator<T> {
        let terms = (0..dim).map(|axis| {
            let mut m = DMatrix::<Complex<T>>::zeros(dim, 1);
            m[(axis, 0)] = Complex::new(T::one(), T::zero());
            (unit_alpha(dim, axis, 1), m)
        });
        HomogeneousOperator::new(dim, 1, 1, dim, terms).expect("catalog operator")
    }

    /// Scalar Laplacian: m = 2, E = F = C.
    pub fn laplacian<T: Real>(dim: usize) -> HomogeneousOperator<T> {
        let terms = (0..dim).map(|axis| {
            let m = DMatrix::<Complex<T>>::from_element(1, 1, Complex::new(T::one(), T::zero()));
            (unit_alpha(dim, axis, 2), m)
        });
        HomogeneousOperator::new(dim, 2, 1, 1, terms).expect("catalog operator")
    }

    /// L = div on C^N-valued fields: cocanceling for every N >= 2.
    pub fn divergence<T: Real>(dim: usize) -> HomogeneousOperator<T> {
        let terms = (0..dim).map(|axis| {
            let mut m = DMatrix::<Complex<T>>::zeros(1, dim);
            m[(0, axis)] = Complex::new(T::one(), T::zero());
            (unit_alpha(dim, axis, 1), m)
        });
        HomogeneousOperator::new(dim, 1, dim, 1, terms).expect("catalog operator")
    }

    /// Rows xi_i e_j^T - xi_j e_i^T over i < j; annihilates gradients, with
    /// ker L(xi) = span{xi} matching the gradient symbol's range.
    pub fn curl_rows<T: Real>(dim: usize) -> HomogeneousOperator<T> {
        assert!(dim >= 2, "curl rows need dim >= 2");
        let pairs: Vec<(usize, usize)> = (0..dim)
            .flat_map(|i| ((i + 1)..dim).map(move |j| (i, j)))
            .collect();
        let rows = pairs.len();
        let mut matrices: Vec<DMatrix<Complex<T>>> =
            (0..dim).map(|_| DMatrix::zeros(rows, dim)).collect();
        for (row, &(i, j)) in pairs.iter().enumerate() {
            matrices[i][(row, j)] = Complex::new(T::one(), T::zero());
            matrices[j][(row, i)] = Complex::new(-T::one(), T::zero());
        }
        let terms = matrices
            .into_iter()
            .enumerate()
            .map(|(axis, m)| (unit_alpha(dim, axis, 1), m));
        HomogeneousOperator::new(dim, 1, dim, rows, terms).expect("catalog operator")
    }

    /// The shipped annihilator pairs (A, L): the curl rows annihilate both
    /// gradients and, in frequency, vector Riesz fields.
    pub fn annihilator_pairs<T: Real>(dim: usize) -> Vec<(&'static str, HomogeneousOperator<T>, HomogeneousOperator<T>)> {
        if dim < 2 {
            return Vec::new();
        }
        vec![("gradient/curl-rows", gradient(dim), curl_rows(dim))]
    }
}
