//! FFT-based fields on the periodic grid: bump synthesis, differential
//! operators and homogeneous Fourier multipliers (Riesz transforms and
//! potentials, fractional Laplacians, operator kernels), plus the weighted
//! norms built from grid quadrature.
//!
//! Convention: (d^alpha phi)^ = (i xi)^alpha phi^, so a homogeneous operator
//! of order m acts as i^m A(xi) in frequency. The torus [-L, L)^N stands in
//! for R^N; callers keep supports away from the boundary and can measure the
//! wrap-around error with [`boundary_leakage`].

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::measures::{Measure, PositiveMeasure};
use crate::scalar::{complex_vec_norm, from_usize, lit, pairwise_sum, Real};
use crate::symbolic::{HomogeneousOperator, MultiIndex, SphereSample};
use crate::weights::Weight;

/// Complex samples of a d-component field at every grid node, node-major:
/// entry node*d + c holds component c at the flat node index.
#[derive(Clone, Debug, PartialEq)]
pub struct Field<T: Real> {
    grid: Grid<T>,
    components: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> Field<T> {
    pub fn new(grid: Grid<T>, components: usize, data: Vec<Complex<T>>) -> Result<Self> {
        if components == 0 {
            return Err(Error::invalid("field needs at least one component"));
        }
        let want = grid.node_count() * components;
        if data.len() != want {
            return Err(Error::DimensionMismatch {
                context: "field samples".into(),
                expected: want,
                got: data.len(),
            });
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid("field samples must be finite"));
        }
        Ok(Field { grid, components, data })
    }

    pub fn zeros(grid: Grid<T>, components: usize) -> Result<Self> {
        let len = grid.node_count() * components;
        Field::new(grid, components, vec![Complex::new(T::zero(), T::zero()); len])
    }

    #[inline]
    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    #[inline]
    pub fn components(&self) -> usize {
        self.components
    }

    #[inline]
    pub fn data(&self) -> &[Complex<T>] {
        &self.data
    }

    /// All components at one node.
    #[inline]
    pub fn at(&self, flat: usize) -> &[Complex<T>] {
        &self.data[flat * self.components..(flat + 1) * self.components]
    }

    /// Euclidean norm over components at one node.
    #[inline]
    pub fn magnitude_at(&self, flat: usize) -> T {
        complex_vec_norm(self.at(flat))
    }

    /// Max over nodes of the pointwise component norm.
    pub fn sup_norm(&self) -> T {
        (0..self.grid.node_count())
            .map(|k| self.magnitude_at(k))
            .fold(T::zero(), |a, b| if b > a { b } else { a })
    }

    /// Largest |Im| over all samples; a real field transported through a
    /// Hermitian-symmetric multiplier keeps this at rounding level.
    pub fn max_imag(&self) -> T {
        self.data
            .iter()
            .map(|z| z.im.abs())
            .fold(T::zero(), |a, b| if b > a { b } else { a })
    }

    /// Discrete L2 norm, (sum |u|^2 h^N)^(1/2).
    pub fn l2_norm(&self) -> T {
        let sq: Vec<T> = self.data.iter().map(|z| z.norm_sqr()).collect();
        (pairwise_sum(&sq) * self.grid.cell_volume()).sqrt()
    }

    /// Multilinear interpolation of every component at a point; None outside
    /// the box.
    pub fn interpolate(&self, x: &[T]) -> Option<Vec<Complex<T>>> {
        let stencil = self.grid.interp_stencil(x)?;
        let mut out = vec![Complex::new(T::zero(), T::zero()); self.components];
        for (node, weight) in stencil {
            let w = Complex::new(weight, T::zero());
            for (c, slot) in out.iter_mut().enumerate() {
                *slot += self.data[node * self.components + c] * w;
            }
        }
        Some(out)
    }

    pub fn add(&self, other: &Field<T>) -> Result<Field<T>> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field<T>) -> Result<Field<T>> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, factor: Complex<T>) -> Field<T> {
        let data = self.data.iter().map(|z| *z * factor).collect();
        Field { grid: self.grid, components: self.components, data }
    }

    fn zip_with(
        &self,
        other: &Field<T>,
        f: impl Fn(Complex<T>, Complex<T>) -> Complex<T>,
    ) -> Result<Field<T>> {
        if self.grid != other.grid || self.components != other.components {
            return Err(Error::invalid("fields live on different grids or component counts"));
        }
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Field { grid: self.grid, components: self.components, data })
    }
}

/// Unnormalized forward DFT of every component, node-major layout preserved.
/// Bin k along an axis carries frequency `grid.frequency(k)`.
pub fn forward_spectrum<T: Real>(field: &Field<T>) -> Vec<Complex<T>> {
    let mut data = field.data.clone();
    for c in 0..field.components {
        let mut line: Vec<Complex<T>> =
            (0..field.grid.node_count()).map(|k| data[k * field.components + c]).collect();
        ndfft(&field.grid, &mut line, false);
        for (k, z) in line.into_iter().enumerate() {
            data[k * field.components + c] = z;
        }
    }
    data
}

/// Inverse of [`forward_spectrum`], including the 1/n^N normalization.
pub fn field_from_spectrum<T: Real>(
    grid: Grid<T>,
    components: usize,
    spectrum: Vec<Complex<T>>,
) -> Result<Field<T>> {
    if components == 0 || spectrum.len() != grid.node_count() * components {
        return Err(Error::invalid("spectrum length does not match grid and component count"));
    }
    let mut data = spectrum;
    let scale = Complex::new(T::one() / from_usize::<T>(grid.node_count()), T::zero());
    for c in 0..components {
        let mut line: Vec<Complex<T>> =
            (0..grid.node_count()).map(|k| data[k * components + c]).collect();
        ndfft(&grid, &mut line, true);
        for (k, z) in line.into_iter().enumerate() {
            data[k * components + c] = z * scale;
        }
    }
    Field::new(grid, components, data)
}

/// In-place N-dimensional DFT over a single component, axis by axis. The
/// row-major layout makes axis a a strided set of lines with stride
/// n^(dim-1-a); each line is gathered, transformed, scattered back.
fn ndfft<T: Real>(grid: &Grid<T>, data: &mut [Complex<T>], inverse: bool) {
    let n = grid.nodes_per_axis();
    let total = grid.node_count();
    let mut planner = FftPlanner::<T>::new();
    let fft = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
    let mut line = vec![Complex::new(T::zero(), T::zero()); n];
    let mut scratch = vec![Complex::new(T::zero(), T::zero()); fft.get_inplace_scratch_len()];
    for axis in 0..grid.dim() {
        let stride = n.pow((grid.dim() - 1 - axis) as u32);
        let block = stride * n;
        for outer in 0..total / block {
            for inner in 0..stride {
                let base = outer * block + inner;
                for (k, slot) in line.iter_mut().enumerate() {
                    *slot = data[base + k * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (k, &z) in line.iter().enumerate() {
                    data[base + k * stride] = z;
                }
            }
        }
    }
}

/// Smooth compactly supported test function: amplitude times
/// exp(1 - 1/(1 - |(x-c)/rho|^2)) on B(c, rho), zero outside, optionally
/// modulated by a plane wave e^(i k.x).
#[derive(Clone, Debug)]
pub struct BumpSpec<T: Real> {
    pub center: Vec<T>,
    pub radius: T,
    pub amplitude: Vec<Complex<T>>,
    pub modulation: Option<Vec<T>>,
}

impl<T: Real> BumpSpec<T> {
    pub fn new(center: Vec<T>, radius: T, amplitude: Vec<Complex<T>>) -> Self {
        BumpSpec { center, radius, amplitude, modulation: None }
    }

    pub fn modulated(mut self, wave_vector: Vec<T>) -> Self {
        self.modulation = Some(wave_vector);
        self
    }

    /// Scalar profile (without amplitude or modulation) at a point.
    pub fn profile(&self, x: &[T]) -> T {
        let mut t = T::zero();
        for axis in 0..self.center.len() {
            let u = (x[axis] - self.center[axis]) / self.radius;
            t += u * u;
        }
        if t < T::one() {
            (T::one() - T::one() / (T::one() - t)).exp()
        } else {
            T::zero()
        }
    }

    /// Analytic gradient of the scalar profile; zero outside the support.
    pub fn profile_gradient(&self, x: &[T]) -> Vec<T> {
        let mut t = T::zero();
        let mut u = vec![T::zero(); self.center.len()];
        for axis in 0..self.center.len() {
            u[axis] = (x[axis] - self.center[axis]) / self.radius;
            t += u[axis] * u[axis];
        }
        if !(t < T::one()) {
            return vec![T::zero(); self.center.len()];
        }
        let one_minus = T::one() - t;
        let phi = (T::one() - T::one() / one_minus).exp();
        let factor = -phi * lit::<T>(2.0) / (self.radius * one_minus * one_minus);
        u.iter().map(|&uj| factor * uj).collect()
    }
}

/// Samples a bump on the grid. The closed support ball must sit inside the
/// box with a margin of at least two cells on every axis, otherwise the
/// periodic wrap-around would silently contaminate derivative spectra.
pub fn synthesize_bump<T: Real>(grid: &Grid<T>, spec: &BumpSpec<T>) -> Result<Field<T>> {
    if spec.center.len() != grid.dim() {
        return Err(Error::DimensionMismatch {
            context: "bump center".into(),
            expected: grid.dim(),
            got: spec.center.len(),
        });
    }
    if !(spec.radius > T::zero()) || !spec.radius.is_finite() {
        return Err(Error::invalid("bump radius must be positive and finite"));
    }
    if spec.amplitude.is_empty() {
        return Err(Error::invalid("bump amplitude must have at least one component"));
    }
    let margin = lit::<T>(2.0) * grid.spacing();
    for axis in 0..grid.dim() {
        let lo = spec.center[axis] - spec.radius;
        let hi = spec.center[axis] + spec.radius;
        if lo < -grid.half_width() + margin || hi > grid.half_width() - margin {
            return Err(Error::invalid(format!(
                "bump support leaves no 2-cell margin on axis {axis}"
            )));
        }
    }
    if let Some(k) = &spec.modulation {
        if k.len() != grid.dim() {
            return Err(Error::DimensionMismatch {
                context: "modulation wave vector".into(),
                expected: grid.dim(),
                got: k.len(),
            });
        }
    }
    let d = spec.amplitude.len();
    let mut data = vec![Complex::new(T::zero(), T::zero()); grid.node_count() * d];
    for flat in 0..grid.node_count() {
        let x = grid.node(flat);
        let base = spec.profile(&x[..grid.dim()]);
        if base == T::zero() {
            continue;
        }
        let mut factor = Complex::new(base, T::zero());
        if let Some(k) = &spec.modulation {
            let mut phase = T::zero();
            for axis in 0..grid.dim() {
                phase += k[axis] * x[axis];
            }
            factor = factor * Complex::new(phase.cos(), phase.sin());
        }
        for c in 0..d {
            data[flat * d + c] = spec.amplitude[c] * factor;
        }
    }
    Field::new(*grid, d, data)
}

/// Homogeneous Fourier multipliers. Scalar kinds act componentwise; the
/// kernel kinds are matrix-valued and change the component count.
#[derive(Clone)]
pub enum Multiplier<T: Real> {
    /// -i xi_j / |xi|, degree 0, odd.
    RieszTransform(usize),
    /// Composition R^alpha = prod_j R_j^(alpha_j); parity follows |alpha|.
    RieszComposed(MultiIndex),
    /// |xi|^(-m) with 0 < m < N, the Fourier side of the Riesz potential
    /// I_m f = gamma(m)^(-1) |x|^(m-N) * f.
    RieszPotential(T),
    /// |xi|^s for finite s (either sign).
    FractionalLaplacian(T),
    /// (-i)^m pinv(A(xi)): left-inverts i^m A(xi), so it maps A(D)phi back
    /// to phi. Components f_dim -> e_dim. Requires an elliptic operator.
    KernelH(HomogeneousOperator<T>),
    /// Conjugate transpose of [`Multiplier::KernelH`], i^m pinv(A(xi))^H,
    /// components e_dim -> f_dim.
    KernelHAdjoint(HomogeneousOperator<T>),
    /// |xi|^degree times a caller-supplied angular part evaluated on the
    /// unit sphere. `odd` declares the parity used for Nyquist handling.
    HomogeneousCustom {
        degree: T,
        odd: bool,
        input_components: usize,
        output_components: usize,
        angular: Arc<dyn Fn(&[T]) -> DMatrix<Complex<T>> + Send + Sync>,
    },
}

impl<T: Real> fmt::Debug for Multiplier<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Multiplier::RieszTransform(j) => write!(f, "RieszTransform({j})"),
            Multiplier::RieszComposed(alpha) => write!(f, "RieszComposed({alpha:?})"),
            Multiplier::RieszPotential(m) => write!(f, "RieszPotential({m:?})"),
            Multiplier::FractionalLaplacian(s) => write!(f, "FractionalLaplacian({s:?})"),
            Multiplier::KernelH(_) => write!(f, "KernelH(..)"),
            Multiplier::KernelHAdjoint(_) => write!(f, "KernelHAdjoint(..)"),
            Multiplier::HomogeneousCustom { degree, odd, .. } => {
                write!(f, "HomogeneousCustom {{ degree: {degree:?}, odd: {odd} }}")
            }
        }
    }
}

impl<T: Real> Multiplier<T> {
    /// Component count the input field must have; None means any (scalar
    /// multipliers act componentwise).
    pub fn input_components(&self) -> Option<usize> {
        match self {
            Multiplier::KernelH(op) => Some(op.f_dim()),
            Multiplier::KernelHAdjoint(op) => Some(op.e_dim()),
            Multiplier::HomogeneousCustom { input_components, .. } => Some(*input_components),
            _ => None,
        }
    }

    pub fn output_components(&self, input: usize) -> usize {
        match self {
            Multiplier::KernelH(op) => op.e_dim(),
            Multiplier::KernelHAdjoint(op) => op.f_dim(),
            Multiplier::HomogeneousCustom { output_components, .. } => *output_components,
            _ => input,
        }
    }

    /// Parity under xi -> -xi; odd symbols are zeroed at Nyquist bins.
    fn odd(&self) -> bool {
        match self {
            Multiplier::RieszTransform(_) => true,
            Multiplier::RieszComposed(alpha) => alpha.order() % 2 == 1,
            Multiplier::RieszPotential(_) | Multiplier::FractionalLaplacian(_) => false,
            Multiplier::KernelH(op) | Multiplier::KernelHAdjoint(op) => op.order() % 2 == 1,
            Multiplier::HomogeneousCustom { odd, .. } => *odd,
        }
    }

    fn validate(&self, grid: &Grid<T>) -> Result<()> {
        let dim = grid.dim();
        match self {
            Multiplier::RieszTransform(j) => {
                if *j >= dim {
                    return Err(Error::invalid(format!(
                        "riesz transform axis {j} out of range for dimension {dim}"
                    )));
                }
            }
            Multiplier::RieszComposed(alpha) => {
                if alpha.dim() != dim {
                    return Err(Error::DimensionMismatch {
                        context: "riesz composition multi-index".into(),
                        expected: dim,
                        got: alpha.dim(),
                    });
                }
            }
            Multiplier::RieszPotential(m) => {
                if !(*m > T::zero()) || !(*m < from_usize(dim)) {
                    return Err(Error::domain(
                        "riesz potential order must satisfy 0 < m < N",
                    ));
                }
            }
            Multiplier::FractionalLaplacian(s) => {
                if !s.is_finite() {
                    return Err(Error::domain("fractional laplacian order must be finite"));
                }
            }
            Multiplier::KernelH(op) | Multiplier::KernelHAdjoint(op) => {
                if op.dim() != dim {
                    return Err(Error::DimensionMismatch {
                        context: "operator dimension".into(),
                        expected: dim,
                        got: op.dim(),
                    });
                }
                // one global ellipticity check; per-bin inversion then uses
                // the fast normal-equations path
                let sphere = SphereSample::default_for_dim(dim)?;
                let report = op.ellipticity_margin(&sphere);
                let floor = lit::<T>(crate::linalg::RANK_TOL) * op.coefficient_scale();
                if report.structurally_non_elliptic || !(report.margin > floor) {
                    return Err(Error::Singular(
                        "kernel multiplier needs an elliptic operator".into(),
                    ));
                }
            }
            Multiplier::HomogeneousCustom { input_components, output_components, .. } => {
                if *input_components == 0 || *output_components == 0 {
                    return Err(Error::invalid("custom multiplier needs nonzero component counts"));
                }
            }
        }
        Ok(())
    }

    /// Action at one frequency. Zero frequency maps to zero for every kind
    /// (all are genuinely homogeneous, none extends continuously to 0 with
    /// a nonzero value except the empty Riesz composition, which is the
    /// identity).
    fn at(&self, xi: &[T]) -> BinAction<T> {
        let len = crate::scalar::norm(xi);
        if len == T::zero() {
            if let Multiplier::RieszComposed(alpha) = self {
                if alpha.order() == 0 {
                    return BinAction::Scalar(Complex::new(T::one(), T::zero()));
                }
            }
            return BinAction::Zero;
        }
        match self {
            Multiplier::RieszTransform(j) => {
                BinAction::Scalar(Complex::new(T::zero(), -xi[*j] / len))
            }
            Multiplier::RieszComposed(alpha) => {
                let order = alpha.order();
                let magnitude = alpha.xi_pow(xi) / len.powi(order as i32);
                BinAction::Scalar(i_power::<T>(order, true) * Complex::new(magnitude, T::zero()))
            }
            Multiplier::RieszPotential(m) => {
                BinAction::Scalar(Complex::new(len.powf(-*m), T::zero()))
            }
            Multiplier::FractionalLaplacian(s) => {
                BinAction::Scalar(Complex::new(len.powf(*s), T::zero()))
            }
            Multiplier::KernelH(op) => match kernel_pinv(op, xi) {
                Some(pinv) => BinAction::Matrix(pinv * i_power::<T>(op.order(), true)),
                None => BinAction::Fail,
            },
            Multiplier::KernelHAdjoint(op) => match kernel_pinv(op, xi) {
                Some(pinv) => {
                    BinAction::Matrix((pinv * i_power::<T>(op.order(), true)).adjoint())
                }
                None => BinAction::Fail,
            },
            Multiplier::HomogeneousCustom { degree, angular, .. } => {
                let u: Vec<T> = xi.iter().map(|&v| v / len).collect();
                BinAction::Matrix(angular(&u) * Complex::new(len.powf(*degree), T::zero()))
            }
        }
    }
}

enum BinAction<T: Real> {
    Zero,
    Scalar(Complex<T>),
    Matrix(DMatrix<Complex<T>>),
    Fail,
}

/// i^m, or (-i)^m when `negative` is set; exact by quadrant.
fn i_power<T: Real>(m: u32, negative: bool) -> Complex<T> {
    let one = T::one();
    let zero = T::zero();
    let q = if negative { (4 - (m % 4)) % 4 } else { m % 4 };
    match q {
        0 => Complex::new(one, zero),
        1 => Complex::new(zero, one),
        2 => Complex::new(-one, zero),
        _ => Complex::new(zero, -one),
    }
}

/// pinv(A(xi)) by normal equations; the global ellipticity check in
/// `validate` guarantees (A^H A) is invertible away from xi = 0.
fn kernel_pinv<T: Real>(op: &HomogeneousOperator<T>, xi: &[T]) -> Option<DMatrix<Complex<T>>> {
    let a = op.eval_symbol(xi).ok()?;
    let gram = a.adjoint() * &a;
    let inv = gram.try_inverse()?;
    Some(inv * a.adjoint())
}

/// Applies a homogeneous multiplier in frequency space. Odd symbols are
/// zeroed at Nyquist-touching bins (those have no conjugate partner, and an
/// odd symbol there would push a real field off the real line).
pub fn apply_multiplier<T: Real>(mult: &Multiplier<T>, g: &Field<T>) -> Result<Field<T>> {
    mult.validate(g.grid())?;
    if let Some(want) = mult.input_components() {
        if want != g.components() {
            return Err(Error::DimensionMismatch {
                context: "multiplier input components".into(),
                expected: want,
                got: g.components(),
            });
        }
    }
    let d_in = g.components();
    let d_out = mult.output_components(d_in);
    let spectrum = forward_spectrum(g);
    let grid = *g.grid();
    let odd = mult.odd();
    let mut out = vec![Complex::new(T::zero(), T::zero()); grid.node_count() * d_out];
    for flat in 0..grid.node_count() {
        if odd && grid.touches_nyquist(flat) {
            continue;
        }
        let xi = grid.frequency_vector(flat);
        match mult.at(&xi[..grid.dim()]) {
            BinAction::Zero => {}
            BinAction::Scalar(s) => {
                for c in 0..d_out {
                    out[flat * d_out + c] = spectrum[flat * d_in + c] * s;
                }
            }
            BinAction::Matrix(m) => {
                if m.nrows() != d_out || m.ncols() != d_in {
                    return Err(Error::DimensionMismatch {
                        context: "multiplier matrix shape".into(),
                        expected: d_out * d_in,
                        got: m.nrows() * m.ncols(),
                    });
                }
                let v = DVector::from_fn(d_in, |i, _| spectrum[flat * d_in + i]);
                let w = m * v;
                for c in 0..d_out {
                    out[flat * d_out + c] = w[c];
                }
            }
            BinAction::Fail => {
                return Err(Error::Singular(
                    "multiplier symbol is singular at a nonzero frequency".into(),
                ));
            }
        }
    }
    field_from_spectrum(grid, d_out, out)
}

/// A(D) phi by the symbol i^m A(xi); input components e_dim, output f_dim.
/// Odd-order operators are zeroed at Nyquist bins like odd multipliers.
pub fn apply_operator<T: Real>(op: &HomogeneousOperator<T>, phi: &Field<T>) -> Result<Field<T>> {
    if op.dim() != phi.grid().dim() {
        return Err(Error::DimensionMismatch {
            context: "operator dimension".into(),
            expected: phi.grid().dim(),
            got: op.dim(),
        });
    }
    if op.e_dim() != phi.components() {
        return Err(Error::DimensionMismatch {
            context: "operator input components".into(),
            expected: op.e_dim(),
            got: phi.components(),
        });
    }
    let grid = *phi.grid();
    let d_in = op.e_dim();
    let d_out = op.f_dim();
    let spectrum = forward_spectrum(phi);
    let factor = i_power::<T>(op.order(), false);
    let odd = op.order() % 2 == 1;
    let mut out = vec![Complex::new(T::zero(), T::zero()); grid.node_count() * d_out];
    for flat in 0..grid.node_count() {
        if odd && grid.touches_nyquist(flat) {
            continue;
        }
        let xi = grid.frequency_vector(flat);
        let a = op.eval_symbol(&xi[..grid.dim()])?;
        let v = DVector::from_fn(d_in, |i, _| spectrum[flat * d_in + i]);
        let w = a * v * factor;
        for c in 0..d_out {
            out[flat * d_out + c] = w[c];
        }
    }
    field_from_spectrum(grid, d_out, out)
}

/// Scalar field |D^j u|: the pointwise Euclidean norm of all derivatives
/// d^beta u with |beta| = j, across every component of u.
pub fn derivative_magnitude<T: Real>(u: &Field<T>, j: u32) -> Result<Field<T>> {
    let grid = *u.grid();
    if j == 0 {
        let data = (0..grid.node_count())
            .map(|k| Complex::new(u.magnitude_at(k), T::zero()))
            .collect();
        return Field::new(grid, 1, data);
    }
    let d = u.components();
    let spectrum = forward_spectrum(u);
    let odd = j % 2 == 1;
    let factor = i_power::<T>(j, false);
    let mut sum_sq = vec![T::zero(); grid.node_count()];
    for beta in MultiIndex::all_of_order(grid.dim(), j) {
        let mut scaled = vec![Complex::new(T::zero(), T::zero()); spectrum.len()];
        for flat in 0..grid.node_count() {
            if odd && grid.touches_nyquist(flat) {
                continue;
            }
            let xi = grid.frequency_vector(flat);
            let s = factor * Complex::new(beta.xi_pow(&xi[..grid.dim()]), T::zero());
            for c in 0..d {
                scaled[flat * d + c] = spectrum[flat * d + c] * s;
            }
        }
        let deriv = field_from_spectrum(grid, d, scaled)?;
        for (flat, slot) in sum_sq.iter_mut().enumerate() {
            for c in 0..d {
                *slot += deriv.data[flat * d + c].norm_sqr();
            }
        }
    }
    let data = sum_sq.into_iter().map(|s| Complex::new(s.sqrt(), T::zero())).collect();
    Field::new(grid, 1, data)
}

/// Integral of |g| w over the box by node quadrature; the weight is sampled
/// with its origin-cell patch.
pub fn weighted_l1_norm<T: Real>(g: &Field<T>, w: &Weight<T>) -> Result<T> {
    if w.dim() != g.grid().dim() {
        return Err(Error::DimensionMismatch {
            context: "weight dimension".into(),
            expected: g.grid().dim(),
            got: w.dim(),
        });
    }
    let samples = w.sample_on_grid(g.grid())?;
    let terms: Vec<T> = (0..g.grid().node_count())
        .map(|k| g.magnitude_at(k) * samples.value_at_node(k))
        .collect();
    Ok(pairwise_sum(&terms) * g.grid().cell_volume())
}

/// Weighted Lq norm against a positive measure together with the number of
/// atoms that fell outside the grid box (excluded from the sum).
#[derive(Clone, Copy, Debug)]
pub struct MeasureNorm<T> {
    pub value: T,
    pub excluded_atoms: usize,
}

/// (integral |g|^q d nu)^(1/q). Atomic measures read g by multilinear
/// interpolation at each atom; density measures use node quadrature on the
/// measure's own grid (interpolating g when the grids differ).
pub fn weighted_lq_nu_norm<T: Real>(
    g: &Field<T>,
    q: T,
    nu: &PositiveMeasure<T>,
) -> Result<MeasureNorm<T>> {
    if !(q >= T::one()) || !q.is_finite() {
        return Err(Error::domain("exponent q must satisfy q >= 1"));
    }
    if nu.dim() != g.grid().dim() {
        return Err(Error::DimensionMismatch {
            context: "measure dimension".into(),
            expected: g.grid().dim(),
            got: nu.dim(),
        });
    }
    let mut excluded = 0usize;
    let mut terms: Vec<T> = Vec::new();
    match nu {
        PositiveMeasure::Atomic { points, masses } => {
            for (x, &mass) in points.iter().zip(masses.iter()) {
                match g.interpolate(x) {
                    Some(values) => {
                        let mag = complex_vec_norm(&values);
                        terms.push(mag.powf(q) * mass);
                    }
                    None => excluded += 1,
                }
            }
        }
        PositiveMeasure::Density { grid, samples } => {
            let vol = grid.cell_volume();
            if grid == g.grid() {
                for (flat, &s) in samples.iter().enumerate() {
                    terms.push(g.magnitude_at(flat).powf(q) * s * vol);
                }
            } else {
                for (flat, &s) in samples.iter().enumerate() {
                    let x = grid.node(flat);
                    match g.interpolate(&x[..grid.dim()]) {
                        Some(values) => {
                            let mag = complex_vec_norm(&values);
                            terms.push(mag.powf(q) * s * vol);
                        }
                        None => excluded += 1,
                    }
                }
            }
        }
    }
    let value = pairwise_sum(&terms).powf(T::one() / q);
    Ok(MeasureNorm { value, excluded_atoms: excluded })
}

/// Bilinear pairing integral of two fields on the same grid: the node sum of
/// the componentwise products times the cell volume, with no conjugation.
/// For real data this is the L2 pairing; complex coefficients follow the
/// transpose (not adjoint) convention.
pub fn field_pairing<T: Real>(f: &Field<T>, g: &Field<T>) -> Result<Complex<T>> {
    if f.grid() != g.grid() {
        return Err(Error::invalid("field pairing needs matching grids"));
    }
    if f.components() != g.components() {
        return Err(Error::DimensionMismatch {
            context: "field components",
            expected: f.components(),
            got: g.components(),
        });
    }
    let d = f.components();
    let mut re: Vec<T> = Vec::with_capacity(f.grid().node_count());
    let mut im: Vec<T> = Vec::with_capacity(f.grid().node_count());
    for flat in 0..f.grid().node_count() {
        let mut acc = Complex::new(T::zero(), T::zero());
        for c in 0..d {
            acc += f.data()[flat * d + c] * g.data()[flat * d + c];
        }
        re.push(acc.re);
        im.push(acc.im);
    }
    let vol = f.grid().cell_volume();
    Ok(Complex::new(pairwise_sum(&re) * vol, pairwise_sum(&im) * vol))
}

/// Integral of phi against a measure: exact atom sums with phi read by
/// multilinear interpolation (atoms outside the box contribute nothing), or
/// node quadrature for densities (interpolating when the grids differ).
pub fn pair_with_measure<T: Real>(phi: &Field<T>, mu: &Measure<T>) -> Result<Complex<T>> {
    if mu.dim() != phi.grid().dim() {
        return Err(Error::DimensionMismatch {
            context: "measure dimension",
            expected: phi.grid().dim(),
            got: mu.dim(),
        });
    }
    if mu.e_dim() != phi.components() {
        return Err(Error::DimensionMismatch {
            context: "measure components",
            expected: phi.components(),
            got: mu.e_dim(),
        });
    }
    let mut re: Vec<T> = Vec::new();
    let mut im: Vec<T> = Vec::new();
    let mut push = |acc: Complex<T>| {
        re.push(acc.re);
        im.push(acc.im);
    };
    match mu {
        Measure::Atomic { points, values } => {
            for (x, v) in points.iter().zip(values.iter()) {
                if let Some(phi_x) = phi.interpolate(x) {
                    let mut acc = Complex::new(T::zero(), T::zero());
                    for (p, m) in phi_x.iter().zip(v.iter()) {
                        acc += *p * *m;
                    }
                    push(acc);
                }
            }
        }
        Measure::Density { grid, e_dim, samples } => {
            let vol = grid.cell_volume();
            let d = *e_dim;
            if grid == phi.grid() {
                for flat in 0..grid.node_count() {
                    let mut acc = Complex::new(T::zero(), T::zero());
                    for c in 0..d {
                        acc += phi.data()[flat * d + c] * samples[flat * d + c];
                    }
                    push(acc * vol);
                }
            } else {
                for flat in 0..grid.node_count() {
                    let x = grid.node(flat);
                    if let Some(phi_x) = phi.interpolate(&x[..grid.dim()]) {
                        let mut acc = Complex::new(T::zero(), T::zero());
                        for c in 0..d {
                            acc += phi_x[c] * samples[flat * d + c];
                        }
                        push(acc * vol);
                    }
                }
            }
        }
    }
    Ok(Complex::new(pairwise_sum(&re), pairwise_sum(&im)))
}

/// (integral of |g|^p w)^(1/p) by node quadrature with the weight's
/// origin-cell patch.
pub fn weighted_lp_norm<T: Real>(g: &Field<T>, p: T, w: &Weight<T>) -> Result<T> {
    if !(p >= T::one()) || !p.is_finite() {
        return Err(Error::domain("exponent p must satisfy p >= 1"));
    }
    if w.dim() != g.grid().dim() {
        return Err(Error::DimensionMismatch {
            context: "weight dimension",
            expected: g.grid().dim(),
            got: w.dim(),
        });
    }
    let samples = w.sample_on_grid(g.grid())?;
    let terms: Vec<T> = (0..g.grid().node_count())
        .map(|k| g.magnitude_at(k).powf(p) * samples.value_at_node(k))
        .collect();
    Ok((pairwise_sum(&terms) * g.grid().cell_volume()).powf(T::one() / p))
}

/// Wrap-around diagnostic: the largest field magnitude on nodes in the outer
/// quarter of the box (any axis with |x| >= 0.75 L). Fields synthesized with
/// the recommended margin keep this at rounding level.
pub fn boundary_leakage<T: Real>(g: &Field<T>) -> T {
    let grid = g.grid();
    let cutoff = lit::<T>(0.75) * grid.half_width();
    let mut worst = T::zero();
    for flat in 0..grid.node_count() {
        let x = grid.node(flat);
        let in_margin = (0..grid.dim()).any(|axis| x[axis].abs() >= cutoff);
        if in_margin {
            let m = g.magnitude_at(flat);
            if m > worst {
                worst = m;
            }
        }
    }
    worst
}
