//! Vector measures, their total variations, ball masses, Riesz potentials
//! and weighted energies, plus a truncated-energy growth diagnostic.
//!
//! Conventions: balls are open everywhere; density samples are per-node
//! values, integrated with the cell-center rule (value times cell volume).

use num_complex::Complex;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::scalar::{complex_vec_norm, dist, from_usize, lit, pairwise_sum, Real};
use crate::weights::Weight;

/// Finite vector measure: atoms with values in E, or a density sampled on a
/// grid (d components per node, node-major layout).
#[derive(Clone, Debug)]
pub enum Measure<T: Real> {
    Atomic { points: Vec<Vec<T>>, values: Vec<Vec<Complex<T>>> },
    Density { grid: Grid<T>, e_dim: usize, samples: Vec<Complex<T>> },
}

/// Non-negative measure, same carriers with scalar masses.
#[derive(Clone, Debug)]
pub enum PositiveMeasure<T: Real> {
    Atomic { points: Vec<Vec<T>>, masses: Vec<T> },
    Density { grid: Grid<T>, samples: Vec<T> },
}

impl<T: Real> Measure<T> {
    pub fn atomic(points: Vec<Vec<T>>, values: Vec<Vec<Complex<T>>>) -> Result<Self> {
        if points.len() != values.len() {
            return Err(Error::DimensionMismatch {
                context: "atoms and values",
                expected: points.len(),
                got: values.len(),
            });
        }
        if points.is_empty() {
            return Err(Error::invalid("atomic measure needs at least one atom"));
        }
        let dim = points[0].len();
        let e_dim = values[0].len();
        if dim == 0 || dim > crate::grid::MAX_DIM {
            return Err(Error::invalid("atom dimension must be 1..=3"));
        }
        if e_dim == 0 {
            return Err(Error::invalid("atom values must be nonempty vectors"));
        }
        for p in &points {
            if p.len() != dim || p.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid("atom points must be finite, fixed dimension"));
            }
        }
        for v in &values {
            if v.len() != e_dim || v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::invalid("atom values must be finite, fixed dimension"));
            }
        }
        Ok(Measure::Atomic { points, values })
    }

    pub fn density(grid: Grid<T>, e_dim: usize, samples: Vec<Complex<T>>) -> Result<Self> {
        if e_dim == 0 {
            return Err(Error::invalid("density needs a positive component count"));
        }
        if samples.len() != grid.node_count() * e_dim {
            return Err(Error::DimensionMismatch {
                context: "density sample count",
                expected: grid.node_count() * e_dim,
                got: samples.len(),
            });
        }
        if samples.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid("density samples must be finite"));
        }
        Ok(Measure::Density { grid, e_dim, samples })
    }

    pub fn from_positive(nu: &PositiveMeasure<T>) -> Self {
        match nu {
            PositiveMeasure::Atomic { points, masses } => Measure::Atomic {
                points: points.clone(),
                values: masses.iter().map(|&m| vec![Complex::new(m, T::zero())]).collect(),
            },
            PositiveMeasure::Density { grid, samples } => Measure::Density {
                grid: *grid,
                e_dim: 1,
                samples: samples.iter().map(|&s| Complex::new(s, T::zero())).collect(),
            },
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Measure::Atomic { points, .. } => points[0].len(),
            Measure::Density { grid, .. } => grid.dim(),
        }
    }

    pub fn e_dim(&self) -> usize {
        match self {
            Measure::Atomic { values, .. } => values[0].len(),
            Measure::Density { e_dim, .. } => *e_dim,
        }
    }
}

impl<T: Real> PositiveMeasure<T> {
    pub fn atomic(points: Vec<Vec<T>>, masses: Vec<T>) -> Result<Self> {
        let values: Vec<Vec<Complex<T>>> =
            masses.iter().map(|&m| vec![Complex::new(m, T::zero())]).collect();
        // reuse the shape validation, then check positivity
        let _ = Measure::atomic(points.clone(), values)?;
        if masses.iter().any(|m| !(*m >= T::zero())) {
            return Err(Error::invalid("masses must be non-negative"));
        }
        Ok(PositiveMeasure::Atomic { points, masses })
    }

    pub fn density(grid: Grid<T>, samples: Vec<T>) -> Result<Self> {
        if samples.len() != grid.node_count() {
            return Err(Error::DimensionMismatch {
                context: "density sample count",
                expected: grid.node_count(),
                got: samples.len(),
            });
        }
        if samples.iter().any(|s| !(*s >= T::zero()) || !s.is_finite()) {
            return Err(Error::invalid("density samples must be non-negative and finite"));
        }
        Ok(PositiveMeasure::Density { grid, samples })
    }

    pub fn dim(&self) -> usize {
        match self {
            PositiveMeasure::Atomic { points, .. } => points[0].len(),
            PositiveMeasure::Density { grid, .. } => grid.dim(),
        }
    }

    pub fn atoms(&self) -> Option<(&[Vec<T>], &[T])> {
        match self {
            PositiveMeasure::Atomic { points, masses } => Some((points, masses)),
            _ => None,
        }
    }

    pub fn total_mass(&self) -> T {
        match self {
            PositiveMeasure::Atomic { masses, .. } => pairwise_sum(masses),
            PositiveMeasure::Density { grid, samples } => {
                pairwise_sum(samples) * grid.cell_volume()
            }
        }
    }
}

/// Total variation |mu|: Euclidean norms of atom values, pointwise norms of
/// density samples.
pub fn total_variation<T: Real>(mu: &Measure<T>) -> PositiveMeasure<T> {
    match mu {
        Measure::Atomic { points, values } => PositiveMeasure::Atomic {
            points: points.clone(),
            masses: values.iter().map(|v| complex_vec_norm(v)).collect(),
        },
        Measure::Density { grid, e_dim, samples } => PositiveMeasure::Density {
            grid: *grid,
            samples: (0..grid.node_count())
                .map(|node| complex_vec_norm(&samples[node * e_dim..(node + 1) * e_dim]))
                .collect(),
        },
    }
}

/// nu(B(y, r)) with the open-ball convention |x - y| < r.
pub fn ball_mass<T: Real>(nu: &PositiveMeasure<T>, y: &[T], r: T) -> T {
    if !(r > T::zero()) {
        return T::zero();
    }
    match nu {
        PositiveMeasure::Atomic { points, masses } => {
            let inside: Vec<T> = points
                .iter()
                .zip(masses)
                .filter(|(p, _)| dist(p, &y[..p.len()]) < r)
                .map(|(_, &m)| m)
                .collect();
            pairwise_sum(&inside)
        }
        PositiveMeasure::Density { grid, samples } => {
            let nodes = grid.nodes_in_ball(y, r);
            let vals: Vec<T> = nodes.iter().map(|&i| samples[i]).collect();
            pairwise_sum(&vals) * grid.cell_volume()
        }
    }
}

/// Riesz normalization gamma(m) = pi^{N/2} 2^m Gamma(m/2) / Gamma((N-m)/2),
/// defined for 0 < m < N.
pub fn riesz_gamma<T: Real>(dim: usize, m: T) -> Result<T> {
    let n = dim as f64;
    let mf = m.to_f64().ok_or_else(|| Error::invalid("order must be finite"))?;
    if !(mf > 0.0 && mf < n) {
        return Err(Error::domain(format!(
            "Riesz potential order needs 0 < m < {n}, got {mf}"
        )));
    }
    let value = std::f64::consts::PI.powf(n / 2.0) * 2f64.powf(mf) * gamma(mf / 2.0)
        / gamma((n - mf) / 2.0);
    Ok(lit::<T>(value))
}

/// I_m nu(x) for a positive measure: gamma(m)^{-1} sum m_i |x - x_i|^{m-N}
/// for atoms (exact), or the cell-center quadrature with the singular cell
/// excluded for densities. Evaluation at an atom is an error.
pub fn potential_of_positive<T: Real>(nu: &PositiveMeasure<T>, m: T, x: &[T]) -> Result<T> {
    let dim = nu.dim();
    let inv_gamma = T::one() / riesz_gamma(dim, m)?;
    let exponent = m - from_usize::<T>(dim);
    match nu {
        PositiveMeasure::Atomic { points, masses } => {
            let mut terms = Vec::with_capacity(points.len());
            for (p, &mass) in points.iter().zip(masses) {
                let d = dist(p, &x[..dim]);
                if d == T::zero() {
                    if mass > T::zero() {
                        return Err(Error::SingularEvaluation(
                            "potential evaluated at an atom location".into(),
                        ));
                    }
                    continue;
                }
                terms.push(mass * d.powf(exponent));
            }
            Ok(inv_gamma * pairwise_sum(&terms))
        }
        PositiveMeasure::Density { grid, samples } => {
            let h = grid.spacing();
            let half_cell = h / lit::<T>(2.0);
            let vol = grid.cell_volume();
            let mut terms = Vec::with_capacity(samples.len());
            for (node, &s) in samples.iter().enumerate() {
                if s == T::zero() {
                    continue;
                }
                let xs = grid.node(node);
                let d = dist(&xs[..dim], &x[..dim]);
                // the cell containing x is skipped: the kernel is integrable
                // there and the omission vanishes under refinement
                if d < half_cell {
                    continue;
                }
                terms.push(s * d.powf(exponent) * vol);
            }
            Ok(inv_gamma * pairwise_sum(&terms))
        }
    }
}

/// Componentwise Riesz potential of a vector measure.
pub fn potential_of_measure<T: Real>(mu: &Measure<T>, m: T, x: &[T]) -> Result<Vec<Complex<T>>> {
    let dim = mu.dim();
    let inv_gamma = Complex::new(T::one() / riesz_gamma(dim, m)?, T::zero());
    let exponent = m - from_usize::<T>(dim);
    match mu {
        Measure::Atomic { points, values } => {
            let e_dim = values[0].len();
            let mut acc = vec![Complex::new(T::zero(), T::zero()); e_dim];
            for (p, v) in points.iter().zip(values) {
                let d = dist(p, &x[..dim]);
                if d == T::zero() {
                    if complex_vec_norm(v) > T::zero() {
                        return Err(Error::SingularEvaluation(
                            "potential evaluated at an atom location".into(),
                        ));
                    }
                    continue;
                }
                let k = Complex::new(d.powf(exponent), T::zero());
                for (a, &z) in acc.iter_mut().zip(v) {
                    *a += z * k;
                }
            }
            Ok(acc.into_iter().map(|z| z * inv_gamma).collect())
        }
        Measure::Density { grid, e_dim, samples } => {
            let h = grid.spacing();
            let half_cell = h / lit::<T>(2.0);
            let volc = Complex::new(grid.cell_volume(), T::zero());
            let mut acc = vec![Complex::new(T::zero(), T::zero()); *e_dim];
            for node in 0..grid.node_count() {
                let xs = grid.node(node);
                let d = dist(&xs[..dim], &x[..dim]);
                if d < half_cell {
                    continue;
                }
                let k = Complex::new(d.powf(exponent), T::zero()) * volc;
                for c in 0..*e_dim {
                    acc[c] += samples[node * e_dim + c] * k;
                }
            }
            Ok(acc.into_iter().map(|z| z * inv_gamma).collect())
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct EnergyReport<T> {
    /// (integral over B(0,R) of |I_m mu|^p w)^{1/p} by grid quadrature.
    pub strong: T,
    /// max over a 64-level log lambda ladder of lambda * w({|I_m mu| > lambda}).
    pub weak: T,
    pub truncation_radius: T,
    pub p: T,
    pub m: T,
}

const WEAK_LEVELS: usize = 64;

/// Strong and weak weighted energies of I_m mu over B(0, R), quadrature on
/// the supplied grid. Nodes carrying atoms are excluded (a null set).
pub fn energy_norms<T: Real>(
    mu: &Measure<T>,
    m: T,
    p: T,
    w: &Weight<T>,
    grid: &Grid<T>,
    truncation_radius: T,
) -> Result<EnergyReport<T>> {
    if !(p >= T::one()) {
        return Err(Error::invalid("energy exponent needs p >= 1"));
    }
    if !(truncation_radius > T::zero()) {
        return Err(Error::invalid("truncation radius must be positive"));
    }
    let dim = mu.dim();
    if grid.dim() != dim {
        return Err(Error::DimensionMismatch {
            context: "energy grid dimension",
            expected: dim,
            got: grid.dim(),
        });
    }
    let w_grid = w.sample_on_grid(grid)?;
    let vol = grid.cell_volume();
    let origin = vec![T::zero(); dim];
    let nodes = grid.nodes_in_ball(&origin, truncation_radius);
    let evaluated: Vec<Option<(T, T)>> = nodes
        .par_iter()
        .map(|&node| {
            let x = grid.node(node);
            match potential_of_measure(mu, m, &x[..dim]) {
                Ok(v) => Some((complex_vec_norm(&v), w_grid.value_at_node(node))),
                Err(_) => None, // node sits on an atom: null set, skipped
            }
        })
        .collect();
    let pairs: Vec<(T, T)> = evaluated.into_iter().flatten().collect();

    let powered: Vec<T> = pairs.iter().map(|&(f, wv)| f.powf(p) * wv * vol).collect();
    let strong = pairwise_sum(&powered).powf(T::one() / p);

    // weak norm: sort by level, prefix-sum the weighted volumes, then probe
    // a logarithmic lambda ladder between the positive extremes
    let mut by_level: Vec<(T, T)> = pairs.into_iter().filter(|&(f, _)| f > T::zero()).collect();
    by_level.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite potentials"));
    let mut weak = T::zero();
    if !by_level.is_empty() {
        let mut prefix = Vec::with_capacity(by_level.len());
        let mut acc = T::zero();
        for &(_, wv) in &by_level {
            acc += wv * vol;
            prefix.push(acc);
        }
        let max_f = by_level.first().expect("nonempty").0;
        let min_f = by_level.last().expect("nonempty").0;
        let lo = (min_f * lit::<T>(0.5)).max(max_f * lit::<T>(1e-12)).ln();
        let hi = max_f.ln();
        for level in 0..WEAK_LEVELS {
            let t = from_usize::<T>(level) / from_usize::<T>(WEAK_LEVELS - 1);
            let lambda = (lo + (hi - lo) * t).exp();
            // measure of {f > lambda}: entries strictly above lambda sit in
            // the sorted prefix; binary search for the boundary
            let mut n_above = by_level.partition_point(|&(f, _)| f > lambda);
            if n_above > by_level.len() {
                n_above = by_level.len();
            }
            if n_above > 0 {
                let candidate = lambda * prefix[n_above - 1];
                if candidate > weak {
                    weak = candidate;
                }
            }
        }
    }
    Ok(EnergyReport { strong, weak, truncation_radius, p, m })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum GrowthVerdict {
    Diverges,
    Converges,
}

#[derive(Clone, Debug, Serialize)]
pub struct GrowthRow<T> {
    pub radius: T,
    pub energy: T,
}

#[derive(Clone, Debug, Serialize)]
pub struct VanishingReport<T> {
    pub verdict: GrowthVerdict,
    pub table: Vec<GrowthRow<T>>,
    /// fitted dyadic exponent of the shell increments of E^p
    pub fitted_rate: T,
    /// analytic radial rate (m-N)p + alpha + N for a point mass at origin
    pub predicted_rate: T,
}

/// Truncated weighted energies over a radius schedule, with a growth verdict
/// read off the dyadic shell increments of E(R)^p.
///
/// A fixed grid spanning the largest radius carries every truncation, so the
/// increments isolate outer-shell behavior; per-radius regridding would
/// rescale the near-origin contribution and mask logarithmic growth.
pub fn vanishing_diagnostic<T: Real>(
    nu: &PositiveMeasure<T>,
    m: T,
    p: T,
    alpha: T,
    radii: &[T],
) -> Result<VanishingReport<T>> {
    if radii.len() < 4 {
        return Err(Error::invalid("growth diagnostic needs at least 4 radii"));
    }
    let mut sorted = radii.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite radii"));
    if !(sorted[0] > T::zero()) {
        return Err(Error::invalid("radii must be positive"));
    }
    let dim = nu.dim();
    if !(p >= T::one()) {
        return Err(Error::invalid("energy exponent needs p >= 1"));
    }
    if !(alpha > -from_usize::<T>(dim)) {
        return Err(Error::invalid("power exponent must exceed -N for local integrability"));
    }
    let predicted = (m - from_usize::<T>(dim)) * p + alpha + from_usize::<T>(dim);

    let r_max = *sorted.last().expect("nonempty");
    let n = match dim {
        1 => 1024,
        2 => 256,
        _ => 64,
    };
    let grid = Grid::new(dim, n, r_max)?;
    let mu = Measure::from_positive(nu);
    // per-node contribution to E^p, accumulated into the first radius rung
    // that contains the node; prefix sums then give every truncation
    let contributions: Vec<(usize, T)> = (0..grid.node_count())
        .into_par_iter()
        .filter_map(|node| {
            let x = grid.node(node);
            let r = crate::scalar::norm(&x[..dim]);
            let rung = sorted.partition_point(|&rr| rr <= r);
            if rung == sorted.len() {
                return None; // outside the largest truncation
            }
            let f = match potential_of_measure(&mu, m, &x[..dim]) {
                Ok(v) => complex_vec_norm(&v),
                Err(_) => return None, // atom node
            };
            let wv = if r == T::zero() {
                // inscribed-ball average keeps the power weight finite
                let half = grid.spacing() / lit::<T>(2.0);
                from_usize::<T>(dim) * half.powf(alpha) / (from_usize::<T>(dim) + alpha)
            } else {
                r.powf(alpha)
            };
            Some((rung, f.powf(p) * wv * grid.cell_volume()))
        })
        .collect();
    let mut per_rung = vec![T::zero(); sorted.len()];
    for (rung, c) in contributions {
        per_rung[rung] += c;
    }
    let mut table = Vec::with_capacity(sorted.len());
    let mut acc = T::zero();
    for (rung, &r) in sorted.iter().enumerate() {
        acc += per_rung[rung];
        table.push(GrowthRow { radius: r, energy: acc.powf(T::one() / p) });
    }

    // dyadic exponent of the increments, averaged over the outer half
    let mut slopes = Vec::new();
    for k in 1..sorted.len() - 1 {
        let d0 = per_rung[k];
        let d1 = per_rung[k + 1];
        let dr = (sorted[k + 1] / sorted[k]).ln() / lit::<T>(std::f64::consts::LN_2);
        if d0 > T::zero() && d1 > T::zero() && dr > T::zero() {
            slopes.push((d1 / d0).ln() / lit::<T>(std::f64::consts::LN_2) / dr);
        }
    }
    let fitted = if slopes.is_empty() {
        // no measurable growth at all: treat as strongly converging
        lit::<T>(-1e3)
    } else {
        let tail = &slopes[slopes.len() / 2..];
        pairwise_sum(tail) / from_usize(tail.len())
    };
    let verdict = if fitted > lit::<T>(-0.25) {
        GrowthVerdict::Diverges
    } else {
        GrowthVerdict::Converges
    };
    Ok(VanishingReport { verdict, table, fitted_rate: fitted, predicted_rate: predicted })
}
