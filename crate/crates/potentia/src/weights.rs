//! Weights on R^N: pointwise evaluation, ball averages, Muckenhoupt A_p
//! constants with a divergence diagnostic, the analytic power-weight class
//! rule, and the Hardy-Littlewood maximal function on grids.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::scalar::{from_usize, lit, Real};

/// Volume of the unit ball, dimensions 1..=3.
pub fn unit_ball_volume<T: Real>(dim: usize) -> T {
    match dim {
        1 => lit::<T>(2.0),
        2 => T::pi(),
        3 => lit::<T>(4.0) / lit::<T>(3.0) * T::pi(),
        _ => panic!("unit ball volume implemented for dim 1..=3"),
    }
}

/// Weight samples attached to a grid; the a.e. representative of w.
#[derive(Clone, Debug)]
pub struct GridWeight<T: Real> {
    grid: Grid<T>,
    values: Vec<T>,
}

impl<T: Real> GridWeight<T> {
    pub fn new(grid: Grid<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::DimensionMismatch {
                context: "grid weight sample count",
                expected: grid.node_count(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !(*v > T::zero()) || !v.is_finite()) {
            return Err(Error::invalid("grid weight values must be strictly positive and finite"));
        }
        Ok(GridWeight { grid, values })
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn value_at_node(&self, flat: usize) -> T {
        self.values[flat]
    }
}

/// Weight variants: the analytic power family |x|^alpha and sampled grids.
#[derive(Clone, Debug)]
pub enum Weight<T: Real> {
    Power { dim: usize, alpha: T },
    Grid(GridWeight<T>),
}

impl<T: Real> Weight<T> {
    /// |x|^alpha; local integrability needs alpha > -N.
    pub fn power(dim: usize, alpha: T) -> Result<Self> {
        if dim == 0 || dim > crate::grid::MAX_DIM {
            return Err(Error::invalid("power weight dimension must be 1..=3"));
        }
        if !(alpha > -from_usize::<T>(dim)) || !alpha.is_finite() {
            return Err(Error::invalid(format!(
                "power weight needs alpha > -{dim} for local integrability"
            )));
        }
        Ok(Weight::Power { dim, alpha })
    }

    pub fn from_grid(grid: Grid<T>, values: Vec<T>) -> Result<Self> {
        Ok(Weight::Grid(GridWeight::new(grid, values)?))
    }

    pub fn dim(&self) -> usize {
        match self {
            Weight::Power { dim, .. } => *dim,
            Weight::Grid(g) => g.grid.dim(),
        }
    }

    pub fn as_grid(&self) -> Option<&GridWeight<T>> {
        match self {
            Weight::Grid(g) => Some(g),
            _ => None,
        }
    }

    /// Pointwise value; for a grid weight, the nearest-node representative.
    /// A power weight with negative exponent returns +inf at the origin.
    pub fn evaluate(&self, x: &[T]) -> T {
        match self {
            Weight::Power { dim, alpha } => {
                let r = crate::scalar::norm(&x[..*dim]);
                if r == T::zero() {
                    if *alpha == T::zero() {
                        T::one()
                    } else if *alpha > T::zero() {
                        T::zero()
                    } else {
                        T::one() / T::zero()
                    }
                } else {
                    r.powf(*alpha)
                }
            }
            Weight::Grid(g) => match g.grid.nearest_node(x) {
                Some(flat) => g.values[flat],
                None => T::one(),
            },
        }
    }

    /// Samples the weight on a grid. For a singular power weight the origin
    /// node takes the average over the inscribed ball B(0, h/2), keeping the
    /// samples finite while preserving the local integral scale.
    pub fn sample_on_grid(&self, grid: &Grid<T>) -> Result<GridWeight<T>> {
        match self {
            Weight::Power { dim, alpha } => {
                if *dim != grid.dim() {
                    return Err(Error::DimensionMismatch {
                        context: "weight/grid dimension",
                        expected: *dim,
                        got: grid.dim(),
                    });
                }
                let half_cell = grid.spacing() / lit::<T>(2.0);
                let origin_patch = centered_power_average(*dim, *alpha, half_cell);
                let values: Vec<T> = (0..grid.node_count())
                    .map(|flat| {
                        let x = grid.node(flat);
                        let r = crate::scalar::norm(&x[..*dim]);
                        if r == T::zero() {
                            origin_patch
                        } else {
                            r.powf(*alpha)
                        }
                    })
                    .collect();
                GridWeight::new(*grid, values)
            }
            Weight::Grid(g) => {
                if g.grid == *grid {
                    Ok(g.clone())
                } else {
                    let values: Vec<T> = (0..grid.node_count())
                        .map(|flat| self.evaluate(&grid.node(flat)[..grid.dim()]))
                        .collect();
                    GridWeight::new(*grid, values)
                }
            }
        }
    }
}

/// Average of |x|^alpha over B(0, r): N r^alpha / (N + alpha).
fn centered_power_average<T: Real>(dim: usize, alpha: T, r: T) -> T {
    from_usize::<T>(dim) * r.powf(alpha) / (from_usize::<T>(dim) + alpha)
}

/// Integral of |x|^alpha over B(0, r).
fn centered_power_integral<T: Real>(dim: usize, alpha: T, r: T) -> T {
    centered_power_average(dim, alpha, r) * unit_ball_volume::<T>(dim) * r.powi(dim as i32)
}

/// Midpoint quadrature of |x|^alpha over an off-center ball, with recursive
/// refinement of cells near the origin (the only place the integrand is
/// rough). Returns (integral, covered volume) under the cell-center rule so
/// averages divide by the matching discrete volume.
fn power_integral_over_ball<T: Real>(dim: usize, alpha: T, center: &[T], r: T) -> (T, T) {
    let cells_per_axis: usize = match dim {
        1 => 512,
        2 => 64,
        _ => 24,
    };
    let side = lit::<T>(2.0) * r / from_usize(cells_per_axis);
    let mut integral = T::zero();
    let mut volume = T::zero();
    let mut idx = [0usize; 3];
    loop {
        let mut cell_center = [T::zero(); 3];
        let mut d2 = T::zero();
        for axis in 0..dim {
            let c = center[axis] - r + (from_usize::<T>(idx[axis]) + lit::<T>(0.5)) * side;
            cell_center[axis] = c;
            let d = c - center[axis];
            d2 += d * d;
        }
        if d2 < r * r {
            let (cell_int, cell_vol) = power_cell_integral(dim, alpha, &cell_center[..dim], side, 0);
            integral += cell_int;
            volume += cell_vol;
        }
        let mut axis = dim;
        loop {
            if axis == 0 {
                return (integral, volume);
            }
            axis -= 1;
            if idx[axis] + 1 < cells_per_axis {
                idx[axis] += 1;
                break;
            }
            idx[axis] = 0;
        }
    }
}

/// Integral of |x|^alpha over the cube of side `side` centered at `c`.
/// Cells far from the origin use the midpoint rule; cells near it subdivide,
/// and at the recursion floor the cube is replaced by the volume-matched
/// centered ball, whose integral is in closed form. Contributions shrink
/// like 2^{-(N+alpha)} per level, so the floor error is negligible.
fn power_cell_integral<T: Real>(dim: usize, alpha: T, c: &[T], side: T, depth: usize) -> (T, T) {
    let vol = side.powi(dim as i32);
    let dist = crate::scalar::norm(c);
    let half_diag = side * from_usize::<T>(dim).sqrt() / lit::<T>(2.0);
    if dist > lit::<T>(4.0) * half_diag {
        return (dist.powf(alpha) * vol, vol);
    }
    if depth >= 24 {
        if dist <= half_diag {
            // volume-matched ball around the origin
            let r_eq = (vol / unit_ball_volume::<T>(dim)).powf(T::one() / from_usize(dim));
            return (centered_power_integral(dim, alpha, r_eq), vol);
        }
        return (dist.powf(alpha) * vol, vol);
    }
    let half = side / lit::<T>(2.0);
    let quarter = side / lit::<T>(4.0);
    let mut integral = T::zero();
    for corner in 0..(1usize << dim) {
        let mut child = [T::zero(); 3];
        for axis in 0..dim {
            let sign = if (corner >> axis) & 1 == 1 { T::one() } else { -T::one() };
            child[axis] = c[axis] + sign * quarter;
        }
        integral += power_cell_integral(dim, alpha, &child[..dim], half, depth + 1).0;
    }
    (integral, vol)
}

/// Average of the weight over the open ball B(center, r).
///
/// Power weights centered at the origin use the closed form
/// N r^alpha / (N + alpha); off-center balls fall back to refined midpoint
/// quadrature. Grid weights average the values at nodes whose cell centers
/// lie in the ball (nearest node when the ball is smaller than a cell).
pub fn ball_average<T: Real>(w: &Weight<T>, center: &[T], r: T) -> Result<T> {
    if !(r > T::zero()) {
        return Err(Error::invalid("ball average needs r > 0"));
    }
    match w {
        Weight::Power { dim, alpha } => {
            let c_norm = crate::scalar::norm(&center[..*dim]);
            if c_norm == T::zero() {
                return Ok(centered_power_average(*dim, *alpha, r));
            }
            let (integral, volume) = power_integral_over_ball(*dim, *alpha, center, r);
            if volume > T::zero() {
                Ok(integral / volume)
            } else {
                Ok(c_norm.powf(*alpha))
            }
        }
        Weight::Grid(g) => {
            let nodes = g.grid.nodes_in_ball(center, r);
            if nodes.is_empty() {
                return match g.grid.nearest_node(center) {
                    Some(flat) => Ok(g.values[flat]),
                    None => Err(Error::domain("ball lies outside the weight grid")),
                };
            }
            let sum = crate::scalar::pairwise_sum(
                &nodes.iter().map(|&i| g.values[i]).collect::<Vec<T>>(),
            );
            Ok(sum / from_usize(nodes.len()))
        }
    }
}

/// Essential supremum of 1/w over the open ball, with the grid convention
/// that node samples are the a.e. representative. Infinite exactly when a
/// positive-exponent power weight's zero lies inside the ball.
fn ess_sup_inverse_on_ball<T: Real>(w: &Weight<T>, center: &[T], r: T) -> T {
    match w {
        Weight::Power { dim, alpha } => {
            let c_norm = crate::scalar::norm(&center[..*dim]);
            if *alpha == T::zero() {
                T::one()
            } else if *alpha > T::zero() {
                if c_norm < r {
                    T::one() / T::zero()
                } else {
                    (c_norm - r).powf(-*alpha)
                }
            } else {
                (c_norm + r).powf(-*alpha)
            }
        }
        Weight::Grid(g) => {
            let nodes = g.grid.nodes_in_ball(center, r);
            let mut sup = T::zero();
            for &i in &nodes {
                let inv = T::one() / g.values[i];
                if inv > sup {
                    sup = inv;
                }
            }
            if nodes.is_empty() {
                if let Some(flat) = g.grid.nearest_node(center) {
                    sup = T::one() / g.values[flat];
                }
            }
            sup
        }
    }
}

/// Balls over which Muckenhoupt products are maximized: every center is
/// paired with every radius of a geometric ladder.
#[derive(Clone, Debug)]
pub struct BallFamily<T> {
    centers: Vec<Vec<T>>,
    radii: Vec<T>,
}

impl<T: Real> BallFamily<T> {
    pub fn new(centers: Vec<Vec<T>>, r0: T, ratio: T, count: usize) -> Result<Self> {
        if centers.is_empty() || count == 0 {
            return Err(Error::invalid("ball family needs centers and radii"));
        }
        if !(r0 > T::zero()) || !(ratio > T::one()) {
            return Err(Error::invalid("ball family needs r0 > 0 and ratio > 1"));
        }
        let dim = centers[0].len();
        if centers.iter().any(|c| c.len() != dim) {
            return Err(Error::invalid("ball centers of mixed dimension"));
        }
        let mut radii = Vec::with_capacity(count);
        let mut r = r0;
        for _ in 0..count {
            radii.push(r);
            r *= ratio;
        }
        Ok(BallFamily { centers, radii })
    }

    /// Default probe family: origin plus a small off-center lattice at unit
    /// scale, radii spanning about four decades around `scale`.
    pub fn standard(dim: usize, scale: T) -> Result<Self> {
        let mut centers = vec![vec![T::zero(); dim]];
        for axis in 0..dim {
            for sign in [T::one(), -T::one()] {
                let mut c = vec![T::zero(); dim];
                c[axis] = sign * scale * lit::<T>(0.35);
                centers.push(c);
            }
        }
        let mut diag = vec![scale * lit::<T>(0.2); dim];
        diag[0] = -diag[0];
        centers.push(diag);
        BallFamily::new(centers, scale * lit::<T>(1e-3), lit::<T>(2.0).sqrt(), 28)
    }

    pub fn radii(&self) -> &[T] {
        &self.radii
    }

    pub fn centers(&self) -> &[Vec<T>] {
        &self.centers
    }

    /// Same centers, first `count` radii; for monotonicity checks.
    pub fn truncated(&self, count: usize) -> Result<Self> {
        if count == 0 || count > self.radii.len() {
            return Err(Error::invalid("truncation must keep 1..=len radii"));
        }
        Ok(BallFamily { centers: self.centers.clone(), radii: self.radii[..count].to_vec() })
    }

    pub fn ball_count(&self) -> usize {
        self.centers.len() * self.radii.len()
    }
}

#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct ApReport<T> {
    /// Largest finite A_p product seen over the family.
    pub estimate: T,
    /// True when a product is exactly infinite (analytic detection) or the
    /// running maximum grew by more than 10x over the last radius decade.
    pub diverging: bool,
    pub balls_evaluated: usize,
}

/// A_p product for one ball: (avg w) (avg w^{1/(1-p)})^{p-1} for p > 1, and
/// (avg w) ess-sup(1/w) for p = 1. Infinite products are reported as +inf.
fn ap_product<T: Real>(w: &Weight<T>, p: T, center: &[T], r: T) -> Result<T> {
    let avg_w = ball_average(w, center, r)?;
    if p == T::one() {
        return Ok(avg_w * ess_sup_inverse_on_ball(w, center, r));
    }
    let dual = match w {
        Weight::Power { dim, alpha } => {
            let dual_alpha = *alpha / (T::one() - p);
            if !(dual_alpha > -from_usize::<T>(*dim)) {
                // w^{1/(1-p)} fails local integrability: the product is
                // infinite on any ball containing the origin
                let c_norm = crate::scalar::norm(&center[..*dim]);
                if c_norm < r {
                    return Ok(T::one() / T::zero());
                }
                // origin outside: integrand is bounded there, quadrature ok
                let (integral, volume) = power_integral_over_ball(*dim, dual_alpha, center, r);
                return Ok(avg_w * (integral / volume).powf(p - T::one()));
            }
            Weight::power(*dim, dual_alpha)?
        }
        Weight::Grid(g) => {
            let inv: Vec<T> = g.values.iter().map(|v| v.powf(T::one() / (T::one() - p))).collect();
            Weight::Grid(GridWeight::new(g.grid, inv)?)
        }
    };
    let avg_dual = ball_average(&dual, center, r)?;
    Ok(avg_w * avg_dual.powf(p - T::one()))
}

/// Running maximum of the A_p product over the ball family, plus a
/// divergence verdict: exact infinities (power weights out of class) or a
/// >10x growth of the running maximum across the last radius decade.
pub fn ap_constant<T: Real>(w: &Weight<T>, p: T, balls: &BallFamily<T>) -> Result<ApReport<T>> {
    if !(p >= T::one()) {
        return Err(Error::invalid("Muckenhoupt exponent needs p >= 1"));
    }
    let mut best_finite = T::zero();
    let mut saw_infinite = false;
    // running max after all balls of radius <= r, tracked per radius rung
    let mut running: Vec<T> = Vec::with_capacity(balls.radii.len());
    let mut evaluated = 0usize;
    for &r in &balls.radii {
        let mut rung_max = running.last().copied().unwrap_or(T::zero());
        for center in &balls.centers {
            let product = ap_product(w, p, center, r)?;
            evaluated += 1;
            if !product.is_finite() {
                saw_infinite = true;
                continue;
            }
            if product > best_finite {
                best_finite = product;
            }
            if product > rung_max {
                rung_max = product;
            }
        }
        running.push(rung_max);
    }
    let mut diverging = saw_infinite;
    if !diverging {
        let r_max = *balls.radii.last().expect("nonempty radii");
        let r_cut = r_max / lit::<T>(10.0);
        let below: Option<T> = balls
            .radii
            .iter()
            .zip(&running)
            .filter(|(r, _)| **r <= r_cut)
            .map(|(_, m)| *m)
            .last();
        if let Some(m_cut) = below {
            if m_cut > T::zero() && running.last().copied().unwrap_or(T::zero()) > lit::<T>(10.0) * m_cut {
                diverging = true;
            }
        }
    }
    Ok(ApReport { estimate: best_finite, diverging, balls_evaluated: evaluated })
}

/// Analytic class rule for |x|^alpha on R^N: A_1 needs -N < alpha <= 0,
/// A_p (p > 1) needs -N < alpha < N(p-1).
pub fn power_membership<T: Real>(alpha: T, p: T, dim: usize) -> bool {
    let n = from_usize::<T>(dim);
    if !(alpha > -n) {
        return false;
    }
    if p == T::one() {
        alpha <= T::zero()
    } else if p > T::one() {
        alpha < n * (p - T::one())
    } else {
        false
    }
}

/// Conjugate companion w' = w^(1/(1-p)) for the dual estimate in L^p', with
/// p' = p/(p-1). A power weight stays in the family (exponent alpha/(1-p),
/// which must still be locally integrable); grid weights transform pointwise.
pub fn conjugate_weight<T: Real>(w: &Weight<T>, p: T) -> Result<Weight<T>> {
    if !(p > T::one()) || !p.is_finite() {
        return Err(Error::domain("conjugate weight needs p > 1"));
    }
    let e = T::one() / (T::one() - p);
    match w {
        Weight::Power { dim, alpha } => Weight::power(*dim, *alpha * e),
        Weight::Grid(g) => {
            Weight::from_grid(g.grid, g.values.iter().map(|v| v.powf(e)).collect())
        }
    }
}

/// Radius ladder for the discrete maximal function: one cell width up to the
/// grid half-width, geometric with ratio sqrt 2.
pub fn maximal_radius_set<T: Real>(grid: &Grid<T>) -> Vec<T> {
    let mut radii = Vec::new();
    let mut r = grid.spacing();
    let ratio = lit::<T>(2.0).sqrt();
    while r <= grid.half_width() * (T::one() + lit::<T>(1e-12)) {
        radii.push(r);
        r *= ratio;
    }
    radii
}

/// Discrete Hardy-Littlewood maximal function: pointwise sup of ball
/// averages over the sqrt-2 radius ladder. The smallest ball contains only
/// the node's own cell, so Mw >= w pointwise.
pub fn maximal_function<T: Real>(w: &GridWeight<T>) -> GridWeight<T> {
    let grid = w.grid;
    let radii = maximal_radius_set(&grid);
    // per-radius relative index offsets, shared by all nodes
    let n = grid.nodes_per_axis() as isize;
    let h = grid.spacing();
    let offsets: Vec<Vec<Vec<isize>>> = radii
        .iter()
        .map(|&r| {
            let reach = (r / h).to_usize().unwrap_or(0) as isize + 1;
            let mut offs = Vec::new();
            let mut idx = vec![-reach; grid.dim()];
            'outer: loop {
                let mut d2 = T::zero();
                for &o in &idx {
                    let d = from_usize::<T>(o.unsigned_abs()) * h;
                    d2 += d * d;
                }
                if d2 < r * r {
                    offs.push(idx.clone());
                }
                let mut axis = grid.dim();
                loop {
                    if axis == 0 {
                        break 'outer;
                    }
                    axis -= 1;
                    if idx[axis] < reach {
                        idx[axis] += 1;
                        break;
                    }
                    idx[axis] = -reach;
                }
            }
            offs
        })
        .collect();
    let values: Vec<T> = (0..grid.node_count())
        .into_par_iter()
        .map(|flat| {
            let idx = grid.unravel(flat);
            let mut best = T::zero();
            for offs in &offsets {
                let mut sum = T::zero();
                let mut count = 0usize;
                'cell: for off in offs {
                    let mut j = [0usize; crate::grid::MAX_DIM];
                    for axis in 0..grid.dim() {
                        let k = idx[axis] as isize + off[axis];
                        if k < 0 || k >= n {
                            continue 'cell;
                        }
                        j[axis] = k as usize;
                    }
                    sum += w.values[grid.ravel(&j[..grid.dim()])];
                    count += 1;
                }
                if count > 0 {
                    let avg = sum / from_usize(count);
                    if avg > best {
                        best = avg;
                    }
                }
            }
            best
        })
        .collect();
    GridWeight { grid, values }
}
