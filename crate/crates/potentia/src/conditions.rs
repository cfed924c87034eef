//! Measure/weight compatibility conditions: the far and near testing
//! conditions, ball-decay conditions at and away from the origin, truncated
//! Wolff potentials, and the dyadic-series oracle that bounds the testing
//! constants for measures with power-type ball decay.
//!
//! Atomic measures are evaluated by exact closed-form sums. Density measures
//! are atomized cell by cell (mass = sample times cell volume) under the
//! cell-center rule, with cells closer than h/2 to a singular point dropped.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::{ball_mass, PositiveMeasure};
use crate::scalar::{dist, from_usize, lit, norm, pairwise_sum, Real};
use crate::symbolic::SphereSample;
use crate::weights::{
    ball_average, maximal_function, maximal_radius_set, unit_ball_volume, GridWeight, Weight,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ConditionStatus {
    HoldsWithConstant,
    Diverging,
    NotApplicable,
}

/// Outcome of sampling one condition over a witness set. A finite sup over
/// samples is evidence, not a certificate; the sample and skip counts are
/// always recorded so reports stay honest about discretization.
#[derive(Clone, Debug, Serialize)]
pub struct ConditionReport<T> {
    pub condition: String,
    /// sup over evaluated samples of LHS/RHS
    pub constant: T,
    /// sample attaining the sup (for origin-mode decay: the radius)
    pub witness: Option<Vec<T>>,
    pub samples: usize,
    /// samples skipped because the weight vanished or the point was invalid
    pub skipped: usize,
    pub status: ConditionStatus,
}

impl<T: Real> ConditionReport<T> {
    fn new(condition: &str) -> Self {
        ConditionReport {
            condition: condition.into(),
            constant: T::zero(),
            witness: None,
            samples: 0,
            skipped: 0,
            status: ConditionStatus::HoldsWithConstant,
        }
    }

    fn record(&mut self, value: T, witness: &[T]) {
        if value > self.constant {
            self.constant = value;
            self.witness = Some(witness.to_vec());
        }
    }
}

fn check_exponents<T: Real>(dim: usize, ell: T, q: T) -> Result<()> {
    if !(ell > T::zero()) || !(ell < from_usize(dim)) {
        return Err(Error::domain("order ell must satisfy 0 < ell < N"));
    }
    if !(q >= T::one()) || !q.is_finite() {
        return Err(Error::domain("exponent q must satisfy q >= 1"));
    }
    Ok(())
}

/// Terms of the measure restricted to a region, as (point, mass) pairs.
/// Density cells become atoms at their centers; cells with centers closer
/// than h/2 to `singular` are dropped (the cell-center rule).
pub(crate) fn atomized<T: Real>(
    nu: &PositiveMeasure<T>,
    singular: Option<&[T]>,
) -> Vec<(Vec<T>, T)> {
    match nu {
        PositiveMeasure::Atomic { points, masses } => points
            .iter()
            .zip(masses.iter())
            .map(|(p, &m)| (p.clone(), m))
            .collect(),
        PositiveMeasure::Density { grid, samples } => {
            let vol = grid.cell_volume();
            let guard = grid.spacing() / lit::<T>(2.0);
            (0..grid.node_count())
                .filter_map(|flat| {
                    let x = grid.node(flat);
                    let x = x[..grid.dim()].to_vec();
                    if let Some(s) = singular {
                        if dist(&x, s) < guard {
                            return None;
                        }
                    }
                    Some((x, samples[flat] * vol))
                })
                .collect()
        }
    }
}

/// Far testing condition: for each witness y,
/// (integral over |x| >= 2|y| of |x|^(-(N-ell+1)q) dnu)^(1/q) * |y| / w(y).
/// Exact for atomic measures. Witnesses at the origin or where w vanishes
/// are skipped and counted.
pub fn testing_condition_far<T: Real>(
    nu: &PositiveMeasure<T>,
    w: &Weight<T>,
    ell: T,
    q: T,
    ys: &[Vec<T>],
) -> Result<ConditionReport<T>> {
    let dim = nu.dim();
    check_exponents(dim, ell, q)?;
    if w.dim() != dim {
        return Err(Error::DimensionMismatch {
            context: "weight dimension",
            expected: dim,
            got: w.dim(),
        });
    }
    let exponent = -(from_usize::<T>(dim) - ell + T::one()) * q;
    let terms = atomized(nu, None);
    let mut report = ConditionReport::new("testing-far");
    report.samples = ys.len();
    for y in ys {
        let r_y = norm(y);
        let wy = w.evaluate(y);
        if r_y == T::zero() || !(wy > T::zero()) || !wy.is_finite() {
            report.skipped += 1;
            continue;
        }
        let cutoff = lit::<T>(2.0) * r_y;
        let parts: Vec<T> = terms
            .iter()
            .filter(|(x, _)| norm(x) >= cutoff)
            .map(|(x, m)| *m * norm(x).powf(exponent))
            .collect();
        let integral = pairwise_sum(&parts);
        report.record(integral.powf(T::one() / q) * r_y / wy, y);
    }
    Ok(report)
}

/// Near testing condition: for each witness y,
/// (integral over |x| < 4|y| of |x-y|^(-(N-ell)q) dnu)^(1/q) / w(y).
/// A witness sitting exactly on an atom makes the sample singular and the
/// report diverging.
pub fn testing_condition_near<T: Real>(
    nu: &PositiveMeasure<T>,
    w: &Weight<T>,
    ell: T,
    q: T,
    ys: &[Vec<T>],
) -> Result<ConditionReport<T>> {
    let dim = nu.dim();
    check_exponents(dim, ell, q)?;
    if w.dim() != dim {
        return Err(Error::DimensionMismatch {
            context: "weight dimension",
            expected: dim,
            got: w.dim(),
        });
    }
    let exponent = -(from_usize::<T>(dim) - ell) * q;
    let atomic = matches!(nu, PositiveMeasure::Atomic { .. });
    let mut report = ConditionReport::new("testing-near");
    report.samples = ys.len();
    let mut singular_at = None;
    for y in ys {
        let r_y = norm(y);
        let wy = w.evaluate(y);
        if r_y == T::zero() || !(wy > T::zero()) || !wy.is_finite() {
            report.skipped += 1;
            continue;
        }
        let terms = atomized(nu, Some(y));
        let cutoff = lit::<T>(4.0) * r_y;
        let mut singular = false;
        let mut parts = Vec::new();
        for (x, m) in &terms {
            if norm(x) >= cutoff || *m == T::zero() {
                continue;
            }
            let d = dist(x, y);
            if atomic && d == T::zero() {
                singular = true;
                break;
            }
            parts.push(*m * d.powf(exponent));
        }
        if singular {
            singular_at.get_or_insert_with(|| y.clone());
            continue;
        }
        let integral = pairwise_sum(&parts);
        report.record(integral.powf(T::one() / q) / wy, y);
    }
    if let Some(y) = singular_at {
        report.status = ConditionStatus::Diverging;
        report.witness = Some(y);
    }
    Ok(report)
}

/// Value of a potential that may blow up at the evaluation point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum WolffValue<T> {
    Finite(T),
    Diverging,
}

impl<T: Real> WolffValue<T> {
    pub fn finite(&self) -> Option<T> {
        match self {
            WolffValue::Finite(v) => Some(*v),
            WolffValue::Diverging => None,
        }
    }
}

/// Truncated Wolff-type potential at y: the integral over 0 < r < |y|/2 of
/// nu(B(y, r)) r^(m-N-1) dr. The ball count is a step function jumping at
/// the atom distances, so each atom inside the truncation radius contributes
/// the one-piece antiderivative mass*(d^(m-N) - R^(m-N))/(N-m). An atom at y
/// itself makes the r -> 0 tail non-integrable.
pub fn wolff_potential<T: Real>(
    nu: &PositiveMeasure<T>,
    y: &[T],
    m: T,
) -> Result<WolffValue<T>> {
    let dim = nu.dim();
    if y.len() != dim {
        return Err(Error::DimensionMismatch {
            context: "evaluation point",
            expected: dim,
            got: y.len(),
        });
    }
    if !(m > T::zero()) || !(m < from_usize(dim)) {
        return Err(Error::domain("potential order must satisfy 0 < m < N"));
    }
    let cap = norm(y) / lit::<T>(2.0);
    if !(cap > T::zero()) {
        return Ok(WolffValue::Finite(T::zero()));
    }
    let power = m - from_usize::<T>(dim);
    let denom = from_usize::<T>(dim) - m;
    let cap_term = cap.powf(power);
    let atomic = matches!(nu, PositiveMeasure::Atomic { .. });
    let mut parts = Vec::new();
    for (x, mass) in atomized(nu, Some(y)) {
        if mass == T::zero() {
            continue;
        }
        let d = dist(&x, y);
        if atomic && d == T::zero() {
            return Ok(WolffValue::Diverging);
        }
        if d < cap {
            parts.push(mass * (d.powf(power) - cap_term) / denom);
        }
    }
    Ok(WolffValue::Finite(pairwise_sum(&parts)))
}

/// Witness sets for [`decay_check`]: ball radii at the origin, or ball
/// centers away from it (each center gets a geometric ladder of radii below
/// |x|/2).
#[derive(Clone, Debug)]
pub enum DecaySamples<T> {
    OriginRadii(Vec<T>),
    OffOriginCenters(Vec<Vec<T>>),
}

const OFF_ORIGIN_RUNGS: usize = 16;

/// Ball-decay condition: sup of nu(B(c, r)) / (scale^(-ell) * w(B(c, r)))^q
/// with scale = r at the origin and scale = |c| off it (radii r < |c|/2).
/// Divergence is flagged when the ratios keep growing as r shrinks: the
/// smallest-radius ratio exceeding ten times everything in the upper half of
/// the ladder.
pub fn decay_check<T: Real>(
    nu: &PositiveMeasure<T>,
    w: &Weight<T>,
    ell: T,
    q: T,
    samples: &DecaySamples<T>,
) -> Result<ConditionReport<T>> {
    let dim = nu.dim();
    check_exponents(dim, ell, q)?;
    if w.dim() != dim {
        return Err(Error::DimensionMismatch {
            context: "weight dimension",
            expected: dim,
            got: w.dim(),
        });
    }
    let v_n = unit_ball_volume::<T>(dim);
    let ratio_at = |center: &[T], r: T, scale: T| -> Result<Option<T>> {
        let mass = ball_mass(nu, center, r);
        let w_ball = ball_average(w, center, r)? * v_n * r.powi(dim as i32);
        let denom = (scale.powf(-ell) * w_ball).powf(q);
        if !(denom > T::zero()) || !denom.is_finite() {
            return Ok(None);
        }
        Ok(Some(mass / denom))
    };
    match samples {
        DecaySamples::OriginRadii(radii) => {
            let mut report = ConditionReport::new("decay-origin");
            report.samples = radii.len();
            let mut sorted: Vec<T> = radii.clone();
            if sorted.iter().any(|r| !(*r > T::zero()) || !r.is_finite()) {
                return Err(Error::invalid("decay radii must be positive and finite"));
            }
            sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite radii"));
            let mut ratios = Vec::new();
            for &r in &sorted {
                match ratio_at(&vec![T::zero(); dim], r, r)? {
                    Some(ratio) => {
                        ratios.push(ratio);
                        report.record(ratio, &[r]);
                    }
                    None => report.skipped += 1,
                }
            }
            if diverging_toward_zero(&ratios) {
                report.status = ConditionStatus::Diverging;
                report.witness = Some(vec![sorted[0]]);
            }
            Ok(report)
        }
        DecaySamples::OffOriginCenters(centers) => {
            let mut report = ConditionReport::new("decay-off-origin");
            report.samples = centers.len();
            let floor = match nu {
                PositiveMeasure::Density { grid, .. } => Some(grid.spacing()),
                PositiveMeasure::Atomic { .. } => None,
            };
            let mut diverging_at = None;
            for c in centers {
                let len = norm(c);
                if !(len > T::zero()) {
                    report.skipped += 1;
                    continue;
                }
                let r_hi = len / lit::<T>(2.0) * lit::<T>(1.0 - 1e-9);
                let mut r_lo = r_hi * lit::<T>(2.0).powi(-(OFF_ORIGIN_RUNGS as i32 - 1));
                if let Some(h) = floor {
                    if h > r_lo {
                        r_lo = h;
                    }
                }
                if !(r_lo < r_hi) {
                    report.skipped += 1;
                    continue;
                }
                let step = (r_hi / r_lo).powf(T::one() / from_usize(OFF_ORIGIN_RUNGS - 1));
                let mut ratios = Vec::new();
                for k in 0..OFF_ORIGIN_RUNGS {
                    let r = r_lo * step.powi(k as i32);
                    if let Some(ratio) = ratio_at(c, r, len)? {
                        ratios.push(ratio);
                        report.record(ratio, c);
                    }
                }
                if diverging_toward_zero(&ratios) {
                    diverging_at.get_or_insert_with(|| c.clone());
                }
            }
            if let Some(c) = diverging_at {
                report.status = ConditionStatus::Diverging;
                report.witness = Some(c);
            }
            Ok(report)
        }
    }
}

/// Ratios listed by ascending radius: a shrinking-ball blow-up shows up as
/// the smallest rung peaking an order of magnitude above the largest one.
/// Growth slower than 10x across the ladder is indistinguishable from a
/// bounded sup at this sampling and is reported as holding.
fn diverging_toward_zero<T: Real>(ratios: &[T]) -> bool {
    if ratios.len() < 4 {
        return false;
    }
    let first = ratios[0];
    let last = ratios[ratios.len() - 1];
    let peak = ratios.iter().fold(T::zero(), |a, &b| if b > a { b } else { a });
    first > lit::<T>(10.0) * last && first >= peak
}

/// Outcome of chaining the decay conditions into the testing conditions with
/// the maximal function of the weight standing in for the weight itself.
#[derive(Clone, Debug, Serialize)]
pub struct ImplicationReport<T> {
    pub origin: ConditionReport<T>,
    pub off_origin: ConditionReport<T>,
    pub far: Option<ConditionReport<T>>,
    pub near: Option<ConditionReport<T>>,
    /// testing constants relative to the larger decay constant
    pub inflation_far: Option<T>,
    pub inflation_near: Option<T>,
    pub status: ConditionStatus,
}

/// Checks the two decay conditions for (nu, w); when both hold, runs the far
/// and near testing conditions against the maximal function Mw and records
/// how much the constants inflate. A diverging premise short-circuits to
/// not-applicable.
pub fn decay_implies_testing<T: Real>(
    nu: &PositiveMeasure<T>,
    w: &GridWeight<T>,
    ell: T,
    q: T,
    ys: &[Vec<T>],
) -> Result<ImplicationReport<T>> {
    let grid = *w.grid();
    let plain = Weight::from_grid(grid, w.values().to_vec())?;
    let origin = decay_check(
        nu,
        &plain,
        ell,
        q,
        &DecaySamples::OriginRadii(maximal_radius_set(&grid)),
    )?;
    let off_origin = decay_check(
        nu,
        &plain,
        ell,
        q,
        &DecaySamples::OffOriginCenters(ys.to_vec()),
    )?;
    if origin.status != ConditionStatus::HoldsWithConstant
        || off_origin.status != ConditionStatus::HoldsWithConstant
    {
        return Ok(ImplicationReport {
            origin,
            off_origin,
            far: None,
            near: None,
            inflation_far: None,
            inflation_near: None,
            status: ConditionStatus::NotApplicable,
        });
    }
    let mw = maximal_function(w);
    let mw_weight = Weight::from_grid(grid, mw.values().to_vec())?;
    let far = testing_condition_far(nu, &mw_weight, ell, q, ys)?;
    let near = testing_condition_near(nu, &mw_weight, ell, q, ys)?;
    let premise = if origin.constant > off_origin.constant {
        origin.constant
    } else {
        off_origin.constant
    };
    let inflate = |c: T| if premise > T::zero() { Some(c / premise) } else { None };
    let status = if far.status == ConditionStatus::Diverging
        || near.status == ConditionStatus::Diverging
    {
        ConditionStatus::Diverging
    } else {
        ConditionStatus::HoldsWithConstant
    };
    Ok(ImplicationReport {
        inflation_far: inflate(far.constant),
        inflation_near: inflate(near.constant),
        origin,
        off_origin,
        far: Some(far),
        near: Some(near),
        status,
    })
}

/// Analytic dyadic-series bounds for the testing constants of any measure
/// with nu(B(0, r)) <= cprime * r^((N-ell+alpha)q) against w = |x|^alpha.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DyadicBound<T> {
    pub far: T,
    pub near: T,
}

/// Geometric tail G(s) = sum_{k>=1} 2^(ks) = 2^s/(1-2^s), s < 0.
fn geometric_tail<T: Real>(s: T) -> T {
    let x = lit::<T>(2.0).powf(s);
    x / (T::one() - x)
}

/// Closed-form testing-constant bounds for power-decay measures.
///
/// Far: shells |x| ~ 2^k * 2|y| give mass <= cprime (2^(k+2)|y|)^sq against
/// the kernel at the inner edge; the sum collapses to 2^sq G((alpha-1)q).
/// Near: the region splits at distance |y|/2 from y; the outer part is one
/// term 2^((N-ell)q) 4^sq, the inner part a dyadic series dominated by
/// 2^((N-ell)q) G(-alpha q) for densities realizing the decay. Both bounds
/// are reported after the 1/q root, matching the testing-condition reports.
pub fn power_decay_oracle<T: Real>(
    dim: usize,
    ell: T,
    alpha: T,
    q: T,
    cprime: T,
) -> Result<DyadicBound<T>> {
    check_exponents(dim, ell, q)?;
    if !(alpha > T::zero()) || !(alpha < T::one()) {
        return Err(Error::domain("decay oracle requires 0 < alpha < 1"));
    }
    if !(cprime > T::zero()) || !cprime.is_finite() {
        return Err(Error::domain("decay constant must be positive and finite"));
    }
    let two = lit::<T>(2.0);
    let n = from_usize::<T>(dim);
    let sq = (n - ell + alpha) * q;
    let far_power = cprime * two.powf(sq) * geometric_tail((alpha - T::one()) * q);
    let near_power = cprime
        * two.powf((n - ell) * q)
        * (lit::<T>(4.0).powf(sq) + geometric_tail(-alpha * q));
    Ok(DyadicBound {
        far: far_power.powf(T::one() / q),
        near: near_power.powf(T::one() / q),
    })
}

/// Atomic measure with nu(B(0, r)) <= cprime * r^sigma by construction:
/// atoms on random directions at ascending radii carry the increments of
/// cprime * r^sigma, so every ball count telescopes to the last radius
/// inside it.
pub fn synthetic_decay_measure<T: Real>(
    dim: usize,
    sigma: T,
    cprime: T,
    atoms: usize,
    r_min: T,
    r_max: T,
    seed: u64,
) -> Result<PositiveMeasure<T>> {
    if atoms == 0 {
        return Err(Error::invalid("need at least one atom"));
    }
    if !(r_min > T::zero()) || !(r_max > r_min) {
        return Err(Error::invalid("radii must satisfy 0 < r_min < r_max"));
    }
    if !(sigma > T::zero()) || !(cprime > T::zero()) {
        return Err(Error::invalid("decay parameters must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lo = r_min.to_f64().ok_or_else(|| Error::invalid("radius out of f64 range"))?;
    let hi = r_max.to_f64().ok_or_else(|| Error::invalid("radius out of f64 range"))?;
    let mut radii: Vec<f64> =
        (0..atoms).map(|_| lo * (hi / lo).powf(rng.random_range(0.0..1.0))).collect();
    radii.sort_by(|a, b| a.partial_cmp(b).expect("finite radii"));
    let mut points = Vec::with_capacity(atoms);
    let mut masses = Vec::with_capacity(atoms);
    let mut previous = T::zero();
    for r in radii {
        let r_t = lit::<T>(r);
        let level = cprime * r_t.powf(sigma);
        let mass = level - previous;
        previous = level;
        let dir = random_direction::<T>(dim, &mut rng);
        points.push(dir.into_iter().map(|d| d * r_t).collect::<Vec<T>>());
        masses.push(mass);
    }
    PositiveMeasure::atomic(points, masses)
}

fn random_direction<T: Real>(dim: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    match dim {
        1 => {
            if rng.random::<bool>() {
                vec![T::one()]
            } else {
                vec![-T::one()]
            }
        }
        2 => {
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            vec![lit(theta.cos()), lit(theta.sin())]
        }
        _ => {
            let cos_t = rng.random_range(-1.0..1.0f64);
            let sin_t = (1.0 - cos_t * cos_t).sqrt();
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            vec![lit(sin_t * phi.cos()), lit(sin_t * phi.sin()), lit(cos_t)]
        }
    }
}

pub const DEFAULT_Y_RADII: usize = 16;
pub const DEFAULT_Y_DIRECTIONS: usize = 64;

/// Log-spherical witness lattice: geometric radii crossed with a standard
/// sphere sample, minus any points that coincide with atoms of nu.
pub fn standard_y_samples<T: Real>(
    dim: usize,
    r_min: T,
    r_max: T,
    nu: Option<&PositiveMeasure<T>>,
) -> Result<Vec<Vec<T>>> {
    if !(r_min > T::zero()) || !(r_max > r_min) || !r_max.is_finite() {
        return Err(Error::invalid("witness radii must satisfy 0 < r_min < r_max"));
    }
    let sphere = SphereSample::<T>::standard(dim, DEFAULT_Y_DIRECTIONS)?;
    let step = (r_max / r_min).powf(T::one() / from_usize(DEFAULT_Y_RADII - 1));
    let mut out = Vec::with_capacity(DEFAULT_Y_RADII * sphere.count());
    for k in 0..DEFAULT_Y_RADII {
        let r = r_min * step.powi(k as i32);
        for dir in sphere.directions() {
            let y: Vec<T> = dir.iter().map(|&d| d * r).collect();
            let hits_atom = nu
                .and_then(|n| n.atoms())
                .map(|(points, _)| points.iter().any(|p| dist(p, &y) == T::zero()))
                .unwrap_or(false);
            if !hits_atom {
                out.push(y);
            }
        }
    }
    Ok(out)
}
