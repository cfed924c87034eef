//! Evaluates both sides of the weighted estimates on concrete instances and
//! searches bump families for extremizers. Every recorded ratio is a lower
//! bound for the sharp constant; the search never claims optimality.
//!
//! A suspicious instance (vanishing right side with a nonvanishing left, or
//! an astronomically large ratio) is only a violation candidate: grid
//! artifacts are the expected cause, so candidates are re-run at doubled
//! resolution by [`audit_violation`] before anyone calls them violations.

use num_complex::Complex;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::measures::{Measure, PositiveMeasure};
use crate::scalar::{complex_vec_norm, lit, norm, pairwise_sum, Real};
use crate::spectral::{
    apply_multiplier, apply_operator, derivative_magnitude, field_pairing, pair_with_measure,
    synthesize_bump, weighted_l1_norm, weighted_lp_norm, weighted_lq_nu_norm, BumpSpec, Field,
    Multiplier,
};
use crate::symbolic::{annihilator_pair_check, HomogeneousOperator, SphereSample};
use crate::weights::{conjugate_weight, Weight};

/// One of the seven estimates, bound to the parameters it quantifies over.
/// The test object (bump or field) is supplied per evaluation; everything
/// else lives here.
#[derive(Clone, Debug)]
pub enum InequalityKind<T: Real> {
    /// |integral of phi d mu| <= C ||A(D) phi||_{L1_w}
    AprioriL1 { op: HomogeneousOperator<T>, mu: Measure<T>, w: Weight<T> },
    /// |integral of phi d mu| <= C ||A(D) phi||_{Lp'_w'} with p' = p/(p-1),
    /// w' = w^{1/(1-p)}
    AprioriLp { op: HomogeneousOperator<T>, mu: Measure<T>, w: Weight<T>, p: T },
    /// ||K * g||_{Lq_nu} <= C ||g||_{L1_w} for g = A(D) phi, K the inverse
    /// kernel of the operator
    SteinWeiss { op: HomogeneousOperator<T>, nu: PositiveMeasure<T>, w: Weight<T>, q: T },
    /// |integral of phi . f| <= C sum_j integral |f| |y|^j |D^j phi| for
    /// f = source(D) generator, annihilated by construction
    CocancelingMoment {
        ann: HomogeneousOperator<T>,
        source: HomogeneousOperator<T>,
        generator: BumpSpec<T>,
    },
    /// ||I_ell u||_{Lq_nu} <= C ||R u||_{L1_w} with R the vector Riesz
    /// transform
    RieszL1 { ell: T, nu: PositiveMeasure<T>, w: Weight<T>, q: T },
    /// integral of |D^{m-1} u| d nu <= C ||A(D) u||_{L1_w}
    Trace { op: HomogeneousOperator<T>, nu: PositiveMeasure<T>, w: Weight<T> },
    /// ||(-Lap)^{(m-ell)/2} u||_{Lq_nu} <= C ||A(D) u||_{L1_w}
    Fractional {
        op: HomogeneousOperator<T>,
        ell: T,
        nu: PositiveMeasure<T>,
        w: Weight<T>,
        q: T,
    },
}

impl<T: Real> InequalityKind<T> {
    pub fn tag(&self) -> &'static str {
        match self {
            InequalityKind::AprioriL1 { .. } => "apriori-l1",
            InequalityKind::AprioriLp { .. } => "apriori-lp",
            InequalityKind::SteinWeiss { .. } => "stein-weiss",
            InequalityKind::CocancelingMoment { .. } => "cocanceling-moment",
            InequalityKind::RieszL1 { .. } => "riesz-l1",
            InequalityKind::Trace { .. } => "trace",
            InequalityKind::Fractional { .. } => "fractional",
        }
    }

    /// Component count the test object must carry.
    pub fn input_components(&self) -> usize {
        match self {
            InequalityKind::AprioriL1 { op, .. }
            | InequalityKind::AprioriLp { op, .. }
            | InequalityKind::SteinWeiss { op, .. }
            | InequalityKind::Trace { op, .. }
            | InequalityKind::Fractional { op, .. } => op.e_dim(),
            InequalityKind::CocancelingMoment { ann, .. } => ann.e_dim(),
            InequalityKind::RieszL1 { .. } => 1,
        }
    }
}

/// Test object: a bump specification (synthesized on the evaluation grid) or
/// a prebuilt field.
#[derive(Clone, Debug)]
pub enum InequalityInput<T: Real> {
    Bump(BumpSpec<T>),
    Field(Field<T>),
}

#[derive(Clone, Debug, Serialize)]
pub struct InequalityInstance<T> {
    pub tag: &'static str,
    pub lhs: T,
    pub rhs: T,
    /// recorded only against a positive right side
    pub ratio: Option<T>,
    /// vanishing rhs with nonvanishing lhs, or ratio beyond any plausible
    /// constant; audit before believing it
    pub violation_candidate: bool,
}

const RATIO_CAP: f64 = 1e12;

fn realize<T: Real>(
    input: &InequalityInput<T>,
    grid: &Grid<T>,
    components: usize,
) -> Result<Field<T>> {
    let field = match input {
        InequalityInput::Bump(spec) => synthesize_bump(grid, spec)?,
        InequalityInput::Field(f) => {
            if f.grid() != grid {
                return Err(Error::invalid("input field lives on a different grid"));
            }
            f.clone()
        }
    };
    if field.components() != components {
        return Err(Error::DimensionMismatch {
            context: "inequality input components",
            expected: components,
            got: field.components(),
        });
    }
    Ok(field)
}

/// Computes lhs, rhs and their ratio for one test object.
pub fn evaluate_inequality<T: Real>(
    kind: &InequalityKind<T>,
    input: &InequalityInput<T>,
    grid: &Grid<T>,
) -> Result<InequalityInstance<T>> {
    let phi = realize(input, grid, kind.input_components())?;
    let (lhs, rhs) = match kind {
        InequalityKind::AprioriL1 { op, mu, w } => {
            let lhs = complex_vec_norm(&[pair_with_measure(&phi, mu)?]);
            let rhs = weighted_l1_norm(&apply_operator(op, &phi)?, w)?;
            (lhs, rhs)
        }
        InequalityKind::AprioriLp { op, mu, w, p } => {
            if !(*p > T::one()) {
                return Err(Error::domain("dual estimate needs p > 1"));
            }
            let p_conj = *p / (*p - T::one());
            let w_conj = conjugate_weight(w, *p)?;
            let lhs = complex_vec_norm(&[pair_with_measure(&phi, mu)?]);
            let rhs = weighted_lp_norm(&apply_operator(op, &phi)?, p_conj, &w_conj)?;
            (lhs, rhs)
        }
        InequalityKind::SteinWeiss { op, nu, w, q } => {
            let g = apply_operator(op, &phi)?;
            let recovered = apply_multiplier(&Multiplier::KernelH(op.clone()), &g)?;
            let lhs = weighted_lq_nu_norm(&recovered, *q, nu)?.value;
            let rhs = weighted_l1_norm(&g, w)?;
            (lhs, rhs)
        }
        InequalityKind::CocancelingMoment { ann, source, generator } => {
            let sphere = SphereSample::default_for_dim(source.dim())?;
            let pair = annihilator_pair_check(source, ann, &sphere)?;
            if !pair.is_valid_pair() {
                return Err(Error::invalid(
                    "moment estimate needs an annihilating operator pair",
                ));
            }
            let f = apply_operator(source, &synthesize_bump(grid, generator)?)?;
            let lhs = complex_vec_norm(&[field_pairing(&phi, &f)?]);
            let vol = grid.cell_volume();
            let mut rhs = T::zero();
            for j in 1..=ann.order() {
                let dmag = derivative_magnitude(&phi, j)?;
                let terms: Vec<T> = (0..grid.node_count())
                    .map(|flat| {
                        let x = grid.node(flat);
                        let r = norm(&x[..grid.dim()]);
                        f.magnitude_at(flat) * r.powi(j as i32) * dmag.magnitude_at(flat)
                    })
                    .collect();
                rhs += pairwise_sum(&terms) * vol;
            }
            (lhs, rhs)
        }
        InequalityKind::RieszL1 { ell, nu, w, q } => {
            let potential = apply_multiplier(&Multiplier::RieszPotential(*ell), &phi)?;
            let lhs = weighted_lq_nu_norm(&potential, *q, nu)?.value;
            let dim = grid.dim();
            let parts: Vec<Field<T>> = (0..dim)
                .map(|j| apply_multiplier(&Multiplier::RieszTransform(j), &phi))
                .collect::<Result<_>>()?;
            let mut data = vec![Complex::new(T::zero(), T::zero()); grid.node_count() * dim];
            for flat in 0..grid.node_count() {
                for (j, part) in parts.iter().enumerate() {
                    data[flat * dim + j] = part.data()[flat];
                }
            }
            let riesz_field = Field::new(*grid, dim, data)?;
            let rhs = weighted_l1_norm(&riesz_field, w)?;
            (lhs, rhs)
        }
        InequalityKind::Trace { op, nu, w } => {
            let edge = derivative_magnitude(&phi, op.order() - 1)?;
            let lhs = weighted_lq_nu_norm(&edge, T::one(), nu)?.value;
            let rhs = weighted_l1_norm(&apply_operator(op, &phi)?, w)?;
            (lhs, rhs)
        }
        InequalityKind::Fractional { op, ell, nu, w, q } => {
            let m = crate::scalar::from_usize::<T>(op.order() as usize);
            if !(*ell > T::zero()) || !(*ell <= m) {
                return Err(Error::domain("fractional order needs 0 < ell <= m"));
            }
            let s = m - *ell;
            let smoothed = if s == T::zero() {
                phi.clone()
            } else {
                apply_multiplier(&Multiplier::FractionalLaplacian(s), &phi)?
            };
            let lhs = weighted_lq_nu_norm(&smoothed, *q, nu)?.value;
            let rhs = weighted_l1_norm(&apply_operator(op, &phi)?, w)?;
            (lhs, rhs)
        }
    };
    let ratio = if rhs > T::zero() { Some(lhs / rhs) } else { None };
    let violation_candidate = (rhs == T::zero() && lhs > T::zero())
        || (rhs > T::zero() && lhs > lit::<T>(RATIO_CAP) * rhs);
    Ok(InequalityInstance { tag: kind.tag(), lhs, rhs, ratio, violation_candidate })
}

/// Re-runs a flagged instance on the doubled grid and reports whether the
/// violation signature survives. Only bump inputs can migrate across grids.
pub fn audit_violation<T: Real>(
    kind: &InequalityKind<T>,
    input: &InequalityInput<T>,
    grid: &Grid<T>,
) -> Result<bool> {
    if matches!(input, InequalityInput::Field(_)) {
        return Err(Error::invalid("audit needs a bump input to re-synthesize"));
    }
    let fine = grid.refined()?;
    Ok(evaluate_inequality(kind, input, &fine)?.violation_candidate)
}

/// Randomized bump generator: centers and radii keep the support inside the
/// box margin, amplitudes are unit vectors, and an optional plane-wave
/// modulation span adds oscillation.
#[derive(Clone, Debug)]
pub struct BumpFamily<T> {
    pub components: usize,
    pub radius_range: (T, T),
    pub modulation_span: Option<T>,
}

impl<T: Real> BumpFamily<T> {
    pub fn new(components: usize, radius_range: (T, T)) -> Self {
        BumpFamily { components, radius_range, modulation_span: None }
    }

    pub fn with_modulation(mut self, span: T) -> Self {
        self.modulation_span = Some(span);
        self
    }

    fn margin(&self, grid: &Grid<T>) -> T {
        lit::<T>(2.5) * grid.spacing()
    }

    fn clamp_radius(&self, grid: &Grid<T>, r: T) -> T {
        let hi = (grid.half_width() - lit::<T>(2.0) * self.margin(grid))
            .min(self.radius_range.1)
            .max(self.radius_range.0);
        r.max(self.radius_range.0).min(hi)
    }

    fn sample(&self, grid: &Grid<T>, rng: &mut ChaCha8Rng) -> BumpSpec<T> {
        let radius =
            self.clamp_radius(grid, lit(rng.random_range(self.range_f64().0..=self.range_f64().1)));
        let span = (grid.half_width() - radius - self.margin(grid)).max(T::zero());
        let center: Vec<T> = (0..grid.dim())
            .map(|_| {
                let s = span.to_f64().unwrap_or(0.0);
                lit(if s > 0.0 { rng.random_range(-s..=s) } else { 0.0 })
            })
            .collect();
        let mut amplitude: Vec<f64> =
            (0..self.components).map(|_| rng.random_range(-1.0..1.0)).collect();
        let len = amplitude.iter().map(|a| a * a).sum::<f64>().sqrt();
        if len < 1e-9 {
            amplitude[0] = 1.0;
        } else {
            for a in &mut amplitude {
                *a /= len;
            }
        }
        let spec = BumpSpec::new(
            center,
            radius,
            amplitude.into_iter().map(|a| Complex::new(lit(a), T::zero())).collect(),
        );
        match self.modulation_span {
            Some(span) => {
                let s = span.to_f64().unwrap_or(0.0).abs();
                let wave: Vec<T> =
                    (0..grid.dim()).map(|_| lit(rng.random_range(-s..=s))).collect();
                spec.modulated(wave)
            }
            None => spec,
        }
    }

    fn range_f64(&self) -> (f64, f64) {
        (
            self.radius_range.0.to_f64().unwrap_or(0.1),
            self.radius_range.1.to_f64().unwrap_or(1.0),
        )
    }
}

/// Best ratio found by the search: a lower bound for the sharp constant,
/// never an upper bound.
#[derive(Clone, Debug)]
pub struct ConstantEstimate<T: Real> {
    pub tag: &'static str,
    pub best_ratio: T,
    pub extremizer: Option<BumpSpec<T>>,
    /// per-evaluation ratios in order (zero where the rhs vanished)
    pub history: Vec<T>,
}

pub const MULTI_START: usize = 32;

/// Deterministic extremizer search: fresh random bumps for the first
/// [`MULTI_START`] draws and half of the rest, interleaved with one-parameter
/// refinements of the incumbent whose step shrinks by the golden ratio per
/// revisit. One RNG stream drives everything, so a longer budget replays a
/// shorter one as its prefix and the running best is monotone in budget.
pub fn estimate_constant<T: Real>(
    kind: &InequalityKind<T>,
    grid: &Grid<T>,
    family: &BumpFamily<T>,
    budget: usize,
    seed: u64,
) -> Result<ConstantEstimate<T>> {
    if budget == 0 {
        return Err(Error::invalid("search budget must be at least 1"));
    }
    if family.components != kind.input_components() {
        return Err(Error::DimensionMismatch {
            context: "family components",
            expected: kind.input_components(),
            got: family.components,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut history = Vec::with_capacity(budget);
    let mut best: Option<(T, BumpSpec<T>)> = None;
    let mut any_rhs = false;
    let mut refine_steps = 0usize;
    for i in 0..budget {
        let fresh = i < MULTI_START || best.is_none() || rng.random::<bool>();
        let spec = if fresh {
            family.sample(grid, &mut rng)
        } else {
            let (_, incumbent) = best.as_ref().expect("incumbent exists");
            let spec = perturb(incumbent, family, grid, refine_steps, &mut rng);
            refine_steps += 1;
            spec
        };
        let inst = evaluate_inequality(kind, &InequalityInput::Bump(spec.clone()), grid)?;
        if inst.rhs > T::zero() {
            any_rhs = true;
        }
        let ratio = inst.ratio.unwrap_or(T::zero());
        history.push(ratio);
        let better = match &best {
            Some((b, _)) => ratio > *b,
            None => inst.ratio.is_some(),
        };
        if better {
            best = Some((ratio, spec));
        }
    }
    if !any_rhs {
        return Err(Error::DegenerateFamily(format!(
            "right side vanished on all {budget} draws for {}",
            kind.tag()
        )));
    }
    let (best_ratio, extremizer) = match best {
        Some((r, s)) => (r, Some(s)),
        None => (T::zero(), None),
    };
    Ok(ConstantEstimate { tag: kind.tag(), best_ratio, extremizer, history })
}

/// One-coordinate move on the incumbent: cycle through center axes, the
/// radius and the modulation axes; the step contracts by 0.618 for every
/// full cycle already spent.
fn perturb<T: Real>(
    incumbent: &BumpSpec<T>,
    family: &BumpFamily<T>,
    grid: &Grid<T>,
    refine_steps: usize,
    rng: &mut ChaCha8Rng,
) -> BumpSpec<T> {
    let dim = grid.dim();
    let coords = dim + 1 + if incumbent.modulation.is_some() { dim } else { 0 };
    let coord = refine_steps % coords;
    let visits = (refine_steps / coords) as i32;
    let contraction = lit::<T>(0.618).powi(visits);
    let sign = if rng.random::<bool>() { T::one() } else { -T::one() };
    let mut spec = incumbent.clone();
    if coord < dim {
        let step = grid.half_width() * lit::<T>(0.2) * contraction * sign;
        spec.center[coord] += step;
        let reach = grid.half_width() - spec.radius - family.margin(grid);
        spec.center[coord] = spec.center[coord].min(reach).max(-reach);
    } else if coord == dim {
        let (lo, hi) = family.radius_range;
        let step = (hi - lo) * lit::<T>(0.25) * contraction * sign;
        spec.radius = family.clamp_radius(grid, spec.radius + step);
        let reach = grid.half_width() - spec.radius - family.margin(grid);
        for c in spec.center.iter_mut() {
            *c = (*c).min(reach).max(-reach);
        }
    } else if let Some(wave) = spec.modulation.as_mut() {
        let span = family.modulation_span.unwrap_or(T::one());
        wave[coord - dim - 1] += span * lit::<T>(0.25) * contraction * sign;
    }
    spec
}

/// Outcome of driving the Hardy-type inequality with a family of
/// non-negative profiles: the measured hypothesis constant, the worst ratio
/// over the family, and the verdict with a 5 percent quadrature allowance.
#[derive(Clone, Debug, Serialize)]
pub struct HardyReport<T> {
    pub hypothesis_constant: T,
    pub hypothesis_witness: Option<Vec<T>>,
    pub skipped_witnesses: usize,
    pub ratios: Vec<T>,
    pub max_ratio: T,
    pub pass: bool,
}

/// Checks the Hardy-type bound
/// [integral (integral_{B(0,|x|/2)} g)^q u d nu]^{1/q} <= C integral g v
/// with C measured from its own hypothesis
/// sup_y (integral_{|x| >= 2|y|} u d nu)^{1/q} / v(y) over the witness set.
/// Profiles are taken by magnitude, so any bump family works as the
/// non-negative g.
pub fn hardy_check<T: Real>(
    nu: &PositiveMeasure<T>,
    u: &Weight<T>,
    v: &Weight<T>,
    q: T,
    profiles: &[BumpSpec<T>],
    witnesses: &[Vec<T>],
    grid: &Grid<T>,
) -> Result<HardyReport<T>> {
    if !(q >= T::one()) || !q.is_finite() {
        return Err(Error::domain("exponent q must satisfy q >= 1"));
    }
    let terms = crate::conditions::atomized(nu, None);
    let mut hypothesis = T::zero();
    let mut witness = None;
    let mut skipped = 0usize;
    for y in witnesses {
        let r_y = norm(y);
        let vy = v.evaluate(y);
        if r_y == T::zero() || !(vy > T::zero()) || !vy.is_finite() {
            skipped += 1;
            continue;
        }
        let cutoff = lit::<T>(2.0) * r_y;
        let parts: Vec<T> = terms
            .iter()
            .filter(|(x, _)| norm(x) >= cutoff)
            .map(|(x, m)| *m * u.evaluate(x))
            .collect();
        let value = pairwise_sum(&parts).powf(T::one() / q) / vy;
        if value > hypothesis {
            hypothesis = value;
            witness = Some(y.clone());
        }
    }
    let vol = grid.cell_volume();
    let mut ratios = Vec::with_capacity(profiles.len());
    let mut max_ratio = T::zero();
    for spec in profiles {
        let g = synthesize_bump(grid, spec)?;
        let rhs = weighted_l1_norm(&g, v)?;
        // inner integrals over B(0, |x|/2) at every atom of nu
        let parts: Vec<T> = terms
            .iter()
            .map(|(x, m)| {
                let half = norm(x) / lit::<T>(2.0);
                let inner: Vec<T> = (0..grid.node_count())
                    .filter(|&flat| {
                        let node = grid.node(flat);
                        norm(&node[..grid.dim()]) < half
                    })
                    .map(|flat| g.magnitude_at(flat))
                    .collect();
                (pairwise_sum(&inner) * vol).powf(q) * *m * u.evaluate(x)
            })
            .collect();
        let lhs = pairwise_sum(&parts).powf(T::one() / q);
        let ratio = if rhs > T::zero() { lhs / rhs } else { T::zero() };
        if ratio > max_ratio {
            max_ratio = ratio;
        }
        ratios.push(ratio);
    }
    let pass = max_ratio <= hypothesis * lit::<T>(1.05);
    Ok(HardyReport {
        hypothesis_constant: hypothesis,
        hypothesis_witness: witness,
        skipped_witnesses: skipped,
        ratios,
        max_ratio,
        pass,
    })
}
