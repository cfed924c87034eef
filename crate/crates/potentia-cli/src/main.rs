//! Batch front end: loads operator, weight, and measure descriptions,
//! runs the named check suites, and emits schema-versioned JSON reports
//! plus optional CSV tables and field snapshots.
//!
//! Exit codes: 0 when the run succeeds and every check holds, 2 when a
//! check fails (non-elliptic operator, weight outside its class, a
//! diverging condition, a confirmed violation, a residual above
//! tolerance), 1 on malformed input. POTENTIA_THREADS caps the worker
//! pool; reports are byte-identical regardless of the cap.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use potentia::conditions::{
    decay_check, standard_y_samples, testing_condition_far, testing_condition_near,
    wolff_potential, ConditionReport, ConditionStatus, DecaySamples, WolffValue,
};
use potentia::grid::Grid;
use potentia::inequality::{estimate_constant, BumpFamily, InequalityKind};
use potentia::io::{
    canonical_json, load_field, load_measure, load_operator, load_weight_in_dim, save_field,
    write_ratio_history_csv, ComplexDto, ConditionReportDto, GridDto, ReportEnvelope,
};
use potentia::measures::{total_variation, PositiveMeasure};
use potentia::solver::{construct_solution, default_test_family, verify_weak_solution};
use potentia::spectral::BumpSpec;
use potentia::symbolic::SphereSample;
use potentia::weights::{ap_constant, BallFamily, Weight};

const CHECK_FAILED: u8 = 2;
const VERIFY_RESIDUAL_CEILING: f64 = 1e-3;

#[derive(Parser)]
#[command(name = "potentia", version, about = "Weighted solvability laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ellipticity margin and canceling/cocanceling defects of an operator
    CheckOperator(CheckOperatorArgs),
    /// Muckenhoupt A_p membership of a weight
    CheckWeight(CheckWeightArgs),
    /// Wolff potential, testing, and ball-decay conditions of a pair
    CheckConditions(CheckConditionsArgs),
    /// Multi-start extremizer search for an inequality constant
    EstimateConstant(EstimateArgs),
    /// Construct the canonical solution of A*(D) f = mu
    Solve(SolveArgs),
    /// Re-check a stored field snapshot against measure and operator
    Verify(VerifyArgs),
}

#[derive(Args)]
struct CheckOperatorArgs {
    /// operator description file
    #[arg(long)]
    op: PathBuf,
    /// sphere sample size for the structure scans
    #[arg(long, default_value_t = 2048)]
    samples: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckWeightArgs {
    /// weight file or power:<alpha> shorthand
    #[arg(long)]
    weight: String,
    /// Muckenhoupt exponent
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    /// grid n=<int>,L=<real>; fixes the probe scale and, for power
    /// weights, the ambient dimension stays two unless a file says more
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckConditionsArgs {
    /// measure description file
    #[arg(long)]
    measure: PathBuf,
    /// weight file or power:<alpha> shorthand
    #[arg(long)]
    weight: String,
    /// potential smoothness exponent
    #[arg(long, default_value_t = 1.0)]
    ell: f64,
    /// integrability exponent
    #[arg(long, default_value_t = 1.0)]
    q: f64,
    /// potential order for the Wolff check; defaults to ell
    #[arg(long)]
    m: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    /// inequality tag: apriori-l1, apriori-lp, stein-weiss, riesz-l1,
    /// trace, fractional
    tag: String,
    /// operator description file (not needed for riesz-l1)
    #[arg(long)]
    op: Option<PathBuf>,
    /// measure description file
    #[arg(long)]
    measure: PathBuf,
    /// weight file or power:<alpha> shorthand
    #[arg(long, default_value = "power:0")]
    weight: String,
    /// grid n=<int>,L=<real>
    #[arg(long)]
    grid: String,
    /// Lebesgue exponent where the tag needs one
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    /// target-side exponent where the tag needs one
    #[arg(long, default_value_t = 1.0)]
    q: f64,
    /// potential smoothness for riesz-l1 and fractional
    #[arg(long, default_value_t = 1.0)]
    ell: f64,
    /// number of search evaluations
    #[arg(long, default_value_t = 200)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    /// operator description file
    #[arg(long)]
    op: PathBuf,
    /// measure description file
    #[arg(long)]
    measure: PathBuf,
    /// grid n=<int>,L=<real>
    #[arg(long)]
    grid: String,
    /// norm exponent for the reported Lp(w) size
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    /// weight file or power:<alpha> shorthand
    #[arg(long, default_value = "power:0")]
    weight: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// field snapshot produced by solve
    field: PathBuf,
    /// operator description file
    #[arg(long)]
    op: PathBuf,
    /// measure description file
    #[arg(long)]
    measure: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("POTENTIA_THREADS") {
        match threads.trim().parse::<usize>() {
            Ok(k) if k > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
            }
            _ => {
                eprintln!("error: POTENTIA_THREADS must be a positive integer");
                return ExitCode::from(1);
            }
        }
    }
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> anyhow::Result<u8> {
    match command {
        Command::CheckOperator(args) => check_operator(args),
        Command::CheckWeight(args) => check_weight(args),
        Command::CheckConditions(args) => check_conditions(args),
        Command::EstimateConstant(args) => estimate(args),
        Command::Solve(args) => solve(args),
        Command::Verify(args) => verify(args),
    }
}

/// `n=<int>,L=<real>` in either order.
fn parse_grid_flag(text: &str) -> anyhow::Result<(usize, f64)> {
    let mut n = None;
    let mut l = None;
    for part in text.split(',') {
        let (key, value) = part
            .split_once('=')
            .with_context(|| format!("grid flag piece {part:?} is not key=value"))?;
        match key.trim() {
            "n" => n = Some(value.trim().parse::<usize>().context("bad n")?),
            "L" => l = Some(value.trim().parse::<f64>().context("bad L")?),
            other => bail!("unknown grid key {other:?}; expected n and L"),
        }
    }
    Ok((n.context("grid flag misses n")?, l.context("grid flag misses L")?))
}

fn weight_from_spec(spec: &str, dim: usize) -> anyhow::Result<Weight<f64>> {
    if let Some(alpha) = spec.strip_prefix("power:") {
        let alpha: f64 = alpha.parse().context("power:<alpha> needs a real alpha")?;
        Ok(Weight::power(dim, alpha)?)
    } else {
        Ok(load_weight_in_dim(Path::new(spec), dim)?)
    }
}

fn emit<P: Serialize>(envelope: &ReportEnvelope<P>, out: Option<&Path>) -> anyhow::Result<()> {
    let text = canonical_json(envelope)?;
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("report.json"), text)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

#[derive(Serialize)]
struct OperatorCheckPayload {
    elliptic: bool,
    margin: f64,
    structurally_non_elliptic: bool,
    canceling: bool,
    canceling_defect: usize,
    cocanceling: bool,
    cocanceling_defect: usize,
}

fn check_operator(args: CheckOperatorArgs) -> anyhow::Result<u8> {
    let op = load_operator(&args.op)?;
    let sphere = SphereSample::standard(op.dim(), args.samples)?;
    let ellipticity = op.ellipticity_margin(&sphere);
    let canceling_defect = op.canceling_defect(&sphere);
    let cocanceling_defect = op.cocanceling_defect(&sphere);
    let elliptic = !ellipticity.structurally_non_elliptic
        && ellipticity.margin > 1e-10 * op.coefficient_scale();
    let payload = OperatorCheckPayload {
        elliptic,
        margin: ellipticity.margin,
        structurally_non_elliptic: ellipticity.structurally_non_elliptic,
        canceling: canceling_defect == 0,
        canceling_defect,
        cocanceling: cocanceling_defect == 0,
        cocanceling_defect,
    };
    let mut envelope = ReportEnvelope::new("check-operator", payload);
    envelope.samples = Some(ellipticity.samples);
    envelope.conditions =
        vec!["ellipticity".into(), "canceling".into(), "cocanceling".into()];
    emit(&envelope, args.out.as_deref())?;
    Ok(if elliptic { 0 } else { CHECK_FAILED })
}

#[derive(Serialize)]
struct WeightCheckPayload {
    in_class: bool,
    p: f64,
    estimate: f64,
    diverging: bool,
    balls_evaluated: usize,
}

fn check_weight(args: CheckWeightArgs) -> anyhow::Result<u8> {
    let (grid_dto, scale, dim) = match args.grid.as_deref() {
        Some(text) => {
            let (n, l) = parse_grid_flag(text)?;
            (Some(GridDto { dim: 2, n, l }), l, 2)
        }
        None => (None, 1.0, 2),
    };
    let weight = weight_from_spec(&args.weight, dim)?;
    let dim = weight.dim();
    let family = BallFamily::standard(dim, scale)?;
    let report = ap_constant(&weight, args.p, &family)?;
    let payload = WeightCheckPayload {
        in_class: !report.diverging,
        p: args.p,
        estimate: report.estimate,
        diverging: report.diverging,
        balls_evaluated: report.balls_evaluated,
    };
    let in_class = payload.in_class;
    let mut envelope = ReportEnvelope::new("check-weight", payload);
    envelope.grid = grid_dto;
    envelope.samples = Some(report.balls_evaluated);
    envelope.conditions = vec!["muckenhoupt-ap".into()];
    emit(&envelope, args.out.as_deref())?;
    Ok(if in_class { 0 } else { CHECK_FAILED })
}

fn status_label(status: ConditionStatus) -> &'static str {
    match status {
        ConditionStatus::HoldsWithConstant => "holds-with-constant",
        ConditionStatus::Diverging => "diverging",
        ConditionStatus::NotApplicable => "not-applicable",
    }
}

fn condition_dto(report: &ConditionReport<f64>) -> ConditionReportDto {
    ConditionReportDto {
        condition: report.condition.clone(),
        constant: report.constant,
        witness: report.witness.clone(),
        samples: report.samples,
        status: status_label(report.status).into(),
    }
}

/// Witness scale: twice the farthest atom, or the grid half-width for
/// densities, floored at one.
fn witness_extent(nu: &PositiveMeasure<f64>) -> f64 {
    let extent = match nu {
        PositiveMeasure::Atomic { points, .. } => points
            .iter()
            .map(|p| p.iter().map(|c| c * c).sum::<f64>().sqrt())
            .fold(0.0f64, f64::max),
        PositiveMeasure::Density { grid, .. } => grid.half_width(),
    };
    (2.0 * extent).max(1.0)
}

fn check_conditions(args: CheckConditionsArgs) -> anyhow::Result<u8> {
    let mu = load_measure(&args.measure)?;
    let nu = total_variation(&mu);
    let dim = mu.dim();
    let weight = weight_from_spec(&args.weight, dim)?;
    let m = args.m.unwrap_or(args.ell);

    let r_max = witness_extent(&nu);
    let r_min = r_max / 512.0;
    let ys = standard_y_samples(dim, r_min, r_max, Some(&nu))?;

    let mut wolff = ConditionReportDto {
        condition: "wolff".into(),
        constant: 0.0,
        witness: None,
        samples: ys.len(),
        status: "holds-with-constant".into(),
    };
    for y in &ys {
        match wolff_potential(&nu, y, m)? {
            WolffValue::Finite(v) => {
                if v > wolff.constant {
                    wolff.constant = v;
                    wolff.witness = Some(y.clone());
                }
            }
            WolffValue::Diverging => {
                wolff.status = "diverging".into();
                wolff.witness = Some(y.clone());
            }
        }
    }

    let far = testing_condition_far(&nu, &weight, args.ell, args.q, &ys)?;
    let near = testing_condition_near(&nu, &weight, args.ell, args.q, &ys)?;
    let rungs: Vec<f64> = (0..16)
        .map(|k| r_min * (r_max / r_min).powf(k as f64 / 15.0))
        .collect();
    let decay = decay_check(&nu, &weight, args.ell, args.q, &DecaySamples::OriginRadii(rungs))?;

    let payload = vec![wolff, condition_dto(&far), condition_dto(&near), condition_dto(&decay)];
    let failed = payload.iter().any(|c| c.status == "diverging");
    let mut envelope = ReportEnvelope::new("check-conditions", payload);
    envelope.samples = Some(ys.len());
    envelope.conditions =
        vec!["wolff".into(), "testing-far".into(), "testing-near".into(), "ball-decay".into()];
    emit(&envelope, args.out.as_deref())?;
    Ok(if failed { CHECK_FAILED } else { 0 })
}

#[derive(Serialize)]
struct ExtremizerDto {
    center: Vec<f64>,
    radius: f64,
    amplitude: Vec<ComplexDto>,
    #[serde(skip_serializing_if = "Option::is_none")]
    modulation: Option<Vec<f64>>,
}

impl ExtremizerDto {
    fn of(spec: &BumpSpec<f64>) -> Self {
        ExtremizerDto {
            center: spec.center.clone(),
            radius: spec.radius,
            amplitude: spec.amplitude.iter().map(|&z| z.into()).collect(),
            modulation: spec.modulation.clone(),
        }
    }
}

#[derive(Serialize)]
struct EstimatePayload {
    tag: String,
    best_ratio: f64,
    evaluations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    extremizer: Option<ExtremizerDto>,
}

fn estimate(args: EstimateArgs) -> anyhow::Result<u8> {
    let mu = load_measure(&args.measure)?;
    let dim = mu.dim();
    let (n, l) = parse_grid_flag(&args.grid)?;
    let grid = Grid::new(dim, n, l)?;
    let weight = weight_from_spec(&args.weight, dim)?;
    let op = args.op.as_deref().map(load_operator).transpose()?;
    let need_op = || {
        op.clone()
            .with_context(|| format!("tag {} needs --op", args.tag))
    };

    let kind = match args.tag.as_str() {
        "apriori-l1" => InequalityKind::AprioriL1 { op: need_op()?, mu, w: weight },
        "apriori-lp" => InequalityKind::AprioriLp { op: need_op()?, mu, w: weight, p: args.p },
        "stein-weiss" => InequalityKind::SteinWeiss {
            op: need_op()?,
            nu: total_variation(&mu),
            w: weight,
            q: args.q,
        },
        "riesz-l1" => InequalityKind::RieszL1 {
            ell: args.ell,
            nu: total_variation(&mu),
            w: weight,
            q: args.q,
        },
        "trace" => InequalityKind::Trace { op: need_op()?, nu: total_variation(&mu), w: weight },
        "fractional" => InequalityKind::Fractional {
            op: need_op()?,
            ell: args.ell,
            nu: total_variation(&mu),
            w: weight,
            q: args.q,
        },
        other => bail!(
            "unknown tag {other:?}; flag-driven tags are apriori-l1, apriori-lp, \
             stein-weiss, riesz-l1, trace, fractional"
        ),
    };

    let family = BumpFamily::new(
        kind.input_components(),
        (grid.half_width() / 16.0, grid.half_width() / 3.0),
    );
    let outcome = estimate_constant(&kind, &grid, &family, args.budget, args.seed)?;

    if let Some(dir) = args.out.as_deref() {
        fs::create_dir_all(dir)?;
        write_ratio_history_csv(&outcome.history, &dir.join("history.csv"))?;
    }
    let payload = EstimatePayload {
        tag: outcome.tag.into(),
        best_ratio: outcome.best_ratio,
        evaluations: outcome.history.len(),
        extremizer: outcome.extremizer.as_ref().map(ExtremizerDto::of),
    };
    let mut envelope = ReportEnvelope::new("estimate-constant", payload);
    envelope.seed = Some(args.seed);
    envelope.grid = Some(GridDto::of(&grid));
    envelope.samples = Some(args.budget);
    envelope.conditions = vec![outcome.tag.into()];
    emit(&envelope, args.out.as_deref())?;
    Ok(0)
}

#[derive(Serialize)]
struct SolvePayload {
    weak_residual: f64,
    lp_w_norm: f64,
    linf_inv_w_norm: f64,
    mean_subtracted: bool,
    subtracted_mean: Vec<ComplexDto>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mollification_scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    field_path: Option<String>,
}

fn solve(args: SolveArgs) -> anyhow::Result<u8> {
    let mu = load_measure(&args.measure)?;
    let op = load_operator(&args.op)?;
    let dim = mu.dim();
    let (n, l) = parse_grid_flag(&args.grid)?;
    let grid = Grid::new(dim, n, l)?;
    let weight = weight_from_spec(&args.weight, dim)?;
    let result = construct_solution(&mu, &op, &grid, args.p, &weight)?;

    let field_path = match args.out.as_deref() {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let path = dir.join("solution.snap");
            save_field(&result.f, &path)?;
            Some("solution.snap".to_string())
        }
        None => None,
    };
    let payload = SolvePayload {
        weak_residual: result.weak_residual,
        lp_w_norm: result.lp_w_norm,
        linf_inv_w_norm: result.linf_inv_w_norm,
        mean_subtracted: result.mean_subtracted,
        subtracted_mean: result.subtracted_mean.iter().map(|&z| z.into()).collect(),
        mollification_scale: result.mollification_scale,
        field_path,
    };
    let mut envelope = ReportEnvelope::new("solve", payload);
    envelope.grid = Some(GridDto::of(&grid));
    envelope.samples = Some(default_test_family(&grid, op.e_dim()).len());
    envelope.conditions = vec!["weak-residual".into(), "mean-subtraction".into()];
    emit(&envelope, args.out.as_deref())?;
    Ok(0)
}

#[derive(Serialize)]
struct VerifyPayload {
    max_residual: f64,
    per_test: Vec<f64>,
    threshold: f64,
    pass: bool,
}

fn verify(args: VerifyArgs) -> anyhow::Result<u8> {
    let field = load_field(&args.field)?;
    let mu = load_measure(&args.measure)?;
    let op = load_operator(&args.op)?;
    let tests = default_test_family(field.grid(), op.e_dim());
    let report = verify_weak_solution(&field, &mu, &op, &tests)?;
    let pass = report.max <= VERIFY_RESIDUAL_CEILING;
    let payload = VerifyPayload {
        max_residual: report.max,
        per_test: report.per_test.clone(),
        threshold: VERIFY_RESIDUAL_CEILING,
        pass,
    };
    let mut envelope = ReportEnvelope::new("verify", payload);
    envelope.grid = Some(GridDto::of(field.grid()));
    envelope.samples = Some(tests.len());
    envelope.conditions = vec!["weak-residual".into()];
    emit(&envelope, args.out.as_deref())?;
    Ok(if pass { 0 } else { CHECK_FAILED })
}
