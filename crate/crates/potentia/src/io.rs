//! On-disk formats: JSON descriptions for operators, weights, and
//! measures, a binary field snapshot with a one-line JSON header, CSV
//! exports, and a schema-versioned report envelope.
//!
//! Reports carry no timestamps or machine identifiers, so a run with a
//! fixed config and seed serializes byte for byte identically no matter
//! how many worker threads produced it. Bulk samples referenced through a
//! `values_path` resolve relative to the description file that names them.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::measures::Measure;
use crate::spectral::Field;
use crate::symbolic::{HomogeneousOperator, MultiIndex};
use crate::weights::Weight;

/// Complex scalar as an {re, im} pair.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ComplexDto {
    pub re: f64,
    pub im: f64,
}

impl From<Complex<f64>> for ComplexDto {
    fn from(z: Complex<f64>) -> Self {
        ComplexDto { re: z.re, im: z.im }
    }
}

impl From<ComplexDto> for Complex<f64> {
    fn from(d: ComplexDto) -> Self {
        Complex::new(d.re, d.im)
    }
}

/// Grid parameters: `n` nodes per axis on `[-L, L)^dim`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GridDto {
    pub dim: usize,
    pub n: usize,
    #[serde(rename = "L")]
    pub l: f64,
}

impl GridDto {
    pub fn of(grid: &Grid<f64>) -> Self {
        GridDto { dim: grid.dim(), n: grid.nodes_per_axis(), l: grid.half_width() }
    }

    pub fn build(&self) -> Result<Grid<f64>> {
        Grid::new(self.dim, self.n, self.l)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TermDto {
    pub alpha: Vec<u32>,
    /// row-major, f_dim rows by e_dim columns
    pub matrix: Vec<Vec<ComplexDto>>,
}

/// Operator description: constant matrix coefficients indexed by
/// multi-index.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OperatorDto {
    pub dim: usize,
    pub order: u32,
    pub e_dim: usize,
    pub f_dim: usize,
    pub terms: Vec<TermDto>,
}

impl OperatorDto {
    pub fn of(op: &HomogeneousOperator<f64>) -> Self {
        let terms = op
            .terms()
            .map(|(alpha, matrix)| TermDto {
                alpha: alpha.exponents().to_vec(),
                matrix: (0..matrix.nrows())
                    .map(|i| (0..matrix.ncols()).map(|j| matrix[(i, j)].into()).collect())
                    .collect(),
            })
            .collect();
        OperatorDto {
            dim: op.dim(),
            order: op.order(),
            e_dim: op.e_dim(),
            f_dim: op.f_dim(),
            terms,
        }
    }

    pub fn build(&self) -> Result<HomogeneousOperator<f64>> {
        let mut terms = Vec::with_capacity(self.terms.len());
        for term in &self.terms {
            let rows = term.matrix.len();
            if rows != self.f_dim || term.matrix.iter().any(|r| r.len() != self.e_dim) {
                return Err(Error::invalid(
                    "operator term matrix must be f_dim rows by e_dim columns",
                ));
            }
            let flat = term
                .matrix
                .iter()
                .flat_map(|row| row.iter().map(|&z| Complex::from(z)));
            terms.push((
                MultiIndex::new(term.alpha.clone()),
                DMatrix::from_row_iterator(self.f_dim, self.e_dim, flat),
            ));
        }
        HomogeneousOperator::new(self.dim, self.order, self.e_dim, self.f_dim, terms)
    }
}

/// Weight description: the analytic power family or grid samples loaded
/// from a side file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WeightDto {
    Power { alpha: f64 },
    Grid { grid: GridDto, values_path: String },
}

/// Measure description: explicit atoms inline, densities from a side file
/// of interleaved re,im samples.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MeasureDto {
    Atomic { points: Vec<Vec<f64>>, values: Vec<Vec<ComplexDto>> },
    Density { grid: GridDto, values_path: String },
}

/// One experiment: which check to run and on what data. Optional fields
/// stay absent for subcommands that do not need them.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub operator_path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub measure_path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub weight: Option<WeightDto>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub grid: Option<GridDto>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ell: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub q: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub budget: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
}

/// One named check with its measured constant, as reported by the CLI.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConditionReportDto {
    pub condition: String,
    pub constant: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub witness: Option<Vec<f64>>,
    pub samples: usize,
    pub status: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: &'static str,
    pub version: &'static str,
}

/// Envelope wrapped around every report payload. Field order is fixed by
/// the struct, values by the config and seed alone.
#[derive(Clone, Debug, Serialize)]
pub struct ReportEnvelope<P: Serialize> {
    pub schema_version: u32,
    pub tool: ToolInfo,
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridDto>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// identifiers of the hypotheses and checks the payload speaks about
    pub conditions: Vec<String>,
    pub payload: P,
}

pub const SCHEMA_VERSION: u32 = 1;

impl<P: Serialize> ReportEnvelope<P> {
    pub fn new(command: &str, payload: P) -> Self {
        ReportEnvelope {
            schema_version: SCHEMA_VERSION,
            tool: ToolInfo { name: "potentia", version: env!("CARGO_PKG_VERSION") },
            command: command.to_string(),
            seed: None,
            grid: None,
            samples: None,
            conditions: Vec::new(),
            payload,
        }
    }
}

/// Pretty JSON with a trailing newline; struct field order makes the
/// bytes reproducible.
pub fn canonical_json<P: Serialize>(value: &P) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

pub fn write_json<P: Serialize>(value: &P, path: &Path) -> Result<()> {
    fs::write(path, canonical_json(value)?)?;
    Ok(())
}

fn read_json<D: for<'de> Deserialize<'de>>(path: &Path) -> Result<D> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Joins a `values_path` onto the directory of the description file that
/// referenced it; absolute paths pass through.
fn resolve_side_path(base: &Path, side: &str) -> PathBuf {
    let side = Path::new(side);
    if side.is_absolute() {
        side.to_path_buf()
    } else {
        base.parent().unwrap_or_else(|| Path::new(".")).join(side)
    }
}

/// Raw f64 samples: little-endian binary, or text numbers when the file
/// ends in `.csv` (commas and line breaks both separate).
fn read_values(path: &Path) -> Result<Vec<f64>> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let text = fs::read_to_string(path)?;
        let mut out = Vec::new();
        for token in text.split(|c: char| c == ',' || c.is_whitespace()) {
            if token.is_empty() {
                continue;
            }
            out.push(token.parse::<f64>().map_err(|e| Error::Malformed {
                path: path.display().to_string(),
                reason: format!("bad number {token:?}: {e}"),
            })?);
        }
        Ok(out)
    } else {
        let bytes = fs::read(path)?;
        if bytes.len() % 8 != 0 {
            return Err(Error::Malformed {
                path: path.display().to_string(),
                reason: format!("binary length {} is not a multiple of 8", bytes.len()),
            });
        }
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk")))
            .collect())
    }
}

fn write_values(values: &[f64], path: &Path) -> Result<()> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let mut text = String::new();
        for v in values {
            text.push_str(&format!("{v}\n"));
        }
        fs::write(path, text)?;
    } else {
        let mut bytes = Vec::with_capacity(values.len() * 8);
        for v in values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(path, bytes)?;
    }
    Ok(())
}

pub fn load_operator(path: &Path) -> Result<HomogeneousOperator<f64>> {
    read_json::<OperatorDto>(path)?.build()
}

pub fn save_operator(op: &HomogeneousOperator<f64>, path: &Path) -> Result<()> {
    write_json(&OperatorDto::of(op), path)
}

pub fn load_weight(path: &Path) -> Result<Weight<f64>> {
    match read_json::<WeightDto>(path)? {
        WeightDto::Power { alpha } => {
            Err(Error::invalid(format!(
                "power weight file must state its dimension through the caller; \
                 use Weight::power(dim, {alpha}) or the power:<alpha> shorthand"
            )))
        }
        WeightDto::Grid { grid, values_path } => {
            let g = grid.build()?;
            let values = read_values(&resolve_side_path(path, &values_path))?;
            Weight::from_grid(g, values)
        }
    }
}

/// Power weights need the ambient dimension, which weight files do not
/// carry; the caller supplies it and grid weights ignore it.
pub fn load_weight_in_dim(path: &Path, dim: usize) -> Result<Weight<f64>> {
    match read_json::<WeightDto>(path)? {
        WeightDto::Power { alpha } => Weight::power(dim, alpha),
        WeightDto::Grid { .. } => load_weight(path),
    }
}

pub fn save_weight(weight: &Weight<f64>, path: &Path, values_name: &str) -> Result<()> {
    let dto = match weight {
        Weight::Power { alpha, .. } => WeightDto::Power { alpha: *alpha },
        Weight::Grid(gw) => {
            write_values(gw.values(), &resolve_side_path(path, values_name))?;
            WeightDto::Grid {
                grid: GridDto::of(gw.grid()),
                values_path: values_name.to_string(),
            }
        }
    };
    write_json(&dto, path)
}

pub fn load_measure(path: &Path) -> Result<Measure<f64>> {
    match read_json::<MeasureDto>(path)? {
        MeasureDto::Atomic { points, values } => Measure::atomic(
            points,
            values
                .into_iter()
                .map(|row| row.into_iter().map(Complex::from).collect())
                .collect(),
        ),
        MeasureDto::Density { grid, values_path } => {
            let g = grid.build()?;
            let raw = read_values(&resolve_side_path(path, &values_path))?;
            if raw.len() % 2 != 0 {
                return Err(Error::Malformed {
                    path: path.display().to_string(),
                    reason: "density samples must be interleaved re,im pairs".into(),
                });
            }
            let complex: Vec<Complex<f64>> =
                raw.chunks_exact(2).map(|c| Complex::new(c[0], c[1])).collect();
            if complex.len() % g.node_count() != 0 {
                return Err(Error::Malformed {
                    path: path.display().to_string(),
                    reason: format!(
                        "{} samples do not tile {} grid nodes",
                        complex.len(),
                        g.node_count()
                    ),
                });
            }
            let e_dim = complex.len() / g.node_count();
            Measure::density(g, e_dim, complex)
        }
    }
}

pub fn save_measure(mu: &Measure<f64>, path: &Path, values_name: &str) -> Result<()> {
    let dto = match mu {
        Measure::Atomic { points, values } => MeasureDto::Atomic {
            points: points.clone(),
            values: values
                .iter()
                .map(|row| row.iter().map(|&z| z.into()).collect())
                .collect(),
        },
        Measure::Density { grid, samples, .. } => {
            let raw: Vec<f64> = samples.iter().flat_map(|z| [z.re, z.im]).collect();
            write_values(&raw, &resolve_side_path(path, values_name))?;
            MeasureDto::Density {
                grid: GridDto::of(grid),
                values_path: values_name.to_string(),
            }
        }
    };
    write_json(&dto, path)
}

#[derive(Serialize, Deserialize)]
struct SnapshotHeader {
    dim: usize,
    #[serde(rename = "L")]
    l: f64,
    n: usize,
    d: usize,
}

/// Field snapshot: one JSON header line, then node-major interleaved
/// re,im doubles in little-endian order.
pub fn save_field(field: &Field<f64>, path: &Path) -> Result<()> {
    let grid = field.grid();
    let header = SnapshotHeader {
        dim: grid.dim(),
        l: grid.half_width(),
        n: grid.nodes_per_axis(),
        d: field.components(),
    };
    let mut out = serde_json::to_string(&header)?.into_bytes();
    out.push(b'\n');
    for z in field.data() {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_field(path: &Path) -> Result<Field<f64>> {
    let file = fs::File::open(path)?;
    let mut reader = BufReader::new(file);
    let mut header_line = String::new();
    reader.read_line(&mut header_line)?;
    let header: SnapshotHeader = serde_json::from_str(header_line.trim_end())?;
    let grid = Grid::new(header.dim, header.n, header.l)?;
    let expected = grid.node_count() * header.d;
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.len() != expected * 16 {
        return Err(Error::Malformed {
            path: path.display().to_string(),
            reason: format!(
                "snapshot body holds {} bytes, header promises {}",
                bytes.len(),
                expected * 16
            ),
        });
    }
    let data: Vec<Complex<f64>> = bytes
        .chunks_exact(16)
        .map(|c| {
            Complex::new(
                f64::from_le_bytes(c[..8].try_into().expect("re")),
                f64::from_le_bytes(c[8..].try_into().expect("im")),
            )
        })
        .collect();
    Field::new(grid, header.d, data)
}

/// CSV slice of one component: every node for dim 1 and 2, the
/// third-coordinate-zero plane for dim 3. Columns are the node
/// coordinates followed by re and im.
pub fn export_field_csv(field: &Field<f64>, component: usize, path: &Path) -> Result<()> {
    let grid = field.grid();
    let dim = grid.dim();
    if component >= field.components() {
        return Err(Error::invalid("component index out of range"));
    }
    let mut out = fs::File::create(path)?;
    let mut header: Vec<String> = (0..dim.min(2)).map(|k| format!("x{k}")).collect();
    header.push("re".into());
    header.push("im".into());
    writeln!(out, "{}", header.join(","))?;
    let keep_plane = dim == 3;
    for flat in 0..grid.node_count() {
        let node = grid.node(flat);
        if keep_plane && node[2] != 0.0 {
            continue;
        }
        let z = field.at(flat)[component];
        let coords: Vec<String> = node[..dim.min(2)].iter().map(|c| format!("{c}")).collect();
        writeln!(out, "{},{},{}", coords.join(","), z.re, z.im)?;
    }
    Ok(())
}

/// Ratio history as a two-column CSV keyed by evaluation index.
pub fn write_ratio_history_csv(history: &[f64], path: &Path) -> Result<()> {
    let mut text = String::from("index,ratio\n");
    for (i, r) in history.iter().enumerate() {
        text.push_str(&format!("{i},{r}\n"));
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn load_experiment_config(path: &Path) -> Result<ExperimentConfig> {
    read_json(path)
}

/// The report envelope schema shipped with the repository, embedded so
/// validation needs no file lookup at run time.
pub fn report_schema() -> serde_json::Value {
    serde_json::from_str(include_str!("../../../schemas/report.schema.json"))
        .expect("shipped schema parses")
}

/// Minimal JSON-schema checker covering the subset the shipped schema
/// uses: type, const, enum, minimum, required, properties, items. Unknown
/// keywords are ignored, matching validator practice.
pub fn validate_against_schema(value: &serde_json::Value, schema: &serde_json::Value) -> Result<()> {
    validate_at(value, schema, "$")
}

fn validate_at(value: &serde_json::Value, schema: &serde_json::Value, at: &str) -> Result<()> {
    use serde_json::Value;
    let Some(schema) = schema.as_object() else {
        return Ok(());
    };
    if let Some(expected) = schema.get("type").and_then(Value::as_str) {
        let ok = match expected {
            "object" => value.is_object(),
            "array" => value.is_array(),
            "string" => value.is_string(),
            "number" => value.is_number(),
            "integer" => value.is_i64() || value.is_u64(),
            "boolean" => value.is_boolean(),
            "null" => value.is_null(),
            other => return Err(Error::invalid(format!("schema names unknown type {other:?}"))),
        };
        if !ok {
            return Err(Error::invalid(format!("{at}: expected {expected}, got {value}")));
        }
    }
    if let Some(c) = schema.get("const") {
        if value != c {
            return Err(Error::invalid(format!("{at}: must equal {c}, got {value}")));
        }
    }
    if let Some(options) = schema.get("enum").and_then(Value::as_array) {
        if !options.contains(value) {
            return Err(Error::invalid(format!("{at}: {value} not among {options:?}")));
        }
    }
    if let Some(min) = schema.get("minimum").and_then(Value::as_f64) {
        let got = value
            .as_f64()
            .ok_or_else(|| Error::invalid(format!("{at}: minimum needs a number")))?;
        if got < min {
            return Err(Error::invalid(format!("{at}: {got} below minimum {min}")));
        }
    }
    if let Some(required) = schema.get("required").and_then(Value::as_array) {
        let obj = value
            .as_object()
            .ok_or_else(|| Error::invalid(format!("{at}: required needs an object")))?;
        for key in required.iter().filter_map(Value::as_str) {
            if !obj.contains_key(key) {
                return Err(Error::invalid(format!("{at}: missing required field {key:?}")));
            }
        }
    }
    if let Some(props) = schema.get("properties").and_then(Value::as_object) {
        if let Some(obj) = value.as_object() {
            for (key, sub) in props {
                if let Some(v) = obj.get(key) {
                    validate_at(v, sub, &format!("{at}.{key}"))?;
                }
            }
        }
    }
    if let Some(items) = schema.get("items") {
        if let Some(arr) = value.as_array() {
            for (i, v) in arr.iter().enumerate() {
                validate_at(v, items, &format!("{at}[{i}]"))?;
            }
        }
    }
    Ok(())
}
