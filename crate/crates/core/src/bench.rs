//! CSV ingestion, stratified splits, normalization, the repeated-split
//! benchmark and decision-surface grids.

use std::cmp::Ordering;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{fit_and_score, summarize, Method, MethodOutcome, StatsRow};
use crate::error::{Error, Result};
use crate::model::{Dataset, SurfaceParams};
use crate::newton::SolverConfig;

/// Two raw label values to keep from a multiclass source. The smaller one
/// (numerically if both parse, else lexically) becomes `−1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassPair(pub String, pub String);

impl FromStr for ClassPair {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.split(',').map(str::trim).collect::<Vec<_>>()[..] {
            [a, b] if !a.is_empty() && !b.is_empty() && a != b => Ok(ClassPair(a.into(), b.into())),
            _ => Err(format!("class pair must look like 'A,B' with two distinct labels, got '{s}'")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CsvOptions {
    pub class_pair: Option<ClassPair>,
}

fn label_eq(a: &str, b: &str) -> bool {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

fn label_cmp(a: &str, b: &str) -> Ordering {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x.total_cmp(&y),
        _ => a.cmp(b),
    }
}

pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file, opts)
}

/// Parses features (all columns but the last) and labels (last column).
/// A first row whose features do not all parse as numbers is a header.
pub fn read_csv(reader: impl Read, opts: &CsvOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut raw_labels: Vec<(usize, String)> = Vec::new();
    let mut width = None;
    for (idx, rec) in rdr.records().enumerate() {
        let line = idx + 1;
        let rec = rec.map_err(|e| Error::InputRow { row: line, msg: e.to_string() })?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if rec.len() < 2 {
            return Err(Error::InputRow { row: line, msg: "need at least one feature and a label".into() });
        }
        let feats: std::result::Result<Vec<f64>, _> = rec.iter().take(rec.len() - 1).map(str::parse::<f64>).collect();
        let feats = match feats {
            Ok(f) => f,
            Err(_) if idx == 0 => continue,
            Err(_) => return Err(Error::InputRow { row: line, msg: "non-numeric feature".into() }),
        };
        match width {
            None => width = Some(rec.len()),
            Some(w) if w != rec.len() => {
                return Err(Error::InputRow { row: line, msg: format!("expected {w} columns, found {}", rec.len()) })
            }
            _ => {}
        }
        if let Some(j) = feats.iter().position(|v| !v.is_finite()) {
            return Err(Error::InputRow { row: line, msg: format!("non-finite feature in column {}", j + 1) });
        }
        rows.push(feats);
        raw_labels.push((line, rec[rec.len() - 1].to_string()));
    }

    if let Some(ClassPair(a, b)) = &opts.class_pair {
        let keep: Vec<bool> = raw_labels.iter().map(|(_, l)| label_eq(l, a) || label_eq(l, b)).collect();
        let mut it = keep.iter();
        rows.retain(|_| *it.next().unwrap());
        let mut it = keep.iter();
        raw_labels.retain(|_| *it.next().unwrap());
    }

    let mut distinct: Vec<&str> = Vec::new();
    for (_, l) in &raw_labels {
        if !distinct.iter().any(|d| label_eq(d, l)) {
            distinct.push(l);
        }
    }
    distinct.sort_by(|a, b| label_cmp(a, b));
    if distinct.len() != 2 {
        let row = raw_labels.last().map_or(1, |(r, _)| *r);
        return Err(Error::InputRow {
            row,
            msg: format!("expected exactly two distinct labels, found {} (use a class pair for multiclass data)", distinct.len()),
        });
    }
    let neg = distinct[0].to_string();
    let labels = raw_labels.iter().map(|(_, l)| if label_eq(l, &neg) { -1.0 } else { 1.0 }).collect();
    Dataset::from_rows(&rows, labels)
}

/// Writes features then the label, with a header `x1,…,xm,label`.
pub fn write_csv(data: &Dataset, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (1..=data.m()).map(|j| format!("x{j}")).collect();
    header.push("label".into());
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..data.n() {
        let mut rec: Vec<String> = data.point(i).iter().map(|v| v.to_string()).collect();
        rec.push(format!("{}", data.labels()[i] as i64));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Input(e.to_string())
}

/// Stratified split. Each label contributes `round(rate·count)` training
/// rows, clamped so both sides keep at least one row of every label.
pub fn split(data: &Dataset, train_rate: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    split_with_rng(data, train_rate, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn split_with_rng(data: &Dataset, train_rate: f64, rng: &mut ChaCha8Rng) -> Result<(Dataset, Dataset)> {
    if !(train_rate > 0.0 && train_rate < 1.0) {
        return Err(Error::Parameter(format!("train rate must lie in (0, 1), got {train_rate}")));
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for label in [-1.0, 1.0] {
        let mut idx: Vec<usize> = (0..data.n()).filter(|&i| data.labels()[i] == label).collect();
        if idx.len() < 2 {
            return Err(Error::Input(format!(
                "label {label:+} has {} sample(s); a stratified split needs at least 2",
                idx.len()
            )));
        }
        idx.shuffle(rng);
        let k = ((train_rate * idx.len() as f64).round() as usize).clamp(1, idx.len() - 1);
        train.extend_from_slice(&idx[..k]);
        test.extend_from_slice(&idx[k..]);
    }
    Ok((data.subset(&train)?, data.subset(&test)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalize {
    #[default]
    None,
    Zscore,
    Minmax,
}

impl fmt::Display for Normalize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Normalize::None => "none",
            Normalize::Zscore => "zscore",
            Normalize::Minmax => "minmax",
        })
    }
}

impl FromStr for Normalize {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(Normalize::None),
            "zscore" => Ok(Normalize::Zscore),
            "minmax" => Ok(Normalize::Minmax),
            _ => Err(format!("unknown normalization '{s}' (expected none, zscore or minmax)")),
        }
    }
}

/// Per-feature affine map `x ↦ (x − shift)/scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    shift: Vec<f64>,
    scale: Vec<f64>,
}

impl Normalizer {
    pub fn fit(kind: Normalize, data: &Dataset) -> Self {
        let (n, m) = (data.n(), data.m());
        let col = |j: usize| data.points().column(j);
        let (shift, scale) = match kind {
            Normalize::None => (vec![0.0; m], vec![1.0; m]),
            Normalize::Zscore => (0..m)
                .map(|j| {
                    let mean = col(j).mean();
                    let var = col(j).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
                    (mean, var.sqrt())
                })
                .unzip(),
            Normalize::Minmax => (0..m).map(|j| (col(j).min(), col(j).max() - col(j).min())).unzip(),
        };
        let scale = scale.into_iter().map(|s| if s > 0.0 { s } else { 1.0 }).collect();
        Self { shift, scale }
    }

    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        let p = data.points();
        let out = DMatrix::from_fn(p.nrows(), p.ncols(), |i, j| (p[(i, j)] - self.shift[j]) / self.scale[j]);
        data.with_points(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchProtocol {
    pub train_rate: f64,
    pub trials: usize,
    pub seed: u64,
    pub normalize: Normalize,
    pub methods: Vec<Method>,
}

impl Default for BenchProtocol {
    fn default() -> Self {
        Self {
            train_rate: 0.8,
            trials: 50,
            seed: 0,
            normalize: Normalize::None,
            methods: vec![Method::NewtonL01, Method::LsQssvm],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub test_labels: Vec<f64>,
    pub outcomes: Vec<MethodOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub protocol: BenchProtocol,
    pub solver: SolverConfig,
    pub rows: Vec<StatsRow>,
    pub trials: Vec<TrialRecord>,
    pub wall_time_s: f64,
}

/// Repeats split → normalize → fit → score `trials` times. Trial `t` draws
/// its split from ChaCha stream `t` of `seed`, so results do not depend on
/// scheduling.
pub fn run_bench(data: &Dataset, protocol: &BenchProtocol, solver: &SolverConfig) -> Result<BenchResult> {
    if protocol.trials == 0 {
        return Err(Error::Parameter("trials must be positive".into()));
    }
    if protocol.methods.is_empty() {
        return Err(Error::Parameter("no methods selected".into()));
    }
    solver.validate()?;
    let lsq = solver.lsq;
    let start = std::time::Instant::now();
    let trials = (0..protocol.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(protocol.seed);
            rng.set_stream(t as u64);
            let (train, test) = split_with_rng(data, protocol.train_rate, &mut rng)?;
            let norm = Normalizer::fit(protocol.normalize, &train);
            let (train, test) = (norm.apply(&train)?, norm.apply(&test)?);
            let outcomes = protocol
                .methods
                .iter()
                .map(|&m| fit_and_score(m, &train, &test, solver, &lsq))
                .collect::<Result<Vec<_>>>()?;
            Ok(TrialRecord { trial: t, test_labels: test.labels().to_vec(), outcomes })
        })
        .collect::<Result<Vec<_>>>()?;

    let rows = protocol
        .methods
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let outs: Vec<MethodOutcome> = trials.iter().map(|t| t.outcomes[k].clone()).collect();
            summarize(m, &outs)
        })
        .collect();
    Ok(BenchResult {
        protocol: protocol.clone(),
        solver: solver.clone(),
        rows,
        trials,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Statistics table as CSV.
pub fn rows_to_csv(rows: &[StatsRow]) -> String {
    let mut s = String::from("method,trials,failures,min,max,mean,var,std,mean_time_s\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{:.4},{:.4},{:.4},{:.6},{:.4},{:.6}\n",
            r.method, r.trials, r.failures, r.min, r.max, r.mean, r.var, r.std, r.mean_time_s
        ));
    }
    s
}

/// Axis-aligned box `[x_min, x_max] × [y_min, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl FromStr for BBox {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let v: std::result::Result<Vec<f64>, _> = s.split(',').map(|t| t.trim().parse::<f64>()).collect();
        match v.as_deref() {
            Ok([a, b, c, d]) if a <= b && c <= d => Ok(BBox { x_min: *a, x_max: *b, y_min: *c, y_max: *d }),
            _ => Err(format!("bbox must be 'xmin,xmax,ymin,ymax' with min <= max, got '{s}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub x: f64,
    pub y: f64,
    pub h: f64,
    pub sign: i8,
}

fn axis(lo: f64, hi: f64, k: usize, res: usize) -> f64 {
    if res == 1 {
        0.5 * (lo + hi)
    } else {
        lo + (hi - lo) * k as f64 / (res - 1) as f64
    }
}

/// `h` and its sign on a `resolution × resolution` lattice spanning `bbox`
/// (the box center when `resolution = 1`). Rows vary `x` fastest.
pub fn boundary_grid(theta: &SurfaceParams, bbox: &BBox, resolution: usize) -> Result<Vec<GridRow>> {
    if theta.m() != 2 {
        return Err(Error::Dimension { expected: 2, got: theta.m() });
    }
    if resolution == 0 {
        return Err(Error::Parameter("resolution must be positive".into()));
    }
    let mut out = Vec::with_capacity(resolution * resolution);
    for r in 0..resolution {
        let y = axis(bbox.y_min, bbox.y_max, r, resolution);
        for c in 0..resolution {
            let x = axis(bbox.x_min, bbox.x_max, c, resolution);
            let h = theta.decision(&[x, y])?;
            out.push(GridRow { x, y, h, sign: if h >= 0.0 { 1 } else { -1 } });
        }
    }
    Ok(out)
}

pub fn grid_to_csv(rows: &[GridRow]) -> String {
    let mut s = String::from("x,y,h,sign\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{}\n", r.x, r.y, r.h, r.sign));
    }
    s
}
