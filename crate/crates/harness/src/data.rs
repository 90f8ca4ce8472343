//! Synthetic cluster data, CSV feature files and train/test splits.
//!
//! CSV layout: a header `label,f0,f1,...,f{d-1}` followed by one row per
//! example. Labels may be any token; classes are numbered in ascending order
//! (numeric order when every label parses as a number).

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::path::Path;

use dp_ntk::kernel::normalize_rows;
use dp_ntk::{Dataset, RngStream};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{HarnessError, Result};

/// One-hot labels of `classes` over `n_cls` columns.
pub fn one_hot(classes: &[usize], n_cls: usize) -> DMatrix<f64> {
    DMatrix::from_fn(classes.len(), n_cls, |i, c| if classes[i] == c { 1.0 } else { 0.0 })
}

/// Class of each row: the argmax of its label row, lowest index on ties.
pub fn classes_of(data: &Dataset) -> Vec<usize> {
    let y = data.labels();
    (0..data.n())
        .map(|i| {
            let mut best = 0;
            for c in 1..y.ncols() {
                if y[(i, c)] > y[(i, best)] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// `n_cls` Gaussian clusters on the unit sphere.
///
/// Centers are `a·u₀ + b·u_c` for orthonormal random `u₀, u₁, …` with
/// `b = separation/√2`, `a = √(1-b²)`: unit norm, pairwise distance exactly
/// `separation`, and all on one side of `u₀` so no two classes are mirror
/// images (the kernel cannot tell `x` from `-x`). Each point is its center
/// plus `N(0, (spread²/d) I)` noise, then projected onto the sphere. Row `i`
/// belongs to class `i mod n_cls`.
pub fn generate_synthetic(
    n: usize,
    d: usize,
    n_cls: usize,
    separation: f64,
    spread: f64,
    rng: &RngStream,
) -> Result<Dataset> {
    if n == 0 || n_cls == 0 || !n.is_multiple_of(n_cls) {
        return Err(HarnessError::Data(format!(
            "n = {n} must be a positive multiple of n-cls = {n_cls}"
        )));
    }
    let b = separation / std::f64::consts::SQRT_2;
    if n_cls > 1 && !(b <= 1.0) {
        return Err(HarnessError::Data(format!(
            "separation {separation} exceeds the largest achievable value √2 for unit centers"
        )));
    }
    if n_cls + 1 > d {
        return Err(HarnessError::Data(format!(
            "{n_cls} classes need d >= {}, got d = {d}",
            n_cls + 1
        )));
    }
    let a = (1.0 - b * b).max(0.0).sqrt();

    let mut gen = rng.substream("centers").rng();
    let raw = DMatrix::from_fn(d, n_cls + 1, |_, _| gen.sample::<f64, _>(StandardNormal));
    let basis = raw.qr().q();
    let centers: Vec<Vec<f64>> = (0..n_cls)
        .map(|c| (0..d).map(|j| a * basis[(j, 0)] + b * basis[(j, c + 1)]).collect())
        .collect();

    let mut gen = rng.substream("points").rng();
    let scale = spread / (d as f64).sqrt();
    let features = DMatrix::from_fn(n, d, |_, _| gen.sample::<f64, _>(StandardNormal) * scale);
    let mut features = features;
    for i in 0..n {
        let c = &centers[i % n_cls];
        for j in 0..d {
            features[(i, j)] += c[j];
        }
    }
    let classes: Vec<usize> = (0..n).map(|i| i % n_cls).collect();
    // raw rows can exceed the unit ball; the bound is restored by normalizing
    let bound = features.row_iter().map(|r| r.norm()).fold(1.0, f64::max);
    let data = Dataset::new(features, one_hot(&classes, n_cls), bound)?;
    Ok(normalize_rows(&data)?)
}

/// Random split into `(train, test)` with `round(fraction·n)` training rows.
pub fn split(data: &Dataset, train_fraction: f64, rng: &RngStream) -> Result<(Dataset, Dataset)> {
    let n = data.n();
    let n_train = (train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(HarnessError::Data(format!(
            "train fraction {train_fraction} leaves an empty train or test set for n = {n}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng.rng());
    let (train, test) = idx.split_at(n_train);
    Ok((data.select(train)?, data.select(test)?))
}

fn compare_labels(a: &str, b: &str) -> Ordering {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x.total_cmp(&y),
        _ => a.cmp(b),
    }
}

/// Reads a feature CSV. Rows must lie in the `bound_b` ball unless
/// `normalize` is set, in which case they are projected onto the unit sphere
/// and the bound becomes 1.
pub fn load_features_csv(path: &Path, bound_b: f64, normalize: bool) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    read_features_csv(file, path, bound_b, normalize)
}

pub fn read_features_csv<R: std::io::Read>(
    reader: R,
    origin: &Path,
    bound_b: f64,
    normalize: bool,
) -> Result<Dataset> {
    let parse_err = |line: u64, msg: String| HarnessError::Parse {
        path: origin.to_path_buf(),
        line,
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].trim().is_empty()) {
        return Err(parse_err(1, "empty file".into()));
    }
    let d = header.len() - 1;
    let expected = std::iter::once("label".to_string()).chain((0..d).map(|j| format!("f{j}")));
    if d == 0 || !header.iter().map(str::trim).eq(expected) {
        return Err(parse_err(1, format!("header must be `label,f0,...,f{{d-1}}`, got `{}`", header.iter().collect::<Vec<_>>().join(","))));
    }

    let mut labels = Vec::new();
    let mut values = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != d + 1 {
            return Err(parse_err(line, format!("expected {} fields, found {}", d + 1, record.len())));
        }
        labels.push(record[0].trim().to_string());
        for (j, cell) in record.iter().skip(1).enumerate() {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| parse_err(line, format!("column f{j}: `{cell}` is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("column f{j}: non-finite value")));
            }
            values.push(v);
        }
    }
    if labels.is_empty() {
        return Err(parse_err(1, "no data rows".into()));
    }

    let mut distinct: Vec<&str> = labels.iter().map(String::as_str).collect();
    distinct.sort_by(|a, b| compare_labels(a, b));
    distinct.dedup();
    let index: BTreeMap<&str, usize> = distinct.iter().enumerate().map(|(i, l)| (*l, i)).collect();
    let classes: Vec<usize> = labels.iter().map(|l| index[l.as_str()]).collect();

    let n = labels.len();
    let features = DMatrix::from_row_slice(n, d, &values);
    let y = one_hot(&classes, distinct.len());
    if normalize {
        let bound = features.row_iter().map(|r| r.norm()).fold(1.0, f64::max);
        let raw = Dataset::new(features, y, bound)?;
        return Ok(normalize_rows(&raw)?);
    }
    if let Some(i) = (0..n).find(|&i| features.row(i).norm() > bound_b * (1.0 + 1e-9)) {
        return Err(HarnessError::Data(format!(
            "{}: row {} has norm {} > B = {bound_b}; pass --normalize",
            origin.display(),
            i + 1,
            features.row(i).norm()
        )));
    }
    Ok(Dataset::new(features, y, bound_b)?)
}

/// Writes `data` in the CSV layout read by [`load_features_csv`], with the
/// class index as label. Floats use the shortest round-trip representation.
pub fn write_features_csv<W: std::io::Write>(data: &Dataset, writer: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["label".to_string()];
    header.extend((0..data.dim()).map(|j| format!("f{j}")));
    w.write_record(&header)?;
    let classes = classes_of(data);
    for (i, class) in classes.iter().enumerate() {
        let mut row = vec![class.to_string()];
        row.extend(data.features().row(i).iter().map(|v| format!("{v}")));
        w.write_record(&row)?;
    }
    w.flush()
}

pub fn save_features_csv(data: &Dataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    write_features_csv(data, std::io::BufWriter::new(file)).map_err(|e| HarnessError::io(path, e))
}
