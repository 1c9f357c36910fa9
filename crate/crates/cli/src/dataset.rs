//! Tabular CSV and IDX image ingestion, scaled to `[0, 1]`.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{io_at, CliError, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        }
    }

    /// Keeps the first `n` rows.
    pub fn truncate(&mut self, n: usize) {
        self.features.truncate(n);
        self.labels.truncate(n);
    }
}

/// Label column by header name or 0-based position.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

/// Per-feature min-max scaling over all rows. Constant columns map to 0.
pub fn min_max(features: &mut [Vec<f64>]) {
    let Some(dim) = features.first().map(Vec::len) else {
        return;
    };
    for j in 0..dim {
        let (lo, hi) = features.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            (lo.min(r[j]), hi.max(r[j]))
        });
        let span = hi - lo;
        for r in features.iter_mut() {
            r[j] = if span > 0.0 { (r[j] - lo) / span } else { 0.0 };
        }
    }
}

/// Reads a headed CSV. The label column defaults to the last one; class
/// ids follow the sorted order of the distinct label strings.
pub fn load_csv(path: &Path, label: Option<&LabelColumn>) -> Result<(Dataset, Vec<String>)> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.len() < 2 {
        return Err(CliError::Malformed(format!(
            "{}: need a label and at least one feature",
            path.display()
        )));
    }
    let label_idx = match label {
        None => headers.len() - 1,
        Some(LabelColumn::Index(i)) if *i < headers.len() => *i,
        Some(LabelColumn::Index(i)) => {
            return Err(CliError::Malformed(format!(
                "label column {i} outside {} columns",
                headers.len()
            )))
        }
        Some(LabelColumn::Name(name)) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Malformed(format!("no column named {name:?}")))?,
    };

    let mut features = Vec::new();
    let mut raw_labels = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let mut x = Vec::with_capacity(record.len() - 1);
        for (j, field) in record.iter().enumerate() {
            if j == label_idx {
                raw_labels.push(field.trim().to_string());
            } else {
                let v: f64 = field.trim().parse().map_err(|_| {
                    CliError::Malformed(format!("row {}: column {j} is not a number: {field:?}", row + 2))
                })?;
                if !v.is_finite() {
                    return Err(CliError::Malformed(format!(
                        "row {}: column {j} is not finite",
                        row + 2
                    )));
                }
                x.push(v);
            }
        }
        features.push(x);
    }
    let names: Vec<String> = raw_labels
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if names.len() < 2 {
        return Err(CliError::Labels(format!(
            "{} distinct labels, need at least 2",
            names.len()
        )));
    }
    let labels = raw_labels
        .iter()
        .map(|l| names.binary_search(l).expect("label collected above"))
        .collect();
    min_max(&mut features);
    Ok((
        Dataset {
            features,
            labels,
            classes: names.len(),
        },
        names,
    ))
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| CliError::Malformed("truncated IDX header".into()))
}

/// Image count, rows, cols and raw pixels.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(CliError::Malformed(format!(
            "image magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"
        )));
    }
    let (n, rows, cols) = (
        be_u32(bytes, 4)? as usize,
        be_u32(bytes, 8)? as usize,
        be_u32(bytes, 12)? as usize,
    );
    let body = &bytes[16..];
    if body.len() != n * rows * cols {
        return Err(CliError::Malformed(format!(
            "image payload has {} bytes, header promises {n}x{rows}x{cols}",
            body.len()
        )));
    }
    Ok((n, rows, cols, body))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<&[u8]> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(CliError::Malformed(format!(
            "label magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"
        )));
    }
    let n = be_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return Err(CliError::Malformed(format!(
            "label payload has {} bytes, header promises {n}",
            body.len()
        )));
    }
    Ok(body)
}

/// Non-overlapping `pool × pool` averages of one image, divided by 255.
/// Trailing rows and columns that do not fill a window are dropped.
pub fn average_pool(pixels: &[u8], rows: usize, cols: usize, pool: usize) -> Vec<f64> {
    let (pr, pc) = (rows / pool, cols / pool);
    let norm = (pool * pool) as f64 * 255.0;
    let mut out = Vec::with_capacity(pr * pc);
    for i in 0..pr {
        for j in 0..pc {
            let mut sum = 0u32;
            for di in 0..pool {
                let row = &pixels[(i * pool + di) * cols + j * pool..][..pool];
                sum += row.iter().map(|&p| p as u32).sum::<u32>();
            }
            out.push(sum as f64 / norm);
        }
    }
    out
}

/// Loads an IDX image/label pair. With `classes = None` the count is
/// inferred as the largest label plus one.
pub fn load_idx(images: &Path, labels: &Path, pool: usize, classes: Option<usize>) -> Result<Dataset> {
    if pool == 0 {
        return Err(CliError::Config("pooling factor must be at least 1".into()));
    }
    let img_bytes = std::fs::read(images).map_err(io_at(images))?;
    let lbl_bytes = std::fs::read(labels).map_err(io_at(labels))?;
    let (n, rows, cols, pixels) = parse_idx_images(&img_bytes)?;
    let raw = parse_idx_labels(&lbl_bytes)?;
    if raw.len() != n {
        return Err(CliError::Labels(format!("{n} images but {} labels", raw.len())));
    }
    if pool > rows || pool > cols {
        return Err(CliError::Config(format!(
            "pooling factor {pool} exceeds the {rows}x{cols} image"
        )));
    }
    let observed = raw.iter().copied().max().map_or(0, |m| m as usize + 1);
    let classes = classes.unwrap_or(observed);
    if observed > classes {
        return Err(CliError::Labels(format!(
            "label {} outside {classes} classes",
            observed - 1
        )));
    }
    let features = pixels
        .chunks_exact(rows * cols)
        .map(|img| average_pool(img, rows, cols, pool))
        .collect();
    Ok(Dataset {
        features,
        labels: raw.iter().map(|&l| l as usize).collect(),
        classes,
    })
}

/// Seeded stratified split with exactly `test_rows` test samples. Per-class
/// test counts follow the class frequencies by largest remainder. Both
/// index lists come back sorted.
pub fn stratified_split(ds: &Dataset, test_rows: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = ds.len();
    if test_rows == 0 || test_rows >= n {
        return Err(CliError::Config(format!("test size {test_rows} must lie in 1..{n}")));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.classes];
    for (i, &l) in ds.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut quota: Vec<(usize, usize)> = by_class
        .iter()
        .map(|idx| {
            let exact = test_rows * idx.len();
            (exact / n, exact % n)
        })
        .collect();
    let assigned: usize = quota.iter().map(|q| q.0).sum();
    let mut order: Vec<usize> = (0..ds.classes).collect();
    order.sort_by(|&a, &b| quota[b].1.cmp(&quota[a].1).then(a.cmp(&b)));
    for &c in order.iter().take(test_rows - assigned) {
        quota[c].0 += 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (idx, (k, _)) in by_class.iter_mut().zip(&quota) {
        idx.shuffle(&mut rng);
        test.extend_from_slice(&idx[..*k]);
        train.extend_from_slice(&idx[*k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}
