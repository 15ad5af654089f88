//! Dataset loading, preprocessing, and label masking.
//!
//! Datasets hold a feature matrix, integer labels in `1..=K`, and optionally
//! a native edge list (citation-style graphs). A [`MaskedStream`] fixes the
//! arrival order, the warm-start subset (one labeled observation per class),
//! and the set of observations whose labels the environment will conceal.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::{OprError, Result};

/// A loaded dataset: `T` observations with `D` features and labels in `1..=K`.
#[derive(Debug, Clone, Serialize)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    /// Undirected edge pairs as 0-based row indices, `i < j`, deduplicated.
    pub native_edges: Option<Vec<(usize, usize)>>,
    pub name: String,
}

impl Dataset {
    pub fn num_observations(&self) -> usize {
        self.features.nrows()
    }

    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }

    /// Validates the documented invariants; loaders call this before returning.
    pub fn validate(&self) -> Result<()> {
        let t = self.features.nrows();
        if t == 0 {
            return Err(OprError::EmptyDataset);
        }
        if self.labels.len() != t {
            return Err(OprError::ShapeMismatch(format!(
                "{} labels for {} rows",
                self.labels.len(),
                t
            )));
        }
        if self.num_classes < 2 {
            return Err(OprError::TooFewClasses(self.num_classes));
        }
        for (i, &y) in self.labels.iter().enumerate() {
            if y < 1 || y > self.num_classes {
                return Err(OprError::MalformedRow {
                    line: i + 1,
                    msg: format!("label {y} outside 1..={}", self.num_classes),
                });
            }
        }
        for row in self.features.rows() {
            if row.iter().all(|v| v.is_nan()) {
                return Err(OprError::NonFinite("feature row (all NaN)"));
            }
        }
        if let Some(edges) = &self.native_edges {
            for &(a, b) in edges {
                if a >= t || b >= t {
                    return Err(OprError::UnknownNodeId(format!("({a},{b})")));
                }
            }
        }
        Ok(())
    }
}

/// How to find the label column in a CSV file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelColumn {
    /// Header name; requires the file to have a header row.
    Name(String),
    /// 0-based column index.
    Index(usize),
}

/// Loader options for CSV files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsvOptions {
    pub has_header: bool,
    pub label_column: LabelColumn,
    /// Columns to drop, by header name or 0-based index (as decimal string).
    pub drop_columns: Vec<String>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            has_header: false,
            label_column: LabelColumn::Index(0),
            drop_columns: Vec::new(),
        }
    }
}

/// Load a CSV dataset. Labels are treated as categorical and re-encoded to
/// `1..=K` in order of first appearance.
pub fn load_csv(path: &Path, opts: &CsvOptions) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(opts.has_header)
        .flexible(false)
        .from_path(path)
        .map_err(|e| csv_error(e, 0))?;

    let headers: Vec<String> = if opts.has_header {
        reader
            .headers()
            .map_err(|e| csv_error(e, 1))?
            .iter()
            .map(|s| s.trim().to_string())
            .collect()
    } else {
        Vec::new()
    };

    let resolve = |spec: &str| -> Result<usize> {
        if let Some(idx) = headers.iter().position(|h| h == spec) {
            return Ok(idx);
        }
        spec.parse::<usize>()
            .map_err(|_| OprError::UnknownColumn(spec.to_string()))
    };

    let label_idx = match &opts.label_column {
        LabelColumn::Name(name) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| OprError::UnknownLabelColumn(name.clone()))?,
        LabelColumn::Index(i) => *i,
    };
    let mut drop_idx: Vec<usize> = opts
        .drop_columns
        .iter()
        .map(|s| resolve(s))
        .collect::<Result<_>>()?;
    drop_idx.sort_unstable();
    drop_idx.dedup();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    for (rec_no, record) in reader.records().enumerate() {
        let line = rec_no + 1 + usize::from(opts.has_header);
        let record = record.map_err(|e| csv_error(e, line))?;
        if label_idx >= record.len() {
            return Err(OprError::UnknownLabelColumn(format!(
                "index {label_idx} out of range for {} columns",
                record.len()
            )));
        }
        let mut feats = Vec::with_capacity(record.len().saturating_sub(1));
        for (col, field) in record.iter().enumerate() {
            if col == label_idx {
                raw_labels.push(field.trim().to_string());
                continue;
            }
            if drop_idx.binary_search(&col).is_ok() {
                continue;
            }
            let v: f64 = field.trim().parse().map_err(|_| OprError::MalformedRow {
                line,
                msg: format!("column {col}: cannot parse '{field}' as a number"),
            })?;
            feats.push(v);
        }
        if let Some(first) = rows.first() {
            if feats.len() != first.len() {
                return Err(OprError::MalformedRow {
                    line,
                    msg: format!("expected {} feature columns, got {}", first.len(), feats.len()),
                });
            }
        }
        rows.push(feats);
    }
    if rows.is_empty() {
        return Err(OprError::EmptyDataset);
    }

    let (labels, num_classes) = encode_labels(&raw_labels);
    let d = rows[0].len();
    let mut features = Array2::<f64>::zeros((rows.len(), d));
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            features[[i, j]] = v;
        }
    }

    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".to_string());
    let ds = Dataset {
        features,
        labels,
        num_classes,
        native_edges: None,
        name,
    };
    ds.validate()?;
    Ok(ds)
}

fn csv_error(e: csv::Error, fallback_line: usize) -> OprError {
    let line = e
        .position()
        .map(|p| p.line() as usize)
        .unwrap_or(fallback_line);
    OprError::MalformedRow {
        line,
        msg: e.to_string(),
    }
}

/// Locate the `.content` / `.cites` pair for a citation-graph dataset.
/// `path` may be the content file itself or a directory containing exactly
/// one such pair.
fn citation_pair(path: &Path) -> Result<(PathBuf, PathBuf)> {
    if path.is_dir() {
        let mut content = None;
        for entry in fs::read_dir(path)? {
            let p = entry?.path();
            if p.extension().is_some_and(|e| e == "content") {
                content = Some(p);
            }
        }
        let content = content.ok_or_else(|| {
            OprError::Config(format!("no .content file found in {}", path.display()))
        })?;
        let cites = content.with_extension("cites");
        Ok((content, cites))
    } else {
        let cites = path.with_extension("cites");
        Ok((path.to_path_buf(), cites))
    }
}

/// Load a citation-graph dataset: a content file of
/// `id<TAB>feat...<TAB>label` lines plus a cites file of `id<TAB>id` lines.
pub fn load_citation_graph(path: &Path) -> Result<Dataset> {
    let (content_path, cites_path) = citation_pair(path)?;
    let content = fs::read_to_string(&content_path)?;

    let mut id_to_row: HashMap<String, usize> = HashMap::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    for (line_no, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let id = fields
            .next()
            .ok_or_else(|| OprError::MalformedRow {
                line: line_no + 1,
                msg: "empty line".into(),
            })?
            .to_string();
        let rest: Vec<&str> = fields.collect();
        if rest.len() < 2 {
            return Err(OprError::MalformedRow {
                line: line_no + 1,
                msg: "expected id, at least one feature, and a label".into(),
            });
        }
        let (label, feats) = rest.split_last().unwrap();
        let parsed: Vec<f64> = feats
            .iter()
            .map(|f| {
                f.trim().parse::<f64>().map_err(|_| OprError::MalformedRow {
                    line: line_no + 1,
                    msg: format!("cannot parse '{f}' as a number"),
                })
            })
            .collect::<Result<_>>()?;
        if let Some(first) = rows.first() {
            if parsed.len() != first.len() {
                return Err(OprError::MalformedRow {
                    line: line_no + 1,
                    msg: format!("expected {} features, got {}", first.len(), parsed.len()),
                });
            }
        }
        id_to_row.insert(id, rows.len());
        rows.push(parsed);
        raw_labels.push(label.trim().to_string());
    }
    if rows.is_empty() {
        return Err(OprError::EmptyDataset);
    }

    let cites = fs::read_to_string(&cites_path)?;
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for (line_no, line) in cites.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let a = fields.next().unwrap_or("");
        let b = fields.next().unwrap_or("");
        let ra = *id_to_row
            .get(a)
            .ok_or_else(|| OprError::UnknownNodeId(format!("{a} (cites line {})", line_no + 1)))?;
        let rb = *id_to_row
            .get(b)
            .ok_or_else(|| OprError::UnknownNodeId(format!("{b} (cites line {})", line_no + 1)))?;
        if ra == rb {
            continue; // self-citation carries no edge
        }
        edges.push((ra.min(rb), ra.max(rb)));
    }
    edges.sort_unstable();
    edges.dedup();

    let (labels, num_classes) = encode_labels(&raw_labels);
    let d = rows[0].len();
    let mut features = Array2::<f64>::zeros((rows.len(), d));
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            features[[i, j]] = v;
        }
    }
    let name = content_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "citation".to_string());
    let ds = Dataset {
        features,
        labels,
        num_classes,
        native_edges: Some(edges),
        name,
    };
    ds.validate()?;
    Ok(ds)
}

/// Re-encode categorical labels to `1..=K` in order of first appearance.
fn encode_labels(raw: &[String]) -> (Vec<usize>, usize) {
    let mut map: HashMap<&str, usize> = HashMap::new();
    let mut next = 0usize;
    let labels = raw
        .iter()
        .map(|s| {
            *map.entry(s.as_str()).or_insert_with(|| {
                next += 1;
                next
            })
        })
        .collect();
    (labels, next)
}

/// Scale each row to unit l1 norm. All-zero rows are left untouched.
pub fn l1_row_normalize(features: &mut Array2<f64>) {
    for mut row in features.rows_mut() {
        let norm: f64 = row.iter().map(|v| v.abs()).sum();
        if norm > 0.0 {
            row.mapv_inplace(|v| v / norm);
        }
    }
}

/// A dataset plus a fixed arrival order, warm-start subset, and concealment
/// mask. Immutable once built; every policy in a replica sees the same stream.
#[derive(Debug, Clone, Serialize)]
pub struct MaskedStream {
    pub dataset: Dataset,
    /// Arrival order as dataset row indices. Warm-start rows occupy the first
    /// `K` positions (one per class, in class order).
    pub order: Vec<usize>,
    /// Per dataset row: will the environment answer -1 for this observation.
    pub concealed: Vec<bool>,
    /// One row index per class, in class order `1..=K`.
    pub warm_start_indices: Vec<usize>,
}

impl MaskedStream {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn num_warm(&self) -> usize {
        self.warm_start_indices.len()
    }

    /// Dataset row arriving at stream position `pos` (0-based; warm start first).
    pub fn row_at(&self, pos: usize) -> usize {
        self.order[pos]
    }

    pub fn features_at(&self, pos: usize) -> ArrayView1<'_, f64> {
        self.dataset.features.row(self.order[pos])
    }

    pub fn label_at(&self, pos: usize) -> usize {
        self.dataset.labels[self.order[pos]]
    }

    pub fn concealed_at(&self, pos: usize) -> bool {
        self.concealed[self.order[pos]]
    }

    /// Stable textual form used by the determinism checks.
    pub fn canonical_string(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "order={:?};concealed={:?};warm={:?}",
            self.order,
            self.concealed.iter().map(|&b| u8::from(b)).collect::<Vec<_>>(),
            self.warm_start_indices
        );
        s
    }
}

/// Fix arrival order, draw the warm-start subset (one observation per class,
/// uniformly), and conceal exactly `round(missing_fraction * (T - K))` of the
/// remaining observations. Deterministic given `seed`; depends only on the
/// labels and `T`, never on feature values.
pub fn mask_and_order(dataset: Dataset, missing_fraction: f64, seed: u64) -> Result<MaskedStream> {
    if !(0.0..=1.0).contains(&missing_fraction) {
        return Err(OprError::Config(format!(
            "missing fraction {missing_fraction} outside [0, 1]"
        )));
    }
    dataset.validate()?;
    let t = dataset.num_observations();
    let k = dataset.num_classes;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // One warm-start observation per class, uniform within the class.
    let mut warm_start_indices = Vec::with_capacity(k);
    for class in 1..=k {
        let members: Vec<usize> = dataset
            .labels
            .iter()
            .enumerate()
            .filter(|(_, &y)| y == class)
            .map(|(i, _)| i)
            .collect();
        if members.is_empty() {
            return Err(OprError::EmptyClass(class));
        }
        let pick = members[rng.gen_range(0..members.len())];
        warm_start_indices.push(pick);
    }

    // Shuffle the non-warm-start rows into the online arrival order.
    let mut rest: Vec<usize> = (0..t).filter(|i| !warm_start_indices.contains(i)).collect();
    rest.shuffle(&mut rng);
    let mut order = warm_start_indices.clone();
    order.extend_from_slice(&rest);

    // Conceal an exact count of the non-warm-start rows, chosen uniformly.
    // Selection runs over row indices in ascending order, so the concealed
    // set is independent of the arrival permutation as well.
    let online = t - k;
    let num_concealed = (missing_fraction * online as f64).round() as usize;
    let mut candidates: Vec<usize> = (0..t).filter(|i| !warm_start_indices.contains(i)).collect();
    let (chosen, _) = candidates.partial_shuffle(&mut rng, num_concealed);
    let mut concealed = vec![false; t];
    for &i in chosen.iter() {
        concealed[i] = true;
    }

    Ok(MaskedStream {
        dataset,
        order,
        concealed,
        warm_start_indices,
    })
}
