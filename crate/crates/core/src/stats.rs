//! Spearman rank correlation, masked correlation matrices and the
//! ID/perplexity linkage report.

use std::collections::{BTreeMap, HashSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{IdError, Result};

/// Largest sample size for which p-values come from full enumeration.
pub const EXACT_MAX_N: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    Exact,
    StudentT,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub rho: f64,
    pub p_value: f64,
    pub n: usize,
    pub method: PValueMethod,
    /// The masking level this report passed, when it was masked at all.
    pub significant_at: Option<f64>,
}

/// 1-based ranks with ties sharing their average rank, doubled so that
/// every rank is an integer.
fn doubled_ranks(x: &[f64]) -> Vec<i64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0i64; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        // average of ranks i+1..=j+1, doubled
        let r = (i + j + 2) as i64;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Average ranks (1-based) with ties sharing their mean rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    doubled_ranks(x)
        .into_iter()
        .map(|r| r as f64 / 2.0)
        .collect()
}

/// Centered doubled ranks scaled by `n` so that all arithmetic stays in
/// integers: `c_i = n * r_i - sum(r)`.
fn centered(ranks: &[i64]) -> Vec<i64> {
    let n = ranks.len() as i64;
    let s: i64 = ranks.iter().sum();
    ranks.iter().map(|r| n * r - s).collect()
}

fn cross(a: &[i64], b: &[i64]) -> i128 {
    a.iter().zip(b).map(|(x, y)| *x as i128 * *y as i128).sum()
}

/// Two-sided p-value of `rho` from the Student-t approximation.
pub fn t_approx_p(rho: f64, n: usize) -> f64 {
    if n < 3 {
        return 1.0;
    }
    if rho.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = rho * (df / (1.0 - rho * rho)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
}

/// Visits every permutation of `v` (Heap's algorithm, iterative).
fn for_each_permutation(v: &mut [i64], mut f: impl FnMut(&[i64])) {
    let n = v.len();
    let mut c = vec![0usize; n];
    f(v);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                v.swap(0, i);
            } else {
                v.swap(c[i], i);
            }
            f(v);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// Exact two-sided permutation p-value: the fraction of the `n!`
/// reorderings of `y` whose |rank covariance| reaches the observed one.
fn exact_p(cx: &[i64], cy: &[i64]) -> f64 {
    let observed = cross(cx, cy).abs();
    let mut hits = 0u64;
    let mut total = 0u64;
    let mut perm = cy.to_vec();
    for_each_permutation(&mut perm, |p| {
        total += 1;
        if cross(cx, p).abs() >= observed {
            hits += 1;
        }
    });
    hits as f64 / total as f64
}

/// Spearman correlation of `x` and `y`. NaN marks a missing value; pairs
/// with either side missing are dropped.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<CorrelationReport> {
    if x.len() != y.len() {
        return Err(IdError::Shape(format!(
            "spearman needs equal lengths, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter(|(a, b)| !a.is_nan() && !b.is_nan())
        .map(|(a, b)| (*a, *b))
        .unzip();
    let n = xs.len();
    if n < 3 {
        return Err(IdError::Sample(format!(
            "spearman needs at least 3 complete pairs, got {n}"
        )));
    }
    let cx = centered(&doubled_ranks(&xs));
    let cy = centered(&doubled_ranks(&ys));
    let (sxx, syy) = (cross(&cx, &cx), cross(&cy, &cy));
    if sxx == 0 || syy == 0 {
        return Err(IdError::Degenerate(
            "constant input has no rank variance".into(),
        ));
    }
    let sxy = cross(&cx, &cy);
    let rho = if sxy * sxy == sxx * syy {
        sxy.signum() as f64
    } else {
        (sxy as f64 / ((sxx as f64) * (syy as f64)).sqrt()).clamp(-1.0, 1.0)
    };
    let (p_value, method) = if n <= EXACT_MAX_N {
        (exact_p(&cx, &cy), PValueMethod::Exact)
    } else {
        (t_approx_p(rho, n), PValueMethod::StudentT)
    };
    Ok(CorrelationReport {
        rho,
        p_value,
        n,
        method,
        significant_at: None,
    })
}

/// Datasets by named metrics; missing cells are NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricTable {
    row_ids: Vec<String>,
    columns: Vec<String>,
    /// Column-major cells.
    values: Vec<Vec<f64>>,
}

fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan")
}

impl MetricTable {
    pub fn new(row_ids: Vec<String>, columns: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c) {
                return Err(IdError::Schema(format!("duplicate column '{c}'")));
            }
        }
        if values.len() != columns.len() || values.iter().any(|v| v.len() != row_ids.len()) {
            return Err(IdError::Shape(format!(
                "{} columns x {} rows expected",
                columns.len(),
                row_ids.len()
            )));
        }
        Ok(Self {
            row_ids,
            columns,
            values,
        })
    }

    /// CSV with `dataset_id` as the first column; empty, `NA` or `nan`
    /// cells are missing.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.get(0) != Some("dataset_id") {
            return Err(IdError::Schema("first column must be 'dataset_id'".into()));
        }
        let columns: Vec<String> = headers.iter().skip(1).map(String::from).collect();
        let mut row_ids = Vec::new();
        let mut values = vec![Vec::new(); columns.len()];
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != columns.len() + 1 {
                return Err(IdError::Data {
                    row,
                    message: format!("{} cells, expected {}", rec.len(), columns.len() + 1),
                });
            }
            row_ids.push(rec[0].to_string());
            for (j, col) in values.iter_mut().enumerate() {
                let cell = &rec[j + 1];
                let v = if is_missing(cell) {
                    f64::NAN
                } else {
                    cell.trim().parse().map_err(|_| IdError::Data {
                        row,
                        message: format!("column '{}': not a number: {cell:?}", columns[j]),
                    })?
                };
                col.push(v);
            }
        }
        Self::new(row_ids, columns, values)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| IdError::io(path, e))?;
        Self::from_reader(f)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["dataset_id".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for (i, id) in self.row_ids.iter().enumerate() {
            let mut rec = vec![id.clone()];
            rec.extend(self.values.iter().map(|c| {
                if c[i].is_nan() {
                    String::new()
                } else {
                    c[i].to_string()
                }
            }));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| IdError::Format(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .position(|c| c == name)
            .map(|j| self.values[j].as_slice())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub columns: Vec<String>,
    pub alpha: f64,
    /// `None` where the correlation could not be computed.
    pub cells: Vec<Vec<Option<CorrelationReport>>>,
    /// `true` = hidden (diagonal, failed, or p > alpha).
    pub mask: Vec<Vec<bool>>,
}

pub fn correlation_matrix(table: &MetricTable, alpha: f64) -> Result<CorrelationMatrix> {
    let m = table.columns.len();
    if m < 2 {
        return Err(IdError::Parameter(
            "correlation matrix needs at least 2 columns".into(),
        ));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(IdError::Parameter(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    let mut cells: Vec<Vec<Option<CorrelationReport>>> = vec![vec![None; m]; m];
    let mut mask = vec![vec![true; m]; m];
    for i in 0..m {
        cells[i][i] = Some(CorrelationReport {
            rho: 1.0,
            p_value: 0.0,
            n: table.values[i].iter().filter(|v| !v.is_nan()).count(),
            method: PValueMethod::Exact,
            significant_at: None,
        });
        for j in i + 1..m {
            let cell = spearman(&table.values[i], &table.values[j])
                .ok()
                .map(|mut r| {
                    if r.p_value <= alpha {
                        r.significant_at = Some(alpha);
                    }
                    r
                });
            let hidden = cell.as_ref().map_or(true, |r| r.significant_at.is_none());
            mask[i][j] = hidden;
            mask[j][i] = hidden;
            cells[j][i] = cell.clone();
            cells[i][j] = cell;
        }
    }
    Ok(CorrelationMatrix {
        columns: table.columns.clone(),
        alpha,
        cells,
        mask,
    })
}

pub const REQUIRED_LINKAGE_COLUMNS: [&str; 4] =
    ["max_id", "log_ppl", "sample_complexity", "final_ppl"];
pub const DESCRIPTOR_COLUMNS: [&str; 4] =
    ["vocab_size", "vocab_entropy", "avg_seq_len", "n_tokens"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescriptorLinkage {
    pub vs_id: Option<CorrelationReport>,
    pub vs_log_ppl: Option<CorrelationReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkageReport {
    pub id_vs_log_ppl: Option<CorrelationReport>,
    pub id_vs_sample_complexity: Option<CorrelationReport>,
    pub id_vs_final_ppl: Option<CorrelationReport>,
    /// Present descriptor columns, each against ID and log-PPL.
    pub descriptors: BTreeMap<String, DescriptorLinkage>,
    pub n_datasets: usize,
}

pub fn linkage_report(table: &MetricTable) -> Result<LinkageReport> {
    let missing: Vec<&str> = REQUIRED_LINKAGE_COLUMNS
        .iter()
        .copied()
        .filter(|c| table.column(c).is_none())
        .collect();
    if !missing.is_empty() {
        return Err(IdError::Schema(format!(
            "metric table lacks required columns: {}",
            missing.join(", ")
        )));
    }
    let col = |name: &str| table.column(name).expect("checked above");
    let id = col("max_id");
    let ppl = col("log_ppl");
    let corr = |a: &[f64], b: &[f64]| spearman(a, b).ok();
    let descriptors = DESCRIPTOR_COLUMNS
        .iter()
        .filter_map(|d| {
            table.column(d).map(|v| {
                (
                    d.to_string(),
                    DescriptorLinkage {
                        vs_id: corr(v, id),
                        vs_log_ppl: corr(v, ppl),
                    },
                )
            })
        })
        .collect();
    Ok(LinkageReport {
        id_vs_log_ppl: corr(id, ppl),
        id_vs_sample_complexity: corr(id, col("sample_complexity")),
        id_vs_final_ppl: corr(id, col("final_ppl")),
        descriptors,
        n_datasets: table.row_ids.len(),
    })
}
