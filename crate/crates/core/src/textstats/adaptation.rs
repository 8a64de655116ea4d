//! Convergence of finetuning runs from their evaluation-perplexity logs.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{IdError, Result};
use crate::numeric::compensated_sum;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub step: u64,
    pub eval_ppl: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptationLog {
    pub eval_points: Vec<EvalPoint>,
    /// Iterations between evaluations.
    pub eval_interval: u64,
}

impl AdaptationLog {
    pub fn new(eval_points: Vec<EvalPoint>, eval_interval: u64) -> Result<Self> {
        for (row, w) in eval_points.windows(2).enumerate() {
            if w[1].step <= w[0].step {
                return Err(IdError::Data {
                    row: row + 1,
                    message: format!("step {} does not increase on {}", w[1].step, w[0].step),
                });
            }
        }
        if let Some(row) = eval_points
            .iter()
            .position(|p| !(p.eval_ppl.is_finite() && p.eval_ppl > 0.0))
        {
            return Err(IdError::Data {
                row,
                message: format!(
                    "eval_ppl must be positive, got {}",
                    eval_points[row].eval_ppl
                ),
            });
        }
        Ok(Self {
            eval_points,
            eval_interval,
        })
    }

    /// Parses `step,eval_ppl` CSV with a `# eval_interval=N` comment line.
    pub fn from_reader<R: Read>(mut reader: R) -> Result<Self> {
        let mut text = String::new();
        reader
            .read_to_string(&mut text)
            .map_err(|e| IdError::Format(format!("adaptation log: {e}")))?;
        let mut interval = None;
        for line in text.lines().filter(|l| l.trim_start().starts_with('#')) {
            let body = line.trim_start().trim_start_matches('#').trim();
            if let Some(v) = body.strip_prefix("eval_interval=") {
                interval = Some(
                    v.trim()
                        .parse::<u64>()
                        .map_err(|e| IdError::Schema(format!("bad eval_interval {v:?}: {e}")))?,
                );
            }
        }
        let interval =
            interval.ok_or_else(|| IdError::Schema("missing '# eval_interval=' comment".into()))?;
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let points = rdr
            .deserialize::<EvalPoint>()
            .enumerate()
            .map(|(row, r)| {
                r.map_err(|e| IdError::Data {
                    row,
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(points, interval)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| IdError::io(path, e))?;
        Self::from_reader(f)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("# eval_interval={}\nstep,eval_ppl\n", self.eval_interval);
        for p in &self.eval_points {
            s.push_str(&format!("{},{}\n", p.step, p.eval_ppl));
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptationMetrics {
    /// Evaluation steps up to and including convergence.
    pub t: usize,
    pub converged: bool,
    /// Best perplexity among the first `t` evaluations.
    pub final_ppl: f64,
    /// Perplexity at evaluation `t`.
    pub last_ppl: f64,
    /// Mean perplexity over the first `t` evaluations.
    pub sample_complexity: f64,
    /// `t * eval_interval`.
    pub iterations: u64,
}

/// Stops at the first evaluation after which the best-so-far perplexity
/// has not strictly decreased for `patience` evaluations in a row.
pub fn adaptation_metrics(log: &AdaptationLog, patience: usize) -> Result<AdaptationMetrics> {
    if patience == 0 {
        return Err(IdError::Parameter("patience must be >= 1".into()));
    }
    let ppl: Vec<f64> = log.eval_points.iter().map(|p| p.eval_ppl).collect();
    if ppl.is_empty() {
        return Err(IdError::Empty("adaptation log has no evaluations".into()));
    }
    let mut best = ppl[0];
    let mut stale = 0;
    let mut stop = None;
    for (i, &p) in ppl.iter().enumerate().skip(1) {
        if p < best {
            best = p;
            stale = 0;
        } else {
            stale += 1;
            if stale == patience {
                stop = Some(i + 1);
                break;
            }
        }
    }
    let t = stop.unwrap_or(ppl.len());
    let seen = &ppl[..t];
    Ok(AdaptationMetrics {
        t,
        converged: stop.is_some(),
        final_ppl: seen.iter().copied().fold(f64::INFINITY, f64::min),
        last_ppl: seen[t - 1],
        sample_complexity: compensated_sum(seen.iter().copied()) / t as f64,
        iterations: t as u64 * log.eval_interval,
    })
}
