//! Perplexity and coding length from per-token negative log-likelihoods.
//!
//! NLLs are stored in nats. Each value is converted to bits once and
//! perplexity is `2^(mean bits)`, so fair-coin and other power-of-two
//! models come out exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{IdError, Result};
use crate::numeric::{order_free_sum, shifted_mean};

use super::{read_header, read_jsonl, write_header, write_jsonl, TokenDataset};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NllConvention {
    /// `l - 1` values per sequence; the first token has no context.
    SkipFirstToken,
    /// `l` values per sequence.
    AllTokens,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NllHeader {
    pub units: String,
    pub convention: NllConvention,
}

impl Default for NllHeader {
    fn default() -> Self {
        Self {
            units: "nats".into(),
            convention: NllConvention::SkipFirstToken,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct NllLine {
    nll: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NllRecord {
    pub header: NllHeader,
    pub sequences: Vec<Vec<f64>>,
}

impl NllRecord {
    pub fn new(header: NllHeader, sequences: Vec<Vec<f64>>) -> Result<Self> {
        if header.units != "nats" {
            return Err(IdError::Schema(format!(
                "NLL units must be \"nats\", got {:?}",
                header.units
            )));
        }
        for (row, s) in sequences.iter().enumerate() {
            if let Some(v) = s.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(IdError::Data {
                    row,
                    message: format!("NLL values must be finite and >= 0, got {v}"),
                });
            }
        }
        Ok(Self { header, sequences })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let header: NllHeader = read_header(path)?;
        let lines: Vec<NllLine> = read_jsonl(path)?;
        Self::new(header, lines.into_iter().map(|l| l.nll).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_header(path, &self.header)?;
        write_jsonl(
            path,
            self.sequences.iter().map(|s| NllLine { nll: s.clone() }),
        )
    }

    /// Checks that line `i` scores sequence `i` of `tokens` under the
    /// declared convention.
    pub fn check_alignment(&self, tokens: &TokenDataset) -> Result<()> {
        if self.sequences.len() != tokens.len() {
            return Err(IdError::Data {
                row: self.sequences.len().min(tokens.len()),
                message: format!(
                    "{} NLL lines for {} token sequences",
                    self.sequences.len(),
                    tokens.len()
                ),
            });
        }
        let offset = match self.header.convention {
            NllConvention::SkipFirstToken => 1,
            NllConvention::AllTokens => 0,
        };
        for (row, (n, t)) in self.sequences.iter().zip(tokens.sequences()).enumerate() {
            if n.len() + offset != t.len() {
                return Err(IdError::Data {
                    row,
                    message: format!(
                        "{} NLL values for a sequence of {} tokens ({:?})",
                        n.len(),
                        t.len(),
                        self.header.convention
                    ),
                });
            }
        }
        Ok(())
    }
}

fn to_bits(nll: &[f64]) -> Result<Vec<f64>> {
    nll.iter()
        .enumerate()
        .map(|(row, &v)| {
            if v.is_finite() && v >= 0.0 {
                Ok(v / std::f64::consts::LN_2)
            } else {
                Err(IdError::Data {
                    row,
                    message: format!("NLL must be finite and >= 0, got {v}"),
                })
            }
        })
        .collect()
}

/// Perplexity of one sequence from its per-token NLLs in nats.
pub fn sequence_ppl(nll: &[f64]) -> Result<f64> {
    if nll.is_empty() {
        return Err(IdError::Empty("no scored tokens".into()));
    }
    Ok(shifted_mean(&to_bits(nll)?).exp2())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetPpl {
    /// Arithmetic mean of per-sequence perplexities.
    pub avg_ppl: f64,
    pub coding_length_bits: f64,
    /// `2^(total bits / scored tokens)`.
    pub token_weighted_ppl: f64,
    pub n_sequences: usize,
    pub n_scored_tokens: usize,
    /// Sequences with no scored token (length 1 under skip-first-token).
    pub sequences_skipped: usize,
}

pub fn dataset_ppl(records: &NllRecord) -> Result<DatasetPpl> {
    let mut ppls = Vec::with_capacity(records.sequences.len());
    let mut bits = Vec::new();
    let mut skipped = 0;
    for s in &records.sequences {
        if s.is_empty() {
            skipped += 1;
            continue;
        }
        let b = to_bits(s)?;
        ppls.push(shifted_mean(&b).exp2());
        bits.extend(b);
    }
    if ppls.is_empty() {
        return Err(IdError::Empty("NLL record has no scored tokens".into()));
    }
    let coding_length_bits = order_free_sum(&bits);
    Ok(DatasetPpl {
        avg_ppl: order_free_sum(&ppls) / ppls.len() as f64,
        coding_length_bits,
        token_weighted_ppl: (coding_length_bits / bits.len() as f64).exp2(),
        n_sequences: ppls.len(),
        n_scored_tokens: bits.len(),
        sequences_skipped: skipped,
    })
}
