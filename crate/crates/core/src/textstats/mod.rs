//! Token datasets, the three structure ablations, shallow descriptors,
//! perplexity and adaptation metrics.

mod adaptation;
mod ppl;

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{IdError, Result};
use crate::numeric::compensated_sum;

pub use adaptation::{adaptation_metrics, AdaptationLog, AdaptationMetrics, EvalPoint};
pub use ppl::{dataset_ppl, sequence_ppl, DatasetPpl, NllConvention, NllHeader, NllRecord};

pub type TokenId = u32;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenHeader {
    pub vocab_bound: TokenId,
    #[serde(default)]
    pub special_tokens: BTreeSet<TokenId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenDataset {
    sequences: Vec<Vec<TokenId>>,
    vocab_bound: TokenId,
    special_tokens: BTreeSet<TokenId>,
}

#[derive(Serialize, Deserialize)]
struct IdsLine {
    ids: Vec<TokenId>,
}

/// `data.jsonl` -> `data.header.json`.
pub fn header_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.header.json"))
}

pub(crate) fn read_header<H: for<'de> Deserialize<'de>>(path: &Path) -> Result<H> {
    let hp = header_path(path);
    let f = File::open(&hp).map_err(|e| IdError::io(&hp, e))?;
    serde_json::from_reader(BufReader::new(f))
        .map_err(|e| IdError::Schema(format!("{}: {e}", hp.display())))
}

pub(crate) fn write_header<H: Serialize>(path: &Path, header: &H) -> Result<()> {
    let hp = header_path(path);
    let f = File::create(&hp).map_err(|e| IdError::io(&hp, e))?;
    serde_json::to_writer_pretty(BufWriter::new(f), header)?;
    Ok(())
}

/// Parses one JSON object per non-blank line.
pub(crate) fn read_jsonl<L: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<L>> {
    let f = File::open(path).map_err(|e| IdError::io(path, e))?;
    let mut out = Vec::new();
    for (row, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| IdError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line).map_err(|e| IdError::Data {
            row,
            message: format!("{}: {e}", path.display()),
        })?;
        out.push(v);
    }
    Ok(out)
}

pub(crate) fn write_jsonl<L: Serialize>(
    path: &Path,
    lines: impl IntoIterator<Item = L>,
) -> Result<()> {
    let f = File::create(path).map_err(|e| IdError::io(path, e))?;
    let mut w = BufWriter::new(f);
    for l in lines {
        serde_json::to_writer(&mut w, &l)?;
        w.write_all(b"\n").map_err(|e| IdError::io(path, e))?;
    }
    w.flush().map_err(|e| IdError::io(path, e))
}

fn seq_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(index as u64);
    r
}

impl TokenDataset {
    pub fn new(
        sequences: Vec<Vec<TokenId>>,
        vocab_bound: TokenId,
        special_tokens: BTreeSet<TokenId>,
    ) -> Result<Self> {
        for (row, s) in sequences.iter().enumerate() {
            if s.is_empty() {
                return Err(IdError::Data {
                    row,
                    message: "empty sequence".into(),
                });
            }
            if let Some(bad) = s.iter().find(|&&t| t >= vocab_bound) {
                return Err(IdError::Data {
                    row,
                    message: format!("token {bad} outside [0, {vocab_bound})"),
                });
            }
        }
        Ok(Self {
            sequences,
            vocab_bound,
            special_tokens,
        })
    }

    pub fn sequences(&self) -> &[Vec<TokenId>] {
        &self.sequences
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn vocab_bound(&self) -> TokenId {
        self.vocab_bound
    }

    pub fn special_tokens(&self) -> &BTreeSet<TokenId> {
        &self.special_tokens
    }

    pub fn header(&self) -> TokenHeader {
        TokenHeader {
            vocab_bound: self.vocab_bound,
            special_tokens: self.special_tokens.clone(),
        }
    }

    pub fn n_tokens(&self) -> usize {
        self.sequences.iter().map(Vec::len).sum()
    }

    fn with_sequences(&self, sequences: Vec<Vec<TokenId>>) -> Self {
        Self {
            sequences,
            vocab_bound: self.vocab_bound,
            special_tokens: self.special_tokens.clone(),
        }
    }

    /// Reads `{"ids": [...]}` lines plus the `.header.json` sidecar.
    pub fn load(path: &Path) -> Result<Self> {
        let header: TokenHeader = read_header(path)?;
        let lines: Vec<IdsLine> = read_jsonl(path)?;
        Self::new(
            lines.into_iter().map(|l| l.ids).collect(),
            header.vocab_bound,
            header.special_tokens,
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_header(path, &self.header())?;
        write_jsonl(
            path,
            self.sequences.iter().map(|s| IdsLine { ids: s.clone() }),
        )
    }

    /// Greedy split of every sequence into pieces of at most `l_m` tokens.
    pub fn chunk(&self, l_m: usize) -> Result<Self> {
        Ok(self.chunk_with_origin(l_m)?.0)
    }

    /// Like [`chunk`](Self::chunk), also returning the source sequence of
    /// every chunk.
    pub fn chunk_with_origin(&self, l_m: usize) -> Result<(Self, Vec<usize>)> {
        if l_m == 0 {
            return Err(IdError::Parameter("chunk length must be >= 1".into()));
        }
        let mut out = Vec::new();
        let mut origin = Vec::new();
        for (i, s) in self.sequences.iter().enumerate() {
            for c in s.chunks(l_m) {
                out.push(c.to_vec());
                origin.push(i);
            }
        }
        Ok((self.with_sequences(out), origin))
    }

    /// Shuffles the tokens of every sequence independently.
    pub fn permuted(&self, seed: u64) -> Self {
        let sequences = self
            .sequences
            .par_iter()
            .enumerate()
            .map(|(i, s)| {
                let mut s = s.clone();
                s.shuffle(&mut seq_rng(seed, i));
                s
            })
            .collect();
        self.with_sequences(sequences)
    }

    /// Applies one random bijection of the non-special vocabulary to every
    /// token. Returns the bijection so it can be undone.
    pub fn swapped(&self, seed: u64) -> (Self, VocabBijection) {
        let sigma = VocabBijection::random(self.vocab_bound, &self.special_tokens, seed);
        (sigma.apply(self), sigma)
    }

    /// Replaces every non-special token by a uniform draw from the
    /// non-special ids.
    pub fn random(&self, seed: u64) -> Result<Self> {
        let pool: Vec<TokenId> = (0..self.vocab_bound)
            .filter(|t| !self.special_tokens.contains(t))
            .collect();
        if pool.is_empty() {
            return Err(IdError::Parameter(
                "no non-special token ids to draw from".into(),
            ));
        }
        let sequences = self
            .sequences
            .par_iter()
            .enumerate()
            .map(|(i, s)| {
                let mut rng = seq_rng(seed, i);
                s.iter()
                    .map(|&t| {
                        if self.special_tokens.contains(&t) {
                            t
                        } else {
                            pool[rng.gen_range(0..pool.len())]
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(self.with_sequences(sequences))
    }

    /// Occurrence count per token id present.
    pub fn token_counts(&self) -> HashMap<TokenId, u64> {
        let mut counts = HashMap::new();
        for s in &self.sequences {
            for &t in s {
                *counts.entry(t).or_insert(0) += 1;
            }
        }
        counts
    }
}

/// Permutation of `[0, vocab_bound)` fixing the special tokens.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabBijection {
    forward: Vec<TokenId>,
}

impl VocabBijection {
    pub fn random(vocab_bound: TokenId, special: &BTreeSet<TokenId>, seed: u64) -> Self {
        let free: Vec<TokenId> = (0..vocab_bound).filter(|t| !special.contains(t)).collect();
        let mut image = free.clone();
        image.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut forward: Vec<TokenId> = (0..vocab_bound).collect();
        for (&from, &to) in free.iter().zip(&image) {
            forward[from as usize] = to;
        }
        Self { forward }
    }

    pub fn map(&self, t: TokenId) -> TokenId {
        self.forward[t as usize]
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.forward.len()];
        for (from, &to) in self.forward.iter().enumerate() {
            inv[to as usize] = from as TokenId;
        }
        Self { forward: inv }
    }

    pub fn apply(&self, data: &TokenDataset) -> TokenDataset {
        data.with_sequences(
            data.sequences
                .iter()
                .map(|s| s.iter().map(|&t| self.map(t)).collect())
                .collect(),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShallowDescriptors {
    pub vocab_size: usize,
    /// Shannon entropy of the token frequencies, in bits.
    pub vocab_entropy: f64,
    pub avg_seq_len: f64,
    pub n_tokens: usize,
}

/// Entropy in bits of a count vector. Counts are summed in sorted order,
/// so any relabelling of the same multiset gives a bitwise equal value.
pub fn entropy_bits(counts: &[u64]) -> f64 {
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let total = sorted.iter().sum::<u64>() as f64;
    if total == 0.0 {
        return 0.0;
    }
    let h = compensated_sum(sorted.iter().filter(|&&c| c > 0).map(|&c| {
        let f = c as f64 / total;
        -f * f.log2()
    }));
    h.clamp(0.0, (sorted.len() as f64).log2().max(0.0))
}

pub fn descriptors(data: &TokenDataset) -> Result<ShallowDescriptors> {
    if data.is_empty() {
        return Err(IdError::Empty("token dataset has no sequences".into()));
    }
    let counts: Vec<u64> = data.token_counts().into_values().collect();
    let n_tokens = data.n_tokens();
    Ok(ShallowDescriptors {
        vocab_size: counts.len(),
        vocab_entropy: entropy_bits(&counts),
        avg_seq_len: n_tokens as f64 / data.len() as f64,
        n_tokens,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(seqs: Vec<Vec<TokenId>>, bound: TokenId, special: &[TokenId]) -> TokenDataset {
        TokenDataset::new(seqs, bound, special.iter().copied().collect()).unwrap()
    }

    #[test]
    fn validation() {
        assert!(TokenDataset::new(vec![vec![]], 5, BTreeSet::new()).is_err());
        let e = TokenDataset::new(vec![vec![1], vec![5]], 5, BTreeSet::new()).unwrap_err();
        assert!(matches!(e, IdError::Data { row: 1, .. }));
    }

    #[test]
    fn chunking() {
        let d = ds(vec![vec![1, 2, 3, 4, 5], vec![6]], 10, &[]);
        let (c, origin) = d.chunk_with_origin(2).unwrap();
        let lens: Vec<usize> = c.sequences().iter().map(Vec::len).collect();
        assert_eq!(lens, vec![2, 2, 1, 1]);
        assert_eq!(origin, vec![0, 0, 0, 1]);
        assert_eq!(d.chunk(5).unwrap(), d);
        assert!(d.chunk(0).is_err());
    }

    #[test]
    fn descriptor_examples() {
        let d = descriptors(&ds(vec![vec![7, 7, 7, 7]], 10, &[])).unwrap();
        assert_eq!(
            (d.vocab_size, d.vocab_entropy, d.avg_seq_len, d.n_tokens),
            (1, 0.0, 4.0, 4)
        );
        let d = descriptors(&ds(vec![vec![1, 2], vec![2, 1]], 10, &[])).unwrap();
        assert_eq!(d.vocab_entropy, 1.0);
    }

    #[test]
    fn swapped_fixes_specials_and_inverts() {
        let d = ds(vec![vec![0, 3, 4, 0, 9], vec![2, 0]], 10, &[0]);
        let (s, sigma) = d.swapped(5);
        for (a, b) in d.sequences().iter().zip(s.sequences()) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(*x == 0, *y == 0);
            }
        }
        assert_eq!(sigma.inverse().apply(&s), d);
    }

    #[test]
    fn random_draws_from_non_special_pool() {
        let d = ds(vec![vec![0, 1, 2, 1], vec![2, 2]], 3, &[0, 2]);
        let r = d.random(1).unwrap();
        assert_eq!(r.sequences(), &[vec![0, 1, 2, 1], vec![2, 2]]);
        let none = ds(vec![vec![0]], 1, &[0]);
        assert!(matches!(none.random(1), Err(IdError::Parameter(_))));
    }

    #[test]
    fn permuted_keeps_multisets() {
        let d = ds(vec![vec![5, 1, 1, 3, 9, 9, 9], vec![4]], 10, &[]);
        let p = d.permuted(2);
        for (a, b) in d.sequences().iter().zip(p.sequences()) {
            let (mut a, mut b) = (a.clone(), b.clone());
            a.sort();
            b.sort();
            assert_eq!(a, b);
        }
        assert_eq!(p.sequences()[1], vec![4]);
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tok.jsonl");
        let d = ds(vec![vec![1, 2], vec![3]], 4, &[3]);
        d.save(&path).unwrap();
        assert!(dir.path().join("tok.header.json").exists());
        assert_eq!(TokenDataset::load(&path).unwrap(), d);
    }
}
