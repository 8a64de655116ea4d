mod common;

use std::collections::{BTreeSet, HashMap};

use idlab::textstats::{
    dataset_ppl, descriptors, NllHeader, NllRecord, TokenDataset, VocabBijection,
};
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn dataset() -> impl Strategy<Value = TokenDataset> {
    (3u32..300)
        .prop_flat_map(|vocab| {
            (
                Just(vocab),
                prop::collection::btree_set(0..vocab, 0..3),
                prop::collection::vec(prop::collection::vec(0..vocab, 1..40), 1..20),
            )
        })
        .prop_map(|(vocab, special, seqs)| TokenDataset::new(seqs, vocab, special).unwrap())
}

fn sorted(s: &[u32]) -> Vec<u32> {
    let mut v = s.to_vec();
    v.sort_unstable();
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn chunks_concatenate_back_to_inputs(data in dataset(), l_m in 1usize..50) {
        let (chunks, origin) = data.chunk_with_origin(l_m).unwrap();
        prop_assert_eq!(chunks.len(), origin.len());
        let mut rebuilt: Vec<Vec<u32>> = vec![Vec::new(); data.len()];
        for (c, &o) in chunks.sequences().iter().zip(&origin) {
            prop_assert!(!c.is_empty() && c.len() <= l_m);
            rebuilt[o].extend_from_slice(c);
        }
        prop_assert_eq!(rebuilt.as_slice(), data.sequences());
        prop_assert_eq!(chunks.header(), data.header());
    }

    #[test]
    fn chunking_long_enough_is_identity(data in dataset()) {
        let longest = data.sequences().iter().map(Vec::len).max().unwrap();
        prop_assert_eq!(data.chunk(longest).unwrap(), data);
    }

    #[test]
    fn permuted_rearranges_each_sequence(data in dataset(), seed in any::<u64>()) {
        let p = data.permuted(seed);
        for (a, b) in data.sequences().iter().zip(p.sequences()) {
            prop_assert_eq!(sorted(a), sorted(b));
            if a.len() == 1 {
                prop_assert_eq!(a, b);
            }
        }
        prop_assert_eq!(p, data.permuted(seed));
    }

    #[test]
    fn swapped_inverts_and_fixes_specials(data in dataset(), seed in any::<u64>()) {
        let (s, sigma) = data.swapped(seed);
        prop_assert_eq!(sigma.inverse().apply(&s), data.clone());
        for (a, b) in data.sequences().iter().zip(s.sequences()) {
            for (x, y) in a.iter().zip(b) {
                prop_assert_eq!(data.special_tokens().contains(x), data.special_tokens().contains(y));
                if data.special_tokens().contains(x) {
                    prop_assert_eq!(x, y);
                }
            }
        }
        // a bijection serializes and comes back unchanged
        let json = serde_json::to_string(&sigma).unwrap();
        prop_assert_eq!(serde_json::from_str::<VocabBijection>(&json).unwrap(), sigma);
    }

    #[test]
    fn random_keeps_specials_and_lengths(data in dataset(), seed in any::<u64>()) {
        prop_assume!(data.special_tokens().len() < data.vocab_bound() as usize);
        let r = data.random(seed).unwrap();
        for (a, b) in data.sequences().iter().zip(r.sequences()) {
            prop_assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(b) {
                prop_assert_eq!(data.special_tokens().contains(x), data.special_tokens().contains(y));
                if data.special_tokens().contains(x) {
                    prop_assert_eq!(x, y);
                }
            }
        }
    }

    #[test]
    fn jsonl_round_trip(data in dataset()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        data.save(&path).unwrap();
        prop_assert_eq!(TokenDataset::load(&path).unwrap(), data);
    }
}

#[test]
fn random_draws_are_uniform_over_the_pool() {
    let special: BTreeSet<u32> = [0, 1, 999].into_iter().collect();
    let seqs = vec![vec![5u32; 1000]; 1000];
    let data = TokenDataset::new(seqs, 1000, special.clone()).unwrap();
    let r = data.random(42).unwrap();
    let counts = r.token_counts();
    assert!(counts.keys().all(|t| !special.contains(t)));
    let pool = 1000 - special.len();
    let expected = 1e6 / pool as f64;
    let chi2: f64 = (0..1000u32)
        .filter(|t| !special.contains(t))
        .map(|t| {
            let o = *counts.get(&t).unwrap_or(&0) as f64;
            (o - expected).powi(2) / expected
        })
        .sum();
    let critical = ChiSquared::new((pool - 1) as f64)
        .unwrap()
        .inverse_cdf(0.999);
    assert!(chi2 < critical, "chi2 {chi2} >= {critical}");
}

#[test]
fn singleton_pool_absorbs_every_regular_token() {
    let special: BTreeSet<u32> = [0, 2].into_iter().collect();
    let data = TokenDataset::new(vec![vec![0, 1, 2, 1], vec![2, 2]], 3, special).unwrap();
    let r = data.random(3).unwrap();
    assert_eq!(r.sequences(), &[vec![0, 1, 2, 1], vec![2, 2]]);
}

#[test]
fn shallow_descriptors_of_hand_examples() {
    let d = descriptors(&TokenDataset::new(vec![vec![7, 7, 7, 7]], 10, BTreeSet::new()).unwrap())
        .unwrap();
    assert_eq!(
        (d.vocab_size, d.vocab_entropy, d.avg_seq_len, d.n_tokens),
        (1, 0.0, 4.0, 4)
    );
    let d = descriptors(
        &TokenDataset::new(vec![vec![1, 2], vec![2, 1, 1, 2]], 10, BTreeSet::new()).unwrap(),
    )
    .unwrap();
    assert_eq!(
        (d.vocab_size, d.vocab_entropy, d.avg_seq_len),
        (2, 1.0, 3.0)
    );
}

#[test]
fn nll_streams_line_up_with_chunked_tokens() {
    let data = TokenDataset::new(vec![(0..9).collect(), vec![4, 4]], 16, BTreeSet::new()).unwrap();
    let chunks = data.chunk(4).unwrap();
    let lens: Vec<usize> = chunks.sequences().iter().map(Vec::len).collect();
    assert_eq!(lens, vec![4, 4, 1, 2]);
    // skip-first convention: one fewer score than tokens; the 1-token chunk has none
    let seqs: Vec<Vec<f64>> = lens
        .iter()
        .map(|&l| vec![std::f64::consts::LN_2; l - 1])
        .collect();
    let rec = NllRecord::new(NllHeader::default(), seqs).unwrap();
    rec.check_alignment(&chunks).unwrap();
    let ppl = dataset_ppl(&rec).unwrap();
    assert_eq!(
        (ppl.n_sequences, ppl.sequences_skipped, ppl.n_scored_tokens),
        (3, 1, 7)
    );
    assert_eq!((ppl.avg_ppl, ppl.coding_length_bits), (2.0, 7.0));
    assert!(rec.check_alignment(&data).is_err());
}

#[test]
fn token_counts_sum_to_token_total() {
    let mut r = common::rng(1);
    use rand::Rng;
    let seqs: Vec<Vec<u32>> = (0..50)
        .map(|_| {
            (0..r.gen_range(1..30))
                .map(|_| r.gen_range(0..20))
                .collect()
        })
        .collect();
    let data = TokenDataset::new(seqs, 20, BTreeSet::new()).unwrap();
    let counts: HashMap<u32, u64> = data.token_counts();
    assert_eq!(counts.values().sum::<u64>() as usize, data.n_tokens());
}
