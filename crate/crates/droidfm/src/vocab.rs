//! Vocabulary: the bijection between feature tokens and indices `0..n-1`.
//!
//! Tokens are ordered lexicographically by canonical rendering, so a
//! vocabulary built from the same token sets is identical no matter how the
//! sets were ordered or which thread produced them. Vocabulary files hold
//! one canonical token per line; the 0-based line number is the index.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::dataset::SparseVector;
use crate::error::{Error, Result};
use crate::token::{FeatureCategory, FeatureToken};

#[derive(Clone, Debug)]
pub struct Vocabulary {
    tokens: Vec<FeatureToken>,
    index: HashMap<FeatureToken, usize>,
}

/// Union of all token sets, lexicographically ordered. Errors with
/// "empty feature space" when the union is empty.
pub fn build_vocabulary<'a, I>(token_sets: I) -> Result<Vocabulary>
where
    I: IntoIterator<Item = &'a BTreeSet<FeatureToken>>,
{
    let mut union = BTreeSet::new();
    for set in token_sets {
        union.extend(set.iter().cloned());
    }
    Vocabulary::from_tokens(union)
}

impl Vocabulary {
    pub fn from_tokens(tokens: BTreeSet<FeatureToken>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::EmptyFeatureSpace);
        }
        let tokens: Vec<FeatureToken> = tokens.into_iter().collect();
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, token: &FeatureToken) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Option<&FeatureToken> {
        self.tokens.get(index)
    }

    pub fn tokens(&self) -> &[FeatureToken] {
        &self.tokens
    }

    /// Category of every index, in index order. This is what partial
    /// interaction masks are built from.
    pub fn categories(&self) -> Vec<FeatureCategory> {
        self.tokens.iter().map(|t| t.category()).collect()
    }

    /// One-hot encodes a token set. Tokens absent from the vocabulary are
    /// dropped; the second value counts them.
    pub fn encode(&self, tokens: &BTreeSet<FeatureToken>) -> (SparseVector, usize) {
        let mut indices = Vec::with_capacity(tokens.len());
        let mut dropped = 0;
        for token in tokens {
            match self.index_of(token) {
                Some(i) => indices.push(i),
                None => dropped += 1,
            }
        }
        // Token order is rendering order, which is exactly index order.
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        let vector = SparseVector::new(indices, self.len()).expect("sorted in-range indices");
        (vector, dropped)
    }

    /// Tokens at the active indices of `x`; inverse of [`encode`] on the
    /// kept tokens.
    ///
    /// [`encode`]: Vocabulary::encode
    pub fn decode(&self, x: &SparseVector) -> Result<BTreeSet<FeatureToken>> {
        if x.dim() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: x.dim(),
            });
        }
        Ok(x.indices().iter().map(|&i| self.tokens[i].clone()).collect())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = BufWriter::new(File::create(path).map_err(Error::io(path))?);
        (|| -> std::io::Result<()> {
            for token in &self.tokens {
                writeln!(out, "{token}")?;
            }
            out.flush()
        })()
        .map_err(Error::io(path))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let reader = BufReader::new(File::open(path).map_err(Error::io(path))?);
        let mut tokens = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.map_err(Error::io(path))?;
            if line.trim().is_empty() {
                continue;
            }
            let token = FeatureToken::parse(line.trim()).map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: lineno,
                msg: e.to_string(),
            })?;
            if let Some(prev) = tokens.last() {
                if *prev >= token {
                    return Err(Error::Parse {
                        path: path.display().to_string(),
                        line: lineno,
                        msg: "vocabulary not in sorted order".into(),
                    });
                }
            }
            tokens.push(token);
        }
        if tokens.is_empty() {
            return Err(Error::EmptyFeatureSpace);
        }
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Ok(Vocabulary { tokens, index })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::token::FeatureCategory::{Hardware, Permission};
    use proptest::prelude::*;
    use tempfile::tempdir;

    fn perm(v: &str) -> FeatureToken {
        FeatureToken::new(Permission, v).unwrap()
    }

    fn set(tokens: &[FeatureToken]) -> BTreeSet<FeatureToken> {
        tokens.iter().cloned().collect()
    }

    #[test]
    fn union_and_sort() {
        let sets = [
            set(&[perm("a")]),
            set(&[perm("b")]),
            set(&[perm("a"), perm("c")]),
        ];
        let vocab = build_vocabulary(sets.iter()).unwrap();
        assert_eq!(vocab.len(), 3);
        assert_eq!(vocab.token(0).unwrap().value(), "a");
        assert_eq!(vocab.token(2).unwrap().value(), "c");
    }

    #[test]
    fn fig3_two_apps_give_five_permissions() {
        // App A and app B request three permissions each, five distinct.
        let a = set(&[perm("SEND_MSG"), perm("BIND_ADMIN"), perm("BLUETOOTH")]);
        let b = set(&[perm("SEND_MSG"), perm("CHANGE_WIFI_STATE"), perm("GPS")]);
        let vocab = build_vocabulary([&a, &b]).unwrap();
        assert_eq!(vocab.len(), 5);

        // Encoding app A activates exactly its three permissions.
        let (xa, dropped) = vocab.encode(&a);
        assert_eq!(dropped, 0);
        assert_eq!(xa.active_count(), 3);
        let mut dense = vec![0u8; vocab.len()];
        for &i in xa.indices() {
            dense[i] = 1;
        }
        // Under this vocabulary's ordering: BIND_ADMIN, BLUETOOTH,
        // CHANGE_WIFI_STATE, GPS, SEND_MSG.
        assert_eq!(dense, vec![1, 1, 0, 0, 1]);
    }

    #[test]
    fn same_value_in_two_categories_is_two_entries() {
        let tokens = set(&[perm("X"), FeatureToken::new(Hardware, "X").unwrap()]);
        let vocab = build_vocabulary([&tokens]).unwrap();
        assert_eq!(vocab.len(), 2);
    }

    #[test]
    fn empty_union_is_an_error() {
        let empty = BTreeSet::new();
        assert!(matches!(
            build_vocabulary([&empty]),
            Err(Error::EmptyFeatureSpace)
        ));
    }

    #[test]
    fn unknown_tokens_are_dropped_and_counted() {
        let vocab = build_vocabulary([&set(&[perm("a"), perm("b"), perm("c")])]).unwrap();
        let (x, dropped) = vocab.encode(&set(&[perm("a"), perm("z")]));
        assert_eq!(x.indices(), &[0]);
        assert_eq!(dropped, 1);
    }

    #[test]
    fn encode_empty_set_is_all_zero() {
        let vocab = build_vocabulary([&set(&[perm("a")])]).unwrap();
        let (x, dropped) = vocab.encode(&BTreeSet::new());
        assert_eq!(x.active_count(), 0);
        assert_eq!(dropped, 0);
    }

    #[test]
    fn file_round_trip_and_sorted_validation() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let vocab = build_vocabulary([&set(&[perm("a"), perm("b")])]).unwrap();
        vocab.write(&path).unwrap();
        let back = Vocabulary::read(&path).unwrap();
        assert_eq!(back.tokens(), vocab.tokens());

        std::fs::write(&path, "perm::b\nperm::a\n").unwrap();
        assert!(Vocabulary::read(&path).is_err());
    }

    fn arb_token() -> impl Strategy<Value = FeatureToken> {
        (0usize..7, "[a-d]{1,3}").prop_map(|(c, v)| {
            FeatureToken::new(FeatureCategory::ALL[c], v).unwrap()
        })
    }

    proptest! {
        #[test]
        fn build_is_permutation_invariant(
            sets in prop::collection::vec(
                prop::collection::btree_set(arb_token(), 0..8), 1..6),
            seed in any::<u64>(),
        ) {
            prop_assume!(sets.iter().any(|s| !s.is_empty()));
            let forward = build_vocabulary(sets.iter()).unwrap();
            let mut shuffled: Vec<_> = sets.clone();
            // Deterministic permutation derived from the seed.
            let n = shuffled.len();
            for i in (1..n).rev() {
                let j = (seed as usize).wrapping_mul(i + 1) % (i + 1);
                shuffled.swap(i, j);
            }
            let backward = build_vocabulary(shuffled.iter()).unwrap();
            prop_assert_eq!(forward.tokens(), backward.tokens());
        }

        #[test]
        fn decode_encode_recovers_intersection(
            vocab_tokens in prop::collection::btree_set(arb_token(), 1..20),
            sample in prop::collection::btree_set(arb_token(), 0..20),
        ) {
            let vocab = Vocabulary::from_tokens(vocab_tokens.clone()).unwrap();
            let (x, dropped) = vocab.encode(&sample);
            let decoded = vocab.decode(&x).unwrap();
            let expected: BTreeSet<_> =
                sample.intersection(&vocab_tokens).cloned().collect();
            prop_assert_eq!(&decoded, &expected);
            prop_assert_eq!(dropped, sample.len() - expected.len());
        }
    }
}
