use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sequence over the alphabet `0..alphabet`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SymbolSeq {
    symbols: Vec<usize>,
    alphabet: usize,
}

impl SymbolSeq {
    pub fn new(symbols: Vec<usize>, alphabet: usize) -> Result<Self> {
        if let Some(&s) = symbols.iter().find(|&&s| s >= alphabet) {
            return Err(Error::invalid(format!("symbol {s} outside alphabet of size {alphabet}")));
        }
        Ok(Self { symbols, alphabet })
    }

    /// Bytes as symbols over the 256-letter alphabet.
    pub fn from_bytes(bytes: &[u8]) -> Self {
        Self {
            symbols: bytes.iter().map(|&b| b as usize).collect(),
            alphabet: 256,
        }
    }

    pub fn symbols(&self) -> &[usize] {
        &self.symbols
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

/// Levenshtein distance with unit costs, two-row dynamic program.
pub fn edit_distance(a: &SymbolSeq, b: &SymbolSeq) -> usize {
    let (a, b) = (a.symbols(), b.symbols());
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let substitute = prev[j] + usize::from(ca != cb);
            cur[j + 1] = substitute.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Longest input accepted by [`edit_distance_naive`].
pub const NAIVE_MAX_LEN: usize = 8;

/// Unmemoized recursive definition of the edit distance. Exponential, so
/// inputs are capped at [`NAIVE_MAX_LEN`] symbols.
pub fn edit_distance_naive(a: &SymbolSeq, b: &SymbolSeq) -> Result<usize> {
    if a.len() > NAIVE_MAX_LEN || b.len() > NAIVE_MAX_LEN {
        return Err(Error::invalid(format!(
            "naive edit distance supports lengths <= {NAIVE_MAX_LEN}, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(naive(a.symbols(), b.symbols()))
}

fn naive(a: &[usize], b: &[usize]) -> usize {
    match (a.split_first(), b.split_first()) {
        (None, _) => b.len(),
        (_, None) => a.len(),
        (Some((ha, ta)), Some((hb, tb))) => {
            let delete = naive(ta, b) + 1;
            let insert = naive(a, tb) + 1;
            let substitute = naive(ta, tb) + usize::from(ha != hb);
            delete.min(insert).min(substitute)
        }
    }
}

pub fn total_edit_distance<'a, I>(pairs: I) -> usize
where
    I: IntoIterator<Item = (&'a SymbolSeq, &'a SymbolSeq)>,
{
    pairs.into_iter().map(|(a, b)| edit_distance(a, b)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(text: &str) -> SymbolSeq {
        SymbolSeq::from_bytes(text.as_bytes())
    }

    #[test]
    fn known_values() {
        assert_eq!(edit_distance(&s("kitten"), &s("sitting")), 3);
        assert_eq!(edit_distance_naive(&s("kitten"), &s("sitting")).unwrap(), 3);
        assert_eq!(edit_distance_naive(&s("ab"), &s("ba")).unwrap(), 2);
        assert_eq!(edit_distance(&s("ab"), &s("ba")), 2);
        assert_eq!(edit_distance(&s("a"), &s("b")), 1);
        assert_eq!(edit_distance(&s(""), &s("abc")), 3);
        assert_eq!(edit_distance(&s("abc"), &s("")), 3);
        assert_eq!(edit_distance(&s("same"), &s("same")), 0);
    }

    #[test]
    fn naive_rejects_long_inputs() {
        assert!(edit_distance_naive(&s("abcdefghi"), &s("a")).is_err());
    }

    #[test]
    fn alphabet_enforced() {
        assert!(SymbolSeq::new(vec![0, 3], 3).is_err());
        assert!(SymbolSeq::new(vec![0, 2], 3).is_ok());
    }

    #[test]
    fn totals() {
        let empty: Vec<(&SymbolSeq, &SymbolSeq)> = vec![];
        assert_eq!(total_edit_distance(empty), 0);
        let (a, b, c, d) = (s("kitten"), s("sitting"), s("ab"), s("ba"));
        assert_eq!(total_edit_distance([(&a, &a), (&b, &b)]), 0);
        assert_eq!(total_edit_distance([(&a, &b), (&c, &d)]), 5);
    }

    fn seq(max_len: usize, alphabet: usize) -> impl Strategy<Value = SymbolSeq> {
        prop::collection::vec(0..alphabet, 0..=max_len)
            .prop_map(move |v| SymbolSeq::new(v, alphabet).unwrap())
    }

    proptest! {
        #[test]
        fn dp_matches_recursion(a in seq(6, 4), b in seq(6, 4)) {
            prop_assert_eq!(edit_distance(&a, &b), edit_distance_naive(&a, &b).unwrap());
        }

        #[test]
        fn metric_axioms(a in seq(10, 4), b in seq(10, 4), c in seq(10, 4)) {
            let ab = edit_distance(&a, &b);
            prop_assert_eq!(ab, edit_distance(&b, &a));
            prop_assert_eq!(ab == 0, a == b);
            prop_assert!(edit_distance(&a, &c) <= ab + edit_distance(&b, &c));
        }
    }
}
