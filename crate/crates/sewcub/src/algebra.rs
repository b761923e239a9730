//! Truncated tensor algebra over words in the letters `{0,…,d}`.
//!
//! Words are graded by `degree = length + number-of-zero-letters`, so the
//! time letter 0 counts twice: a time increment scales like the square of a
//! driver increment. Tensors store a dense coefficient vector indexed by the
//! canonical word enumeration (graded, ties broken lexicographically with
//! `0 < 1 < … < d`), which makes products cache-friendly and output files
//! bit-reproducible.

use once_cell::sync::Lazy;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AlgebraError {
    #[error("tensor shape mismatch: left has (d={left_d}, m={left_m}), right has (d={right_d}, m={right_m})")]
    ShapeMismatch {
        left_d: usize,
        left_m: usize,
        right_d: usize,
        right_m: usize,
    },
    #[error("cannot project to order {requested}: tensor is truncated at order {available}")]
    ProjectionOrder { requested: usize, available: usize },
}

/// A word over the letters `{0,…,d}`; the empty word is allowed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MultiIndex(pub Vec<u8>);

impl MultiIndex {
    pub fn empty() -> Self {
        MultiIndex(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `‖α‖ = |α| + #{i : α_i = 0}`.
    pub fn degree(&self) -> usize {
        self.0.len() + self.0.iter().filter(|&&l| l == 0).count()
    }

    pub fn letters(&self) -> &[u8] {
        &self.0
    }

    pub fn concat(&self, other: &MultiIndex) -> MultiIndex {
        let mut letters = self.0.clone();
        letters.extend_from_slice(&other.0);
        MultiIndex(letters)
    }

    pub fn count_nonzero(&self) -> usize {
        self.0.iter().filter(|&&l| l != 0).count()
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, l) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{l}")?;
        }
        write!(f, ")")
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for MultiIndex {
    /// Canonical order: graded by degree, ties lexicographic.
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.degree(), &self.0).cmp(&(other.degree(), &other.0))
    }
}

/// Enumeration of all words with degree `≤ m` for a fixed alphabet, with the
/// concatenation table used by the truncated product. Built once per `(d, m)`
/// and shared.
#[derive(Debug)]
pub struct WordBasis {
    d: usize,
    m: usize,
    words: Vec<MultiIndex>,
    index: HashMap<MultiIndex, usize>,
    /// (left word, right word, output word) index triples of every splitting
    /// of every word in the basis.
    product_triples: Vec<(u32, u32, u32)>,
}

type BasisCache = Mutex<HashMap<(usize, usize), Arc<WordBasis>>>;

static BASIS_CACHE: Lazy<BasisCache> = Lazy::new(|| Mutex::new(HashMap::new()));

impl WordBasis {
    /// Fetch (or build) the shared basis for dimension `d` and order `m`.
    pub fn get(d: usize, m: usize) -> Arc<WordBasis> {
        assert!(d >= 1, "driver dimension must be at least 1");
        assert!(d <= 8 && m <= 10, "basis limited to d <= 8, m <= 10");
        let mut cache = BASIS_CACHE.lock().unwrap();
        cache
            .entry((d, m))
            .or_insert_with(|| Arc::new(WordBasis::build(d, m)))
            .clone()
    }

    fn build(d: usize, m: usize) -> WordBasis {
        let mut words = Vec::new();
        let mut stack = vec![MultiIndex::empty()];
        while let Some(w) = stack.pop() {
            for letter in 0..=d as u8 {
                let mut next = w.0.clone();
                next.push(letter);
                let cand = MultiIndex(next);
                if cand.degree() <= m {
                    stack.push(cand);
                }
            }
            words.push(w);
        }
        words.sort();

        let index: HashMap<MultiIndex, usize> =
            words.iter().cloned().enumerate().map(|(i, w)| (w, i)).collect();

        let mut product_triples = Vec::new();
        for (k, w) in words.iter().enumerate() {
            for split in 0..=w.len() {
                let left = MultiIndex(w.0[..split].to_vec());
                let right = MultiIndex(w.0[split..].to_vec());
                product_triples.push((index[&left] as u32, index[&right] as u32, k as u32));
            }
        }

        WordBasis {
            d,
            m,
            words,
            index,
            product_triples,
        }
    }

    pub fn dimension(&self) -> usize {
        self.d
    }

    pub fn order(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn words(&self) -> &[MultiIndex] {
        &self.words
    }

    pub fn index_of(&self, word: &MultiIndex) -> Option<usize> {
        self.index.get(word).copied()
    }
}

/// All words over `{0,…,d}` with degree `≤ m`, in canonical order.
pub fn enumerate_words(d: usize, m: usize) -> Vec<MultiIndex> {
    WordBasis::get(d, m).words().to_vec()
}

/// Coefficients of a truncated signature-like series.
#[derive(Clone)]
pub struct TruncatedTensor {
    basis: Arc<WordBasis>,
    coeffs: Vec<f64>,
}

impl fmt::Debug for TruncatedTensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TruncatedTensor")
            .field("d", &self.basis.d)
            .field("m", &self.basis.m)
            .field("coeffs", &self.coeffs)
            .finish()
    }
}

impl PartialEq for TruncatedTensor {
    fn eq(&self, other: &Self) -> bool {
        self.basis.d == other.basis.d && self.basis.m == other.basis.m && self.coeffs == other.coeffs
    }
}

impl TruncatedTensor {
    pub fn zeros(d: usize, m: usize) -> Self {
        let basis = WordBasis::get(d, m);
        let coeffs = vec![0.0; basis.len()];
        TruncatedTensor { basis, coeffs }
    }

    /// The multiplicative unit: coefficient 1 at the empty word.
    pub fn unit(d: usize, m: usize) -> Self {
        let mut t = Self::zeros(d, m);
        t.coeffs[0] = 1.0;
        t
    }

    pub fn from_coeffs(d: usize, m: usize, coeffs: Vec<f64>) -> Self {
        let basis = WordBasis::get(d, m);
        assert_eq!(coeffs.len(), basis.len(), "coefficient vector length mismatch");
        TruncatedTensor { basis, coeffs }
    }

    pub fn dimension(&self) -> usize {
        self.basis.d
    }

    pub fn order(&self) -> usize {
        self.basis.m
    }

    pub fn basis(&self) -> &Arc<WordBasis> {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    /// Coefficient at a word; `None` if the word is outside the truncation.
    pub fn get(&self, word: &MultiIndex) -> Option<f64> {
        self.basis.index_of(word).map(|i| self.coeffs[i])
    }

    pub fn set(&mut self, word: &MultiIndex, value: f64) {
        let i = self
            .basis
            .index_of(word)
            .expect("word outside the truncation order");
        self.coeffs[i] = value;
    }

    fn check_shape(&self, other: &Self) -> Result<(), AlgebraError> {
        if self.basis.d != other.basis.d || self.basis.m != other.basis.m {
            return Err(AlgebraError::ShapeMismatch {
                left_d: self.basis.d,
                left_m: self.basis.m,
                right_d: other.basis.d,
                right_m: other.basis.m,
            });
        }
        Ok(())
    }

    /// Truncated concatenation product: the coefficient of `γ` in the result
    /// is the sum of `self[α]·other[β]` over all splittings `γ = α∗β`; words
    /// of degree `> m` are dropped.
    pub fn concat_product(&self, other: &Self) -> Result<Self, AlgebraError> {
        self.check_shape(other)?;
        let mut out = vec![0.0; self.coeffs.len()];
        for &(l, r, k) in &self.basis.product_triples {
            out[k as usize] += self.coeffs[l as usize] * other.coeffs[r as usize];
        }
        Ok(TruncatedTensor {
            basis: self.basis.clone(),
            coeffs: out,
        })
    }

    /// Drop all coefficients of degree `> m2`.
    pub fn project(&self, m2: usize) -> Result<Self, AlgebraError> {
        if m2 > self.basis.m {
            return Err(AlgebraError::ProjectionOrder {
                requested: m2,
                available: self.basis.m,
            });
        }
        let mut out = TruncatedTensor::zeros(self.basis.d, m2);
        for (w, &c) in self.basis.words.iter().zip(&self.coeffs) {
            if w.degree() <= m2 {
                out.set(w, c);
            }
        }
        Ok(out)
    }

    /// Maximum absolute coefficient difference over all words.
    pub fn distance(&self, other: &Self) -> Result<f64, AlgebraError> {
        self.check_shape(other)?;
        Ok(self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// `self += a * x`; plumbing for weighted averages of signatures.
    pub fn axpy(&mut self, a: f64, x: &Self) {
        assert_eq!(self.basis.d, x.basis.d);
        assert_eq!(self.basis.m, x.basis.m);
        for (c, &v) in self.coeffs.iter_mut().zip(&x.coeffs) {
            *c += a * v;
        }
    }

    pub fn scale(&mut self, a: f64) {
        for c in &mut self.coeffs {
            *c *= a;
        }
    }

    /// Largest absolute coefficient.
    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.abs()).fold(0.0, f64::max)
    }
}

#[derive(Serialize, Deserialize)]
struct CoeffEntry {
    word: Vec<u8>,
    value: f64,
}

#[derive(Serialize, Deserialize)]
struct TensorRepr {
    d: usize,
    m: usize,
    coeffs: Vec<CoeffEntry>,
}

impl Serialize for TruncatedTensor {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let repr = TensorRepr {
            d: self.basis.d,
            m: self.basis.m,
            coeffs: self
                .basis
                .words
                .iter()
                .zip(&self.coeffs)
                .map(|(w, &value)| CoeffEntry {
                    word: w.0.clone(),
                    value,
                })
                .collect(),
        };
        repr.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for TruncatedTensor {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = TensorRepr::deserialize(deserializer)?;
        let basis = WordBasis::get(repr.d, repr.m);
        if repr.coeffs.len() != basis.len() {
            return Err(D::Error::custom(format!(
                "expected {} coefficients for (d={}, m={}), got {}",
                basis.len(),
                repr.d,
                repr.m,
                repr.coeffs.len()
            )));
        }
        let mut coeffs = vec![f64::NAN; basis.len()];
        for entry in repr.coeffs {
            let word = MultiIndex(entry.word);
            let idx = basis
                .index_of(&word)
                .ok_or_else(|| D::Error::custom(format!("word {word} outside the truncation")))?;
            if !coeffs[idx].is_nan() {
                return Err(D::Error::custom(format!("duplicate word {word}")));
            }
            coeffs[idx] = entry.value;
        }
        Ok(TruncatedTensor { basis, coeffs })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force enumeration independent of the DFS in `WordBasis::build`:
    /// generate every tuple up to the maximal possible length and filter.
    fn brute_force_words(d: usize, m: usize) -> Vec<MultiIndex> {
        let mut all = vec![MultiIndex::empty()];
        let mut layer = vec![Vec::new()];
        for _ in 0..m {
            let mut next_layer = Vec::new();
            for w in &layer {
                for l in 0..=d as u8 {
                    let mut n = w.clone();
                    n.push(l);
                    next_layer.push(n);
                }
            }
            for w in &next_layer {
                let mi = MultiIndex(w.clone());
                if mi.degree() <= m && !all.contains(&mi) {
                    all.push(mi);
                }
            }
            layer = next_layer;
        }
        all.sort();
        all
    }

    #[test]
    fn degree_examples() {
        assert_eq!(MultiIndex::empty().degree(), 0);
        assert_eq!(MultiIndex(vec![0, 1]).degree(), 3);
        assert_eq!(MultiIndex(vec![1, 0, 1]).degree(), 4);
    }

    #[test]
    fn enumerate_words_d1_small_orders() {
        assert_eq!(enumerate_words(1, 0), vec![MultiIndex::empty()]);
        let w2 = enumerate_words(1, 2);
        assert_eq!(
            w2,
            vec![
                MultiIndex::empty(),
                MultiIndex(vec![1]),
                MultiIndex(vec![0]),
                MultiIndex(vec![1, 1]),
            ]
        );
    }

    #[test]
    fn enumerate_words_d1_m5_counts() {
        let words = enumerate_words(1, 5);
        assert_eq!(words.len(), 20);
        let mut by_degree = [0usize; 6];
        for w in &words {
            by_degree[w.degree()] += 1;
        }
        assert_eq!(by_degree, [1, 1, 2, 3, 5, 8]);
        assert_eq!(words, brute_force_words(1, 5));
    }

    #[test]
    fn enumerate_words_matches_brute_force_d2() {
        assert_eq!(enumerate_words(2, 4), brute_force_words(2, 4));
    }

    #[test]
    fn canonical_order_is_strictly_increasing_and_stable() {
        let words = enumerate_words(2, 5);
        for pair in words.windows(2) {
            assert!(pair[0] < pair[1]);
        }
        assert_eq!(words, enumerate_words(2, 5));
    }

    #[test]
    fn unit_laws() {
        let unit = TruncatedTensor::unit(1, 3);
        let mut x = TruncatedTensor::zeros(1, 3);
        for (i, c) in x.coeffs_mut().iter_mut().enumerate() {
            *c = (i as f64) * 0.37 - 1.0;
        }
        assert_eq!(unit.concat_product(&x).unwrap(), x);
        assert_eq!(x.concat_product(&unit).unwrap(), x);
    }

    #[test]
    fn basis_tensor_product() {
        // e_(1) ⊗ e_(1) = e_(1,1) for d = 1, m = 2
        let mut x = TruncatedTensor::zeros(1, 2);
        x.set(&MultiIndex(vec![1]), 1.0);
        let p = x.concat_product(&x).unwrap();
        assert_eq!(p.get(&MultiIndex(vec![1, 1])), Some(1.0));
        assert_eq!(p.get(&MultiIndex(vec![1])), Some(0.0));
        assert_eq!(p.get(&MultiIndex::empty()), Some(0.0));
        assert_eq!(p.get(&MultiIndex(vec![0])), Some(0.0));
    }

    fn random_tensor(d: usize, m: usize, seed: u64) -> TruncatedTensor {
        let mut t = TruncatedTensor::zeros(d, m);
        for (i, c) in t.coeffs_mut().iter_mut().enumerate() {
            *c = 2.0 * crate::numerics::counter_uniform(seed, i as u64, 0) - 1.0;
        }
        t
    }

    #[test]
    fn associativity_200_random_cases() {
        for case in 0..200u64 {
            let (d, m) = ([1, 2][(case % 2) as usize], 4);
            let x = random_tensor(d, m, 3 * case);
            let y = random_tensor(d, m, 3 * case + 1);
            let z = random_tensor(d, m, 3 * case + 2);
            let left = x.concat_product(&y).unwrap().concat_product(&z).unwrap();
            let right = x.concat_product(&y.concat_product(&z).unwrap()).unwrap();
            assert!(
                left.distance(&right).unwrap() <= 1e-12,
                "associativity failed at case {case}"
            );
        }
    }

    #[test]
    fn grading_never_leaks_past_truncation() {
        // fill everything with ones; the product of top-degree words must be dropped
        let mut x = TruncatedTensor::zeros(1, 3);
        for c in x.coeffs_mut() {
            *c = 1.0;
        }
        let p = x.concat_product(&x).unwrap();
        // all result words still have degree <= 3 by construction of the basis
        for w in p.basis().words() {
            assert!(w.degree() <= 3);
        }
        // coefficient at the longest word (1,1,1) only collects the three
        // splittings with total degree <= 3: 1*? -- enumerate by hand
        // (1,1,1) = ()*(1,1,1) + (1)*(1,1) + (1,1)*(1) + (1,1,1)*()
        assert_eq!(p.get(&MultiIndex(vec![1, 1, 1])), Some(4.0));
    }

    #[test]
    fn projection_examples() {
        let x = random_tensor(1, 4, 99);
        assert_eq!(x.project(4).unwrap(), x);
        let p0 = x.project(0).unwrap();
        assert_eq!(p0.coeffs().len(), 1);
        assert_eq!(p0.coeffs()[0], x.coeffs()[0]);
        assert!(matches!(
            x.project(5),
            Err(AlgebraError::ProjectionOrder { requested: 5, available: 4 })
        ));
    }

    #[test]
    fn distance_examples() {
        let x = random_tensor(1, 3, 5);
        assert_eq!(x.distance(&x).unwrap(), 0.0);
        let unit = TruncatedTensor::unit(1, 3);
        let zero = TruncatedTensor::zeros(1, 3);
        assert_eq!(unit.distance(&zero).unwrap(), 1.0);
        let y = random_tensor(2, 3, 5);
        assert!(x.distance(&y).is_err());
    }

    #[test]
    fn serde_round_trip_canonical_order() {
        let x = random_tensor(1, 3, 11);
        let json = serde_json::to_string(&x).unwrap();
        // canonical order: empty word first, then (1), then (0)
        assert!(json.starts_with(r#"{"d":1,"m":3,"coeffs":[{"word":[],"value":"#));
        let y: TruncatedTensor = serde_json::from_str(&json).unwrap();
        assert_eq!(x, y);
    }
}
