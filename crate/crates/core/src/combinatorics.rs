//! Feature combinations in canonical order.
//!
//! The canonical order lists every non-empty subset of `0..feature_count`
//! size-ascending, and lexicographically by index tuple within one size:
//!
//! ```text
//! F = 3:  {0} {1} {2} {0,1} {0,2} {1,2} {0,1,2}
//! rank:    0   1   2    3     4     5      6
//! ```
//!
//! Ranks are arbitrary-precision because `2^F - 1` quickly leaves the range of
//! machine integers for wide tables. [`enumerate_prefix`] never touches big
//! integers; it walks the order with a successor function.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Strictly increasing, non-empty list of feature indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FeatureCombination(Vec<usize>);

impl FeatureCombination {
    pub fn new(indices: Vec<usize>, feature_count: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::invalid("feature combination must be non-empty"));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(format!(
                "feature combination {indices:?} is not strictly increasing"
            )));
        }
        if let Some(&last) = indices.last() {
            if last >= feature_count {
                return Err(Error::invalid(format!(
                    "feature index {last} out of range for {feature_count} features"
                )));
            }
        }
        Ok(Self(indices))
    }

    #[inline]
    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.0.binary_search(&index).is_ok()
    }
}

/// Number of non-empty subsets of `feature_count` features, `2^F - 1`.
pub fn total_combinations(feature_count: usize) -> Result<BigUint> {
    if feature_count == 0 {
        return Err(Error::NoFeatures);
    }
    Ok((BigUint::one() << feature_count) - BigUint::one())
}

/// `total_combinations` as a `usize` when it fits.
pub fn total_combinations_usize(feature_count: usize) -> Result<Option<usize>> {
    Ok(total_combinations(feature_count)?.to_usize())
}

/// Pascal's triangle up to row `n`.
struct Binomials {
    rows: Vec<Vec<BigUint>>,
}

impl Binomials {
    fn new(n: usize) -> Self {
        let mut rows: Vec<Vec<BigUint>> = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let mut row = vec![BigUint::zero(); i + 1];
            row[0] = BigUint::one();
            row[i] = BigUint::one();
            for k in 1..i {
                row[k] = &rows[i - 1][k - 1] + &rows[i - 1][k];
            }
            rows.push(row);
        }
        Self { rows }
    }

    fn choose(&self, n: usize, k: usize) -> BigUint {
        if k > n {
            BigUint::zero()
        } else {
            self.rows[n][k].clone()
        }
    }
}

/// Position of `combination` in the canonical order.
pub fn rank(feature_count: usize, combination: &FeatureCombination) -> Result<BigUint> {
    if feature_count == 0 {
        return Err(Error::NoFeatures);
    }
    let idx = combination.indices();
    if idx.last().is_some_and(|&i| i >= feature_count) {
        return Err(Error::invalid(format!(
            "combination {idx:?} out of range for {feature_count} features"
        )));
    }
    let binom = Binomials::new(feature_count);
    let size = idx.len();
    let mut r = BigUint::zero();
    for k in 1..size {
        r += binom.choose(feature_count, k);
    }
    // Lexicographic rank among size-k subsets: C(F, k) - 1 - sum C(F-1-c_i, k-i).
    let mut tail = BigUint::zero();
    for (i, &c) in idx.iter().enumerate() {
        tail += binom.choose(feature_count - 1 - c, size - i);
    }
    r += binom.choose(feature_count, size) - BigUint::one() - tail;
    Ok(r)
}

/// The `rank`-th combination in canonical order.
pub fn unrank(feature_count: usize, rank: &BigUint) -> Result<FeatureCombination> {
    let total = total_combinations(feature_count)?;
    if rank >= &total {
        return Err(Error::RankOutOfRange {
            feature_count,
            rank: rank.to_string(),
            total: total.to_string(),
        });
    }
    let binom = Binomials::new(feature_count);
    Ok(unrank_with(feature_count, rank.clone(), &binom))
}

fn unrank_with(feature_count: usize, mut r: BigUint, binom: &Binomials) -> FeatureCombination {
    let mut size = 1;
    loop {
        let count = binom.choose(feature_count, size);
        if r < count {
            break;
        }
        r -= count;
        size += 1;
    }
    let mut indices = Vec::with_capacity(size);
    let mut next = 0;
    for slot in 0..size {
        let remaining = size - slot - 1;
        let mut candidate = next;
        loop {
            // combinations that start with `candidate` at this slot
            let count = binom.choose(feature_count - 1 - candidate, remaining);
            if r < count {
                break;
            }
            r -= count;
            candidate += 1;
        }
        indices.push(candidate);
        next = candidate + 1;
    }
    FeatureCombination(indices)
}

/// Iterator over the canonical order, starting at rank 0.
#[derive(Clone, Debug)]
pub struct CanonicalOrder {
    feature_count: usize,
    current: Vec<usize>,
    done: bool,
}

impl CanonicalOrder {
    pub fn new(feature_count: usize) -> Result<Self> {
        if feature_count == 0 {
            return Err(Error::NoFeatures);
        }
        Ok(Self {
            feature_count,
            current: vec![0],
            done: false,
        })
    }

    fn advance(&mut self) {
        let n = self.feature_count;
        let k = self.current.len();
        // rightmost slot that can still move
        let mut i = k;
        while i > 0 {
            i -= 1;
            if self.current[i] < n - k + i {
                self.current[i] += 1;
                for j in i + 1..k {
                    self.current[j] = self.current[j - 1] + 1;
                }
                return;
            }
        }
        if k == n {
            self.done = true;
        } else {
            self.current = (0..=k).collect();
        }
    }
}

impl Iterator for CanonicalOrder {
    type Item = FeatureCombination;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let item = FeatureCombination(self.current.clone());
        self.advance();
        Some(item)
    }
}

/// The first `min(limit, 2^F - 1)` combinations in canonical order.
pub fn enumerate_prefix(feature_count: usize, limit: usize) -> Result<Vec<FeatureCombination>> {
    if limit == 0 {
        return Err(Error::invalid("limit must be at least 1"));
    }
    Ok(CanonicalOrder::new(feature_count)?.take(limit).collect())
}

/// `n` combinations drawn independently and uniformly over all non-empty
/// subsets. Each draw is a uniform rank, unranked; duplicates are kept.
pub fn sample_random(
    feature_count: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<FeatureCombination>> {
    if n == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    let total = total_combinations(feature_count)?;
    let binom = Binomials::new(feature_count);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let r = uniform_below_all_ones(&mut rng, feature_count, &total);
            unrank_with(feature_count, r, &binom)
        })
        .collect())
}

/// Uniform integer in `[0, 2^bits - 1)` by rejection on `bits` random bits.
fn uniform_below_all_ones(rng: &mut impl Rng, bits: usize, bound: &BigUint) -> BigUint {
    let words = bits.div_ceil(32);
    let top_mask = match bits % 32 {
        0 => u32::MAX,
        r => (1u32 << r) - 1,
    };
    loop {
        let mut digits: Vec<u32> = (0..words).map(|_| rng.random()).collect();
        if let Some(top) = digits.last_mut() {
            *top &= top_mask;
        }
        let candidate = BigUint::from_slice(&digits);
        if &candidate < bound {
            return candidate;
        }
    }
}
