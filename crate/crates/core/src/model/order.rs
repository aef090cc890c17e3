use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::SystemParams;

/// The order of a collinear configuration: body indices listed from left to
/// right. Stored zero-based; displayed and serialized one-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OrderLabel(Vec<usize>);

impl OrderLabel {
    pub fn new(permutation: Vec<usize>) -> Result<Self> {
        let n = permutation.len();
        let mut seen = vec![false; n];
        for &b in &permutation {
            if b >= n || seen[b] {
                return Err(Error::InvalidConfiguration(format!(
                    "{permutation:?} is not a permutation of 0..{n}"
                )));
            }
            seen[b] = true;
        }
        Ok(Self(permutation))
    }

    pub fn from_one_based(labels: &[usize]) -> Result<Self> {
        if labels.contains(&0) {
            return Err(Error::InvalidConfiguration(
                "one-based order labels cannot contain 0".into(),
            ));
        }
        Self::new(labels.iter().map(|b| b - 1).collect())
    }

    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.0.iter().map(|b| b + 1).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Rank of every body: `rank[body]` is its position in the ordering.
    pub fn ranks(&self) -> Vec<usize> {
        let mut rank = vec![0; self.0.len()];
        for (r, &b) in self.0.iter().enumerate() {
            rank[b] = r;
        }
        rank
    }

    pub fn reversed(&self) -> Self {
        Self(self.0.iter().rev().copied().collect())
    }

    /// All permutations of `0..n` in lexicographic order.
    pub fn all(n: usize) -> Vec<Self> {
        let mut out = Vec::new();
        let mut perm: Vec<usize> = (0..n).collect();
        loop {
            out.push(Self(perm.clone()));
            // next lexicographic permutation
            let Some(i) = (1..perm.len()).rev().find(|&i| perm[i - 1] < perm[i]) else {
                break;
            };
            let j = (i..perm.len())
                .rev()
                .find(|&j| perm[j] > perm[i - 1])
                .unwrap();
            perm.swap(i - 1, j);
            perm[i..].reverse();
        }
        out
    }

    /// Stable 64-bit fingerprint, handy for plotting order changes.
    pub fn fingerprint(&self) -> u64 {
        // FNV-1a
        self.0.iter().fold(0xcbf29ce484222325u64, |h, &b| {
            (h ^ (b as u64 + 1)).wrapping_mul(0x100000001b3)
        })
    }
}

impl fmt::Display for OrderLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, b) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", b + 1)?;
        }
        write!(f, ")")
    }
}

impl Serialize for OrderLabel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.one_based().serialize(s)
    }
}

impl<'de> Deserialize<'de> for OrderLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let labels = Vec::<usize>::deserialize(d)?;
        Self::from_one_based(&labels).map_err(serde::de::Error::custom)
    }
}

/// Result of [`order_of`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderInfo {
    pub label: OrderLabel,
    /// Set when some neighbouring bodies are closer than `collision_tol`; their
    /// relative order was then decided by body index.
    pub degenerate: bool,
}

/// Order of a configuration, ascending in position. Runs of bodies whose
/// consecutive distances fall below `collision_tol` are ordered by index.
pub fn order_of(params: &SystemParams, positions: &[f64]) -> OrderInfo {
    order_with_tol(positions, params.collision_tol())
}

pub(crate) fn order_with_tol(positions: &[f64], tol: f64) -> OrderInfo {
    let mut idx: Vec<usize> = (0..positions.len()).collect();
    idx.sort_by(|&a, &b| positions[a].total_cmp(&positions[b]).then(a.cmp(&b)));
    let mut degenerate = false;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && positions[idx[end]] - positions[idx[end - 1]] < tol {
            end += 1;
        }
        if end - start > 1 {
            degenerate = true;
            idx[start..end].sort_unstable();
        }
        start = end;
    }
    OrderInfo {
        label: OrderLabel(idx),
        degenerate,
    }
}

/// Strict order by position (ties by index), without tolerance handling.
pub(crate) fn strict_order(positions: &[f64]) -> OrderLabel {
    let mut idx: Vec<usize> = (0..positions.len()).collect();
    idx.sort_by(|&a, &b| positions[a].total_cmp(&positions[b]).then(a.cmp(&b)));
    OrderLabel(idx)
}

/// Literal same-order test: `a_j - a_k >= 0  <=>  b_j - b_k >= 0` for every `j != k`.
pub fn same_order(a: &[f64], b: &[f64]) -> bool {
    assert_eq!(a.len(), b.len(), "configurations differ in size");
    for j in 0..a.len() {
        for k in 0..a.len() {
            if j != k && ((a[j] - a[k] >= 0.0) != (b[j] - b[k] >= 0.0)) {
                return false;
            }
        }
    }
    true
}

/// True when two bodies share exactly the same position.
pub fn has_exact_tie(q: &[f64]) -> bool {
    (0..q.len()).any(|j| (j + 1..q.len()).any(|k| q[j] == q[k]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_of_sorts() {
        let p = SystemParams::equal_masses(3).unwrap();
        let info = order_of(&p, &[3.0, -1.0, 0.0]);
        assert_eq!(info.label.one_based(), vec![2, 3, 1]);
        assert!(!info.degenerate);
    }

    #[test]
    fn ties_break_by_index() {
        let p = SystemParams::equal_masses(3)
            .unwrap()
            .with_collision_tol(1e-9)
            .unwrap();
        let info = order_of(&p, &[0.0, 0.0, 1.0]);
        assert_eq!(info.label.one_based(), vec![1, 2, 3]);
        assert!(info.degenerate);
        let info = order_of(&p, &[1e-12, 0.0, 1.0]);
        assert_eq!(info.label.one_based(), vec![1, 2, 3]);
        assert!(info.degenerate);
    }

    #[test]
    fn same_order_examples() {
        assert!(same_order(&[-1.0, 0.0, 1.0], &[-5.0, 0.0, 5.0]));
        assert!(!same_order(&[-1.0, 0.0, 1.0], &[0.0, -1.0, 1.0]));
        // a tie on one side is only compatible with the matching weak sign
        assert!(!same_order(&[0.0, 0.0, 1.0], &[-1.0, 0.0, 1.0]));
        assert!(same_order(&[0.0, 0.0, 1.0], &[0.0, 0.0, 2.0]));
    }

    #[test]
    fn permutations_are_lexicographic() {
        let all = OrderLabel::all(3);
        assert_eq!(all.len(), 6);
        assert_eq!(all[0].as_slice(), &[0, 1, 2]);
        assert_eq!(all[5].as_slice(), &[2, 1, 0]);
        assert!(all.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(OrderLabel::all(5).len(), 120);
    }

    #[test]
    fn label_validation() {
        assert!(OrderLabel::new(vec![0, 0, 1]).is_err());
        assert!(OrderLabel::from_one_based(&[0, 1]).is_err());
        let l = OrderLabel::from_one_based(&[2, 3, 1]).unwrap();
        assert_eq!(l.ranks(), vec![2, 0, 1]);
        assert_eq!(l.to_string(), "(2,3,1)");
        let json = serde_json::to_string(&l).unwrap();
        assert_eq!(json, "[2,3,1]");
        assert_eq!(serde_json::from_str::<OrderLabel>(&json).unwrap(), l);
    }
}
