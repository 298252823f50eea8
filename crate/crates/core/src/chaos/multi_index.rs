use serde::{Deserialize, Serialize};

use super::hermite::hermite_all;
use crate::error::{Error, Result};

// refuse bases larger than this; the dense regression would not fit in memory anyway
const MAX_TERMS: u128 = 10_000_000;

/// Total-order multi-index set in graded lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiIndexSet {
    pub m: usize,
    pub p: usize,
    pub indices: Vec<Vec<usize>>,
}

/// (M + p)! / (M! p!), or `None` if it exceeds `u128`.
pub fn term_count(m: usize, p: usize) -> Option<u128> {
    let mut c: u128 = 1;
    for k in 1..=p as u128 {
        c = c.checked_mul(m as u128 + k)? / k;
    }
    Some(c)
}

fn push_degree(m: usize, degree: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if prefix.len() + 1 == m {
        prefix.push(degree);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for a in (0..=degree).rev() {
        prefix.push(a);
        push_degree(m, degree - a, prefix, out);
        prefix.pop();
    }
}

/// All α with |α| ≤ p, ordered by total degree, then with larger leading entries first:
/// for M = 2, p = 2 this is (0,0), (1,0), (0,1), (2,0), (1,1), (0,2).
pub fn multi_index_set(m: usize, p: usize) -> Result<MultiIndexSet> {
    if m == 0 {
        return Err(Error::InvalidInput("germ dimension M must be at least 1".into()));
    }
    match term_count(m, p) {
        Some(n) if n <= MAX_TERMS => {}
        _ => {
            return Err(Error::InvalidInput(format!(
                "polynomial chaos basis with M = {m}, p = {p} has too many terms"
            )))
        }
    }
    let mut indices = Vec::new();
    for d in 0..=p {
        push_degree(m, d, &mut Vec::with_capacity(m), &mut indices);
    }
    Ok(MultiIndexSet { m, p, indices })
}

impl MultiIndexSet {
    /// Number of terms, P + 1.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Ψ_j(ξ) for every multi-index j.
    pub fn eval(&self, xi: &[f64]) -> Vec<f64> {
        assert_eq!(xi.len(), self.m, "germ dimension mismatch");
        let uni: Vec<Vec<f64>> = xi.iter().map(|&x| hermite_all(self.p, x)).collect();
        self.indices
            .iter()
            .map(|alpha| alpha.iter().enumerate().map(|(k, &a)| uni[k][a]).product())
            .collect()
    }
}
