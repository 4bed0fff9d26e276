use std::fmt;

use crate::error::{Error, Result};

/// Integer partition with weakly decreasing positive parts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Partition {
    parts: Vec<u32>,
}

impl Partition {
    /// Builds a partition, dropping trailing zeros.
    pub fn new(mut parts: Vec<u32>) -> Result<Self> {
        while parts.last() == Some(&0) {
            parts.pop();
        }
        if parts.contains(&0) {
            return Err(Error::InvalidParameter(
                "partition parts must be positive".into(),
            ));
        }
        if parts.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidParameter(format!(
                "partition parts must be weakly decreasing: {parts:?}"
            )));
        }
        Ok(Self { parts })
    }

    pub fn empty() -> Self {
        Self { parts: Vec::new() }
    }

    pub fn parts(&self) -> &[u32] {
        &self.parts
    }

    pub fn weight(&self) -> usize {
        self.parts.iter().map(|&p| p as usize).sum()
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    /// Conjugate partition: entry `j` counts the parts larger than `j`.
    pub fn conjugate(&self) -> Vec<u32> {
        conjugate(&self.parts)
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, p) in self.parts.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{p}")?;
        }
        write!(f, ")")
    }
}

pub(crate) fn conjugate(parts: &[u32]) -> Vec<u32> {
    let width = parts.first().copied().unwrap_or(0) as usize;
    (0..width)
        .map(|j| parts.iter().take_while(|&&p| p as usize > j).count() as u32)
        .collect()
}

/// All partitions of `k` with at most `max_length` parts, in
/// reverse-lexicographic order. `k = 0` yields the single empty partition.
pub fn partitions_of(k: usize, max_length: usize) -> Vec<Partition> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fill(k, k, max_length, &mut cur, &mut out);
    out
}

fn fill(rest: usize, cap: usize, slots: usize, cur: &mut Vec<u32>, out: &mut Vec<Partition>) {
    if rest == 0 {
        out.push(Partition { parts: cur.clone() });
        return;
    }
    if slots == 0 {
        return;
    }
    for first in (1..=cap.min(rest)).rev() {
        if first * slots < rest {
            break;
        }
        cur.push(first as u32);
        fill(rest - first, first, slots - 1, cur, out);
        cur.pop();
    }
}
