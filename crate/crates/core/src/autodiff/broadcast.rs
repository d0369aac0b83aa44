//! Trailing-dimension broadcasting.

use crate::tensor::numel;

/// Shape obtained by aligning both operands on their trailing dimensions.
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Maps a flat index of the broadcast output to the flat index of one operand.
#[derive(Debug)]
pub(crate) enum IndexMap {
    Identity,
    Scalar,
    /// Operand equals a suffix of the output shape.
    Suffix(usize),
    /// Operand equals a prefix of the output shape padded with trailing ones.
    Prefix(usize),
    Gather(Vec<usize>),
}

impl IndexMap {
    pub(crate) fn new(out: &[usize], operand: &[usize]) -> IndexMap {
        let pad = out.len() - operand.len();
        let padded: Vec<usize> = std::iter::repeat_n(1, pad).chain(operand.iter().copied()).collect();
        if padded == out {
            return IndexMap::Identity;
        }
        let n = numel(operand);
        if n == 1 {
            return IndexMap::Scalar;
        }
        let first = padded.iter().position(|&d| d != 1).unwrap_or(padded.len());
        if padded[first..] == out[first..] {
            return IndexMap::Suffix(n);
        }
        let last = padded.iter().rposition(|&d| d != 1).map_or(0, |p| p + 1);
        if padded[..last] == out[..last] && padded[last..].iter().all(|&d| d == 1) {
            return IndexMap::Prefix(numel(&out[last..]));
        }
        // general case: walk the output with per-axis operand strides
        let mut strides = vec![0usize; out.len()];
        let mut acc = 1;
        for i in (0..out.len()).rev() {
            if padded[i] != 1 {
                strides[i] = acc;
            }
            acc *= padded[i];
        }
        let total = numel(out);
        let mut idx = Vec::with_capacity(total);
        let mut counter = vec![0usize; out.len()];
        let mut cur = 0usize;
        for _ in 0..total {
            idx.push(cur);
            for ax in (0..out.len()).rev() {
                counter[ax] += 1;
                cur += strides[ax];
                if counter[ax] < out[ax] {
                    break;
                }
                cur -= strides[ax] * counter[ax];
                counter[ax] = 0;
            }
        }
        IndexMap::Gather(idx)
    }

    #[inline]
    pub(crate) fn get(&self, i: usize) -> usize {
        match self {
            IndexMap::Identity => i,
            IndexMap::Scalar => 0,
            IndexMap::Suffix(n) => i % n,
            IndexMap::Prefix(d) => i / d,
            IndexMap::Gather(v) => v[i],
        }
    }
}
