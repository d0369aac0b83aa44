use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Largest cluster or class count accepted by [`brute_force_accuracy`].
pub const BRUTE_FORCE_LIMIT: usize = 8;

/// Predicted clusters `0..k` and true classes `0..t` of the same datapoints.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelPair {
    predictions: Vec<usize>,
    truths: Vec<usize>,
    k: usize,
    t: usize,
}

impl LabelPair {
    pub fn new(predictions: Vec<usize>, truths: Vec<usize>, k: usize, t: usize) -> Result<Self> {
        if predictions.is_empty() {
            return Err(Error::invalid("cluster accuracy of an empty dataset"));
        }
        if predictions.len() != truths.len() {
            return Err(Error::invalid(format!(
                "{} predictions but {} truths",
                predictions.len(),
                truths.len()
            )));
        }
        if let Some(&y) = predictions.iter().find(|&&y| y >= k) {
            return Err(Error::invalid(format!("cluster {y} outside 0..{k}")));
        }
        if let Some(&c) = truths.iter().find(|&&c| c >= t) {
            return Err(Error::invalid(format!("class {c} outside 0..{t}")));
        }
        Ok(LabelPair { predictions, truths, k, t })
    }

    /// Cardinalities taken as the largest label plus one.
    pub fn infer(predictions: Vec<usize>, truths: Vec<usize>) -> Result<Self> {
        let k = predictions.iter().max().map_or(0, |m| m + 1);
        let t = truths.iter().max().map_or(0, |m| m + 1);
        Self::new(predictions, truths, k, t)
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }

    pub fn clusters(&self) -> usize {
        self.k
    }

    pub fn classes(&self) -> usize {
        self.t
    }

    pub fn predictions(&self) -> &[usize] {
        &self.predictions
    }

    pub fn truths(&self) -> &[usize] {
        &self.truths
    }

    /// `counts[cluster][class]`.
    pub fn contingency(&self) -> Vec<Vec<usize>> {
        let mut counts = vec![vec![0; self.t]; self.k];
        for (&y, &c) in self.predictions.iter().zip(&self.truths) {
            counts[y][c] += 1;
        }
        counts
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AssignmentMode {
    /// Each class receives at most one cluster.
    Injective,
    /// Each cluster maps to its majority class.
    ManyToOne,
}

impl AssignmentMode {
    pub const ALL: [AssignmentMode; 2] = [AssignmentMode::Injective, AssignmentMode::ManyToOne];

    pub fn name(self) -> &'static str {
        match self {
            AssignmentMode::Injective => "injective",
            AssignmentMode::ManyToOne => "many-to-one",
        }
    }
}

impl fmt::Display for AssignmentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AssignmentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown assignment mode `{s}` (injective, many-to-one)")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssignmentResult {
    /// Class of each cluster; `None` for clusters left unmatched.
    pub mapping: Vec<Option<usize>>,
    pub matched: usize,
    pub total: usize,
    pub accuracy: f64,
    pub mode: AssignmentMode,
}

impl AssignmentResult {
    fn from_mapping(pairs: &LabelPair, mapping: Vec<Option<usize>>, mode: AssignmentMode) -> Self {
        let matched = pairs
            .predictions
            .iter()
            .zip(&pairs.truths)
            .filter(|(&y, &c)| mapping[y] == Some(c))
            .count();
        AssignmentResult {
            mapping,
            matched,
            total: pairs.len(),
            accuracy: matched as f64 / pairs.len() as f64,
            mode,
        }
    }
}

/// Minimum-cost perfect matching of a square cost matrix (shortest augmenting
/// paths with potentials). Returns the column assigned to each row.
pub fn hungarian(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    let inf = i64::MAX / 4;
    // 1-based with a virtual column 0
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of = vec![0; n];
    for j in 1..=n {
        if row_of[j] > 0 {
            col_of[row_of[j] - 1] = j - 1;
        }
    }
    col_of
}

/// Best cluster-to-class map under `mode` and the resulting accuracy.
pub fn cluster_accuracy(pairs: &LabelPair, mode: AssignmentMode) -> AssignmentResult {
    let counts = pairs.contingency();
    let mapping = match mode {
        AssignmentMode::ManyToOne => counts
            .iter()
            .map(|row| {
                // first majority class; empty clusters map to class 0
                let best = row.iter().enumerate().fold(0, |b, (c, &n)| if n > row[b] { c } else { b });
                (pairs.t > 0).then_some(best)
            })
            .collect(),
        AssignmentMode::Injective => {
            let n = pairs.k.max(pairs.t);
            let cost: Vec<Vec<i64>> = (0..n)
                .map(|y| {
                    (0..n)
                        .map(|c| if y < pairs.k && c < pairs.t { -(counts[y][c] as i64) } else { 0 })
                        .collect()
                })
                .collect();
            let cols = hungarian(&cost);
            (0..pairs.k).map(|y| (cols[y] < pairs.t).then_some(cols[y])).collect()
        }
    };
    AssignmentResult::from_mapping(pairs, mapping, mode)
}

/// Exhaustive search over every feasible cluster-to-class map.
pub fn brute_force_accuracy(pairs: &LabelPair, mode: AssignmentMode) -> Result<AssignmentResult> {
    if pairs.k > BRUTE_FORCE_LIMIT || pairs.t > BRUTE_FORCE_LIMIT {
        return Err(Error::GuardExceeded(format!(
            "{} clusters x {} classes exceeds the {BRUTE_FORCE_LIMIT} x {BRUTE_FORCE_LIMIT} limit",
            pairs.k, pairs.t
        )));
    }
    let counts = pairs.contingency();
    let mut best = (0usize, vec![None; pairs.k]);
    let mut current = vec![None; pairs.k];
    let mut used = vec![false; pairs.t];
    search(&counts, pairs.t, mode, 0, 0, &mut current, &mut used, &mut best);
    Ok(AssignmentResult::from_mapping(pairs, best.1, mode))
}

#[allow(clippy::too_many_arguments)]
fn search(
    counts: &[Vec<usize>],
    t: usize,
    mode: AssignmentMode,
    cluster: usize,
    score: usize,
    current: &mut Vec<Option<usize>>,
    used: &mut Vec<bool>,
    best: &mut (usize, Vec<Option<usize>>),
) {
    if cluster == counts.len() {
        if score > best.0 {
            *best = (score, current.clone());
        }
        return;
    }
    if mode == AssignmentMode::Injective {
        current[cluster] = None;
        search(counts, t, mode, cluster + 1, score, current, used, best);
    }
    for c in 0..t {
        if mode == AssignmentMode::Injective && used[c] {
            continue;
        }
        used[c] = true;
        current[cluster] = Some(c);
        search(counts, t, mode, cluster + 1, score + counts[cluster][c], current, used, best);
        used[c] = false;
    }
    current[cluster] = None;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from_counts(counts: &[&[usize]]) -> LabelPair {
        let (mut y, mut t) = (Vec::new(), Vec::new());
        for (i, row) in counts.iter().enumerate() {
            for (c, &n) in row.iter().enumerate() {
                y.extend(std::iter::repeat_n(i, n));
                t.extend(std::iter::repeat_n(c, n));
            }
        }
        LabelPair::new(y, t, counts.len(), counts[0].len()).unwrap()
    }

    #[test]
    fn hand_cases() {
        for mode in AssignmentMode::ALL {
            let p = from_counts(&[&[2, 1], &[1, 2]]);
            assert_eq!(cluster_accuracy(&p, mode).accuracy, 4.0 / 6.0);
            assert_eq!(brute_force_accuracy(&p, mode).unwrap().accuracy, 4.0 / 6.0);
            assert_eq!(cluster_accuracy(&from_counts(&[&[2, 0], &[0, 2]]), mode).accuracy, 1.0);
        }
    }

    #[test]
    fn permuted_labels_score_one() {
        let t: Vec<usize> = (0..30).map(|i| i % 5).collect();
        let y: Vec<usize> = t.iter().map(|&c| (c * 3 + 1) % 5).collect();
        let p = LabelPair::new(y, t, 5, 5).unwrap();
        assert_eq!(cluster_accuracy(&p, AssignmentMode::Injective).accuracy, 1.0);
    }

    #[test]
    fn rectangular_injective_leaves_clusters_unmatched() {
        // three clusters, two classes
        let p = from_counts(&[&[3, 0], &[0, 2], &[1, 1]]);
        let r = cluster_accuracy(&p, AssignmentMode::Injective);
        assert_eq!(r.matched, 5);
        assert_eq!(r.mapping.iter().filter(|m| m.is_none()).count(), 1);
        assert_eq!(cluster_accuracy(&p, AssignmentMode::ManyToOne).matched, 6);
    }

    #[test]
    fn guard_and_empty_input() {
        assert!(LabelPair::new(vec![], vec![], 1, 1).is_err());
        let p = LabelPair::new(vec![8], vec![0], 9, 1).unwrap();
        assert!(matches!(
            brute_force_accuracy(&p, AssignmentMode::ManyToOne),
            Err(Error::GuardExceeded(_))
        ));
    }

    #[test]
    fn hungarian_minimises() {
        let cost = vec![vec![4, 1, 3], vec![2, 0, 5], vec![3, 2, 2]];
        let cols = hungarian(&cost);
        let total: i64 = cols.iter().enumerate().map(|(r, &c)| cost[r][c]).sum();
        assert_eq!(total, 5);
    }
}
