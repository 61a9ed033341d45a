//! Agglomerative grouping of units by the L1 distance between their
//! estimated loading rows.
//!
//! Units whose loading vectors coincide (up to estimation noise) belong to
//! the same group, so complete-linkage clustering on the `N×N` matrix of
//! mean absolute loading differences recovers the group structure. The merge
//! sequence is fully deterministic: among pairs at the minimal distance the
//! one with the lexicographically smallest `(smaller id, larger id)` cluster
//! ids merges first. Leaves carry ids `1..N`; the cluster created by merge
//! step `s` gets id `N+s`, exactly like the conventional dendrogram encoding.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;

/// Validated pairwise distance matrix: square, finite, nonnegative,
/// symmetric, with a zero diagonal.
#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    d: DMatrix<f64>,
}

impl DistanceMatrix {
    /// Wraps a raw matrix after checking the distance-matrix invariants.
    pub fn new(d: DMatrix<f64>) -> Result<Self> {
        let (r, c) = d.shape();
        if r != c || r == 0 {
            return Err(Error::Input(format!(
                "distance matrix must be square and nonempty, got {r}×{c}"
            )));
        }
        if !linalg::all_finite(&d) {
            return Err(Error::input("distance matrix contains a non-finite value"));
        }
        for i in 0..r {
            if d[(i, i)] != 0.0 {
                return Err(Error::Input(format!(
                    "distance matrix diagonal must be zero, entry ({i},{i}) is {}",
                    d[(i, i)]
                )));
            }
            for j in 0..r {
                if d[(i, j)] < 0.0 {
                    return Err(Error::Input(format!(
                        "distance matrix entry ({i},{j}) is negative: {}",
                        d[(i, j)]
                    )));
                }
                if d[(i, j)] != d[(j, i)] {
                    return Err(Error::Input(format!(
                        "distance matrix is not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        Ok(DistanceMatrix { d })
    }

    pub fn len(&self) -> usize {
        self.d.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.d.nrows() == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.d
    }
}

/// A hard partition of `N` units into groups labeled `1..K`, every label
/// used at least once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    labels: Vec<usize>,
    num_groups: usize,
}

impl Partition {
    /// Validates a label vector: nonempty, labels in `1..=K` with
    /// `K = max(labels)`, and no gaps.
    pub fn new(labels: Vec<usize>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::input("partition has no units"));
        }
        let k = *labels.iter().max().expect("nonempty");
        if labels.iter().any(|&l| l == 0) {
            return Err(Error::input("partition labels are 1-based; found 0"));
        }
        let mut seen = vec![false; k];
        for &l in &labels {
            seen[l - 1] = true;
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(Error::Input(format!(
                "partition labels must cover 1..{k}; label {} is unused",
                missing + 1
            )));
        }
        Ok(Partition {
            labels,
            num_groups: k,
        })
    }

    /// Single group containing all `n` units.
    pub fn trivial(n: usize) -> Result<Self> {
        Partition::new(vec![1; n])
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_units(&self) -> usize {
        self.labels.len()
    }

    pub fn num_groups(&self) -> usize {
        self.num_groups
    }

    /// 0-based unit indices of each group, indexed by `label − 1`.
    pub fn group_members(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.num_groups];
        for (unit, &label) in self.labels.iter().enumerate() {
            groups[label - 1].push(unit);
        }
        groups
    }

    /// Size of the smallest group.
    pub fn min_group_size(&self) -> usize {
        self.group_members()
            .iter()
            .map(Vec::len)
            .min()
            .expect("a partition has at least one group")
    }

    /// Relabels groups by first appearance so that equivalent partitions
    /// compare equal: the group of unit 0 becomes 1, the next new group 2,
    /// and so on.
    pub fn canonicalize(&self) -> Partition {
        let mut map = vec![0usize; self.num_groups + 1];
        let mut next = 0usize;
        let labels = self
            .labels
            .iter()
            .map(|&l| {
                if map[l] == 0 {
                    next += 1;
                    map[l] = next;
                }
                map[l]
            })
            .collect();
        Partition {
            labels,
            num_groups: self.num_groups,
        }
    }
}

/// One agglomeration step: clusters `a < b` merge at `height` into a new
/// cluster `id`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
    pub id: usize,
}

/// The full complete-linkage merge sequence over `num_leaves` units.
/// Heights are non-decreasing; ids `1..=N` are leaves, `N+1..=2N−1` internal.
#[derive(Debug, Clone)]
pub struct MergePath {
    num_leaves: usize,
    merges: Vec<Merge>,
}

impl MergePath {
    pub fn num_leaves(&self) -> usize {
        self.num_leaves
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }
}

/// Mean absolute difference between loading rows:
/// `Δ_ij = (1/m) Σ_k |λ_ik − λ_jk|`.
pub fn loading_distance_matrix(loadings: &DMatrix<f64>) -> Result<DistanceMatrix> {
    let (n, m) = loadings.shape();
    if n == 0 || m == 0 {
        return Err(Error::Input(format!(
            "loading matrix must be nonempty, got {n}×{m}"
        )));
    }
    if !linalg::all_finite(loadings) {
        return Err(Error::input("loading matrix contains a non-finite value"));
    }
    let inv_m = 1.0 / m as f64;
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let mut acc = 0.0;
            for k in 0..m {
                acc += (loadings[(i, k)] - loadings[(j, k)]).abs();
            }
            let dist = acc * inv_m;
            d[(i, j)] = dist;
            d[(j, i)] = dist;
        }
    }
    DistanceMatrix::new(d)
}

/// Complete-linkage agglomerative clustering.
///
/// Each step merges the pair of active clusters at minimal distance, where
/// the distance between clusters is the maximum pairwise distance between
/// their members (maintained by the Lance–Williams `max` update, which keeps
/// every height an entry of the original matrix). Exact distance ties are
/// broken toward the lexicographically smallest `(min id, max id)` pair, so
/// the path is reproducible.
pub fn ahc_complete_linkage(d: &DistanceMatrix) -> Result<MergePath> {
    let n = d.len();
    if n < 2 {
        return Err(Error::Input(format!(
            "clustering needs at least 2 units, got {n}"
        )));
    }
    // Slot-based working state: merging reuses the lower slot.
    let mut work = d.as_matrix().clone();
    let mut cid: Vec<usize> = (1..=n).collect();
    let mut active: Vec<bool> = vec![true; n];
    let mut merges = Vec::with_capacity(n - 1);

    for step in 1..n {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None; // (d, lo_id, hi_id, s1, s2)
        for s1 in 0..n {
            if !active[s1] {
                continue;
            }
            for s2 in s1 + 1..n {
                if !active[s2] {
                    continue;
                }
                let dist = work[(s1, s2)];
                let (lo, hi) = if cid[s1] < cid[s2] {
                    (cid[s1], cid[s2])
                } else {
                    (cid[s2], cid[s1])
                };
                let better = match best {
                    None => true,
                    Some((bd, blo, bhi, _, _)) => {
                        dist < bd || (dist == bd && (lo, hi) < (blo, bhi))
                    }
                };
                if better {
                    best = Some((dist, lo, hi, s1, s2));
                }
            }
        }
        let (height, lo, hi, s1, s2) =
            best.expect("at least two clusters remain before the final merge");
        let new_id = n + step;
        merges.push(Merge {
            a: lo,
            b: hi,
            height,
            id: new_id,
        });
        for s in 0..n {
            if active[s] && s != s1 && s != s2 {
                let merged = work[(s1, s)].max(work[(s2, s)]);
                work[(s1, s)] = merged;
                work[(s, s1)] = merged;
            }
        }
        active[s2] = false;
        cid[s1] = new_id;
    }
    Ok(MergePath {
        num_leaves: n,
        merges,
    })
}

/// Cuts a merge path into `k` groups by replaying the first `N−k` merges.
/// Groups are labeled `1..k` in order of their smallest member index.
pub fn cut_path(path: &MergePath, k: usize) -> Result<Partition> {
    let n = path.num_leaves;
    if k == 0 || k > n {
        return Err(Error::Input(format!(
            "cut must produce between 1 and {n} groups, got {k}"
        )));
    }
    let mut cluster_of: Vec<usize> = (1..=n).collect();
    for merge in &path.merges[..n - k] {
        for c in cluster_of.iter_mut() {
            if *c == merge.a || *c == merge.b {
                *c = merge.id;
            }
        }
    }
    // Map cluster ids to labels by order of smallest member index, which is
    // simply first appearance when scanning units in order.
    let mut label_of = std::collections::HashMap::new();
    let mut labels = Vec::with_capacity(n);
    for &c in &cluster_of {
        let next = label_of.len() + 1;
        let l = *label_of.entry(c).or_insert(next);
        labels.push(l);
    }
    Partition::new(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn one_dim_distance(points: &[f64]) -> DistanceMatrix {
        let loadings = DMatrix::from_column_slice(points.len(), 1, points);
        loading_distance_matrix(&loadings).unwrap()
    }

    #[test]
    fn distance_is_mean_absolute_difference() {
        let loadings = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 4.0, 6.0]);
        let d = loading_distance_matrix(&loadings).unwrap();
        assert_relative_eq!(d.get(0, 1), 3.5, epsilon = 1e-15);
        assert_eq!(d.get(0, 0), 0.0);
        assert_eq!(d.get(0, 1), d.get(1, 0));
    }

    #[test]
    fn two_pairs_merge_path_is_frozen() {
        // Points 0, 1, 10, 11: the two tight pairs merge first (tie broken
        // toward leaves 1,2), then the pair clusters join at the complete
        // -linkage span max(10, 11, 9, 10) = 11.
        let d = one_dim_distance(&[0.0, 1.0, 10.0, 11.0]);
        let path = ahc_complete_linkage(&d).unwrap();
        let expect = [
            Merge { a: 1, b: 2, height: 1.0, id: 5 },
            Merge { a: 3, b: 4, height: 1.0, id: 6 },
            Merge { a: 5, b: 6, height: 11.0, id: 7 },
        ];
        assert_eq!(path.merges(), &expect);

        assert_eq!(cut_path(&path, 2).unwrap().labels(), &[1, 1, 2, 2]);
        assert_eq!(cut_path(&path, 3).unwrap().labels(), &[1, 1, 2, 3]);
        assert_eq!(cut_path(&path, 1).unwrap().labels(), &[1, 1, 1, 1]);
        assert_eq!(cut_path(&path, 4).unwrap().labels(), &[1, 2, 3, 4]);
    }

    /// Definitional reference: recompute every cluster distance from scratch
    /// as the max pairwise member distance, no recurrence.
    fn naive_complete_linkage(d: &DistanceMatrix) -> Vec<Merge> {
        let n = d.len();
        let mut clusters: Vec<(usize, Vec<usize>)> =
            (0..n).map(|i| (i + 1, vec![i])).collect();
        let mut merges = Vec::new();
        for step in 1..n {
            let mut best: Option<(f64, usize, usize, usize, usize)> = None;
            for x in 0..clusters.len() {
                for y in x + 1..clusters.len() {
                    let mut span = 0.0_f64;
                    for &u in &clusters[x].1 {
                        for &v in &clusters[y].1 {
                            span = span.max(d.get(u, v));
                        }
                    }
                    let (lo, hi) = if clusters[x].0 < clusters[y].0 {
                        (clusters[x].0, clusters[y].0)
                    } else {
                        (clusters[y].0, clusters[x].0)
                    };
                    let better = match best {
                        None => true,
                        Some((bd, blo, bhi, _, _)) => {
                            span < bd || (span == bd && (lo, hi) < (blo, bhi))
                        }
                    };
                    if better {
                        best = Some((span, lo, hi, x, y));
                    }
                }
            }
            let (height, lo, hi, x, y) = best.unwrap();
            let id = n + step;
            merges.push(Merge { a: lo, b: hi, height, id });
            let mut members = clusters[x].1.clone();
            members.extend_from_slice(&clusters[y].1);
            clusters.remove(y);
            clusters.remove(x);
            clusters.push((id, members));
        }
        merges
    }

    #[test]
    fn recurrence_matches_definitional_reference_on_random_instances() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for case in 0..60 {
            let n = 2 + (case % 5);
            // Quantized distances provoke exact ties.
            let loadings =
                DMatrix::from_fn(n, 2, |_, _| (rng.random_range(0..4) as f64) * 0.5);
            let d = loading_distance_matrix(&loadings).unwrap();
            let path = ahc_complete_linkage(&d).unwrap();
            let want = naive_complete_linkage(&d);
            assert_eq!(path.merges(), want.as_slice(), "case {case}");
        }
    }

    #[test]
    fn heights_are_non_decreasing_and_cuts_are_nested() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let loadings = DMatrix::from_fn(20, 3, |_, _| rng.random::<f64>() * 4.0);
        let d = loading_distance_matrix(&loadings).unwrap();
        let path = ahc_complete_linkage(&d).unwrap();
        for w in path.merges().windows(2) {
            assert!(w[0].height <= w[1].height);
        }
        // A (k+1)-cut refines the k-cut: units sharing a group at k+1 share
        // one at k.
        for k in 1..20 {
            let fine = cut_path(&path, k + 1).unwrap();
            let coarse = cut_path(&path, k).unwrap();
            for i in 0..20 {
                for j in 0..20 {
                    if fine.labels()[i] == fine.labels()[j] {
                        assert_eq!(coarse.labels()[i], coarse.labels()[j]);
                    }
                }
            }
        }
    }

    #[test]
    fn partition_validation() {
        assert!(Partition::new(vec![]).is_err());
        assert!(Partition::new(vec![0, 1]).is_err());
        assert!(Partition::new(vec![1, 3]).is_err()); // label 2 missing
        let p = Partition::new(vec![2, 1, 2, 3]).unwrap();
        assert_eq!(p.num_groups(), 3);
        assert_eq!(p.group_members(), vec![vec![1], vec![0, 2], vec![3]]);
        assert_eq!(p.min_group_size(), 1);
        assert_eq!(p.canonicalize().labels(), &[1, 2, 1, 3]);
    }

    #[test]
    fn distance_matrix_validation() {
        let bad_diag = DMatrix::from_row_slice(2, 2, &[0.1, 1.0, 1.0, 0.0]);
        assert!(DistanceMatrix::new(bad_diag).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 0.0]);
        assert!(DistanceMatrix::new(asym).is_err());
        let neg = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, -1.0, 0.0]);
        assert!(DistanceMatrix::new(neg).is_err());
    }
}
