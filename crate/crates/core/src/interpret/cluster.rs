use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndcore::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    Cosine,
    Euclidean,
}

impl FromStr for DistanceMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Self::Cosine),
            "euclidean" => Ok(Self::Euclidean),
            _ => Err(Error::Config(format!("unknown distance metric `{s}`"))),
        }
    }
}

/// One agglomeration step. Ids below `n` are leaves; merge `m` creates id `n + m`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterTree {
    pub leaves: usize,
    pub merges: Vec<Merge>,
    /// Leaves in dendrogram order (left subtree first).
    pub order: Vec<usize>,
}

impl ClusterTree {
    fn single() -> Self {
        Self { leaves: 1, merges: Vec::new(), order: vec![0] }
    }
}

pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (1.0 - dot / (na * nb)).clamp(0.0, 2.0)
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Average-linkage agglomerative clustering of the rows of `rows`.
///
/// At every step the closest pair of active clusters merges; ties go to the
/// lowest cluster slot, then the lowest partner slot.
pub fn hierarchical_cluster(rows: &Matrix, metric: DistanceMetric) -> Result<ClusterTree> {
    let n = rows.rows();
    if n == 0 {
        return Err(Error::InvalidArgument("clustering needs at least one row".into()));
    }
    if !rows.all_finite() {
        return Err(Error::Numeric("clustering input has non-finite values".into()));
    }
    if metric == DistanceMetric::Cosine {
        if let Some(r) = (0..n).find(|&r| rows.row(r).iter().all(|&v| v == 0.0)) {
            return Err(Error::Data(format!("row {r} is all zeros; cosine distance is undefined")));
        }
    }
    if n == 1 {
        return Ok(ClusterTree::single());
    }
    let dist_fn = match metric {
        DistanceMetric::Cosine => cosine_distance,
        DistanceMetric::Euclidean => euclidean,
    };
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = dist_fn(rows.row(i), rows.row(j));
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    let mut active = vec![true; n];
    let mut size = vec![1usize; n];
    let mut id: Vec<usize> = (0..n).collect();
    let nearest_of = |i: usize, dist: &[f64], active: &[bool]| -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for j in 0..n {
            if j != i && active[j] && dist[i * n + j] < best.1 {
                best = (j, dist[i * n + j]);
            }
        }
        best
    };
    let mut nearest: Vec<(usize, f64)> = (0..n).map(|i| nearest_of(i, &dist, &active)).collect();
    let mut merges = Vec::with_capacity(n - 1);
    let mut floor = 0.0f64;
    for step in 0..n - 1 {
        let mut a = usize::MAX;
        for i in 0..n {
            if active[i] && (a == usize::MAX || nearest[i].1 < nearest[a].1) {
                a = i;
            }
        }
        let (b, h) = nearest[a];
        // the survivor keeps the lower slot
        let (keep, gone) = (a.min(b), a.max(b));
        let (ia, ib) = (id[keep].min(id[gone]), id[keep].max(id[gone]));
        floor = floor.max(h);
        merges.push(Merge { left: ia, right: ib, height: floor, size: size[keep] + size[gone] });
        active[gone] = false;
        let (sk, sg) = (size[keep] as f64, size[gone] as f64);
        for k in 0..n {
            if active[k] && k != keep {
                let d = (sk * dist[keep * n + k] + sg * dist[gone * n + k]) / (sk + sg);
                dist[keep * n + k] = d;
                dist[k * n + keep] = d;
            }
        }
        size[keep] += size[gone];
        id[keep] = n + step;
        for k in 0..n {
            if !active[k] {
                continue;
            }
            if k == keep || nearest[k].0 == keep || nearest[k].0 == gone {
                nearest[k] = nearest_of(k, &dist, &active);
            } else {
                let d = dist[k * n + keep];
                if d < nearest[k].1 || (d == nearest[k].1 && keep < nearest[k].0) {
                    nearest[k] = (keep, d);
                }
            }
        }
    }
    let order = leaf_order(n, &merges);
    Ok(ClusterTree { leaves: n, merges, order })
}

fn leaf_order(n: usize, merges: &[Merge]) -> Vec<usize> {
    let mut order = Vec::with_capacity(n);
    let mut stack = vec![n + merges.len() - 1];
    while let Some(node) = stack.pop() {
        if node < n {
            order.push(node);
        } else {
            let m = &merges[node - n];
            stack.push(m.right);
            stack.push(m.left);
        }
    }
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndcore::Rng;
    use proptest::prelude::*;

    #[test]
    fn identical_rows_merge_first_at_zero() {
        let rows = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [2.0, 0.0]]).unwrap();
        let t = hierarchical_cluster(&rows, DistanceMetric::Cosine).unwrap();
        assert_eq!((t.merges[0].left, t.merges[0].right, t.merges[0].height), (0, 2, 0.0));
        assert_eq!(t.merges[1].height, 1.0);
        assert_eq!(cosine_distance(&[1.0, 0.0], &[0.0, 3.0]), 1.0);
    }

    #[test]
    fn three_points_by_hand() {
        // d01 = 1, d02 = 3, d12 = 2: {0,1} at 1, then (3 + 2) / 2 = 2.5
        let rows = Matrix::column_vector(&[0.0, 1.0, 3.0]);
        let t = hierarchical_cluster(&rows, DistanceMetric::Euclidean).unwrap();
        assert_eq!(
            t.merges,
            vec![Merge { left: 0, right: 1, height: 1.0, size: 2 }, Merge { left: 2, right: 3, height: 2.5, size: 3 }]
        );
        assert_eq!(t.order, vec![2, 0, 1]);
    }

    #[test]
    fn zero_row_under_cosine() {
        let rows = Matrix::from_rows(&[[1.0, 1.0], [0.0, 0.0]]).unwrap();
        match hierarchical_cluster(&rows, DistanceMetric::Cosine) {
            Err(Error::Data(msg)) => assert!(msg.contains("row 1")),
            other => panic!("{other:?}"),
        }
        assert!(hierarchical_cluster(&rows, DistanceMetric::Euclidean).is_ok());
    }

    /// Plain O(n^3) average linkage, recomputing cluster distances from the
    /// member points every step.
    fn naive_heights(rows: &Matrix) -> Vec<f64> {
        let mut clusters: Vec<Vec<usize>> = (0..rows.rows()).map(|i| vec![i]).collect();
        let mut heights = Vec::new();
        while clusters.len() > 1 {
            let mut best = (0, 1, f64::INFINITY);
            for i in 0..clusters.len() {
                for j in i + 1..clusters.len() {
                    let mut s = 0.0;
                    for &p in &clusters[i] {
                        for &q in &clusters[j] {
                            s += euclidean(rows.row(p), rows.row(q));
                        }
                    }
                    let d = s / (clusters[i].len() * clusters[j].len()) as f64;
                    if d < best.2 {
                        best = (i, j, d);
                    }
                }
            }
            let merged = clusters.remove(best.1);
            clusters[best.0].extend(merged);
            heights.push(best.2);
        }
        heights
    }

    #[test]
    fn agrees_with_naive_linkage() {
        let mut rng = Rng::new(2);
        let rows = Matrix::new(25, 3, (0..75).map(|_| rng.normal()).collect()).unwrap();
        let t = hierarchical_cluster(&rows, DistanceMetric::Euclidean).unwrap();
        for (m, h) in t.merges.iter().zip(naive_heights(&rows)) {
            assert!((m.height - h).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn tree_shape(values in prop::collection::vec(0.1f64..5.0, 6..60)) {
            let n = values.len() / 3;
            let rows = Matrix::new(n, 3, values[..n * 3].to_vec()).unwrap();
            let t = hierarchical_cluster(&rows, DistanceMetric::Cosine).unwrap();
            prop_assert_eq!(t.merges.len(), n - 1);
            prop_assert!(t.merges.windows(2).all(|w| w[0].height <= w[1].height));
            let mut order = t.order.clone();
            order.sort_unstable();
            prop_assert_eq!(order, (0..n).collect::<Vec<_>>());
            prop_assert_eq!(t.merges.last().unwrap().size, n);
        }
    }
}
