use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// One agglomeration step. Clusters are named by their smallest original
/// point index, so `a < b` and the merged cluster is named `a`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
    /// Number of points in the merged cluster.
    pub size: usize,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Average-linkage agglomeration on Euclidean distances.
///
/// At each step the closest pair of clusters merges; ties go to the
/// smallest `(a, b)` by cluster name. Distances to the merged cluster
/// follow the Lance–Williams update for UPGMA.
pub fn upgma_merges<P: AsRef<[f64]>>(points: &[P]) -> Vec<Merge> {
    let n = points.len();
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = euclidean(points[i].as_ref(), points[j].as_ref());
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    let mut size = vec![1usize; n];
    let mut alive = vec![true; n];
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for _ in 1..n {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..n {
            if !alive[a] {
                continue;
            }
            for b in a + 1..n {
                if alive[b] && best.map_or(true, |(d, _, _)| dist[a * n + b] < d) {
                    best = Some((dist[a * n + b], a, b));
                }
            }
        }
        let (height, a, b) = best.expect("two live clusters");
        let (sa, sb) = (size[a] as f64, size[b] as f64);
        for k in 0..n {
            if alive[k] && k != a && k != b {
                let d = (sa * dist[a * n + k] + sb * dist[b * n + k]) / (sa + sb);
                dist[a * n + k] = d;
                dist[k * n + a] = d;
            }
        }
        alive[b] = false;
        size[a] += size[b];
        merges.push(Merge { a, b, height, size: size[a] });
    }
    merges
}

/// Flat labels after applying every merge with `height ≤ cut`. Labels are
/// numbered in order of first appearance.
pub fn cut_labels(n: usize, merges: &[Merge], cut: f64) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for m in merges.iter().filter(|m| m.height <= cut) {
        let (ra, rb) = (root(&mut parent, m.a), root(&mut parent, m.b));
        parent[rb] = ra;
    }
    let mut names = BTreeMap::new();
    (0..n)
        .map(|i| {
            let r = root(&mut parent, i);
            let next = names.len();
            *names.entry(r).or_insert(next)
        })
        .collect()
}

/// Labels from cutting the UPGMA dendrogram at `cut_distance`.
pub fn upgma_cluster<P: AsRef<[f64]>>(points: &[P], cut_distance: f64) -> Result<Vec<usize>> {
    if points.is_empty() {
        return Err(Error::Validation("clustering needs at least one point".into()));
    }
    if !(cut_distance >= 0.0) {
        return Err(Error::Validation(format!("cut distance {cut_distance} must be non-negative")));
    }
    Ok(cut_labels(points.len(), &upgma_merges(points), cut_distance))
}

/// Mean silhouette of a labeling, or `None` unless `2 ≤ k ≤ n − 1`.
pub fn silhouette<P: AsRef<[f64]>>(points: &[P], labels: &[usize]) -> Option<f64> {
    let n = points.len();
    let k = labels.iter().max().map_or(0, |m| m + 1);
    if k < 2 || k >= n {
        return None;
    }
    let mut total = 0.0;
    for i in 0..n {
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for j in 0..n {
            if j != i {
                sums[labels[j]] += euclidean(points[i].as_ref(), points[j].as_ref());
                counts[labels[j]] += 1;
            }
        }
        let own = labels[i];
        if counts[own] == 0 {
            continue;
        }
        let a = sums[own] / counts[own] as f64;
        let b = (0..k).filter(|&c| c != own && counts[c] > 0).map(|c| sums[c] / counts[c] as f64).fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        total += if denom > 0.0 { (b - a) / denom } else { 0.0 };
    }
    Some(total / n as f64)
}

/// The merge height whose cut maximizes the silhouette; ties keep the
/// lower height. With fewer than 3 points every merge is applied.
pub fn silhouette_cut<P: AsRef<[f64]>>(points: &[P], merges: &[Merge]) -> f64 {
    let mut best: Option<(f64, f64)> = None;
    for m in merges {
        let labels = cut_labels(points.len(), merges, m.height);
        if let Some(s) = silhouette(points, &labels) {
            if best.map_or(true, |(bs, _)| s > bs) {
                best = Some((s, m.height));
            }
        }
    }
    best.map_or(f64::INFINITY, |(_, h)| h)
}

/// Mean within-design pairwise squared distance (averaged over designs)
/// divided by the mean pairwise squared distance between design centroids.
pub fn separation_ratio<P: AsRef<[f64]>, L: Ord + Clone + std::fmt::Debug>(points: &[P], labels: &[L]) -> Result<f64> {
    if points.len() != labels.len() {
        return Err(Error::Shape(format!("{} points, {} labels", points.len(), labels.len())));
    }
    let mut groups: BTreeMap<L, Vec<&[f64]>> = BTreeMap::new();
    for (p, l) in points.iter().zip(labels) {
        groups.entry(l.clone()).or_default().push(p.as_ref());
    }
    if groups.len() < 2 {
        return Err(Error::DegenerateStatistics(format!("{} design(s); need 2", groups.len())));
    }
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut intra = 0.0;
    let mut centroids = Vec::new();
    for (label, members) in &groups {
        let m = members.len();
        if m < 2 {
            return Err(Error::DegenerateStatistics(format!("design {label:?} has {m} point(s); need 2")));
        }
        let mut s = 0.0;
        for i in 0..m {
            for j in i + 1..m {
                s += sq(members[i], members[j]);
            }
        }
        intra += s / (m * (m - 1) / 2) as f64;
        let dim = members[0].len();
        let c: Vec<f64> = (0..dim).map(|d| members.iter().map(|p| p[d]).sum::<f64>() / m as f64).collect();
        centroids.push(c);
    }
    intra /= groups.len() as f64;
    let k = centroids.len();
    let mut inter = 0.0;
    for i in 0..k {
        for j in i + 1..k {
            inter += sq(&centroids[i], &centroids[j]);
        }
    }
    inter /= (k * (k - 1) / 2) as f64;
    if inter == 0.0 {
        return Err(Error::DegenerateStatistics("design centroids coincide".into()));
    }
    Ok(intra / inter)
}

/// Fraction of points whose cluster's majority ground-truth label matches theirs.
pub fn purity<L: Ord + Clone>(clusters: &[usize], truth: &[L]) -> f64 {
    let mut table: BTreeMap<usize, BTreeMap<L, usize>> = BTreeMap::new();
    for (c, t) in clusters.iter().zip(truth) {
        *table.entry(*c).or_default().entry(t.clone()).or_default() += 1;
    }
    let hit: usize = table.values().map(|m| m.values().copied().max().unwrap_or(0)).sum();
    hit as f64 / clusters.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::styleenc::DesignEmbedding;

    #[test]
    fn one_dimensional_example() {
        let pts: Vec<DesignEmbedding> = [0.0, 1.0, 10.0].iter().map(|&v| DesignEmbedding::padded(&[v])).collect();
        assert_eq!(upgma_cluster(&pts, 5.0).unwrap(), vec![0, 0, 1]);
        let m = upgma_merges(&pts);
        assert_eq!((m[0].a, m[0].b, m[0].height), (0, 1, 1.0));
        // Average of 10 and 9.
        assert_eq!((m[1].a, m[1].b, m[1].height), (0, 2, 9.5));
    }

    #[test]
    fn identical_points_form_one_cluster() {
        let pts = vec![[0.3, 0.1]; 5];
        assert_eq!(upgma_cluster(&pts, 1e-9).unwrap(), vec![0; 5]);
    }

    #[test]
    fn ties_break_on_smallest_pair() {
        let pts = [[0.0], [1.0], [2.0], [3.0]];
        let m = upgma_merges(&pts);
        assert_eq!((m[0].a, m[0].b), (0, 1));
        assert_eq!((m[1].a, m[1].b), (2, 3));
    }

    #[test]
    fn separation_ratio_examples() {
        let pts = [[0.0], [2.0], [10.0], [12.0]];
        let r = separation_ratio(&pts, &["a", "a", "b", "b"]).unwrap();
        assert!((r - 0.04).abs() < 1e-15);
        let tight = [[0.0], [0.0], [3.0], [3.0]];
        assert_eq!(separation_ratio(&tight, &[1, 1, 2, 2]).unwrap(), 0.0);
        assert!(separation_ratio(&pts, &[1, 1, 1, 2]).is_err());
        assert!(separation_ratio(&[[1.0], [2.0], [1.0], [2.0]], &[1, 1, 2, 2]).is_err());
    }

    #[test]
    fn silhouette_picks_the_natural_cut() {
        let pts = [[0.0], [0.1], [5.0], [5.2], [10.0], [10.1]];
        let m = upgma_merges(&pts);
        let cut = silhouette_cut(&pts, &m);
        assert_eq!(cut_labels(6, &m, cut), vec![0, 0, 1, 1, 2, 2]);
    }

    #[test]
    fn purity_counts_majorities() {
        assert_eq!(purity(&[0, 0, 1, 1], &["x", "x", "y", "y"]), 1.0);
        assert_eq!(purity(&[0, 0, 0, 0], &["x", "x", "y", "y"]), 0.5);
    }
}
