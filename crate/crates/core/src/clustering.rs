//! Agglomerative path reduction: group paths whose interval statistics Θ are
//! close and replace each group by a weighted representative, so one PDE
//! solve stands in for many paths.
//!
//! Complete ("maximum distance") linkage on z-scored Θ columns, built with
//! the nearest-neighbour chain algorithm over a dense distance matrix.

use crate::error::{Error, Result};
use crate::par;

/// Result of cutting the merge tree.
///
/// Clusters are ordered by their smallest member index, and members within a
/// cluster are in increasing index order, so a cut into `N` clusters is the
/// identity permutation.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub n_clusters: usize,
    pub sizes: Vec<usize>,
    /// Componentwise member mean, flattened `n_clusters × d_theta`, on the
    /// original (unstandardized) scale.
    pub representatives: Vec<f64>,
    pub members: Vec<Vec<usize>>,
    pub d_theta: usize,
}

impl ClusterAssignment {
    pub fn representative(&self, k: usize) -> &[f64] {
        &self.representatives[k * self.d_theta..(k + 1) * self.d_theta]
    }

    pub fn n_points(&self) -> usize {
        self.sizes.iter().sum()
    }
}

/// Regression weight of each representative: its cluster size.
pub fn clustered_weights(assignment: &ClusterAssignment) -> Vec<f64> {
    assignment.sizes.iter().map(|&s| s as f64).collect()
}

/// Cluster the rows of `theta_block` (`N × d_theta`, row-major) into
/// `target` clusters.
pub fn cluster_paths(theta_block: &[f64], d_theta: usize, target: usize) -> Result<ClusterAssignment> {
    let n = rows(theta_block, d_theta)?;
    if target < 1 || target > n {
        return Err(Error::Parameter {
            name: "clusters",
            value: target as f64,
            reason: "must lie between 1 and the number of paths",
        });
    }
    if target == n {
        // the cut keeps every leaf; skip the quadratic tree build
        return Ok(assemble(theta_block, d_theta, (0..n).collect()));
    }
    let merges = complete_linkage(theta_block, d_theta, n);
    Ok(cut(theta_block, d_theta, n, &merges, n - target))
}

/// Cut the tree at a dissimilarity level instead of a cluster count: every
/// merge at distance `<= max_distance` (in standardized units) is applied.
pub fn cluster_paths_threshold(theta_block: &[f64], d_theta: usize, max_distance: f64) -> Result<ClusterAssignment> {
    let n = rows(theta_block, d_theta)?;
    if !(max_distance >= 0.0) {
        return Err(Error::Parameter {
            name: "cluster_threshold",
            value: max_distance,
            reason: "must be non-negative",
        });
    }
    let merges = complete_linkage(theta_block, d_theta, n);
    let applied = merges.iter().filter(|m| m.distance <= max_distance).count();
    Ok(cut(theta_block, d_theta, n, &merges, applied))
}

fn rows(theta_block: &[f64], d_theta: usize) -> Result<usize> {
    if d_theta == 0 || theta_block.is_empty() || !theta_block.len().is_multiple_of(d_theta) {
        return Err(Error::Configuration(format!(
            "Θ block of {} values does not split into rows of {d_theta}",
            theta_block.len()
        )));
    }
    if theta_block.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite Θ entry passed to clustering".into()));
    }
    Ok(theta_block.len() / d_theta)
}

#[derive(Debug, Clone, Copy)]
struct Merge {
    a: usize,
    b: usize,
    distance: f64,
}

/// Dense symmetric distance matrix. Row scans dominate the chain search,
/// so rows are kept contiguous at the price of storing both triangles.
struct Distances {
    n: usize,
    d: Vec<f64>,
}

impl Distances {
    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.d[i * self.n..(i + 1) * self.n]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.d[i * self.n + j] = v;
        self.d[j * self.n + i] = v;
    }
}

fn standardize(theta_block: &[f64], d: usize, n: usize) -> Vec<f64> {
    let mut z = theta_block.to_vec();
    for c in 0..d {
        let mean = (0..n).map(|j| theta_block[j * d + c]).sum::<f64>() / n as f64;
        let var = (0..n).map(|j| (theta_block[j * d + c] - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        for j in 0..n {
            // constant columns carry no information
            z[j * d + c] = if sd > 0.0 { (theta_block[j * d + c] - mean) / sd } else { 0.0 };
        }
    }
    z
}

fn distances(z: &[f64], d: usize, n: usize) -> Distances {
    let mut flat = vec![0.0; n * n];
    par::for_each_chunk_mut(&mut flat, n, |i, row| {
        let zi = &z[i * d..(i + 1) * d];
        for (j, out) in row.iter_mut().enumerate() {
            let zj = &z[j * d..(j + 1) * d];
            *out = zi.iter().zip(zj).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        }
    });
    Distances { n, d: flat }
}

/// Nearest-neighbour chain. Returns the `N - 1` merges sorted by distance;
/// equal distances keep discovery order, and neighbour searches break ties
/// towards the lower index.
fn complete_linkage(theta_block: &[f64], d: usize, n: usize) -> Vec<Merge> {
    if n < 2 {
        return Vec::new();
    }
    let z = standardize(theta_block, d, n);
    let mut dist = distances(&z, d, n);
    drop(z);
    let mut active = vec![true; n];
    let mut chain: Vec<usize> = Vec::with_capacity(n);
    let mut merges = Vec::with_capacity(n - 1);
    let mut next_start = 0;
    while merges.len() < n - 1 {
        if chain.is_empty() {
            while !active[next_start] {
                next_start += 1;
            }
            chain.push(next_start);
        }
        let a = *chain.last().unwrap();
        let prev = if chain.len() >= 2 { Some(chain[chain.len() - 2]) } else { None };
        // prefer the predecessor on ties so the chain terminates
        let row = dist.row(a);
        let (mut best, mut best_d) = match prev {
            Some(p) => (p, row[p]),
            None => (usize::MAX, f64::INFINITY),
        };
        // ascending scan: strict comparison keeps the lowest index on ties
        for (x, &dx) in row.iter().enumerate() {
            if dx < best_d && x != a && active[x] {
                best = x;
                best_d = dx;
            }
        }
        if Some(best) == prev {
            chain.pop();
            chain.pop();
            let (keep, gone) = if a < best { (a, best) } else { (best, a) };
            merges.push(Merge { a: keep, b: gone, distance: best_d });
            active[gone] = false;
            // Lance-Williams update for complete linkage
            for x in 0..n {
                if active[x] && x != keep {
                    let v = dist.d[keep * n + x].max(dist.d[gone * n + x]);
                    dist.set(keep, x, v);
                }
            }
        } else {
            chain.push(best);
        }
    }
    merges.sort_by(|p, q| p.distance.total_cmp(&q.distance));
    merges
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn cut(theta_block: &[f64], d: usize, n: usize, merges: &[Merge], applied: usize) -> ClusterAssignment {
    let mut parent: Vec<usize> = (0..n).collect();
    for m in &merges[..applied] {
        let ra = find(&mut parent, m.a);
        let rb = find(&mut parent, m.b);
        // the root is always the smallest member
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi] = lo;
    }
    let labels = (0..n).map(|j| find(&mut parent, j)).collect();
    assemble(theta_block, d, labels)
}

/// Build the assignment from per-point labels where each label is the
/// smallest index of its cluster.
fn assemble(theta_block: &[f64], d: usize, labels: Vec<usize>) -> ClusterAssignment {
    let n = labels.len();
    let mut slot = vec![usize::MAX; n];
    let mut members: Vec<Vec<usize>> = Vec::new();
    for (j, &root) in labels.iter().enumerate() {
        if slot[root] == usize::MAX {
            slot[root] = members.len();
            members.push(Vec::new());
        }
        members[slot[root]].push(j);
    }
    let mut representatives = vec![0.0; members.len() * d];
    for (k, mem) in members.iter().enumerate() {
        let rep = &mut representatives[k * d..(k + 1) * d];
        if mem.len() == 1 {
            rep.copy_from_slice(&theta_block[mem[0] * d..(mem[0] + 1) * d]);
            continue;
        }
        for &j in mem {
            for (r, x) in rep.iter_mut().zip(&theta_block[j * d..(j + 1) * d]) {
                *r += x;
            }
        }
        let inv = mem.len() as f64;
        rep.iter_mut().for_each(|r| *r /= inv);
    }
    ClusterAssignment {
        n_clusters: members.len(),
        sizes: members.iter().map(|m| m.len()).collect(),
        representatives,
        members,
        d_theta: d,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singleton_cut_is_identity() {
        let theta: Vec<f64> = (0..20).map(|i| (i * 7 % 5) as f64).collect();
        let a = cluster_paths(&theta, 2, 10).unwrap();
        assert_eq!(a.n_clusters, 10);
        assert_eq!(a.representatives, theta);
        assert_eq!(clustered_weights(&a), vec![1.0; 10]);
    }

    #[test]
    fn single_cluster_is_column_mean() {
        let theta = [1.0, 10.0, 2.0, 20.0, 3.0, 30.0, 6.0, 60.0];
        let a = cluster_paths(&theta, 2, 1).unwrap();
        assert_eq!(a.sizes, vec![4]);
        assert_eq!(a.representative(0), &[3.0, 30.0]);
        assert_eq!(clustered_weights(&a), vec![4.0]);
    }

    #[test]
    fn rejects_bad_targets() {
        let theta = [1.0, 2.0, 3.0];
        assert!(cluster_paths(&theta, 1, 0).is_err());
        assert!(cluster_paths(&theta, 1, 4).is_err());
    }

    #[test]
    fn complete_linkage_small_example() {
        // 1-d points: {0, 1} and {5, 6, 7} separate first; complete linkage
        // then keeps 7 with {5, 6} rather than chaining.
        let theta = [0.0, 1.0, 5.0, 6.0, 7.0];
        let a = cluster_paths(&theta, 1, 2).unwrap();
        assert_eq!(a.members, vec![vec![0, 1], vec![2, 3, 4]]);
        let b = cluster_paths(&theta, 1, 3).unwrap();
        assert_eq!(b.sizes.iter().sum::<usize>(), 5);
        assert_eq!(b.n_clusters, 3);
    }

    #[test]
    fn matches_naive_complete_linkage() {
        // compare the chain algorithm with a direct O(N^3) agglomeration
        let pts: Vec<f64> = (0..40).map(|i| ((i * 37 % 101) as f64).sin() * 3.0 + (i % 3) as f64).collect();
        let n = 20;
        let d = 2;
        for target in [1, 3, 7, 12, 20] {
            let fast = cluster_paths(&pts, d, target).unwrap();
            let z = standardize(&pts, d, n);
            let dist = |i: usize, j: usize| -> f64 {
                (0..d).map(|c| (z[i * d + c] - z[j * d + c]).powi(2)).sum::<f64>().sqrt()
            };
            let mut groups: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
            while groups.len() > target {
                let mut best = (0, 1, f64::INFINITY);
                for p in 0..groups.len() {
                    for q in (p + 1)..groups.len() {
                        let dm = groups[p]
                            .iter()
                            .flat_map(|&i| groups[q].iter().map(move |&j| (i, j)))
                            .map(|(i, j)| dist(i, j))
                            .fold(0.0, f64::max);
                        if dm < best.2 {
                            best = (p, q, dm);
                        }
                    }
                }
                let moved = groups.remove(best.1);
                groups[best.0].extend(moved);
                groups[best.0].sort();
            }
            groups.sort();
            assert_eq!(fast.members, groups, "target {target}");
        }
    }
}
