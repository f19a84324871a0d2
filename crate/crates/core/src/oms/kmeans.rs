//! Seeded k-means with k-means++ initialization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    /// Cluster index per input point.
    pub assignment: Vec<usize>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus_init(points: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| sq_dist(p, points[chosen[0]]))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave the scan one short; fall back to the last weighted point
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).expect("total > 0"))
        } else {
            // every point coincides with a center
            (0..n).find(|i| !chosen.contains(i)).expect("n >= k")
        };
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, points[next]));
        }
    }
    chosen.into_iter().map(|i| points[i].to_vec()).collect()
}

/// Moves the point farthest from its centroid into each empty cluster.
fn repair_empty(points: &[&[f64]], centroids: &mut [Vec<f64>], assignment: &mut [usize]) {
    let k = centroids.len();
    loop {
        let mut sizes = vec![0usize; k];
        for &a in assignment.iter() {
            sizes[a] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let mut far: Option<(usize, f64)> = None;
        for (i, p) in points.iter().enumerate() {
            if sizes[assignment[i]] < 2 {
                continue;
            }
            let d = sq_dist(p, &centroids[assignment[i]]);
            if far.is_none_or(|(_, best)| d > best) {
                far = Some((i, d));
            }
        }
        let (i, _) = far.expect("some cluster holds two points when n >= k");
        assignment[i] = empty;
        centroids[empty] = points[i].to_vec();
    }
}

/// Lloyd iterations until the assignment stops changing or
/// [`MAX_ITERATIONS`] is reached. Requires `points.len() >= k >= 1`.
pub fn kmeans(points: &[&[f64]], k: usize, seed: u64) -> KMeans {
    assert!(k >= 1 && points.len() >= k, "need n >= k >= 1");
    let dim = points[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let mut assignment: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();

    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        repair_empty(points, &mut centroids, &mut assignment);

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignment) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p.iter()) {
                *s += v;
            }
        }
        for ((c, s), &n) in centroids.iter_mut().zip(sums).zip(&counts) {
            *c = s.into_iter().map(|v| v / n as f64).collect();
        }

        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
        if next == assignment {
            break;
        }
        assignment = next;
    }
    repair_empty(points, &mut centroids, &mut assignment);
    KMeans {
        centroids,
        assignment,
        iterations,
    }
}

/// Within-cluster sum of squared distances to the cluster means.
pub fn within_cluster_ss(points: &[&[f64]], assignment: &[usize], k: usize) -> f64 {
    let dim = points.first().map_or(0, |p| p.len());
    let mut total = 0.0;
    for j in 0..k {
        let members: Vec<&[f64]> = points
            .iter()
            .zip(assignment)
            .filter(|(_, &a)| a == j)
            .map(|(p, _)| *p)
            .collect();
        if members.is_empty() {
            continue;
        }
        let mean: Vec<f64> = (0..dim)
            .map(|t| members.iter().map(|p| p[t]).sum::<f64>() / members.len() as f64)
            .collect();
        total += members.iter().map(|p| sq_dist(p, &mean)).sum::<f64>();
    }
    total
}
