//! Lloyd's k-means with seeded k-means++ restarts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::Point;

pub const RESTARTS: usize = 10;
pub const MAX_ITERATIONS: usize = 300;
/// Convergence threshold on the largest centroid shift, in feet.
pub const TOLERANCE_FT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// Cluster of each input point; every cluster is non-empty.
    pub labels: Vec<usize>,
    pub centroids: Vec<Point>,
    /// Within-cluster sum of squared distances.
    pub wcss: f64,
}

fn sq_dist(a: Point, b: Point) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    dx * dx + dy * dy
}

fn nearest(p: Point, centroids: &[Point]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (c, &q) in centroids.iter().enumerate() {
        let d = sq_dist(p, q);
        if d < best.1 {
            best = (c, d);
        }
    }
    best.0
}

/// Clusters `points` into `k` groups. Deterministic for a fixed `seed`; the
/// best of [`RESTARTS`] runs by WCSS is returned.
pub fn kmeans(points: &[Point], k: usize, seed: u64) -> Result<Clustering> {
    if k == 0 || k > points.len() {
        return Err(Error::InvalidClusterCount {
            k,
            points: points.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<Clustering> = None;
    for _ in 0..RESTARTS {
        let run = lloyd(points, plus_plus_init(points, k, &mut rng));
        if best.as_ref().is_none_or(|b| run.wcss < b.wcss) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn plus_plus_init(points: &[Point], k: usize, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let mut chosen = vec![false; points.len()];
    let first = rng.random_range(0..points.len());
    chosen[first] = true;
    let mut centroids = vec![points[first]];
    let mut d2: Vec<f64> = points.iter().map(|&p| sq_dist(p, points[first])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            pick.expect("positive total weight")
        } else {
            // every remaining point coincides with a centroid
            let free: Vec<usize> = (0..points.len()).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[pick] = true;
        centroids.push(points[pick]);
        for (d, &p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, points[pick]));
        }
    }
    centroids
}

fn lloyd(points: &[Point], mut centroids: Vec<Point>) -> Clustering {
    let k = centroids.len();
    let mut labels = vec![0; points.len()];
    for _ in 0..MAX_ITERATIONS {
        for (l, &p) in labels.iter_mut().zip(points) {
            *l = nearest(p, &centroids);
        }
        fill_empty_clusters(points, &mut labels, &mut centroids);

        let mut sums = vec![(0.0, 0.0, 0usize); k];
        for (&l, p) in labels.iter().zip(points) {
            sums[l].0 += p.x;
            sums[l].1 += p.y;
            sums[l].2 += 1;
        }
        let mut shift: f64 = 0.0;
        for (c, (sx, sy, n)) in centroids.iter_mut().zip(sums) {
            let next = Point::new(sx / n as f64, sy / n as f64);
            shift = shift.max(sq_dist(*c, next).sqrt());
            *c = next;
        }
        if shift < TOLERANCE_FT {
            break;
        }
    }
    let wcss = labels.iter().zip(points).map(|(&l, &p)| sq_dist(p, centroids[l])).sum();
    Clustering {
        labels,
        centroids,
        wcss,
    }
}

/// Moves the point farthest from its centroid (taken from a cluster with at
/// least two members) into each empty cluster.
fn fill_empty_clusters(points: &[Point], labels: &mut [usize], centroids: &mut [Point]) {
    let mut sizes = vec![0usize; centroids.len()];
    for &l in labels.iter() {
        sizes[l] += 1;
    }
    for c in 0..centroids.len() {
        if sizes[c] > 0 {
            continue;
        }
        let mut donor = None;
        let mut far = -1.0;
        for (i, &p) in points.iter().enumerate() {
            if sizes[labels[i]] >= 2 {
                let d = sq_dist(p, centroids[labels[i]]);
                if d > far {
                    far = d;
                    donor = Some(i);
                }
            }
        }
        let i = donor.expect("k <= number of points");
        sizes[labels[i]] -= 1;
        labels[i] = c;
        sizes[c] = 1;
        centroids[c] = points[i];
    }
}
