use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::rng::stream;

const MAX_ITER: usize = 300;

/// Outcome of a k-means fit.
///
/// Cluster labels are canonical: label 0 is the cluster of point 0, label 1
/// the next cluster to appear in point order, and so on. Empty clusters, if
/// any, come last.
#[derive(Clone, Debug)]
pub struct KmeansResult {
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances from each point to its centroid.
    pub cost: f64,
}

impl KmeansResult {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.centroids.len()];
        for &a in &self.assignment {
            sizes[a] += 1;
        }
        sizes
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_points(points: &[Vec<f64>]) -> Result<usize> {
    let dim = points.first().map(Vec::len).unwrap_or(0);
    for p in points {
        if p.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: p.len(),
            });
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("k-means input"));
        }
    }
    Ok(dim)
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// Lloyd iterations from the given centroids until assignments stop changing.
///
/// Returns the fit and the cost after every assignment step. A cluster that
/// loses all its points keeps its previous centroid.
pub fn lloyd(
    points: &[Vec<f64>],
    init: Vec<Vec<f64>>,
    max_iter: usize,
) -> Result<(KmeansResult, Vec<f64>)> {
    let dim = check_points(points)?;
    if init.is_empty() {
        return Err(invalid("k-means needs at least one centroid"));
    }
    if init.iter().any(|c| c.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: init.iter().map(Vec::len).find(|&l| l != dim).unwrap_or(0),
        });
    }
    let mut centroids = init;
    let mut assignment = vec![usize::MAX; points.len()];
    let mut history = Vec::new();
    for _ in 0..max_iter.max(1) {
        let mut changed = false;
        let mut cost = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (k, d) = nearest(p, &centroids);
            cost += d;
            if assignment[i] != k {
                assignment[i] = k;
                changed = true;
            }
        }
        history.push(cost);
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; centroids.len()];
        let mut counts = vec![0usize; centroids.len()];
        for (p, &k) in points.iter().zip(&assignment) {
            counts[k] += 1;
            for (s, x) in sums[k].iter_mut().zip(p) {
                *s += x;
            }
        }
        for (k, (s, &n)) in sums.into_iter().zip(&counts).enumerate() {
            if n > 0 {
                centroids[k] = s.into_iter().map(|x| x / n as f64).collect();
            }
        }
    }
    let cost = points
        .iter()
        .zip(&assignment)
        .map(|(p, &k)| sq_dist(p, &centroids[k]))
        .sum();
    Ok((
        KmeansResult {
            assignment,
            centroids,
            cost,
        },
        history,
    ))
}

fn plus_plus_init(points: &[Vec<f64>], c: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < c {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if r < d {
                    pick = i;
                    break;
                }
                r -= d;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        let next = points[pick].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &next));
        }
        centroids.push(next);
    }
    centroids
}

fn canonicalize(mut fit: KmeansResult) -> KmeansResult {
    let c = fit.centroids.len();
    let mut map = vec![usize::MAX; c];
    let mut next = 0;
    for &a in &fit.assignment {
        if map[a] == usize::MAX {
            map[a] = next;
            next += 1;
        }
    }
    for m in map.iter_mut() {
        if *m == usize::MAX {
            *m = next;
            next += 1;
        }
    }
    let mut centroids = vec![Vec::new(); c];
    for (old, cen) in fit.centroids.into_iter().enumerate() {
        centroids[map[old]] = cen;
    }
    fit.assignment.iter_mut().for_each(|a| *a = map[*a]);
    fit.centroids = centroids;
    fit
}

/// k-means with k-means++ seeding; the lowest-cost of `restarts` fits wins
/// (earliest on ties).
pub fn kmeans_cluster(
    points: &[Vec<f64>],
    c: usize,
    seed: u64,
    restarts: usize,
) -> Result<KmeansResult> {
    check_points(points)?;
    if c == 0 || c > points.len() {
        return Err(invalid(format!(
            "cluster count {c} outside 1..={}",
            points.len()
        )));
    }
    let mut best: Option<KmeansResult> = None;
    for r in 0..restarts.max(1) {
        let mut rng = stream(seed, &[r as u64]);
        let init = plus_plus_init(points, c, &mut rng);
        let (fit, _) = lloyd(points, init, MAX_ITER)?;
        if best.as_ref().is_none_or(|b| fit.cost < b.cost) {
            best = Some(fit);
        }
    }
    Ok(canonicalize(best.expect("at least one restart")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sse(points: &[Vec<f64>], labels: &[usize], c: usize) -> f64 {
        let dim = points[0].len();
        let mut total = 0.0;
        for k in 0..c {
            let members: Vec<&Vec<f64>> = points
                .iter()
                .zip(labels)
                .filter(|(_, &l)| l == k)
                .map(|(p, _)| p)
                .collect();
            if members.is_empty() {
                continue;
            }
            let mean: Vec<f64> = (0..dim)
                .map(|j| members.iter().map(|p| p[j]).sum::<f64>() / members.len() as f64)
                .collect();
            total += members.iter().map(|p| sq_dist(p, &mean)).sum::<f64>();
        }
        total
    }

    fn brute_force(points: &[Vec<f64>], c: usize) -> f64 {
        let n = points.len();
        let mut best = f64::INFINITY;
        let mut labels = vec![0; n];
        for code in 0..c.pow(n as u32) {
            let mut x = code;
            for l in labels.iter_mut() {
                *l = x % c;
                x /= c;
            }
            best = best.min(sse(points, &labels, c));
        }
        best
    }

    #[test]
    fn matches_exhaustive_search_on_six_points() {
        // Three tight pairs far apart: the optimum for c = 3 is unambiguous.
        for seed in 0..25u64 {
            let mut rng = stream(seed, &[]);
            let centers = [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]];
            let points: Vec<Vec<f64>> = (0..6)
                .map(|i| {
                    let c = centers[i % 3];
                    vec![c[0] + rng.random_range(-1.0..1.0), c[1] + rng.random_range(-1.0..1.0)]
                })
                .collect();
            for c in 1..=3 {
                let fit = kmeans_cluster(&points, c, seed, 10).unwrap();
                let opt = brute_force(&points, c);
                assert!((fit.cost - opt).abs() <= 1e-9, "seed {seed} c {c}: {} vs {opt}", fit.cost);
            }
        }
    }

    #[test]
    fn never_beats_exhaustive_search() {
        for seed in 0..25u64 {
            let mut rng = stream(seed, &[1]);
            let points: Vec<Vec<f64>> = (0..6)
                .map(|_| vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)])
                .collect();
            for c in 1..=3 {
                let fit = kmeans_cluster(&points, c, seed, 10).unwrap();
                assert!(fit.cost >= brute_force(&points, c) - 1e-9);
                // Lloyd fixed point: every point sits with its nearest centroid.
                for (p, &a) in points.iter().zip(&fit.assignment) {
                    assert_eq!(nearest(p, &fit.centroids).0, a);
                }
            }
        }
    }

    #[test]
    fn labels_are_canonical() {
        let points = vec![vec![10.0], vec![0.0], vec![10.1], vec![0.1], vec![5.0]];
        let fit = kmeans_cluster(&points, 3, 1, 10).unwrap();
        assert_eq!(fit.assignment, vec![0, 1, 0, 1, 2]);
        assert_eq!(fit.cluster_sizes(), vec![2, 2, 1]);
    }

    #[test]
    fn lloyd_cost_never_increases() {
        let mut rng = stream(3, &[]);
        let points: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let init = points[..4].to_vec();
        let (_, history) = lloyd(&points, init, 100).unwrap();
        for w in history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn identical_points() {
        let points = vec![vec![1.0, 1.0]; 5];
        let fit = kmeans_cluster(&points, 2, 0, 3).unwrap();
        assert_eq!(fit.cost, 0.0);
        assert_eq!(fit.assignment, vec![0; 5]);
    }

    #[test]
    fn argument_checks() {
        let points = vec![vec![1.0], vec![2.0]];
        assert!(kmeans_cluster(&points, 0, 0, 1).is_err());
        assert!(kmeans_cluster(&points, 3, 0, 1).is_err());
        assert!(kmeans_cluster(&[vec![1.0], vec![1.0, 2.0]], 1, 0, 1).is_err());
    }

    #[test]
    fn reproducible_for_seed() {
        let mut rng = stream(11, &[]);
        let points: Vec<Vec<f64>> = (0..30).map(|_| vec![rng.random::<f64>()]).collect();
        let a = kmeans_cluster(&points, 4, 5, 10).unwrap();
        let b = kmeans_cluster(&points, 4, 5, 10).unwrap();
        assert_eq!(a.assignment, b.assignment);
        assert_eq!(a.cost, b.cost);
    }
}
