//! Lloyd's k-means with seeded k-means++ initialisation and restarts.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub inertia: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centre) in centroids.iter().enumerate() {
        let d = sq_dist(point, centre);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_init(data: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![data[rng.random_range(0..data.len())].clone()];
    let mut d2: Vec<f64> = data.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = data.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..data.len())
        };
        centroids.push(data[pick].clone());
        for (i, p) in data.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

fn lloyd(data: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, max_iter: usize) -> KMeansResult {
    let dim = data[0].len();
    let k = centroids.len();
    let mut labels = vec![usize::MAX; data.len()];
    for _ in 0..max_iter {
        let mut changed = false;
        for (i, p) in data.iter().enumerate() {
            let (c, _) = nearest(p, &centroids);
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in data.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            // An emptied cluster keeps its previous centre.
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    let inertia = data.iter().zip(&labels).map(|(p, &l)| sq_dist(p, &centroids[l])).sum();
    KMeansResult { centroids, labels, inertia }
}

/// Best-inertia clustering over `restarts` k-means++ initialisations drawn
/// from one seeded stream. Same inputs and seed give the same result.
pub fn kmeans(data: &[Vec<f64>], k: usize, restarts: usize, max_iter: usize, seed: u64) -> KMeansResult {
    assert!(!data.is_empty() && k >= 1, "k-means needs data and k >= 1");
    let k = k.min(data.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..restarts.max(1) {
        let init = plus_plus_init(data, k, &mut rng);
        let run = lloyd(data, init, max_iter);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    best.expect("at least one restart")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> Vec<Vec<f64>> {
        let mut data = Vec::new();
        for (cx, cy) in [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)] {
            for i in 0..20 {
                let a = i as f64 * 0.7;
                data.push(vec![cx + 0.3 * a.cos(), cy + 0.3 * a.sin()]);
            }
        }
        data
    }

    #[test]
    fn separates_blobs() {
        let r = kmeans(&blobs(), 3, 5, 100, 7);
        for block in r.labels.chunks(20) {
            assert!(block.iter().all(|&l| l == block[0]));
        }
        let mut firsts: Vec<usize> = r.labels.chunks(20).map(|b| b[0]).collect();
        firsts.sort();
        assert_eq!(firsts, vec![0, 1, 2]);
    }

    #[test]
    fn deterministic_for_seed() {
        let a = kmeans(&blobs(), 3, 20, 100, 42);
        let b = kmeans(&blobs(), 3, 20, 100, 42);
        assert_eq!(a, b);
    }

    #[test]
    fn identical_points() {
        let data = vec![vec![1.0, 1.0]; 10];
        let r = kmeans(&data, 3, 3, 10, 0);
        assert_eq!(r.inertia, 0.0);
    }
}
