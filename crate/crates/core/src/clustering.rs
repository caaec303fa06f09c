//! k-means with silhouette-based selection of the number of failure regions.

use std::cmp::Ordering;

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution, Phase};

pub const KMEANS_MAX_ITERS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringResult {
    pub labels: Vec<usize>,
    pub centroids: Vec<DVector<f64>>,
    /// Centroid silhouette; `None` when there is a single cluster.
    pub mean_silhouette: Option<f64>,
    pub n_clusters: usize,
}

impl ClusteringResult {
    fn single(points: &[DVector<f64>]) -> Self {
        Self {
            labels: vec![0; points.len()],
            centroids: vec![mean(points.iter())],
            mean_silhouette: None,
            n_clusters: 1,
        }
    }

    /// Member indices of every cluster, in label order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_clusters];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.members().iter().map(Vec::len).collect()
    }
}

fn mean<'a>(points: impl Iterator<Item = &'a DVector<f64>>) -> DVector<f64> {
    let mut n = 0usize;
    let mut acc: Option<DVector<f64>> = None;
    for p in points {
        n += 1;
        match acc.as_mut() {
            Some(a) => *a += p,
            None => acc = Some(p.clone()),
        }
    }
    acc.map(|a| a / n as f64).expect("mean of an empty cluster")
}

fn nearest(p: &DVector<f64>, centroids: &[DVector<f64>]) -> (usize, f64) {
    centroids
        .iter()
        .enumerate()
        .map(|(j, c)| (j, (p - c).norm_squared()))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

fn plus_plus_seeds<R: Rng + ?Sized>(points: &[DVector<f64>], k: usize, rng: &mut R) -> Vec<DVector<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| (p - &centroids[0]).norm_squared()).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &v) in d2.iter().enumerate() {
                if u < v {
                    chosen = i;
                    break;
                }
                u -= v;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = points[pick].clone();
        for (slot, p) in d2.iter_mut().zip(points) {
            *slot = slot.min((p - &c).norm_squared());
        }
        centroids.push(c);
    }
    centroids
}

/// Lloyd's algorithm with k-means++ seeding. Stops when assignments no longer
/// change or after [`KMEANS_MAX_ITERS`]; an emptied cluster is reseeded at the
/// point farthest from its centroid.
pub fn kmeans<R: Rng + ?Sized>(points: &[DVector<f64>], k: usize, rng: &mut R) -> Result<ClusteringResult> {
    if points.is_empty() {
        return Err(Error::contract("kmeans needs at least one point"));
    }
    if k == 0 || k > points.len() {
        return Err(Error::contract(format!("kmeans k = {k} outside 1..={}", points.len())));
    }
    if k == 1 {
        return Ok(ClusteringResult::single(points));
    }
    let mut centroids = plus_plus_seeds(points, k, rng);
    let mut labels = vec![usize::MAX; points.len()];
    for _ in 0..KMEANS_MAX_ITERS {
        let mut changed = false;
        for (l, p) in labels.iter_mut().zip(points) {
            let (j, _) = nearest(p, &centroids);
            if *l != j {
                *l = j;
                changed = true;
            }
        }
        repair_empty(points, &mut labels, &centroids, k);
        for (j, c) in centroids.iter_mut().enumerate() {
            *c = mean(points.iter().zip(&labels).filter(|(_, &l)| l == j).map(|(p, _)| p));
        }
        if !changed {
            break;
        }
    }
    let mean_silhouette = Some(centroid_silhouette(points, &labels, &centroids));
    Ok(ClusteringResult {
        labels,
        centroids,
        mean_silhouette,
        n_clusters: k,
    })
}

fn repair_empty(points: &[DVector<f64>], labels: &mut [usize], centroids: &[DVector<f64>], k: usize) {
    loop {
        let mut sizes = vec![0usize; k];
        for &l in labels.iter() {
            sizes[l] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let far = points
            .iter()
            .zip(labels.iter())
            .enumerate()
            .filter(|(_, (_, &l))| sizes[l] > 1)
            .map(|(i, (p, &l))| (i, (p - &centroids[l]).norm_squared()))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal))
            .map(|(i, _)| i)
            .expect("k <= n leaves a cluster with two or more points");
        labels[far] = empty;
    }
}

fn centroid_silhouette(points: &[DVector<f64>], labels: &[usize], centroids: &[DVector<f64>]) -> f64 {
    let total: f64 = points
        .iter()
        .zip(labels)
        .map(|(p, &l)| {
            let a = (p - &centroids[l]).norm();
            let b = centroids
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != l)
                .map(|(_, c)| (p - c).norm())
                .fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m > 0.0 {
                (b - a) / m
            } else {
                0.0
            }
        })
        .sum();
    total / points.len() as f64
}

/// Mean of (b − a)/max(a, b) with a the distance to the point's own centroid
/// and b the distance to the nearest other centroid. O(N·M·D).
pub fn silhouette_score(points: &[DVector<f64>], labels: &[usize]) -> Result<f64> {
    if points.len() != labels.len() {
        return Err(Error::contract("labels and points differ in length"));
    }
    let m = labels.iter().copied().max().map_or(0, |l| l + 1);
    if m < 2 {
        return Err(Error::contract("silhouette needs at least two clusters"));
    }
    let mut centroids = Vec::with_capacity(m);
    for j in 0..m {
        let members: Vec<_> = points.iter().zip(labels).filter(|(_, &l)| l == j).map(|(p, _)| p).collect();
        if members.is_empty() {
            return Err(Error::contract(format!("cluster {j} is empty")));
        }
        centroids.push(mean(members.into_iter()));
    }
    Ok(centroid_silhouette(points, labels, &centroids))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub k_max: usize,
    pub accept_threshold: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            k_max: 8,
            accept_threshold: 0.25,
        }
    }
}

fn lexicographic(a: &DVector<f64>, b: &DVector<f64>) -> Ordering {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Runs k-means for k = 2..=min(k_max, N′) and keeps the k with the largest
/// silhouette; a best score under `accept_threshold` yields one cluster.
///
/// Points are put in a canonical order first, so the result does not depend on
/// the input order beyond label names. The run for each k draws from its own
/// substream of `(seed, iteration)`.
pub fn select_clusters(
    points: &[DVector<f64>],
    cfg: &ClusterConfig,
    seed: u64,
    iteration: u64,
    exec: Execution,
) -> Result<ClusteringResult> {
    if points.is_empty() {
        return Err(Error::contract("cannot cluster an empty point set"));
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| lexicographic(&points[i], &points[j]));
    let sorted: Vec<DVector<f64>> = order.iter().map(|&i| points[i].clone()).collect();

    let k_hi = cfg.k_max.min(sorted.len());
    let candidates: Vec<Result<ClusteringResult>> = if k_hi >= 2 {
        exec::map_indexed(exec, k_hi - 1, |i| {
            let k = i + 2;
            let mut rng = exec::substream(seed, Phase::Cluster, iteration, k as u64);
            kmeans(&sorted, k, &mut rng)
        })
    } else {
        Vec::new()
    };
    let mut best: Option<ClusteringResult> = None;
    for c in candidates {
        let c = c?;
        let better = match &best {
            None => true,
            Some(b) => c.mean_silhouette > b.mean_silhouette,
        };
        if better {
            best = Some(c);
        }
    }
    let chosen = match best {
        Some(b) if b.mean_silhouette.is_some_and(|s| s >= cfg.accept_threshold) => b,
        _ => ClusteringResult::single(&sorted),
    };

    let mut labels = vec![0; points.len()];
    for (pos, &orig) in order.iter().enumerate() {
        labels[orig] = chosen.labels[pos];
    }
    Ok(ClusteringResult { labels, ..chosen })
}

/// Strategy for splitting failure points into regions.
pub trait Clusterer {
    fn cluster(&self, points: &[DVector<f64>]) -> Result<ClusteringResult>;
}

/// Always one cluster.
#[derive(Debug, Clone, Copy, Default)]
pub struct SingleCluster;

impl Clusterer for SingleCluster {
    fn cluster(&self, points: &[DVector<f64>]) -> Result<ClusteringResult> {
        if points.is_empty() {
            return Err(Error::contract("cannot cluster an empty point set"));
        }
        Ok(ClusteringResult::single(points))
    }
}

/// [`select_clusters`] bound to a seed and iteration.
#[derive(Debug, Clone, Copy)]
pub struct SilhouetteClusterer {
    pub config: ClusterConfig,
    pub seed: u64,
    pub iteration: u64,
    pub execution: Execution,
}

impl Clusterer for SilhouetteClusterer {
    fn cluster(&self, points: &[DVector<f64>]) -> Result<ClusteringResult> {
        select_clusters(points, &self.config, self.seed, self.iteration, self.execution)
    }
}
