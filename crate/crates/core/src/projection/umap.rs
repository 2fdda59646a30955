use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{pca, Projection, ProjectionConfig, ProjectionError, Result};
use crate::embedding::{dot, l2_norm, EmbeddingStore};
use crate::par::prelude::*;

const SMOOTH_ITERATIONS: usize = 64;
const SMOOTH_TOLERANCE: f64 = 1e-5;
const MIN_K_DIST_SCALE: f64 = 1e-3;
const NEGATIVE_SAMPLE_RATE: usize = 5;
const GRADIENT_CLIP: f64 = 4.0;
const INITIAL_ALPHA: f64 = 1.0;
const SPREAD: f64 = 1.0;
const INIT_SCALE: f64 = 10.0;
const INIT_NOISE: f64 = 1e-4;

/// Exact k nearest neighbours under cosine distance, self excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnGraph {
    pub k: usize,
    /// Row-major `n * k`, nearest first; equal distances keep the lower index.
    pub indices: Vec<usize>,
    pub dists: Vec<f64>,
}

impl KnnGraph {
    pub fn len(&self) -> usize {
        self.indices.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn neighbours(&self, i: usize) -> &[usize] {
        &self.indices[i * self.k..(i + 1) * self.k]
    }

    pub fn distances(&self, i: usize) -> &[f64] {
        &self.dists[i * self.k..(i + 1) * self.k]
    }
}

pub fn knn_graph(store: &EmbeddingStore, k: usize) -> Result<KnnGraph> {
    let n = store.count();
    if k == 0 || k >= n {
        return Err(ProjectionError::TooFewPoints { count: n, n_neighbors: k });
    }
    let norms: Vec<f64> = store.rows().map(|r| l2_norm(r).max(f64::MIN_POSITIVE)).collect();
    let rows: Vec<(Vec<usize>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = store.row(i);
            let mut all: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| ((1.0 - dot(xi, store.row(j)) / (norms[i] * norms[j])).max(0.0), j))
                .collect();
            all.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            all.truncate(k);
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            (all.iter().map(|p| p.1).collect(), all.iter().map(|p| p.0).collect())
        })
        .collect();
    let mut indices = Vec::with_capacity(n * k);
    let mut dists = Vec::with_capacity(n * k);
    for (idx, d) in rows {
        indices.extend(idx);
        dists.extend(d);
    }
    Ok(KnnGraph { k, indices, dists })
}

/// Per-point bandwidth `sigma` and local offset `rho` such that
/// `sum_j exp(-(d_ij - rho_i) / sigma_i) = log2(k)` over the neighbours.
pub fn smooth_knn(graph: &KnnGraph) -> (Vec<f64>, Vec<f64>) {
    let target = (graph.k as f64).log2();
    let mean_all = graph.dists.iter().sum::<f64>() / graph.dists.len().max(1) as f64;
    (0..graph.len())
        .map(|i| {
            let d = graph.distances(i);
            let rho = d.iter().copied().find(|&x| x > 0.0).unwrap_or(0.0);
            let (mut lo, mut hi, mut mid) = (0.0f64, f64::INFINITY, 1.0f64);
            for _ in 0..SMOOTH_ITERATIONS {
                let psum: f64 = d
                    .iter()
                    .map(|&x| {
                        let e = x - rho;
                        if e > 0.0 {
                            (-e / mid).exp()
                        } else {
                            1.0
                        }
                    })
                    .sum();
                if (psum - target).abs() < SMOOTH_TOLERANCE {
                    break;
                }
                if psum > target {
                    hi = mid;
                    mid = (lo + hi) / 2.0;
                } else {
                    lo = mid;
                    mid = if hi.is_infinite() { mid * 2.0 } else { (lo + hi) / 2.0 };
                }
            }
            let mean_i = d.iter().sum::<f64>() / d.len() as f64;
            let floor = if rho > 0.0 { MIN_K_DIST_SCALE * mean_i } else { MIN_K_DIST_SCALE * mean_all };
            (mid.max(floor), rho)
        })
        .unzip()
}

/// Symmetric fuzzy membership graph, both directions of every edge listed.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyGraph {
    pub n: usize,
    /// `(i, j, w)` sorted by `(i, j)`, `w` in (0, 1].
    pub edges: Vec<(usize, usize, f64)>,
}

/// Directed memberships `exp(-(d - rho) / sigma)` combined by the fuzzy
/// union `a + b - ab`.
pub fn fuzzy_graph(graph: &KnnGraph) -> FuzzyGraph {
    let (sigmas, rhos) = smooth_knn(graph);
    let mut directed: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for i in 0..graph.len() {
        for (&j, &d) in graph.neighbours(i).iter().zip(graph.distances(i)) {
            let w = (-((d - rhos[i]).max(0.0)) / sigmas[i]).exp();
            directed.insert((i, j), w);
        }
    }
    let mut sym: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (&(i, j), &w) in &directed {
        let wt = directed.get(&(j, i)).copied().unwrap_or(0.0);
        let v = w + wt - w * wt;
        if v > 0.0 {
            sym.insert((i, j), v);
            sym.insert((j, i), v);
        }
    }
    FuzzyGraph { n: graph.len(), edges: sym.into_iter().map(|((i, j), w)| (i, j, w)).collect() }
}

fn curve(a: f64, b: f64, x: f64) -> f64 {
    1.0 / (1.0 + a * x.powf(2.0 * b))
}

/// Least-squares fit of `1 / (1 + a x^(2b))` to the offset exponential
/// target on 300 points over `[0, 3 * spread]`, by Levenberg-Marquardt from
/// `(1, 1)`.
pub fn fit_ab(min_dist: f64) -> (f64, f64) {
    let n = 300;
    let xs: Vec<f64> = (0..n).map(|i| 3.0 * SPREAD * i as f64 / (n - 1) as f64).collect();
    let ys: Vec<f64> =
        xs.iter().map(|&x| if x < min_dist { 1.0 } else { (-(x - min_dist) / SPREAD).exp() }).collect();
    let sse = |a: f64, b: f64| xs.iter().zip(&ys).map(|(&x, &y)| (curve(a, b, x) - y).powi(2)).sum::<f64>();

    let (mut a, mut b) = (1.0f64, 1.0f64);
    let mut lambda = 1e-3;
    let mut cost = sse(a, b);
    for _ in 0..500 {
        // Normal equations J^T J and J^T r for residual r = f - y.
        let (mut jaa, mut jab, mut jbb, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&x, &y) in xs.iter().zip(&ys) {
            let (da, db) = if x > 0.0 {
                let p = x.powf(2.0 * b);
                let q = (1.0 + a * p).powi(2);
                (-p / q, -a * p * 2.0 * x.ln() / q)
            } else {
                (0.0, 0.0)
            };
            let r = curve(a, b, x) - y;
            jaa += da * da;
            jab += da * db;
            jbb += db * db;
            ga += da * r;
            gb += db * r;
        }
        let mut improved = false;
        while lambda < 1e16 {
            let (m11, m22) = (jaa * (1.0 + lambda), jbb * (1.0 + lambda));
            let det = m11 * m22 - jab * jab;
            let sa = -(m22 * ga - jab * gb) / det;
            let sb = -(m11 * gb - jab * ga) / det;
            let (na, nb) = (a + sa, b + sb);
            let c = sse(na, nb);
            if c.is_finite() && c <= cost {
                let done = (cost - c) <= 1e-15 * cost.max(1e-300) && sa.abs() + sb.abs() < 1e-14;
                a = na;
                b = nb;
                cost = c;
                lambda = (lambda / 10.0).max(1e-12);
                improved = !done;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (a, b)
}

fn initial_layout(store: &EmbeddingStore, d: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let n = store.count();
    let mut coords = if store.dim() >= d {
        pca(store, d)?.coords
    } else {
        vec![0.0; n * d]
    };
    for axis in 0..d {
        let (lo, hi) = (0..n)
            .map(|i| coords[i * d + axis])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
        let range = hi - lo;
        for i in 0..n {
            let c = &mut coords[i * d + axis];
            *c = if range > 0.0 { INIT_SCALE * (*c - lo) / range } else { 0.0 };
            *c += INIT_NOISE * rng.random_range(-1.0..1.0);
        }
    }
    Ok(coords)
}

fn clip(v: f64) -> f64 {
    v.clamp(-GRADIENT_CLIP, GRADIENT_CLIP)
}

/// Nonlinear layout: cosine k-NN graph, fuzzy union, PCA initialisation,
/// then seeded stochastic attraction/repulsion epochs.
pub fn umap(store: &EmbeddingStore, cfg: &ProjectionConfig) -> Result<Projection> {
    cfg.validate()?;
    let n = store.count();
    if n < 2 {
        return Err(ProjectionError::DegenerateInput);
    }
    if cfg.n_neighbors >= n {
        return Err(ProjectionError::TooFewPoints { count: n, n_neighbors: cfg.n_neighbors });
    }
    let d = cfg.target_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let graph = fuzzy_graph(&knn_graph(store, cfg.n_neighbors)?);
    let mut emb = initial_layout(store, d, &mut rng)?;
    if cfg.epochs == 0 || graph.edges.is_empty() {
        return Ok(Projection { ids: store.ids().to_vec(), dim: d, coords: emb });
    }

    let (a, b) = fit_ab(cfg.min_dist);
    let max_w = graph.edges.iter().map(|e| e.2).fold(0.0, f64::max);
    let epochs = cfg.epochs as f64;
    let edges: Vec<(usize, usize, f64)> =
        graph.edges.iter().copied().filter(|e| e.2 >= max_w / epochs).collect();
    let per_sample: Vec<f64> = edges.iter().map(|e| max_w / e.2).collect();
    let per_negative: Vec<f64> = per_sample.iter().map(|e| e / NEGATIVE_SAMPLE_RATE as f64).collect();
    let mut next_sample = per_sample.clone();
    let mut next_negative = per_negative.clone();

    let mut alpha = INITIAL_ALPHA;
    let mut grad = vec![0.0; d];
    for epoch in 0..cfg.epochs {
        let e = epoch as f64;
        for (idx, &(j, k, _)) in edges.iter().enumerate() {
            if next_sample[idx] > e {
                continue;
            }
            let dist2: f64 = (0..d).map(|t| (emb[j * d + t] - emb[k * d + t]).powi(2)).sum();
            let coeff = if dist2 > 0.0 {
                -2.0 * a * b * dist2.powf(b - 1.0) / (a * dist2.powf(b) + 1.0)
            } else {
                0.0
            };
            for t in 0..d {
                let g = clip(coeff * (emb[j * d + t] - emb[k * d + t]));
                emb[j * d + t] += g * alpha;
                emb[k * d + t] -= g * alpha;
            }
            next_sample[idx] += per_sample[idx];

            let n_neg = ((e - next_negative[idx]) / per_negative[idx]).max(0.0) as usize;
            for _ in 0..n_neg {
                let k = rng.random_range(0..n);
                if k == j {
                    continue;
                }
                let dist2: f64 = (0..d).map(|t| (emb[j * d + t] - emb[k * d + t]).powi(2)).sum();
                if dist2 <= 0.0 {
                    continue;
                }
                let coeff = 2.0 * b / ((0.001 + dist2) * (a * dist2.powf(b) + 1.0));
                for (t, g) in grad.iter_mut().enumerate() {
                    *g = clip(coeff * (emb[j * d + t] - emb[k * d + t]));
                }
                for (t, g) in grad.iter().enumerate() {
                    emb[j * d + t] += g * alpha;
                }
            }
            next_negative[idx] += n_neg as f64 * per_negative[idx];
        }
        alpha = INITIAL_ALPHA * (1.0 - (epoch + 1) as f64 / epochs);
    }
    Ok(Projection { ids: store.ids().to_vec(), dim: d, coords: emb })
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from scipy.optimize.curve_fit on the same 300-point
    // grid, frozen.
    #[test]
    fn ab_matches_reference_fit() {
        for (md, ea, eb) in [
            (0.1, 1.5769434602697652, 0.8950608778515733),
            (0.0, 1.93280839734315, 0.7904949732233831),
            (0.5, 0.5830300203414425, 1.3341669924314914),
        ] {
            let (a, b) = fit_ab(md);
            assert!((a - ea).abs() < 1e-6 && (b - eb).abs() < 1e-6, "min_dist {md}: ({a}, {b})");
        }
    }

    fn ring(n: usize) -> EmbeddingStore {
        let mut data = Vec::new();
        for i in 0..n {
            let t = i as f32 / n as f32 * std::f32::consts::TAU;
            data.extend([t.cos(), t.sin(), 0.0]);
        }
        EmbeddingStore::from_rows(3, data).unwrap()
    }

    #[test]
    fn knn_on_ring_finds_adjacent_points() {
        let g = knn_graph(&ring(12), 2).unwrap();
        let mut nb = g.neighbours(0).to_vec();
        nb.sort();
        assert_eq!(nb, vec![1, 11]);
        assert!(g.distances(0)[0] <= g.distances(0)[1]);
        // Equidistant pair: lower index first.
        assert_eq!(g.neighbours(5), &[4, 6]);
    }

    #[test]
    fn smooth_knn_hits_target() {
        let g = knn_graph(&ring(40), 5).unwrap();
        let (sig, rho) = smooth_knn(&g);
        let target = 5f64.log2();
        for i in 0..g.len() {
            let s: f64 = g
                .distances(i)
                .iter()
                .map(|&x| (-((x - rho[i]).max(0.0)) / sig[i]).exp())
                .sum();
            assert!((s - target).abs() < 1e-4, "point {i}: {s}");
        }
    }

    #[test]
    fn fuzzy_graph_is_symmetric_and_bounded() {
        let g = fuzzy_graph(&knn_graph(&ring(20), 4).unwrap());
        let map: BTreeMap<(usize, usize), f64> = g.edges.iter().map(|&(i, j, w)| ((i, j), w)).collect();
        for (&(i, j), &w) in &map {
            assert!(w > 0.0 && w <= 1.0);
            assert_eq!(map[&(j, i)], w);
        }
    }

    #[test]
    fn too_few_points() {
        let s = ring(5);
        let cfg = ProjectionConfig { n_neighbors: 5, ..Default::default() };
        assert!(matches!(umap(&s, &cfg), Err(ProjectionError::TooFewPoints { .. })));
    }

    #[test]
    fn seeded_layout_is_reproducible() {
        let s = ring(30);
        let cfg = ProjectionConfig { n_neighbors: 5, epochs: 50, seed: 3, ..Default::default() };
        let a = umap(&s, &cfg).unwrap();
        let b = umap(&s, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.is_finite());
        assert_eq!(a.coords.len(), 30 * 3);
    }
}
