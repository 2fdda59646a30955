use super::{sq_dist, sq_dist_f32, Projection, ProjectionError, Result};
use crate::embedding::EmbeddingStore;
use crate::par::prelude::*;

fn order_by<F: Fn(usize) -> f64>(n: usize, i: usize, dist: F) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).filter(|&j| j != i).collect();
    let d: Vec<f64> = (0..n).map(&dist).collect();
    idx.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
    idx
}

/// Trustworthiness of `low` as an embedding of `high` for neighbourhood
/// size `k`, with Euclidean distances in both spaces. 1.0 means no point
/// gains a low-dimensional neighbour that was not a high-dimensional one.
pub fn trustworthiness(high: &EmbeddingStore, low: &Projection, k: usize) -> Result<f64> {
    let n = high.count();
    if low.len() != n {
        return Err(ProjectionError::DimMismatch(format!("{} projected points for {n} inputs", low.len())));
    }
    if k == 0 || 2 * n < 3 * k + 2 {
        return Err(ProjectionError::TooFewPoints { count: n, n_neighbors: k });
    }
    let penalty: u64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let high_order = order_by(n, i, |j| sq_dist_f32(high.row(i), high.row(j)));
            let mut rank = vec![0usize; n];
            for (r, &j) in high_order.iter().enumerate() {
                rank[j] = r + 1;
            }
            let low_order = order_by(n, i, |j| sq_dist(low.point(i), low.point(j)));
            low_order[..k].iter().map(|&j| rank[j].saturating_sub(k) as u64).sum::<u64>()
        })
        .sum();
    let (n, k) = (n as f64, k as f64);
    Ok(1.0 - 2.0 / (n * k * (2.0 * n - 3.0 * k - 1.0)) * penalty as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (EmbeddingStore, Projection) {
        let n = 30;
        let mut high = Vec::new();
        let mut low = Vec::new();
        for i in 0..n {
            let t = i as f64;
            let row = [(0.37 * t).sin(), (0.91 * t).cos(), (1.7 * t + 0.2).sin(), (0.13 * t).cos()];
            high.extend(row.iter().map(|&v| v as f32));
            low.extend([row[0] as f32 as f64, row[1] as f32 as f64]);
        }
        let store = EmbeddingStore::from_rows(4, high).unwrap();
        let proj = Projection { ids: store.ids().to_vec(), dim: 2, coords: low };
        (store, proj)
    }

    #[test]
    fn matches_reference_implementation() {
        // sklearn.manifold.trustworthiness on the same float32 points, frozen.
        let (s, p) = fixture();
        let t = trustworthiness(&s, &p, 5).unwrap();
        assert!((t - TRUST_REFERENCE).abs() < 1e-12, "{t}");
    }

    const TRUST_REFERENCE: f64 = 0.833939393939394;

    #[test]
    fn identity_is_perfect() {
        let (s, _) = fixture();
        let p = Projection {
            ids: s.ids().to_vec(),
            dim: 4,
            coords: s.data().iter().map(|&v| v as f64).collect(),
        };
        assert_eq!(trustworthiness(&s, &p, 5).unwrap(), 1.0);
    }

    #[test]
    fn rejects_large_k_and_mismatch() {
        let (s, p) = fixture();
        assert!(trustworthiness(&s, &p, 20).is_err());
        assert!(trustworthiness(&s, &p, 0).is_err());
        let short = Projection { ids: vec!["0".into()], dim: 2, coords: vec![0.0, 0.0] };
        assert!(trustworthiness(&s, &short, 5).is_err());
    }
}
