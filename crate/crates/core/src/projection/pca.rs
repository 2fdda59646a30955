use nalgebra::{DMatrix, SymmetricEigen};

use super::{Projection, ProjectionError, Result};
use crate::embedding::EmbeddingStore;

/// Eigenvalues at or below this fraction of the largest are treated as zero
/// when recovering components from the Gram matrix.
const RANK_TOLERANCE: f64 = 1e-12;

/// A fitted principal-component basis.
#[derive(Debug, Clone)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// `d` unit-length components, each of the input width, ordered by
    /// descending variance. Each component's largest-magnitude entry is positive.
    pub components: Vec<Vec<f64>>,
    /// Variance along each component.
    pub variances: Vec<f64>,
    pub total_variance: f64,
}

impl Pca {
    pub fn explained_variance_ratio(&self) -> Vec<f64> {
        self.variances
            .iter()
            .map(|v| if self.total_variance > 0.0 { v / self.total_variance } else { 0.0 })
            .collect()
    }

    pub fn transform(&self, store: &EmbeddingStore) -> Result<Projection> {
        if store.dim() != self.mean.len() {
            return Err(ProjectionError::DimMismatch(format!(
                "basis width {}, store width {}",
                self.mean.len(),
                store.dim()
            )));
        }
        let d = self.components.len();
        let mut coords = Vec::with_capacity(store.count() * d);
        for row in store.rows() {
            for c in &self.components {
                let mut s = 0.0;
                for ((&x, m), w) in row.iter().zip(&self.mean).zip(c) {
                    s += (x as f64 - m) * w;
                }
                coords.push(s);
            }
        }
        Ok(Projection { ids: store.ids().to_vec(), dim: d, coords })
    }
}

fn fix_sign(v: &mut [f64]) {
    let mut best = 0usize;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Fits the top-`d` principal components of the mean-centred rows.
///
/// Uses the `dim x dim` covariance when `count >= dim` and the `count x count`
/// Gram matrix otherwise; both give the same components.
pub fn fit_pca(store: &EmbeddingStore, d: usize) -> Result<Pca> {
    let (n, dim) = (store.count(), store.dim());
    if n < 2 {
        return Err(ProjectionError::DegenerateInput);
    }
    if d == 0 || d > dim {
        return Err(ProjectionError::InvalidConfig(format!("cannot take {d} components of width {dim}")));
    }
    let mut mean = vec![0.0; dim];
    for row in store.rows() {
        for (m, &x) in mean.iter_mut().zip(row) {
            *m += x as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centred = DMatrix::from_fn(n, dim, |i, j| store.row(i)[j] as f64 - mean[j]);
    let denom = (n - 1) as f64;

    let (values, vectors): (Vec<f64>, Vec<Vec<f64>>) = if n >= dim {
        let cov = (centred.transpose() * &centred) / denom;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        order
            .iter()
            .take(d)
            .map(|&k| (eig.eigenvalues[k].max(0.0), eig.eigenvectors.column(k).iter().copied().collect()))
            .unzip()
    } else {
        let gram = (&centred * centred.transpose()) / denom;
        let eig = SymmetricEigen::new(gram);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let top = eig.eigenvalues[order[0]].max(0.0);
        order
            .iter()
            .take(d)
            .map(|&k| {
                let lambda = eig.eigenvalues[k];
                if lambda <= RANK_TOLERANCE * top || lambda <= 0.0 {
                    // No variance left: direction is arbitrary, coordinates are zero.
                    return (0.0, vec![0.0; dim]);
                }
                let u = eig.eigenvectors.column(k);
                let mut v: Vec<f64> = (0..dim).map(|j| centred.column(j).dot(&u)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.iter_mut().for_each(|x| *x /= norm);
                (lambda, v)
            })
            .unzip()
    };
    let mut components = vectors;
    components.iter_mut().for_each(|c| fix_sign(c));
    let total_variance = (0..dim).map(|j| centred.column(j).norm_squared()).sum::<f64>() / denom;
    Ok(Pca { mean, components, variances: values, total_variance })
}

/// Projects onto the top-`d` principal components.
pub fn pca(store: &EmbeddingStore, d: usize) -> Result<Projection> {
    fit_pca(store, d)?.transform(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_store(n: usize, dim: usize, seed: u64) -> EmbeddingStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f32> = (0..n * dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        EmbeddingStore::from_rows(dim, data).unwrap()
    }

    #[test]
    fn line_in_768d_keeps_pairwise_distances() {
        let dim = 768;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dir: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        let offset: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let ts = [-2.0, -0.5, 0.0, 0.25, 1.0, 3.0];
        let mut data = Vec::new();
        for &t in &ts {
            data.extend((0..dim).map(|j| (offset[j] + t * dir[j] / norm) as f32));
        }
        let store = EmbeddingStore::from_rows(dim, data).unwrap();
        let p = pca(&store, 1).unwrap();
        for i in 0..ts.len() {
            for j in 0..ts.len() {
                let high = super::super::sq_dist_f32(store.row(i), store.row(j)).sqrt();
                let low = (p.point(i)[0] - p.point(j)[0]).abs();
                assert!((high - low).abs() < 1e-6, "{i},{j}: {high} vs {low}");
            }
        }
    }

    #[test]
    fn isotropic_gaussian_explained_ratio() {
        // Sample-statistics oracle: for N(0, I_dim) every direction carries
        // 1/dim of the variance, so two components carry about 2/dim. With
        // n >> dim the top sample eigenvalues exceed 1 by ~(1+sqrt(dim/n))^2.
        let dim = 16;
        let store = gaussian_store(4000, dim, 5);
        let ratio: f64 = fit_pca(&store, 2).unwrap().explained_variance_ratio().iter().sum();
        let expected = 2.0 / dim as f64;
        assert!((ratio - expected).abs() <= 0.5 * expected, "ratio {ratio}");
    }

    #[test]
    fn components_ordered_signed_and_centred() {
        let store = gaussian_store(300, 8, 9);
        let fit = fit_pca(&store, 3).unwrap();
        assert!(fit.variances.windows(2).all(|w| w[0] >= w[1]));
        for c in &fit.components {
            let max = c.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            assert!(max > 0.0);
            assert!((c.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let p = fit.transform(&store).unwrap();
        for k in 0..3 {
            let mean: f64 = (0..p.len()).map(|i| p.point(i)[k]).sum::<f64>() / p.len() as f64;
            assert!(mean.abs() < 1e-9, "component {k} mean {mean}");
        }
    }

    #[test]
    fn covariance_and_gram_routes_agree() {
        // 10 points in 12 dims uses the Gram route; padding to 20 points by
        // duplicating keeps the same span and switches to the covariance route.
        let small = gaussian_store(10, 12, 3);
        let mut data = small.data().to_vec();
        data.extend_from_slice(small.data());
        let big = EmbeddingStore::from_rows(12, data).unwrap();
        let a = fit_pca(&small, 2).unwrap();
        let b = fit_pca(&big, 2).unwrap();
        for (ca, cb) in a.components.iter().zip(&b.components) {
            for (x, y) in ca.iter().zip(cb) {
                assert!((x - y).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn duplicates_share_coordinates() {
        let base = gaussian_store(5, 4, 2);
        let mut data = base.data().to_vec();
        data.extend_from_slice(base.row(1));
        let store = EmbeddingStore::from_rows(4, data).unwrap();
        let p = pca(&store, 2).unwrap();
        assert_eq!(p.point(1), p.point(5));
    }

    #[test]
    fn degenerate_input() {
        let one = EmbeddingStore::from_rows(3, vec![1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(pca(&one, 1), Err(ProjectionError::DegenerateInput)));
        let two = EmbeddingStore::from_rows(3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        assert!(pca(&two, 4).is_err());
    }
}
