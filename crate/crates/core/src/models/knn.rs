//! Brute-force k-nearest-neighbour regression.

use super::{Distance, Standardizer};

#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    pub(crate) scaler: Standardizer,
    /// Standardised training rows, row-major.
    pub(crate) points: Vec<f64>,
    pub(crate) labels: Vec<f64>,
    pub(crate) k: usize,
    pub(crate) distance: Distance,
}

impl KnnModel {
    pub(crate) fn fit(matrix: &[f64], labels: &[f64], n_features: usize, k: usize, distance: Distance) -> Self {
        let scaler = Standardizer::fit(matrix, n_features);
        let mut points = vec![0.0; matrix.len()];
        for (row, out) in matrix.chunks_exact(n_features).zip(points.chunks_exact_mut(n_features)) {
            scaler.transform_into(row, out);
        }
        Self {
            scaler,
            points,
            labels: labels.to_vec(),
            k,
            distance,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn distance(&self) -> Distance {
        self.distance
    }

    /// Mean label of the `k` closest points; equal distances favour the
    /// lower training index.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let q = self.scaler.transform(x);
        let d = q.len();
        // (distance, index) sorted ascending, at most k long
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(self.k + 1);
        for (i, p) in self.points.chunks_exact(d).enumerate() {
            let dist = match self.distance {
                Distance::Manhattan => p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum::<f64>(),
                Distance::Euclidean => p.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(),
            };
            if best.len() == self.k && dist >= best[self.k - 1].0 {
                continue;
            }
            let pos = best.partition_point(|&(bd, _)| bd <= dist);
            best.insert(pos, (dist, i));
            best.truncate(self.k);
        }
        best.iter().map(|&(_, i)| self.labels[i]).sum::<f64>() / best.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_distance_table() {
        let m = KnnModel::fit(&[0.0, 1.0, 100.0], &[0.0, 10.0, 50.0], 1, 2, Distance::Euclidean);
        assert_eq!(m.predict(&[0.0]), 5.0);
    }

    #[test]
    fn ties_prefer_lower_index() {
        // query at 1 is equidistant from points 0 and 2
        let m = KnnModel::fit(&[0.0, 2.0, 1.0, 9.0], &[1.0, 3.0, 5.0, 7.0], 1, 2, Distance::Manhattan);
        assert_eq!(m.predict(&[1.0]), (5.0 + 1.0) / 2.0);
    }

    #[test]
    fn full_k_is_global_mean() {
        let m = KnnModel::fit(&[0.0, 1.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 6.0], 1, 4, Distance::Euclidean);
        for q in [-10.0, 0.5, 100.0] {
            assert_eq!(m.predict(&[q]), 3.0);
        }
    }
}
