//! Ground metrics over spatial bins.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// How the metric was built.
#[derive(Debug, Clone, PartialEq)]
pub enum GeometryKind<T> {
    /// `h × w` lattice with unit spacing and `M_ij = ‖m_i - m_j‖^l`.
    /// Bins are numbered row-major: bin `r·w + c` sits at `(r, c)`.
    Grid { h: usize, w: usize, l: T },
    /// Squared shortest-path distances of a weighted undirected graph.
    Graph { edges: Vec<(usize, usize, T)> },
}

/// A `p × p` ground metric `M` together with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundGeometry<T> {
    p: usize,
    kind: GeometryKind<T>,
    metric: Vec<T>,
    /// Product of all divisors applied by [`GroundGeometry::normalize_by_median`].
    scale: T,
    normalized: bool,
}

impl<T: Scalar> GroundGeometry<T> {
    /// Wraps an arbitrary metric. It must be symmetric, finite, nonnegative,
    /// with zero diagonal.
    pub fn from_matrix(p: usize, metric: Vec<T>) -> Result<Self> {
        if p == 0 || metric.len() != p * p {
            return Err(Error::shape(format!(
                "metric of length {} is not {p}x{p}",
                metric.len()
            )));
        }
        for i in 0..p {
            if metric[i * p + i] != T::zero() {
                return Err(Error::domain(format!("metric diagonal entry {i} is not zero")));
            }
            for j in 0..p {
                let v = metric[i * p + j];
                if !v.is_finite() || v < T::zero() {
                    return Err(Error::domain(format!("metric entry ({i},{j}) = {v}")));
                }
                if v != metric[j * p + i] {
                    return Err(Error::domain(format!("metric not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(Self {
            p,
            kind: GeometryKind::Graph { edges: Vec::new() },
            metric,
            scale: T::one(),
            normalized: false,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn kind(&self) -> &GeometryKind<T> {
        &self.kind
    }

    pub fn metric(&self) -> &[T] {
        &self.metric
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.metric[i * self.p + j]
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Divisor applied to the raw metric (1 when never normalized).
    pub fn scale(&self) -> T {
        self.scale
    }

    /// Grid dimensions when the metric is a squared-Euclidean lattice metric,
    /// i.e. when `M_ij = (Δr² + Δc²)/scale` and the Gibbs kernel factorizes.
    pub fn separable_grid(&self) -> Option<(usize, usize)> {
        match self.kind {
            GeometryKind::Grid { h, w, l } if l == T::lit(2.0) => Some((h, w)),
            _ => None,
        }
    }

    /// Median of the strictly upper-triangular entries (mean of the two
    /// middle values for an even count).
    pub fn upper_median(&self) -> Result<T> {
        if self.p < 2 {
            return Err(Error::domain("median normalization needs p >= 2"));
        }
        let mut upper: Vec<T> = (0..self.p)
            .flat_map(|i| (i + 1..self.p).map(move |j| (i, j)))
            .map(|(i, j)| self.get(i, j))
            .collect();
        upper.sort_by(|a, b| a.partial_cmp(b).expect("finite metric"));
        let n = upper.len();
        Ok(if n % 2 == 1 {
            upper[n / 2]
        } else {
            (upper[n / 2 - 1] + upper[n / 2]) / T::lit(2.0)
        })
    }

    /// Divides `M` by the median of its strictly upper-triangular entries.
    ///
    /// Not idempotent in intent: a second call divides by the new median,
    /// which is 1, so the metric is unchanged but the flag stays set.
    pub fn normalize_by_median(mut self) -> Result<Self> {
        let med = self.upper_median()?;
        if !(med > T::zero()) {
            return Err(Error::domain("median of the ground metric is zero"));
        }
        for v in &mut self.metric {
            *v = *v / med;
        }
        self.scale = self.scale * med;
        self.normalized = true;
        Ok(self)
    }
}

/// Lattice metric `‖m_i - m_j‖^l` on an `h × w` grid with unit spacing.
pub fn ground_metric_grid<T: Scalar>(h: usize, w: usize, l: T) -> Result<GroundGeometry<T>> {
    if h == 0 || w == 0 {
        return Err(Error::domain("grid dimensions must be >= 1"));
    }
    if !(l > T::zero() && l <= T::lit(2.0)) {
        return Err(Error::domain(format!("grid exponent l must lie in (0, 2], got {l}")));
    }
    let p = h * w;
    let mut metric = vec![T::zero(); p * p];
    let half = l / T::lit(2.0);
    for i in 0..p {
        let (ri, ci) = (i / w, i % w);
        for j in 0..p {
            let (rj, cj) = (j / w, j % w);
            let sq = T::from_count(ri.abs_diff(rj).pow(2) + ci.abs_diff(cj).pow(2));
            metric[i * p + j] = if l == T::lit(2.0) { sq } else { sq.powf(half) };
        }
    }
    Ok(GroundGeometry {
        p,
        kind: GeometryKind::Grid { h, w, l },
        metric,
        scale: T::one(),
        normalized: false,
    })
}

/// Squared all-pairs shortest-path distances (Floyd–Warshall) of an
/// undirected graph given as `(i, j, weight)` edges with 0-based endpoints.
pub fn ground_metric_graph<T: Scalar>(edges: &[(usize, usize, T)], p: usize) -> Result<GroundGeometry<T>> {
    if p == 0 {
        return Err(Error::domain("graph needs at least one node"));
    }
    let mut d = vec![T::infinity(); p * p];
    for i in 0..p {
        d[i * p + i] = T::zero();
    }
    for &(i, j, wgt) in edges {
        if i >= p || j >= p {
            return Err(Error::domain(format!("edge ({i},{j}) outside {p} nodes")));
        }
        if !wgt.is_finite() || wgt < T::zero() {
            return Err(Error::domain(format!("edge ({i},{j}) has weight {wgt}")));
        }
        if i != j && wgt < d[i * p + j] {
            d[i * p + j] = wgt;
            d[j * p + i] = wgt;
        }
    }
    for k in 0..p {
        for i in 0..p {
            let dik = d[i * p + k];
            if !dik.is_finite() {
                continue;
            }
            for j in 0..p {
                let via = dik + d[k * p + j];
                if via < d[i * p + j] {
                    d[i * p + j] = via;
                }
            }
        }
    }
    if let Some(pos) = d.iter().position(|v| !v.is_finite()) {
        return Err(Error::domain(format!(
            "graph is disconnected: no path between nodes {} and {}",
            pos / p,
            pos % p
        )));
    }
    Ok(GroundGeometry {
        p,
        kind: GeometryKind::Graph {
            edges: edges.to_vec(),
        },
        metric: d.into_iter().map(|v| v * v).collect(),
        scale: T::one(),
        normalized: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_examples() {
        let g = ground_metric_grid(1, 2, 2.0f64).unwrap();
        assert_eq!(g.metric(), &[0.0, 1.0, 1.0, 0.0]);
        let g = ground_metric_grid(2, 2, 2.0f64).unwrap();
        let mut row0: Vec<f64> = (1..4).map(|j| g.get(0, j)).collect();
        row0.sort_by(f64::total_cmp);
        assert_eq!(row0, vec![1.0, 1.0, 2.0]);
        assert_eq!(g.separable_grid(), Some((2, 2)));
        let g = ground_metric_grid(3, 4, 1.0f64).unwrap();
        assert!((g.get(0, 11) - 13f64.sqrt()).abs() < 1e-15);
        assert_eq!(g.separable_grid(), None);
        for i in 0..12 {
            assert_eq!(g.get(i, i), 0.0);
            for j in 0..12 {
                assert_eq!(g.get(i, j), g.get(j, i));
            }
        }
        assert!(ground_metric_grid(2, 2, 2.5f64).is_err());
        assert!(ground_metric_grid(0, 2, 2.0f64).is_err());
    }

    #[test]
    fn graph_path() {
        let g = ground_metric_graph(&[(0, 1, 1.0f64), (1, 2, 1.0)], 3).unwrap();
        assert_eq!(g.metric(), &[0.0, 1.0, 4.0, 1.0, 0.0, 1.0, 4.0, 1.0, 0.0]);
        let single = ground_metric_graph::<f64>(&[], 1).unwrap();
        assert_eq!(single.metric(), &[0.0]);
        assert!(matches!(
            ground_metric_graph(&[(0, 1, 1.0f64)], 3),
            Err(Error::Domain(_))
        ));
        assert!(ground_metric_graph(&[(0, 1, -1.0f64)], 2).is_err());
    }

    /// Shortest path by enumerating every simple path.
    fn brute_shortest(adj: &[Vec<Option<f64>>], s: usize, t: usize) -> f64 {
        fn go(adj: &[Vec<Option<f64>>], at: usize, t: usize, seen: &mut Vec<bool>, acc: f64, best: &mut f64) {
            if at == t {
                *best = best.min(acc);
                return;
            }
            for nxt in 0..adj.len() {
                if let Some(w) = adj[at][nxt] {
                    if !seen[nxt] {
                        seen[nxt] = true;
                        go(adj, nxt, t, seen, acc + w, best);
                        seen[nxt] = false;
                    }
                }
            }
        }
        let mut seen = vec![false; adj.len()];
        seen[s] = true;
        let mut best = f64::INFINITY;
        go(adj, s, t, &mut seen, 0.0, &mut best);
        best
    }

    #[test]
    fn graph_matches_path_enumeration() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for p in 2..=6 {
            for _ in 0..10 {
                let mut edges = Vec::new();
                let mut adj = vec![vec![None; p]; p];
                // spanning chain keeps the graph connected
                for i in 1..p {
                    let w = rng.random_range(0.1..5.0);
                    edges.push((i - 1, i, w));
                }
                for i in 0..p {
                    for j in i + 1..p {
                        if rng.random_bool(0.4) {
                            edges.push((i, j, rng.random_range(0.1..5.0)));
                        }
                    }
                }
                for &(i, j, w) in &edges {
                    let cur: Option<f64> = adj[i][j];
                    let w = cur.map_or(w, |c| c.min(w));
                    adj[i][j] = Some(w);
                    adj[j][i] = Some(w);
                }
                let g = ground_metric_graph(&edges, p).unwrap();
                for s in 0..p {
                    for t in 0..p {
                        let d = brute_shortest(&adj, s, t);
                        assert!((g.get(s, t) - d * d).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn heavy_edge_is_routed_around() {
        let g = ground_metric_graph(&[(0, 1, 1.0f64), (1, 2, 1.0), (0, 2, 10.0)], 3).unwrap();
        assert_eq!(g.get(0, 2), 4.0);
    }

    #[test]
    fn median_normalization() {
        // upper entries {1, 2, 3}
        let m = vec![0.0, 1.0, 2.0, 1.0, 0.0, 3.0, 2.0, 3.0, 0.0];
        let g = GroundGeometry::from_matrix(3, m).unwrap().normalize_by_median().unwrap();
        assert_eq!(g.get(0, 1), 0.5);
        assert_eq!(g.get(1, 2), 1.5);
        assert!(g.is_normalized());
        assert_eq!(g.upper_median().unwrap(), 1.0);
        // even count: 2x2 grid upper entries {1,1,2,2,1,1} -> median 1
        let g = ground_metric_grid(2, 2, 2.0f64).unwrap();
        assert_eq!(g.upper_median().unwrap(), 1.0);
        let g = ground_metric_grid(1, 4, 2.0f64).unwrap(); // {1,4,9,1,4,1}
        assert_eq!(g.upper_median().unwrap(), 2.5);
        let g = g.normalize_by_median().unwrap();
        assert_eq!(g.scale(), 2.5);
        assert_eq!(g.separable_grid(), Some((1, 4)));
        assert!(GroundGeometry::from_matrix(2, vec![0.0f64; 4])
            .unwrap()
            .normalize_by_median()
            .is_err());
        assert!(ground_metric_grid(1, 1, 2.0f64).unwrap().normalize_by_median().is_err());
    }
}
