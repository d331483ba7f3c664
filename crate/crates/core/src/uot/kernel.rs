//! Gibbs kernel `K = exp(-M/ε)` and its products with vectors.

use std::sync::Arc;

use super::geometry::GroundGeometry;
use crate::error::{Error, Result};
use crate::scalar::{logsumexp, Scalar};

#[derive(Debug, Clone)]
struct Separable<T> {
    h: usize,
    w: usize,
    /// `h × h`, entry `exp(-(r-r')²/(scale·ε))`
    krow: Vec<T>,
    /// `w × w`, entry `exp(-(c-c')²/(scale·ε))`
    kcol: Vec<T>,
}

/// Gibbs kernel over a shared geometry.
///
/// On squared-Euclidean grids the kernel factorizes as `K_rows ⊗ K_cols`
/// and products cost `O(p(h+w))` instead of `O(p²)`. `M` is symmetric, so
/// `K = Kᵀ` and one product routine serves both scaling updates.
#[derive(Debug, Clone)]
pub struct GibbsKernel<T> {
    geom: Arc<GroundGeometry<T>>,
    epsilon: T,
    dense: Option<Vec<T>>,
    separable: Option<Separable<T>>,
    norm1: T,
    fell_back: bool,
}

fn check_epsilon<T: Scalar>(epsilon: T) -> Result<()> {
    if epsilon > T::zero() && epsilon.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("epsilon must be positive, got {epsilon}")))
    }
}

fn factor<T: Scalar>(n: usize, denom: T) -> Vec<T> {
    let mut k = Vec::with_capacity(n * n);
    for a in 0..n {
        for b in 0..n {
            k.push((-T::from_count(a.abs_diff(b).pow(2)) / denom).exp());
        }
    }
    k
}

impl<T: Scalar> GibbsKernel<T> {
    /// Uses the separable form whenever the geometry allows it.
    pub fn new(geom: Arc<GroundGeometry<T>>, epsilon: T) -> Result<Self> {
        if geom.separable_grid().is_some() {
            Self::separable(geom, epsilon)
        } else {
            Self::dense(geom, epsilon)
        }
    }

    /// Materialized `p × p` kernel.
    pub fn dense(geom: Arc<GroundGeometry<T>>, epsilon: T) -> Result<Self> {
        check_epsilon(epsilon)?;
        let dense: Vec<T> = geom.metric().iter().map(|&m| (-m / epsilon).exp()).collect();
        let norm1 = dense.iter().copied().sum();
        Ok(Self {
            geom,
            epsilon,
            dense: Some(dense),
            separable: None,
            norm1,
            fell_back: false,
        })
    }

    /// Requests the separable fast path. Geometries that do not factorize
    /// get a dense kernel and [`GibbsKernel::fell_back`] reports it.
    pub fn separable(geom: Arc<GroundGeometry<T>>, epsilon: T) -> Result<Self> {
        check_epsilon(epsilon)?;
        let Some((h, w)) = geom.separable_grid() else {
            let mut k = Self::dense(geom, epsilon)?;
            k.fell_back = true;
            return Ok(k);
        };
        let denom = geom.scale() * epsilon;
        let krow = factor(h, denom);
        let kcol = factor(w, denom);
        let norm1 = krow.iter().copied().sum::<T>() * kcol.iter().copied().sum::<T>();
        Ok(Self {
            geom,
            epsilon,
            dense: None,
            separable: Some(Separable { h, w, krow, kcol }),
            norm1,
            fell_back: false,
        })
    }

    pub fn p(&self) -> usize {
        self.geom.p()
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn geometry(&self) -> &Arc<GroundGeometry<T>> {
        &self.geom
    }

    /// `‖K‖₁ = Σ_ij K_ij`, computed once.
    pub fn norm1(&self) -> T {
        self.norm1
    }

    pub fn is_separable(&self) -> bool {
        self.separable.is_some()
    }

    /// True when the separable path was requested but the geometry does not
    /// factorize.
    pub fn fell_back(&self) -> bool {
        self.fell_back
    }

    #[inline]
    pub fn log_entry(&self, i: usize, j: usize) -> T {
        -self.geom.get(i, j) / self.epsilon
    }

    pub fn entry(&self, i: usize, j: usize) -> T {
        match (&self.dense, &self.separable) {
            (Some(d), _) => d[i * self.p() + j],
            (None, Some(s)) => {
                let (ri, ci) = (i / s.w, i % s.w);
                let (rj, cj) = (j / s.w, j % s.w);
                s.krow[ri * s.h + rj] * s.kcol[ci * s.w + cj]
            }
            (None, None) => unreachable!("kernel has a representation"),
        }
    }

    /// `out = K v`. `scratch` is resized as needed.
    pub fn apply_into(&self, v: &[T], out: &mut [T], scratch: &mut Vec<T>) {
        let p = self.p();
        assert_eq!(v.len(), p);
        assert_eq!(out.len(), p);
        if let Some(d) = &self.dense {
            for (o, row) in out.iter_mut().zip(d.chunks_exact(p)) {
                *o = row.iter().zip(v).map(|(&k, &x)| k * x).sum();
            }
            return;
        }
        let s = self.separable.as_ref().expect("kernel has a representation");
        let (h, w) = (s.h, s.w);
        scratch.clear();
        scratch.resize(p, T::zero());
        // scratch[r, c] = Σ_c' Kcol[c, c'] v[r, c']
        for (vr, tr) in v.chunks_exact(w).zip(scratch.chunks_exact_mut(w)) {
            for (t, kc) in tr.iter_mut().zip(s.kcol.chunks_exact(w)) {
                *t = kc.iter().zip(vr).map(|(&k, &x)| k * x).sum();
            }
        }
        // out[r, :] = Σ_r' Krow[r, r'] scratch[r', :]
        for (orow, kr) in out.chunks_exact_mut(w).zip(s.krow.chunks_exact(h)) {
            orow.iter_mut().for_each(|o| *o = T::zero());
            for (&k, tr) in kr.iter().zip(scratch.chunks_exact(w)) {
                for (o, &t) in orow.iter_mut().zip(tr) {
                    *o += k * t;
                }
            }
        }
    }

    pub fn apply(&self, v: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.p()];
        self.apply_into(v, &mut out, &mut Vec::new());
        out
    }

    /// Exact `log Σ_j K_ij exp(lv_j)` for one row.
    pub fn log_apply_row(&self, i: usize, lv: &[T]) -> T {
        logsumexp(
            lv.iter()
                .enumerate()
                .map(|(j, &l)| self.log_entry(i, j) + l)
                .collect::<Vec<_>>(),
        )
    }

    /// `out_i = log (K exp(lv))_i`.
    ///
    /// The product is evaluated on `exp(lv - max lv)`; rows whose shifted
    /// product falls below `floor` (where underflowed terms could matter) are
    /// recomputed with an exact log-sum-exp.
    pub fn log_apply_into(&self, lv: &[T], out: &mut [T], floor: T, buf: &mut LogApplyBuffers<T>) {
        let p = self.p();
        let max = lv.iter().copied().fold(T::neg_infinity(), T::max);
        if !max.is_finite() {
            // all -∞ (or a +∞ entry): nothing to shift by
            for (i, o) in out.iter_mut().enumerate() {
                *o = if max == T::neg_infinity() {
                    T::neg_infinity()
                } else {
                    self.log_apply_row(i, lv)
                };
            }
            return;
        }
        buf.shifted.clear();
        buf.shifted.extend(lv.iter().map(|&l| (l - max).exp()));
        buf.product.resize(p, T::zero());
        self.apply_into(&buf.shifted, &mut buf.product, &mut buf.scratch);
        buf.fallbacks = 0;
        for (i, (o, &r)) in out.iter_mut().zip(&buf.product).enumerate() {
            if r > floor {
                *o = max + r.ln();
            } else {
                *o = self.log_apply_row(i, lv);
                buf.fallbacks += 1;
            }
        }
    }

    /// Smallest shifted product trusted without an exact recomputation.
    pub fn default_floor(&self) -> T {
        T::min_positive_value() / T::epsilon() * T::from_count(self.p())
    }
}

/// Reusable buffers for [`GibbsKernel::log_apply_into`].
#[derive(Debug, Clone, Default)]
pub struct LogApplyBuffers<T> {
    shifted: Vec<T>,
    product: Vec<T>,
    scratch: Vec<T>,
    /// Rows recomputed exactly in the last call.
    pub fallbacks: usize,
}

/// Outcome of [`kernel_conv`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConvOutput<T> {
    pub values: Vec<T>,
    pub used_separable: bool,
    /// Separable path requested on a geometry that does not factorize.
    pub fell_back: bool,
}

/// `K v`, optionally requesting the separable path.
pub fn kernel_conv<T: Scalar>(kernel: &GibbsKernel<T>, v: &[T], prefer_separable: bool) -> Result<ConvOutput<T>> {
    if v.len() != kernel.p() {
        return Err(Error::shape(format!("vector of length {} vs p = {}", v.len(), kernel.p())));
    }
    if prefer_separable && !kernel.is_separable() {
        let k = GibbsKernel::separable(kernel.geometry().clone(), kernel.epsilon())?;
        return Ok(ConvOutput {
            values: k.apply(v),
            used_separable: k.is_separable(),
            fell_back: k.fell_back(),
        });
    }
    if !prefer_separable && kernel.is_separable() {
        let k = GibbsKernel::dense(kernel.geometry().clone(), kernel.epsilon())?;
        return Ok(ConvOutput {
            values: k.apply(v),
            used_separable: false,
            fell_back: false,
        });
    }
    Ok(ConvOutput {
        values: kernel.apply(v),
        used_separable: kernel.is_separable(),
        fell_back: kernel.fell_back(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::uot::geometry::{ground_metric_graph, ground_metric_grid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(h: usize, w: usize) -> Arc<GroundGeometry<f64>> {
        Arc::new(ground_metric_grid(h, w, 2.0).unwrap())
    }

    #[test]
    fn kernel_entries() {
        let k = GibbsKernel::dense(grid(1, 2), 1.0).unwrap();
        let e = (-1.0f64).exp();
        assert_eq!(k.entry(0, 1), e);
        assert_eq!(k.entry(1, 1), 1.0);
        assert!((k.norm1() - (2.0 + 2.0 * e)).abs() < 1e-15);
        let zero = Arc::new(GroundGeometry::from_matrix(2, vec![0.0f64; 4]).unwrap());
        let k = GibbsKernel::new(zero, 0.3).unwrap();
        assert_eq!(k.apply(&[1.0, 2.0]), vec![3.0, 3.0]);
        assert!(GibbsKernel::new(grid(2, 2), 0.0).is_err());
    }

    #[test]
    fn separable_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (h, w) in [(4, 4), (1, 7), (3, 5), (6, 2)] {
            let g = Arc::new(ground_metric_grid(h, w, 2.0f64).unwrap().normalize_by_median().unwrap());
            let dense = GibbsKernel::dense(g.clone(), 0.37).unwrap();
            let sep = GibbsKernel::new(g, 0.37).unwrap();
            assert!(sep.is_separable());
            assert!((dense.norm1() - sep.norm1()).abs() <= 1e-12 * dense.norm1());
            for i in 0..h * w {
                for j in 0..h * w {
                    assert!((dense.entry(i, j) - sep.entry(i, j)).abs() <= 1e-15);
                }
            }
            let v: Vec<f64> = (0..h * w).map(|_| rng.random_range(0.0..1.0)).collect();
            let a = dense.apply(&v);
            let b = sep.apply(&v);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() <= 1e-12 * x.abs());
            }
            assert!(sep.apply(&vec![0.0; h * w]).iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn conv_reports_path() {
        let g = Arc::new(ground_metric_graph(&[(0, 1, 1.0f64), (1, 2, 2.0)], 3).unwrap());
        let k = GibbsKernel::new(g, 1.0).unwrap();
        let out = kernel_conv(&k, &[1.0, 0.0, 0.0], true).unwrap();
        assert!(out.fell_back && !out.used_separable);
        assert_eq!(out.values[0], 1.0);
        let k = GibbsKernel::new(grid(4, 4), 0.5).unwrap();
        let v: Vec<f64> = (0..16).map(|i| i as f64).collect();
        let fast = kernel_conv(&k, &v, true).unwrap();
        let slow = kernel_conv(&k, &v, false).unwrap();
        assert!(fast.used_separable && !slow.used_separable);
        for (x, y) in fast.values.iter().zip(&slow.values) {
            assert!((x - y).abs() <= 1e-12 * x.abs());
        }
        assert!(kernel_conv(&k, &[1.0], true).is_err());
    }

    #[test]
    fn log_apply_handles_extreme_ranges() {
        let k = GibbsKernel::new(grid(3, 3), 0.01).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let lv: Vec<f64> = (0..9).map(|_| rng.random_range(-2000.0..2000.0)).collect();
        let mut out = vec![0.0; 9];
        let mut buf = LogApplyBuffers::default();
        k.log_apply_into(&lv, &mut out, k.default_floor(), &mut buf);
        for (i, &o) in out.iter().enumerate() {
            let exact = k.log_apply_row(i, &lv);
            assert!((o - exact).abs() <= 1e-12 * exact.abs().max(1.0), "{o} vs {exact}");
        }
        let ninf = vec![f64::NEG_INFINITY; 9];
        k.log_apply_into(&ninf, &mut out, k.default_floor(), &mut buf);
        assert!(out.iter().all(|&o| o == f64::NEG_INFINITY));
    }
}
