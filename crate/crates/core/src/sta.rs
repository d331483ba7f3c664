//! Spatio-temporal alignment: soft-DTW over a matrix of unbalanced Sinkhorn
//! divergences between the frames of two series.

use std::sync::Arc;

use rayon::prelude::*;

use crate::align::{sdtw, sdtw_backward, sdtw_forward, CostMatrix};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::uot::{divergence_with_self_terms, grad_s_with_self_term, self_term, GibbsKernel, SelfTerm, UotParams};

/// `T × p` series of spatial measures, row-major (one frame per row).
#[derive(Debug, Clone, PartialEq)]
pub struct SpatioTemporalSeries<T> {
    t_len: usize,
    p: usize,
    data: Vec<T>,
    pub label: Option<String>,
}

impl<T: Scalar> SpatioTemporalSeries<T> {
    /// Finite entries of any sign; nonnegativity is enforced where a cost
    /// needs it.
    pub fn new(t_len: usize, p: usize, data: Vec<T>) -> Result<Self> {
        if t_len == 0 || p == 0 {
            return Err(Error::shape("series needs at least one frame and one bin"));
        }
        if data.len() != t_len * p {
            return Err(Error::shape(format!(
                "series data has length {}, expected {t_len}*{p}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("series has non-finite entries"));
        }
        Ok(Self {
            t_len,
            p,
            data,
            label: None,
        })
    }

    pub fn from_frames(frames: &[Vec<T>]) -> Result<Self> {
        let p = frames.first().map_or(0, Vec::len);
        if frames.iter().any(|f| f.len() != p) {
            return Err(Error::shape("frames have different lengths"));
        }
        Self::new(frames.len(), p, frames.concat())
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn t_len(&self) -> usize {
        self.t_len
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn frame(&self, t: usize) -> &[T] {
        &self.data[t * self.p..(t + 1) * self.p]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.p)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.data.iter().all(|&v| v >= T::zero())
    }
}

/// How negative entries are fed to the divergence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SignedMode {
    /// Negative entries are a domain error.
    #[default]
    Reject,
    /// Use `|x|`.
    Absolute,
    /// `½(S(x⁺, y⁺) + S(x⁻, y⁻))`.
    SplitAverage,
}

/// Sinkhorn-divergence frame cost with one shared kernel.
#[derive(Debug, Clone)]
pub struct DivergenceCost<T> {
    pub kernel: Arc<GibbsKernel<T>>,
    pub params: UotParams<T>,
    pub signed: SignedMode,
}

impl<T: Scalar> DivergenceCost<T> {
    pub fn new(kernel: Arc<GibbsKernel<T>>, params: UotParams<T>) -> Self {
        Self {
            kernel,
            params,
            signed: SignedMode::Reject,
        }
    }

    pub fn with_signed(mut self, mode: SignedMode) -> Self {
        self.signed = mode;
        self
    }
}

/// Frame-pair cost fed to soft-DTW.
#[derive(Debug, Clone)]
pub enum CostProvider<T> {
    /// `‖x_t - y_s‖²`
    SquaredEuclidean,
    /// `S(x_t, y_s)`
    Divergence(DivergenceCost<T>),
    /// A fixed matrix, for a single pair of series.
    Precomputed(CostMatrix<T>),
}

impl<T: Scalar> CostProvider<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            CostProvider::SquaredEuclidean => "squared-euclidean",
            CostProvider::Divergence(_) => "sinkhorn-divergence",
            CostProvider::Precomputed(_) => "precomputed",
        }
    }

    pub fn cost_matrix(&self, x: &SpatioTemporalSeries<T>, y: &SpatioTemporalSeries<T>) -> Result<CostMatrix<T>> {
        match self {
            CostProvider::SquaredEuclidean => squared_euclidean_costs(x, y),
            CostProvider::Divergence(c) => Ok(s_cost_matrix(x, y, c)?.costs),
            CostProvider::Precomputed(m) => {
                if (m.rows(), m.cols()) != (x.t_len(), y.t_len()) {
                    return Err(Error::shape(format!(
                        "precomputed costs are {}x{}, series lengths {}x{}",
                        m.rows(),
                        m.cols(),
                        x.t_len(),
                        y.t_len()
                    )));
                }
                Ok(m.clone())
            }
        }
    }
}

fn check_same_p<T: Scalar>(x: &SpatioTemporalSeries<T>, y: &SpatioTemporalSeries<T>) -> Result<()> {
    if x.p() != y.p() {
        return Err(Error::shape(format!("series have p = {} and p = {}", x.p(), y.p())));
    }
    Ok(())
}

/// `Δ[t, s] = ‖x_t - y_s‖²`
pub fn squared_euclidean_costs<T: Scalar>(x: &SpatioTemporalSeries<T>, y: &SpatioTemporalSeries<T>) -> Result<CostMatrix<T>> {
    check_same_p(x, y)?;
    CostMatrix::from_fn(x.t_len(), y.t_len(), |t, s| {
        x.frame(t)
            .iter()
            .zip(y.frame(s))
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum()
    })
}

#[derive(Debug, Clone)]
struct PreparedPart<T> {
    measure: Vec<T>,
    term: SelfTerm<T>,
}

/// Frames of one series with their symmetric solves done once.
#[derive(Debug, Clone)]
pub struct PreparedSeries<T> {
    p: usize,
    /// `frames[t]` holds one part, or two (`x⁺`, `x⁻`) in split mode.
    frames: Vec<Vec<PreparedPart<T>>>,
    /// Frames whose symmetric solve hit the iteration cap.
    pub unconverged: usize,
}

impl<T: Scalar> PreparedSeries<T> {
    pub fn t_len(&self) -> usize {
        self.frames.len()
    }
}

fn split_parts<T: Scalar>(frame: &[T], mode: SignedMode) -> Result<Vec<Vec<T>>> {
    match mode {
        SignedMode::Reject => {
            if let Some(v) = frame.iter().find(|v| **v < T::zero()) {
                return Err(Error::domain(format!(
                    "negative entry {v}; choose a signed mode for signed data"
                )));
            }
            Ok(vec![frame.to_vec()])
        }
        SignedMode::Absolute => Ok(vec![frame.iter().map(|v| v.abs()).collect()]),
        SignedMode::SplitAverage => Ok(vec![
            frame.iter().map(|&v| v.max(T::zero())).collect(),
            frame.iter().map(|&v| (-v).max(T::zero())).collect(),
        ]),
    }
}

/// Solves every frame's symmetric problem.
pub fn prepare<T: Scalar>(x: &SpatioTemporalSeries<T>, cost: &DivergenceCost<T>) -> Result<PreparedSeries<T>> {
    if x.p() != cost.kernel.p() {
        return Err(Error::shape(format!("series has p = {}, kernel p = {}", x.p(), cost.kernel.p())));
    }
    let mut unconverged = 0;
    let mut frames = Vec::with_capacity(x.t_len());
    for f in x.frames() {
        let mut parts = Vec::new();
        for measure in split_parts(f, cost.signed)? {
            let term = self_term(&measure, &cost.kernel, &cost.params)?;
            unconverged += usize::from(!term.converged);
            parts.push(PreparedPart { measure, term });
        }
        frames.push(parts);
    }
    Ok(PreparedSeries {
        p: x.p(),
        frames,
        unconverged,
    })
}

/// Divergence cost matrix with solver bookkeeping.
#[derive(Debug, Clone)]
pub struct SCostMatrix<T> {
    pub costs: CostMatrix<T>,
    /// Entries with at least one solve stopped at the iteration cap.
    pub unconverged: Vec<(usize, usize)>,
    /// Total cross-solve iterations.
    pub iterations: u64,
}

fn pair_divergence<T: Scalar>(a: &PreparedPart<T>, b: &PreparedPart<T>, cost: &DivergenceCost<T>) -> Result<(T, bool, usize)> {
    if a.measure == b.measure {
        // S(x, x) = 0 by definition
        return Ok((T::zero(), a.term.converged, 0));
    }
    let r = divergence_with_self_terms(&a.measure, &b.measure, &a.term, &b.term, &cost.kernel, &cost.params)?;
    Ok((r.value, r.converged, r.iterations))
}

/// `Δ[t, s] = S(x_t, y_s)` between prepared series.
pub fn s_cost_matrix_prepared<T: Scalar>(
    px: &PreparedSeries<T>,
    py: &PreparedSeries<T>,
    cost: &DivergenceCost<T>,
) -> Result<SCostMatrix<T>> {
    if px.p != py.p {
        return Err(Error::shape(format!("series have p = {} and p = {}", px.p, py.p)));
    }
    let (n, m) = (px.t_len(), py.t_len());
    let mut data = Vec::with_capacity(n * m);
    let mut unconverged = Vec::new();
    let mut iterations = 0u64;
    let half = T::lit(0.5);
    for (t, fx) in px.frames.iter().enumerate() {
        for (s, fy) in py.frames.iter().enumerate() {
            let mut value = T::zero();
            let mut ok = true;
            for (a, b) in fx.iter().zip(fy) {
                let (v, conv, its) = pair_divergence(a, b, cost)?;
                value += v;
                ok &= conv;
                iterations += its as u64;
            }
            if fx.len() == 2 {
                value *= half;
            }
            if !ok {
                unconverged.push((t, s));
            }
            data.push(value);
        }
    }
    Ok(SCostMatrix {
        costs: CostMatrix::new_signed(n, m, data)?,
        unconverged,
        iterations,
    })
}

/// `Δ[t, s] = S(x_t, y_s)`; the `T₁ + T₂` symmetric solves are done once.
pub fn s_cost_matrix<T: Scalar>(
    x: &SpatioTemporalSeries<T>,
    y: &SpatioTemporalSeries<T>,
    cost: &DivergenceCost<T>,
) -> Result<SCostMatrix<T>> {
    check_same_p(x, y)?;
    let px = prepare(x, cost)?;
    let py = prepare(y, cost)?;
    s_cost_matrix_prepared(&px, &py, cost)
}

/// `sdtw` over the provider's frame costs.
pub fn sta<T: Scalar>(x: &SpatioTemporalSeries<T>, y: &SpatioTemporalSeries<T>, beta: T, provider: &CostProvider<T>) -> Result<T> {
    sdtw(&provider.cost_matrix(x, y)?, beta)
}

/// `∂ sta / ∂x_t = Σ_s E[t, s] ∇ₓS(x_t, y_s)`, returned as a `T₁ × p`
/// row-major matrix. Needs `β > 0` and strictly positive data.
pub fn sta_gradient<T: Scalar>(
    x: &SpatioTemporalSeries<T>,
    y: &SpatioTemporalSeries<T>,
    beta: T,
    cost: &DivergenceCost<T>,
) -> Result<Vec<T>> {
    if cost.signed != SignedMode::Reject {
        return Err(Error::Unsupported("gradients are only defined for nonnegative data".into()));
    }
    if !(beta > T::zero()) {
        return Err(Error::Unsupported("sta gradient needs beta > 0".into()));
    }
    let px = prepare(x, cost)?;
    let py = prepare(y, cost)?;
    let s = s_cost_matrix_prepared(&px, &py, cost)?;
    if !s.unconverged.is_empty() || px.unconverged > 0 || py.unconverged > 0 {
        return Err(Error::Convergence {
            iterations: cost.params.max_iter,
            residual: f64::NAN,
        });
    }
    let fwd = sdtw_forward(&s.costs, beta)?;
    let e = sdtw_backward(&fwd, &s.costs)?;
    let p = x.p();
    let mut grad = vec![T::zero(); x.t_len() * p];
    for t in 0..x.t_len() {
        let part = &px.frames[t][0];
        for u in 0..y.t_len() {
            let w = e.get(t, u);
            if w == T::zero() {
                continue;
            }
            let g = grad_s_with_self_term(&part.measure, y.frame(u), &part.term, &cost.kernel, &cost.params)?;
            for (acc, gi) in grad[t * p..(t + 1) * p].iter_mut().zip(g) {
                *acc += w * gi;
            }
        }
    }
    Ok(grad)
}

/// A pair whose dissimilarity could not be computed.
#[derive(Debug, Clone, PartialEq)]
pub struct PairFailure {
    pub i: usize,
    pub j: usize,
    pub message: String,
}

/// Parameters and solver statistics of a pairwise run.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixMetadata {
    pub beta: f64,
    pub epsilon: Option<f64>,
    pub gamma: Option<f64>,
    pub cost_kind: &'static str,
    pub failures: Vec<PairFailure>,
    /// Frame pairs (summed over all series pairs) with an unconverged solve.
    pub unconverged_entries: usize,
    pub sinkhorn_iterations: u64,
}

/// Symmetric `N × N` dissimilarity matrix; failed pairs hold `NaN`.
#[derive(Debug, Clone, PartialEq)]
pub struct DissimilarityMatrix<T> {
    n: usize,
    values: Vec<T>,
    pub labels: Vec<Option<String>>,
    pub meta: MatrixMetadata,
}

impl<T: Scalar> DissimilarityMatrix<T> {
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.n + j]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Leave-one-out 1-nearest-neighbor accuracy: each item takes the class
    /// of its most similar other item (lowest index on ties; `NaN` entries
    /// are skipped).
    pub fn loo_1nn_accuracy<L: PartialEq>(&self, classes: &[L]) -> f64 {
        assert_eq!(classes.len(), self.n);
        if self.n < 2 {
            return f64::NAN;
        }
        let hits = (0..self.n)
            .filter(|&i| {
                let nn = (0..self.n)
                    .filter(|&j| j != i && !self.get(i, j).is_nan())
                    .fold(None::<usize>, |best, j| match best {
                        Some(b) if self.get(i, b) <= self.get(i, j) => Some(b),
                        _ => Some(j),
                    });
                nn.is_some_and(|j| classes[j] == classes[i])
            })
            .count();
        hits as f64 / self.n as f64
    }

    /// Mean dissimilarity between every pair of classes, in order of first
    /// appearance; diagonal blocks exclude self-pairs. Returns the class list
    /// and a row-major `G × G` matrix of means.
    pub fn class_means<L: PartialEq + Clone>(&self, classes: &[L]) -> (Vec<L>, Vec<f64>) {
        assert_eq!(classes.len(), self.n);
        let mut uniq: Vec<L> = Vec::new();
        for c in classes {
            if !uniq.contains(c) {
                uniq.push(c.clone());
            }
        }
        let idx: Vec<usize> = classes
            .iter()
            .map(|c| uniq.iter().position(|u| u == c).expect("present"))
            .collect();
        let g = uniq.len();
        let mut sum = vec![0.0; g * g];
        let mut count = vec![0usize; g * g];
        for i in 0..self.n {
            for j in 0..self.n {
                let v = self.get(i, j).to_f64_lossy();
                if i == j || v.is_nan() {
                    continue;
                }
                sum[idx[i] * g + idx[j]] += v;
                count[idx[i] * g + idx[j]] += 1;
            }
        }
        let means = sum
            .iter()
            .zip(&count)
            .map(|(&s, &c)| if c == 0 { f64::NAN } else { s / c as f64 })
            .collect();
        (uniq, means)
    }

    /// True when every class's within-class mean is below its mean against
    /// every other class.
    pub fn within_below_between<L: PartialEq + Clone>(&self, classes: &[L]) -> bool {
        let (uniq, means) = self.class_means(classes);
        let g = uniq.len();
        (0..g).all(|a| {
            (0..g)
                .filter(|&b| b != a)
                .all(|b| means[a * g + a] < means[a * g + b] && means[b * g + b] < means[a * g + b])
        })
    }
}

enum Prepared<T> {
    Plain,
    Divergence(Vec<PreparedSeries<T>>),
}

fn metadata<T: Scalar>(beta: T, provider: &CostProvider<T>) -> MatrixMetadata {
    let (epsilon, gamma) = match provider {
        CostProvider::Divergence(c) => (
            Some(c.params.epsilon.to_f64_lossy()),
            Some(c.params.gamma.to_f64_lossy()),
        ),
        _ => (None, None),
    };
    MatrixMetadata {
        beta: beta.to_f64_lossy(),
        epsilon,
        gamma,
        cost_kind: provider.kind(),
        failures: Vec::new(),
        unconverged_entries: 0,
        sinkhorn_iterations: 0,
    }
}

/// Dissimilarities between every pair of series.
///
/// Self terms are solved in a sequential pre-pass; unordered pairs are then
/// evaluated independently on `threads` workers, each exactly once, so the
/// result is bit-identical for any thread count.
pub fn pairwise_matrix<T: Scalar>(
    dataset: &[SpatioTemporalSeries<T>],
    beta: T,
    provider: &CostProvider<T>,
    threads: usize,
) -> Result<DissimilarityMatrix<T>> {
    if dataset.is_empty() {
        return Err(Error::domain("empty dataset"));
    }
    if let CostProvider::Precomputed(_) = provider {
        return Err(Error::Unsupported(
            "a precomputed cost matrix describes a single pair, not a dataset".into(),
        ));
    }
    if !(beta >= T::zero()) || !beta.is_finite() {
        return Err(Error::domain(format!("beta must be finite and nonnegative, got {beta}")));
    }
    let p = dataset[0].p();
    if dataset.iter().any(|s| s.p() != p) {
        return Err(Error::shape("dataset items have different p"));
    }
    let mut meta = metadata(beta, provider);
    let prepared = match provider {
        CostProvider::Divergence(c) => {
            let v = dataset.iter().map(|s| prepare(s, c)).collect::<Result<Vec<_>>>()?;
            meta.unconverged_entries += v.iter().map(|s| s.unconverged).sum::<usize>();
            Prepared::Divergence(v)
        }
        _ => Prepared::Plain,
    };
    let n = dataset.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let eval = |&(i, j): &(usize, usize)| -> Result<(T, usize, u64)> {
        match (&prepared, provider) {
            (Prepared::Divergence(ps), CostProvider::Divergence(c)) => {
                let s = s_cost_matrix_prepared(&ps[i], &ps[j], c)?;
                Ok((sdtw(&s.costs, beta)?, s.unconverged.len(), s.iterations))
            }
            _ => Ok((sdtw(&squared_euclidean_costs(&dataset[i], &dataset[j])?, beta)?, 0, 0)),
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Unsupported(format!("thread pool: {e}")))?;
    let results: Vec<Result<(T, usize, u64)>> = pool.install(|| pairs.par_iter().map(eval).collect());

    let mut values = vec![T::nan(); n * n];
    for (&(i, j), r) in pairs.iter().zip(results) {
        match r {
            Ok((v, unconv, its)) => {
                values[i * n + j] = v;
                values[j * n + i] = v;
                meta.unconverged_entries += unconv;
                meta.sinkhorn_iterations += its;
            }
            Err(e) => meta.failures.push(PairFailure {
                i,
                j,
                message: e.to_string(),
            }),
        }
    }
    Ok(DissimilarityMatrix {
        n,
        values,
        labels: dataset.iter().map(|s| s.label.clone()).collect(),
        meta,
    })
}
