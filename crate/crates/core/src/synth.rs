//! Synthetic fixtures: univariate pulses for the shift experiments and
//! smoothed point activations on a grid for clustering.
//!
//! Random draws come from [`ChaCha8Rng`] seeded with a `u64`, so a seed fixes
//! the output on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sta::SpatioTemporalSeries;

/// Zeros with `levels` written from 0-based position `start`.
pub fn pulse<T: Scalar>(t_len: usize, start: usize, levels: &[T]) -> Result<Vec<T>> {
    if start + levels.len() > t_len {
        return Err(Error::domain(format!(
            "pulse of width {} at {start} does not fit in length {t_len}",
            levels.len()
        )));
    }
    let mut x = vec![T::zero(); t_len];
    x[start..start + levels.len()].copy_from_slice(levels);
    Ok(x)
}

/// Pulse placed so the zero runs before and after differ by at most one.
pub fn centered_pulse<T: Scalar>(t_len: usize, levels: &[T]) -> Result<Vec<T>> {
    let start = t_len.saturating_sub(levels.len()) / 2;
    pulse(t_len, start, levels)
}

/// Staircase `1, 2, .., up, .., 2, 1` scaled by `height / up`.
pub fn tent_levels<T: Scalar>(up: usize, height: T) -> Vec<T> {
    let step = height / T::from_count(up.max(1));
    (1..=up)
        .chain((1..up).rev())
        .map(|i| step * T::from_count(i))
        .collect()
}

/// Parameters of the four-group blob dataset: two regions times two
/// activation instants.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobSpec {
    pub h: usize,
    pub w: usize,
    pub t_len: usize,
    /// Flat grid indices (`row * w + col`) of each region.
    pub regions: [Vec<usize>; 2],
    /// 1-based activation frames.
    pub times: [usize; 2],
    pub n_per_group: usize,
    pub amplitude: (f64, f64),
    pub sigma_time: f64,
    pub sigma_space: f64,
    pub seed: u64,
}

/// Flat indices of the rectangle `rows × cols` on a `w`-wide grid.
pub fn block_region(w: usize, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Vec<usize> {
    rows.flat_map(|r| cols.clone().map(move |c| r * w + c)).collect()
}

impl Default for BlobSpec {
    /// 16×16 grid, `T = 20`, activations at frames 5 and 15, ten items per
    /// group, amplitudes in `[1, 3]`, unit smoothing widths.
    fn default() -> Self {
        Self {
            h: 16,
            w: 16,
            t_len: 20,
            regions: [block_region(16, 0..7, 0..7), block_region(16, 9..16, 9..16)],
            times: [5, 15],
            n_per_group: 10,
            amplitude: (1.0, 3.0),
            sigma_time: 1.0,
            sigma_space: 1.0,
            seed: 42,
        }
    }
}

impl BlobSpec {
    pub fn validate(&self) -> Result<()> {
        let p = self.h * self.w;
        if p == 0 || self.t_len == 0 {
            return Err(Error::domain("grid and series length must be positive"));
        }
        for r in &self.regions {
            if r.is_empty() {
                return Err(Error::domain("regions must be non-empty"));
            }
            if let Some(v) = r.iter().find(|&&v| v >= p) {
                return Err(Error::domain(format!("region vertex {v} outside the {}x{} grid", self.h, self.w)));
            }
        }
        if self.regions[0].iter().any(|v| self.regions[1].contains(v)) {
            return Err(Error::domain("regions overlap"));
        }
        let [t1, t2] = self.times;
        if t1 == t2 || !(1..=self.t_len).contains(&t1) || !(1..=self.t_len).contains(&t2) {
            return Err(Error::domain(format!(
                "activation times must be distinct and within [1, {}], got {t1} and {t2}",
                self.t_len
            )));
        }
        let (lo, hi) = self.amplitude;
        if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo <= hi) {
            return Err(Error::domain(format!("amplitude range [{lo}, {hi}] must be positive")));
        }
        if !(self.sigma_time >= 0.0 && self.sigma_space >= 0.0) {
            return Err(Error::domain("smoothing widths must be nonnegative"));
        }
        Ok(())
    }
}

/// One generated item with its group.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobItem<T> {
    pub series: SpatioTemporalSeries<T>,
    /// `2 * region + time`, in `0..4`.
    pub group: usize,
    pub region: usize,
    pub time: usize,
    pub vertex: usize,
    pub amplitude: f64,
}

/// Unit-peak Gaussian weights `exp(-d² / 2σ²)` for `d = 0..n`; `σ = 0` is a
/// Kronecker delta.
fn gaussian_profile(n: usize, sigma: f64) -> Vec<f64> {
    (0..n)
        .map(|d| {
            if sigma == 0.0 {
                if d == 0 { 1.0 } else { 0.0 }
            } else {
                (-((d * d) as f64) / (2.0 * sigma * sigma)).exp()
            }
        })
        .collect()
}

/// Four groups of `n_per_group` items, ordered group by group. Each item is
/// a point activation at a uniformly drawn vertex of its region with an
/// amplitude drawn uniformly from the range, smoothed by untruncated
/// unit-peak Gaussians in time and on the grid. Every value is `≥ 0`.
pub fn generate_blobs<T: Scalar>(spec: &BlobSpec) -> Result<Vec<BlobItem<T>>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let gt = gaussian_profile(spec.t_len, spec.sigma_time);
    let gs = gaussian_profile(spec.h.max(spec.w), spec.sigma_space);
    let p = spec.h * spec.w;
    let mut items = Vec::with_capacity(4 * spec.n_per_group);
    for region in 0..2 {
        for time in 0..2 {
            for i in 0..spec.n_per_group {
                let cells = &spec.regions[region];
                let vertex = cells[rng.random_range(0..cells.len())];
                let (lo, hi) = spec.amplitude;
                let amplitude = if lo == hi { lo } else { rng.random_range(lo..hi) };
                let (vr, vc) = (vertex / spec.w, vertex % spec.w);
                let t0 = spec.times[time] - 1;
                let mut data = Vec::with_capacity(spec.t_len * p);
                for t in 0..spec.t_len {
                    let wt = amplitude * gt[t.abs_diff(t0)];
                    for r in 0..spec.h {
                        for c in 0..spec.w {
                            data.push(T::lit(wt * gs[r.abs_diff(vr)] * gs[c.abs_diff(vc)]));
                        }
                    }
                }
                let series = SpatioTemporalSeries::new(spec.t_len, p, data)?
                    .with_label(format!("r{}_t{}_{i}", region + 1, spec.times[time]));
                items.push(BlobItem {
                    series,
                    group: 2 * region + time,
                    region,
                    time,
                    vertex,
                    amplitude,
                });
            }
        }
    }
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeshift::profile;

    #[test]
    fn pulses() {
        let x = pulse(6, 2, &[1.0f64, 2.0]).unwrap();
        assert_eq!(x, vec![0.0, 0.0, 1.0, 2.0, 0.0, 0.0]);
        assert!(pulse(3, 2, &[1.0f64, 2.0]).is_err());
        let c = centered_pulse(9, &[1.0f64, 1.0, 1.0]).unwrap();
        assert_eq!(c, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
        let tent = tent_levels(3, 3.0f64);
        assert_eq!(tent, vec![1.0, 2.0, 3.0, 2.0, 1.0]);
        let pr = profile(&centered_pulse(30, &tent).unwrap(), 0.0).unwrap();
        assert_eq!((pr.m(), pr.m_prime()), (12, 13));
    }

    #[test]
    fn blobs_are_deterministic_and_nonnegative() {
        let spec = BlobSpec {
            n_per_group: 3,
            ..BlobSpec::default()
        };
        let a = generate_blobs::<f64>(&spec).unwrap();
        let b = generate_blobs::<f64>(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 12);
        for item in &a {
            assert!(item.series.data().iter().all(|&v| v > 0.0));
            assert!(spec.regions[item.region].contains(&item.vertex));
            assert!((1.0..3.0).contains(&item.amplitude));
            let peak = item.series.frame(spec.times[item.time] - 1)[item.vertex];
            assert_eq!(peak, item.amplitude);
        }
        assert_eq!(a.iter().map(|i| i.group).collect::<Vec<_>>(), vec![0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3]);
        let other = generate_blobs::<f64>(&BlobSpec { seed: 7, ..spec }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn blob_spec_validation() {
        let ok = BlobSpec::default();
        assert!(ok.validate().is_ok());
        let mut s = ok.clone();
        s.regions[1] = vec![300];
        assert!(matches!(generate_blobs::<f64>(&s), Err(Error::Domain(_))));
        let mut s = ok.clone();
        s.times = [5, 5];
        assert!(s.validate().is_err());
        let mut s = ok.clone();
        s.regions[1] = s.regions[0].clone();
        assert!(s.validate().is_err());
        let mut s = ok;
        s.times = [0, 5];
        assert!(s.validate().is_err());
    }
}
