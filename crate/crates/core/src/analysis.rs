//! Observables used to compare integrators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::samplers::instantaneous_temperature;
use crate::system::{PhaseState, System};

/// Kinetic temperature of `state`.
pub fn temperature(system: &System, state: &PhaseState) -> Result<f64> {
    system.check_state(state)?;
    instantaneous_temperature(system, state.p())
}

/// Evenly sampled scalar signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub values: Vec<f64>,
    pub dt_between_samples: f64,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>, dt_between_samples: f64) -> Result<Self> {
        if !(dt_between_samples.is_finite() && dt_between_samples > 0.0) {
            return Err(Error::InvalidArgument("sample spacing must be positive".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("series has non-finite values".into()));
        }
        Ok(Self {
            values,
            dt_between_samples,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn reversed(&self) -> Self {
        Self {
            values: self.values.iter().rev().copied().collect(),
            dt_between_samples: self.dt_between_samples,
        }
    }
}

struct Centered {
    x: Vec<f64>,
    c0: f64,
}

impl Centered {
    fn new(series: &TimeSeries) -> Result<Self> {
        let n = series.len();
        if n < 2 {
            return Err(Error::TooFewFrames { needed: 2, found: n });
        }
        let mean = series.values.iter().sum::<f64>() / n as f64;
        let x: Vec<f64> = series.values.iter().map(|v| v - mean).collect();
        let c0 = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
        if !(c0 > 1e-300) || x.iter().all(|v| v.abs() <= 1e-14 * mean.abs()) {
            return Err(Error::ZeroVariance);
        }
        Ok(Self { x, c0 })
    }

    /// Normalised autocovariance at `lag`, biased (1/n) estimator.
    fn at(&self, lag: usize) -> f64 {
        let n = self.x.len();
        let s: f64 = self.x[..n - lag].iter().zip(&self.x[lag..]).map(|(a, b)| a * b).sum();
        s / n as f64 / self.c0
    }
}

/// Mean-removed autocorrelation for lags `0..=max_lag`, with `acf[0] = 1`.
pub fn acf(series: &TimeSeries, max_lag: usize) -> Result<Vec<f64>> {
    if max_lag >= series.len() {
        return Err(Error::InvalidArgument(format!(
            "max_lag {max_lag} must be below the series length {}",
            series.len()
        )));
    }
    let c = Centered::new(series)?;
    Ok((0..=max_lag).map(|k| if k == 0 { 1.0 } else { c.at(k) }).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Iacf {
    /// `Δ · (1 + 2 Σ_{k<K} acf[k])` in units of the sample spacing.
    pub value: f64,
    /// First lag with a negative autocorrelation (or the lag cap).
    pub cutoff: usize,
    /// The cutoff is a sizeable fraction of the series, so the estimate
    /// is dominated by slow trends rather than decorrelation.
    pub warning: bool,
}

/// Integrated autocorrelation, truncated at the first negative lag.
pub fn iacf(series: &TimeSeries) -> Result<Iacf> {
    let c = Centered::new(series)?;
    let n = series.len();
    let cap = n / 2;
    let mut sum = 0.0;
    let mut cutoff = cap;
    for k in 1..=cap {
        let r = c.at(k);
        if r < 0.0 {
            cutoff = k;
            break;
        }
        sum += r;
    }
    let reached_cap = cutoff == cap;
    Ok(Iacf {
        value: series.dt_between_samples * (1.0 + 2.0 * sum),
        cutoff,
        warning: reached_cap || cutoff * 10 >= n,
    })
}

fn particle_count(len: usize, dimension: usize) -> Result<usize> {
    if dimension == 0 || len % dimension != 0 {
        return Err(Error::InvalidArgument(format!(
            "coordinate array of length {len} is not a multiple of dimension {dimension}"
        )));
    }
    Ok(len / dimension)
}

/// Root-mean-square of per-particle displacements between two structures,
/// without superposition.
pub fn rmsd(q_a: &[f64], q_b: &[f64], dimension: usize, indices: Option<&[usize]>) -> Result<f64> {
    if q_a.len() != q_b.len() {
        return Err(Error::DimensionMismatch {
            expected: q_a.len(),
            found: q_b.len(),
        });
    }
    let n = particle_count(q_a.len(), dimension)?;
    let all: Vec<usize>;
    let idx = match indices {
        Some(i) => i,
        None => {
            all = (0..n).collect();
            &all
        }
    };
    if idx.is_empty() {
        return Err(Error::InvalidArgument("rmsd subset is empty".into()));
    }
    let mut sum = 0.0;
    for &i in idx {
        if i >= n {
            return Err(Error::InvalidArgument(format!("particle index {i} out of range")));
        }
        let base = i * dimension;
        sum += (0..dimension).map(|a| (q_a[base + a] - q_b[base + a]).powi(2)).sum::<f64>();
    }
    Ok((sum / idx.len() as f64).sqrt())
}

/// Largest RMSD over every pair of frames taken at `stride`.
pub fn rmst(trajectory: &[Vec<f64>], dimension: usize, indices: Option<&[usize]>, stride: usize) -> Result<f64> {
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be at least 1".into()));
    }
    let frames: Vec<&Vec<f64>> = trajectory.iter().step_by(stride).collect();
    if frames.len() < 2 {
        return Err(Error::TooFewFrames {
            needed: 2,
            found: frames.len(),
        });
    }
    let mut worst = 0.0f64;
    for (a, fa) in frames.iter().enumerate() {
        for fb in &frames[a + 1..] {
            worst = worst.max(rmsd(fa, fb, dimension, indices)?);
        }
    }
    Ok(worst)
}

/// Mass-weighted radius of gyration.
pub fn radius_of_gyration(system: &System, q: &[f64]) -> Result<f64> {
    system.check_coords(q)?;
    let dim = system.dimension();
    let m = system.masses();
    let total: f64 = m.iter().sum();
    let mut com = [0.0; 3];
    for (qi, mi) in q.chunks_exact(dim).zip(m) {
        for a in 0..dim {
            com[a] += mi * qi[a];
        }
    }
    for c in com.iter_mut().take(dim) {
        *c /= total;
    }
    let s: f64 = q
        .chunks_exact(dim)
        .zip(m)
        .map(|(qi, mi)| mi * (0..dim).map(|a| (qi[a] - com[a]).powi(2)).sum::<f64>())
        .sum();
    Ok((s / total).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// Left edge of the first bin, a multiple of `bin_width`.
    pub origin: f64,
    pub bin_width: f64,
    /// `count / (n_samples · bin_width)`.
    pub frequencies: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn bin_start(&self, k: usize) -> f64 {
        self.origin + k as f64 * self.bin_width
    }
}

/// Bins aligned to multiples of `bin_width`, normalised to unit area.
pub fn histogram(values: &[f64], bin_width: f64) -> Result<Histogram> {
    if !(bin_width.is_finite() && bin_width > 0.0) {
        return Err(Error::InvalidArgument("bin width must be positive".into()));
    }
    if values.is_empty() {
        return Err(Error::EmptySeries);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("histogram input has non-finite values".into()));
    }
    let bin = |v: f64| (v / bin_width).floor() as i64;
    let lo = values.iter().map(|v| bin(*v)).min().expect("non-empty");
    let hi = values.iter().map(|v| bin(*v)).max().expect("non-empty");
    let mut counts = vec![0usize; (hi - lo + 1) as usize];
    for v in values {
        counts[(bin(*v) - lo) as usize] += 1;
    }
    let norm = values.len() as f64 * bin_width;
    Ok(Histogram {
        origin: lo as f64 * bin_width,
        bin_width,
        frequencies: counts.iter().map(|c| *c as f64 / norm).collect(),
        counts,
    })
}
