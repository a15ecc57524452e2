//! Reference implementations and statistics shared by the integration tests.
//! Nothing here calls into the library's numerics except where noted.
#![allow(dead_code)]

use aiamd::analysis::{iacf, TimeSeries};
use aiamd::samplers::RunReport;
use aiamd::{PhaseState, System};
use nalgebra::DMatrix;
use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussians(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn rational(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite input")
}

/// The energy-error bound evaluated in exact rational arithmetic from the
/// f64 inputs. `None` when the step is unstable (denominator ≤ 0).
pub fn exact_rho(h: f64, b: f64) -> Option<f64> {
    let h = rational(h);
    let b = rational(b);
    let int = |n: i64| BigRational::from_integer(BigInt::from(n));
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let h2 = &h * &h;
    let c = &half - &b;
    let b2 = &b * &b;
    let poly = int(2) * &b2 * &c * &h2 + int(4) * &b2 - int(6) * &b + int(1);
    let den = int(8) * (int(2) - &b * &h2) * (int(2) - &c * &h2) * (int(1) - &b * &c * &h2);
    if !den.is_positive() {
        return None;
    }
    let num = &h2 * &h2 * &poly * &poly;
    if num.is_zero() {
        return Some(0.0);
    }
    (num / den).to_f64()
}

/// Trace-based stability test for the oscillator propagator, in exact
/// arithmetic: stable iff the half-trace A satisfies |A| < 1.
pub fn exactly_stable(h: f64, b: f64) -> bool {
    exact_rho(h, b).is_some()
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Kolmogorov–Smirnov distance of `samples` from N(mean, sd²).
pub fn ks_normal(samples: &[f64], mean: f64, sd: f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(k, x)| {
            let f = normal_cdf((x - mean) / sd);
            (f - k as f64 / n).abs().max(((k + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

pub fn ks_critical_1pct(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}

/// Integrated autocorrelation in units of samples, or 1 for a constant series.
pub fn tau_samples(x: &[f64]) -> f64 {
    match TimeSeries::new(x.to_vec(), 1.0).and_then(|ts| iacf(&ts)) {
        Ok(r) => r.value.max(1.0),
        Err(_) => 1.0,
    }
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

/// Standard error of the mean, inflated by the integrated autocorrelation.
pub fn correlated_se(x: &[f64]) -> f64 {
    (variance(x) * tau_samples(x) / x.len() as f64).sqrt()
}

/// Least-squares slope of `y` against its index, with a standard error that
/// accounts for correlated residuals.
pub fn drift_slope(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let tbar = (n - 1.0) / 2.0;
    let ybar = mean(y);
    let stt: f64 = (0..y.len()).map(|t| (t as f64 - tbar).powi(2)).sum();
    let slope = y.iter().enumerate().map(|(t, v)| (t as f64 - tbar) * (v - ybar)).sum::<f64>() / stt;
    let resid: Vec<f64> = y
        .iter()
        .enumerate()
        .map(|(t, v)| v - ybar - slope * (t as f64 - tbar))
        .collect();
    let s2 = resid.iter().map(|r| r * r).sum::<f64>() / (n - 2.0);
    let se = (s2 / stt * tau_samples(&resid)).sqrt();
    (slope, se)
}

/// Acceptance rate and its correlation-corrected standard error.
pub fn acceptance_with_se(report: &RunReport) -> (f64, f64) {
    let x: Vec<f64> = report.observables.accepted.iter().map(|a| f64::from(u8::from(*a))).collect();
    let a = mean(&x);
    let se = if a == 0.0 || a == 1.0 {
        0.0
    } else {
        (a * (1.0 - a) * tau_samples(&x) / x.len() as f64).sqrt()
    };
    (a, se)
}

/// `V = Σ ½ k_i x_i²` with unit masses in 1D.
pub fn oscillators(stiffness: &[f64]) -> System {
    let mut b = System::builder(1);
    for (i, k) in stiffness.iter().enumerate() {
        b = b.particle(1.0).restraint(i, vec![0.0], *k, 0.0);
    }
    b.build().unwrap()
}

pub fn state(q: Vec<f64>, p: Vec<f64>) -> PhaseState {
    PhaseState::new(q, p).unwrap()
}

/// Central-difference Jacobian of a map on `R^n`.
pub fn jacobian<F: Fn(&[f64]) -> Vec<f64>>(f: F, x: &[f64], eps: f64) -> DMatrix<f64> {
    let n = x.len();
    let mut j = DMatrix::<f64>::zeros(n, n);
    let mut xp = x.to_vec();
    for c in 0..n {
        xp[c] = x[c] + eps;
        let fp = f(&xp);
        xp[c] = x[c] - eps;
        let fm = f(&xp);
        xp[c] = x[c];
        for r in 0..n {
            j[(r, c)] = (fp[r] - fm[r]) / (2.0 * eps);
        }
    }
    j
}

pub fn concat(s: &PhaseState) -> Vec<f64> {
    s.q().iter().chain(s.p()).copied().collect()
}

pub fn split(x: &[f64]) -> PhaseState {
    let n = x.len() / 2;
    state(x[..n].to_vec(), x[n..].to_vec())
}

/// AR(1) process `x_t = φ x_{t−1} + ε_t`, started from its stationary law.
pub fn ar1(n: usize, phi: f64, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    let mut x = r.sample::<f64, _>(StandardNormal) / (1.0 - phi * phi).sqrt();
    (0..n)
        .map(|_| {
            x = phi * x + r.sample::<f64, _>(StandardNormal);
            x
        })
        .collect()
}

/// Dumbbell of two unit-length-constrained particles in an isotropic trap
/// `V = ½ k (|q₀|² + |q₁|²)`, in 3D.
pub struct TrappedDumbbell {
    pub masses: [f64; 2],
    pub d: f64,
    pub k: f64,
}

impl TrappedDumbbell {
    pub fn system(&self) -> System {
        System::builder(3)
            .particle(self.masses[0])
            .particle(self.masses[1])
            .constraint(0, 1, self.d)
            .restraint(0, vec![0.0; 3], self.k, 0.0)
            .restraint(1, vec![0.0; 3], self.k, 0.0)
            .build()
            .unwrap()
    }

    pub fn energy(&self, q: &[f64], p: &[f64]) -> f64 {
        let kin: f64 = (0..6).map(|c| p[c] * p[c] / (2.0 * self.masses[c / 3])).sum();
        kin + 0.5 * self.k * q.iter().map(|x| x * x).sum::<f64>()
    }

    /// A random state on the constraint manifold.
    pub fn random_state(&self, r: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
        let c = gaussians(r, 3);
        let u = gaussians(r, 3);
        let un = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut q = vec![0.0; 6];
        for a in 0..3 {
            q[a] = 0.3 * c[a] + 0.5 * self.d * u[a] / un;
            q[3 + a] = 0.3 * c[a] - 0.5 * self.d * u[a] / un;
        }
        let mut p = gaussians(r, 6);
        self.project(&q, &mut p);
        (q, p)
    }

    fn project(&self, q: &[f64], p: &mut [f64]) {
        let [m0, m1] = self.masses;
        let r: Vec<f64> = (0..3).map(|a| q[a] - q[3 + a]).collect();
        let len = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        let u: Vec<f64> = r.iter().map(|x| x / len).collect();
        let vrel: f64 = (0..3).map(|a| u[a] * (p[a] / m0 - p[3 + a] / m1)).sum();
        let nu = vrel / (1.0 / m0 + 1.0 / m1);
        for a in 0..3 {
            p[a] -= nu * u[a];
            p[3 + a] += nu * u[a];
        }
    }

    /// One textbook RATTLE step of length `h`, with the position multiplier
    /// obtained as the small root of the constraint quadratic.
    pub fn rattle(&self, q: &[f64], p: &[f64], h: f64) -> (Vec<f64>, Vec<f64>) {
        let [m0, m1] = self.masses;
        let inv = [1.0 / m0, 1.0 / m1];
        let mut ph: Vec<f64> = (0..6).map(|c| p[c] - 0.5 * h * self.k * q[c]).collect();
        let mut qn: Vec<f64> = (0..6).map(|c| q[c] + h * ph[c] * inv[c / 3]).collect();
        let r_old: Vec<f64> = (0..3).map(|a| q[a] - q[3 + a]).collect();
        let r_unc: Vec<f64> = (0..3).map(|a| qn[a] - qn[3 + a]).collect();
        // |r_unc − s r_old|² = d², smallest |s|
        let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
        let aa = dot(&r_old, &r_old);
        let bb = -2.0 * dot(&r_unc, &r_old);
        let cc = dot(&r_unc, &r_unc) - self.d * self.d;
        let disc = (bb * bb - 4.0 * aa * cc).sqrt();
        let s = if bb > 0.0 {
            2.0 * cc / (-bb - disc)
        } else {
            2.0 * cc / (-bb + disc)
        };
        let mu = s / (inv[0] + inv[1]);
        for a in 0..3 {
            qn[a] -= mu * inv[0] * r_old[a];
            qn[3 + a] += mu * inv[1] * r_old[a];
            ph[a] -= mu * r_old[a] / h;
            ph[3 + a] += mu * r_old[a] / h;
        }
        let mut pn: Vec<f64> = (0..6).map(|c| ph[c] - 0.5 * h * self.k * qn[c]).collect();
        self.project(&qn, &mut pn);
        (qn, pn)
    }
}

/// Step size giving the requested `h̄` on `system` with safety factor √2.
pub fn dt_for_h_bar(system: &System, h_bar: f64) -> f64 {
    let t = aiamd::aia::fastest_period(system).unwrap();
    h_bar * t / (std::f64::consts::SQRT_2 * 2.0 * std::f64::consts::PI)
}
