//! Adaptive choice of the two-stage parameter `b`.
//!
//! For the standard harmonic oscillator integrated with step `h`, the
//! expected energy error of a two-stage scheme is bounded by `ρ(h, b)`.
//! Given a system and a step size, the fastest bond period fixes a
//! nondimensional step `h̄`, and `b` is chosen to minimise the worst bound
//! `max_{0<h≤h̄} ρ(h, b)` over `b ∈ [0.1932, 0.25]`.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::System;

pub const B_MIN: f64 = 0.1932;
pub const B_MAX: f64 = 0.25;
pub const DEFAULT_SAFETY_FACTOR: f64 = SQRT_2;
/// Grid points used to maximise `ρ` over `(0, h̄]`.
pub const DEFAULT_H_POINTS: usize = 2000;
const COARSE_POINTS: usize = 61;
const B_TOLERANCE: f64 = 1e-6;
/// Within this distance of ¼ the cancelled closed form is used.
const QUARTER_WINDOW: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AiaResult {
    /// Fastest harmonic period `T̃`.
    pub t_min: f64,
    pub dt: f64,
    pub safety_factor: f64,
    pub h_bar: f64,
    pub b_opt: f64,
    /// `max_{0<h≤h̄} ρ(h, b_opt)`.
    pub objective: f64,
}

impl AiaResult {
    /// Step sizes strictly below this keep `h̄ < 4`.
    pub fn max_dt(&self) -> f64 {
        max_stable_dt(self.t_min, self.safety_factor)
    }
}

/// Energy-error bound for the two-stage scheme on the standard oscillator;
/// `+∞` wherever the denominator is not positive (unstable step).
pub fn rho(h: f64, b: f64) -> Result<f64> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::Domain(format!("rho needs h > 0, got {h}")));
    }
    if !(b.is_finite() && b > 0.0 && b < 0.5) {
        return Err(Error::Domain(format!("rho needs 0 < b < 0.5, got {b}")));
    }
    Ok(rho_unchecked(h, b))
}

#[inline]
fn rho_unchecked(h: f64, b: f64) -> f64 {
    let h2 = h * h;
    let c = 0.5 - b;
    let den = 8.0 * (2.0 - b * h2) * (2.0 - c * h2) * (1.0 - b * c * h2);
    if !(den > 0.0) {
        return f64::INFINITY;
    }
    let poly = 2.0 * b * b * c * h2 + 4.0 * b * b - 6.0 * b + 1.0;
    h2 * h2 * poly * poly / den
}

/// `ρ(h, ¼) = h⁴ / (32 (16 − h²))`, free of the removable 0/0 at `h = √8`.
pub fn rho_quarter(h: f64) -> Result<f64> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::Domain(format!("rho needs h > 0, got {h}")));
    }
    Ok(rho_quarter_unchecked(h))
}

#[inline]
fn rho_quarter_unchecked(h: f64) -> f64 {
    if h >= 4.0 {
        return f64::INFINITY;
    }
    let h2 = h * h;
    h2 * h2 / (32.0 * (16.0 - h2))
}

fn is_quarter(b: f64) -> bool {
    (b - 0.25).abs() < QUARTER_WINDOW
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BondPeriod {
    pub i: usize,
    pub j: usize,
    pub period: f64,
}

/// `T = 2π √(μ/k)` for every harmonic bond. Constrained pairs carry no
/// bond and therefore never appear.
pub fn bond_periods(system: &System) -> Result<Vec<BondPeriod>> {
    let m = system.masses();
    let periods: Vec<_> = system
        .bonds()
        .iter()
        .map(|b| {
            let mu = m[b.i] * m[b.j] / (m[b.i] + m[b.j]);
            BondPeriod {
                i: b.i,
                j: b.j,
                period: 2.0 * PI * (mu / b.k).sqrt(),
            }
        })
        .collect();
    if periods.is_empty() {
        return Err(Error::NoBonds);
    }
    Ok(periods)
}

pub fn fastest_period(system: &System) -> Result<f64> {
    Ok(bond_periods(system)?
        .iter()
        .map(|p| p.period)
        .fold(f64::INFINITY, f64::min))
}

/// `h̄ = safety · 2π · Δt / T̃`.
pub fn h_bar(dt: f64, t_min: f64, safety_factor: f64) -> Result<f64> {
    for (name, x) in [("dt", dt), ("t_min", t_min), ("safety_factor", safety_factor)] {
        if !(x.is_finite() && x > 0.0) {
            return Err(Error::Domain(format!("{name} must be positive, got {x}")));
        }
    }
    Ok(safety_factor * 2.0 * PI * dt / t_min)
}

/// The step size at which `h̄` reaches 4.
pub fn max_stable_dt(t_min: f64, safety_factor: f64) -> f64 {
    4.0 * t_min / (safety_factor * 2.0 * PI)
}

/// `max_{0<h≤h̄} ρ(h, b)` on a uniform grid of [`DEFAULT_H_POINTS`] points.
pub fn objective(b: f64, h_bar: f64) -> Result<f64> {
    objective_with(b, h_bar, DEFAULT_H_POINTS)
}

pub fn objective_with(b: f64, h_bar: f64, n_points: usize) -> Result<f64> {
    if !(h_bar.is_finite() && h_bar > 0.0) {
        return Err(Error::Domain(format!("h_bar must be positive, got {h_bar}")));
    }
    if !(b >= B_MIN - 1e-12 && b <= B_MAX + 1e-12) {
        return Err(Error::Domain(format!("b must lie in [{B_MIN}, {B_MAX}], got {b}")));
    }
    if n_points == 0 {
        return Err(Error::Domain("objective grid needs at least one point".into()));
    }
    Ok(objective_unchecked(b, h_bar, n_points))
}

fn objective_unchecked(b: f64, h_bar: f64, n_points: usize) -> f64 {
    let quarter = is_quarter(b);
    // The first root of the denominator sits at h² = 2 / max(b, ½ − b);
    // past it the scheme is unstable even if no grid point lands in the
    // (possibly very narrow) unstable window.
    if !quarter && h_bar * h_bar >= 2.0 / b.max(0.5 - b) {
        return f64::INFINITY;
    }
    let mut worst = 0.0f64;
    for k in 1..=n_points {
        let h = h_bar * k as f64 / n_points as f64;
        let r = if quarter {
            rho_quarter_unchecked(h)
        } else {
            rho_unchecked(h, b)
        };
        if r == f64::INFINITY {
            return r;
        }
        worst = worst.max(r);
    }
    worst
}

/// Minimise `f` on `[lo, hi]` by golden-section search down to `tol`.
fn golden_section<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while hi - lo > tol {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// The minimising `b` for a given `h̄`, with its objective value.
///
/// A 61-point scan over `[B_MIN, B_MAX]` picks the best bracket, which is
/// then refined by golden-section search. The refined point only replaces
/// the scan point if it is strictly better, so optima at either end of the
/// range come back exactly as `B_MIN` or `B_MAX`.
pub fn optimal_b(h_bar: f64) -> Result<(f64, f64)> {
    optimal_b_with(h_bar, DEFAULT_H_POINTS)
}

pub fn optimal_b_with(h_bar: f64, n_points: usize) -> Result<(f64, f64)> {
    if !(h_bar.is_finite() && h_bar > 0.0) {
        return Err(Error::Domain(format!("h_bar must be positive, got {h_bar}")));
    }
    if h_bar >= 4.0 {
        return Err(Error::Domain(format!("no two-stage scheme is stable for h_bar = {h_bar} >= 4")));
    }
    let f = |b: f64| objective_unchecked(b, h_bar, n_points);
    let step = (B_MAX - B_MIN) / (COARSE_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..COARSE_POINTS)
        .map(|k| if k + 1 == COARSE_POINTS { B_MAX } else { B_MIN + k as f64 * step })
        .collect();
    let values: Vec<f64> = grid.iter().map(|&b| f(b)).collect();
    let best = values
        .iter()
        .enumerate()
        .fold(0, |best, (k, v)| if *v < values[best] { k } else { best });
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(COARSE_POINTS - 1)];
    let (b_ref, f_ref) = golden_section(f, lo, hi, B_TOLERANCE);
    if f_ref < values[best] {
        Ok((b_ref, f_ref))
    } else {
        Ok((grid[best], values[best]))
    }
}

/// Adaptive selection for `system` at step `dt`.
pub fn select_b(system: &System, dt: f64, safety_factor: f64) -> Result<AiaResult> {
    let t_min = fastest_period(system)?;
    select_b_for_period(t_min, dt, safety_factor)
}

pub fn select_b_for_period(t_min: f64, dt: f64, safety_factor: f64) -> Result<AiaResult> {
    let hb = h_bar(dt, t_min, safety_factor)?;
    if hb >= 4.0 {
        return Err(Error::UnstableStepSize {
            dt,
            h_bar: hb,
            max_dt: max_stable_dt(t_min, safety_factor),
        });
    }
    let (b_opt, objective) = optimal_b(hb)?;
    Ok(AiaResult {
        t_min,
        dt,
        safety_factor,
        h_bar: hb,
        b_opt,
        objective,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimestepStatus {
    Ok,
    Warning,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BondCheck {
    pub i: usize,
    pub j: usize,
    pub period: f64,
    pub status: TimestepStatus,
}

/// Error unless `5Δt < T`; warning while `10Δt ≥ T`.
pub fn classify_period(period: f64, dt: f64) -> TimestepStatus {
    if period <= 5.0 * dt {
        TimestepStatus::Error
    } else if period <= 10.0 * dt {
        TimestepStatus::Warning
    } else {
        TimestepStatus::Ok
    }
}

/// Classify every bond; the scan never stops at the first problem.
pub fn verlet_timestep_check(system: &System, dt: f64) -> Result<Vec<BondCheck>> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Domain(format!("dt must be positive, got {dt}")));
    }
    let periods = match bond_periods(system) {
        Ok(p) => p,
        Err(Error::NoBonds) => Vec::new(),
        Err(e) => return Err(e),
    };
    Ok(periods
        .into_iter()
        .map(|p| BondCheck {
            i: p.i,
            j: p.j,
            period: p.period,
            status: classify_period(p.period, dt),
        })
        .collect())
}
