//! Kick/drift splitting integrators.
//!
//! Every scheme is a sequence of kick–drift–kick segments. Velocity Verlet
//! is one segment `(Δt/2, Δt, Δt/2)`; the two-stage family runs the two
//! half steps `(bΔt, Δt/2, (½−b)Δt)` and `((½−b)Δt, Δt/2, bΔt)`. The force
//! evaluated at the end of a segment is cached and reused by the next
//! segment's leading kick, so `I` two-stage steps cost `2I + 1` force
//! evaluations and `I` Verlet steps cost `I + 1`.
//!
//! When the system carries distance constraints each segment becomes a
//! RATTLE-style update: the leading kick carries a position-level
//! multiplier (SHAKE iteration) and the trailing kick a velocity-level one.

use serde::{Deserialize, Serialize};

use crate::aia::{self, AiaResult};
use crate::error::{Error, Result};
use crate::forces::{separation, ForceEval, Hamiltonian};
use crate::system::{PhaseState, System};

/// Recommended intermediate member of the two-stage family.
pub const BCSS_B: f64 = 0.2113;
/// Minimum error-constant member of the family.
pub const MIN_ERROR_B: f64 = 0.1932;
/// The member equivalent to two velocity Verlet half steps.
pub const VERLET_EQUIVALENT_B: f64 = 0.25;

/// A validated two-stage parameter `b ∈ (0, ½)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct SplitParameter(f64);

impl SplitParameter {
    pub fn new(b: f64) -> Result<Self> {
        if b.is_finite() && b > 0.0 && b < 0.5 {
            Ok(Self(b))
        } else {
            Err(Error::InvalidArgument(format!(
                "two-stage parameter b must lie in (0, 0.5), got {b}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for SplitParameter {
    type Error = Error;

    fn try_from(b: f64) -> Result<Self> {
        Self::new(b)
    }
}

impl From<SplitParameter> for f64 {
    fn from(b: SplitParameter) -> f64 {
        b.0
    }
}

/// What the user asked for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum IntegratorSpec {
    Verlet,
    TwoStage(SplitParameter),
    /// Choose `b` for the system and step size at run time.
    Adaptive { safety_factor: f64 },
}

impl IntegratorSpec {
    pub fn two_stage(b: f64) -> Result<Self> {
        Ok(Self::TwoStage(SplitParameter::new(b)?))
    }

    pub fn adaptive() -> Self {
        Self::Adaptive {
            safety_factor: aia::DEFAULT_SAFETY_FACTOR,
        }
    }

    /// Resolve a preset name.
    ///
    /// `md-vv` is velocity Verlet, `two-s` the BCSS member, `two-s-minE` the
    /// minimum-error member, `two-s-verlet` the `b = 1/4` member and
    /// `two-s-AIA` the adaptive choice.
    pub fn from_preset(name: &str) -> Result<Self> {
        match name {
            "md-vv" | "verlet" => Ok(Self::Verlet),
            "two-s" | "bcss" => Self::two_stage(BCSS_B),
            "two-s-minE" | "min-error" => Self::two_stage(MIN_ERROR_B),
            "two-s-verlet" | "verlet-equivalent" => Self::two_stage(VERLET_EQUIVALENT_B),
            "two-s-AIA" | "aia" => Ok(Self::adaptive()),
            other => Err(Error::InvalidArgument(format!("unknown integrator preset '{other}'"))),
        }
    }

    /// Turn the spec into a concrete scheme. Adaptive specs run the `b`
    /// selection for `system` at step `dt`.
    pub fn resolve(&self, system: &System, dt: f64) -> Result<(Scheme, Option<AiaResult>)> {
        match *self {
            Self::Verlet => Ok((Scheme::Verlet, None)),
            Self::TwoStage(b) => Ok((Scheme::TwoStage(b), None)),
            Self::Adaptive { safety_factor } => {
                let sel = aia::select_b(system, dt, safety_factor)?;
                Ok((Scheme::TwoStage(SplitParameter::new(sel.b_opt)?), Some(sel)))
            }
        }
    }
}

/// A concrete, runnable scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Scheme {
    Verlet,
    TwoStage(SplitParameter),
}

impl Scheme {
    /// Force evaluations per step once the cache is warm.
    pub fn stages(&self) -> u64 {
        match self {
            Self::Verlet => 1,
            Self::TwoStage(_) => 2,
        }
    }

    /// `(leading kick, drift, trailing kick)` durations.
    fn segments(&self, dt: f64) -> ([f64; 3], Option<[f64; 3]>) {
        match *self {
            Self::Verlet => ([0.5 * dt, dt, 0.5 * dt], None),
            Self::TwoStage(b) => {
                let b = b.value();
                let (first, second) = two_stage_halves(dt, b);
                (first, Some(second))
            }
        }
    }
}

fn two_stage_halves(dt: f64, b: f64) -> ([f64; 3], [f64; 3]) {
    let outer = b * dt;
    let inner = (0.5 - b) * dt;
    ([outer, 0.5 * dt, inner], [inner, 0.5 * dt, outer])
}

/// Which half of a two-stage step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Half {
    First,
    Second,
}

/// Iteration controls for the constraint solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSolve {
    /// Position residuals are measured relative to the constraint length,
    /// velocity residuals `ĝ'(q)M⁻¹p` in absolute terms.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for ConstraintSolve {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 500,
        }
    }
}

impl ConstraintSolve {
    pub fn new(tolerance: f64, max_iterations: usize) -> Result<Self> {
        if !(tolerance.is_finite() && tolerance > 0.0) || max_iterations == 0 {
            return Err(Error::InvalidArgument(
                "constraint tolerance must be positive and max_iterations at least 1".into(),
            ));
        }
        Ok(Self {
            tolerance,
            max_iterations,
        })
    }
}

/// Momentum kick `p' = p + τ F`.
pub fn kick(state: &PhaseState, tau: f64, forces: &[f64]) -> Result<PhaseState> {
    if forces.len() != state.len() {
        return Err(Error::DimensionMismatch {
            expected: state.len(),
            found: forces.len(),
        });
    }
    let mut out = state.clone();
    kick_in_place(out.parts_mut().1, tau, forces);
    Ok(out)
}

/// Position drift `q' = q + τ M⁻¹ p`.
pub fn drift(state: &PhaseState, tau: f64, system: &System) -> Result<PhaseState> {
    system.check_state(state)?;
    let mut out = state.clone();
    let (q, p) = out.parts_mut();
    drift_in_place(system, q, p, tau);
    Ok(out)
}

#[inline]
fn kick_in_place(p: &mut [f64], tau: f64, forces: &[f64]) {
    for (pi, fi) in p.iter_mut().zip(forces) {
        *pi += tau * fi;
    }
}

#[inline]
fn drift_in_place(system: &System, q: &mut [f64], p: &[f64], tau: f64) {
    let dim = system.dimension();
    for ((qi, pi), m) in q.chunks_exact_mut(dim).zip(p.chunks_exact(dim)).zip(system.masses()) {
        let s = tau / m;
        for (x, v) in qi.iter_mut().zip(pi) {
            *x += s * v;
        }
    }
}

/// Largest `||q_i − q_j| − d| / d` over all constraints.
pub fn position_residual(system: &System, q: &[f64]) -> f64 {
    let dim = system.dimension();
    let mut r = [0.0; 3];
    system
        .constraints()
        .iter()
        .map(|c| (separation(q, dim, c.i, c.j, &mut r) - c.length).abs() / c.length)
        .fold(0.0, f64::max)
}

/// Largest `|r̂_ij · (v_i − v_j)|` over all constraints.
pub fn velocity_residual(system: &System, q: &[f64], p: &[f64]) -> f64 {
    let dim = system.dimension();
    let m = system.masses();
    let mut r = [0.0; 3];
    system
        .constraints()
        .iter()
        .map(|c| {
            let len = separation(q, dim, c.i, c.j, &mut r);
            let rv: f64 = (0..dim)
                .map(|a| r[a] * (p[c.i * dim + a] / m[c.i] - p[c.j * dim + a] / m[c.j]))
                .sum();
            (rv / len).abs()
        })
        .fold(0.0, f64::max)
}

fn check_manifold(system: &System, state: &PhaseState, solve: &ConstraintSolve) -> Result<()> {
    if system.constraints().is_empty() {
        return Ok(());
    }
    let pos = position_residual(system, state.q());
    if !(pos <= solve.tolerance) {
        return Err(Error::ConstraintViolation {
            level: "position",
            residual: pos,
            tolerance: solve.tolerance,
        });
    }
    let vel = velocity_residual(system, state.q(), state.p());
    if !(vel <= solve.tolerance) {
        return Err(Error::ConstraintViolation {
            level: "velocity",
            residual: vel,
            tolerance: solve.tolerance,
        });
    }
    Ok(())
}

/// SHAKE: adjust `q` (and the momenta that produced it) along the constraint
/// directions at `q_ref` until every length is restored.
fn solve_positions(
    system: &System,
    q_ref: &[f64],
    q: &mut [f64],
    p: &mut [f64],
    tau_drift: f64,
    solve: &ConstraintSolve,
) -> Result<()> {
    let dim = system.dimension();
    let m = system.masses();
    let mut r = [0.0; 3];
    let mut s = [0.0; 3];
    let mut worst = f64::INFINITY;
    for _ in 0..solve.max_iterations {
        worst = 0.0f64;
        for c in system.constraints() {
            let len = separation(q, dim, c.i, c.j, &mut r);
            let resid = (len - c.length).abs() / c.length;
            worst = worst.max(resid);
            // Corrections are applied even below tolerance: the update is a
            // Newton step, so the confirming sweep drives the residual to
            // roundoff and keeps the momentum correction (Δq / τ) accurate.
            separation(q_ref, dim, c.i, c.j, &mut s);
            let w = 1.0 / m[c.i] + 1.0 / m[c.j];
            let rs: f64 = (0..dim).map(|a| r[a] * s[a]).sum();
            if rs.abs() < f64::MIN_POSITIVE {
                return Err(Error::ConstraintNonConvergence {
                    iterations: 0,
                    residual: resid,
                });
            }
            let gamma = (c.length * c.length - len * len) / (2.0 * tau_drift * w * rs);
            for a in 0..dim {
                let dp = gamma * s[a];
                p[c.i * dim + a] += dp;
                p[c.j * dim + a] -= dp;
                q[c.i * dim + a] += tau_drift * dp / m[c.i];
                q[c.j * dim + a] -= tau_drift * dp / m[c.j];
            }
        }
        if worst <= solve.tolerance {
            return Ok(());
        }
    }
    let worst = worst.max(position_residual(system, q));
    if worst <= solve.tolerance {
        return Ok(());
    }
    Err(Error::ConstraintNonConvergence {
        iterations: solve.max_iterations,
        residual: worst,
    })
}

/// RATTLE velocity stage: remove the relative velocity along each
/// constraint at `q`.
pub(crate) fn solve_velocities(system: &System, q: &[f64], p: &mut [f64], solve: &ConstraintSolve) -> Result<()> {
    let dim = system.dimension();
    let m = system.masses();
    let mut r = [0.0; 3];
    let mut worst = f64::INFINITY;
    for _ in 0..solve.max_iterations {
        worst = 0.0f64;
        for c in system.constraints() {
            let len = separation(q, dim, c.i, c.j, &mut r);
            let rv: f64 = (0..dim)
                .map(|a| r[a] * (p[c.i * dim + a] / m[c.i] - p[c.j * dim + a] / m[c.j]))
                .sum();
            let resid = (rv / len).abs();
            worst = worst.max(resid);
            if resid <= solve.tolerance {
                continue;
            }
            let w = 1.0 / m[c.i] + 1.0 / m[c.j];
            let kappa = -rv / (len * len * w);
            for a in 0..dim {
                p[c.i * dim + a] += kappa * r[a];
                p[c.j * dim + a] -= kappa * r[a];
            }
        }
        if worst <= solve.tolerance {
            return Ok(());
        }
    }
    let worst = worst.max(velocity_residual(system, q, p));
    if worst <= solve.tolerance {
        return Ok(());
    }
    Err(Error::ConstraintNonConvergence {
        iterations: solve.max_iterations,
        residual: worst,
    })
}

#[derive(Debug, Clone)]
struct CachedForce {
    q: Vec<f64>,
    eval: ForceEval,
}

/// A stepping engine bound to one model and scheme, carrying the force
/// cache and an evaluation counter.
pub struct Integrator<'a, H: Hamiltonian + ?Sized> {
    model: &'a H,
    scheme: Scheme,
    solve: ConstraintSolve,
    cache: Option<CachedForce>,
    force_evals: u64,
}

impl<'a, H: Hamiltonian + ?Sized> Integrator<'a, H> {
    pub fn new(model: &'a H, scheme: Scheme, solve: ConstraintSolve) -> Self {
        Self {
            model,
            scheme,
            solve,
            cache: None,
            force_evals: 0,
        }
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn force_evals(&self) -> u64 {
        self.force_evals
    }

    /// Force evaluation at `q`, served from the cache when it matches.
    pub fn force_at(&mut self, q: &[f64]) -> Result<&ForceEval> {
        let hit = matches!(&self.cache, Some(c) if c.q == q);
        if !hit {
            let eval = self.model.evaluate(q)?;
            self.force_evals += 1;
            self.cache = Some(CachedForce { q: q.to_vec(), eval });
        }
        Ok(&self.cache.as_ref().expect("cache populated").eval)
    }

    /// Install a known evaluation at `q`, e.g. when restoring a saved state.
    pub fn prime(&mut self, q: &[f64], eval: ForceEval) {
        self.cache = Some(CachedForce { q: q.to_vec(), eval });
    }

    pub fn cached(&self) -> Option<&ForceEval> {
        self.cache.as_ref().map(|c| &c.eval)
    }

    /// Advance `state` by one step of length `dt`.
    pub fn step(&mut self, state: &mut PhaseState, dt: f64) -> Result<()> {
        check_dt(dt)?;
        let system = self.model.system();
        system.check_state(state)?;
        check_manifold(system, state, &self.solve)?;
        let (first, second) = self.scheme.segments(dt);
        self.segment(state, first)?;
        if let Some(second) = second {
            self.segment(state, second)?;
        }
        Ok(())
    }

    /// One kick–drift–kick segment; manifold preconditions are the caller's.
    fn segment(&mut self, state: &mut PhaseState, [tau_a, tau_d, tau_b]: [f64; 3]) -> Result<()> {
        let model = self.model;
        let system = model.system();
        let solve = self.solve;
        let constrained = !system.constraints().is_empty();
        let q_ref = if constrained { Some(state.q().to_vec()) } else { None };
        {
            let forces = &self.force_at(state.q())?.forces;
            let (q, p) = state.parts_mut();
            kick_in_place(p, tau_a, forces);
            drift_in_place(system, q, p, tau_d);
        }
        if let Some(q_ref) = &q_ref {
            let (q, p) = state.parts_mut();
            solve_positions(system, q_ref, q, p, tau_d, &solve)?;
        }
        let eval = model.evaluate(state.q())?;
        self.force_evals += 1;
        {
            let (q, p) = state.parts_mut();
            kick_in_place(p, tau_b, &eval.forces);
            if constrained {
                solve_velocities(system, q, p, &solve)?;
            }
        }
        self.cache = Some(CachedForce {
            q: state.q().to_vec(),
            eval,
        });
        Ok(())
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt.is_finite() && dt > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("step size must be positive, got {dt}")))
    }
}

/// One two-stage step from a cold cache (three force evaluations).
pub fn two_stage_step<H: Hamiltonian + ?Sized>(state: &PhaseState, dt: f64, b: f64, model: &H) -> Result<PhaseState> {
    let scheme = Scheme::TwoStage(SplitParameter::new(b)?);
    let mut out = state.clone();
    Integrator::new(model, scheme, ConstraintSolve::default()).step(&mut out, dt)?;
    Ok(out)
}

/// One velocity Verlet step from a cold cache.
pub fn verlet_step<H: Hamiltonian + ?Sized>(state: &PhaseState, dt: f64, model: &H) -> Result<PhaseState> {
    let mut out = state.clone();
    Integrator::new(model, Scheme::Verlet, ConstraintSolve::default()).step(&mut out, dt)?;
    Ok(out)
}

/// One constrained half of a two-stage step.
pub fn constrained_half_step<H: Hamiltonian + ?Sized>(
    state: &PhaseState,
    half: Half,
    dt: f64,
    b: f64,
    model: &H,
    solve: ConstraintSolve,
) -> Result<PhaseState> {
    check_dt(dt)?;
    let b = SplitParameter::new(b)?.value();
    let system = model.system();
    system.check_state(state)?;
    check_manifold(system, state, &solve)?;
    let (first, second) = two_stage_halves(dt, b);
    let taus = match half {
        Half::First => first,
        Half::Second => second,
    };
    let mut out = state.clone();
    Integrator::new(model, Scheme::TwoStage(SplitParameter(b)), solve).segment(&mut out, taus)?;
    Ok(out)
}

/// Both constrained halves composed.
pub fn two_stage_constrained_step<H: Hamiltonian + ?Sized>(
    state: &PhaseState,
    dt: f64,
    b: f64,
    model: &H,
    solve: ConstraintSolve,
) -> Result<PhaseState> {
    let scheme = Scheme::TwoStage(SplitParameter::new(b)?);
    let mut out = state.clone();
    Integrator::new(model, scheme, solve).step(&mut out, dt)?;
    Ok(out)
}

/// States after each of `n_steps` steps.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub scheme: Scheme,
    pub selection: Option<AiaResult>,
    pub states: Vec<PhaseState>,
    pub force_evals: u64,
}

pub fn integrate<H: Hamiltonian + ?Sized>(
    initial: &PhaseState,
    spec: IntegratorSpec,
    dt: f64,
    n_steps: usize,
    model: &H,
    solve: ConstraintSolve,
) -> Result<Trajectory> {
    if n_steps == 0 {
        return Err(Error::InvalidArgument("n_steps must be at least 1".into()));
    }
    check_dt(dt)?;
    let (scheme, selection) = spec.resolve(model.system(), dt)?;
    let mut engine = Integrator::new(model, scheme, solve);
    let mut state = initial.clone();
    let mut states = Vec::with_capacity(n_steps);
    for _ in 0..n_steps {
        engine.step(&mut state, dt)?;
        states.push(state.clone());
    }
    Ok(Trajectory {
        scheme,
        selection,
        states,
        force_evals: engine.force_evals(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{build_constrained_dumbbell, harmonic_chain_in};

    fn oscillator() -> System {
        System::builder(1).particle(1.0).restraint(0, vec![0.0], 1.0, 0.0).build().unwrap()
    }

    fn st(q: &[f64], p: &[f64]) -> PhaseState {
        PhaseState::new(q.to_vec(), p.to_vec()).unwrap()
    }

    #[test]
    fn presets_resolve_exactly() {
        assert_eq!(IntegratorSpec::from_preset("two-s").unwrap(), IntegratorSpec::two_stage(0.2113).unwrap());
        assert_eq!(
            IntegratorSpec::from_preset("two-s-minE").unwrap(),
            IntegratorSpec::TwoStage(SplitParameter(0.1932))
        );
        assert_eq!(
            IntegratorSpec::from_preset("two-s-verlet").unwrap(),
            IntegratorSpec::TwoStage(SplitParameter(0.25))
        );
        assert_eq!(IntegratorSpec::from_preset("md-vv").unwrap(), IntegratorSpec::Verlet);
        assert!(matches!(IntegratorSpec::from_preset("two-s-AIA").unwrap(), IntegratorSpec::Adaptive { .. }));
        assert!(IntegratorSpec::from_preset("four-s").is_err());
    }

    #[test]
    fn degenerate_b_rejected_at_construction() {
        for b in [0.0, -0.1, 0.5, 0.7, f64::NAN] {
            assert!(SplitParameter::new(b).is_err(), "{b}");
        }
        assert!(serde_json::from_str::<SplitParameter>("0.6").is_err());
    }

    #[test]
    fn kick_examples() {
        let s = st(&[1.0, 2.0, 3.0], &[0.5, 0.0, -1.0]);
        assert_eq!(kick(&s, 0.0, &[9.0, 9.0, 9.0]).unwrap(), s);
        let rest = st(&[0.0; 3], &[0.0; 3]);
        assert_eq!(kick(&rest, 1.0, &[2.0, 0.0, 0.0]).unwrap().p(), &[2.0, 0.0, 0.0]);
        let f = [0.3, -1.1, 2.0];
        let twice = kick(&kick(&s, 0.25, &f).unwrap(), 0.5, &f).unwrap();
        let once = kick(&s, 0.75, &f).unwrap();
        for (a, b) in twice.p().iter().zip(once.p()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(kick(&s, 1.0, &[1.0]).is_err());
    }

    #[test]
    fn drift_examples() {
        let sys = System::builder(3).particle(2.0).build().unwrap();
        let s = st(&[0.0; 3], &[1.0, 0.0, 0.0]);
        assert_eq!(drift(&s, 0.0, &sys).unwrap(), s);
        assert_eq!(drift(&s, 2.0, &sys).unwrap().q(), &[1.0, 0.0, 0.0]);
        let halves = drift(&drift(&s, 0.7, &sys).unwrap(), 0.7, &sys).unwrap();
        let whole = drift(&s, 1.4, &sys).unwrap();
        assert!((halves.q()[0] - whole.q()[0]).abs() < 1e-15);
        let wrong = System::builder(2).particle(1.0).build().unwrap();
        assert!(matches!(drift(&s, 1.0, &wrong), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn free_particle_verlet_is_exact() {
        let sys = System::builder(3).particle(2.0).build().unwrap();
        let s = st(&[1.0, 2.0, 3.0], &[0.4, -0.2, 0.0]);
        let out = verlet_step(&s, 0.5, &sys).unwrap();
        assert_eq!(out.q(), &[1.1, 1.95, 3.0]);
        assert_eq!(out.p(), s.p());
    }

    #[test]
    fn invalid_step_arguments() {
        let sys = oscillator();
        let s = st(&[1.0], &[0.0]);
        assert!(two_stage_step(&s, 0.0, 0.2, &sys).is_err());
        assert!(two_stage_step(&s, 0.1, 0.5, &sys).is_err());
        assert!(integrate(&s, IntegratorSpec::Verlet, 0.1, 0, &sys, ConstraintSolve::default()).is_err());
        assert!(ConstraintSolve::new(0.0, 10).is_err());
        assert!(ConstraintSolve::new(1e-8, 0).is_err());
    }

    #[test]
    fn integrate_single_step_matches_step() {
        let sys = harmonic_chain_in(4, 1.0, 3.0, 1.0, 2).unwrap();
        let q = vec![0.0, 0.0, 1.1, 0.1, 2.0, -0.1, 3.2, 0.0];
        let s = PhaseState::new(q, vec![0.1, 0.0, -0.2, 0.3, 0.0, 0.0, 0.1, -0.1]).unwrap();
        let spec = IntegratorSpec::two_stage(0.21).unwrap();
        let traj = integrate(&s, spec, 0.2, 1, &sys, ConstraintSolve::default()).unwrap();
        assert_eq!(traj.states[0], two_stage_step(&s, 0.2, 0.21, &sys).unwrap());
        assert_eq!(traj.force_evals, 3);
    }

    #[test]
    fn constrained_step_keeps_manifold() {
        let sys = build_constrained_dumbbell(1.0, 1.0).unwrap();
        let s = st(&[0.0, 0.0, 0.0, 1.0, 0.0, 0.0], &[0.0, 0.3, 0.1, 0.5, -0.3, 0.0]);
        let s = {
            let mut p = s.p().to_vec();
            solve_velocities(&sys, s.q(), &mut p, &ConstraintSolve::default()).unwrap();
            s.with_momenta(p).unwrap()
        };
        for half in [Half::First, Half::Second] {
            let out = constrained_half_step(&s, half, 0.3, 0.2113, &sys, ConstraintSolve::default()).unwrap();
            assert!(position_residual(&sys, out.q()) <= 1e-10);
            assert!(velocity_residual(&sys, out.q(), out.p()) <= 1e-10);
        }
    }

    #[test]
    fn off_manifold_input_is_rejected() {
        let sys = build_constrained_dumbbell(1.0, 1.0).unwrap();
        let s = st(&[0.0, 0.0, 0.0, 1.001, 0.0, 0.0], &[0.0; 6]);
        let err = constrained_half_step(&s, Half::First, 0.1, 0.25, &sys, ConstraintSolve::default()).unwrap_err();
        assert!(matches!(err, Error::ConstraintViolation { level: "position", .. }));
        let s = st(&[0.0, 0.0, 0.0, 1.0, 0.0, 0.0], &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let err = two_stage_constrained_step(&s, 0.1, 0.25, &sys, ConstraintSolve::default()).unwrap_err();
        assert!(matches!(err, Error::ConstraintViolation { level: "velocity", .. }));
    }

    #[test]
    fn solver_reports_nonconvergence() {
        // two coupled constraints with a single allowed sweep
        let sys = System::builder(3)
            .particles(3, 1.0)
            .constraint(0, 1, 1.0)
            .constraint(1, 2, 1.0)
            .build()
            .unwrap();
        let q = [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0];
        let p = [0.0, 0.0, 3.0, 0.0, 2.0, -1.0, 4.0, 0.0, 1.0];
        let mut pv = p.to_vec();
        solve_velocities(&sys, &q, &mut pv, &ConstraintSolve::default()).unwrap();
        let s = st(&q, &pv);
        let tight = ConstraintSolve::new(1e-14, 1).unwrap();
        let err = two_stage_constrained_step(&s, 0.5, 0.25, &sys, ConstraintSolve { tolerance: 1e-10, ..tight });
        assert!(matches!(err, Err(Error::ConstraintNonConvergence { iterations: 1, .. })), "{err:?}");
    }
}
