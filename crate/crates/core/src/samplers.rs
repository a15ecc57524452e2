//! Molecular dynamics and hybrid Monte Carlo drivers.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aia::AiaResult;
use crate::error::{Error, Result};
use crate::forces::{separation, Hamiltonian};
use crate::integrators::{self, position_residual, ConstraintSolve, Integrator, IntegratorSpec, Scheme};
use crate::system::{degrees_of_freedom, kinetic_energy_of, PhaseState, System};

/// Generator for chain `replica` of a run seeded with `seed`.
///
/// Every replica shares the seed and gets its own ChaCha stream, so chains
/// never overlap and chain 0 is the same whether or not others run.
pub fn chain_rng(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

/// Draw `p ~ N(0, M k_B T)` and, when the system is constrained, project
/// out the components along the constraint gradients at `q`.
pub fn resample_momenta<R: Rng + ?Sized>(system: &System, q: &[f64], temperature: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {temperature}")));
    }
    system.check_coords(q)?;
    let kt = system.boltzmann() * temperature;
    let mut p: Vec<f64> = (0..system.n_coords())
        .map(|c| {
            let z: f64 = rng.sample(StandardNormal);
            (system.mass_of_coord(c) * kt).sqrt() * z
        })
        .collect();
    project_momenta(system, q, &mut p)?;
    Ok(p)
}

/// `p ← p − Jᵀ (J M⁻¹ Jᵀ)⁻¹ J M⁻¹ p` with `J` the unit constraint gradients.
pub fn project_momenta(system: &System, q: &[f64], p: &mut [f64]) -> Result<()> {
    let cons = system.constraints();
    if cons.is_empty() {
        return Ok(());
    }
    let dim = system.dimension();
    let m = system.masses();
    let nc = cons.len();
    let mut dirs = Vec::with_capacity(nc);
    let mut r = [0.0; 3];
    for c in cons {
        let len = separation(q, dim, c.i, c.j, &mut r);
        if len == 0.0 {
            return Err(Error::SingularConstraintJacobian);
        }
        let mut u = [0.0; 3];
        for a in 0..dim {
            u[a] = r[a] / len;
        }
        dirs.push(u);
    }
    let dot = |u: &[f64; 3], v: &[f64; 3]| (0..dim).map(|a| u[a] * v[a]).sum::<f64>();
    let mut a = DMatrix::<f64>::zeros(nc, nc);
    let mut rhs = DVector::<f64>::zeros(nc);
    for (k, ck) in cons.iter().enumerate() {
        let uk = &dirs[k];
        rhs[k] = (0..dim)
            .map(|x| uk[x] * (p[ck.i * dim + x] / m[ck.i] - p[ck.j * dim + x] / m[ck.j]))
            .sum();
        for (l, cl) in cons.iter().enumerate() {
            let ul = &dirs[l];
            let mut s = 0.0;
            // particles shared between constraint k and l couple them
            for (pk, sk) in [(ck.i, 1.0), (ck.j, -1.0)] {
                for (pl, sl) in [(cl.i, 1.0), (cl.j, -1.0)] {
                    if pk == pl {
                        s += sk * sl * dot(uk, ul) / m[pk];
                    }
                }
            }
            a[(k, l)] = s;
        }
    }
    let chol = a.cholesky().ok_or(Error::SingularConstraintJacobian)?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(*d), hi.max(*d)));
    if !(lo > 0.0) || (lo / hi).powi(2) < 1e-14 {
        return Err(Error::SingularConstraintJacobian);
    }
    let x = chol.solve(&rhs);
    for (k, c) in cons.iter().enumerate() {
        for a in 0..dim {
            p[c.i * dim + a] -= x[k] * dirs[k][a];
            p[c.j * dim + a] += x[k] * dirs[k][a];
        }
    }
    Ok(())
}

/// Accept with probability `min(1, exp(−β ΔH))`. NaN is rejected.
pub fn metropolis_accept<R: Rng + ?Sized>(delta_h: f64, beta: f64, rng: &mut R) -> bool {
    if delta_h <= 0.0 {
        return true;
    }
    if !(delta_h < f64::INFINITY) {
        return false;
    }
    let u: f64 = rng.random();
    u < (-beta * delta_h).exp()
}

/// Kinetic temperature `2K / (k_B N_dof)`.
pub fn instantaneous_temperature(system: &System, p: &[f64]) -> Result<f64> {
    let dof = degrees_of_freedom(system);
    if dof == 0 {
        return Err(Error::ZeroDof);
    }
    Ok(2.0 * kinetic_energy_of(system, p) / (system.boltzmann() * dof as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub step: u64,
    pub time: f64,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub potential: f64,
    pub kinetic: f64,
}

/// Per-record observable columns. HMC runs fill `delta_h` and `accepted`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    pub step: Vec<u64>,
    pub time: Vec<f64>,
    pub total: Vec<f64>,
    pub kinetic: Vec<f64>,
    pub potential: Vec<f64>,
    pub temperature: Vec<f64>,
    pub delta_h: Vec<f64>,
    pub accepted: Vec<bool>,
}

impl Observables {
    pub fn len(&self) -> usize {
        self.step.len()
    }

    pub fn is_empty(&self) -> bool {
        self.step.is_empty()
    }

    /// Column by its CSV name.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        match name {
            "step" => Some(self.step.iter().map(|s| *s as f64).collect()),
            "time" => Some(self.time.clone()),
            "H" => Some(self.total.clone()),
            "K" => Some(self.kinetic.clone()),
            "V" => Some(self.potential.clone()),
            "T_inst" => Some(self.temperature.clone()),
            "delta_H" if !self.delta_h.is_empty() => Some(self.delta_h.clone()),
            "accepted" if !self.accepted.is_empty() => {
                Some(self.accepted.iter().map(|a| if *a { 1.0 } else { 0.0 }).collect())
            }
            _ => None,
        }
    }

    fn push(&mut self, step: u64, time: f64, kinetic: f64, potential: f64, temperature: f64) {
        self.step.push(step);
        self.time.push(time);
        self.kinetic.push(kinetic);
        self.potential.push(potential);
        self.total.push(kinetic + potential);
        self.temperature.push(temperature);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scheme: Scheme,
    pub selection: Option<AiaResult>,
    /// Accepted proposals over proposals made; 1 for MD.
    pub acceptance_rate: f64,
    pub accepted: usize,
    pub n_proposals: usize,
    /// `H(Ψ(q,p)) − H(q,p)` for every proposal, accepted or not.
    pub delta_h: Vec<f64>,
    pub observables: Observables,
    pub frames: Vec<Frame>,
    pub force_evals: u64,
}

impl RunReport {
    fn new(scheme: Scheme, selection: Option<AiaResult>) -> Self {
        Self {
            scheme,
            selection,
            acceptance_rate: 0.0,
            accepted: 0,
            n_proposals: 0,
            delta_h: Vec::new(),
            observables: Observables::default(),
            frames: Vec::new(),
            force_evals: 0,
        }
    }

    pub fn mean_abs_delta_h(&self) -> f64 {
        if self.delta_h.is_empty() {
            return 0.0;
        }
        self.delta_h.iter().map(|d| d.abs()).sum::<f64>() / self.delta_h.len() as f64
    }

    pub fn max_abs_delta_h(&self) -> f64 {
        self.delta_h.iter().map(|d| d.abs()).fold(0.0, f64::max)
    }
}

/// A run that stopped early; `partial` holds everything recorded so far.
#[derive(Debug, Clone, Error)]
#[error("{error}")]
pub struct RunError {
    pub error: Error,
    pub partial: Box<RunReport>,
}

impl RunError {
    fn bare(error: Error) -> Self {
        Self {
            error,
            partial: Box::new(RunReport::new(Scheme::Verlet, None)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HmcConfig {
    pub temperature: f64,
    /// MD steps per proposal.
    pub n_md_steps: usize,
    pub dt: f64,
    pub integrator: IntegratorSpec,
    pub momentum_flip: bool,
    pub n_proposals: usize,
    pub seed: u64,
    /// RNG stream, one per independent chain.
    pub replica: u64,
    /// Save a frame every this many proposals.
    pub output_stride: usize,
    pub solve: ConstraintSolve,
}

impl HmcConfig {
    pub fn new(temperature: f64, n_md_steps: usize, dt: f64, integrator: IntegratorSpec, n_proposals: usize, seed: u64) -> Self {
        Self {
            temperature,
            n_md_steps,
            dt,
            integrator,
            momentum_flip: false,
            n_proposals,
            seed,
            replica: 0,
            output_stride: 1,
            solve: ConstraintSolve::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::InvalidArgument("temperature must be positive".into()));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if self.n_md_steps == 0 || self.n_proposals == 0 || self.output_stride == 0 {
            return Err(Error::InvalidArgument(
                "n_md_steps, n_proposals and output_stride must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

fn check_positions(system: &System, q: &[f64], solve: &ConstraintSolve) -> Result<()> {
    if system.constraints().is_empty() {
        return Ok(());
    }
    let r = position_residual(system, q);
    if r <= solve.tolerance {
        Ok(())
    } else {
        Err(Error::ConstraintViolation {
            level: "position",
            residual: r,
            tolerance: solve.tolerance,
        })
    }
}

/// Hybrid Monte Carlo with full momentum refresh every proposal.
///
/// Force evaluations are cached across proposals (a rejected proposal
/// restores the saved evaluation), so the total count is
/// `1 + n_proposals · n_md_steps · stages`.
pub fn run_hmc<H: Hamiltonian + ?Sized>(model: &H, initial: &PhaseState, cfg: &HmcConfig) -> Result<RunReport, RunError> {
    cfg.validate().map_err(RunError::bare)?;
    let system = model.system();
    system.check_state(initial).map_err(RunError::bare)?;
    check_positions(system, initial.q(), &cfg.solve).map_err(RunError::bare)?;
    let (scheme, selection) = cfg.integrator.resolve(system, cfg.dt).map_err(RunError::bare)?;

    let mut report = RunReport::new(scheme, selection);
    let mut engine = Integrator::new(model, scheme, cfg.solve);
    let mut rng = chain_rng(cfg.seed, cfg.replica);
    let beta = 1.0 / (system.boltzmann() * cfg.temperature);
    let mut state = initial.clone();

    let outcome = (|| -> Result<()> {
        for k in 0..cfg.n_proposals {
            let p = resample_momenta(system, state.q(), cfg.temperature, &mut rng)?;
            state = state.with_momenta(p)?;
            let saved_eval = engine.force_at(state.q())?.clone();
            let saved = state.clone();
            let h0 = kinetic_energy_of(system, state.p()) + saved_eval.potential;

            for _ in 0..cfg.n_md_steps {
                engine.step(&mut state, cfg.dt)?;
            }
            let v1 = engine.cached().expect("stepped at least once").potential;
            let h1 = kinetic_energy_of(system, state.p()) + v1;
            if !h1.is_finite() {
                return Err(Error::NonFiniteEnergy { step: k });
            }
            let delta = h1 - h0;
            let accept = metropolis_accept(delta, beta, &mut rng);
            if accept {
                report.accepted += 1;
            } else {
                state = if cfg.momentum_flip { saved.flipped() } else { saved };
                engine.prime(state.q(), saved_eval);
            }
            report.n_proposals += 1;
            report.delta_h.push(delta);

            let kin = kinetic_energy_of(system, state.p());
            let pot = engine.cached().expect("cache populated").potential;
            let temp = instantaneous_temperature(system, state.p())?;
            let step = (k + 1) as u64;
            let time = step as f64 * cfg.n_md_steps as f64 * cfg.dt;
            report.observables.push(step, time, kin, pot, temp);
            report.observables.delta_h.push(delta);
            report.observables.accepted.push(accept);
            if (k + 1) % cfg.output_stride == 0 {
                report.frames.push(Frame {
                    step,
                    time,
                    q: state.q().to_vec(),
                    p: state.p().to_vec(),
                    potential: pot,
                    kinetic: kin,
                });
            }
        }
        Ok(())
    })();

    report.force_evals = engine.force_evals();
    report.acceptance_rate = if report.n_proposals == 0 {
        0.0
    } else {
        report.accepted as f64 / report.n_proposals as f64
    };
    match outcome {
        Ok(()) => Ok(report),
        Err(error) => Err(RunError {
            error,
            partial: Box::new(report),
        }),
    }
}

/// Run `n` chains in parallel on streams `0..n`.
pub fn run_hmc_replicas<H: Hamiltonian + Sync + ?Sized>(
    model: &H,
    initial: &PhaseState,
    cfg: &HmcConfig,
    n: usize,
) -> Vec<Result<RunReport, RunError>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..n)
            .map(|r| {
                let cfg = HmcConfig {
                    replica: r as u64,
                    ..*cfg
                };
                scope.spawn(move || run_hmc(model, initial, &cfg))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("replica thread panicked")).collect()
    })
}

/// Deterministic isokinetic rescale applied every `interval` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rescale {
    pub target_temperature: f64,
    pub interval: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MdConfig {
    pub integrator: IntegratorSpec,
    pub dt: f64,
    pub n_steps: usize,
    pub rescale: Option<Rescale>,
    /// Save a frame every this many steps (step 0 included).
    pub output_stride: usize,
    pub solve: ConstraintSolve,
}

impl MdConfig {
    pub fn new(integrator: IntegratorSpec, dt: f64, n_steps: usize) -> Self {
        Self {
            integrator,
            dt,
            n_steps,
            rescale: None,
            output_stride: 1,
            solve: ConstraintSolve::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if self.n_steps == 0 || self.output_stride == 0 {
            return Err(Error::InvalidArgument("n_steps and output_stride must be at least 1".into()));
        }
        if let Some(r) = &self.rescale {
            if !(r.target_temperature.is_finite() && r.target_temperature > 0.0) || r.interval == 0 {
                return Err(Error::InvalidArgument(
                    "rescale needs a positive target temperature and interval".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Microcanonical trajectory, optionally with isokinetic rescaling.
///
/// One observable row is recorded for the initial state and one after
/// every step (after any rescale at that step).
pub fn run_md<H: Hamiltonian + ?Sized>(model: &H, initial: &PhaseState, cfg: &MdConfig) -> Result<RunReport, RunError> {
    cfg.validate().map_err(RunError::bare)?;
    let system = model.system();
    system.check_state(initial).map_err(RunError::bare)?;
    let (scheme, selection) = cfg.integrator.resolve(system, cfg.dt).map_err(RunError::bare)?;

    let mut report = RunReport::new(scheme, selection);
    let mut engine = Integrator::new(model, scheme, cfg.solve);
    let mut state = initial.clone();

    let outcome = (|| -> Result<()> {
        let record = |report: &mut RunReport, step: usize, state: &PhaseState, pot: f64| -> Result<()> {
            let kin = kinetic_energy_of(system, state.p());
            if !(kin + pot).is_finite() {
                return Err(Error::NonFiniteEnergy { step });
            }
            let temp = instantaneous_temperature(system, state.p())?;
            let time = step as f64 * cfg.dt;
            report.observables.push(step as u64, time, kin, pot, temp);
            if step % cfg.output_stride == 0 {
                report.frames.push(Frame {
                    step: step as u64,
                    time,
                    q: state.q().to_vec(),
                    p: state.p().to_vec(),
                    potential: pot,
                    kinetic: kin,
                });
            }
            Ok(())
        };
        let pot0 = engine.force_at(state.q())?.potential;
        record(&mut report, 0, &state, pot0)?;
        for step in 1..=cfg.n_steps {
            engine.step(&mut state, cfg.dt)?;
            if let Some(r) = &cfg.rescale {
                if step % r.interval == 0 {
                    rescale_to(system, &mut state, r.target_temperature, &cfg.solve)?;
                }
            }
            let pot = engine.cached().expect("stepped").potential;
            record(&mut report, step, &state, pot)?;
        }
        Ok(())
    })();

    report.force_evals = engine.force_evals();
    report.acceptance_rate = 1.0;
    match outcome {
        Ok(()) => Ok(report),
        Err(error) => Err(RunError {
            error,
            partial: Box::new(report),
        }),
    }
}

fn rescale_to(system: &System, state: &mut PhaseState, target: f64, solve: &ConstraintSolve) -> Result<()> {
    let t = instantaneous_temperature(system, state.p())?;
    if t <= 0.0 {
        return Ok(());
    }
    let scale = (target / t).sqrt();
    let mut p: Vec<f64> = state.p().iter().map(|x| x * scale).collect();
    if !system.constraints().is_empty() {
        integrators::solve_velocities(system, state.q(), &mut p, solve)?;
    }
    *state = state.with_momenta(p)?;
    Ok(())
}
