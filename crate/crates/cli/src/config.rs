//! Run configuration: flat `key = value` lines with `#` or `;` comments,
//! plus optional `[section]` blocks for inline topologies and restraints.

use std::collections::BTreeMap;
use std::f64::consts::SQRT_2;
use std::fmt::{self, Write as _};

use aiamd::integrators::ConstraintSolve;
use aiamd::samplers::Rescale;
use aiamd::system::{lattice_positions, line_positions, LennardJones};
use aiamd::{IntegratorSpec, System};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
}

fn at(line: usize, msg: impl Into<String>) -> ConfigError {
    ConfigError::Line { line, msg: msg.into() }
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Md,
    Hmc,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Md => "No",
            Method::Hmc => "HMC",
        }
    }
}

pub const INTEGRATORS: [&str; 5] = ["md-vv", "two-s", "two-s-minE", "two-s-verlet", "two-s-AIA"];

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleLine {
    pub mass: f64,
    pub position: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestraintLine {
    pub particle: usize,
    pub k: f64,
    pub quartic: f64,
    pub anchor: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SystemConfig {
    Chain {
        n_particles: usize,
        mass: f64,
        k_spring: f64,
        r0: f64,
        dimension: usize,
    },
    Dumbbell {
        mass: f64,
        bond_length: f64,
        dimension: usize,
    },
    LjCluster {
        n_particles: usize,
        epsilon: f64,
        sigma: f64,
        cutoff: f64,
        spacing: f64,
        dimension: usize,
    },
    Inline {
        dimension: usize,
        particles: Vec<ParticleLine>,
        bonds: Vec<(usize, usize, f64, f64)>,
        constraints: Vec<(usize, usize, f64)>,
        nonbonded: Option<LennardJones>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub method: Method,
    pub integrator: String,
    pub b: Option<f64>,
    pub dt: Option<f64>,
    pub nsteps: Option<usize>,
    pub initial_temperature: Option<f64>,
    pub rescale: Option<Rescale>,
    pub nr_md_steps: Option<usize>,
    pub n_proposals: Option<usize>,
    pub canonical_temperature: Option<f64>,
    pub momentum_flip: bool,
    pub seed: u64,
    pub safety_factor: f64,
    pub boltzmann: f64,
    pub output_stride: usize,
    pub trajectory: String,
    pub observables: String,
    pub constraint_tolerance: f64,
    pub constraint_max_iterations: usize,
    pub system: SystemConfig,
    pub restraints: Vec<RestraintLine>,
}

const MD_KEYS: [&str; 4] = ["nsteps", "initial_temperature", "rescale_temperature", "rescale_interval"];
const HMC_KEYS: [&str; 4] = ["nr_MD_steps", "n_proposals", "canonical_temperature", "momentum_flip"];

const SECTIONS: [&str; 5] = ["particles", "bonds", "constraints", "nonbonded", "restraints"];

struct Raw {
    keys: BTreeMap<String, (usize, String)>,
    sections: BTreeMap<&'static str, Vec<(usize, String)>>,
}

impl Raw {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut keys = BTreeMap::new();
        let mut sections: BTreeMap<&'static str, Vec<(usize, String)>> = BTreeMap::new();
        let mut current: Option<&'static str> = None;
        for (k, raw_line) in text.lines().enumerate() {
            let line = k + 1;
            let content = raw_line.split(['#', ';']).next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| at(line, format!("malformed section header '{content}'")))?
                    .trim();
                let known = SECTIONS
                    .iter()
                    .find(|s| **s == name)
                    .ok_or_else(|| at(line, format!("unknown section [{name}]")))?;
                if sections.contains_key(known) {
                    return Err(at(line, format!("section [{name}] appears twice")));
                }
                sections.insert(known, Vec::new());
                current = Some(known);
                continue;
            }
            match current {
                Some(s) if s != "nonbonded" => sections.get_mut(s).expect("inserted").push((line, content.to_string())),
                _ => {
                    let (key, value) = content
                        .split_once('=')
                        .ok_or_else(|| at(line, format!("expected 'key = value', found '{content}'")))?;
                    let (key, value) = (key.trim(), value.trim());
                    if key.is_empty() || value.is_empty() {
                        return Err(at(line, format!("expected 'key = value', found '{content}'")));
                    }
                    let key = match current {
                        Some(s) => format!("{s}.{key}"),
                        None => key.to_string(),
                    };
                    if keys.insert(key.clone(), (line, value.to_string())).is_some() {
                        return Err(at(line, format!("duplicate key '{key}'")));
                    }
                }
            }
        }
        Ok(Self { keys, sections })
    }

    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.keys.remove(key)
    }

    fn get<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|_| at(line, format!("invalid value '{v}' for '{key}'"))),
        }
    }

    fn positive(&mut self, key: &str) -> Result<Option<f64>, ConfigError> {
        let line = self.keys.get(key).map(|(l, _)| *l);
        match self.get::<f64>(key)? {
            Some(v) if !(v.is_finite() && v > 0.0) => Err(at(line.unwrap_or(0), format!("'{key}' must be positive, got {v}"))),
            other => Ok(other),
        }
    }

    fn count(&mut self, key: &str) -> Result<Option<usize>, ConfigError> {
        let line = self.keys.get(key).map(|(l, _)| *l);
        match self.get::<usize>(key)? {
            Some(0) => Err(at(line.unwrap_or(0), format!("'{key}' must be at least 1"))),
            other => Ok(other),
        }
    }

    fn yes_no(&mut self, key: &str) -> Result<Option<bool>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some((_, v)) if v.eq_ignore_ascii_case("yes") => Ok(Some(true)),
            Some((_, v)) if v.eq_ignore_ascii_case("no") => Ok(Some(false)),
            Some((line, v)) => Err(at(line, format!("'{key}' must be yes or no, got '{v}'"))),
        }
    }
}

fn numbers(line: usize, text: &str) -> Result<Vec<f64>, ConfigError> {
    text.split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| at(line, format!("'{t}' is not a number"))))
        .collect()
}

fn index(line: usize, x: f64) -> Result<usize, ConfigError> {
    if x >= 0.0 && x.fract() == 0.0 && x < usize::MAX as f64 {
        Ok(x as usize)
    } else {
        Err(at(line, format!("'{x}' is not a particle index")))
    }
}

fn rows(raw: &mut Raw, section: &str, width: impl Fn(usize) -> bool, what: &str) -> Result<Vec<(usize, Vec<f64>)>, ConfigError> {
    let lines = raw.sections.remove(section).unwrap_or_default();
    lines
        .into_iter()
        .map(|(line, text)| {
            let v = numbers(line, &text)?;
            if !width(v.len()) {
                return Err(at(line, format!("[{section}] rows are '{what}'")));
            }
            Ok((line, v))
        })
        .collect()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut raw = Raw::parse(text)?;

        let method = match raw.take("method") {
            None => Method::Md,
            Some((_, v)) if v.eq_ignore_ascii_case("hmc") => Method::Hmc,
            Some((_, v)) if v.eq_ignore_ascii_case("no") || v.eq_ignore_ascii_case("md") => Method::Md,
            Some((line, v)) => return Err(at(line, format!("method must be HMC or No, got '{v}'"))),
        };
        let foreign: &[&str] = match method {
            Method::Md => &HMC_KEYS,
            Method::Hmc => &MD_KEYS,
        };
        for key in foreign {
            if let Some((line, _)) = raw.keys.get(*key) {
                return Err(at(*line, format!("'{key}' does not apply to method = {}", method.name())));
            }
        }

        let (integrator_line, integrator) = raw.take("integrator").unwrap_or((0, "two-s-AIA".to_string()));
        if !INTEGRATORS.contains(&integrator.as_str()) {
            return Err(at(
                integrator_line,
                format!("unknown integrator '{integrator}' (expected one of {})", INTEGRATORS.join(", ")),
            ));
        }
        let b_line = raw.keys.get("b").map(|(l, _)| *l);
        let b = raw.get::<f64>("b")?;
        if let Some(b) = b {
            let line = b_line.unwrap_or(0);
            if integrator != "two-s" {
                return Err(at(line, format!("'b' only applies to integrator = two-s, not {integrator}")));
            }
            if !(b > 0.0 && b < 0.5) {
                return Err(at(line, format!("b must lie in (0, 0.5), got {b}")));
            }
        }

        let rescale_t = raw.positive("rescale_temperature")?;
        let rescale_n = raw.count("rescale_interval")?;
        let rescale = match (rescale_t, rescale_n) {
            (Some(target_temperature), Some(interval)) => Some(Rescale {
                target_temperature,
                interval,
            }),
            (None, None) => None,
            _ => return Err(invalid("rescale_temperature and rescale_interval must be given together")),
        };

        let mut cfg = RunConfig {
            method,
            integrator,
            b,
            dt: raw.positive("dt")?,
            nsteps: raw.count("nsteps")?,
            initial_temperature: raw.positive("initial_temperature")?,
            rescale,
            nr_md_steps: raw.count("nr_MD_steps")?,
            n_proposals: raw.count("n_proposals")?,
            canonical_temperature: raw.positive("canonical_temperature")?,
            momentum_flip: raw.yes_no("momentum_flip")?.unwrap_or(false),
            seed: raw.get("seed")?.unwrap_or(0),
            safety_factor: raw.positive("safety_factor")?.unwrap_or(SQRT_2),
            boltzmann: raw.positive("boltzmann")?.unwrap_or(1.0),
            output_stride: raw.count("output_stride")?.unwrap_or(10),
            trajectory: raw.take("trajectory").map(|v| v.1).unwrap_or_else(|| "trajectory.jsonl".into()),
            observables: raw.take("observables").map(|v| v.1).unwrap_or_else(|| "observables.csv".into()),
            constraint_tolerance: raw.positive("constraint_tolerance")?.unwrap_or(ConstraintSolve::default().tolerance),
            constraint_max_iterations: raw
                .count("constraint_max_iterations")?
                .unwrap_or(ConstraintSolve::default().max_iterations),
            system: SystemConfig::Dumbbell {
                mass: 1.0,
                bond_length: 1.0,
                dimension: 3,
            },
            restraints: Vec::new(),
        };
        cfg.system = parse_system(&mut raw)?;
        let dim = cfg.system.dimension();
        cfg.restraints = rows(&mut raw, "restraints", |n| n == 3 + dim, "particle k quartic anchor...")?
            .into_iter()
            .map(|(line, v)| {
                Ok(RestraintLine {
                    particle: index(line, v[0])?,
                    k: v[1],
                    quartic: v[2],
                    anchor: v[3..].to_vec(),
                })
            })
            .collect::<Result<_, ConfigError>>()?;

        if let Some((key, (line, _))) = raw.keys.iter().next() {
            return Err(at(*line, format!("unknown key '{key}'")));
        }
        if let Some((section, lines)) = raw.sections.iter().next() {
            let line = lines.first().map(|l| l.0).unwrap_or(0);
            return Err(at(line, format!("section [{section}] needs system = inline")));
        }
        cfg.solve()?;
        cfg.build_system()?;
        Ok(cfg)
    }

    pub fn solve(&self) -> Result<ConstraintSolve, ConfigError> {
        ConstraintSolve::new(self.constraint_tolerance, self.constraint_max_iterations).map_err(|e| invalid(e.to_string()))
    }

    pub fn integrator_spec(&self) -> IntegratorSpec {
        match self.integrator.as_str() {
            "two-s" if self.b.is_some() => IntegratorSpec::two_stage(self.b.expect("checked")).expect("b validated at parse"),
            "two-s-AIA" => IntegratorSpec::Adaptive {
                safety_factor: self.safety_factor,
            },
            name => IntegratorSpec::from_preset(name).expect("name validated at parse"),
        }
    }

    pub fn require_dt(&self) -> Result<f64, ConfigError> {
        self.dt.ok_or_else(|| invalid("missing required key 'dt'"))
    }

    /// The topology and the starting positions.
    pub fn build_system(&self) -> Result<(System, Vec<f64>), ConfigError> {
        let (builder, q) = self.system.builder()?;
        let mut builder = builder.boltzmann(self.boltzmann);
        for r in &self.restraints {
            builder = builder.restraint(r.particle, r.anchor.clone(), r.k, r.quartic);
        }
        let system = builder.build().map_err(|e| invalid(format!("invalid system: {e}")))?;
        Ok((system, q))
    }

    /// Canonical text form; parsing it yields an identical configuration.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: &dyn fmt::Display| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("method", &self.method.name());
        kv("integrator", &self.integrator);
        if let Some(b) = self.b {
            kv("b", &b);
        }
        if let Some(dt) = self.dt {
            kv("dt", &dt);
        }
        match self.method {
            Method::Md => {
                if let Some(n) = self.nsteps {
                    kv("nsteps", &n);
                }
                if let Some(t) = self.initial_temperature {
                    kv("initial_temperature", &t);
                }
                if let Some(r) = &self.rescale {
                    kv("rescale_temperature", &r.target_temperature);
                    kv("rescale_interval", &r.interval);
                }
            }
            Method::Hmc => {
                if let Some(n) = self.nr_md_steps {
                    kv("nr_MD_steps", &n);
                }
                if let Some(n) = self.n_proposals {
                    kv("n_proposals", &n);
                }
                if let Some(t) = self.canonical_temperature {
                    kv("canonical_temperature", &t);
                }
                kv("momentum_flip", &if self.momentum_flip { "yes" } else { "no" });
            }
        }
        kv("seed", &self.seed);
        kv("safety_factor", &self.safety_factor);
        kv("boltzmann", &self.boltzmann);
        kv("output_stride", &self.output_stride);
        kv("trajectory", &self.trajectory);
        kv("observables", &self.observables);
        kv("constraint_tolerance", &self.constraint_tolerance);
        kv("constraint_max_iterations", &self.constraint_max_iterations);
        self.system.write(&mut kv);
        if let SystemConfig::Inline {
            particles,
            bonds,
            constraints,
            nonbonded,
            ..
        } = &self.system
        {
            out.push_str("\n[particles]\n");
            for p in particles {
                let _ = writeln!(out, "{} {}", p.mass, join(&p.position));
            }
            if !bonds.is_empty() {
                out.push_str("\n[bonds]\n");
                for (i, j, k, r0) in bonds {
                    let _ = writeln!(out, "{i} {j} {k} {r0}");
                }
            }
            if !constraints.is_empty() {
                out.push_str("\n[constraints]\n");
                for (i, j, d) in constraints {
                    let _ = writeln!(out, "{i} {j} {d}");
                }
            }
            if let Some(lj) = nonbonded {
                out.push_str("\n[nonbonded]\n");
                let _ = writeln!(out, "epsilon = {}", lj.epsilon);
                let _ = writeln!(out, "sigma = {}", lj.sigma);
                let _ = writeln!(out, "cutoff = {}", lj.cutoff);
                let _ = writeln!(out, "shift = {}", if lj.shift_to_zero_at_cutoff { "yes" } else { "no" });
            }
        }
        if !self.restraints.is_empty() {
            out.push_str("\n[restraints]\n");
            for r in &self.restraints {
                let _ = writeln!(out, "{} {} {} {}", r.particle, r.k, r.quartic, join(&r.anchor));
            }
        }
        out
    }
}

fn join(x: &[f64]) -> String {
    x.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

fn parse_system(raw: &mut Raw) -> Result<SystemConfig, ConfigError> {
    let (line, name) = raw
        .take("system")
        .ok_or_else(|| invalid("missing required key 'system' (chain, dumbbell, lj-cluster or inline)"))?;
    let dimension = match raw.count("dimension")?.unwrap_or(3) {
        d @ 1..=3 => d,
        d => return Err(invalid(format!("dimension must be 1, 2 or 3, got {d}"))),
    };
    let system = match name.as_str() {
        "chain" => SystemConfig::Chain {
            n_particles: raw.count("n_particles")?.ok_or_else(|| invalid("chain needs 'n_particles'"))?,
            mass: raw.positive("mass")?.unwrap_or(1.0),
            k_spring: raw.positive("k_spring")?.unwrap_or(1.0),
            r0: raw.positive("r0")?.unwrap_or(1.0),
            dimension,
        },
        "dumbbell" => SystemConfig::Dumbbell {
            mass: raw.positive("mass")?.unwrap_or(1.0),
            bond_length: raw.positive("bond_length")?.unwrap_or(1.0),
            dimension,
        },
        "lj-cluster" => {
            let sigma = raw.positive("sigma")?.unwrap_or(1.0);
            SystemConfig::LjCluster {
                n_particles: raw.count("n_particles")?.ok_or_else(|| invalid("lj-cluster needs 'n_particles'"))?,
                epsilon: raw.positive("epsilon")?.unwrap_or(1.0),
                sigma,
                cutoff: raw.positive("cutoff")?.unwrap_or(2.5 * sigma),
                spacing: raw.positive("spacing")?.unwrap_or(2f64.powf(1.0 / 6.0) * sigma),
                dimension,
            }
        }
        "inline" => {
            let particles = rows(raw, "particles", |n| n == 1 + dimension, "mass x [y [z]]")?
                .into_iter()
                .map(|(_, v)| ParticleLine {
                    mass: v[0],
                    position: v[1..].to_vec(),
                })
                .collect::<Vec<_>>();
            if particles.is_empty() {
                return Err(invalid("system = inline needs a [particles] section"));
            }
            let bonds = rows(raw, "bonds", |n| n == 4, "i j k r0")?
                .into_iter()
                .map(|(line, v)| Ok((index(line, v[0])?, index(line, v[1])?, v[2], v[3])))
                .collect::<Result<_, ConfigError>>()?;
            let constraints = rows(raw, "constraints", |n| n == 3, "i j length")?
                .into_iter()
                .map(|(line, v)| Ok((index(line, v[0])?, index(line, v[1])?, v[2])))
                .collect::<Result<_, ConfigError>>()?;
            let nonbonded = if raw.sections.remove("nonbonded").is_some() {
                let sigma = raw.positive("nonbonded.sigma")?.unwrap_or(1.0);
                Some(LennardJones {
                    epsilon: raw.positive("nonbonded.epsilon")?.unwrap_or(1.0),
                    sigma,
                    cutoff: raw.positive("nonbonded.cutoff")?.unwrap_or(2.5 * sigma),
                    shift_to_zero_at_cutoff: raw.yes_no("nonbonded.shift")?.unwrap_or(true),
                })
            } else {
                None
            };
            SystemConfig::Inline {
                dimension,
                particles,
                bonds,
                constraints,
                nonbonded,
            }
        }
        other => {
            return Err(at(
                line,
                format!("unknown system '{other}' (expected chain, dumbbell, lj-cluster or inline)"),
            ))
        }
    };
    Ok(system)
}

impl SystemConfig {
    pub fn dimension(&self) -> usize {
        match self {
            SystemConfig::Chain { dimension, .. }
            | SystemConfig::Dumbbell { dimension, .. }
            | SystemConfig::LjCluster { dimension, .. }
            | SystemConfig::Inline { dimension, .. } => *dimension,
        }
    }

    fn builder(&self) -> Result<(aiamd::SystemBuilder, Vec<f64>), ConfigError> {
        let wrap = |e: aiamd::Error| invalid(format!("invalid system: {e}"));
        Ok(match self {
            SystemConfig::Chain {
                n_particles,
                mass,
                k_spring,
                r0,
                dimension,
            } => (
                aiamd::system::harmonic_chain_in(*n_particles, *mass, *k_spring, *r0, *dimension)
                    .map_err(wrap)?
                    .to_builder(),
                line_positions(*n_particles, *r0, *dimension),
            ),
            SystemConfig::Dumbbell {
                mass,
                bond_length,
                dimension,
            } => (
                aiamd::system::constrained_dumbbell_in(*mass, *bond_length, *dimension)
                    .map_err(wrap)?
                    .to_builder(),
                line_positions(2, *bond_length, *dimension),
            ),
            SystemConfig::LjCluster {
                n_particles,
                epsilon,
                sigma,
                cutoff,
                spacing,
                dimension,
            } => (
                aiamd::system::lj_cluster_in(*n_particles, *epsilon, *sigma, *cutoff, *dimension)
                    .map_err(wrap)?
                    .to_builder(),
                lattice_positions(*n_particles, *spacing, *dimension),
            ),
            SystemConfig::Inline {
                dimension,
                particles,
                bonds,
                constraints,
                nonbonded,
            } => {
                let mut b = System::builder(*dimension);
                let mut q = Vec::new();
                for p in particles {
                    b = b.particle(p.mass);
                    q.extend_from_slice(&p.position);
                }
                for (i, j, k, r0) in bonds {
                    b = b.bond(*i, *j, *k, *r0);
                }
                for (i, j, d) in constraints {
                    b = b.constraint(*i, *j, *d);
                }
                if let Some(lj) = nonbonded {
                    b = b.lennard_jones(*lj);
                }
                (b, q)
            }
        })
    }

    fn write(&self, kv: &mut dyn FnMut(&str, &dyn fmt::Display)) {
        match self {
            SystemConfig::Chain {
                n_particles,
                mass,
                k_spring,
                r0,
                dimension,
            } => {
                kv("system", &"chain");
                kv("n_particles", n_particles);
                kv("mass", mass);
                kv("k_spring", k_spring);
                kv("r0", r0);
                kv("dimension", dimension);
            }
            SystemConfig::Dumbbell {
                mass,
                bond_length,
                dimension,
            } => {
                kv("system", &"dumbbell");
                kv("mass", mass);
                kv("bond_length", bond_length);
                kv("dimension", dimension);
            }
            SystemConfig::LjCluster {
                n_particles,
                epsilon,
                sigma,
                cutoff,
                spacing,
                dimension,
            } => {
                kv("system", &"lj-cluster");
                kv("n_particles", n_particles);
                kv("epsilon", epsilon);
                kv("sigma", sigma);
                kv("cutoff", cutoff);
                kv("spacing", spacing);
                kv("dimension", dimension);
            }
            SystemConfig::Inline { dimension, .. } => {
                kv("system", &"inline");
                kv("dimension", dimension);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HMC: &str = "\
method                = HMC;   plain MD is 'No'
integrator            = two-s-AIA
dt                    = 0.5
nr_MD_steps           = 20
n_proposals           = 100
canonical_temperature = 0.5
momentum_flip         = yes
seed                  = 7
system                = chain
n_particles           = 8
dimension             = 1
";

    #[test]
    fn parses_mdp_style_fragment() {
        let c = RunConfig::parse(HMC).unwrap();
        assert_eq!(c.method, Method::Hmc);
        assert_eq!(c.nr_md_steps, Some(20));
        assert!(c.momentum_flip);
        assert_eq!(c.output_stride, 10);
        assert_eq!(c.integrator_spec(), IntegratorSpec::Adaptive { safety_factor: SQRT_2 });
        let (s, q) = c.build_system().unwrap();
        assert_eq!(s.n_particles(), 8);
        assert_eq!(q.len(), 8);
    }

    #[test]
    fn print_config_round_trips() {
        let inline = "\
system = inline
dimension = 2
integrator = two-s
b = 0.23
dt = 0.01
nsteps = 5
rescale_temperature = 0.7
rescale_interval = 3
[particles]
1 0 0
2.5 1.1 0
1 2 0.3
[bonds]
0 1 10 1
[constraints]
1 2 1.0440306508910551
[nonbonded]
epsilon = 0.5
shift = no
[restraints]
0 1 0.5 0 0
";
        for text in [HMC, inline] {
            let c = RunConfig::parse(text).unwrap();
            let echoed = c.to_text();
            assert_eq!(RunConfig::parse(&echoed).unwrap(), c, "{echoed}");
            assert_eq!(RunConfig::parse(&echoed).unwrap().to_text(), echoed);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let cases = [
            ("system = chain\nn_particles = 3\nbogus = 1\n", "unknown key"),
            ("system = chain\nn_particles = 3\nnr_MD_steps = 4\n", "does not apply"),
            ("method = HMC\nsystem = chain\nn_particles = 3\nnsteps = 4\n", "does not apply"),
            ("system = chain\nn_particles = 3\nintegrator = md\n", "unknown integrator"),
            ("system = chain\nn_particles = 3\nintegrator = two-s-minE\nb = 0.2\n", "only applies"),
            ("system = chain\nn_particles = 3\ndt = -1\n", "positive"),
            ("system = chain\nn_particles = 3\ndt = 1\ndt = 2\n", "duplicate"),
            ("system = chain\nn_particles = 3\n[bonds]\n0 1 1 1\n", "needs system = inline"),
            ("system = star\n", "unknown system"),
            ("n_particles = 3\n", "missing required key 'system'"),
            ("system = chain\nn_particles = 3\nrescale_interval = 3\n", "together"),
            ("system = inline\ndimension = 1\n[particles]\n1 0 0\n", "rows are"),
            ("system = dumbbell\n[restraints]\n0 1 0 0\n", "rows are"),
            ("system = chain\nn_particles = 3\n[atoms]\n", "unknown section"),
            ("system = chain\nn_particles = 3\njust words\n", "key = value"),
            ("system = chain\nn_particles = 1\n", "invalid system"),
        ];
        for (text, needle) in cases {
            let err = RunConfig::parse(text).unwrap_err().to_string();
            assert!(err.contains(needle), "{text:?}: {err}");
        }
    }

    #[test]
    fn fixtures_build_on_their_manifold() {
        let c = RunConfig::parse("system = dumbbell\nbond_length = 1.5\ndimension = 2\n").unwrap();
        let (s, q) = c.build_system().unwrap();
        assert_eq!(s.constraints().len(), 1);
        assert!(aiamd::integrators::position_residual(&s, &q) < 1e-15);
        let c = RunConfig::parse("system = lj-cluster\nn_particles = 10\n").unwrap();
        let (s, q) = c.build_system().unwrap();
        assert!(s.nonbonded().is_some());
        assert_eq!(q.len(), 30);
    }
}
