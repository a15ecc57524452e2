//! Static topology of a simulated system and the dynamical phase state.
//!
//! Positions and momenta are stored as flat arrays in particle-major order:
//! particle `i` occupies `q[i * dim..(i + 1) * dim]`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Harmonic spring `½ k (|q_i − q_j| − r0)²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bond {
    pub i: usize,
    pub j: usize,
    pub k: f64,
    pub r0: f64,
}

/// Holonomic distance constraint `|q_i − q_j| = length`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceConstraint {
    pub i: usize,
    pub j: usize,
    pub length: f64,
}

/// 12-6 Lennard-Jones parameters applied to every non-excluded pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LennardJones {
    pub epsilon: f64,
    pub sigma: f64,
    pub cutoff: f64,
    pub shift_to_zero_at_cutoff: bool,
}

impl LennardJones {
    /// Unshifted pair energy at distance `r`.
    pub fn pair_energy(&self, r: f64) -> f64 {
        let sr6 = (self.sigma / r).powi(6);
        4.0 * self.epsilon * (sr6 * sr6 - sr6)
    }

    /// Constant subtracted from every pair inside the cutoff.
    pub fn shift(&self) -> f64 {
        if self.shift_to_zero_at_cutoff {
            self.pair_energy(self.cutoff)
        } else {
            0.0
        }
    }
}

/// Tether of one particle to a fixed anchor:
/// `½ k |q_i − a|² + ¼ quartic |q_i − a|⁴`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Restraint {
    pub particle: usize,
    pub anchor: Vec<f64>,
    pub k: f64,
    pub quartic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct System {
    masses: Vec<f64>,
    dimension: usize,
    bonds: Vec<Bond>,
    nonbonded: Option<LennardJones>,
    constraints: Vec<DistanceConstraint>,
    restraints: Vec<Restraint>,
    exclusions: BTreeSet<(usize, usize)>,
    boltzmann: f64,
}

fn ordered(i: usize, j: usize) -> (usize, usize) {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

impl System {
    pub fn builder(dimension: usize) -> SystemBuilder {
        SystemBuilder {
            masses: Vec::new(),
            dimension,
            bonds: Vec::new(),
            nonbonded: None,
            constraints: Vec::new(),
            restraints: Vec::new(),
            extra_exclusions: Vec::new(),
            exclude_bonded: true,
            boltzmann: 1.0,
        }
    }

    pub fn n_particles(&self) -> usize {
        self.masses.len()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Length of the flat position/momentum arrays.
    pub fn n_coords(&self) -> usize {
        self.masses.len() * self.dimension
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn mass_of_coord(&self, coord: usize) -> f64 {
        self.masses[coord / self.dimension]
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn nonbonded(&self) -> Option<&LennardJones> {
        self.nonbonded.as_ref()
    }

    pub fn constraints(&self) -> &[DistanceConstraint] {
        &self.constraints
    }

    pub fn restraints(&self) -> &[Restraint] {
        &self.restraints
    }

    pub fn boltzmann(&self) -> f64 {
        self.boltzmann
    }

    pub fn is_excluded(&self, i: usize, j: usize) -> bool {
        self.exclusions.contains(&ordered(i, j))
    }

    pub fn exclusions(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.exclusions.iter().copied()
    }

    /// Rebuild the same topology in another spatial dimension.
    pub fn with_dimension(&self, dimension: usize) -> Result<System> {
        let mut b = self.to_builder();
        b.dimension = dimension;
        for r in &mut b.restraints {
            r.anchor.resize(dimension, 0.0);
        }
        b.build()
    }

    pub fn to_builder(&self) -> SystemBuilder {
        let implied: BTreeSet<_> = self
            .bonds
            .iter()
            .map(|b| ordered(b.i, b.j))
            .chain(self.constraints.iter().map(|c| ordered(c.i, c.j)))
            .collect();
        SystemBuilder {
            masses: self.masses.clone(),
            dimension: self.dimension,
            bonds: self.bonds.clone(),
            nonbonded: self.nonbonded,
            constraints: self.constraints.clone(),
            restraints: self.restraints.clone(),
            extra_exclusions: self.exclusions.difference(&implied).copied().collect(),
            exclude_bonded: true,
            boltzmann: self.boltzmann,
        }
    }

    pub fn check_state(&self, state: &PhaseState) -> Result<()> {
        self.check_coords(state.q())?;
        self.check_coords(state.p())
    }

    pub fn check_coords(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_coords() {
            return Err(Error::DimensionMismatch {
                expected: self.n_coords(),
                found: x.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SystemBuilder {
    masses: Vec<f64>,
    dimension: usize,
    bonds: Vec<Bond>,
    nonbonded: Option<LennardJones>,
    constraints: Vec<DistanceConstraint>,
    restraints: Vec<Restraint>,
    extra_exclusions: Vec<(usize, usize)>,
    exclude_bonded: bool,
    boltzmann: f64,
}

impl SystemBuilder {
    pub fn particle(mut self, mass: f64) -> Self {
        self.masses.push(mass);
        self
    }

    pub fn particles(mut self, n: usize, mass: f64) -> Self {
        self.masses.extend(std::iter::repeat_n(mass, n));
        self
    }

    pub fn bond(mut self, i: usize, j: usize, k: f64, r0: f64) -> Self {
        self.bonds.push(Bond { i, j, k, r0 });
        self
    }

    pub fn constraint(mut self, i: usize, j: usize, length: f64) -> Self {
        self.constraints.push(DistanceConstraint { i, j, length });
        self
    }

    pub fn lennard_jones(mut self, lj: LennardJones) -> Self {
        self.nonbonded = Some(lj);
        self
    }

    pub fn restraint(mut self, particle: usize, anchor: Vec<f64>, k: f64, quartic: f64) -> Self {
        self.restraints.push(Restraint {
            particle,
            anchor,
            k,
            quartic,
        });
        self
    }

    pub fn exclude(mut self, i: usize, j: usize) -> Self {
        self.extra_exclusions.push((i, j));
        self
    }

    /// Keep bonded and constrained pairs in the nonbonded sum.
    pub fn include_bonded_in_nonbonded(mut self) -> Self {
        self.exclude_bonded = false;
        self
    }

    pub fn boltzmann(mut self, kb: f64) -> Self {
        self.boltzmann = kb;
        self
    }

    pub fn build(self) -> Result<System> {
        let n = self.masses.len();
        if !(1..=3).contains(&self.dimension) {
            return Err(Error::InvalidArgument(format!(
                "dimension must be 1, 2 or 3, got {}",
                self.dimension
            )));
        }
        if n == 0 {
            return Err(Error::InvalidArgument("system has no particles".into()));
        }
        if let Some(m) = self.masses.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
            return Err(Error::InvalidArgument(format!("mass must be positive, got {m}")));
        }
        if !(self.boltzmann.is_finite() && self.boltzmann > 0.0) {
            return Err(Error::InvalidArgument("boltzmann constant must be positive".into()));
        }
        let check_pair = |i: usize, j: usize, what: &str| -> Result<()> {
            if i >= n || j >= n {
                return Err(Error::InvalidArgument(format!(
                    "{what} ({i}, {j}) references a particle outside 0..{n}"
                )));
            }
            if i == j {
                return Err(Error::InvalidArgument(format!("{what} ({i}, {j}) joins a particle to itself")));
            }
            Ok(())
        };
        let mut bonded = BTreeSet::new();
        for b in &self.bonds {
            check_pair(b.i, b.j, "bond")?;
            if !(b.k.is_finite() && b.k > 0.0) {
                return Err(Error::InvalidArgument(format!("bond force constant must be positive, got {}", b.k)));
            }
            if !(b.r0.is_finite() && b.r0 >= 0.0) {
                return Err(Error::InvalidArgument(format!("bond length must be nonnegative, got {}", b.r0)));
            }
            bonded.insert(ordered(b.i, b.j));
        }
        let mut constrained = BTreeSet::new();
        for c in &self.constraints {
            check_pair(c.i, c.j, "constraint")?;
            if !(c.length.is_finite() && c.length > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "constraint length must be positive, got {}",
                    c.length
                )));
            }
            let key = ordered(c.i, c.j);
            if bonded.contains(&key) {
                return Err(Error::InvalidArgument(format!(
                    "pair ({}, {}) is both bonded and constrained",
                    key.0, key.1
                )));
            }
            if !constrained.insert(key) {
                return Err(Error::InvalidArgument(format!(
                    "pair ({}, {}) is constrained twice",
                    key.0, key.1
                )));
            }
        }
        if let Some(lj) = &self.nonbonded {
            let ok = |x: f64| x.is_finite() && x > 0.0;
            if !(ok(lj.epsilon) && ok(lj.sigma) && ok(lj.cutoff)) {
                return Err(Error::InvalidArgument(
                    "Lennard-Jones epsilon, sigma and cutoff must be positive".into(),
                ));
            }
        }
        for r in &self.restraints {
            if r.particle >= n {
                return Err(Error::InvalidArgument(format!("restraint on missing particle {}", r.particle)));
            }
            if r.anchor.len() != self.dimension {
                return Err(Error::DimensionMismatch {
                    expected: self.dimension,
                    found: r.anchor.len(),
                });
            }
            if !(r.k.is_finite() && r.k >= 0.0 && r.quartic.is_finite() && r.quartic >= 0.0) {
                return Err(Error::InvalidArgument("restraint coefficients must be nonnegative".into()));
            }
        }
        let mut exclusions = BTreeSet::new();
        if self.exclude_bonded {
            exclusions.extend(bonded.iter().copied());
            exclusions.extend(constrained.iter().copied());
        }
        for &(i, j) in &self.extra_exclusions {
            check_pair(i, j, "exclusion")?;
            exclusions.insert(ordered(i, j));
        }
        Ok(System {
            masses: self.masses,
            dimension: self.dimension,
            bonds: self.bonds,
            nonbonded: self.nonbonded,
            constraints: self.constraints,
            restraints: self.restraints,
            exclusions,
            boltzmann: self.boltzmann,
        })
    }
}

/// Positions and momenta, both flat and of equal length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    q: Vec<f64>,
    p: Vec<f64>,
}

impl PhaseState {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if q.len() != p.len() {
            return Err(Error::DimensionMismatch {
                expected: q.len(),
                found: p.len(),
            });
        }
        if q.iter().chain(&p).any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("phase state has non-finite entries".into()));
        }
        Ok(Self { q, p })
    }

    /// State at rest at positions `q`.
    pub fn at_rest(q: Vec<f64>) -> Result<Self> {
        let p = vec![0.0; q.len()];
        Self::new(q, p)
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut Vec<f64>, &mut Vec<f64>) {
        (&mut self.q, &mut self.p)
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<f64>) {
        (self.q, self.p)
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn with_momenta(&self, p: Vec<f64>) -> Result<Self> {
        Self::new(self.q.clone(), p)
    }

    /// Same positions, negated momenta.
    pub fn flipped(&self) -> Self {
        Self {
            q: self.q.clone(),
            p: self.p.iter().map(|x| -x).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.p).all(|x| x.is_finite())
    }
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be positive, got {x}")))
    }
}

/// Linear chain of `n` equal masses joined by identical springs, in 3D.
pub fn build_harmonic_chain(n: usize, mass: f64, k_spring: f64, r0: f64) -> Result<System> {
    harmonic_chain_in(n, mass, k_spring, r0, 3)
}

pub fn harmonic_chain_in(n: usize, mass: f64, k_spring: f64, r0: f64, dimension: usize) -> Result<System> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("chain needs at least 2 particles, got {n}")));
    }
    positive("mass", mass)?;
    positive("spring constant", k_spring)?;
    let mut b = System::builder(dimension).particles(n, mass);
    for i in 0..n - 1 {
        b = b.bond(i, i + 1, k_spring, r0);
    }
    b.build()
}

/// Two particles held at distance `d` by a single constraint, in 3D.
pub fn build_constrained_dumbbell(mass: f64, d: f64) -> Result<System> {
    constrained_dumbbell_in(mass, d, 3)
}

pub fn constrained_dumbbell_in(mass: f64, d: f64, dimension: usize) -> Result<System> {
    positive("mass", mass)?;
    positive("constraint length", d)?;
    System::builder(dimension).particles(2, mass).constraint(0, 1, d).build()
}

/// `n` unit masses interacting through cut and shifted Lennard-Jones, in 3D.
pub fn build_lj_cluster(n: usize, epsilon: f64, sigma: f64, cutoff: f64) -> Result<System> {
    lj_cluster_in(n, epsilon, sigma, cutoff, 3)
}

pub fn lj_cluster_in(n: usize, epsilon: f64, sigma: f64, cutoff: f64, dimension: usize) -> Result<System> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("cluster needs at least 2 particles, got {n}")));
    }
    positive("epsilon", epsilon)?;
    positive("sigma", sigma)?;
    positive("cutoff", cutoff)?;
    if cutoff <= sigma {
        return Err(Error::InvalidArgument(format!("cutoff {cutoff} must exceed sigma {sigma}")));
    }
    System::builder(dimension)
        .particles(n, 1.0)
        .lennard_jones(LennardJones {
            epsilon,
            sigma,
            cutoff,
            shift_to_zero_at_cutoff: true,
        })
        .build()
}

/// Particles along the first axis at the given spacing.
pub fn line_positions(n: usize, spacing: f64, dimension: usize) -> Vec<f64> {
    let mut q = vec![0.0; n * dimension];
    for i in 0..n {
        q[i * dimension] = i as f64 * spacing;
    }
    q
}

/// Particles filling a simple cubic (square, line) lattice, row by row.
pub fn lattice_positions(n: usize, spacing: f64, dimension: usize) -> Vec<f64> {
    let side = (1..).find(|s: &usize| s.pow(dimension as u32) >= n).unwrap_or(1);
    let mut q = Vec::with_capacity(n * dimension);
    for i in 0..n {
        let mut idx = i;
        for _ in 0..dimension {
            q.push((idx % side) as f64 * spacing);
            idx /= side;
        }
    }
    q
}

/// `Σ p²/(2m)`.
pub fn kinetic_energy(system: &System, state: &PhaseState) -> Result<f64> {
    system.check_state(state)?;
    Ok(kinetic_energy_of(system, state.p()))
}

pub(crate) fn kinetic_energy_of(system: &System, p: &[f64]) -> f64 {
    let dim = system.dimension();
    p.chunks_exact(dim)
        .zip(system.masses())
        .map(|(pi, m)| pi.iter().map(|x| x * x).sum::<f64>() / (2.0 * m))
        .sum()
}

/// Coordinates minus constraints; center-of-mass motion is counted.
pub fn degrees_of_freedom(system: &System) -> usize {
    system.n_coords().saturating_sub(system.constraints().len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reduced_mass(s: &System, b: &Bond) -> f64 {
        let (m1, m2) = (s.masses()[b.i], s.masses()[b.j]);
        m1 * m2 / (m1 + m2)
    }

    #[test]
    fn chain_fixtures() {
        let s = build_harmonic_chain(2, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(s.bonds().len(), 1);
        assert_eq!(reduced_mass(&s, &s.bonds()[0]), 0.5);

        let s = build_harmonic_chain(3, 2.0, 4.0, 1.0).unwrap();
        assert_eq!(s.bonds().len(), 2);
        assert!(s.bonds().iter().all(|b| reduced_mass(&s, b) == 1.0));
        assert!(s.constraints().is_empty() && s.nonbonded().is_none());

        assert!(matches!(build_harmonic_chain(1, 1.0, 1.0, 1.0), Err(Error::InvalidArgument(_))));
        assert!(build_harmonic_chain(3, 0.0, 1.0, 1.0).is_err());
        assert!(build_harmonic_chain(3, 1.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn dumbbell_fixture() {
        let s = build_constrained_dumbbell(1.0, 1.0).unwrap();
        assert_eq!(s.constraints(), &[DistanceConstraint { i: 0, j: 1, length: 1.0 }]);
        assert!(s.bonds().is_empty());
        let s = build_constrained_dumbbell(2.0, 0.5).unwrap();
        assert_eq!(s.constraints()[0].length, 0.5);
        assert!(build_constrained_dumbbell(1.0, 0.0).is_err());
    }

    #[test]
    fn cluster_fixture() {
        let s = build_lj_cluster(2, 1.0, 1.0, 3.0).unwrap();
        let pairs = |s: &System| {
            let n = s.n_particles();
            (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).filter(|&(i, j)| !s.is_excluded(i, j)).count()
        };
        assert_eq!(pairs(&s), 1);
        let s = build_lj_cluster(13, 1.0, 1.0, 2.5).unwrap();
        assert_eq!(pairs(&s), 78);
        assert!(s.nonbonded().unwrap().shift_to_zero_at_cutoff);
        assert!(build_lj_cluster(2, 1.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn topology_invariants() {
        let both = System::builder(3).particles(2, 1.0).bond(0, 1, 1.0, 1.0).constraint(1, 0, 1.0).build();
        assert!(both.is_err());
        assert!(System::builder(3).particles(2, 1.0).bond(0, 2, 1.0, 1.0).build().is_err());
        assert!(System::builder(3).particles(2, 1.0).constraint(0, 1, -1.0).build().is_err());
        assert!(System::builder(4).particles(2, 1.0).build().is_err());

        let s = System::builder(3)
            .particles(3, 1.0)
            .bond(0, 1, 1.0, 1.0)
            .constraint(1, 2, 1.0)
            .build()
            .unwrap();
        assert!(s.is_excluded(1, 0) && s.is_excluded(2, 1) && !s.is_excluded(0, 2));
    }

    #[test]
    fn kinetic_energy_examples() {
        let one = System::builder(3).particle(2.0).build().unwrap();
        let st = PhaseState::new(vec![0.0; 3], vec![2.0, 0.0, 0.0]).unwrap();
        assert_eq!(kinetic_energy(&one, &st).unwrap(), 1.0);
        let rest = PhaseState::at_rest(vec![0.0; 3]).unwrap();
        assert_eq!(kinetic_energy(&one, &rest).unwrap(), 0.0);

        let two = System::builder(3).particles(2, 1.0).build().unwrap();
        let st = PhaseState::new(vec![0.0; 6], vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(kinetic_energy(&two, &st).unwrap(), 1.0);

        let bad = PhaseState::at_rest(vec![0.0; 4]).unwrap();
        assert!(matches!(kinetic_energy(&two, &bad), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn dof_examples() {
        assert_eq!(degrees_of_freedom(&System::builder(3).particles(2, 1.0).build().unwrap()), 6);
        assert_eq!(degrees_of_freedom(&build_constrained_dumbbell(1.0, 1.0).unwrap()), 5);
        assert_eq!(degrees_of_freedom(&System::builder(1).particles(5, 1.0).build().unwrap()), 5);
    }

    #[test]
    fn phase_state_rejects_bad_input() {
        assert!(PhaseState::new(vec![0.0; 3], vec![0.0; 2]).is_err());
        assert!(PhaseState::new(vec![f64::NAN], vec![0.0]).is_err());
    }

    #[test]
    fn round_trip_through_builder() {
        let s = System::builder(2)
            .particles(3, 1.5)
            .bond(0, 1, 2.0, 1.0)
            .constraint(1, 2, 1.0)
            .exclude(0, 2)
            .restraint(0, vec![0.0, 1.0], 1.0, 0.0)
            .build()
            .unwrap();
        assert_eq!(s.to_builder().build().unwrap(), s);
        let s3 = s.with_dimension(3).unwrap();
        assert_eq!(s3.restraints()[0].anchor, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn lattice_is_collision_free() {
        let q = lattice_positions(13, 1.2, 3);
        for i in 0..13 {
            for j in i + 1..13 {
                let d2: f64 = (0..3).map(|a| (q[3 * i + a] - q[3 * j + a]).powi(2)).sum();
                assert!(d2 >= 1.2 * 1.2 - 1e-12);
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn kinetic_energy_sign_and_scale(p in prop::collection::vec(-10.0f64..10.0, 6), c in -5.0f64..5.0) {
                let s = System::builder(3).particle(1.3).particle(0.7).build().unwrap();
                let st = PhaseState::new(vec![0.0; 6], p.clone()).unwrap();
                let k = kinetic_energy(&s, &st).unwrap();
                prop_assert!(k >= 0.0);
                prop_assert!((kinetic_energy(&s, &st.flipped()).unwrap() - k).abs() <= 1e-12 * k.max(1.0));
                let scaled = st.with_momenta(p.iter().map(|x| c * x).collect()).unwrap();
                prop_assert!((kinetic_energy(&s, &scaled).unwrap() - c * c * k).abs() <= 1e-10 * (c * c * k).max(1.0));
            }

            #[test]
            fn dof_drops_by_one_per_constraint(n in 3usize..8, extra in 0usize..3) {
                let mut b = System::builder(3).particles(n, 1.0);
                let base = degrees_of_freedom(&b.clone().build().unwrap());
                for c in 0..extra {
                    b = b.constraint(c, c + 1, 1.0);
                }
                prop_assert_eq!(degrees_of_freedom(&b.build().unwrap()), base - extra);
            }
        }
    }
}
