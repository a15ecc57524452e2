//! Potential energy and forces for bonds, restraints and cut-and-shifted
//! Lennard-Jones. All pair loops are O(n²) with a fixed summation order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::System;

/// Potential energy `V(q)` together with `−∇V(q)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceEval {
    pub potential: f64,
    pub forces: Vec<f64>,
}

impl ForceEval {
    pub fn zero(n_coords: usize) -> Self {
        Self {
            potential: 0.0,
            forces: vec![0.0; n_coords],
        }
    }

    fn accumulate(&mut self, other: &ForceEval) {
        self.potential += other.potential;
        for (f, g) in self.forces.iter_mut().zip(&other.forces) {
            *f += g;
        }
    }
}

/// Anything that can be integrated: a topology plus a force evaluation.
///
/// `System` implements this with [`total_eval`]; wrappers can add extra
/// terms or instrument the evaluation.
pub trait Hamiltonian {
    fn system(&self) -> &System;
    fn evaluate(&self, q: &[f64]) -> Result<ForceEval>;
}

impl Hamiltonian for System {
    fn system(&self) -> &System {
        self
    }

    fn evaluate(&self, q: &[f64]) -> Result<ForceEval> {
        total_eval(self, q)
    }
}

impl<H: Hamiltonian + ?Sized> Hamiltonian for &H {
    fn system(&self) -> &System {
        (**self).system()
    }

    fn evaluate(&self, q: &[f64]) -> Result<ForceEval> {
        (**self).evaluate(q)
    }
}

/// Separation `q_i − q_j` written into `out`; returns its length.
#[inline]
pub(crate) fn separation(q: &[f64], dim: usize, i: usize, j: usize, out: &mut [f64; 3]) -> f64 {
    let mut r2 = 0.0;
    for a in 0..dim {
        let d = q[i * dim + a] - q[j * dim + a];
        out[a] = d;
        r2 += d * d;
    }
    r2.sqrt()
}

#[inline]
fn apply_pair(forces: &mut [f64], dim: usize, i: usize, j: usize, r: &[f64; 3], scale: f64) {
    for a in 0..dim {
        forces[i * dim + a] += scale * r[a];
        forces[j * dim + a] -= scale * r[a];
    }
}

pub fn harmonic_bond_eval(system: &System, q: &[f64]) -> Result<ForceEval> {
    system.check_coords(q)?;
    let dim = system.dimension();
    let mut out = ForceEval::zero(q.len());
    let mut r = [0.0; 3];
    for b in system.bonds() {
        let dist = separation(q, dim, b.i, b.j, &mut r);
        if dist == 0.0 {
            return Err(Error::CoincidentParticles { i: b.i, j: b.j });
        }
        let stretch = dist - b.r0;
        out.potential += 0.5 * b.k * stretch * stretch;
        // F_i = −k (r − r0) r̂
        apply_pair(&mut out.forces, dim, b.i, b.j, &r, -b.k * stretch / dist);
    }
    Ok(out)
}

pub fn lennard_jones_eval(system: &System, q: &[f64]) -> Result<ForceEval> {
    system.check_coords(q)?;
    let mut out = ForceEval::zero(q.len());
    let Some(lj) = system.nonbonded() else {
        return Ok(out);
    };
    let dim = system.dimension();
    let n = system.n_particles();
    let shift = lj.shift();
    let cutoff2 = lj.cutoff * lj.cutoff;
    let sigma2 = lj.sigma * lj.sigma;
    let mut r = [0.0; 3];
    for i in 0..n {
        for j in i + 1..n {
            if system.is_excluded(i, j) {
                continue;
            }
            let dist = separation(q, dim, i, j, &mut r);
            let r2 = dist * dist;
            if r2 >= cutoff2 {
                continue;
            }
            if dist == 0.0 {
                return Err(Error::CoincidentParticles { i, j });
            }
            let sr2 = sigma2 / r2;
            let sr6 = sr2 * sr2 * sr2;
            out.potential += 4.0 * lj.epsilon * (sr6 * sr6 - sr6) - shift;
            // −dV/dr / r = 24ε(2(σ/r)¹² − (σ/r)⁶)/r²
            let scale = 24.0 * lj.epsilon * (2.0 * sr6 * sr6 - sr6) / r2;
            apply_pair(&mut out.forces, dim, i, j, &r, scale);
        }
    }
    Ok(out)
}

pub fn restraint_eval(system: &System, q: &[f64]) -> Result<ForceEval> {
    system.check_coords(q)?;
    let dim = system.dimension();
    let mut out = ForceEval::zero(q.len());
    for rs in system.restraints() {
        let base = rs.particle * dim;
        let r2: f64 = (0..dim).map(|a| (q[base + a] - rs.anchor[a]).powi(2)).sum();
        out.potential += 0.5 * rs.k * r2 + 0.25 * rs.quartic * r2 * r2;
        let scale = -(rs.k + rs.quartic * r2);
        for a in 0..dim {
            out.forces[base + a] += scale * (q[base + a] - rs.anchor[a]);
        }
    }
    Ok(out)
}

/// Sum of every enabled term.
pub fn total_eval(system: &System, q: &[f64]) -> Result<ForceEval> {
    let mut out = harmonic_bond_eval(system, q)?;
    if system.nonbonded().is_some() {
        out.accumulate(&lennard_jones_eval(system, q)?);
    }
    if !system.restraints().is_empty() {
        out.accumulate(&restraint_eval(system, q)?);
    }
    Ok(out)
}

/// Total energy `K(p) + V(q)`.
pub fn total_energy<H: Hamiltonian + ?Sized>(model: &H, state: &crate::system::PhaseState) -> Result<f64> {
    let k = crate::system::kinetic_energy(model.system(), state)?;
    Ok(k + model.evaluate(state.q())?.potential)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{build_harmonic_chain, lattice_positions, LennardJones};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lj(shift: bool, cutoff: f64) -> LennardJones {
        LennardJones {
            epsilon: 1.0,
            sigma: 1.0,
            cutoff,
            shift_to_zero_at_cutoff: shift,
        }
    }

    fn pair_system(lj_params: LennardJones) -> System {
        System::builder(3).particles(2, 1.0).lennard_jones(lj_params).build().unwrap()
    }

    #[test]
    fn stretched_bond() {
        let s = build_harmonic_chain(2, 1.0, 1.0, 1.0).unwrap();
        let e = harmonic_bond_eval(&s, &[0.0, 0.0, 0.0, 1.5, 0.0, 0.0]).unwrap();
        assert!((e.potential - 0.125).abs() < 1e-15);
        // attractive: particle 0 pulled toward +x, particle 1 toward −x
        assert!((e.forces[0] - 0.5).abs() < 1e-15);
        assert!((e.forces[3] + 0.5).abs() < 1e-15);
        assert_eq!(&e.forces[1..3], &[0.0, 0.0]);

        let e = harmonic_bond_eval(&s, &[0.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(e.potential, 0.0);
        assert!(e.forces.iter().all(|f| *f == 0.0));

        assert_eq!(
            harmonic_bond_eval(&s, &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]),
            Err(Error::CoincidentParticles { i: 0, j: 1 })
        );
    }

    #[test]
    fn lj_special_points() {
        let s = pair_system(lj(false, 3.0));
        let rmin = 2f64.powf(1.0 / 6.0);
        let e = lennard_jones_eval(&s, &[0.0, 0.0, 0.0, rmin, 0.0, 0.0]).unwrap();
        assert!((e.potential + 1.0).abs() < 1e-14);
        assert!(e.forces.iter().all(|f| f.abs() < 1e-13));

        let e = lennard_jones_eval(&s, &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!(e.potential.abs() < 1e-15);

        let e = lennard_jones_eval(&s, &[0.0, 0.0, 0.0, 3.0, 0.0, 0.0]).unwrap();
        assert_eq!(e.potential, 0.0);
        assert!(e.forces.iter().all(|f| *f == 0.0));

        assert!(matches!(
            lennard_jones_eval(&s, &[0.0; 6]),
            Err(Error::CoincidentParticles { .. })
        ));
    }

    #[test]
    fn shifted_lj_vanishes_at_cutoff_and_keeps_forces() {
        let shifted = pair_system(lj(true, 2.5));
        let plain = pair_system(lj(false, 2.5));
        let q = [0.0, 0.0, 0.0, 2.5 - 1e-12, 0.,0.];
        assert!(lennard_jones_eval(&shifted, &q).unwrap().potential.abs() < 1e-10);
        let q = [0.0, 0.0, 0.0, 1.3, 0.2, 0.0];
        let a = lennard_jones_eval(&shifted, &q).unwrap();
        let b = lennard_jones_eval(&plain, &q).unwrap();
        assert_eq!(a.forces, b.forces);
        assert!((b.potential - a.potential - plain.nonbonded().unwrap().pair_energy(2.5)).abs() < 1e-15);
    }

    #[test]
    fn total_is_sum_of_terms() {
        let empty = System::builder(3).particles(3, 1.0).build().unwrap();
        let e = total_eval(&empty, &lattice_positions(3, 1.0, 3)).unwrap();
        assert_eq!(e, ForceEval::zero(9));

        let chain = build_harmonic_chain(3, 1.0, 2.0, 1.0).unwrap();
        let q = [0.0, 0.0, 0.0, 1.2, 0.0, 0.0, 2.0, 0.5, 0.0];
        assert_eq!(total_eval(&chain, &q).unwrap(), harmonic_bond_eval(&chain, &q).unwrap());

        // bond on (0,1); LJ acts on (0,2) and (1,2) only
        let s = System::builder(3)
            .particles(3, 1.0)
            .bond(0, 1, 2.0, 1.0)
            .lennard_jones(lj(true, 2.5))
            .build()
            .unwrap();
        let total = total_eval(&s, &q).unwrap();
        let bonds = harmonic_bond_eval(&s, &q).unwrap();
        let r02 = (2.0f64 * 2.0 + 0.25).sqrt();
        let r12 = (0.8f64 * 0.8 + 0.25).sqrt();
        let ljp = s.nonbonded().unwrap();
        let expected = bonds.potential + ljp.pair_energy(r02) + ljp.pair_energy(r12) - 2.0 * ljp.shift();
        assert!((total.potential - expected).abs() < 1e-13);
    }

    fn random_config(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        lattice_positions(n, 1.15, 3).into_iter().map(|x| x + rng.random_range(-0.08..0.08)).collect()
    }

    fn mixed_system(n: usize) -> System {
        let mut b = System::builder(3).particles(n, 1.0).lennard_jones(lj(true, 2.5));
        for i in (0..n - 1).step_by(3) {
            b = b.bond(i, i + 1, 50.0, 1.1);
        }
        b.build().unwrap()
    }

    #[test]
    fn forces_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = mixed_system(12);
        for _ in 0..5 {
            let q = random_config(&mut rng, 12);
            let e = total_eval(&s, &q).unwrap();
            let h = 1e-5;
            let mut scratch = q.clone();
            for c in 0..q.len() {
                scratch[c] = q[c] + h;
                let vp = total_eval(&s, &scratch).unwrap().potential;
                scratch[c] = q[c] - h;
                let vm = total_eval(&s, &scratch).unwrap().potential;
                scratch[c] = q[c];
                let fd = -(vp - vm) / (2.0 * h);
                let scale = e.forces[c].abs().max(1.0);
                assert!((fd - e.forces[c]).abs() <= 1e-5 * scale, "coord {c}: fd {fd} vs {}", e.forces[c]);
            }
        }
    }

    #[test]
    fn newton_third_law_and_translation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = mixed_system(15);
        for _ in 0..5 {
            let q = random_config(&mut rng, 15);
            let e = total_eval(&s, &q).unwrap();
            for a in 0..3 {
                let net: f64 = e.forces.iter().skip(a).step_by(3).sum();
                assert!(net.abs() < 1e-12, "net force {net}");
            }
            let c = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let shifted: Vec<f64> = q.iter().enumerate().map(|(k, x)| x + c[k % 3]).collect();
            let v2 = total_eval(&s, &shifted).unwrap().potential;
            assert!((v2 - e.potential).abs() <= 1e-10 * e.potential.abs().max(1.0));
        }
    }

    #[test]
    fn restraint_gradient() {
        let s = System::builder(2).particle(1.0).restraint(0, vec![0.5, -0.5], 2.0, 0.3).build().unwrap();
        let q = [1.0, 0.25];
        let e = restraint_eval(&s, &q).unwrap();
        let r2: f64 = 0.25 + 0.5625;
        assert!((e.potential - (r2 + 0.075 * r2 * r2)).abs() < 1e-15);
        let scale = 2.0 + 0.3 * r2;
        assert!((e.forces[0] + scale * 0.5).abs() < 1e-15);
        assert!((e.forces[1] + scale * 0.75).abs() < 1e-15);
    }
}
