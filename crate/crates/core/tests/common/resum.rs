//! Random particle systems and a direct re-summation of fragment internal energies.

use std::collections::BTreeMap;

use critlab_core::md::{PairPotential, ParticleSystem, Species, Vec3};
use critlab_core::RngStream;

pub fn random_system(n: usize, rng: &mut RngStream) -> ParticleSystem {
    let mut pos: Vec<Vec3> = Vec::new();
    while pos.len() < n {
        let p = [0; 3].map(|_| 2.5 * rng.uniform());
        if pos.iter().all(|q| (0..3).map(|k| (p[k] - q[k]).powi(2)).sum::<f64>() > 0.81) {
            pos.push(p);
        }
    }
    let vel = (0..n).map(|_| [0; 3].map(|_| 0.7 * rng.normal())).collect();
    let mass = (0..n).map(|_| 0.5 + rng.uniform()).collect();
    ParticleSystem::new(pos, vel, mass, vec![Species::Neutron; n]).unwrap()
}

pub fn random_assignment(n: usize, rng: &mut RngStream) -> Vec<usize> {
    (0..n).map(|_| rng.below(n)).collect()
}

/// Cluster velocities taken relative to the cluster's mass-weighted mean velocity.
pub fn oracle_energy(sys: &ParticleSystem, assignment: &[usize], pot: &PairPotential) -> f64 {
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in assignment.iter().enumerate() {
        members.entry(c).or_default().push(i);
    }
    let mut total = 0.0;
    for m in members.values() {
        let mass: f64 = m.iter().map(|&i| sys.masses[i]).sum();
        let vcm: Vec<f64> = (0..3).map(|k| m.iter().map(|&i| sys.masses[i] * sys.velocities[i][k]).sum::<f64>() / mass).collect();
        for &i in m {
            let rel: f64 = (0..3).map(|k| (sys.velocities[i][k] - vcm[k]).powi(2)).sum();
            total += 0.5 * sys.masses[i] * rel;
        }
        for (a, &i) in m.iter().enumerate() {
            for &j in &m[a + 1..] {
                let r = (0..3).map(|k| (sys.positions[i][k] - sys.positions[j][k]).powi(2)).sum::<f64>().sqrt();
                total += pot.energy(r);
            }
        }
    }
    total
}
