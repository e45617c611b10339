//! Exact Boltzmann weights of small open spin-1 chains.

use critlab_core::spin::{heat_bath_step, total_energy, SpinLattice};
use critlab_core::{Boundary, Dims, Lattice3D, RngStream};

pub fn boltzmann(lat: &SpinLattice) -> Vec<f64> {
    let n = lat.n_sites();
    let states = 3usize.pow(n as u32);
    let mut probe = lat.clone();
    let w: Vec<f64> = (0..states)
        .map(|code| {
            let mut c = code;
            for site in 0..n {
                probe.set_spin(site, (c % 3) as i8 - 1);
                c /= 3;
            }
            (-total_energy(&probe) / lat.t).exp()
        })
        .collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

pub fn code(spins: &[i8]) -> usize {
    spins.iter().rev().fold(0, |acc, &s| acc * 3 + (s + 1) as usize)
}

/// Runs 40000 independent chains of `n` sites for `60 n` heat-bath steps each
/// and returns the worst `|count - expected| / sd` over all states.
pub fn stationary_worst_z(n: usize, h: f64, stream: u64) -> f64 {
    let d = Dims::new(n, 1, 1).unwrap();
    let lat = Lattice3D::from_sites(d, Boundary::Open, vec![0i8; n]).unwrap();
    let template = SpinLattice::new(lat, 1.0, h, 2.0).unwrap();
    let exact = boltzmann(&template);
    let chains = 40_000;
    let mut counts = vec![0usize; exact.len()];
    let mut rng = RngStream::new(3, stream);
    for _ in 0..chains {
        let mut lat = template.clone();
        for site in 0..n {
            lat.set_spin(site, rng.below(3) as i8 - 1);
        }
        for _ in 0..60 * n {
            heat_bath_step(&mut lat, &mut rng);
        }
        counts[code(lat.spins())] += 1;
    }
    counts
        .iter()
        .zip(&exact)
        .map(|(&c, &p)| {
            let exp = p * chains as f64;
            (c as f64 - exp).abs() / (chains as f64 * p * (1.0 - p)).sqrt()
        })
        .fold(0.0, f64::max)
}
