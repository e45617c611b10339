//! Most-bound partition search: fragments are the set partition of particles
//! that minimizes the summed internal energies, each cluster's kinetic energy
//! taken in its own center-of-mass frame.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::events::EventRecord;
use crate::md::{PairPotential, ParticleSystem};
use crate::rng::RngStream;

/// Largest system accepted by exhaustive enumeration (Bell(12) = 4 213 597).
pub const ENUMERATION_LIMIT: usize = 12;

#[derive(Clone, Debug, PartialEq)]
pub struct FragmentPartition {
    /// Cluster id per particle, numbered by first appearance.
    pub assignment: Vec<usize>,
    pub internal_energy: f64,
    pub per_cluster_energy: BTreeMap<usize, f64>,
}

impl FragmentPartition {
    pub fn n_clusters(&self) -> usize {
        self.per_cluster_energy.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_clusters()];
        for &c in &self.assignment {
            counts[c] += 1;
        }
        counts.sort_unstable_by(|a, b| b.cmp(a));
        counts
    }
}

/// Relabels clusters 0, 1, ... in order of first appearance.
pub fn canonical(assignment: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    assignment
        .iter()
        .map(|&c| {
            let next = map.len();
            *map.entry(c).or_insert(next)
        })
        .collect()
}

fn pair_matrix(system: &ParticleSystem, potential: &PairPotential) -> Vec<f64> {
    let n = system.len();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..i {
            let d: Vec<f64> = (0..3).map(|k| system.positions[i][k] - system.positions[j][k]).collect();
            let e = potential.energy((d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt());
            v[i * n + j] = e;
            v[j * n + i] = e;
        }
    }
    v
}

/// Total and per-cluster internal energy of `assignment`.
pub fn internal_energy(
    system: &ParticleSystem,
    assignment: &[usize],
    potential: &PairPotential,
) -> Result<(f64, BTreeMap<usize, f64>)> {
    if assignment.len() != system.len() {
        return Err(invalid("assignment", "one cluster id per particle required"));
    }
    let v = pair_matrix(system, potential);
    Ok(energy_with(system, assignment, &v))
}

fn energy_with(system: &ParticleSystem, assignment: &[usize], v: &[f64]) -> (f64, BTreeMap<usize, f64>) {
    let n = system.len();
    let mut sums: BTreeMap<usize, (f64, [f64; 3], f64)> = BTreeMap::new();
    for i in 0..n {
        let (m, u) = (system.masses[i], system.velocities[i]);
        let e = sums.entry(assignment[i]).or_insert((0.0, [0.0; 3], 0.0));
        e.0 += m;
        for k in 0..3 {
            e.1[k] += m * u[k];
        }
        e.2 += 0.5 * m * (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
    }
    let mut per: BTreeMap<usize, f64> = sums
        .iter()
        .map(|(&c, &(m, p, k))| (c, cm_kinetic(m, p, k)))
        .collect();
    for i in 0..n {
        for j in 0..i {
            if assignment[i] == assignment[j] {
                *per.get_mut(&assignment[i]).expect("cluster present") += v[i * n + j];
            }
        }
    }
    (per.values().sum(), per)
}

#[inline]
fn cm_kinetic(mass: f64, p: [f64; 3], kinetic: f64) -> f64 {
    kinetic - (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]) / (2.0 * mass)
}

fn finish(system: &ParticleSystem, assignment: &[usize], v: &[f64]) -> FragmentPartition {
    let assignment = canonical(assignment);
    let (internal_energy, per_cluster_energy) = energy_with(system, &assignment, v);
    FragmentPartition { assignment, internal_energy, per_cluster_energy }
}

/// Orders candidates by energy, treating energies within rounding of each
/// other as equal and then preferring the smaller canonical assignment.
fn better(a: &FragmentPartition, b: &FragmentPartition) -> bool {
    let tol = 1e-9 * a.internal_energy.abs().max(b.internal_energy.abs()).max(1e-12);
    if (a.internal_energy - b.internal_energy).abs() <= tol {
        a.assignment < b.assignment
    } else {
        a.internal_energy < b.internal_energy
    }
}

/// Exact minimum over all set partitions; also returns how many partitions
/// were evaluated.
pub fn enumerate_partitions_min(system: &ParticleSystem, potential: &PairPotential) -> Result<(FragmentPartition, u64)> {
    let n = system.len();
    if n > ENUMERATION_LIMIT {
        return Err(Error::EnumerationGuard { n, limit: ENUMERATION_LIMIT });
    }
    if n == 0 {
        return Err(invalid("system", "need at least one particle"));
    }
    let v = pair_matrix(system, potential);
    // restricted growth strings: a[0] = 0, a[i] <= 1 + max(a[..i])
    let mut a = vec![0usize; n];
    let mut best: Option<FragmentPartition> = None;
    let mut count = 0u64;
    loop {
        count += 1;
        let cand = finish(system, &a, &v);
        if best.as_ref().is_none_or(|b| better(&cand, b)) {
            best = Some(cand);
        }
        // next string
        let mut i = n - 1;
        loop {
            if i == 0 {
                return Ok((best.expect("at least one partition"), count));
            }
            let max_prefix = a[..i].iter().copied().max().unwrap_or(0);
            if a[i] <= max_prefix {
                a[i] += 1;
                for x in &mut a[i + 1..] {
                    *x = 0;
                }
                break;
            }
            i -= 1;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnnealSchedule {
    pub t_start: f64,
    pub t_end: f64,
    pub cooling_factor: f64,
    pub moves_per_temperature: usize,
    pub restarts: usize,
}

impl AnnealSchedule {
    /// Defaults scaled to the system: start at the mean magnitude of the
    /// nonzero pair energies, end a thousand times lower, cool by 0.95 with
    /// `50 n` moves per temperature, 4 restarts.
    pub fn default_for(system: &ParticleSystem, potential: &PairPotential) -> Self {
        let n = system.len();
        let v = pair_matrix(system, potential);
        let (mut sum, mut count) = (0.0, 0usize);
        for i in 0..n {
            for j in 0..i {
                let e = v[i * n + j].abs();
                if e > 0.0 {
                    sum += e;
                    count += 1;
                }
            }
        }
        let t_start = if count > 0 { sum / count as f64 } else { potential.epsilon };
        Self { t_start, t_end: 1e-3 * t_start, cooling_factor: 0.95, moves_per_temperature: 50 * n.max(1), restarts: 4 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_start > self.t_end && self.t_end > 0.0) || !self.t_start.is_finite() {
            return Err(invalid("schedule", "need T_start > T_end > 0"));
        }
        if !(self.cooling_factor > 0.0 && self.cooling_factor < 1.0) {
            return Err(invalid("cooling_factor", "must lie in (0, 1)"));
        }
        if self.restarts == 0 || self.moves_per_temperature == 0 {
            return Err(invalid("schedule", "need at least one restart and one move per temperature"));
        }
        Ok(())
    }
}

/// Mutable search state with per-cluster sums for O(1) energy changes.
struct Search<'a> {
    n: usize,
    v: &'a [f64],
    masses: &'a [f64],
    mom: Vec<[f64; 3]>,
    kin: Vec<f64>,
    label: Vec<usize>,
    // per cluster slot
    c_mass: Vec<f64>,
    c_mom: Vec<[f64; 3]>,
    c_kin: Vec<f64>,
    c_pot: Vec<f64>,
    c_size: Vec<usize>,
    /// `w[i * n + c]`: pair energy of particle i with the members of cluster c.
    w: Vec<f64>,
    free: Vec<usize>,
    energy: f64,
}

impl<'a> Search<'a> {
    fn singletons(system: &'a ParticleSystem, v: &'a [f64]) -> Self {
        let n = system.len();
        let mom: Vec<[f64; 3]> = (0..n).map(|i| system.velocities[i].map(|u| u * system.masses[i])).collect();
        let kin: Vec<f64> = (0..n)
            .map(|i| {
                let u = system.velocities[i];
                0.5 * system.masses[i] * (u[0] * u[0] + u[1] * u[1] + u[2] * u[2])
            })
            .collect();
        let mut w = vec![0.0; n * n];
        for i in 0..n {
            for c in 0..n {
                if c != i {
                    w[i * n + c] = v[i * n + c];
                }
            }
        }
        Self {
            n,
            v,
            masses: &system.masses,
            c_mass: system.masses.clone(),
            c_mom: mom.clone(),
            c_kin: kin.clone(),
            mom,
            kin,
            label: (0..n).collect(),
            c_pot: vec![0.0; n],
            c_size: vec![1; n],
            w,
            free: Vec::new(),
            energy: 0.0,
        }
    }

    fn cluster_energy(&self, c: usize) -> f64 {
        if self.c_size[c] == 0 {
            0.0
        } else {
            cm_kinetic(self.c_mass[c], self.c_mom[c], self.c_kin[c]) + self.c_pot[c]
        }
    }

    /// Energy change of moving `i` into slot `b` (which may be empty).
    fn delta(&self, i: usize, b: usize) -> f64 {
        let a = self.label[i];
        let (m, p, k) = (self.masses[i], self.mom[i], self.kin[i]);
        let before = self.cluster_energy(a) + self.cluster_energy(b);
        let a_after = if self.c_size[a] == 1 {
            0.0
        } else {
            let pm = [0, 1, 2].map(|d| self.c_mom[a][d] - p[d]);
            cm_kinetic(self.c_mass[a] - m, pm, self.c_kin[a] - k) + self.c_pot[a] - self.w[i * self.n + a]
        };
        let pb = [0, 1, 2].map(|d| self.c_mom[b][d] + p[d]);
        let (mb, kb, vb) = if self.c_size[b] == 0 { (0.0, 0.0, 0.0) } else { (self.c_mass[b], self.c_kin[b], self.c_pot[b]) };
        let b_after = cm_kinetic(mb + m, pb, kb + k) + vb + self.w[i * self.n + b];
        a_after + b_after - before
    }

    fn apply(&mut self, i: usize, b: usize, de: f64) {
        let a = self.label[i];
        let (m, p, k) = (self.masses[i], self.mom[i], self.kin[i]);
        let n = self.n;
        self.c_pot[a] -= self.w[i * n + a];
        self.c_pot[b] += self.w[i * n + b];
        self.c_mass[a] -= m;
        self.c_kin[a] -= k;
        self.c_size[a] -= 1;
        if self.c_size[b] == 0 {
            self.c_mass[b] = 0.0;
            self.c_kin[b] = 0.0;
            self.c_mom[b] = [0.0; 3];
            self.c_pot[b] = 0.0;
            self.c_pot[b] += self.w[i * n + b];
        }
        self.c_mass[b] += m;
        self.c_kin[b] += k;
        self.c_size[b] += 1;
        for d in 0..3 {
            self.c_mom[a][d] -= p[d];
            self.c_mom[b][d] += p[d];
        }
        if self.c_size[a] == 0 {
            self.c_mass[a] = 0.0;
            self.c_kin[a] = 0.0;
            self.c_mom[a] = [0.0; 3];
            self.c_pot[a] = 0.0;
            self.free.push(a);
        }
        for j in 0..n {
            let vij = self.v[j * n + i];
            self.w[j * n + a] -= vij;
            self.w[j * n + b] += vij;
        }
        self.label[i] = b;
        self.energy += de;
    }

    /// Uniform choice among the other occupied clusters and one empty slot.
    fn propose(&mut self, i: usize, rng: &mut RngStream) -> Option<usize> {
        let a = self.label[i];
        let occupied = self.n - self.free.len();
        // choices: occupied clusters other than `a`, plus a fresh singleton
        // unless `i` already is one
        let fresh = self.c_size[a] > 1;
        let options = occupied - 1 + usize::from(fresh);
        if options == 0 {
            return None;
        }
        let mut k = rng.below(options);
        if fresh && k == options - 1 {
            return self.free.last().copied();
        }
        for c in 0..self.n {
            if c != a && self.c_size[c] > 0 {
                if k == 0 {
                    return Some(c);
                }
                k -= 1;
            }
        }
        unreachable!("option index within occupied clusters")
    }

    fn take_free(&mut self, b: usize) {
        if let Some(pos) = self.free.iter().rposition(|&c| c == b) {
            self.free.swap_remove(pos);
        }
    }

    /// Greedy descent: best single move per particle until none improves.
    fn polish(&mut self) {
        loop {
            let mut improved = false;
            for i in 0..self.n {
                let a = self.label[i];
                let mut best = (0.0, None);
                for c in 0..self.n {
                    if c == a || (self.c_size[c] == 0 && (self.c_size[a] == 1 || Some(&c) != self.free.last())) {
                        continue;
                    }
                    let de = self.delta(i, c);
                    if de < best.0 - 1e-12 * self.energy.abs().max(1.0) {
                        best = (de, Some(c));
                    }
                }
                if let (de, Some(c)) = best {
                    self.take_free(c);
                    self.apply(i, c, de);
                    improved = true;
                }
            }
            if !improved {
                return;
            }
        }
    }
}

fn anneal_once(system: &ParticleSystem, v: &[f64], schedule: &AnnealSchedule, rng: &mut RngStream) -> FragmentPartition {
    let mut s = Search::singletons(system, v);
    let n = system.len();
    let mut best_e = s.energy;
    let mut best = s.label.clone();
    let mut t = schedule.t_start;
    while t >= schedule.t_end {
        for _ in 0..schedule.moves_per_temperature {
            let i = rng.below(n);
            let u = rng.uniform();
            let Some(b) = s.propose(i, rng) else { continue };
            let de = s.delta(i, b);
            if de <= 0.0 || u < (-de / t).exp() {
                s.take_free(b);
                s.apply(i, b, de);
                if s.energy < best_e {
                    best_e = s.energy;
                    best.clone_from(&s.label);
                }
            }
        }
        t *= schedule.cooling_factor;
    }
    // rebuild the best partition, anchoring each cluster at its first member
    let mut p = Search::singletons(system, v);
    let labels = canonical(&best);
    let mut anchor = vec![usize::MAX; n];
    for i in 0..n {
        if anchor[labels[i]] == usize::MAX {
            anchor[labels[i]] = i;
        } else {
            let slot = anchor[labels[i]];
            let de = p.delta(i, slot);
            p.apply(i, slot, de);
        }
    }
    p.polish();
    finish(system, &p.label, v)
}

/// Simulated annealing over set partitions; restart `r` uses stream `r`.
pub fn anneal(
    system: &ParticleSystem,
    potential: &PairPotential,
    schedule: &AnnealSchedule,
    seed: u64,
) -> Result<FragmentPartition> {
    schedule.validate()?;
    if system.is_empty() {
        return Err(invalid("system", "need at least one particle"));
    }
    let v = pair_matrix(system, potential);
    let results: Vec<FragmentPartition> = (0..schedule.restarts)
        .into_par_iter()
        .map(|r| anneal_once(system, &v, schedule, &mut RngStream::new(seed, r as u64)))
        .collect();
    let mut best = results[0].clone();
    for cand in results.into_iter().skip(1) {
        if better(&cand, &best) {
            best = cand;
        }
    }
    Ok(best)
}

/// Fragment sizes of a partition, largest first.
pub fn fragment_sizes(partition: &FragmentPartition) -> EventRecord {
    EventRecord::new(partition.sizes(), None).expect("cluster sizes are positive")
}
