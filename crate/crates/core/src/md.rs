//! Small classical molecular-dynamics engine: velocity Verlet with an
//! all-pairs shifted-force Lennard-Jones interaction, droplet preparation by
//! velocity-rescaling cooling, and two-droplet collisions.

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::rng::RngStream;

pub type Vec3 = [f64; 3];

/// Pair separations below this are treated as a broken configuration.
pub const DISTANCE_FLOOR: f64 = 1e-6;
/// Relative energy drift tolerated in a collision run.
pub const DRIFT_BOUND: f64 = 1e-4;

#[inline]
fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Particle label carried through snapshots; the default potential treats
/// both kinds alike.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Species {
    Proton,
    Neutron,
}

impl fmt::Display for Species {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Species::Proton => "p",
            Species::Neutron => "n",
        })
    }
}

impl FromStr for Species {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p" => Ok(Species::Proton),
            "n" => Ok(Species::Neutron),
            other => Err(invalid("species", format!("expected p or n, got `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSystem {
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    pub masses: Vec<f64>,
    pub species: Vec<Species>,
}

impl ParticleSystem {
    pub fn new(positions: Vec<Vec3>, velocities: Vec<Vec3>, masses: Vec<f64>, species: Vec<Species>) -> Result<Self> {
        let n = positions.len();
        if velocities.len() != n || masses.len() != n || species.len() != n {
            return Err(invalid("system", "positions, velocities, masses and species must have equal length"));
        }
        if masses.iter().any(|&m| !(m > 0.0) || !m.is_finite()) {
            return Err(invalid("masses", "masses must be positive and finite"));
        }
        if positions.iter().chain(&velocities).flatten().any(|x| !x.is_finite()) {
            return Err(invalid("system", "coordinates must be finite"));
        }
        let sys = Self { positions, velocities, masses, species };
        sys.check_separation()?;
        Ok(sys)
    }

    /// Unit-mass particles at rest, alternating proton/neutron labels.
    pub fn at_rest(positions: Vec<Vec3>) -> Result<Self> {
        let n = positions.len();
        let species = (0..n).map(|i| if i % 2 == 0 { Species::Proton } else { Species::Neutron }).collect();
        Self::new(positions, vec![[0.0; 3]; n], vec![1.0; n], species)
    }

    fn check_separation(&self) -> Result<()> {
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                let d = sub(self.positions[i], self.positions[j]);
                let r = dot(d, d).sqrt();
                if r <= DISTANCE_FLOOR {
                    return Err(Error::DegenerateConfiguration { i, j, distance: r });
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn kinetic_energy(&self) -> f64 {
        self.velocities.iter().zip(&self.masses).map(|(v, m)| 0.5 * m * dot(*v, *v)).sum()
    }

    pub fn momentum(&self) -> Vec3 {
        let mut p = [0.0; 3];
        for (v, m) in self.velocities.iter().zip(&self.masses) {
            for k in 0..3 {
                p[k] += m * v[k];
            }
        }
        p
    }

    pub fn center_of_mass(&self) -> Vec3 {
        let mut c = [0.0; 3];
        for (x, m) in self.positions.iter().zip(&self.masses) {
            for k in 0..3 {
                c[k] += m * x[k];
            }
        }
        c.map(|v| v / self.total_mass())
    }

    pub fn com_velocity(&self) -> Vec3 {
        self.momentum().map(|p| p / self.total_mass())
    }

    pub fn translate(&mut self, d: Vec3) {
        for x in &mut self.positions {
            for k in 0..3 {
                x[k] += d[k];
            }
        }
    }

    /// Adds `dv` to every velocity.
    pub fn boost(&mut self, dv: Vec3) {
        for v in &mut self.velocities {
            for k in 0..3 {
                v[k] += dv[k];
            }
        }
    }

    /// Largest distance of a particle from the center of mass.
    pub fn radius(&self) -> f64 {
        let c = self.center_of_mass();
        self.positions.iter().map(|&x| dot(sub(x, c), sub(x, c)).sqrt()).fold(0.0, f64::max)
    }

    /// Both systems in one, `other` appended after `self`.
    pub fn merged(&self, other: &Self) -> Result<Self> {
        let cat = |a: &[Vec3], b: &[Vec3]| a.iter().chain(b).copied().collect::<Vec<_>>();
        Self::new(
            cat(&self.positions, &other.positions),
            cat(&self.velocities, &other.velocities),
            self.masses.iter().chain(&other.masses).copied().collect(),
            self.species.iter().chain(&other.species).copied().collect(),
        )
    }
}

/// Lennard-Jones pair potential with force and value shifted so both vanish
/// at `r_cut`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairPotential {
    pub epsilon: f64,
    pub sigma: f64,
    pub r_cut: f64,
    v_cut: f64,
    dv_cut: f64,
}

impl PairPotential {
    pub fn lennard_jones(epsilon: f64, sigma: f64, r_cut: f64) -> Result<Self> {
        if !(epsilon > 0.0 && sigma > 0.0 && r_cut > sigma) || !(epsilon * sigma * r_cut).is_finite() {
            return Err(invalid("potential", "need epsilon > 0, sigma > 0, r_cut > sigma"));
        }
        let mut p = Self { epsilon, sigma, r_cut, v_cut: 0.0, dv_cut: 0.0 };
        p.v_cut = p.bare(r_cut);
        p.dv_cut = p.bare_derivative(r_cut);
        Ok(p)
    }

    fn bare(&self, r: f64) -> f64 {
        let s6 = (self.sigma / r).powi(6);
        4.0 * self.epsilon * (s6 * s6 - s6)
    }

    fn bare_derivative(&self, r: f64) -> f64 {
        let s6 = (self.sigma / r).powi(6);
        -24.0 * self.epsilon * (2.0 * s6 * s6 - s6) / r
    }

    pub fn energy(&self, r: f64) -> f64 {
        if r >= self.r_cut {
            0.0
        } else {
            self.bare(r) - self.v_cut - (r - self.r_cut) * self.dv_cut
        }
    }

    /// `dV/dr`.
    pub fn derivative(&self, r: f64) -> f64 {
        if r >= self.r_cut {
            0.0
        } else {
            self.bare_derivative(r) - self.dv_cut
        }
    }

    /// Separation of the potential minimum.
    pub fn minimum(&self) -> f64 {
        // Newton on dV/dr from the unshifted minimum, derivative by central differences
        let mut r = 2f64.powf(1.0 / 6.0) * self.sigma;
        for _ in 0..100 {
            let h = 1e-6 * self.sigma;
            let d2 = (self.derivative(r + h) - self.derivative(r - h)) / (2.0 * h);
            let step = self.derivative(r) / d2;
            r -= step;
            if step.abs() < 1e-15 * self.sigma {
                break;
            }
        }
        r
    }

    pub fn min_energy(&self) -> f64 {
        self.energy(self.minimum())
    }
}

impl Default for PairPotential {
    fn default() -> Self {
        Self::lennard_jones(1.0, 1.0, 3.0).expect("valid defaults")
    }
}

/// Forces on every particle and the total potential energy.
pub fn forces(system: &ParticleSystem, potential: &PairPotential) -> Result<(Vec<Vec3>, f64)> {
    let n = system.len();
    let mut f = vec![[0.0; 3]; n];
    let mut energy = 0.0;
    let rc2 = potential.r_cut * potential.r_cut;
    for i in 0..n {
        let xi = system.positions[i];
        for j in i + 1..n {
            let d = sub(xi, system.positions[j]);
            let r2 = dot(d, d);
            if r2 >= rc2 {
                continue;
            }
            let r = r2.sqrt();
            if r <= DISTANCE_FLOOR {
                return Err(Error::DegenerateConfiguration { i, j, distance: r });
            }
            energy += potential.energy(r);
            let s = -potential.derivative(r) / r;
            for k in 0..3 {
                f[i][k] += s * d[k];
                f[j][k] -= s * d[k];
            }
        }
    }
    Ok((f, energy))
}

/// Integrator state: the system plus forces at the current positions.
#[derive(Clone, Debug, PartialEq)]
pub struct MdState {
    pub system: ParticleSystem,
    pub time: f64,
    forces: Vec<Vec3>,
    potential_energy: f64,
}

impl MdState {
    pub fn new(system: ParticleSystem, potential: &PairPotential) -> Result<Self> {
        let (forces, potential_energy) = forces(&system, potential)?;
        Ok(Self { system, time: 0.0, forces, potential_energy })
    }

    pub fn potential_energy(&self) -> f64 {
        self.potential_energy
    }

    pub fn total_energy(&self) -> f64 {
        self.system.kinetic_energy() + self.potential_energy
    }

    pub fn forces(&self) -> &[Vec3] {
        &self.forces
    }

    /// One velocity-Verlet step; `external` adds a position-dependent force
    /// (used for confinement) that is not part of the reported potential.
    fn advance(&mut self, potential: &PairPotential, dt: f64, external: Option<&dyn Fn(Vec3) -> Vec3>) -> Result<()> {
        let sys = &mut self.system;
        let add_ext = |f: &mut Vec<Vec3>, pos: &[Vec3]| {
            if let Some(ext) = external {
                for (fi, &x) in f.iter_mut().zip(pos) {
                    let e = ext(x);
                    for k in 0..3 {
                        fi[k] += e[k];
                    }
                }
            }
        };
        let mut f_old = self.forces.clone();
        add_ext(&mut f_old, &sys.positions);
        for i in 0..sys.len() {
            let a = 0.5 * dt / sys.masses[i];
            for k in 0..3 {
                sys.velocities[i][k] += a * f_old[i][k];
                sys.positions[i][k] += dt * sys.velocities[i][k];
            }
        }
        let (mut f_new, pe) = forces(sys, potential)?;
        self.forces = f_new.clone();
        self.potential_energy = pe;
        add_ext(&mut f_new, &sys.positions);
        for i in 0..sys.len() {
            let a = 0.5 * dt / sys.masses[i];
            for k in 0..3 {
                sys.velocities[i][k] += a * f_new[i][k];
            }
        }
        self.time += dt;
        Ok(())
    }

    pub fn step(&mut self, potential: &PairPotential, dt: f64) -> Result<()> {
        if !(dt > 0.0) {
            return Err(invalid("dt", format!("time step must be positive, got {dt}")));
        }
        self.advance(potential, dt, None)
    }

    /// Negates every velocity (time reversal).
    pub fn reverse(&mut self) {
        for v in &mut self.system.velocities {
            *v = v.map(|x| -x);
        }
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            time: self.time,
            energy: self.total_energy(),
            momentum: self.system.momentum(),
            system: self.system.clone(),
        }
    }
}

/// One velocity-Verlet step of a bare system.
pub fn verlet_step(system: &ParticleSystem, potential: &PairPotential, dt: f64) -> Result<ParticleSystem> {
    let mut state = MdState::new(system.clone(), potential)?;
    state.step(potential, dt)?;
    Ok(state.system)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub system: ParticleSystem,
    pub energy: f64,
    pub momentum: Vec3,
}

impl Snapshot {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "# time {}\n# n {}\n# energy {}\n# momentum {} {} {}\n",
            self.time,
            self.system.len(),
            self.energy,
            self.momentum[0],
            self.momentum[1],
            self.momentum[2]
        );
        let s = &self.system;
        for i in 0..s.len() {
            let (x, v) = (s.positions[i], s.velocities[i]);
            out.push_str(&format!(
                "{i},{},{},{},{},{},{},{},{}\n",
                s.species[i], s.masses[i], x[0], x[1], x[2], v[0], v[1], v[2]
            ));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |what: String| invalid("snapshot", what);
        let mut header = std::collections::HashMap::new();
        let (mut pos, mut vel, mut mass, mut species) = (vec![], vec![], vec![], vec![]);
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let mut parts = rest.split_whitespace();
                if let Some(key) = parts.next() {
                    header.insert(key.to_string(), parts.map(str::to_string).collect::<Vec<_>>());
                }
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 9 {
                return Err(bad(format!("line {}: expected 9 columns, got {}", ln + 1, cols.len())));
            }
            let id: usize = cols[0].parse().map_err(|_| bad(format!("line {}: bad id", ln + 1)))?;
            if id != pos.len() {
                return Err(bad(format!("line {}: particle ids must be 0..n in order", ln + 1)));
            }
            let num = |k: usize| -> Result<f64> {
                cols[k].trim().parse().map_err(|_| bad(format!("line {}: bad number `{}`", ln + 1, cols[k])))
            };
            species.push(cols[1].trim().parse()?);
            mass.push(num(2)?);
            pos.push([num(3)?, num(4)?, num(5)?]);
            vel.push([num(6)?, num(7)?, num(8)?]);
        }
        let field = |key: &str, len: usize| -> Result<Vec<f64>> {
            let v = header.get(key).ok_or_else(|| bad(format!("missing `# {key}` header")))?;
            if v.len() != len {
                return Err(bad(format!("`# {key}` needs {len} values")));
            }
            v.iter().map(|s| s.parse().map_err(|_| bad(format!("bad `# {key}` value")))).collect()
        };
        let n = field("n", 1)?[0] as usize;
        if n != pos.len() {
            return Err(bad(format!("header says {n} particles, found {}", pos.len())));
        }
        let m = field("momentum", 3)?;
        Ok(Self {
            time: field("time", 1)?[0],
            energy: field("energy", 1)?[0],
            momentum: [m[0], m[1], m[2]],
            system: ParticleSystem::new(pos, vel, mass, species)?,
        })
    }
}

/// Kinetic energy per particle below which a cooling droplet counts as at rest.
const REST_KINETIC: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DropletConfig {
    /// Confining radius is `radius_per_particle * n^(1/3)` (length units).
    pub radius_per_particle: f64,
    /// Wall stiffness outside the confining sphere; the restoring force is
    /// capped at one length unit of penetration.
    pub wall_stiffness: f64,
    /// Initial temperature (energy units) for Maxwell velocities.
    pub initial_temperature: f64,
    /// Minimum separation of the random initial positions.
    pub min_separation: f64,
    pub cooling_factor: f64,
    pub cooling_every: usize,
    /// Temperature of fresh velocities given to a droplet that came to rest
    /// above the target energy.
    pub reheat_temperature: f64,
    pub max_steps: usize,
    pub dt: f64,
}

impl Default for DropletConfig {
    fn default() -> Self {
        Self {
            radius_per_particle: 0.9,
            wall_stiffness: 50.0,
            initial_temperature: 1.0,
            min_separation: 0.9,
            cooling_factor: 0.99,
            cooling_every: 10,
            reheat_temperature: 0.5,
            max_steps: 100_000,
            dt: 0.005,
        }
    }
}

fn random_in_sphere(radius: f64, rng: &mut RngStream) -> Vec3 {
    loop {
        let p = [0; 3].map(|_| radius * (2.0 * rng.uniform() - 1.0));
        if dot(p, p) <= radius * radius {
            return p;
        }
    }
}

/// Hot random droplet cooled inside a confining sphere until it is bound,
/// then cooled freely until the energy per particle reaches `target`. A
/// droplet that comes to rest above the target is reheated, confined again and
/// cooled again.
/// The result is centered at the origin with zero total momentum.
pub fn prepare_droplet(
    n: usize,
    target: f64,
    potential: &PairPotential,
    cfg: &DropletConfig,
    rng: &mut RngStream,
) -> Result<ParticleSystem> {
    if n < 2 {
        return Err(invalid("n_particles", "a droplet needs at least 2 particles"));
    }
    if !(cfg.cooling_factor > 0.0 && cfg.cooling_factor < 1.0) || cfg.cooling_every == 0 || !(cfg.dt > 0.0) {
        return Err(invalid("droplet", "cooling factor must be in (0,1), cooling interval and dt positive"));
    }
    let radius = cfg.radius_per_particle * (n as f64).cbrt();
    let mut positions: Vec<Vec3> = Vec::with_capacity(n);
    let mut tries = 0;
    while positions.len() < n {
        tries += 1;
        if tries > 1_000_000 {
            return Err(invalid("droplet", "could not place particles at the requested density"));
        }
        let p = random_in_sphere(radius, rng);
        if positions.iter().all(|&q| dot(sub(p, q), sub(p, q)) >= cfg.min_separation.powi(2)) {
            positions.push(p);
        }
    }
    let scale = cfg.initial_temperature.sqrt();
    let velocities = (0..n).map(|_| [0; 3].map(|_| scale * rng.normal())).collect();
    let species = (0..n).map(|i| if i % 2 == 0 { Species::Proton } else { Species::Neutron }).collect();
    let mut sys = ParticleSystem::new(positions, velocities, vec![1.0; n], species)?;
    let v = sys.com_velocity();
    sys.boost(v.map(|x| -x));
    let mut state = MdState::new(sys, potential)?;
    let k = cfg.wall_stiffness;
    let wall = move |x: Vec3| {
        let r = dot(x, x).sqrt();
        if r <= radius {
            [0.0; 3]
        } else {
            // harmonic near the wall, constant pull for strays far outside
            let s = -k * (r - radius).min(1.0) / r;
            x.map(|c| s * c)
        }
    };
    let mut confined = true;
    let mut energy = state.total_energy();
    for step in 1..=cfg.max_steps {
        state.advance(potential, cfg.dt, if confined { Some(&wall) } else { None })?;
        if step % cfg.cooling_every == 0 {
            for v in &mut state.system.velocities {
                *v = v.map(|x| x * cfg.cooling_factor);
            }
        }
        energy = state.total_energy();
        if confined {
            if energy < 0.0 && state.system.positions.iter().all(|x| dot(*x, *x) <= radius * radius) {
                confined = false;
            }
        } else if energy / n as f64 <= target && energy < 0.0 {
            let mut sys = state.system;
            let v = sys.com_velocity();
            sys.boost(v.map(|x| -x));
            let c = sys.center_of_mass();
            sys.translate(c.map(|x| -x));
            return Ok(sys);
        } else if state.system.kinetic_energy() < REST_KINETIC * n as f64 {
            let s = cfg.reheat_temperature.sqrt();
            for v in &mut state.system.velocities {
                *v = [0; 3].map(|_| s * rng.normal());
            }
            let v = state.system.com_velocity();
            state.system.boost(v.map(|x| -x));
            confined = true;
        }
    }
    Err(Error::BindingFailed { steps: cfg.max_steps, energy_per_particle: energy / n as f64, target })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CollisionConfig {
    /// Projectile kinetic energy per particle in the target rest frame.
    pub beam_energy: f64,
    /// Transverse offset (x) of the projectile center.
    pub impact_parameter: f64,
    pub dt: f64,
    pub t_end: f64,
    /// Steps between recorded snapshots.
    pub snapshot_stride: usize,
    /// Surface gap between the droplets at t = 0.
    pub gap: f64,
}

impl CollisionConfig {
    pub fn new(beam_energy: f64, t_end: f64) -> Self {
        Self { beam_energy, impact_parameter: 0.0, dt: 0.001, t_end, snapshot_stride: 1000, gap: 3.5 }
    }
}

/// Places `projectile` below `target` along z, boosts both into the
/// center-of-mass frame and integrates. Snapshots include t = 0 and the final
/// state. Fails if the total energy drifts by more than `DRIFT_BOUND`
/// relative.
pub fn collide(
    projectile: &ParticleSystem,
    target: &ParticleSystem,
    potential: &PairPotential,
    cfg: &CollisionConfig,
) -> Result<Vec<Snapshot>> {
    if !(cfg.dt > 0.0) || !(cfg.t_end >= 0.0) || !(cfg.beam_energy >= 0.0) || cfg.snapshot_stride == 0 {
        return Err(invalid("collision", "need dt > 0, t_end >= 0, beam energy >= 0, stride >= 1"));
    }
    let mut a = projectile.clone();
    let mut b = target.clone();
    let (ca, cb) = (a.center_of_mass(), b.center_of_mass());
    a.translate(ca.map(|x| -x));
    b.translate(cb.map(|x| -x));
    let (va, vb) = (a.com_velocity(), b.com_velocity());
    a.boost(va.map(|x| -x));
    b.boost(vb.map(|x| -x));
    let separation = a.radius() + b.radius() + cfg.gap;
    a.translate([cfg.impact_parameter, 0.0, -separation]);
    let (ma, mb) = (a.total_mass(), b.total_mass());
    let per_mass = a.total_mass() / a.len() as f64;
    let v_rel = (2.0 * cfg.beam_energy / per_mass).sqrt();
    a.boost([0.0, 0.0, v_rel * mb / (ma + mb)]);
    b.boost([0.0, 0.0, -v_rel * ma / (ma + mb)]);
    let mut state = MdState::new(a.merged(&b)?, potential)?;
    let e0 = state.total_energy();
    let steps = (cfg.t_end / cfg.dt).round() as usize;
    let mut snaps = vec![state.snapshot()];
    for s in 1..=steps {
        state.step(potential, cfg.dt)?;
        let drift = (state.total_energy() - e0).abs() / e0.abs();
        if drift > DRIFT_BOUND {
            return Err(Error::EnergyDrift { drift, bound: DRIFT_BOUND, time: state.time, suggested_dt: cfg.dt / 2.0 });
        }
        if s % cfg.snapshot_stride == 0 || s == steps {
            snaps.push(state.snapshot());
        }
    }
    Ok(snaps)
}
