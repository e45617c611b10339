//! Viral/immune coevolution automaton on the binary sequence space.
//!
//! Sequences of `n` bits are the vertices of the n-hypercube. Each vertex is
//! Susceptible, Infected or Recovered. Every sequence that ever hosted an
//! infection carries a persistent immune receptor. One step picks the viral or
//! the immune branch, replicates one entity of that branch, and applies a
//! single-bit copy error with probability `1 - q`:
//!
//! * viral mutant landing on a Susceptible sequence infects it;
//! * immune mutant landing on an Infected sequence recovers it.
//!
//! Allowed site transitions are therefore only S → I and I → R.

use rayon::prelude::*;

use crate::cluster::{label_clusters_where, ClusterPartition, Hypercube};
use crate::error::{invalid, Result};
use crate::events::EventRecord;
use crate::exponent::{group_by_control, mean_se, moments, MomentSeries};
use crate::rng::RngStream;

/// Largest supported sequence length.
pub const MAX_BITS: u32 = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SiteState {
    Susceptible,
    Infected,
    Recovered,
}

/// How the replicating entity is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum Selection {
    /// Fair coin between the viral and immune branch, then a uniform choice
    /// among that branch's entities.
    #[default]
    Branch,
    /// Uniform sequence and a fair coin for the role; the step is a no-op when
    /// the sequence hosts no entity of that role.
    UniformSite,
}

impl std::str::FromStr for Selection {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "branch" => Ok(Selection::Branch),
            "uniform-site" => Ok(Selection::UniformSite),
            other => Err(invalid("selection", format!("expected branch|uniform-site, got `{other}`"))),
        }
    }
}

impl std::fmt::Display for Selection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Selection::Branch => "branch",
            Selection::UniformSite => "uniform-site",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AutomatonParams {
    pub q_vs: f64,
    pub q_is: f64,
    pub n: u32,
    pub initial_strains: Vec<u32>,
    pub max_steps: u64,
    pub selection: Selection,
}

impl AutomatonParams {
    pub fn new(n: u32, q_vs: f64, q_is: f64, initial_strains: Vec<u32>, max_steps: u64) -> Self {
        Self {
            q_vs,
            q_is,
            n,
            initial_strains,
            max_steps,
            selection: Selection::Branch,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n > MAX_BITS {
            return Err(invalid("n", format!("sequence length must be in 1..={MAX_BITS}, got {}", self.n)));
        }
        for (name, q) in [("q_vs", self.q_vs), ("q_is", self.q_is)] {
            if !(0.0..=1.0).contains(&q) {
                return Err(invalid(name, format!("copy fidelity must lie in [0, 1], got {q}")));
            }
        }
        let size = 1u64 << self.n;
        let mut seen = std::collections::BTreeSet::new();
        for &s in &self.initial_strains {
            if u64::from(s) >= size {
                return Err(invalid("initial_strains", format!("strain {s} outside 0..{size}")));
            }
            if !seen.insert(s) {
                return Err(invalid("initial_strains", format!("duplicate strain {s}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StepEvent {
    NoOp,
    /// A viral copy error that did not land on a susceptible sequence.
    ViralMutation,
    /// An immune copy error that did not land on an infected sequence.
    ImmuneMutation,
    NewInfection,
    Recovery,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceSpace {
    n: u32,
    states: Vec<SiteState>,
    /// Infected sequences; `slot[x]` is the position of `x` in this list.
    infected: Vec<u32>,
    slot: Vec<u32>,
    /// Immune receptors in registration order (every sequence ever infected).
    receptors: Vec<u32>,
    recovered: usize,
}

const NO_SLOT: u32 = u32::MAX;

impl SequenceSpace {
    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn size(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[SiteState] {
        &self.states
    }

    pub fn state(&self, x: u32) -> SiteState {
        self.states[x as usize]
    }

    pub fn receptors(&self) -> &[u32] {
        &self.receptors
    }

    pub fn infected(&self) -> &[u32] {
        &self.infected
    }

    /// `(S, I, R)` counts.
    pub fn counts(&self) -> (usize, usize, usize) {
        let i = self.infected.len();
        (self.states.len() - i - self.recovered, i, self.recovered)
    }

    pub fn infected_fraction(&self) -> f64 {
        self.infected.len() as f64 / self.states.len() as f64
    }

    pub fn is_absorbed(&self) -> bool {
        self.infected.is_empty()
    }

    fn infect(&mut self, x: u32) {
        self.states[x as usize] = SiteState::Infected;
        self.slot[x as usize] = self.infected.len() as u32;
        self.infected.push(x);
        self.receptors.push(x);
    }

    fn recover(&mut self, x: u32) {
        let pos = self.slot[x as usize] as usize;
        let last = *self.infected.last().expect("infected list non-empty");
        self.infected.swap_remove(pos);
        if last != x {
            self.slot[last as usize] = pos as u32;
        }
        self.slot[x as usize] = NO_SLOT;
        self.states[x as usize] = SiteState::Recovered;
        self.recovered += 1;
    }

    /// Builds a state directly from site states; receptors are registered for
    /// every Infected or Recovered sequence in index order.
    pub fn from_states(n: u32, states: Vec<SiteState>) -> Result<Self> {
        if n == 0 || n > MAX_BITS || states.len() != 1usize << n {
            return Err(invalid("states", format!("need 2^{n} site states")));
        }
        let mut space = Self {
            n,
            states: vec![SiteState::Susceptible; states.len()],
            infected: Vec::new(),
            slot: vec![NO_SLOT; states.len()],
            receptors: Vec::new(),
            recovered: 0,
        };
        for (x, st) in states.into_iter().enumerate() {
            match st {
                SiteState::Susceptible => {}
                SiteState::Infected => space.infect(x as u32),
                SiteState::Recovered => {
                    space.states[x] = SiteState::Recovered;
                    space.receptors.push(x as u32);
                    space.recovered += 1;
                }
            }
        }
        Ok(space)
    }
}

/// Seeds the listed strains as Infected, each with its immune receptor.
pub fn init(params: &AutomatonParams) -> Result<SequenceSpace> {
    params.validate()?;
    let size = 1usize << params.n;
    let mut space = SequenceSpace {
        n: params.n,
        states: vec![SiteState::Susceptible; size],
        infected: Vec::with_capacity(params.initial_strains.len()),
        slot: vec![NO_SLOT; size],
        receptors: Vec::new(),
        recovered: 0,
    };
    for &s in &params.initial_strains {
        space.infect(s);
    }
    Ok(space)
}

/// One automaton update.
pub fn step(space: &mut SequenceSpace, params: &AutomatonParams, rng: &mut RngStream) -> StepEvent {
    if space.infected.is_empty() {
        return StepEvent::NoOp;
    }
    let viral = rng.bernoulli(0.5);
    let source = match params.selection {
        Selection::Branch => {
            if viral {
                space.infected[rng.below(space.infected.len())]
            } else {
                space.receptors[rng.below(space.receptors.len())]
            }
        }
        Selection::UniformSite => {
            let x = rng.below(space.size()) as u32;
            let hosts = match space.state(x) {
                SiteState::Infected => true,
                SiteState::Recovered => !viral,
                SiteState::Susceptible => false,
            };
            if !hosts {
                return StepEvent::NoOp;
            }
            x
        }
    };
    let fidelity = if viral { params.q_vs } else { params.q_is };
    if rng.uniform() >= 1.0 - fidelity {
        return StepEvent::NoOp;
    }
    let mutant = source ^ (1 << rng.below(space.n as usize));
    match (viral, space.state(mutant)) {
        (true, SiteState::Susceptible) => {
            space.infect(mutant);
            StepEvent::NewInfection
        }
        (true, _) => StepEvent::ViralMutation,
        (false, SiteState::Infected) => {
            space.recover(mutant);
            StepEvent::Recovery
        }
        (false, _) => StepEvent::ImmuneMutation,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrajectoryPoint {
    pub step: u64,
    pub s: usize,
    pub i: usize,
    pub r: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    pub final_space: SequenceSpace,
    pub absorbed: bool,
    pub steps: u64,
}

/// Runs until no sequence is infected or `max_steps` updates have been made,
/// sampling counts every `stride` steps plus the final state.
pub fn run(params: &AutomatonParams, stride: u64, rng: &mut RngStream) -> Result<Trajectory> {
    let space = init(params)?;
    Ok(run_from(space, params, stride, rng))
}

pub fn run_from(mut space: SequenceSpace, params: &AutomatonParams, stride: u64, rng: &mut RngStream) -> Trajectory {
    let stride = stride.max(1);
    let point = |step: u64, sp: &SequenceSpace| {
        let (s, i, r) = sp.counts();
        TrajectoryPoint { step, s, i, r }
    };
    let mut points = vec![point(0, &space)];
    let mut t = 0;
    while t < params.max_steps && !space.is_absorbed() {
        step(&mut space, params, rng);
        t += 1;
        if t % stride == 0 {
            points.push(point(t, &space));
        }
    }
    if points.last().map(|p| p.step) != Some(t) {
        points.push(point(t, &space));
    }
    Trajectory {
        points,
        absorbed: space.is_absorbed(),
        final_space: space,
        steps: t,
    }
}

/// Clusters of Infected sequences under Hamming-distance-1 adjacency.
pub fn infected_clusters(space: &SequenceSpace) -> ClusterPartition {
    label_clusters_where(
        &Hypercube { bits: space.n },
        |x| space.states[x] == SiteState::Infected,
        |_, _| true,
    )
}

/// Default step budget for a sequence length: sixteen updates per sequence.
pub fn default_max_steps(n: u32) -> u64 {
    16 * (1u64 << n)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseCell {
    pub q_vs: f64,
    pub q_is: f64,
    pub infected_ratio: f64,
    pub se: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseDiagram {
    pub q_vs: Vec<f64>,
    pub q_is: Vec<f64>,
    /// Row-major over `q_vs` (outer) and `q_is` (inner).
    pub cells: Vec<PhaseCell>,
}

impl PhaseDiagram {
    pub fn cell(&self, i_vs: usize, i_is: usize) -> &PhaseCell {
        &self.cells[i_vs * self.q_is.len() + i_is]
    }
}

/// Mean final infected fraction per `(q_vs, q_is)` cell over `replicas`
/// runs seeded with one random strain. Cell `(a, b)`, replica `r` uses
/// stream `(a * len(q_is) + b) * replicas + r`.
pub fn phase_diagram(
    n: u32,
    q_vs_grid: &[f64],
    q_is_grid: &[f64],
    replicas: usize,
    max_steps: u64,
    selection: Selection,
    seed: u64,
) -> Result<PhaseDiagram> {
    if replicas == 0 {
        return Err(invalid("replicas", "need at least one replica"));
    }
    for &q in q_vs_grid.iter().chain(q_is_grid) {
        if !(0.0..=1.0).contains(&q) {
            return Err(invalid("grid", format!("fidelity {q} outside [0, 1]")));
        }
    }
    AutomatonParams::new(n, 0.5, 0.5, vec![], max_steps).validate()?;
    let n_is = q_is_grid.len();
    let cells: Vec<PhaseCell> = (0..q_vs_grid.len() * n_is)
        .into_par_iter()
        .map(|c| {
            let (q_vs, q_is) = (q_vs_grid[c / n_is], q_is_grid[c % n_is]);
            let ratios: Vec<f64> = (0..replicas)
                .map(|r| {
                    let mut rng = RngStream::new(seed, (c * replicas + r) as u64);
                    let strain = rng.below(1 << n) as u32;
                    let mut params = AutomatonParams::new(n, q_vs, q_is, vec![strain], max_steps);
                    params.selection = selection;
                    let traj = run(&params, max_steps.max(1), &mut rng).expect("validated");
                    traj.final_space.infected_fraction()
                })
                .collect();
            let (m, se) = mean_se(ratios);
            PhaseCell { q_vs, q_is, infected_ratio: m, se }
        })
        .collect();
    Ok(PhaseDiagram {
        q_vs: q_vs_grid.to_vec(),
        q_is: q_is_grid.to_vec(),
        cells,
    })
}

/// 4-connected regions of cells whose ratio is below `fraction` of the grid
/// maximum; each region lists `(i_vs, i_is)` cells.
pub fn low_regions(diagram: &PhaseDiagram, fraction: f64) -> Vec<Vec<(usize, usize)>> {
    let (nv, ni) = (diagram.q_vs.len(), diagram.q_is.len());
    let max = diagram.cells.iter().map(|c| c.infected_ratio).fold(0.0, f64::max);
    let low: Vec<bool> = diagram.cells.iter().map(|c| c.infected_ratio < fraction * max).collect();
    let mut seen = vec![false; low.len()];
    let mut regions = Vec::new();
    for start in 0..low.len() {
        if !low[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let mut region = Vec::new();
        while let Some(c) = stack.pop() {
            let (a, b) = (c / ni, c % ni);
            region.push((a, b));
            let mut push = |a2: usize, b2: usize| {
                let k = a2 * ni + b2;
                if low[k] && !seen[k] {
                    seen[k] = true;
                    stack.push(k);
                }
            };
            if a > 0 {
                push(a - 1, b);
            }
            if a + 1 < nv {
                push(a + 1, b);
            }
            if b > 0 {
                push(a, b - 1);
            }
            if b + 1 < ni {
                push(a, b + 1);
            }
        }
        region.sort_unstable();
        regions.push(region);
    }
    regions
}

/// Final-state infected-cluster sizes of `runs` independent runs, one event
/// per run, tagged with `q_vs` and normalized by `2^n`. Run `r` uses stream
/// `stream_base + r` and starts from one random strain.
#[allow(clippy::too_many_arguments)]
pub fn cluster_events(
    n: u32,
    q_vs: f64,
    q_is: f64,
    runs: usize,
    max_steps: u64,
    selection: Selection,
    seed: u64,
    stream_base: u64,
) -> Result<Vec<EventRecord>> {
    let mut probe = AutomatonParams::new(n, q_vs, q_is, vec![], max_steps);
    probe.selection = selection;
    probe.validate()?;
    (0..runs)
        .into_par_iter()
        .map(|r| {
            let mut rng = RngStream::new(seed, stream_base + r as u64);
            let mut params = probe.clone();
            params.initial_strains = vec![rng.below(1 << n) as u32];
            let traj = run(&params, max_steps.max(1), &mut rng)?;
            let sizes = infected_clusters(&traj.final_space).sizes_descending();
            EventRecord::new(sizes, Some(q_vs))?.with_system_size(1 << n)
        })
        .collect()
}

/// Second moment of the infected-cluster distribution along a `q_vs` scan.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticalScan {
    pub q_is: f64,
    pub series: MomentSeries,
    /// Scan value with the largest second moment.
    pub q_vs: f64,
}

/// Scans `q_vs` at fixed `q_is`; grid point `g` uses streams starting at
/// `g * runs`.
pub fn locate_critical(
    n: u32,
    q_vs_grid: &[f64],
    q_is: f64,
    runs: usize,
    max_steps: u64,
    selection: Selection,
    seed: u64,
) -> Result<CriticalScan> {
    if q_vs_grid.is_empty() || runs == 0 {
        return Err(invalid("scan", "need a non-empty grid and at least one run"));
    }
    let mut events = Vec::new();
    for (g, &q_vs) in q_vs_grid.iter().enumerate() {
        events.extend(cluster_events(n, q_vs, q_is, runs, max_steps, selection, seed, (g * runs) as u64)?);
    }
    let groups = group_by_control(&events);
    let series = moments(&groups, 2, false)?;
    let q_vs = series.peak().expect("non-empty scan");
    Ok(CriticalScan { q_is, series, q_vs })
}
