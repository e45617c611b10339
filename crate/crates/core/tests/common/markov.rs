//! Exact one-step law of the n = 3 automaton, written directly from the update rule.

use std::collections::HashMap;

use critlab_core::hiv::{step, AutomatonParams, Selection, SequenceSpace, SiteState};
use critlab_core::RngStream;

pub fn encode(states: &[SiteState]) -> u16 {
    states.iter().rev().fold(0u16, |acc, s| acc * 3 + *s as u16)
}

pub fn exact_law(states: &[SiteState], q_vs: f64, q_is: f64, sel: Selection) -> HashMap<u16, f64> {
    use SiteState::*;
    let n = 3u32;
    let mut law: HashMap<u16, f64> = HashMap::new();
    let mut add = |next: &[SiteState], p: f64| *law.entry(encode(next)).or_default() += p;
    let infected: Vec<usize> = (0..8).filter(|&x| states[x] == Infected).collect();
    let receptors: Vec<usize> = (0..8).filter(|&x| states[x] != Susceptible).collect();
    if infected.is_empty() {
        add(states, 1.0);
        return law;
    }
    let replicate = |src: usize, viral: bool, weight: f64, add: &mut dyn FnMut(&[SiteState], f64)| {
        let q = if viral { q_vs } else { q_is };
        add(states, weight * q);
        for b in 0..n {
            let m = src ^ (1 << b);
            let mut next = states.to_vec();
            match (viral, states[m]) {
                (true, Susceptible) => next[m] = Infected,
                (false, Infected) => next[m] = Recovered,
                _ => {}
            }
            add(&next, weight * (1.0 - q) / n as f64);
        }
    };
    match sel {
        Selection::Branch => {
            for &x in &infected {
                replicate(x, true, 0.5 / infected.len() as f64, &mut add);
            }
            for &r in &receptors {
                replicate(r, false, 0.5 / receptors.len() as f64, &mut add);
            }
        }
        Selection::UniformSite => {
            for x in 0..8 {
                let w = 0.5 / 8.0;
                if states[x] == Infected {
                    replicate(x, true, w, &mut add);
                } else {
                    add(states, w);
                }
                if states[x] != Susceptible {
                    replicate(x, false, w, &mut add);
                } else {
                    add(states, w);
                }
            }
        }
    }
    law
}

pub fn random_state(rng: &mut RngStream) -> Vec<SiteState> {
    loop {
        let s: Vec<SiteState> = (0..8)
            .map(|_| match rng.below(3) {
                0 => SiteState::Susceptible,
                1 => SiteState::Infected,
                _ => SiteState::Recovered,
            })
            .collect();
        if s.contains(&SiteState::Infected) {
            return s;
        }
    }
}

/// Draws `draws` single steps from each of `starts` random states and compares
/// destination frequencies with the exact law. Returns the worst
/// `|observed - expected| / sd` and the number of impossible destinations seen.
pub fn transition_check(q_vs: f64, q_is: f64, sel: Selection, starts: usize, draws: usize, stream: u64) -> (f64, usize) {
    let mut p = AutomatonParams::new(3, q_vs, q_is, vec![], u64::MAX);
    p.selection = sel;
    let mut rng = RngStream::new(10, stream);
    let mut start_rng = RngStream::new(11, stream);
    let mut worst = 0.0f64;
    let mut impossible = 0;
    for _ in 0..starts {
        let start = random_state(&mut start_rng);
        let law = exact_law(&start, q_vs, q_is, sel);
        let mut counts: HashMap<u16, usize> = HashMap::new();
        for _ in 0..draws {
            let mut sp = SequenceSpace::from_states(3, start.clone()).unwrap();
            step(&mut sp, &p, &mut rng);
            *counts.entry(encode(sp.states())).or_default() += 1;
        }
        impossible += counts.keys().filter(|d| !law.contains_key(d)).count();
        for (dest, &pr) in &law {
            let obs = counts.get(dest).copied().unwrap_or(0) as f64;
            let exp = pr * draws as f64;
            let sd = (draws as f64 * pr * (1.0 - pr)).sqrt();
            let z = if sd > 0.0 { (obs - exp).abs() / sd } else if obs == exp { 0.0 } else { f64::INFINITY };
            worst = worst.max(z);
        }
    }
    (worst, impossible)
}
