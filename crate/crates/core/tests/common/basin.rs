//! Independent shifted-force Lennard-Jones energy and a basin-hopping search.

use critlab_core::RngStream;

pub const RC: f64 = 3.0;

fn lj(r: f64) -> f64 {
    4.0 * (r.powi(-12) - r.powi(-6))
}

fn dlj(r: f64) -> f64 {
    -48.0 * r.powi(-13) + 24.0 * r.powi(-7)
}

pub fn pair(r: f64) -> f64 {
    if r >= RC { 0.0 } else { lj(r) - lj(RC) - (r - RC) * dlj(RC) }
}

pub fn energy_grad(x: &[f64]) -> (f64, Vec<f64>) {
    let n = x.len() / 3;
    let mut e = 0.0;
    let mut g = vec![0.0; x.len()];
    for i in 0..n {
        for j in 0..i {
            let d: Vec<f64> = (0..3).map(|k| x[3 * i + k] - x[3 * j + k]).collect();
            let r = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            if r >= RC {
                continue;
            }
            e += pair(r);
            let dv = dlj(r) - dlj(RC);
            for k in 0..3 {
                g[3 * i + k] += dv * d[k] / r;
                g[3 * j + k] -= dv * d[k] / r;
            }
        }
    }
    (e, g)
}

/// Gradient descent with backtracking line search.
pub fn relax(mut x: Vec<f64>) -> (f64, Vec<f64>) {
    let (mut e, mut g) = energy_grad(&x);
    let mut step = 0.01;
    for _ in 0..20_000 {
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gn < 1e-8 {
            break;
        }
        loop {
            let trial: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - step * b / gn).collect();
            let (et, gt) = energy_grad(&trial);
            if et < e {
                x = trial;
                e = et;
                g = gt;
                step *= 1.2;
                break;
            }
            step *= 0.5;
            if step < 1e-14 {
                return (e, x);
            }
        }
    }
    (e, x)
}

/// Lowest energy found by `hops` random-perturbation hops at temperature 0.8.
pub fn basin_hopping(n: usize, hops: usize, seed: u64) -> f64 {
    let mut rng = RngStream::new(seed, 0);
    let mut x: Vec<f64> = (0..3 * n).map(|_| 1.5 * (rng.uniform() - 0.5) * (n as f64).cbrt()).collect();
    let (mut e, mut cur) = relax(x.clone());
    let mut best = e;
    for _ in 0..hops {
        x = cur.iter().map(|v| v + 0.4 * (2.0 * rng.uniform() - 1.0)).collect();
        let (et, xt) = relax(x);
        if et < e || rng.uniform() < ((e - et) / 0.8).exp() {
            e = et;
            cur = xt;
        }
        best = best.min(e);
    }
    best
}
