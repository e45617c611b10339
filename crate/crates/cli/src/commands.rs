use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use clap::ArgMatches;
use critlab_core::ecra::{anneal, AnnealSchedule};
use critlab_core::exponent::{critical_multiplicity, fit_tau, FitRange, PowerLawFit, SizeHistogram, TauGrid};
use critlab_core::events::{format_events, parse_events};
use critlab_core::hiv::{self, AutomatonParams};
use critlab_core::md::{prepare_droplet, CollisionConfig, DropletConfig, PairPotential, Snapshot};
use critlab_core::percolation::{linear_grid, threshold_scan};
use critlab_core::pipeline::{collide_with_retry, table1, Describe, Table1Config};
use critlab_core::spin::{domain_events, susceptibility_scan, ScanConfig};
use critlab_core::{EventRecord, RngStream};

use crate::manifest::{manifest_path, sibling, Manifest};
use crate::*;

type Res = Result<(), CliError>;

pub(crate) fn dispatch(command: Command, cmd: &clap::Command, name: &str, sub: &ArgMatches) -> Res {
    let manifest = || Manifest::for_command(cmd, name, sub);
    match command {
        Command::PercolationScan(a) => percolation_scan(a, manifest()),
        Command::HivRun(a) => hiv_run(a, manifest()),
        Command::HivPhase(a) => hiv_phase(a, manifest()),
        Command::HivClusters(a) => hiv_clusters(a, manifest()),
        Command::CmrScan(a) => cmr_scan(a, manifest()),
        Command::CmrClusters(a) => cmr_clusters(a, manifest()),
        Command::MdCollide(a) => md_collide(a, manifest()),
        Command::Ecra(a) => ecra(a, manifest()),
        Command::Fit(a) => fit(a, manifest()),
        Command::Table1(a) => table1_cmd(a, manifest()),
        Command::Replay(a) => replay(a),
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(csv::Writer::from_path(path)?)
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn write_file_manifest(out: &Path, m: &Manifest) -> Res {
    fs::write(manifest_path(out, false), m.to_text())?;
    Ok(())
}

fn read_input(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

/// `size,count` rows summed over all events, plus the raw events in
/// `<path>.events` for `fit`.
fn write_histogram(path: &Path, events: &[EventRecord]) -> Res {
    let mut counts: BTreeMap<usize, u64> = BTreeMap::new();
    for e in events {
        for &a in e.fragment_sizes() {
            *counts.entry(a).or_insert(0) += 1;
        }
    }
    let mut w = csv_writer(path)?;
    w.write_record(["size", "count"])?;
    for (a, c) in counts {
        w.write_record([a.to_string(), c.to_string()])?;
    }
    w.flush()?;
    fs::write(sibling(path, "events"), format_events(events))?;
    Ok(())
}

fn percolation_scan(a: PercolationScanArgs, m: Manifest) -> Res {
    let out = resolve_out(&a.out);
    let grid = linear_grid(a.p_min, a.p_max, a.p_steps);
    let scan = threshold_scan(a.dims, &grid, a.samples, a.seed, a.mode)?;
    let mut w = csv_writer(&out)?;
    w.write_record(["p", "spanning_prob", "spanning_prob_se", "p_inf", "p_inf_se", "second_moment", "second_moment_se"])?;
    for r in &scan.rows {
        w.write_record(
            [r.p, r.spanning_prob, r.spanning_prob_se, r.p_inf, r.p_inf_se, r.second_moment, r.second_moment_se]
                .map(|x| x.to_string()),
        )?;
    }
    w.flush()?;
    write_file_manifest(&out, &m)
}

fn hiv_run(a: HivRunArgs, m: Manifest) -> Res {
    let out = resolve_out(&a.out);
    let mut p = AutomatonParams::new(a.n, a.qvs, a.qis, a.strains, a.max_steps.unwrap_or(hiv::default_max_steps(a.n)));
    p.selection = a.selection;
    let traj = hiv::run(&p, a.stride, &mut RngStream::new(a.seed, 0))?;
    let mut w = csv_writer(&out)?;
    w.write_record(["step", "S", "I", "R"])?;
    for pt in &traj.points {
        w.write_record([pt.step as usize, pt.s, pt.i, pt.r].map(|x| x.to_string()))?;
    }
    w.flush()?;
    write_file_manifest(&out, &m)
}

fn hiv_phase(a: HivPhaseArgs, m: Manifest) -> Res {
    let out = resolve_out(&a.out);
    let grid = linear_grid(0.0, 1.0, a.grid_steps);
    let max_steps = a.max_steps.unwrap_or(hiv::default_max_steps(a.n));
    let d = hiv::phase_diagram(a.n, &grid, &grid, a.replicas, max_steps, a.selection, a.seed)?;
    let mut w = csv_writer(&out)?;
    w.write_record(["qvs", "qis", "infected_ratio", "se"])?;
    for c in &d.cells {
        w.write_record([c.q_vs, c.q_is, c.infected_ratio, c.se].map(|x| x.to_string()))?;
    }
    w.flush()?;
    write_file_manifest(&out, &m)
}

fn hiv_clusters(a: HivClustersArgs, m: Manifest) -> Res {
    let out = resolve_out(&a.out);
    let max_steps = a.max_steps.unwrap_or(hiv::default_max_steps(a.n));
    let events = hiv::cluster_events(a.n, a.qvs, a.qis, a.runs, max_steps, a.selection, a.seed, 0)?;
    write_histogram(&out, &events)?;
    write_file_manifest(&out, &m)
}

fn cmr_scan(a: CmrScanArgs, m: Manifest) -> Res {
    let out = resolve_out(&a.out);
    let mut cfg = ScanConfig::new(a.dims);
    cfg.j = a.j;
    cfg.h = a.h;
    cfg.discard = a.discard;
    cfg.measure = a.measure;
    let samples = susceptibility_scan(&cfg, &linear_grid(a.t_min, a.t_max, a.t_steps), a.seed)?;
    let mut w = csv_writer(&out)?;
    w.write_record(["T", "mag", "mag_se", "chi", "chi_se", "energy_per_site", "accept_rate"])?;
    for s in &samples {
        w.write_record(
            [s.t, s.mean_magnetization, s.mag_se, s.susceptibility, s.chi_se, s.energy_per_site, s.accept_rate]
                .map(|x| x.to_string()),
        )?;
    }
    w.flush()?;
    write_file_manifest(&out, &m)
}

fn cmr_clusters(a: CmrClustersArgs, m: Manifest) -> Res {
    let out = resolve_out(&a.out);
    let mut cfg = ScanConfig::new(a.dims);
    cfg.j = a.j;
    cfg.h = a.h;
    cfg.discard = a.discard;
    let events = domain_events(&cfg, a.t, a.replicas, a.snapshots, a.every, a.seed)?;
    write_histogram(&out, &events)?;
    write_file_manifest(&out, &m)
}

fn md_collide(a: MdCollideArgs, mut m: Manifest) -> Res {
    let out = resolve_out(&a.out);
    let pot = PairPotential::default();
    let prep = DropletConfig::default();
    let pa = prepare_droplet(a.a, a.binding, &pot, &prep, &mut RngStream::new(a.seed, 0))?;
    let pb = prepare_droplet(a.b, a.binding, &pot, &prep, &mut RngStream::new(a.seed, 1))?;
    let cfg = CollisionConfig { impact_parameter: a.impact, dt: a.dt, snapshot_stride: a.stride, ..CollisionConfig::new(a.energy, a.t_end) };
    let (snaps, dt) = collide_with_retry(&pa, &pb, &pot, &cfg, a.retries)?;
    m.push("accepted_dt", dt);
    fs::create_dir_all(&out)?;
    for (k, s) in snaps.iter().enumerate() {
        fs::write(out.join(format!("snapshot_{k:05}.txt")), s.to_text())?;
    }
    fs::write(manifest_path(&out, true), m.to_text())?;
    Ok(())
}

fn ecra(a: EcraArgs, mut m: Manifest) -> Res {
    let out = resolve_out(&a.out);
    let snap = Snapshot::parse(&read_input(&a.snapshot)?).map_err(|e| CliError::Usage(e.to_string()))?;
    let pot = PairPotential::default();
    let d = AnnealSchedule::default_for(&snap.system, &pot);
    let sched = AnnealSchedule {
        t_start: a.t_start.unwrap_or(d.t_start),
        t_end: a.t_end.unwrap_or(d.t_end),
        cooling_factor: a.cooling.unwrap_or(d.cooling_factor),
        moves_per_temperature: a.moves.unwrap_or(d.moves_per_temperature),
        restarts: a.restarts.unwrap_or(d.restarts),
    };
    m.push("schedule.t_start", sched.t_start);
    m.push("schedule.t_end", sched.t_end);
    m.push("schedule.cooling_factor", sched.cooling_factor);
    m.push("schedule.moves_per_temperature", sched.moves_per_temperature);
    m.push("schedule.restarts", sched.restarts);
    let part = anneal(&snap.system, &pot, &sched, a.seed)?;
    let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
    for &c in &part.assignment {
        *sizes.entry(c).or_insert(0) += 1;
    }
    let mut w = csv_writer(&out)?;
    w.write_record(["cluster_id", "size", "e_int"])?;
    for (c, e) in &part.per_cluster_energy {
        w.write_record([c.to_string(), sizes[c].to_string(), e.to_string()])?;
    }
    w.flush()?;
    let mut s = csv_writer(&sibling(&out, "summary.csv"))?;
    s.write_record(["multiplicity", "total_e_int"])?;
    s.write_record([part.n_clusters().to_string(), part.internal_energy.to_string()])?;
    s.flush()?;
    write_file_manifest(&out, &m)
}

fn fit_row(w: &mut csv::Writer<fs::File>, bin: &str, f: Option<&PowerLawFit>, n_events: usize) -> Res {
    let (tau, q0, chi) = match f {
        Some(f) => (Some(f.tau), Some(f.q0), Some(f.chi2_reduced)),
        None => (None, None, None),
    };
    w.write_record([bin.to_string(), opt(tau), opt(q0), opt(chi), n_events.to_string()])?;
    Ok(())
}

fn fit(a: FitArgs, mut m: Manifest) -> Res {
    let out = resolve_out(&a.out);
    let mut events = parse_events(&read_input(&a.events)?).map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(size) = a.system_size {
        events = events.into_iter().map(|e| e.with_system_size(size)).collect::<critlab_core::Result<_>>()?;
    }
    if events.is_empty() {
        return Err(CliError::Usage(format!("{} holds no events", a.events.display())));
    }
    let a_system = events.iter().map(EventRecord::system_size).max().unwrap_or(1);
    let range = match a.fit_max {
        Some(max) => FitRange::new(a.fit_min, max)?,
        None => FitRange::new(a.fit_min, FitRange::default_for(a_system).max.max(a.fit_min))?,
    };
    m.push("fit_range", format!("{}-{}", range.min, range.max));
    let grid = TauGrid::new(a.tau_min, a.tau_max, a.tau_step)?;
    let all = fit_tau(&SizeHistogram::from_events(&events), range, grid)?;
    let cm = critical_multiplicity(&events, grid, Some(range));

    let mut w = csv_writer(&out)?;
    w.write_record(["bin", "tau", "q0", "chi2_reduced", "n_events"])?;
    fit_row(&mut w, "all", Some(&all), events.len())?;
    if let Ok(cm) = &cm {
        for b in &cm.bins {
            fit_row(&mut w, &b.label(), b.fit.as_ref(), b.n_events)?;
        }
    }
    w.flush()?;

    let fr = format!("{}-{}", range.min, range.max);
    let mut s = csv_writer(&sibling(&out, "summary.csv"))?;
    s.write_record(["quantity", "value", "stderr", "fit_range"])?;
    s.write_record(["tau".to_string(), all.tau.to_string(), all.tau_se.to_string(), fr.clone()])?;
    match &cm {
        Ok(cm) => {
            let sel = &cm.bins[cm.selected];
            s.write_record(["m_c".to_string(), cm.m_c.to_string(), String::new(), fr.clone()])?;
            if let Some(f) = &sel.fit {
                s.write_record(["tau_at_m_c".to_string(), f.tau.to_string(), f.tau_se.to_string(), fr])?;
            }
        }
        Err(e) => m.push("critical_multiplicity", format!("unavailable: {e}")),
    }
    s.flush()?;
    write_file_manifest(&out, &m)
}

fn table1_cmd(a: Table1Args, mut m: Manifest) -> Res {
    let out = resolve_out(&a.out);
    let cfg = Table1Config::preset(a.scale);
    for (k, v) in cfg.describe() {
        m.push(format!("preset.{k}"), v);
    }
    fs::create_dir_all(&out)?;
    let rows = table1(&cfg, a.seed);
    let mut w = csv_writer(&out.join("table1.csv"))?;
    w.write_record(["system", "tau", "stderr", "reference", "note"])?;
    for r in &rows {
        w.write_record([r.system.to_string(), opt(r.tau), opt(r.stderr), r.reference.to_string(), r.note.clone()])?;
    }
    w.flush()?;
    fs::write(manifest_path(&out, true), m.to_text())?;
    for r in &rows {
        println!("{:<30} tau={:<8} ref={}", r.system, r.tau.map_or("-".into(), |t| format!("{t:.3}")), r.reference);
    }
    Ok(())
}

fn replay(a: ReplayArgs) -> Res {
    let text = read_input(&a.manifest)?;
    let m = Manifest::parse(&text).map_err(CliError::Usage)?;
    let argv = m.argv(a.out.as_deref()).map_err(CliError::Usage)?;
    if argv.get(1).map(String::as_str) == Some("replay") {
        return Err(CliError::Usage("a manifest cannot replay another replay".into()));
    }
    match run(argv) {
        EXIT_OK => Ok(()),
        EXIT_USAGE => Err(CliError::Usage("recorded command was rejected".into())),
        _ => Err(CliError::Runtime("recorded command failed".into())),
    }
}
