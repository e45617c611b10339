use critlab_core::pipeline::{
    run_hiv, run_percolation, significant_maxima, table1, Describe, HivProtocol, PercolationProtocol, Scale, Table1Config,
    TABLE1_REFERENCE,
};

#[test]
fn scale_round_trips() {
    for s in [Scale::Smoke, Scale::Desk] {
        assert_eq!(s.to_string().parse::<Scale>().unwrap(), s);
    }
    assert!("large".parse::<Scale>().is_err());
}

#[test]
fn significant_maxima_ignore_noise() {
    let flat = [(1.0, 0.1), (1.15, 0.1), (1.0, 0.1), (1.1, 0.1), (1.0, 0.1)];
    assert!(significant_maxima(&flat).is_empty());
    let peaked = [(1.0, 0.1), (2.0, 0.1), (3.0, 0.1), (2.0, 0.1), (1.0, 0.1)];
    assert_eq!(significant_maxima(&peaked), vec![2]);
    // endpoints never count
    assert!(significant_maxima(&[(5.0, 0.0), (1.0, 0.0)]).is_empty());
    assert!(significant_maxima(&[]).is_empty());
}

#[test]
fn presets_grow_with_scale() {
    let smoke = Table1Config::preset(Scale::Smoke);
    let desk = Table1Config::preset(Scale::Desk);
    assert!(desk.percolation.l > smoke.percolation.l);
    assert!(desk.hiv.peak_runs > smoke.hiv.peak_runs);
    assert!(desk.spin.l > smoke.spin.l);
    assert!(desk.collision.events > smoke.collision.events);
}

#[test]
fn description_lists_every_protocol() {
    let d = Table1Config::preset(Scale::Smoke).describe();
    assert_eq!(d[0], ("scale".to_string(), "smoke".to_string()));
    for prefix in ["hiv.", "spin.", "collision.", "percolation."] {
        assert!(d.iter().any(|(k, _)| k.starts_with(prefix)), "{prefix}");
    }
    let keys: std::collections::HashSet<_> = d.iter().map(|(k, _)| k).collect();
    assert_eq!(keys.len(), d.len());
}

#[test]
fn percolation_pipeline_is_seeded() {
    let mut p = PercolationProtocol::preset(Scale::Smoke);
    p.l = 8;
    p.scan_samples = 20;
    p.tau_samples = 60;
    let a = run_percolation(&p, 11).unwrap();
    let b = run_percolation(&p, 11).unwrap();
    assert_eq!(a.p_c, b.p_c);
    assert_eq!(a.fit.tau, b.fit.tau);
    assert_eq!(a.mass_violations, 0);
    assert_eq!(a.coupling_violations, 0);
    assert_eq!(a.events.len(), 60);
    assert!(a.p_c > p.p_min && a.p_c < p.p_max);
}

#[test]
fn hiv_pipeline_picks_a_grid_point() {
    let mut h = HivProtocol::preset(Scale::Smoke);
    h.n = 8;
    h.q_vs_steps = 5;
    h.scan_runs = 10;
    h.peak_runs = 50;
    h.max_steps = 4096;
    let r = run_hiv(&h, 3).unwrap();
    let grid: Vec<f64> = (0..5).map(|k| h.q_vs_min + (h.q_vs_max - h.q_vs_min) * k as f64 / 4.0).collect();
    assert!(grid.iter().any(|g| (g - r.q_vs).abs() < 1e-12), "{}", r.q_vs);
    assert_eq!(r.events.len(), 50);
}

#[test]
fn table_rows_keep_reference_values_verbatim() {
    let mut cfg = Table1Config::preset(Scale::Smoke);
    // an impossible protocol fills its row with the error instead of aborting
    cfg.spin.t_min = -1.0;
    cfg.hiv.n = 6;
    cfg.hiv.scan_runs = 5;
    cfg.hiv.peak_runs = 20;
    cfg.collision.events = 2;
    cfg.collision.particles = 13;
    cfg.percolation.l = 6;
    cfg.percolation.scan_samples = 10;
    cfg.percolation.tau_samples = 20;
    let rows = table1(&cfg, 5);
    assert_eq!(rows.len(), 4);
    for (row, (system, reference)) in rows.iter().zip(TABLE1_REFERENCE) {
        assert_eq!(row.system, system);
        assert_eq!(row.reference, reference);
    }
    assert!(rows[1].tau.is_none());
    assert!(rows[1].note.starts_with("error:"));
    assert!(rows[3].tau.is_some());
    assert_eq!(TABLE1_REFERENCE[3].1, "2.32 ± 0.02");
}
