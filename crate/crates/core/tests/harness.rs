use fracabp::battery::{default_battery, forcing_grid, unit_ball_defect, Forcing, Instance, SPIKE_LN_NORM};
use fracabp::envelope::{compute_envelope, EnvelopeConfig};
use fracabp::grid::{Domain, GridFunction, Region};
use fracabp::harness::{
    abp_ratio, abp_ratio_reduced, build_ledger, csv_string, decay_profile, fit_gs_c0, pre1_empirical, solve_instance,
    sweep_sigma, write_sweep_outputs, SweepConfig, CSV_HEADER,
};
use fracabp::operators::PucciEllipticity;
use fracabp::special::LedgerInputs;
use fracabp::supersolution::{solve_dirichlet, DirichletConfig};

fn ell(sigma: f64) -> PucciEllipticity {
    PucciEllipticity::new(2, 1.5, 1.0, sigma).unwrap()
}

fn small_config(battery: Vec<Instance>) -> SweepConfig {
    SweepConfig {
        resolutions: vec![1.0 / 16.0],
        eps: vec![0.5, 0.1],
        envelope_min_h: 1.0 / 16.0,
        battery,
        ..SweepConfig::default()
    }
}

#[test]
fn empty_battery_gives_a_header_only_csv() {
    let recs = sweep_sigma(&small_config(Vec::new())).unwrap();
    assert!(recs.is_empty());
    assert_eq!(csv_string(&recs), format!("{CSV_HEADER}\n"));
    assert!(pre1_empirical(&recs).is_err());
}

#[test]
fn zero_forcing_has_zero_ratio() {
    let d = Domain::with_default_extent(2, 1.0 / 16.0).unwrap();
    let s = solve_dirichlet(&GridFunction::zeros(&d), &ell(1.5), &DirichletConfig::default()).unwrap();
    let ledger = build_ledger(&LedgerInputs::default()).unwrap();
    let rec = abp_ratio("zero", &s, None, &ledger).unwrap();
    assert_eq!(rec.ratio, 0.0);
    assert!(!rec.has_flag("comparison-violation"));
    assert!(rec.has_flag("no-envelope"));
}

#[test]
fn spike_norm_is_fixed() {
    let d = Domain::with_default_extent(2, 1.0 / 32.0).unwrap();
    for height in [1.0, 100.0, 1000.0] {
        let f = forcing_grid(&Forcing::Spike { height, ln_norm: SPIKE_LN_NORM }, &d).unwrap();
        assert!((f.ln_norm(&Region::All) - SPIKE_LN_NORM).abs() < 1e-9 * SPIKE_LN_NORM);
        assert_eq!(f.sup_norm(), height.max(f.at_index(&[1, 0])));
    }
    assert!(forcing_grid(&Forcing::Spike { height: 1e4, ln_norm: SPIKE_LN_NORM }, &d).is_err());
    assert!(unit_ball_defect(&d).abs() < 0.05);
}

#[test]
fn sweep_records_are_consistent() {
    let cfg = small_config(vec![
        Instance::new("const", Forcing::Constant { value: 1.0 }),
        Instance::new("bump", Forcing::Bump { center: vec![0.4, 0.2], radius: 0.4, amplitude: 2.0 }),
        Instance::new("blowup", Forcing::BoundaryBlowup { power: 0.3 }),
    ]);
    let recs = sweep_sigma(&cfg).unwrap();
    assert_eq!(recs.len(), 6);
    for r in &recs {
        assert!(r.flags.iter().all(|f| !f.starts_with("error")), "{:?}", r.flags);
        assert!(!r.has_flag("uncertified") && !r.has_flag("inf-mismatch"));
        assert!(r.ln_contact <= r.ln_sub * (1.0 + 1e-12));
        assert!(r.minus_inf_u > 0.0 && r.ratio > 0.0);
        assert!(r.minus_inf_u <= r.main_bound || r.main_bound.is_infinite());
    }
    let pre1 = pre1_empirical(&recs).unwrap();
    for w in pre1.windows(2) {
        assert!(w[1].c_bar >= w[0].c_bar);
    }
    assert!(fit_gs_c0(&recs) > 0.0);

    let dir = std::env::temp_dir().join(format!("fracabp-harness-{}", std::process::id()));
    write_sweep_outputs(&recs, &dir).unwrap();
    let csv = std::fs::read_to_string(dir.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), CSV_HEADER);
    assert_eq!(csv.lines().count(), recs.len() + 1);
    for f in ["records.json", "ratio.svg", "decay.svg"] {
        assert!(dir.join(f).exists());
    }
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn sweep_is_deterministic() {
    let cfg = small_config(vec![Instance::new("random", Forcing::RandomBumps { count: 2, seed: 9 })]);
    assert_eq!(csv_string(&sweep_sigma(&cfg).unwrap()), csv_string(&sweep_sigma(&cfg).unwrap()));
}

#[test]
fn cache_round_trip() {
    let dir = std::env::temp_dir().join(format!("fracabp-cache-{}", std::process::id()));
    let cfg = SweepConfig { cache_dir: Some(dir.clone()), ..small_config(default_battery()[..1].to_vec()) };
    let d = Domain::with_default_extent(2, 1.0 / 16.0).unwrap();
    let inst = &cfg.battery[0];
    let a = solve_instance(inst, &d, &ell(1.5), &cfg).unwrap();
    let b = solve_instance(inst, &d, &ell(1.5), &cfg).unwrap();
    assert_eq!(a.u.values(), b.u.values());
    assert!(std::fs::read_dir(&dir).unwrap().count() > 0);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn reduced_ratio_shrinks_the_ball() {
    let d = Domain::with_default_extent(2, 1.0 / 16.0).unwrap();
    let f = forcing_grid(&Forcing::Constant { value: 1.0 }, &d).unwrap();
    let s = solve_dirichlet(&f, &ell(1.5), &DirichletConfig::default()).unwrap();
    let ledger = build_ledger(&LedgerInputs::default()).unwrap();
    let full = abp_ratio("c", &s, None, &ledger).unwrap();
    let red = abp_ratio_reduced("c", &s, 0.1, &ledger).unwrap();
    assert!(red.has_flag("reduced"));
    assert!(red.minus_inf_u <= full.minus_inf_u);
    assert!(abp_ratio_reduced("c", &s, 1.5, &ledger).is_err());
}

#[test]
fn contact_set_lies_in_the_sublevel_set() {
    let d = Domain::with_default_extent(2, 1.0 / 16.0).unwrap();
    let f = forcing_grid(&Forcing::Checkerboard { cells: 4, low: 0.0, high: 1.0 }, &d).unwrap();
    let s = solve_dirichlet(&f, &ell(1.8), &DirichletConfig::default()).unwrap();
    let env = compute_envelope(&s.u, 1.8, &EnvelopeConfig::default()).unwrap();
    let ledger = build_ledger(&LedgerInputs::default()).unwrap();
    let rec = abp_ratio("checker", &s, Some(&env), &ledger).unwrap();
    assert!(rec.ln_contact <= rec.ln_sub);
    assert!(!rec.has_flag("contact-exceeds-sublevel"));
    assert_eq!(rec.p_inf_by_radius.len(), 4);
    for w in rec.p_inf_by_radius.windows(2) {
        assert!(w[1] <= w[0]);
    }
}

#[test]
fn decay_of_zero_is_trivial() {
    let d = Domain::with_default_extent(2, 1.0 / 16.0).unwrap();
    let ledger = build_ledger(&LedgerInputs::default()).unwrap();
    let v = GridFunction::zeros(&d);
    let p = decay_profile(&v, &v, &ledger, 0.0, 0.0);
    assert!(p.hypotheses.all());
    assert!(p.holds());
    assert!(p.rows.iter().all(|r| r.measure == 0.0));

    let neg = GridFunction::from_fn(&d, 0.0, |_| -1.0);
    let p = decay_profile(&neg, &v, &ledger, 0.0, 0.0);
    assert!(!p.hypotheses.nonnegative);
    assert!(p.flags.contains(&"hypotheses-not-met".to_string()));
}

#[test]
fn catalog_instances_run_through_the_harness() {
    use fracabp::supersolution::CatalogProfile;
    let cfg = small_config(vec![Instance::new("paraboloid", Forcing::Catalog { profile: CatalogProfile::Paraboloid })]);
    let recs = sweep_sigma(&cfg).unwrap();
    assert_eq!(recs.len(), 2);
    for r in &recs {
        assert!((r.minus_inf_u - 1.0).abs() < 1e-12);
        assert!(!r.has_flag("uncertified"));
    }
}
