use cassist_core::sim::{
    init_model_weights, load_trace, run_simulation, synthetic_clips, write_trace, ChannelTraceRow, EventPath,
    ScenarioConfig,
};

fn scenario_path(name: &str) -> String {
    format!("{}/../../scenarios/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn rows(n: usize, sf: u8, lost: bool) -> Vec<ChannelTraceRow> {
    (0..n)
        .map(|i| ChannelTraceRow {
            t_s: i as f64 * 60.0,
            snr_db: -5.0,
            packet_lost: lost,
            adr_sf: sf,
            adr_ptx_dbm: 14,
        })
        .collect()
}

#[test]
fn shipped_scenarios_parse() {
    for (file, budget) in [("scenario1.toml", 0.685), ("scenario2.toml", 0.225)] {
        let sc = ScenarioConfig::from_toml(&std::fs::read_to_string(scenario_path(file)).unwrap()).unwrap();
        assert!(
            (sc.budget_j() - budget).abs() / budget < 1e-3,
            "{file}: {}",
            sc.budget_j()
        );
    }
    for file in ["synthetic_trace_s1.csv", "synthetic_trace_s2.csv"] {
        let trace = load_trace(&std::fs::read_to_string(scenario_path(file)).unwrap()).unwrap();
        assert_eq!(trace.len(), 200);
        assert_eq!(load_trace(&write_trace(&trace).unwrap()).unwrap(), trace);
    }
}

#[test]
fn runs_are_deterministic() {
    let sc = ScenarioConfig::scenario1();
    let trace = load_trace(&std::fs::read_to_string(scenario_path("synthetic_trace_s1.csv")).unwrap()).unwrap();
    let clips = synthetic_clips(4, 16_384, 11).unwrap();
    let w = init_model_weights(&sc, 11).unwrap();
    let a = run_simulation(&sc, &trace[..60], &clips, &w).unwrap();
    let b = run_simulation(&sc, &trace[..60], &clips, &init_model_weights(&sc, 11).unwrap()).unwrap();
    assert_eq!(a.to_csv().unwrap(), b.to_csv().unwrap());
    assert_eq!(a.summary_json().unwrap(), b.summary_json().unwrap());
}

#[test]
fn every_event_accounts_for_its_energy() {
    let sc = ScenarioConfig::scenario1();
    let trace = load_trace(&std::fs::read_to_string(scenario_path("synthetic_trace_s1.csv")).unwrap()).unwrap();
    let clips = synthetic_clips(4, 16_384, 12).unwrap();
    let report = run_simulation(&sc, &trace, &clips, &init_model_weights(&sc, 12).unwrap()).unwrap();
    for e in &report.events {
        assert_eq!(e.phase_energy().total(), e.energy_total_j);
        assert!(e.energy_total_j <= sc.budget_j());
        assert!(e.end_to_end_latency_s > 0.0);
        match e.path {
            EventPath::Assisted => assert!(e.mask.is_some() && e.payload_bytes == e.chosen_r_a * e.chosen_r_a),
            EventPath::BypassScheduled => assert_eq!(e.energy_total_j, sc.constants.e_pre + sc.constants.e_inf),
            _ => {}
        }
    }
    let s = &report.summary;
    assert_eq!(
        s.assisted + s.bypass_scheduled + s.bypass_loss + s.failed_power,
        s.events
    );
}

#[test]
fn all_lost_trace_never_assists() {
    let sc = ScenarioConfig::scenario1();
    let clips = synthetic_clips(2, 16_384, 13).unwrap();
    let report = run_simulation(&sc, &rows(20, 7, true), &clips, &init_model_weights(&sc, 13).unwrap()).unwrap();
    assert_eq!(report.summary.assisted, 0);
    assert_eq!(report.summary.bypass_loss, 20);
    assert!(report
        .events
        .iter()
        .all(|e| e.predicted_class.is_some() && e.retransmissions == 0));
}

#[test]
fn slower_spreading_costs_more() {
    let mut sc = ScenarioConfig::scenario1();
    sc.link = sc.link.with_uniform_max_payload(222);
    let clips = synthetic_clips(2, 16_384, 14).unwrap();
    let w = init_model_weights(&sc, 14).unwrap();
    let mean = |sf| {
        run_simulation(&sc, &rows(12, sf, false), &clips, &w)
            .unwrap()
            .summary
            .mean_energy_j
            .unwrap()
    };
    let (fast, slow) = (mean(7), mean(12));
    assert!(slow > fast, "SF12 {slow} vs SF7 {fast}");
}

#[test]
fn small_capacitor_stays_local() {
    let sc = ScenarioConfig::scenario2();
    let clips = synthetic_clips(2, 16_384, 15).unwrap();
    let report = run_simulation(&sc, &rows(10, 7, false), &clips, &init_model_weights(&sc, 15).unwrap()).unwrap();
    assert_eq!(report.summary.bypass_scheduled, 10);
}

#[test]
fn overrunning_fixed_policy_browns_out() {
    let mut sc = ScenarioConfig::scenario2();
    sc.fixed_r_a = Some(8);
    let clips = synthetic_clips(2, 16_384, 16).unwrap();
    let report = run_simulation(&sc, &rows(5, 7, false), &clips, &init_model_weights(&sc, 16).unwrap()).unwrap();
    assert_eq!(report.summary.failed_power, 5);
    assert!(report.events.iter().all(|e| e.predicted_class.is_none()));
}

#[test]
fn report_files_are_written() {
    let sc = ScenarioConfig::scenario1();
    let clips = synthetic_clips(2, 16_384, 17).unwrap();
    let report = run_simulation(&sc, &rows(3, 8, false), &clips, &init_model_weights(&sc, 17).unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    report.write_to(dir.path()).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(json["events"], 3);
}
