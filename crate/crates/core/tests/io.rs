use std::collections::BTreeMap;

use loopgnss::gnss::{Constellation, GpsTime, SatelliteId, FREQ_G1_BASE, FREQ_G1_STEP, FREQ_L1, SPEED_OF_LIGHT};
use loopgnss::graph::GraphConfig;
use loopgnss::io::{
    parse_bytes, parse_rinex_obs, read_graph_json, read_satellite_states, read_trajectory_csv, write_graph_json,
    write_rinex_obs, write_satellite_states, write_trajectory_csv, EdgeKind, GraphExport, RinexError, RinexHeader,
    RinexOptions, TrajectoryRecord, TrajectoryStatus,
};
use loopgnss::pipeline::{run_pipeline, PipelineConfig, PipelineInput};
use loopgnss::simulator::{simulate, ConstellationCounts, CycleSlip, ScenarioConfig};
use proptest::prelude::*;

const MINIMAL: &str = include_str!("data/minimal.rnx");

fn at3(v: f64) -> f64 {
    format!("{v:.3}").parse().unwrap()
}

#[test]
fn minimal_fixture_values() {
    let obs = parse_rinex_obs(MINIMAL.as_bytes()).unwrap();
    assert!(obs.warnings.is_empty(), "{:?}", obs.warnings);
    assert_eq!(obs.header.version, 3.04);
    assert_eq!(obs.header.marker_name, "ROOF");
    assert_eq!(obs.header.interval, Some(1.0));
    assert_eq!(obs.header.glonass_channels, BTreeMap::from([(7, -2)]));
    assert_eq!(obs.header.observation_codes[&Constellation::Galileo].len(), 5);
    let p = obs.header.approx_position.unwrap();
    assert_eq!((p.x, p.y, p.z), (-3961904.939, 3348993.756, 3698211.759));

    assert_eq!(obs.epochs.len(), 2);
    let e0 = &obs.epochs[0];
    assert_eq!(e0.time, GpsTime::new(2201, 172_800.0));
    assert_eq!(obs.epochs[1].time, GpsTime::new(2201, 172_801.0));
    assert!(obs.epochs.iter().all(|e| e.observations.len() == 4));

    let g01 = e0.get(SatelliteId::gps(1)).unwrap();
    assert_eq!(
        (g01.pseudorange, g01.carrier_phase, g01.doppler, g01.snr),
        (21000000.123, 110354123.456, -1234.567, 45.25)
    );
    assert_eq!(g01.wavelength, SPEED_OF_LIGHT / FREQ_L1);
    let g03 = e0.get(SatelliteId::gps(3)).unwrap();
    assert!(g03.loss_of_lock);
    let e05 = e0.get(SatelliteId::galileo(5)).unwrap();
    assert_eq!(e05.pseudorange, 24000000.25);
    let r07 = e0.get(SatelliteId::new(Constellation::Glonass, 7)).unwrap();
    assert_eq!(r07.wavelength, SPEED_OF_LIGHT / (FREQ_G1_BASE - 2.0 * FREQ_G1_STEP));
    assert_eq!(r07.carrier_phase, 107460000.5);

    // Lock counts are rebuilt from continuity and the loss-of-lock flag.
    let e1 = &obs.epochs[1];
    assert!(e0.observations.iter().all(|o| o.lock_count == 0));
    assert!(e1.observations.iter().all(|o| o.lock_count == 1 && !o.loss_of_lock));
}

#[test]
fn truncated_file_keeps_complete_epochs() {
    let lines: Vec<&str> = MINIMAL.lines().collect();
    // Header (10 lines), first epoch (5), second epoch header and two satellites.
    let cut = lines[..18].join("\n");
    let obs = parse_rinex_obs(cut.as_bytes()).unwrap();
    assert_eq!(obs.epochs.len(), 1);
    assert_eq!(obs.warnings.len(), 1);
    match &obs.warnings[0] {
        RinexError::MalformedEpoch { line, reason } => {
            assert_eq!(*line, 18, "{reason}");
            assert!(reason.contains("expected 4"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn epoch_cut_short_by_next_epoch_is_dropped() {
    let mut lines: Vec<&str> = MINIMAL.lines().collect();
    lines.remove(13); // E05 of the first epoch
    let obs = parse_rinex_obs(lines.join("\n").as_bytes()).unwrap();
    assert_eq!(obs.epochs.len(), 1);
    assert_eq!(obs.epochs[0].time, GpsTime::new(2201, 172_801.0));
    // The second epoch now follows a dropped one: counts restart.
    assert!(obs.epochs[0].observations.iter().all(|o| o.lock_count == 0));
    // Reported at the last line of the short record.
    assert_eq!(obs.warnings[0].line(), Some(14));
}

#[test]
fn bad_value_points_at_its_line() {
    let text = MINIMAL.replacen("  22500000.500", "  22500x00.500", 1);
    let obs = parse_rinex_obs(text.as_bytes()).unwrap();
    assert_eq!(obs.epochs.len(), 1);
    assert_eq!(obs.warnings[0].line(), Some(13));
}

#[test]
fn header_errors() {
    let no_end = MINIMAL.replace("END OF HEADER", "COMMENT");
    assert!(matches!(parse_rinex_obs(no_end.as_bytes()), Err(RinexError::MalformedHeader { .. })));
    let v2 = MINIMAL.replacen("     3.04", "     2.11", 1);
    assert!(matches!(parse_rinex_obs(v2.as_bytes()), Err(RinexError::UnsupportedVersion { line: 1, .. })));
    assert!(matches!(parse_rinex_obs(&b""[..]), Err(RinexError::MalformedHeader { line: 1, .. })));
    let no_types: String = MINIMAL.lines().filter(|l| !l.contains("OBS TYPES")).collect::<Vec<_>>().join("\n");
    assert!(matches!(parse_rinex_obs(no_types.as_bytes()), Err(RinexError::MalformedHeader { line: 7, .. })));
}

#[test]
fn glonass_channel_from_options() {
    let text = MINIMAL.replace("  1 R07 -2", "  0");
    let without = parse_rinex_obs(text.as_bytes()).unwrap();
    assert!(without.epochs[0].get(SatelliteId::new(Constellation::Glonass, 7)).is_none());
    let options = RinexOptions { glonass_channels: BTreeMap::from([(7, 3)]) };
    let with = parse_bytes(text.as_bytes(), &options).unwrap();
    let r07 = with.epochs[0].get(SatelliteId::new(Constellation::Glonass, 7)).unwrap();
    assert_eq!(r07.wavelength, SPEED_OF_LIGHT / (FREQ_G1_BASE + 3.0 * FREQ_G1_STEP));
}

#[test]
fn empty_epoch_list_writes_a_valid_file() {
    let mut buf = Vec::new();
    write_rinex_obs(&RinexHeader::for_epochs("EMPTY", &[]), &[], &mut buf).unwrap();
    let obs = parse_rinex_obs(buf.as_slice()).unwrap();
    assert!(obs.epochs.is_empty() && obs.warnings.is_empty());
    assert_eq!(obs.header.marker_name, "EMPTY");
}

fn mixed_scenario(seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        duration: 40.0,
        seed,
        constellations: ConstellationCounts { gps: 31, glonass: 24, galileo: 24, beidou: 30 },
        cycle_slips: vec![
            CycleSlip { sat: SatelliteId::gps(5), time: 12.0 },
            CycleSlip { sat: SatelliteId::galileo(3), time: 20.0 },
        ],
        ..Default::default()
    }
}

#[test]
fn simulator_output_round_trips() {
    for cfg in [mixed_scenario(1), mixed_scenario(2), ScenarioConfig { duration: 30.0, ..Default::default() }] {
        let data = simulate(&cfg).unwrap();
        let mut buf = Vec::new();
        write_rinex_obs(&RinexHeader::for_epochs("SIM", &data.epochs), &data.epochs, &mut buf).unwrap();
        let obs = parse_rinex_obs(buf.as_slice()).unwrap();
        assert!(obs.warnings.is_empty());
        assert_eq!(obs.epochs.len(), data.epochs.len());
        for (a, b) in data.epochs.iter().zip(&obs.epochs) {
            assert_eq!(a.time, b.time);
            assert_eq!(a.observations.len(), b.observations.len());
            for (x, y) in a.observations.iter().zip(&b.observations) {
                assert_eq!(x.sat, y.sat);
                assert_eq!(at3(x.pseudorange), y.pseudorange);
                assert_eq!(at3(x.carrier_phase), y.carrier_phase);
                assert_eq!(at3(x.doppler), y.doppler);
                assert_eq!(at3(x.snr), y.snr);
                assert!((x.wavelength - y.wavelength).abs() < 1e-15, "{}", x.sat);
                assert_eq!((x.lock_count, x.loss_of_lock), (y.lock_count, y.loss_of_lock), "{} at {}", x.sat, a.time);
            }
        }
        // Writing the parsed epochs again is byte-identical.
        let mut again = Vec::new();
        write_rinex_obs(&obs.header, &obs.epochs, &mut again).unwrap();
        assert_eq!(buf, again);
    }
}

#[test]
fn satellite_sidecar_round_trips_exactly() {
    let cfg = mixed_scenario(3);
    let data = simulate(&cfg).unwrap();
    let times: Vec<_> = data.epochs.iter().map(|e| e.time).collect();
    let channels = loopgnss::io::glonass_channels(&data.epochs);
    assert!(!channels.is_empty());
    let mut buf = Vec::new();
    write_satellite_states(&times, &data.satellites, &channels, &mut buf).unwrap();
    let sidecar = read_satellite_states(buf.as_slice()).unwrap();
    assert_eq!(sidecar.glonass_channels, channels);
    assert_eq!(sidecar.align(&data.epochs).unwrap(), data.satellites);
}

#[test]
fn trajectory_csv_round_trip() {
    let data = simulate(&ScenarioConfig { duration: 20.0, ..Default::default() }).unwrap();
    let records: Vec<_> = data
        .truth
        .iter()
        .map(|t| TrajectoryRecord::new(t.time, t.position, TrajectoryStatus::Truth).unwrap())
        .collect();
    let mut buf = Vec::new();
    write_trajectory_csv(&records, &mut buf).unwrap();
    let back = read_trajectory_csv(buf.as_slice()).unwrap();
    assert_eq!(back.len(), records.len());
    for (a, b) in records.iter().zip(&back) {
        assert!((a.position - b.position).norm() < 1e-4);
        assert_eq!(b.status, TrajectoryStatus::Truth);
        assert_eq!(a.time.tow, b.time.tow);
        assert!((a.geodetic.latitude - b.geodetic.latitude).abs() < 1e-10);
    }
    assert!(read_trajectory_csv("tow,x,y,z,lat_deg,lon_deg,height,status\n1,2,3\n".as_bytes()).is_err());
}

#[test]
fn graph_json_counts_match_the_graph() {
    let cfg = ScenarioConfig { duration: 30.0, ..Default::default() };
    let data = simulate(&cfg).unwrap();
    let input =
        PipelineInput { epochs: &data.epochs, satellites: &data.satellites, iono: &cfg.iono, tropo: &cfg.tropo };
    let pcfg = PipelineConfig { graph: GraphConfig::default(), ..Default::default() };
    let out = run_pipeline(&input, &pcfg).unwrap();
    let mut export = GraphExport::new(&out.graph, &out.states);
    export.trrtk_window = Some(pcfg.trrtk.max_time_difference);
    export.report = Some(out.report.clone());
    let mut buf = Vec::new();
    write_graph_json(&export, &mut buf).unwrap();
    let back = read_graph_json(buf.as_slice()).unwrap();
    assert_eq!(back, export);
    assert_eq!(back.nodes.len(), out.graph.node_count());
    let counts = back.edge_counts();
    assert_eq!(counts[&EdgeKind::Velocity], out.graph.velocity_factors.len());
    assert_eq!(counts[&EdgeKind::Trrtk], out.graph.trrtk_factors.len());
    assert_eq!(counts[&EdgeKind::Pseudorange], out.graph.pseudorange_factors.len());
    for e in back.edges.iter().filter(|e| e.kind == EdgeKind::Trrtk) {
        assert!(e.information_eigenvalues.iter().all(|v| *v > 0.0));
        assert!(e.time_difference.unwrap() <= 100.0);
    }
    assert!(read_graph_json(&b"{\"nodes\": 3}"[..]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn parser_survives_arbitrary_bytes(bytes in prop::collection::vec(any::<u8>(), 0..2000)) {
        let _ = parse_bytes(&bytes, &RinexOptions::default());
    }

    #[test]
    fn parser_survives_mutations(edits in prop::collection::vec((0usize..4000, any::<u8>(), 0u8..3), 1..8)) {
        let mut bytes = MINIMAL.as_bytes().to_vec();
        for (pos, byte, op) in edits {
            let pos = pos % (bytes.len() + 1);
            match op {
                0 if pos < bytes.len() => bytes[pos] = byte,
                1 => bytes.insert(pos, byte),
                _ if pos < bytes.len() => { bytes.remove(pos); }
                _ => {}
            }
        }
        if let Ok(obs) = parse_bytes(&bytes, &RinexOptions::default()) {
            for w in &obs.warnings {
                let line = w.line().unwrap();
                prop_assert!(line >= 1 && line <= bytes.split(|b| *b == b'\n').count());
            }
        }
    }
}
