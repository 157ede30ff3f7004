use loopgnss::estimation::{
    pseudorange_variance, solve_doppler_velocity, solve_spp, EstimationConfig, EstimationError, SatelliteStates,
};
use loopgnss::gnss::{Constellation, Epoch, SPEED_OF_LIGHT};
use loopgnss::simulator::{simulate, ConstellationCounts, NoiseConfig, ScenarioConfig, SimulatedData, TrajectorySpec};
use nalgebra::Vector3;

fn zero_noise(duration: f64) -> ScenarioConfig {
    ScenarioConfig { duration, noise: NoiseConfig::zero(), ..Default::default() }
}

fn gps_only(mut cfg: ScenarioConfig) -> ScenarioConfig {
    cfg.constellations = ConstellationCounts { gps: 31, glonass: 0, galileo: 0, beidou: 0 };
    cfg
}

fn keep(epoch: &Epoch, n: usize) -> Epoch {
    Epoch::new(epoch.time, epoch.observations.iter().take(n).copied().collect()).unwrap()
}

fn spp(data: &SimulatedData, k: usize, cfg: &ScenarioConfig) -> loopgnss::estimation::SppSolution {
    solve_spp(&data.epochs[k], &data.satellites[k], &cfg.iono, &cfg.tropo, &EstimationConfig::default(), None).unwrap()
}

#[test]
fn pseudorange_variance_values() {
    assert!((pseudorange_variance(std::f64::consts::FRAC_PI_2, 45.0) - 0.18).abs() < 1e-12);
    assert!((pseudorange_variance(30f64.to_radians(), 45.0) - 0.45).abs() < 1e-12);
    let mut last = f64::INFINITY;
    for k in 1..=90 {
        let v = pseudorange_variance(f64::from(k).to_radians(), 40.0);
        assert!(v < last);
        last = v;
    }
}

#[test]
fn spp_zero_noise_recovers_truth() {
    let cfg = zero_noise(30.0);
    let data = simulate(&cfg).unwrap();
    for k in 0..data.epochs.len() {
        let sol = spp(&data, k, &cfg);
        let err = (sol.position - data.truth[k].position).norm();
        assert!(err < 1e-6, "epoch {k}: {err}");
        let clock = SPEED_OF_LIGHT * (cfg.receiver_clock.bias0 + cfg.receiver_clock.drift * k as f64 / cfg.rate);
        assert!((sol.clock(Constellation::Gps).unwrap() - clock).abs() < 1e-6);
        assert!((sol.clock(Constellation::Galileo).unwrap() - 4.2).abs() < 1e-6);
        assert!(sol.clock(Constellation::Glonass).is_none());
        let c = sol.covariance;
        assert!((c - c.transpose()).norm() < 1e-9);
        assert!(c.symmetric_eigen().eigenvalues.iter().all(|&e| e >= -1e-12));
    }
}

#[test]
fn spp_eight_gps_satellites() {
    let cfg = gps_only(zero_noise(5.0));
    let data = simulate(&cfg).unwrap();
    let ecfg = EstimationConfig { elevation_mask_deg: 5.0, ..Default::default() };
    let epoch = keep(&data.epochs[0], 8);
    assert_eq!(epoch.observations.len(), 8);
    let sol = solve_spp(&epoch, &data.satellites[0], &cfg.iono, &cfg.tropo, &ecfg, None).unwrap();
    assert!((sol.position - data.truth[0].position).norm() < 1e-6);
    assert!((sol.clock(Constellation::Gps).unwrap() - SPEED_OF_LIGHT * cfg.receiver_clock.bias0).abs() < 1e-6);
    assert_eq!(sol.used_satellites[&Constellation::Gps], 8);
}

#[test]
fn spp_three_satellites_is_insufficient() {
    let cfg = gps_only(zero_noise(2.0));
    let data = simulate(&cfg).unwrap();
    let ecfg = EstimationConfig { elevation_mask_deg: 0.0, ..Default::default() };
    let epoch = keep(&data.epochs[0], 3);
    let err = solve_spp(&epoch, &data.satellites[0], &cfg.iono, &cfg.tropo, &ecfg, None).unwrap_err();
    assert!(matches!(err, EstimationError::InsufficientSatellites { .. }));
}

#[test]
fn spp_recovers_distinct_system_biases() {
    let mut cfg = zero_noise(3.0);
    cfg.constellations = ConstellationCounts { gps: 31, glonass: 24, galileo: 24, beidou: 30 };
    cfg.system_biases = [(Constellation::Glonass, -12.5), (Constellation::Galileo, 4.2), (Constellation::BeiDou, 31.0)]
        .into_iter()
        .collect();
    let data = simulate(&cfg).unwrap();
    let sol = spp(&data, 1, &cfg);
    assert!((sol.position - data.truth[1].position).norm() < 1e-6);
    for (c, bias) in &cfg.system_biases {
        if sol.used_satellites.contains_key(c) {
            assert!((sol.clock(*c).unwrap() - bias).abs() < 1e-6, "{c:?}");
        }
    }
    assert!(sol.used_satellites.len() >= 3);
}

#[test]
fn spp_residuals_have_zero_weighted_mean_per_system() {
    let cfg = zero_noise(3.0);
    let data = simulate(&cfg).unwrap();
    let sol = spp(&data, 2, &cfg);
    for c in [Constellation::Gps, Constellation::Galileo] {
        let (mut num, mut den, mut scale) = (0.0, 0.0, 0.0);
        for (sat, r, w) in &sol.residuals {
            if sat.constellation == c {
                num += w * r;
                den += w;
                scale += w * r.abs();
            }
        }
        assert!(num.abs() <= 1e-6 * scale.max(1e-3) || (num / den).abs() < 1e-9);
    }
}

#[test]
fn spp_is_continuous_in_a_pseudorange() {
    let cfg = ScenarioConfig { duration: 2.0, ..Default::default() };
    let data = simulate(&cfg).unwrap();
    let ecfg = EstimationConfig::default();
    let base = spp(&data, 0, &cfg).position;
    let mut previous = base;
    for step in 1..=20 {
        let mut epoch = data.epochs[0].clone();
        epoch.observations[0].pseudorange += 0.05 * f64::from(step);
        let p = solve_spp(&epoch, &data.satellites[0], &cfg.iono, &cfg.tropo, &ecfg, None).unwrap().position;
        // 5 cm of pseudorange moves the fix by at most a few decimeters.
        assert!((p - previous).norm() < 0.5);
        previous = p;
    }
    assert!((previous - base).norm() > 0.0);
}

fn doppler_at(data: &SimulatedData, k: usize, states: &SatelliteStates) -> Vector3<f64> {
    solve_doppler_velocity(&data.epochs[k], states, &data.truth[k].position, &EstimationConfig::default())
        .unwrap()
        .velocity
}

#[test]
fn doppler_stationary_receiver() {
    let mut cfg = zero_noise(10.0);
    cfg.trajectory = TrajectorySpec::Static;
    cfg.receiver_clock.drift = 0.0;
    let data = simulate(&cfg).unwrap();
    for k in 0..data.epochs.len() {
        let v = doppler_at(&data, k, &data.satellites[k]);
        assert!(v.norm() < 1e-9, "{v}");
    }
}

#[test]
fn doppler_recovers_moving_truth() {
    let mut cfg = zero_noise(10.0);
    cfg.trajectory = TrajectorySpec::Line { heading_deg: 90.0 };
    cfg.speed = 2.5;
    let data = simulate(&cfg).unwrap();
    for k in 0..data.epochs.len() {
        let sol = solve_doppler_velocity(
            &data.epochs[k],
            &data.satellites[k],
            &data.truth[k].position,
            &EstimationConfig::default(),
        )
        .unwrap();
        assert!((data.truth[k].velocity.norm() - 2.5).abs() < 1e-9);
        assert!((sol.velocity - data.truth[k].velocity).norm() < 1e-6);
        assert!((sol.clock_drift - SPEED_OF_LIGHT * cfg.receiver_clock.drift).abs() < 1e-6);
        let c = sol.covariance;
        assert!((c - c.transpose()).norm() < 1e-15);
        assert!(c.cholesky().is_some());
    }
}

#[test]
fn doppler_invariant_to_common_satellite_drift() {
    let cfg = zero_noise(3.0);
    let data = simulate(&cfg).unwrap();
    let mut shifted = data.satellites[1].clone();
    for s in shifted.values_mut() {
        s.clock_drift += 3.0e-9;
    }
    let a = doppler_at(&data, 1, &data.satellites[1]);
    let b = doppler_at(&data, 1, &shifted);
    assert!((a - b).norm() < 1e-9);
}

#[test]
fn doppler_monte_carlo_error_matches_posterior_covariance() {
    let mut cfg = ScenarioConfig { duration: 1000.0, ..Default::default() };
    cfg.trajectory = TrajectorySpec::Circle { radius: 40.0 };
    cfg.speed = 2.0;
    let data = simulate(&cfg).unwrap();
    let (mut sq, mut predicted) = (Vector3::zeros(), Vector3::zeros());
    for k in 0..data.epochs.len() {
        let sol = solve_doppler_velocity(
            &data.epochs[k],
            &data.satellites[k],
            &data.truth[k].position,
            &EstimationConfig::default(),
        )
        .unwrap();
        let e = sol.velocity - data.truth[k].velocity;
        sq += e.component_mul(&e);
        predicted += sol.covariance.diagonal();
    }
    let n = data.epochs.len() as f64;
    for axis in 0..3 {
        let rms = (sq[axis] / n).sqrt();
        let expected = (predicted[axis] / n).sqrt();
        assert!((rms / expected - 1.0).abs() < 0.1, "axis {axis}: {rms} vs {expected}");
    }
}
