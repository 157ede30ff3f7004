use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::orbit::{generate_constellation, propagate_satellite, OrbitElements};
use super::scenario::ScenarioConfig;
use super::trajectory::{generate_trajectory, TruthRecord};
use super::SimulatorError;
use crate::atmosphere::{klobuchar_delay, saastamoinen_delay};
use crate::estimation::SatelliteStates;
use crate::gnss::{
    ecef_to_geodetic, elevation_azimuth, line_of_sight, Epoch, GpsTime, Observation, SatelliteId, SatelliteState,
    SPEED_OF_LIGHT,
};

/// Range of the integer ambiguity drawn at each (re)acquisition (cycles).
const AMBIGUITY_RANGE: i64 = 1_000_000;

/// Complete output of a simulation run, one entry per epoch in each vector.
#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub truth: Vec<TruthRecord>,
    pub epochs: Vec<Epoch>,
    /// Satellite states at the true transmission time of each tracked signal.
    pub satellites: Vec<SatelliteStates>,
    /// Integer carrier ambiguity of each tracked satellite.
    pub ambiguities: Vec<BTreeMap<SatelliteId, i64>>,
}

#[derive(Debug, Clone, Copy)]
struct Lock {
    ambiguity: i64,
    count: u32,
}

/// Stateful measurement generator; epochs must be synthesized in order.
#[derive(Debug, Clone)]
pub struct Simulator {
    config: ScenarioConfig,
    orbits: BTreeMap<SatelliteId, OrbitElements>,
    locks: BTreeMap<SatelliteId, Lock>,
    rng: ChaCha8Rng,
    previous_time: Option<f64>,
}

impl Simulator {
    pub fn new(config: ScenarioConfig) -> Result<Self, SimulatorError> {
        config.validate()?;
        let orbits =
            generate_constellation(config.seed, &config.constellations, &config.satellite_clock, config.start_time());
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        Ok(Self { config, orbits, locks: BTreeMap::new(), rng, previous_time: None })
    }

    pub fn orbits(&self) -> &BTreeMap<SatelliteId, OrbitElements> {
        &self.orbits
    }

    /// Receiver clock offset (s) at `time`.
    pub fn receiver_clock(&self, time: GpsTime) -> f64 {
        let clock = &self.config.receiver_clock;
        clock.bias0 + clock.drift * time.diff(&self.config.start_time())
    }

    /// Satellite state at the transmission time of the signal received at
    /// `position` at `time`, with the geometric line of sight.
    pub fn transmit_state(
        &self,
        orbit: &OrbitElements,
        position: &nalgebra::Vector3<f64>,
        time: GpsTime,
    ) -> Option<SatelliteState> {
        let mut flight = 0.075;
        for _ in 0..10 {
            let state = propagate_satellite(orbit, time.add_seconds(-flight));
            let los = line_of_sight(position, &state).ok()?;
            let next = los.range / SPEED_OF_LIGHT;
            let done = (next - flight).abs() < 1e-14;
            flight = next;
            if done {
                break;
            }
        }
        Some(propagate_satellite(orbit, time.add_seconds(-flight)))
    }

    fn slipped(&self, sat: SatelliteId, elapsed: f64) -> bool {
        let Some(previous) = self.previous_time else {
            return false;
        };
        self.config.cycle_slips.iter().any(|s| s.sat == sat && s.time > previous && s.time <= elapsed)
    }

    fn draw_ambiguity(&mut self) -> i64 {
        self.rng.random_range(-AMBIGUITY_RANGE..=AMBIGUITY_RANGE)
    }

    fn gaussian(&mut self, sigma: f64) -> f64 {
        if sigma == 0.0 {
            return 0.0;
        }
        sigma * self.rng.sample::<f64, _>(StandardNormal)
    }

    /// Measurements of every satellite above the visibility mask at `truth`.
    pub fn synthesize_epoch(&mut self, truth: &TruthRecord) -> (Epoch, SatelliteStates, BTreeMap<SatelliteId, i64>) {
        let cfg = self.config.clone();
        let elapsed = truth.time.diff(&cfg.start_time());
        let geodetic = ecef_to_geodetic(&truth.position).expect("truth trajectory lies near the Earth's surface");
        let rcv_clock = SPEED_OF_LIGHT * self.receiver_clock(truth.time);
        let rcv_drift = SPEED_OF_LIGHT * cfg.receiver_clock.drift;
        let mask = cfg.visibility_mask_deg.to_radians();

        let mut observations = Vec::new();
        let mut states = SatelliteStates::new();
        let mut ambiguities = BTreeMap::new();
        let mut tracked = Vec::new();
        let orbits: Vec<OrbitElements> = self.orbits.values().copied().collect();
        for orbit in &orbits {
            let Some(sat) = self.transmit_state(orbit, &truth.position, truth.time) else {
                continue;
            };
            let Ok(los) = line_of_sight(&truth.position, &sat) else {
                continue;
            };
            let (el, az) = elevation_azimuth(&geodetic, &los.satellite_at_reception_frame);
            if el <= mask {
                continue;
            }
            let id = orbit.sat;
            tracked.push(id);
            let slip = self.slipped(id, elapsed);
            let lock = match self.locks.get(&id).copied() {
                Some(lock) if !slip => Lock { count: lock.count + 1, ..lock },
                Some(lock) => {
                    let mut ambiguity = self.draw_ambiguity();
                    if ambiguity == lock.ambiguity {
                        ambiguity += 1;
                    }
                    Lock { ambiguity, count: 0 }
                }
                None => Lock { ambiguity: self.draw_ambiguity(), count: 0 },
            };
            self.locks.insert(id, lock);

            let iono = klobuchar_delay(&cfg.iono, truth.time, &geodetic, el, az);
            let tropo = saastamoinen_delay(&cfg.tropo, &geodetic, el).unwrap_or(0.0);
            let clocks = rcv_clock + cfg.system_bias(id.constellation) - SPEED_OF_LIGHT * sat.clock_bias;
            let wavelength = orbit.wavelength();
            let scale = 1.0 / el.sin();
            let noise = cfg.noise;

            let code_noise = self.gaussian(noise.pseudorange_sigma * scale);
            let phase_noise = self.gaussian(noise.phase_sigma * scale);
            let doppler_noise = self.gaussian(noise.doppler_sigma * scale);
            let range_rate =
                los.range_rate(&sat.velocity, &truth.velocity) + rcv_drift - SPEED_OF_LIGHT * sat.clock_drift;

            observations.push(Observation {
                sat: id,
                pseudorange: los.range + clocks + iono + tropo + code_noise,
                carrier_phase: (los.range + clocks - iono + tropo + phase_noise) / wavelength + lock.ambiguity as f64,
                doppler: -(range_rate + doppler_noise) / wavelength,
                wavelength,
                lock_count: lock.count,
                loss_of_lock: slip,
                snr: 30.0 + 20.0 * el.sin(),
            });
            states.insert(id, sat);
            ambiguities.insert(id, lock.ambiguity);
        }
        // Satellites that set lose their lock state.
        self.locks.retain(|id, _| tracked.contains(id));
        self.previous_time = Some(elapsed);
        let epoch = Epoch::new(truth.time, observations).expect("simulated satellites are unique");
        (epoch, states, ambiguities)
    }
}

/// Runs a full scenario: truth trajectory plus synthesized epochs.
pub fn simulate(config: &ScenarioConfig) -> Result<SimulatedData, SimulatorError> {
    let truth = generate_trajectory(config)?;
    let mut sim = Simulator::new(config.clone())?;
    let mut data = SimulatedData {
        truth: Vec::with_capacity(truth.len()),
        epochs: Vec::with_capacity(truth.len()),
        satellites: Vec::with_capacity(truth.len()),
        ambiguities: Vec::with_capacity(truth.len()),
    };
    for record in truth {
        let (epoch, states, ambiguities) = sim.synthesize_epoch(&record);
        data.truth.push(record);
        data.epochs.push(epoch);
        data.satellites.push(states);
        data.ambiguities.push(ambiguities);
    }
    log::debug!("simulated {} epochs", data.epochs.len());
    Ok(data)
}
