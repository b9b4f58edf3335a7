//! Scenario simulator.
//!
//! Buoys transmit on the TDMA schedule, sound travels in straight lines at
//! a constant speed, and the receiver timestamps arrivals with a clock that
//! runs `clock_offset` behind GNSS time. Buoys emit from the position they
//! report, i.e. the track snapped to wire resolution, so a noiseless
//! stationary scenario is exactly solvable.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::geo::{Enu, GeodeticCoord, LocalFrame};
use crate::multilateration::{Observation, ObservationSet, Point, SolveError};
use crate::protocol::{transmit_times, BuoyMessage, FrameSchedule, ProtocolError};
use crate::time::ClockTime;

/// Largest arrival-time change accepted as converged, seconds.
const ARRIVAL_TOLERANCE: f64 = 1e-12;
const MAX_ARRIVAL_ITERATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("InvalidScenario: {0}")]
    InvalidScenario(String),
    #[error("IncompleteFrame: {0}")]
    IncompleteFrame(String),
    #[error("MixedFrames: events from frames {0} and {1}")]
    MixedFrames(u64, u64),
    #[error("{0}")]
    Protocol(#[from] ProtocolError),
    #[error("{0}")]
    Solve(#[from] SolveError),
}

impl ChannelError {
    pub fn name(&self) -> &'static str {
        match self {
            ChannelError::InvalidScenario(_) => "InvalidScenario",
            ChannelError::IncompleteFrame(_) => "IncompleteFrame",
            ChannelError::MixedFrames(..) => "MixedFrames",
            ChannelError::Protocol(e) => e.name(),
            ChannelError::Solve(e) => e.name(),
        }
    }
}

/// A buoy drifting at constant velocity, given in the scenario frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuoyTrack {
    pub initial: GeodeticCoord,
    /// East, north, up, m/s.
    pub drift: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReceiverTrack {
    /// Scenario-frame ENU at the start of frame 0, meters.
    pub initial: Point,
    /// East, north, up, m/s.
    pub velocity: Vector3<f64>,
}

impl ReceiverTrack {
    pub fn position_at(&self, elapsed: f64) -> Point {
        self.initial + self.velocity * elapsed
    }
}

/// Everything the simulator needs. ENU quantities are in the scenario
/// frame, tangent to the ellipsoid at `origin`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub origin: GeodeticCoord,
    pub buoys: [BuoyTrack; 4],
    pub receiver: ReceiverTrack,
    pub sound_speed: f64,
    /// Receiver clock lag behind GNSS time.
    pub clock_offset: ClockTime,
    pub schedule: FrameSchedule,
    pub frames: u64,
    /// Acoustic link range, meters.
    pub range_limit: f64,
    /// GNSS time of day at which frame 0 starts.
    pub start_time: ClockTime,
    /// Receiver speed cap, m/s.
    pub max_receiver_speed: f64,
}

impl Scenario {
    pub fn frame(&self) -> LocalFrame {
        LocalFrame::new(self.origin)
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let bad = |why: String| Err(ChannelError::InvalidScenario(why));
        if !(self.sound_speed > 0.0 && self.sound_speed.is_finite()) {
            return bad(format!("sound speed {} must be positive", self.sound_speed));
        }
        if self.frames == 0 {
            return bad("at least one frame is required".into());
        }
        if !(self.range_limit > 0.0) {
            return bad(format!("range limit {} must be positive", self.range_limit));
        }
        let r = &self.receiver;
        if !r.initial.iter().chain(r.velocity.iter()).all(|c| c.is_finite()) {
            return bad("receiver track is not finite".into());
        }
        if !(r.initial.z < 0.0) {
            return bad(format!("receiver starts at up = {} m, above the surface", r.initial.z));
        }
        if !(r.velocity.norm() <= self.max_receiver_speed) {
            return bad(format!(
                "receiver speed {} m/s exceeds the cap of {} m/s",
                r.velocity.norm(),
                self.max_receiver_speed
            ));
        }
        if !self.buoys.iter().all(|b| b.drift.iter().all(|c| c.is_finite())) {
            return bad("buoy drift is not finite".into());
        }
        let s = &self.schedule;
        if !(s.message_duration > 0.0 && s.guard_time >= 0.0 && s.frame_period > 0.0) {
            return bad("schedule has non-positive durations".into());
        }
        Ok(())
    }

    /// Seconds from the start of frame 0 to `t`.
    fn elapsed(&self, t: ClockTime) -> f64 {
        (t - self.start_time).as_secs_f64()
    }
}

/// One heard broadcast. `true_position` is ground truth for scoring and is
/// never handed to a solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReceptionEvent {
    pub frame_index: u64,
    pub message: BuoyMessage,
    /// Arrival time read off the receiver clock.
    pub receive_time: ClockTime,
    /// Receiver position at arrival, scenario-frame ENU.
    pub true_position: Point,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameStatus {
    Complete,
    /// Fewer than four buoys were in range; the events heard are kept.
    NoFix {
        heard: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameEvents {
    pub frame_index: u64,
    pub events: Vec<ReceptionEvent>,
    pub status: FrameStatus,
}

/// Travel time from `source` (emitting at `elapsed`) to the moving receiver,
/// from the implicit equation `tau = |X(elapsed + tau) - source| / c`.
fn travel_time(receiver: &ReceiverTrack, source: &Point, elapsed: f64, c: f64) -> Result<f64, ChannelError> {
    let mut tau = (receiver.position_at(elapsed) - source).norm() / c;
    if receiver.velocity == Vector3::zeros() {
        return Ok(tau);
    }
    for _ in 0..MAX_ARRIVAL_ITERATIONS {
        let next = (receiver.position_at(elapsed + tau) - source).norm() / c;
        let change = (next - tau).abs();
        tau = next;
        if change < ARRIVAL_TOLERANCE {
            return Ok(tau);
        }
    }
    Err(ChannelError::InvalidScenario("arrival time iteration did not converge".into()))
}

pub fn simulate(s: &Scenario) -> Result<Vec<FrameEvents>, ChannelError> {
    s.validate()?;
    let frame = s.frame();
    let starts: Vec<Enu> = s.buoys.iter().map(|b| frame.geodetic_to_enu(&b.initial)).collect();
    let mut out = Vec::with_capacity(s.frames as usize);
    for frame_index in 0..s.frames {
        let mut events = Vec::with_capacity(4);
        for (slot, offset) in transmit_times(&s.schedule, frame_index).into_iter().enumerate() {
            let offset = ClockTime::from_secs_f64(offset)
                .ok_or_else(|| ChannelError::InvalidScenario(format!("slot time {offset} s is not representable")))?;
            let exact = s.start_time + offset;
            // messages carry millisecond time, so transmit on the millisecond
            let transmit = ClockTime::from_millis((exact.picos() as f64 / 1e9).round() as i64);
            let elapsed = s.elapsed(transmit);
            let track = Enu(starts[slot].0 + s.buoys[slot].drift * elapsed);
            let fix = frame
                .enu_to_geodetic(&track)
                .map_err(|e| ChannelError::InvalidScenario(format!("buoy {} track: {e}", slot + 1)))?;
            let message = BuoyMessage::quantize(slot as u8 + 1, transmit, &fix)?;
            let source = frame.geodetic_to_enu(&message.position()?).0;
            let tau = travel_time(&s.receiver, &source, elapsed, s.sound_speed)?;
            let true_position = s.receiver.position_at(elapsed + tau);
            if (true_position - source).norm() > s.range_limit {
                continue;
            }
            let arrival = ClockTime::from_secs_f64(tau)
                .and_then(|t| transmit.checked_add(t))
                .ok_or_else(|| ChannelError::InvalidScenario("arrival time overflows".into()))?;
            events.push(ReceptionEvent { frame_index, message, receive_time: arrival - s.clock_offset, true_position });
        }
        let status = if events.len() == 4 { FrameStatus::Complete } else { FrameStatus::NoFix { heard: events.len() } };
        out.push(FrameEvents { frame_index, events, status });
    }
    Ok(out)
}

/// Builds the solver input for one frame. Buoy positions come from the
/// messages, expressed in `frame`.
pub fn assemble_observations(
    events: &[ReceptionEvent],
    sound_speed: f64,
    frame: &LocalFrame,
) -> Result<ObservationSet, ChannelError> {
    let first = events.first().ok_or_else(|| ChannelError::IncompleteFrame("no events".into()))?;
    if let Some(other) = events.iter().find(|e| e.frame_index != first.frame_index) {
        return Err(ChannelError::MixedFrames(first.frame_index, other.frame_index));
    }
    let mut slots: [Option<Observation>; 4] = [None; 4];
    for e in events {
        let id = e.message.buoy_id;
        let slot = slots
            .get_mut(id.wrapping_sub(1) as usize)
            .ok_or_else(|| ChannelError::IncompleteFrame(format!("buoy id {id} out of range")))?;
        if slot.is_some() {
            return Err(ChannelError::IncompleteFrame(format!("buoy {id} heard twice")));
        }
        *slot = Some(Observation {
            buoy_id: id - 1,
            transmit_time: e.message.gnss_time(),
            receive_time: e.receive_time,
            buoy_position: frame.geodetic_to_enu(&e.message.position()?).0,
        });
    }
    let missing: Vec<String> = (0..4).filter(|&i| slots[i].is_none()).map(|i| (i + 1).to_string()).collect();
    if !missing.is_empty() {
        return Err(ChannelError::IncompleteFrame(format!("no message from buoy {}", missing.join(", "))));
    }
    Ok(ObservationSet::new(slots.map(|o| o.unwrap()), sound_speed)?)
}

/// Adds zero-mean Gaussian jitter of `sigma` seconds to every receive time.
/// The same seed always yields the same jitter.
pub fn add_timing_noise(events: &[ReceptionEvent], sigma: f64, seed: u64) -> Result<Vec<ReceptionEvent>, ChannelError> {
    let invalid = || ChannelError::InvalidScenario(format!("timing noise sigma {sigma} must be non-negative"));
    if !(sigma >= 0.0) {
        return Err(invalid());
    }
    if sigma == 0.0 {
        return Ok(events.to_vec());
    }
    let normal = Normal::new(0.0, sigma).map_err(|_| invalid())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    events
        .iter()
        .map(|e| {
            let jitter = ClockTime::from_secs_f64(normal.sample(&mut rng))
                .ok_or_else(|| ChannelError::InvalidScenario("timing noise overflows".into()))?;
            Ok(ReceptionEvent { receive_time: e.receive_time + jitter, ..*e })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multilateration::{kleusberg_solve, pseudorange_diffs, select_underwater, SolverConfig};
    use crate::protocol::{compute_schedule, MAX_MESSAGE_DURATION};

    /// Buoys on a 1 km square around (36.72 N, 4.42 W).
    fn square_scenario(receiver: Point, velocity: Vector3<f64>) -> Scenario {
        let origin = GeodeticCoord::new(36.72, -4.42, 0.0).unwrap();
        let frame = LocalFrame::new(origin);
        let corner = |e: f64, n: f64| frame.enu_to_geodetic(&Enu::new(e, n, 0.0)).unwrap();
        let still = Vector3::zeros();
        Scenario {
            origin,
            buoys: [
                BuoyTrack { initial: corner(0.0, 0.0), drift: still },
                BuoyTrack { initial: corner(1000.0, 0.0), drift: still },
                BuoyTrack { initial: corner(1000.0, 1000.0), drift: still },
                BuoyTrack { initial: corner(0.0, 1000.0), drift: still },
            ],
            receiver: ReceiverTrack { initial: receiver, velocity },
            sound_speed: 1500.0,
            clock_offset: ClockTime::ZERO,
            schedule: compute_schedule(80, 640.0, 1.0, Some(MAX_MESSAGE_DURATION)).unwrap(),
            frames: 3,
            range_limit: 10_000.0,
            start_time: ClockTime::from_millis(43_200_000),
            max_receiver_speed: 20.0,
        }
    }

    #[test]
    fn one_second_per_1500_meters() {
        // buoy 1 sits at the scenario origin; put the receiver 1500 m below it
        let s = square_scenario(Point::new(0.0, 0.0, -1500.0), Vector3::zeros());
        let frames = simulate(&s).unwrap();
        let e = frames[0].events[0];
        let slant = (e.true_position - s.frame().geodetic_to_enu(&e.message.position().unwrap()).0).norm();
        let travel = (e.receive_time - e.message.gnss_time()).as_secs_f64();
        assert!((travel - slant / 1500.0).abs() < 1e-12);
        assert!((travel - 1.0).abs() < 1e-9, "{travel}");
    }

    #[test]
    fn clock_offset_shifts_every_arrival() {
        let base = square_scenario(Point::new(300.0, 400.0, -150.0), Vector3::zeros());
        let shifted = Scenario { clock_offset: ClockTime::from_millis(5000), ..base.clone() };
        let (a, b) = (simulate(&base).unwrap(), simulate(&shifted).unwrap());
        for (fa, fb) in a.iter().zip(&b) {
            for (ea, eb) in fa.events.iter().zip(&fb.events) {
                assert_eq!(ea.receive_time - eb.receive_time, ClockTime::from_millis(5000));
            }
        }
    }

    #[test]
    fn noiseless_stationary_frame_is_exact() {
        let truth = Point::new(300.0, 400.0, -150.0);
        let s = square_scenario(truth, Vector3::zeros());
        let frames = simulate(&s).unwrap();
        let obs = assemble_observations(&frames[1].events, s.sound_speed, &s.frame()).unwrap();
        let diffs = pseudorange_diffs(&obs, 0).unwrap();
        let cfg = SolverConfig::default();
        let r0 = obs.get(0).unwrap().buoy_position;
        let pair = kleusberg_solve(&diffs, &r0, &cfg).unwrap();
        let solved = select_underwater(&pair, &cfg).unwrap();
        assert!((solved - truth).norm() < 1e-6, "{}", (solved - truth).norm());
    }

    #[test]
    fn motion_between_first_and_last_reception() {
        let s = square_scenario(Point::new(300.0, 400.0, -150.0), Vector3::new(5.0, 0.0, 0.0));
        for f in simulate(&s).unwrap() {
            let moved = (f.events[3].true_position - f.events[0].true_position).norm();
            assert!(moved <= 5.0 * s.schedule.frame_period, "{moved}");
        }
    }

    #[test]
    fn causality_and_determinism() {
        let s = square_scenario(Point::new(-200.0, 1500.0, -800.0), Vector3::new(1.0, -2.0, 0.5));
        let a = simulate(&s).unwrap();
        assert_eq!(a, simulate(&s).unwrap());
        for e in a.iter().flat_map(|f| &f.events) {
            assert!(e.receive_time + s.clock_offset > e.message.gnss_time());
        }
    }

    #[test]
    fn range_limit_drops_buoys() {
        let s = Scenario { range_limit: 800.0, ..square_scenario(Point::new(100.0, 100.0, -100.0), Vector3::zeros()) };
        let frames = simulate(&s).unwrap();
        assert_eq!(frames[0].status, FrameStatus::NoFix { heard: 1 });
        assert_eq!(assemble_observations(&frames[0].events, 1500.0, &s.frame()).unwrap_err().name(), "IncompleteFrame");
    }

    #[test]
    fn invalid_scenarios() {
        let base = square_scenario(Point::new(0.0, 0.0, -10.0), Vector3::zeros());
        let cases = [
            Scenario { sound_speed: 0.0, ..base.clone() },
            Scenario { frames: 0, ..base.clone() },
            Scenario {
                receiver: ReceiverTrack { initial: Point::new(0.0, 0.0, 1.0), velocity: Vector3::zeros() },
                ..base.clone()
            },
            Scenario {
                receiver: ReceiverTrack { initial: Point::new(0.0, 0.0, -1.0), velocity: Vector3::new(30.0, 0.0, 0.0) },
                ..base.clone()
            },
        ];
        for s in cases {
            assert_eq!(simulate(&s).unwrap_err().name(), "InvalidScenario");
        }
    }

    #[test]
    fn assembly_rejects_duplicates_and_mixed_frames() {
        let s = square_scenario(Point::new(300.0, 400.0, -150.0), Vector3::zeros());
        let frames = simulate(&s).unwrap();
        let mut dup = frames[0].events.clone();
        dup[3] = dup[2];
        assert_eq!(assemble_observations(&dup, 1500.0, &s.frame()).unwrap_err().name(), "IncompleteFrame");
        let mut mixed = frames[0].events.clone();
        mixed[2] = frames[1].events[2];
        assert_eq!(assemble_observations(&mixed, 1500.0, &s.frame()).unwrap_err(), ChannelError::MixedFrames(0, 1));
    }

    #[test]
    fn timing_noise() {
        let s = square_scenario(Point::new(300.0, 400.0, -150.0), Vector3::zeros());
        let events: Vec<ReceptionEvent> = simulate(&s).unwrap().into_iter().flat_map(|f| f.events).collect();
        assert_eq!(add_timing_noise(&events, 0.0, 9).unwrap(), events);
        assert_eq!(add_timing_noise(&events, 1e-4, 9).unwrap(), add_timing_noise(&events, 1e-4, 9).unwrap());
        assert!(add_timing_noise(&events, -1.0, 9).is_err());
    }

    #[test]
    fn timing_noise_standard_deviation() {
        let event =
            simulate(&square_scenario(Point::new(300.0, 400.0, -150.0), Vector3::zeros())).unwrap()[0].events[0];
        let events = vec![event; 10_000];
        let noisy = add_timing_noise(&events, 1e-4, 2024).unwrap();
        let meters: Vec<f64> =
            noisy.iter().map(|e| 1500.0 * (e.receive_time - event.receive_time).as_secs_f64()).collect();
        let mean = meters.iter().sum::<f64>() / meters.len() as f64;
        let var = meters.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (meters.len() - 1) as f64;
        assert!((var.sqrt() / 0.15 - 1.0).abs() < 0.05, "{}", var.sqrt());
    }
}
