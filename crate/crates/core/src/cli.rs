//! Command implementations behind the `lbl` binary.
//!
//! Every command writes to caller-supplied streams and returns a
//! [`Failure`] carrying the process exit code, so the binary stays a thin
//! argument parser and the commands can be tested in-process.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;
use serde::Deserialize;

use crate::channel::{
    add_timing_noise, assemble_observations, simulate, BuoyTrack, FrameStatus, ReceiverTrack, ReceptionEvent, Scenario,
};
use crate::geo::{Enu, GeodeticCoord, LocalFrame};
use crate::multilateration::{
    kleusberg_solve, numerical_solve, pseudorange_diffs, pseudorange_diffs_relaxed, residuals, select_candidate,
    CandidatePair, DiffSet, NumericalSolution, Observation, ObservationSet, Point, SolveError, SolverConfig,
};
use crate::protocol::{compute_schedule, decode_message, encode_message, ProtocolError, MAX_MESSAGE_DURATION};
use crate::time::ClockTime;
use crate::verify;

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_SOLVER: u8 = 2;
pub const EXIT_PROPERTY: u8 = 3;

/// Frame length the link budget aims to stay under, seconds.
pub const DUTY_CYCLE_BUDGET: f64 = 10.0;
/// Receiver speed the motion-error discussion is built around, m/s.
pub const NOMINAL_RECEIVER_SPEED: f64 = 5.0;
/// Scenarios shipped with the binary, addressable by name.
pub const BUNDLED_SCENARIOS: [(&str, &str); 2] = [
    ("squaretest", include_str!("../../../data/squaretest.toml")),
    ("moving", include_str!("../../../data/moving.toml")),
];

/// A command outcome other than success: the exit code and one diagnostic line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    pub fn solver(message: impl Into<String>) -> Self {
        Self { code: EXIT_SOLVER, message: message.into() }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::usage(format!("{}: {e}", path.display()))
}

fn geodetic(field: &str, v: [f64; 3]) -> Result<GeodeticCoord, String> {
    GeodeticCoord::new(v[0], v[1], v[2]).map_err(|e| format!("{field}: {e}"))
}

fn seconds(field: &str, v: f64) -> Result<ClockTime, String> {
    ClockTime::from_secs_f64(v).ok_or_else(|| format!("{field}: {v} is not a representable time"))
}

/// Scenario file contents. The README documents every key.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    /// Latitude deg, longitude deg, height m of the scenario ENU origin.
    pub origin: [f64; 3],
    /// GNSS seconds of day at the start of frame 0.
    pub start_time: f64,
    pub frames: u64,
    /// m/s.
    pub sound_speed: f64,
    /// Receiver clock lag behind GNSS time, seconds.
    #[serde(default)]
    pub clock_offset: f64,
    /// m.
    #[serde(default = "default_range_limit")]
    pub range_limit: f64,
    /// m/s.
    #[serde(default = "default_speed_cap")]
    pub max_receiver_speed: f64,
    pub schedule: ScheduleSection,
    pub buoys: Vec<BuoySection>,
    pub receiver: ReceiverSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub solver: SolverSection,
}

fn default_range_limit() -> f64 {
    10_000.0
}

fn default_speed_cap() -> f64 {
    20.0
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub message_bytes: u32,
    /// bit/s.
    pub bit_rate: f64,
    /// s.
    pub guard_time: f64,
    /// s; leave out to lift the cap.
    pub max_message_duration: Option<f64>,
}

/// Exactly one of `enu` (m, relative to the origin) or `geodetic`
/// (deg, deg, m) must be given.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuoySection {
    pub enu: Option<[f64; 3]>,
    pub geodetic: Option<[f64; 3]>,
    /// East, north, up, m/s.
    #[serde(default)]
    pub drift: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReceiverSection {
    /// ENU m relative to the origin.
    pub position: [f64; 3],
    /// m/s.
    #[serde(default)]
    pub velocity: [f64; 3],
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    /// Standard deviation of receive-time jitter, seconds.
    #[serde(default)]
    pub timing_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub residual_tolerance: f64,
    pub max_iterations: usize,
    pub consistency_tolerance: f64,
    pub surface_plane_up: f64,
    /// m below the surface plane.
    pub max_depth: f64,
    pub denominator_tolerance: f64,
    /// Fixed damping for singular normal equations; 0 disables it.
    pub damping: f64,
    /// Depth below the buoy centroid where the numerical solver starts, m.
    pub initial_depth: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let cfg = SolverConfig::default();
        Self {
            residual_tolerance: cfg.residual_tolerance,
            max_iterations: cfg.max_iterations,
            consistency_tolerance: cfg.consistency_tolerance,
            surface_plane_up: cfg.surface_plane_up,
            max_depth: cfg.max_depth,
            denominator_tolerance: cfg.denominator_tolerance,
            damping: cfg.damping.unwrap_or(0.0),
            initial_depth: DEFAULT_INITIAL_DEPTH,
        }
    }
}

pub const DEFAULT_INITIAL_DEPTH: f64 = 100.0;

impl SolverSection {
    pub fn config(&self) -> Result<SolverConfig, String> {
        let cfg = SolverConfig {
            residual_tolerance: self.residual_tolerance,
            max_iterations: self.max_iterations,
            consistency_tolerance: self.consistency_tolerance,
            surface_plane_up: self.surface_plane_up,
            max_depth: self.max_depth,
            denominator_tolerance: self.denominator_tolerance,
            damping: (self.damping != 0.0).then_some(self.damping),
        };
        cfg.validate()?;
        if !(self.initial_depth.is_finite()) {
            return Err("initial_depth must be finite".into());
        }
        Ok(cfg)
    }
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn scenario(&self) -> Result<Scenario, String> {
        let origin = geodetic("origin", self.origin)?;
        let frame = LocalFrame::new(origin);
        if self.buoys.len() != 4 {
            return Err(format!("expected 4 [[buoys]] entries, found {}", self.buoys.len()));
        }
        let mut tracks = Vec::with_capacity(4);
        for (i, b) in self.buoys.iter().enumerate() {
            let initial = match (b.enu, b.geodetic) {
                (Some(e), None) => frame
                    .enu_to_geodetic(&Enu::new(e[0], e[1], e[2]))
                    .map_err(|err| format!("buoy {}: {err}", i + 1))?,
                (None, Some(g)) => geodetic(&format!("buoy {}", i + 1), g)?,
                _ => return Err(format!("buoy {} needs exactly one of enu or geodetic", i + 1)),
            };
            tracks.push(BuoyTrack { initial, drift: Vector3::from(b.drift) });
        }
        let sched = &self.schedule;
        let schedule =
            compute_schedule(sched.message_bytes, sched.bit_rate, sched.guard_time, sched.max_message_duration)
                .map_err(|e| e.to_string())?;
        let scenario = Scenario {
            origin,
            buoys: [tracks[0], tracks[1], tracks[2], tracks[3]],
            receiver: ReceiverTrack {
                initial: Point::from(self.receiver.position),
                velocity: Vector3::from(self.receiver.velocity),
            },
            sound_speed: self.sound_speed,
            clock_offset: seconds("clock_offset", self.clock_offset)?,
            schedule,
            frames: self.frames,
            range_limit: self.range_limit,
            start_time: seconds("start_time", self.start_time)?,
            max_receiver_speed: self.max_receiver_speed,
        };
        scenario.validate().map_err(|e| e.to_string())?;
        if !(self.noise.timing_sigma >= 0.0) {
            return Err(format!("noise.timing_sigma {} must be non-negative", self.noise.timing_sigma));
        }
        Ok(scenario)
    }
}

/// Loads a scenario file, falling back to a bundled scenario of that name.
pub fn load_scenario(path: &str) -> Result<ScenarioFile, Failure> {
    let text = match fs::read_to_string(path) {
        Ok(text) => text,
        Err(e) => match BUNDLED_SCENARIOS.iter().find(|(name, _)| *name == path) {
            Some((_, text)) => text.to_string(),
            None => return Err(io_failure(Path::new(path), e)),
        },
    };
    ScenarioFile::parse(&text).map_err(|e| Failure::usage(format!("{path}: {e}")))
}

/// One frame as heard by a receiver: what the observation file holds.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationFile {
    pub sound_speed: f64,
    /// Working-frame origin; defaults to buoy 1's reported position.
    pub origin: Option<GeodeticCoord>,
    /// Receive time on the receiver clock and the sentence heard.
    pub receptions: Vec<(ClockTime, crate::protocol::BuoyMessage)>,
}

impl ObservationFile {
    pub fn parse(text: &str) -> Result<Self, (usize, String)> {
        let mut sound_speed = None;
        let mut origin = None;
        let mut receptions = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let fail = |msg: String| (line_no, msg);
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some((key, value)) = line.split_once('=') {
                let value = value.trim();
                match key.trim() {
                    "sound_speed" => {
                        let c: f64 = value.parse().map_err(|_| fail(format!("bad sound_speed {value:?}")))?;
                        if !(c.is_finite() && c > 0.0) {
                            return Err(fail(format!("sound_speed must be positive and finite, got {value}")));
                        }
                        sound_speed = Some(c);
                    }
                    "origin" => {
                        let parts: Vec<f64> = value
                            .split(',')
                            .map(|p| p.trim().parse::<f64>())
                            .collect::<Result<_, _>>()
                            .map_err(|_| fail(format!("bad origin {value:?}")))?;
                        let [lat, lon, h] = parts[..] else {
                            return Err(fail("origin needs latitude, longitude, height".into()));
                        };
                        origin = Some(GeodeticCoord::new(lat, lon, h).map_err(|e| fail(e.to_string()))?);
                    }
                    other => return Err(fail(format!("unknown key {other:?}"))),
                }
                continue;
            }
            let (time, sentence) = line
                .split_once(char::is_whitespace)
                .ok_or_else(|| fail("expected '<receive time> <sentence>'".into()))?;
            let receive: ClockTime = time.parse().map_err(|e| fail(format!("{e}")))?;
            let wire = format!("{}\r\n", sentence.trim());
            let message = decode_message(wire.as_bytes()).map_err(|e: ProtocolError| fail(e.to_string()))?;
            receptions.push((receive, message));
        }
        let sound_speed = sound_speed.ok_or((0, "missing sound_speed".to_string()))?;
        Ok(Self { sound_speed, origin, receptions })
    }

    pub fn render(&self) -> String {
        let mut out = String::from("# receive time on the receiver clock (s), then the sentence heard\n");
        writeln!(out, "sound_speed = {}", self.sound_speed).unwrap();
        if let Some(o) = &self.origin {
            writeln!(out, "origin = {}, {}, {}", o.latitude(), o.longitude(), o.height()).unwrap();
        }
        for (time, message) in &self.receptions {
            let wire = encode_message(message).expect("decoded messages re-encode");
            let sentence = String::from_utf8(wire).expect("sentences are ASCII");
            writeln!(out, "{time} {}", sentence.trim_end()).unwrap();
        }
        out
    }

    fn frame(&self) -> Result<LocalFrame, String> {
        if let Some(o) = self.origin {
            return Ok(LocalFrame::new(o));
        }
        let (_, first) =
            self.receptions.iter().find(|(_, m)| m.buoy_id == 1).ok_or("no origin given and no message from buoy 1")?;
        Ok(LocalFrame::new(first.position().map_err(|e| e.to_string())?))
    }

    pub fn observation_set(&self) -> Result<(LocalFrame, ObservationSet), String> {
        let frame = self.frame()?;
        if self.receptions.len() != 4 {
            return Err(format!("expected 4 receptions, found {}", self.receptions.len()));
        }
        let mut obs = Vec::with_capacity(4);
        for (receive, m) in &self.receptions {
            obs.push(Observation {
                buoy_id: m.buoy_id - 1,
                transmit_time: m.gnss_time(),
                receive_time: *receive,
                buoy_position: frame.geodetic_to_enu(&m.position().map_err(|e| e.to_string())?).0,
            });
        }
        let set = ObservationSet::new([obs[0], obs[1], obs[2], obs[3]], self.sound_speed).map_err(|e| e.to_string())?;
        Ok((frame, set))
    }
}

/// Analytic fix with the candidate it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticFix {
    pub pair: CandidatePair,
    /// 0 or 1, index into `pair`.
    pub chosen: usize,
    pub position: Point,
}

/// Both solvers run on one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSolution {
    /// Differences relative to buoy 1, without the realizability check.
    pub diffs: DiffSet,
    pub reference_position: Point,
    pub analytic: Result<AnalyticFix, SolveError>,
    pub numerical: Result<NumericalSolution, SolveError>,
}

/// Where the numerical solver starts: below the buoy centroid.
pub fn initial_guess(obs: &ObservationSet, depth: f64) -> Point {
    let centroid = obs.observations().iter().map(|o| o.buoy_position).sum::<Point>() / 4.0;
    Point::new(centroid.x, centroid.y, centroid.z - depth)
}

pub fn solve_observations(
    obs: &ObservationSet,
    cfg: &SolverConfig,
    initial_depth: f64,
) -> Result<FrameSolution, SolveError> {
    let diffs = pseudorange_diffs_relaxed(obs, 0)?;
    let reference_position = obs.get(0).expect("buoy 0 present").buoy_position;
    let analytic = pseudorange_diffs(obs, 0).and_then(|strict| {
        let pair = kleusberg_solve(&strict, &reference_position, cfg)?;
        let chosen = select_candidate(&pair, cfg)?;
        let position = pair.positions[chosen];
        Ok(AnalyticFix { pair, chosen, position })
    });
    let numerical = numerical_solve(&diffs, &reference_position, &initial_guess(obs, initial_depth), cfg);
    Ok(FrameSolution { diffs, reference_position, analytic, numerical })
}

/// One CSV line.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub frame_index: u64,
    /// `ok`, `NoFix`, or the analytic solver's error name.
    pub status: String,
    /// `ok` or the numerical solver's error name; empty when not run.
    pub numerical_status: String,
    /// Receiver position at the last arrival, working frame.
    pub truth: Option<Point>,
    pub analytic: Option<Point>,
    pub numerical: Option<Point>,
    pub error_analytic: Option<f64>,
    pub error_numerical: Option<f64>,
    pub residual_analytic: Option<f64>,
    pub residual_numerical: Option<f64>,
    pub iterations: Option<usize>,
    pub discriminant: Option<f64>,
    /// 1-based buoy index of the range equation used.
    pub range_index: Option<usize>,
    /// Receiver speed times the first-to-last transmit separation, m.
    pub motion_bound: f64,
}

pub const CSV_HEADER: &str = "frame,status,truth_e,truth_n,truth_u,analytic_e,analytic_n,analytic_u,\
numerical_status,numerical_e,numerical_n,numerical_u,error_analytic,error_numerical,\
residual_analytic,residual_numerical,iterations,discriminant,range_index,motion_bound";

fn sig9(v: f64) -> String {
    format!("{v:.8e}")
}

fn cell(out: &mut String, v: Option<f64>) {
    out.push(',');
    if let Some(v) = v {
        out.push_str(&sig9(v));
    }
}

fn cells3(out: &mut String, p: Option<Point>) {
    for k in 0..3 {
        cell(out, p.map(|p| p[k]));
    }
}

impl ResultRow {
    pub fn csv_line(&self) -> String {
        let mut out = format!("{},{}", self.frame_index, self.status);
        cells3(&mut out, self.truth);
        cells3(&mut out, self.analytic);
        write!(out, ",{}", self.numerical_status).unwrap();
        cells3(&mut out, self.numerical);
        cell(&mut out, self.error_analytic);
        cell(&mut out, self.error_numerical);
        cell(&mut out, self.residual_analytic);
        cell(&mut out, self.residual_numerical);
        write!(out, ",{}", self.iterations.map(|i| i.to_string()).unwrap_or_default()).unwrap();
        cell(&mut out, self.discriminant);
        write!(out, ",{}", self.range_index.map(|i| i.to_string()).unwrap_or_default()).unwrap();
        cell(&mut out, Some(self.motion_bound));
        out
    }
}

pub fn render_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.csv_line());
        out.push('\n');
    }
    out
}

/// Everything a simulated run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub scenario: Scenario,
    /// Working frame: tangent at buoy 1's first reported position.
    pub frame: LocalFrame,
    pub events: Vec<Vec<ReceptionEvent>>,
    pub rows: Vec<ResultRow>,
    /// Diagnostic lines for frames that did not solve.
    pub diagnostics: Vec<String>,
}

pub fn run_scenario(file: &ScenarioFile) -> Result<Run, Failure> {
    let scenario = file.scenario().map_err(Failure::usage)?;
    let cfg = file.solver.config().map_err(|e| Failure::usage(format!("[solver] {e}")))?;
    let frames = simulate(&scenario).map_err(|e| Failure::usage(e.to_string()))?;
    let scenario_frame = scenario.frame();
    let working_origin = frames
        .iter()
        .flat_map(|f| &f.events)
        .find(|e| e.message.buoy_id == 1)
        .map(|e| e.message.position().expect("simulated messages are valid"))
        .unwrap_or(scenario.origin);
    let frame = LocalFrame::new(working_origin);
    let to_working = |p: &Point| frame.to_enu(&scenario_frame.from_enu(&Enu(*p))).0;
    let motion_bound = scenario.receiver.velocity.norm() * scenario.schedule.span();
    let mut rows = Vec::with_capacity(frames.len());
    let mut events = Vec::with_capacity(frames.len());
    let mut diagnostics = Vec::new();
    for f in &frames {
        let heard = add_timing_noise(&f.events, file.noise.timing_sigma, file.noise.seed.wrapping_add(f.frame_index))
            .map_err(|e| Failure::usage(e.to_string()))?;
        let truth = f.events.iter().max_by_key(|e| e.receive_time).map(|e| to_working(&e.true_position));
        let mut row = ResultRow {
            frame_index: f.frame_index,
            status: String::new(),
            numerical_status: String::new(),
            truth,
            analytic: None,
            numerical: None,
            error_analytic: None,
            error_numerical: None,
            residual_analytic: None,
            residual_numerical: None,
            iterations: None,
            discriminant: None,
            range_index: None,
            motion_bound,
        };
        if let FrameStatus::NoFix { heard: n } = f.status {
            row.status = "NoFix".into();
            diagnostics.push(format!("frame {}: NoFix: only {n} of 4 buoys in range", f.frame_index));
        } else {
            let outcome = assemble_observations(&heard, scenario.sound_speed, &frame)
                .map_err(|e| e.to_string())
                .and_then(|obs| solve_observations(&obs, &cfg, file.solver.initial_depth).map_err(|e| e.to_string()));
            match outcome {
                Err(e) => {
                    row.status = e.split(':').next().unwrap_or("Error").to_string();
                    diagnostics.push(format!("frame {}: {e}", f.frame_index));
                }
                Ok(sol) => fill_row(&mut row, &sol, &mut diagnostics),
            }
        }
        rows.push(row);
        events.push(heard);
    }
    Ok(Run { scenario, frame, events, rows, diagnostics })
}

fn fill_row(row: &mut ResultRow, sol: &FrameSolution, diagnostics: &mut Vec<String>) {
    let residual_norm =
        |p: &Point| residuals(p, &sol.diffs, &sol.reference_position).iter().map(|r| r * r).sum::<f64>().sqrt();
    match &sol.analytic {
        Ok(fix) => {
            row.status = "ok".into();
            row.analytic = Some(fix.position);
            row.error_analytic = row.truth.map(|t| (fix.position - t).norm());
            row.residual_analytic = Some(residual_norm(&fix.position));
            row.discriminant = Some(fix.pair.work.discriminant);
            row.range_index = Some(fix.pair.ranges[fix.chosen].index);
        }
        Err(e) => {
            row.status = e.name().into();
            diagnostics.push(format!("frame {}: analytic: {e}", row.frame_index));
        }
    }
    match &sol.numerical {
        Ok(n) => {
            row.numerical_status = "ok".into();
            row.numerical = Some(n.position);
            row.error_numerical = row.truth.map(|t| (n.position - t).norm());
            row.residual_numerical = Some(n.residual_norm);
            row.iterations = Some(n.iterations);
        }
        Err(e) => {
            row.numerical_status = e.name().into();
            diagnostics.push(format!("frame {}: numerical: {e}", row.frame_index));
        }
    }
}

fn stats(values: impl Iterator<Item = f64>) -> Option<(f64, f64, usize)> {
    let v: Vec<f64> = values.collect();
    if v.is_empty() {
        return None;
    }
    let max = v.iter().cloned().fold(0.0, f64::max);
    Some((max, v.iter().sum::<f64>() / v.len() as f64, v.len()))
}

pub fn summary(run: &Run) -> String {
    let mut out = String::new();
    let solved = run.rows.iter().filter(|r| r.status == "ok").count();
    let no_fix = run.rows.iter().filter(|r| r.status == "NoFix").count();
    let failed = run.rows.len() - solved - no_fix;
    writeln!(out, "frames: {} total, {solved} solved, {no_fix} no fix, {failed} failed", run.rows.len()).unwrap();
    for (label, values) in [
        ("analytic", run.rows.iter().filter_map(|r| r.error_analytic).collect::<Vec<_>>()),
        ("numerical", run.rows.iter().filter_map(|r| r.error_numerical).collect::<Vec<_>>()),
    ] {
        match stats(values.into_iter()) {
            Some((max, mean, n)) => {
                writeln!(out, "{label} error: max {} m, mean {} m over {n} frames", sig9(max), sig9(mean)).unwrap()
            }
            None => writeln!(out, "{label} error: no solved frames").unwrap(),
        }
    }
    let speed = run.scenario.receiver.velocity.norm();
    if speed > 0.0 {
        let bound = speed * run.scenario.schedule.span();
        let errors: Vec<f64> = run.rows.iter().filter_map(|r| r.error_analytic).collect();
        let within = errors.iter().filter(|e| **e <= bound).count();
        writeln!(
            out,
            "motion bound: v*S = {speed} m/s * {} s = {} m; {within} of {} solved frames within it",
            run.scenario.schedule.span(),
            sig9(bound),
            errors.len()
        )
        .unwrap();
        if speed > NOMINAL_RECEIVER_SPEED {
            writeln!(out, "note: receiver speed {speed} m/s is above the {NOMINAL_RECEIVER_SPEED} m/s design figure")
                .unwrap();
        }
    }
    out
}

pub struct SimulateOptions<'a> {
    pub scenario: &'a str,
    pub output: Option<&'a Path>,
    /// Also write one frame as an observation file.
    pub export: Option<&'a Path>,
    pub export_frame: u64,
}

pub fn cmd_simulate(opts: &SimulateOptions, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    let file = load_scenario(opts.scenario)?;
    let run = run_scenario(&file)?;
    let csv = render_csv(&run.rows);
    let export = match opts.export {
        Some(path) => Some((path, export_frame(&run, opts.export_frame)?)),
        None => None,
    };
    match opts.output {
        Some(path) => {
            fs::write(path, &csv).map_err(|e| io_failure(path, e))?;
            out.write_all(summary(&run).as_bytes()).ok();
        }
        None => {
            out.write_all(csv.as_bytes()).ok();
            err.write_all(summary(&run).as_bytes()).ok();
        }
    }
    if let Some((path, text)) = export {
        fs::write(path, text).map_err(|e| io_failure(path, e))?;
    }
    for line in &run.diagnostics {
        writeln!(err, "{line}").ok();
    }
    let complete = run.rows.iter().filter(|r| r.status != "NoFix").count();
    if complete == 0 {
        return Err(Failure::solver("NoFix: no frame heard all four buoys"));
    }
    let failed = run.rows.iter().filter(|r| r.status != "NoFix" && r.status != "ok").count();
    if failed > 0 {
        return Err(Failure::solver(format!("{failed} of {complete} frames failed to solve")));
    }
    Ok(())
}

/// The observation file a receiver would have assembled for one frame.
pub fn export_frame(run: &Run, frame_index: u64) -> Result<String, Failure> {
    let events = run
        .events
        .get(frame_index as usize)
        .ok_or_else(|| Failure::usage(format!("frame {frame_index} was not simulated")))?;
    let file = ObservationFile {
        sound_speed: run.scenario.sound_speed,
        origin: Some(*run.frame.origin()),
        receptions: events.iter().map(|e| (e.receive_time, e.message)).collect(),
    };
    Ok(file.render())
}

fn point_text(p: &Point) -> String {
    format!("({}, {}, {})", sig9(p.x), sig9(p.y), sig9(p.z))
}

pub fn cmd_solve(path: &Path, out: &mut dyn Write) -> Result<(), Failure> {
    let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    let file =
        ObservationFile::parse(&text).map_err(|(line, e)| Failure::usage(format!("{}:{line}: {e}", path.display())))?;
    let (frame, obs) = file.observation_set().map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let cfg = SolverConfig::default();
    let sol = solve_observations(&obs, &cfg, DEFAULT_INITIAL_DEPTH).map_err(|e| Failure::solver(e.to_string()))?;
    let mut s = String::new();
    let o = frame.origin();
    writeln!(s, "working frame origin: {} deg, {} deg, {} m", o.latitude(), o.longitude(), o.height()).unwrap();
    writeln!(s, "differences relative to buoy 1:").unwrap();
    let d = &sol.diffs;
    for ((id, r), b) in d.buoy_ids().iter().zip(d.range_differences()).zip(d.baselines()) {
        writeln!(s, "  buoy {}: d = {} m, baseline {} m", id + 1, sig9(r), sig9(b)).unwrap();
    }
    let residual_text = |p: &Point| {
        let r = residuals(p, &sol.diffs, &sol.reference_position);
        format!("[{}, {}, {}]", sig9(r[0]), sig9(r[1]), sig9(r[2]))
    };
    let outcome = match &sol.analytic {
        Ok(fix) => {
            writeln!(s, "discriminant: {}", sig9(fix.pair.work.discriminant)).unwrap();
            for k in 0..2 {
                writeln!(
                    s,
                    "candidate {}: {} range {} m (equation {}), residuals {}",
                    k + 1,
                    point_text(&fix.pair.positions[k]),
                    sig9(fix.pair.ranges[k].range),
                    fix.pair.ranges[k].index,
                    residual_text(&fix.pair.positions[k])
                )
                .unwrap();
            }
            writeln!(s, "selected: candidate {} {}", fix.chosen + 1, point_text(&fix.position)).unwrap();
            if let Ok(g) = frame.enu_to_geodetic(&Enu(fix.position)) {
                writeln!(
                    s,
                    "selected geodetic: {:.7} deg, {:.7} deg, {:.2} m",
                    g.latitude(),
                    g.longitude(),
                    g.height()
                )
                .unwrap();
            }
            Ok(())
        }
        Err(e) => {
            writeln!(s, "analytic: {e}").unwrap();
            Err(Failure::solver(e.to_string()))
        }
    };
    match &sol.numerical {
        Ok(n) => writeln!(
            s,
            "numerical: {} after {} iterations, residuals {}",
            point_text(&n.position),
            n.iterations,
            residual_text(&n.position)
        )
        .unwrap(),
        Err(e) => writeln!(s, "numerical: {e}").unwrap(),
    }
    out.write_all(s.as_bytes()).ok();
    outcome
}

pub fn cmd_schedule(bytes: u32, bit_rate: f64, guard: f64, cap: bool, out: &mut dyn Write) -> Result<(), Failure> {
    let limit = cap.then_some(MAX_MESSAGE_DURATION);
    let s = compute_schedule(bytes, bit_rate, guard, limit).map_err(|e| match e {
        ProtocolError::BudgetExceeded { .. } => Failure::solver(e.to_string()),
        other => Failure::usage(other.to_string()),
    })?;
    let mut text = String::new();
    writeln!(text, "message: {bytes} bytes at {bit_rate} bit/s, t_m = {} s", s.message_duration).unwrap();
    writeln!(text, "guard time: {} s", s.guard_time).unwrap();
    writeln!(text, "slot  start (s)  end (s)").unwrap();
    for (i, start) in s.start_times.iter().enumerate() {
        writeln!(text, "{:<4}  {:<9}  {}", i + 1, start, start + s.message_duration).unwrap();
    }
    let verdict = if s.frame_period < DUTY_CYCLE_BUDGET { "within" } else { "exceeds" };
    writeln!(text, "frame period T_f = {} s, {verdict} the {DUTY_CYCLE_BUDGET} s budget", s.frame_period).unwrap();
    out.write_all(text.as_bytes()).ok();
    Ok(())
}

pub fn cmd_verify(seed: u64, out: &mut dyn Write) -> Result<(), Failure> {
    let report = verify::run(&verify::Options::with_seed(seed));
    for line in report.lines() {
        writeln!(out, "{line}").ok();
    }
    let failed = report.results.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(Failure { code: EXIT_PROPERTY, message: format!("{failed} properties failed") });
    }
    Ok(())
}
