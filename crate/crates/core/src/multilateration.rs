//! Pseudorange differencing and hyperbolic position solvers.
//!
//! All positions are in the working ENU frame (meters, `z` is up). The
//! analytic solver follows Kleusberg's closed form: two linear constraints
//! on the unit direction from the reference buoy plus the unit-norm
//! condition give two candidate directions, and the range along each
//! direction follows from any one of the three hyperboloids.

use std::ops::RangeInclusive;

use nalgebra::{Cholesky, Matrix3, Vector3, U3};
use thiserror::Error;

use crate::time::ClockTime;

pub type Point = Vector3<f64>;

pub const BUOY_COUNT: usize = 4;
/// Plausible seawater sound speeds, m/s.
pub const DEFAULT_SOUND_SPEED_WINDOW: RangeInclusive<f64> = 1400.0..=1600.0;
/// Buoys closer than this are treated as coincident.
pub const MIN_BASELINE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("InvalidObservations: {0}")]
    InvalidObservations(String),
    #[error("SoundSpeedOutOfRange: {speed} m/s is outside [{min}, {max}]")]
    SoundSpeedOutOfRange { speed: f64, min: f64, max: f64 },
    #[error("DegenerateBaseline: buoys {reference} and {other} are {baseline} m apart")]
    DegenerateBaseline { reference: u8, other: u8, baseline: f64 },
    #[error("UnrealizableTDOA: |d| = {difference} m is not below baseline {baseline} m for buoy {buoy}")]
    UnrealizableTDOA { buoy: u8, difference: f64, baseline: f64 },
    #[error("NoRealSolution: direction discriminant {discriminant:e} is negative")]
    NoRealSolution { discriminant: f64 },
    #[error("DegenerateGeometry: {0}")]
    DegenerateGeometry(String),
    #[error("SingularDenominator: every range equation is singular along candidate {candidate}")]
    SingularDenominator { candidate: usize },
    #[error("InconsistentRanges: candidate {candidate} ranges disagree by {spread} m")]
    InconsistentRanges { candidate: usize, spread: f64 },
    #[error("NoUnderwaterSolution: no candidate with non-negative range lies below {surface} m and within {max_depth} m of it")]
    NoUnderwaterSolution { surface: f64, max_depth: f64 },
    #[error("NonConvergence: step norm {step} m after {iterations} iterations")]
    NonConvergence { iterations: usize, step: f64 },
    #[error("SingularJacobian: {0} (the hyperboloids need not intersect)")]
    SingularJacobian(String),
}

impl SolveError {
    /// Taxonomy name, identical to the variant name.
    pub fn name(&self) -> &'static str {
        match self {
            SolveError::InvalidObservations(_) => "InvalidObservations",
            SolveError::SoundSpeedOutOfRange { .. } => "SoundSpeedOutOfRange",
            SolveError::DegenerateBaseline { .. } => "DegenerateBaseline",
            SolveError::UnrealizableTDOA { .. } => "UnrealizableTDOA",
            SolveError::NoRealSolution { .. } => "NoRealSolution",
            SolveError::DegenerateGeometry(_) => "DegenerateGeometry",
            SolveError::SingularDenominator { .. } => "SingularDenominator",
            SolveError::InconsistentRanges { .. } => "InconsistentRanges",
            SolveError::NoUnderwaterSolution { .. } => "NoUnderwaterSolution",
            SolveError::NonConvergence { .. } => "NonConvergence",
            SolveError::SingularJacobian(_) => "SingularJacobian",
        }
    }
}

/// c · (t_rx − t_tx + offset), where `offset` maps the receiver clock onto
/// GNSS time.
pub fn pseudorange(sound_speed: f64, receive_time: f64, transmit_time: f64, offset: f64) -> f64 {
    sound_speed * (receive_time - transmit_time + offset)
}

/// One received buoy message.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    /// 0-based buoy index.
    pub buoy_id: u8,
    /// GNSS time of transmission.
    pub transmit_time: ClockTime,
    /// Receiver clock at arrival.
    pub receive_time: ClockTime,
    pub buoy_position: Point,
}

impl Observation {
    /// Apparent travel time, still biased by the receiver clock offset.
    pub fn apparent_delay(&self) -> ClockTime {
        self.receive_time - self.transmit_time
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    observations: [Observation; BUOY_COUNT],
    sound_speed: f64,
}

impl ObservationSet {
    pub fn new(observations: [Observation; BUOY_COUNT], sound_speed: f64) -> Result<Self, SolveError> {
        Self::with_speed_window(observations, sound_speed, DEFAULT_SOUND_SPEED_WINDOW)
    }

    pub fn with_speed_window(
        observations: [Observation; BUOY_COUNT],
        sound_speed: f64,
        window: RangeInclusive<f64>,
    ) -> Result<Self, SolveError> {
        if !(sound_speed > 0.0 && window.contains(&sound_speed)) {
            return Err(SolveError::SoundSpeedOutOfRange {
                speed: sound_speed,
                min: *window.start(),
                max: *window.end(),
            });
        }
        let mut seen = [false; BUOY_COUNT];
        for obs in &observations {
            let id = obs.buoy_id as usize;
            if id >= BUOY_COUNT || seen[id] {
                return Err(SolveError::InvalidObservations(format!(
                    "buoy ids must be a permutation of 0..{BUOY_COUNT}, got {}",
                    obs.buoy_id
                )));
            }
            seen[id] = true;
            if !obs.buoy_position.iter().all(|c| c.is_finite()) {
                return Err(SolveError::InvalidObservations(format!("buoy {} position is not finite", obs.buoy_id)));
            }
        }
        Ok(Self { observations, sound_speed })
    }

    pub fn observations(&self) -> &[Observation; BUOY_COUNT] {
        &self.observations
    }

    pub fn sound_speed(&self) -> f64 {
        self.sound_speed
    }

    pub fn get(&self, buoy_id: u8) -> Option<&Observation> {
        self.observations.iter().find(|o| o.buoy_id == buoy_id)
    }
}

/// Range differences to three buoys relative to a reference buoy, with the
/// baseline geometry they refer to.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffSet {
    reference_id: u8,
    buoy_ids: [u8; 3],
    range_differences: [f64; 3],
    offsets: [Point; 3],
    directions: [Point; 3],
    baselines: [f64; 3],
}

impl DiffSet {
    /// `positions` are the three non-reference buoys; `range_differences[i]`
    /// is |X − R_i| − |X − R_0|.
    pub fn new(
        reference_id: u8,
        reference_position: &Point,
        buoys: [(u8, Point); 3],
        range_differences: [f64; 3],
    ) -> Result<Self, SolveError> {
        let set = Self::new_relaxed(reference_id, reference_position, buoys, range_differences)?;
        set.check_realizable()?;
        Ok(set)
    }

    /// Like [`DiffSet::new`] but accepts |d| ≥ b, which noisy data can produce.
    pub fn new_relaxed(
        reference_id: u8,
        reference_position: &Point,
        buoys: [(u8, Point); 3],
        range_differences: [f64; 3],
    ) -> Result<Self, SolveError> {
        let mut offsets = [Point::zeros(); 3];
        let mut directions = [Point::zeros(); 3];
        let mut baselines = [0.0; 3];
        for (k, (id, position)) in buoys.iter().enumerate() {
            let offset = position - reference_position;
            let baseline = offset.norm();
            if !(baseline >= MIN_BASELINE) {
                return Err(SolveError::DegenerateBaseline { reference: reference_id, other: *id, baseline });
            }
            if !range_differences[k].is_finite() {
                return Err(SolveError::InvalidObservations(format!("range difference for buoy {id} is not finite")));
            }
            offsets[k] = offset;
            directions[k] = offset / baseline;
            baselines[k] = baseline;
        }
        Ok(Self { reference_id, buoy_ids: buoys.map(|(id, _)| id), range_differences, offsets, directions, baselines })
    }

    fn check_realizable(&self) -> Result<(), SolveError> {
        for k in 0..3 {
            if self.range_differences[k].abs() >= self.baselines[k] {
                return Err(SolveError::UnrealizableTDOA {
                    buoy: self.buoy_ids[k],
                    difference: self.range_differences[k],
                    baseline: self.baselines[k],
                });
            }
        }
        Ok(())
    }

    pub fn reference_id(&self) -> u8 {
        self.reference_id
    }

    pub fn buoy_ids(&self) -> [u8; 3] {
        self.buoy_ids
    }

    /// d_0i for the three non-reference buoys, meters.
    pub fn range_differences(&self) -> [f64; 3] {
        self.range_differences
    }

    /// Unit baseline directions e_0i.
    pub fn directions(&self) -> [Point; 3] {
        self.directions
    }

    /// Baseline lengths b_0i, meters.
    pub fn baselines(&self) -> [f64; 3] {
        self.baselines
    }

    /// R_i − R_0.
    pub fn offsets(&self) -> [Point; 3] {
        self.offsets
    }

    pub fn with_range_differences(&self, range_differences: [f64; 3]) -> Self {
        Self { range_differences, ..self.clone() }
    }
}

fn difference_set(obs: &ObservationSet, reference_id: u8, strict: bool) -> Result<DiffSet, SolveError> {
    let reference = obs
        .get(reference_id)
        .ok_or_else(|| SolveError::InvalidObservations(format!("reference buoy {reference_id} is not in the set")))?;
    let reference_delay = reference.apparent_delay();
    let c = obs.sound_speed();
    let mut others = obs.observations().iter().filter(|o| o.buoy_id != reference_id);
    let mut buoys = [(0u8, Point::zeros()); 3];
    let mut diffs = [0.0; 3];
    for k in 0..3 {
        let o = others.next().expect("four distinct buoys");
        // integer picoseconds: the receiver clock offset cancels exactly here
        let delta = o.apparent_delay() - reference_delay;
        buoys[k] = (o.buoy_id, o.buoy_position);
        diffs[k] = c * delta.as_secs_f64();
    }
    if strict {
        DiffSet::new(reference_id, &reference.buoy_position, buoys, diffs)
    } else {
        DiffSet::new_relaxed(reference_id, &reference.buoy_position, buoys, diffs)
    }
}

/// d_0i = c·[(t'_i − t_i) − (t'_0 − t_0)] for the three non-reference buoys.
pub fn pseudorange_diffs(obs: &ObservationSet, reference_id: u8) -> Result<DiffSet, SolveError> {
    difference_set(obs, reference_id, true)
}

/// [`pseudorange_diffs`] without the |d| < b check, for the numerical solver.
pub fn pseudorange_diffs_relaxed(obs: &ObservationSet, reference_id: u8) -> Result<DiffSet, SolveError> {
    difference_set(obs, reference_id, false)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Step-norm threshold that ends the numerical iteration, meters.
    pub residual_tolerance: f64,
    pub max_iterations: usize,
    /// Allowed spread between the three range-along-direction values, meters.
    pub consistency_tolerance: f64,
    /// Candidates must lie strictly below this up-coordinate.
    pub surface_plane_up: f64,
    /// Deepest plausible fix below the surface plane, meters.
    pub max_depth: f64,
    /// Range-equation denominators below this magnitude are singular, meters.
    pub denominator_tolerance: f64,
    /// Fixed Levenberg damping used when the normal equations are singular.
    /// `None` turns the fallback off.
    pub damping: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            residual_tolerance: 1e-9,
            max_iterations: 25,
            consistency_tolerance: 1e-6,
            surface_plane_up: 0.0,
            max_depth: 11_000.0,
            denominator_tolerance: 1e-9,
            damping: Some(1e-6),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), String> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(format!("{name} must be positive, got {v}"))
            }
        };
        positive("residual_tolerance", self.residual_tolerance)?;
        positive("consistency_tolerance", self.consistency_tolerance)?;
        positive("denominator_tolerance", self.denominator_tolerance)?;
        positive("max_depth", self.max_depth)?;
        if let Some(lambda) = self.damping {
            positive("damping", lambda)?;
        }
        if self.max_iterations == 0 {
            return Err("max_iterations must be at least 1".into());
        }
        if !self.surface_plane_up.is_finite() {
            return Err("surface_plane_up must be finite".into());
        }
        Ok(())
    }
}

/// Intermediate quantities of the closed-form solution, kept for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KleusbergWork {
    pub f: [Point; 2],
    pub u: [f64; 2],
    pub g: Point,
    pub h: Point,
    /// G·G − H·H; negative means no real direction exists.
    pub discriminant: f64,
}

/// F_k, U_k, G and H from baseline pairs (0→1, 0→2) and (0→2, 0→3).
pub fn kleusberg_work(diffs: &DiffSet) -> KleusbergWork {
    let b = diffs.baselines();
    let d = diffs.range_differences();
    let e = diffs.directions();
    let scale = |i: usize| 1.0 / (b[i] * b[i] - d[i] * d[i]);
    let f = [0, 1].map(|k| e[k] * (b[k] * scale(k)) - e[k + 1] * (b[k + 1] * scale(k + 1)));
    let u = [0, 1].map(|k| d[k + 1] * scale(k + 1) - d[k] * scale(k));
    let g = f[0].cross(&f[1]);
    let h = f[0] * u[1] - f[1] * u[0];
    KleusbergWork { f, u, g, h, discriminant: g.dot(&g) - h.dot(&h) }
}

/// The two unit directions (G×H ± G·√(G·G − H·H)) / (G·G); `None` when the
/// discriminant is negative.
pub fn candidate_directions(work: &KleusbergWork) -> Option<[Point; 2]> {
    if !(work.discriminant >= 0.0) {
        return None;
    }
    let gg = work.g.dot(&work.g);
    let along = work.g.cross(&work.h);
    let across = work.g * work.discriminant.sqrt();
    Some([(along + across) / gg, (along - across) / gg])
}

/// Range from the reference buoy along `direction`, evaluated through each
/// of the three hyperboloids.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeEstimate {
    /// s_0 from the best-conditioned equation, meters.
    pub range: f64,
    /// 1-based index of the buoy whose equation was used.
    pub index: usize,
    /// Largest disagreement between the chosen value and the others.
    pub spread: f64,
    pub denominators: [f64; 3],
}

/// Roundoff floor for the cross-index check. A spurious root can sit
/// hundreds of kilometres out, where an absolute tolerance in millimetres
/// is below what double precision resolves.
pub const RELATIVE_SPREAD: f64 = 1e-9;

pub fn range_along(diffs: &DiffSet, direction: &Point, cfg: &SolverConfig) -> Option<RangeEstimate> {
    let b = diffs.baselines();
    let d = diffs.range_differences();
    let e = diffs.directions();
    let denominators = [0, 1, 2].map(|i| d[i] + b[i] * direction.dot(&e[i]));
    let ranges = [0, 1, 2].map(|i| 0.5 * (b[i] * b[i] - d[i] * d[i]) / denominators[i]);
    let best = (0..3).max_by(|&i, &j| denominators[i].abs().total_cmp(&denominators[j].abs()))?;
    if !(denominators[best].abs() >= cfg.denominator_tolerance) {
        return None;
    }
    let spread = (0..3)
        .filter(|&i| denominators[i].abs() >= cfg.denominator_tolerance)
        .map(|i| (ranges[i] - ranges[best]).abs())
        .fold(0.0, f64::max);
    Some(RangeEstimate { range: ranges[best], index: best + 1, spread, denominators })
}

/// Both closed-form solutions, before choosing the underwater one.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePair {
    pub directions: [Point; 2],
    pub ranges: [RangeEstimate; 2],
    pub positions: [Point; 2],
    /// Norm of [`residuals`] at each position.
    pub residual_norms: [f64; 2],
    pub work: KleusbergWork,
}

pub fn kleusberg_solve(
    diffs: &DiffSet,
    reference_position: &Point,
    cfg: &SolverConfig,
) -> Result<CandidatePair, SolveError> {
    diffs.check_realizable()?;
    let e = diffs.directions();
    let span = e[0].cross(&e[1]).norm().max(e[1].cross(&e[2]).norm()).max(e[0].cross(&e[2]).norm());
    if span < 1e-9 {
        return Err(SolveError::DegenerateGeometry("buoys are collinear".into()));
    }
    let work = kleusberg_work(diffs);
    let gg = work.g.dot(&work.g);
    if !(gg > 0.0) || !gg.is_finite() {
        return Err(SolveError::DegenerateGeometry(format!("F1 and F2 are parallel (|G|^2 = {gg:e})")));
    }
    let directions =
        candidate_directions(&work).ok_or(SolveError::NoRealSolution { discriminant: work.discriminant })?;
    let mut ranges = Vec::with_capacity(2);
    for (candidate, direction) in directions.iter().enumerate() {
        let estimate =
            range_along(diffs, direction, cfg).ok_or(SolveError::SingularDenominator { candidate: candidate + 1 })?;
        if estimate.spread > cfg.consistency_tolerance.max(RELATIVE_SPREAD * estimate.range.abs()) {
            return Err(SolveError::InconsistentRanges { candidate: candidate + 1, spread: estimate.spread });
        }
        ranges.push(estimate);
    }
    let ranges = [ranges[0], ranges[1]];
    let positions = [0, 1].map(|k| reference_position + directions[k] * ranges[k].range);
    let residual_norms = positions.map(|p| norm3(&residuals(&p, diffs, reference_position)));
    Ok(CandidatePair { directions, ranges, positions, residual_norms, work })
}

fn norm3(r: &[f64; 3]) -> f64 {
    r.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Keeps candidates with non-negative range between the surface plane and
/// `max_depth` below it. When both qualify, the smaller residual wins and
/// an exact tie goes to the deeper one.
pub fn select_underwater(pair: &CandidatePair, cfg: &SolverConfig) -> Result<Point, SolveError> {
    select_candidate(pair, cfg).map(|k| pair.positions[k])
}

/// Index (0 or 1) of the candidate [`select_underwater`] returns.
pub fn select_candidate(pair: &CandidatePair, cfg: &SolverConfig) -> Result<usize, SolveError> {
    let eligible: Vec<usize> = (0..2)
        .filter(|&k| {
            let z = pair.positions[k].z;
            pair.ranges[k].range >= 0.0 && z < cfg.surface_plane_up && z >= cfg.surface_plane_up - cfg.max_depth
        })
        .collect();
    match eligible.as_slice() {
        [] => Err(SolveError::NoUnderwaterSolution { surface: cfg.surface_plane_up, max_depth: cfg.max_depth }),
        [only] => Ok(*only),
        _ => {
            let (r0, r1) = (pair.residual_norms[0], pair.residual_norms[1]);
            Ok(if (r0 - r1).abs() > cfg.residual_tolerance {
                if r0 < r1 {
                    0
                } else {
                    1
                }
            } else if pair.positions[0].z <= pair.positions[1].z {
                0
            } else {
                1
            })
        }
    }
}

/// (|X − R_i| − |X − R_0|) − d_0i for each non-reference buoy.
pub fn residuals(x: &Point, diffs: &DiffSet, reference_position: &Point) -> [f64; 3] {
    let to_reference = (x - reference_position).norm();
    let d = diffs.range_differences();
    let offsets = diffs.offsets();
    [0, 1, 2].map(|i| ((x - (reference_position + offsets[i])).norm() - to_reference) - d[i])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumericalSolution {
    pub position: Point,
    pub iterations: usize,
    /// Norm of the last update, meters.
    pub last_step: f64,
    pub residual_norm: f64,
    /// Whether any step needed the damping fallback.
    pub damped: bool,
}

/// Starting Levenberg–Marquardt damping, relative to the largest diagonal
/// entry of the normal matrix.
const INITIAL_DAMPING: f64 = 1e-2;

/// Gauss–Newton on the three range-difference residuals, globalized with
/// Levenberg–Marquardt damping: the damping shrinks towards zero as steps
/// succeed, so the final iterations are plain Gauss–Newton. An underwater
/// start keeps every iterate below the surface plane so the iteration cannot
/// settle on the mirror solution above the buoys. Accepted steps carry a
/// geodesic-acceleration correction, which keeps the iteration moving along
/// the curved, poorly conditioned valleys of shallow or near-coplanar fixes.
pub fn numerical_solve(
    diffs: &DiffSet,
    reference_position: &Point,
    initial: &Point,
    cfg: &SolverConfig,
) -> Result<NumericalSolution, SolveError> {
    if !initial.iter().all(|c| c.is_finite()) {
        return Err(SolveError::InvalidObservations("initial guess is not finite".into()));
    }
    let stay_underwater = initial.z < cfg.surface_plane_up;
    let cost = |x: &Point| {
        let r = residuals(x, diffs, reference_position);
        r.iter().map(|v| v * v).sum::<f64>()
    };
    let mut x = *initial;
    let mut damped = false;
    let mut step_norm = f64::INFINITY;
    let mut mu: Option<f64> = None;
    let mut growth = 2.0;
    for iteration in 1..=cfg.max_iterations {
        let (jacobian, r) = linearize(&x, diffs, reference_position).ok_or_else(|| {
            SolveError::SingularJacobian(format!("iterate coincides with a buoy at iteration {iteration}"))
        })?;
        let normal = jacobian.transpose() * jacobian;
        let gradient = jacobian.transpose() * r;
        let singular_values = normal.singular_values();
        let rank_deficient = !(singular_values.min() > 1e-12 * singular_values.max());
        let floor = if rank_deficient {
            damped = true;
            cfg.damping.ok_or_else(|| {
                SolveError::SingularJacobian(format!("normal equations are rank-deficient at iteration {iteration}"))
            })?
        } else {
            0.0
        };
        let current = cost(&x);
        let mu_now = *mu.get_or_insert(INITIAL_DAMPING * normal.diagonal().max());
        let system = (normal + Matrix3::identity() * (mu_now + floor)).cholesky().ok_or_else(|| {
            SolveError::SingularJacobian(format!("normal equations not positive definite at iteration {iteration}"))
        })?;
        let step = system.solve(&-gradient);
        if !step.iter().all(|c| c.is_finite()) {
            return Err(SolveError::SingularJacobian(format!("non-finite step at iteration {iteration}")));
        }
        step_norm = step.norm();
        // a heavily damped step can be tiny far from the solution, so the
        // stopping test uses the undamped step
        let converged = step_norm < cfg.residual_tolerance
            && (normal + Matrix3::identity() * floor)
                .cholesky()
                .map(|c| c.solve(&-gradient).norm() < cfg.residual_tolerance)
                .unwrap_or(true);
        if converged {
            x += step;
            return Ok(NumericalSolution {
                position: x,
                iterations: iteration,
                last_step: step_norm,
                residual_norm: cost(&x).sqrt(),
                damped,
            });
        }
        let trial = x + step + geodesic_correction(&x, &step, &jacobian, &r, &system, diffs, reference_position);
        let admissible = !stay_underwater || trial.z < cfg.surface_plane_up;
        let predicted = -(step.dot(&gradient) * 2.0 + step.dot(&(normal * step)));
        let gain = (current - cost(&trial)) / predicted;
        if admissible && predicted > 0.0 && gain > 0.0 {
            x = trial;
            mu = Some(mu_now * (1.0f64 / 10.0).max(1.0 - (2.0 * gain - 1.0).powi(3)));
            growth = 2.0;
        } else {
            mu = Some(mu_now * growth);
            growth *= 2.0;
        }
    }
    Err(SolveError::NonConvergence { iterations: cfg.max_iterations, step: step_norm })
}

/// Second-order correction along the step: the residual curvature is taken
/// by finite differences and fed through the same damped normal equations.
/// It is dropped when large compared with the step, where the local
/// quadratic model cannot be trusted.
fn geodesic_correction(
    x: &Point,
    step: &Vector3<f64>,
    jacobian: &Matrix3<f64>,
    r: &Vector3<f64>,
    system: &Cholesky<f64, U3>,
    diffs: &DiffSet,
    reference_position: &Point,
) -> Vector3<f64> {
    const PROBE: f64 = 0.1;
    let probe = Vector3::from(residuals(&(x + step * PROBE), diffs, reference_position));
    let curvature = ((probe - r) / PROBE - jacobian * step) * (2.0 / PROBE);
    let correction = system.solve(&-(jacobian.transpose() * curvature)) * 0.5;
    if correction.iter().all(|c| c.is_finite()) && 4.0 * correction.norm() <= step.norm() {
        correction
    } else {
        Vector3::zeros()
    }
}

fn linearize(x: &Point, diffs: &DiffSet, reference_position: &Point) -> Option<(Matrix3<f64>, Vector3<f64>)> {
    let offsets = diffs.offsets();
    let from_reference = x - reference_position;
    let reference_range = from_reference.norm();
    if reference_range == 0.0 {
        return None;
    }
    let mut jacobian = Matrix3::zeros();
    for (i, offset) in offsets.iter().enumerate() {
        let from_buoy = x - (reference_position + offset);
        let range = from_buoy.norm();
        if range == 0.0 {
            return None;
        }
        let row = from_buoy / range - from_reference / reference_range;
        jacobian.set_row(i, &row.transpose());
    }
    Some((jacobian, Vector3::from(residuals(x, diffs, reference_position))))
}
