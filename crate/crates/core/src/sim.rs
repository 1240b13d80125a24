//! Fixed-timestep race simulation on a closed track.
//!
//! Four cars race: the evaluator (car 0) and three opponents. Every car runs
//! the same checkpoint controller: turn toward the next checkpoint at a
//! bounded rate and accelerate toward its top speed, easing off while the
//! heading error is large. Per-step evaluator telemetry is averaged into
//! fixed-length windows.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::track::{GridPos, TileKind, Track};

pub const MAX_OPPONENTS: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("track has {0} checkpoints, at least 2 are needed")]
    DegenerateTrack(usize),
    #[error("track is not a closed circuit")]
    InfeasibleTrack,
    #[error("feature `{0}` cannot be computed from the simulation state")]
    SchemaMismatch(String),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("cannot average an empty window")]
    EmptyWindow,
    #[error("failed to write trace: {0}")]
    Io(String),
}

/// One telemetry channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Feature {
    Speed,
    Acceleration,
    HeadingChangeRate,
    Score,
    LapFraction,
    CheckpointDistance,
    OpponentDistance(usize),
    Rank,
    OffTrack,
    Collisions,
    PieceStraight,
    PieceCurve,
    PieceLoop,
    PieceRamp,
    PieceStart,
}

impl Feature {
    pub fn name(&self) -> String {
        match self {
            Feature::Speed => "speed".into(),
            Feature::Acceleration => "acceleration".into(),
            Feature::HeadingChangeRate => "heading_change_rate".into(),
            Feature::Score => "score".into(),
            Feature::LapFraction => "lap_fraction".into(),
            Feature::CheckpointDistance => "checkpoint_distance".into(),
            Feature::OpponentDistance(i) => format!("opponent_distance_{i}"),
            Feature::Rank => "rank".into(),
            Feature::OffTrack => "off_track".into(),
            Feature::Collisions => "collisions".into(),
            Feature::PieceStraight => "piece_straight".into(),
            Feature::PieceCurve => "piece_curve".into(),
            Feature::PieceLoop => "piece_loop".into(),
            Feature::PieceRamp => "piece_ramp".into(),
            Feature::PieceStart => "piece_start".into(),
        }
    }

    fn value(&self, s: &StepState) -> Result<f64, SimError> {
        let one_hot = |hit: bool| if hit { 1.0 } else { 0.0 };
        Ok(match *self {
            Feature::Speed => s.speed,
            Feature::Acceleration => s.acceleration,
            Feature::HeadingChangeRate => s.heading_change_rate,
            Feature::Score => s.score,
            Feature::LapFraction => s.lap_fraction,
            Feature::CheckpointDistance => s.checkpoint_distance,
            Feature::OpponentDistance(i) => {
                if i >= s.opponents {
                    return Err(SimError::SchemaMismatch(self.name()));
                }
                s.opponent_distances[i]
            }
            Feature::Rank => s.rank,
            Feature::OffTrack => one_hot(s.off_track),
            Feature::Collisions => s.collision_delta as f64,
            Feature::PieceStraight => one_hot(s.piece == TileKind::Straight),
            Feature::PieceCurve => one_hot(s.piece.is_turn()),
            Feature::PieceLoop => one_hot(s.piece == TileKind::Loop),
            Feature::PieceRamp => one_hot(s.piece == TileKind::Ramp),
            Feature::PieceStart => one_hot(s.piece == TileKind::StartFinish),
        })
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Feature {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some(i) = s.strip_prefix("opponent_distance_") {
            return i
                .parse()
                .map(Feature::OpponentDistance)
                .map_err(|_| SimError::SchemaMismatch(s.to_string()));
        }
        Ok(match s {
            "speed" => Feature::Speed,
            "acceleration" => Feature::Acceleration,
            "heading_change_rate" => Feature::HeadingChangeRate,
            "score" => Feature::Score,
            "lap_fraction" => Feature::LapFraction,
            "checkpoint_distance" => Feature::CheckpointDistance,
            "rank" => Feature::Rank,
            "off_track" => Feature::OffTrack,
            "collisions" => Feature::Collisions,
            "piece_straight" => Feature::PieceStraight,
            "piece_curve" => Feature::PieceCurve,
            "piece_loop" => Feature::PieceLoop,
            "piece_ramp" => Feature::PieceRamp,
            "piece_start" => Feature::PieceStart,
            other => return Err(SimError::SchemaMismatch(other.to_string())),
        })
    }
}

/// Ordered telemetry channels shared by a corpus and the simulator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureSchema {
    features: Vec<Feature>,
}

impl Default for FeatureSchema {
    fn default() -> Self {
        let mut features = vec![
            Feature::Speed,
            Feature::Acceleration,
            Feature::HeadingChangeRate,
            Feature::Score,
            Feature::LapFraction,
            Feature::CheckpointDistance,
        ];
        features.extend((0..MAX_OPPONENTS).map(Feature::OpponentDistance));
        features.extend([
            Feature::Rank,
            Feature::OffTrack,
            Feature::Collisions,
            Feature::PieceStraight,
            Feature::PieceCurve,
            Feature::PieceLoop,
            Feature::PieceRamp,
            Feature::PieceStart,
        ]);
        FeatureSchema { features }
    }
}

impl FeatureSchema {
    pub fn new(features: Vec<Feature>) -> Self {
        FeatureSchema { features }
    }

    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self, SimError> {
        let features = names
            .iter()
            .map(|n| n.as_ref().parse())
            .collect::<Result<Vec<_>, _>>()?;
        Ok(FeatureSchema { features })
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn names(&self) -> Vec<String> {
        self.features.iter().map(Feature::name).collect()
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn index_of(&self, feature: Feature) -> Option<usize> {
        self.features.iter().position(|f| *f == feature)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub timestep_hz: u32,
    pub max_laps: u32,
    pub max_seconds: u32,
    pub window_seconds: u32,
    /// Top speed in cells per second.
    pub max_speed: f64,
    pub acceleration: f64,
    pub max_turn_rate_deg_per_s: f64,
    pub off_track_speed_factor: f64,
    /// Speed factor while on a loop or a ramp.
    pub loop_speed_factor: f64,
    pub collision_penalty_seconds: f64,
    pub collision_radius: f64,
    pub checkpoint_radius: f64,
    /// Top-speed multiplier of the evaluator car.
    pub evaluator_speed_multiplier: f64,
    pub opponent_speed_multipliers: Vec<f64>,
    pub checkpoint_increment: u32,
    /// Standard deviation of per-step steering noise; zero disables it.
    pub steering_noise_deg: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            timestep_hz: 30,
            max_laps: 3,
            max_seconds: 120,
            window_seconds: 3,
            max_speed: 2.0,
            acceleration: 1.5,
            max_turn_rate_deg_per_s: 240.0,
            off_track_speed_factor: 0.5,
            loop_speed_factor: 0.6,
            collision_penalty_seconds: 0.5,
            collision_radius: 0.25,
            checkpoint_radius: 0.35,
            evaluator_speed_multiplier: 1.0,
            opponent_speed_multipliers: vec![0.95, 1.0, 1.05],
            checkpoint_increment: 1,
            steering_noise_deg: 0.0,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        if self.timestep_hz == 0 || self.window_seconds == 0 || self.max_seconds == 0 {
            return bad("timestep_hz, window_seconds and max_seconds must be positive");
        }
        if self.max_laps == 0 {
            return bad("max_laps must be positive");
        }
        if self.opponent_speed_multipliers.len() > MAX_OPPONENTS {
            return bad("at most three opponents are supported");
        }
        let finite = [
            self.max_speed,
            self.acceleration,
            self.max_turn_rate_deg_per_s,
            self.off_track_speed_factor,
            self.loop_speed_factor,
            self.collision_penalty_seconds,
            self.collision_radius,
            self.checkpoint_radius,
            self.evaluator_speed_multiplier,
            self.steering_noise_deg,
        ];
        if finite.iter().any(|v| !v.is_finite() || *v < 0.0)
            || self
                .opponent_speed_multipliers
                .iter()
                .any(|v| !v.is_finite() || *v < 0.0)
        {
            return bad("tunables must be finite and non-negative");
        }
        if self.checkpoint_radius == 0.0 {
            return bad("checkpoint_radius must be positive");
        }
        Ok(())
    }

    pub fn steps_per_window(&self) -> usize {
        (self.window_seconds * self.timestep_hz) as usize
    }

    pub fn max_steps(&self) -> usize {
        (self.max_seconds * self.timestep_hz) as usize
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.timestep_hz as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CarState {
    /// Position in cell units; cell `(x, y)` spans `[x, x+1) × [y, y+1)`.
    pub position: (f64, f64),
    pub velocity: f64,
    pub heading_angle: f64,
    pub next_checkpoint_index: usize,
    pub score: u32,
    pub lap: u32,
    pub off_track: bool,
    pub collision_count: u32,
    /// Checkpoints passed, used for race ordering.
    pub passes: u32,
    speed_multiplier: f64,
    penalty_left: f64,
}

/// Evaluator telemetry for one simulation step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepState {
    pub speed: f64,
    pub acceleration: f64,
    /// Absolute heading change in degrees per second.
    pub heading_change_rate: f64,
    pub score: f64,
    pub lap_fraction: f64,
    pub checkpoint_distance: f64,
    pub opponent_distances: [f64; MAX_OPPONENTS],
    pub opponents: usize,
    pub rank: f64,
    pub off_track: bool,
    pub collision_delta: u32,
    pub piece: TileKind,
    pub piece_index: usize,
}

impl StepState {
    /// A state at rest on a start tile, handy for building windows by hand.
    pub fn idle() -> StepState {
        StepState {
            speed: 0.0,
            acceleration: 0.0,
            heading_change_rate: 0.0,
            score: 0.0,
            lap_fraction: 0.0,
            checkpoint_distance: 0.0,
            opponent_distances: [0.0; MAX_OPPONENTS],
            opponents: MAX_OPPONENTS,
            rank: 1.0,
            off_track: false,
            collision_delta: 0,
            piece: TileKind::StartFinish,
            piece_index: 0,
        }
    }
}

/// Feature means over one window.
#[derive(Clone, Debug, PartialEq)]
pub struct TelemetryWindow {
    pub features: Vec<f64>,
    pub window_index: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateTrace {
    pub schema: FeatureSchema,
    pub windows: Vec<TelemetryWindow>,
}

impl StateTrace {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Columnar CSV: schema names then `window_index`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SimError> {
        let io = |e: csv::Error| SimError::Io(e.to_string());
        let mut w = csv::Writer::from_writer(out);
        let mut header = self.schema.names();
        header.push("window_index".into());
        w.write_record(&header).map_err(io)?;
        for win in &self.windows {
            let mut row: Vec<String> = win.features.iter().map(|v| v.to_string()).collect();
            row.push(win.window_index.to_string());
            w.write_record(&row).map_err(io)?;
        }
        w.flush().map_err(|e| SimError::Io(e.to_string()))
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

/// Average per-step telemetry over one window, in schema order.
pub fn extract_features(
    steps: &[StepState],
    schema: &FeatureSchema,
    window_index: usize,
) -> Result<TelemetryWindow, SimError> {
    if steps.is_empty() {
        return Err(SimError::EmptyWindow);
    }
    let n = steps.len() as f64;
    let features = schema
        .features()
        .iter()
        .map(|f| {
            let mut sum = 0.0;
            for s in steps {
                sum += f.value(s)?;
            }
            Ok(sum / n)
        })
        .collect::<Result<Vec<_>, SimError>>()?;
    Ok(TelemetryWindow {
        features,
        window_index,
    })
}

/// Everything a simulation run produces.
#[derive(Clone, Debug, PartialEq)]
pub struct SimOutcome {
    pub trace: StateTrace,
    pub total_steps: usize,
    /// Steps averaged into each window.
    pub window_steps: Vec<usize>,
    /// Evaluator steps spent heading for each piece's checkpoint.
    pub piece_steps: Vec<usize>,
    pub evaluator: CarState,
    pub laps_completed: u32,
    pub finished: bool,
}

/// Simulate a race and return the evaluator's windowed telemetry.
pub fn simulate(track: &Track, config: &SimConfig) -> Result<StateTrace, SimError> {
    simulate_with_schema(track, config, &FeatureSchema::default()).map(|o| o.trace)
}

pub fn simulate_with_schema(
    track: &Track,
    config: &SimConfig,
    schema: &FeatureSchema,
) -> Result<SimOutcome, SimError> {
    config.validate()?;
    if !track.feasible {
        return Err(SimError::InfeasibleTrack);
    }
    let checkpoints = checkpoint_points(track);
    if checkpoints.len() < 2 {
        return Err(SimError::DegenerateTrack(checkpoints.len()));
    }
    // reject schemas the run cannot fill before doing any work
    let mut probe = StepState::idle();
    probe.opponents = config.opponent_speed_multipliers.len();
    for f in schema.features() {
        f.value(&probe)?;
    }

    let mut race = Race::new(track, config, checkpoints);
    let per_window = config.steps_per_window();
    let mut buffer: Vec<StepState> = Vec::with_capacity(per_window);
    let mut windows = Vec::new();
    let mut window_steps = Vec::new();
    let mut piece_steps = vec![0usize; track.pieces.len()];
    let mut total_steps = 0;

    while total_steps < config.max_steps() && race.cars[0].lap < config.max_laps {
        let state = race.step();
        piece_steps[state.piece_index] += 1;
        buffer.push(state);
        total_steps += 1;
        if buffer.len() == per_window {
            windows.push(extract_features(&buffer, schema, windows.len())?);
            window_steps.push(buffer.len());
            buffer.clear();
        }
    }
    if !buffer.is_empty() {
        windows.push(extract_features(&buffer, schema, windows.len())?);
        window_steps.push(buffer.len());
    }

    let evaluator = race.cars[0].clone();
    Ok(SimOutcome {
        trace: StateTrace {
            schema: schema.clone(),
            windows,
        },
        total_steps,
        window_steps,
        piece_steps,
        laps_completed: evaluator.lap,
        finished: evaluator.lap >= config.max_laps,
        evaluator,
    })
}

/// Checkpoint positions: the midpoint of each piece's exit edge.
pub fn checkpoint_points(track: &Track) -> Vec<(f64, f64)> {
    track
        .pieces
        .iter()
        .map(|p| {
            let (dx, dy) = p.exit_heading.delta();
            (
                p.checkpoint.x as f64 + 0.5 + 0.5 * dx as f64,
                p.checkpoint.y as f64 + 0.5 + 0.5 * dy as f64,
            )
        })
        .collect()
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    } else if a < -PI {
        a += 2.0 * PI;
    }
    a
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

struct Race<'a> {
    track: &'a Track,
    config: &'a SimConfig,
    checkpoints: Vec<(f64, f64)>,
    cars: Vec<CarState>,
    contact: Vec<bool>,
    noise: Option<(ChaCha8Rng, Normal<f64>)>,
}

impl<'a> Race<'a> {
    fn new(track: &'a Track, config: &'a SimConfig, checkpoints: Vec<(f64, f64)>) -> Self {
        let start = track.start();
        let theta = start.entry_heading.angle();
        let centre = (start.cells[0].x as f64 + 0.5, start.cells[0].y as f64 + 0.5);
        // grid slots as (behind, lateral) offsets from the start tile centre
        let slots = [(0.0, -0.15), (0.3, 0.15), (0.6, -0.15), (0.9, 0.15)];
        let multipliers = std::iter::once(config.evaluator_speed_multiplier)
            .chain(config.opponent_speed_multipliers.iter().copied());
        let cars: Vec<CarState> = multipliers
            .zip(slots)
            .map(|(m, (back, side))| CarState {
                position: (
                    centre.0 - back * theta.cos() - side * theta.sin(),
                    centre.1 - back * theta.sin() + side * theta.cos(),
                ),
                velocity: 0.0,
                heading_angle: theta,
                next_checkpoint_index: 1 % checkpoints.len(),
                score: 0,
                lap: 0,
                off_track: false,
                collision_count: 0,
                passes: 0,
                speed_multiplier: m,
                penalty_left: 0.0,
            })
            .collect();
        let n = cars.len();
        let noise = (config.steering_noise_deg > 0.0).then(|| {
            (
                ChaCha8Rng::seed_from_u64(config.seed),
                Normal::new(0.0, config.steering_noise_deg.to_radians())
                    .expect("validated non-negative deviation"),
            )
        });
        Race {
            track,
            config,
            checkpoints,
            cars,
            contact: vec![false; n * n],
            noise,
        }
    }

    fn on_track(&self, pos: (f64, f64)) -> bool {
        let cell = GridPos::new(pos.0.floor() as i32, pos.1.floor() as i32);
        self.track.grid.is_occupied(cell)
    }

    fn progress(&self, car: &CarState) -> f64 {
        let target = self.checkpoints[car.next_checkpoint_index];
        car.passes as f64 - dist(car.position, target).min(1.0) * 0.5
    }

    fn step(&mut self) -> StepState {
        let dt = self.config.dt();
        let max_turn = self.config.max_turn_rate_deg_per_s.to_radians() * dt;
        let before = (self.cars[0].velocity, self.cars[0].heading_angle);

        for i in 0..self.cars.len() {
            let jitter = match &mut self.noise {
                Some((rng, normal)) => normal.sample(rng),
                None => 0.0,
            };
            let on_track = self.on_track(self.cars[i].position);
            let car = &mut self.cars[i];
            let target = self.checkpoints[car.next_checkpoint_index];
            let desired = (target.1 - car.position.1).atan2(target.0 - car.position.0);
            let error = wrap_angle(desired - car.heading_angle);
            let turn = (error + jitter).clamp(-max_turn, max_turn);
            car.heading_angle = wrap_angle(car.heading_angle + turn);

            let piece = self.track.pieces[car.next_checkpoint_index].kind;
            let mut top = self.config.max_speed * car.speed_multiplier;
            if !on_track {
                top *= self.config.off_track_speed_factor;
            }
            if piece.is_event() {
                top *= self.config.loop_speed_factor;
            }
            if car.penalty_left > 0.0 {
                top *= 0.5;
                car.penalty_left = (car.penalty_left - dt).max(0.0);
            }
            top *= error.cos().max(0.3);
            let dv = (top - car.velocity).clamp(
                -2.0 * self.config.acceleration * dt,
                self.config.acceleration * dt,
            );
            car.velocity = (car.velocity + dv).max(0.0);
            car.position.0 += car.velocity * dt * car.heading_angle.cos();
            car.position.1 += car.velocity * dt * car.heading_angle.sin();
            car.off_track = !on_track;

            if dist(car.position, target) < self.config.checkpoint_radius {
                car.score += self.config.checkpoint_increment;
                car.passes += 1;
                if car.next_checkpoint_index == 0 {
                    car.lap += 1;
                }
                car.next_checkpoint_index =
                    (car.next_checkpoint_index + 1) % self.checkpoints.len();
            }
        }

        let collisions = self.resolve_contacts();
        self.evaluator_state(before, collisions, dt)
    }

    fn resolve_contacts(&mut self) -> u32 {
        let n = self.cars.len();
        let mut evaluator_hits = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                let touching = dist(self.cars[i].position, self.cars[j].position)
                    < self.config.collision_radius;
                let was = self.contact[i * n + j];
                if touching && !was {
                    for k in [i, j] {
                        self.cars[k].collision_count += 1;
                        self.cars[k].penalty_left = self.config.collision_penalty_seconds;
                    }
                    if i == 0 {
                        evaluator_hits += 1;
                    }
                }
                self.contact[i * n + j] = touching;
            }
        }
        evaluator_hits
    }

    fn evaluator_state(&self, before: (f64, f64), collisions: u32, dt: f64) -> StepState {
        let car = &self.cars[0];
        let mut opponent_distances = [0.0; MAX_OPPONENTS];
        for (slot, other) in opponent_distances.iter_mut().zip(&self.cars[1..]) {
            *slot = dist(car.position, other.position);
        }
        let mine = self.progress(car);
        let ahead = self.cars[1..]
            .iter()
            .filter(|c| self.progress(c) > mine)
            .count();
        let n_cp = self.checkpoints.len();
        StepState {
            speed: car.velocity,
            acceleration: (car.velocity - before.0) / dt,
            heading_change_rate: wrap_angle(car.heading_angle - before.1).abs().to_degrees() / dt,
            score: car.score as f64,
            lap_fraction: car.passes as f64 / n_cp as f64,
            checkpoint_distance: dist(car.position, self.checkpoints[car.next_checkpoint_index]),
            opponent_distances,
            opponents: self.cars.len() - 1,
            rank: 1.0 + ahead as f64,
            off_track: car.off_track,
            collision_delta: collisions,
            piece: self.track.pieces[car.next_checkpoint_index].kind,
            piece_index: car.next_checkpoint_index,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closure::close_circuit;
    use crate::track::{decode, Genome, GridConfig};
    use TileKind::*;

    pub(crate) fn closed(kinds: &[TileKind]) -> Track {
        let open = decode(
            &Genome::new(kinds.to_vec()).unwrap(),
            &GridConfig::default(),
        )
        .unwrap();
        close_circuit(&open).unwrap()
    }

    #[test]
    fn square_circuit_finishes_three_laps() {
        let track = closed(&[CurveRight, CurveRight]);
        let config = SimConfig::default();
        let out = simulate_with_schema(&track, &config, &FeatureSchema::default()).unwrap();
        assert!(out.finished);
        assert_eq!(out.laps_completed, 3);
        assert!(out.total_steps < config.max_steps());
        assert_eq!(out.trace.len(), out.total_steps.div_ceil(90));
        assert_eq!(out.window_steps.iter().sum::<usize>(), out.total_steps);
    }

    #[test]
    fn stalled_cars_run_out_the_clock() {
        let track = closed(&[Straight, Loop, CurveRight]);
        let config = SimConfig {
            max_speed: 1e-6,
            ..SimConfig::default()
        };
        let out = simulate_with_schema(&track, &config, &FeatureSchema::default()).unwrap();
        assert_eq!(out.total_steps, 3600);
        assert_eq!(out.trace.windows.last().unwrap().window_index, 39);
        assert!(!out.finished);
    }

    #[test]
    fn simulation_is_deterministic() {
        let track = closed(&[Loop, CurveRight, Ramp, CurveRight, Straight]);
        let config = SimConfig {
            steering_noise_deg: 2.0,
            seed: 11,
            ..SimConfig::default()
        };
        let a = simulate(&track, &config).unwrap();
        let b = simulate(&track, &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_csv_string(), b.to_csv_string());
    }

    #[test]
    fn open_track_is_rejected() {
        let open = decode(
            &Genome::new(vec![Straight]).unwrap(),
            &GridConfig::default(),
        )
        .unwrap();
        assert_eq!(
            simulate(&open, &SimConfig::default()),
            Err(SimError::InfeasibleTrack)
        );
    }

    #[test]
    fn window_means() {
        let schema = FeatureSchema::new(vec![Feature::Speed, Feature::Score]);
        let constant: Vec<StepState> = (0..90)
            .map(|_| StepState {
                speed: 5.0,
                ..StepState::idle()
            })
            .collect();
        assert_eq!(
            extract_features(&constant, &schema, 0).unwrap().features[0],
            5.0
        );

        let ramp: Vec<StepState> = (0..90)
            .map(|i| StepState {
                speed: i as f64 * 9.0 / 89.0,
                ..StepState::idle()
            })
            .collect();
        let mean = extract_features(&ramp, &schema, 0).unwrap().features[0];
        assert!((mean - 4.5).abs() < 1e-12);

        // score 2, 2, 4 over a three-step window
        let toy: Vec<StepState> = [2.0, 2.0, 4.0]
            .iter()
            .map(|&s| StepState {
                score: s,
                ..StepState::idle()
            })
            .collect();
        let w = extract_features(&toy, &schema, 3).unwrap();
        assert!((w.features[1] - 8.0 / 3.0).abs() < 1e-12);
        assert_eq!(w.window_index, 3);
    }

    #[test]
    fn schema_mismatch_for_missing_opponent() {
        let schema = FeatureSchema::new(vec![Feature::OpponentDistance(2)]);
        let step = StepState {
            opponents: 1,
            ..StepState::idle()
        };
        assert_eq!(
            extract_features(&[step], &schema, 0),
            Err(SimError::SchemaMismatch("opponent_distance_2".into()))
        );
        let track = closed(&[CurveRight, CurveRight]);
        let config = SimConfig {
            opponent_speed_multipliers: vec![1.0],
            ..SimConfig::default()
        };
        assert!(matches!(
            simulate_with_schema(&track, &config, &schema),
            Err(SimError::SchemaMismatch(_))
        ));
    }

    #[test]
    fn schema_names_round_trip() {
        let schema = FeatureSchema::default();
        assert_eq!(FeatureSchema::from_names(&schema.names()).unwrap(), schema);
        assert!(FeatureSchema::from_names(&["speed", "vibes"]).is_err());
    }

    #[test]
    fn csv_header_lists_schema() {
        let track = closed(&[CurveRight, CurveRight]);
        let csv = simulate(&track, &SimConfig::default())
            .unwrap()
            .to_csv_string();
        let header = csv.lines().next().unwrap();
        assert!(header.starts_with("speed,acceleration,"));
        assert!(header.ends_with(",window_index"));
    }
}
