//! Trace similarity, rewards, accuracy and expressive range statistics.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::track::{tile_counts, Track};

/// Reward given to tracks that cannot be played.
pub const INFEASIBLE_REWARD: f64 = -1000.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("trace is empty")]
    EmptyTrace,
    #[error("need at least 2 samples, got {0}")]
    InsufficientSamples(usize),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
}

/// Target arousal pattern.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Maximise,
    Minimise,
    Fluctuating,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [
        Scenario::Maximise,
        Scenario::Minimise,
        Scenario::Fluctuating,
    ];

    /// Target value at normalized time `t ∈ [0, 1]`.
    pub fn value_at(self, t: f64) -> f64 {
        match self {
            Scenario::Maximise => 1.0,
            Scenario::Minimise => 0.0,
            Scenario::Fluctuating => {
                if !(1.0 / 3.0..2.0 / 3.0).contains(&t) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Scenario::Maximise => "max",
            Scenario::Minimise => "min",
            Scenario::Fluctuating => "fluct",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Scenario {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "max" | "maximise" | "maximize" => Ok(Scenario::Maximise),
            "min" | "minimise" | "minimize" => Ok(Scenario::Minimise),
            "fluct" | "fluctuating" => Ok(Scenario::Fluctuating),
            other => Err(EvalError::UnknownScenario(other.to_string())),
        }
    }
}

/// Target trace sampled at the centres of `n` equal time windows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetTrace {
    pub values: Vec<f64>,
    pub scenario: Scenario,
}

impl TargetTrace {
    pub fn sample(scenario: Scenario, n: usize) -> TargetTrace {
        let values = (0..n)
            .map(|i| scenario.value_at((i as f64 + 0.5) / n as f64))
            .collect();
        TargetTrace { values, scenario }
    }
}

fn sample_time(i: usize, n: usize) -> f64 {
    if n == 1 {
        0.0
    } else {
        i as f64 / (n - 1) as f64
    }
}

/// Piecewise-linear interpolation of `trace` laid out over `[0, 1]`.
fn interpolate(trace: &[f64], t: f64) -> f64 {
    let n = trace.len();
    if n == 1 {
        return trace[0];
    }
    let x = t * (n - 1) as f64;
    let i = (x.floor() as usize).min(n - 2);
    let frac = x - i as f64;
    trace[i] + (trace[i + 1] - trace[i]) * frac
}

/// Area enclosed between two traces over normalized time.
///
/// Both traces are laid over `[0, 1]` at their own sample points and
/// compared on the union of those points. Within each interval the
/// difference is linear, so the absolute area is exact, including intervals
/// where the traces cross.
pub fn area_between(a: &[f64], b: &[f64]) -> Result<f64, EvalError> {
    if a.is_empty() || b.is_empty() {
        return Err(EvalError::EmptyTrace);
    }
    let mut times: Vec<f64> = (0..a.len())
        .map(|i| sample_time(i, a.len()))
        .chain((0..b.len()).map(|i| sample_time(i, b.len())))
        .chain([0.0, 1.0])
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();

    let diff = |t: f64| interpolate(a, t) - interpolate(b, t);
    let mut area = 0.0;
    let mut prev_t = times[0];
    let mut prev_d = diff(prev_t);
    for &t in &times[1..] {
        let d = diff(t);
        let width = t - prev_t;
        area += if prev_d * d >= 0.0 {
            0.5 * (prev_d.abs() + d.abs()) * width
        } else {
            // two triangles either side of the crossing
            0.5 * (prev_d * prev_d + d * d) / (prev_d.abs() + d.abs()) * width
        };
        prev_t = t;
        prev_d = d;
    }
    Ok(area)
}

/// Negative trace distance for playable tracks, the fixed penalty otherwise.
pub fn reward(generated: &[f64], target: &[f64], feasible: bool) -> Result<f64, EvalError> {
    if !feasible {
        return Ok(INFEASIBLE_REWARD);
    }
    Ok(-area_between(generated, target)?)
}

/// Percentage of windows where generated and target agree on the direction
/// of arousal change. Each generated window is compared with the target
/// window containing its centre; outputs of exactly 0.5 count as
/// disagreement.
pub fn accuracy(generated: &[f64], target: &[f64]) -> Result<f64, EvalError> {
    if generated.is_empty() || target.is_empty() {
        return Err(EvalError::EmptyTrace);
    }
    let n = generated.len();
    let m = target.len();
    let agree = generated
        .iter()
        .enumerate()
        .filter(|(i, &g)| {
            // window centres map onto the target's windows
            let j = ((*i as f64 + 0.5) * m as f64 / n as f64).floor() as usize;
            let t = target[j.min(m - 1)];
            (g > 0.5 && t > 0.5) || (g < 0.5 && t < 0.5)
        })
        .count();
    Ok(100.0 * agree as f64 / n as f64)
}

/// Mean and 95% normal-approximation half width.
pub fn confidence_interval_95(samples: &[f64]) -> Result<(f64, f64), EvalError> {
    let n = samples.len();
    if n < 2 {
        return Err(EvalError::InsufficientSamples(n));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok((mean, 1.96 * var.sqrt() / (n as f64).sqrt()))
}

/// Whether two `(mean, half_width)` intervals overlap.
pub fn intervals_overlap(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 - a.1 <= b.0 + b.1 && b.0 - b.1 <= a.0 + a.1
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    pub half_width: f64,
}

impl From<(f64, f64)> for MeanCi {
    fn from((mean, half_width): (f64, f64)) -> Self {
        MeanCi { mean, half_width }
    }
}

/// Tile usage statistics for one scenario's tracks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RangeSummary {
    pub tracks: usize,
    pub simple_tiles: MeanCi,
    pub event_tiles: MeanCi,
    pub closure_length: MeanCi,
}

pub type ExpressiveRange = BTreeMap<Scenario, RangeSummary>;

/// Summarise tile usage of generated tracks per scenario.
pub fn expressive_range(tracks: &[(Scenario, &Track)]) -> Result<ExpressiveRange, EvalError> {
    let mut grouped: BTreeMap<Scenario, Vec<&Track>> = BTreeMap::new();
    for (s, t) in tracks {
        grouped.entry(*s).or_default().push(t);
    }
    grouped
        .into_iter()
        .map(|(scenario, tracks)| {
            let counts: Vec<_> = tracks.iter().map(|t| tile_counts(t)).collect();
            let stat = |f: &dyn Fn(&crate::track::TileCounts) -> usize| {
                let xs: Vec<f64> = counts.iter().map(|c| f(c) as f64).collect();
                confidence_interval_95(&xs).map(MeanCi::from)
            };
            Ok((
                scenario,
                RangeSummary {
                    tracks: counts.len(),
                    simple_tiles: stat(&|c| c.simple_tiles())?,
                    event_tiles: stat(&|c| c.event_tiles())?,
                    closure_length: stat(&|c| c.closure_length)?,
                },
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_traces_have_zero_area() {
        let a = [0.2, 0.9, 0.4, 0.4];
        assert_eq!(area_between(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn unit_box_and_triangle() {
        assert_eq!(area_between(&[1.0, 1.0, 1.0], &[0.0, 0.0]).unwrap(), 1.0);
        let ramp: Vec<f64> = (0..11).map(|i| i as f64 / 10.0).collect();
        assert!((area_between(&ramp, &[0.0]).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn crossing_is_integrated_exactly() {
        // |1 - 2t| integrates to 0.5
        assert!((area_between(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn empty_trace_is_an_error() {
        assert_eq!(area_between(&[], &[1.0]), Err(EvalError::EmptyTrace));
        assert_eq!(accuracy(&[0.2], &[]), Err(EvalError::EmptyTrace));
    }

    #[test]
    fn reward_values() {
        let t = TargetTrace::sample(Scenario::Minimise, 5);
        assert_eq!(reward(&[0.3; 5], &[0.3; 5], true).unwrap(), 0.0);
        assert_eq!(reward(&[1.0; 5], &t.values, true).unwrap(), -1.0);
        assert_eq!(reward(&[], &[], false).unwrap(), -1000.0);
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[0.9; 4], &[0.9; 4]).unwrap(), 100.0);
        let max = TargetTrace::sample(Scenario::Maximise, 6);
        assert_eq!(accuracy(&[0.4; 6], &max.values).unwrap(), 0.0);
        assert_eq!(
            accuracy(&[0.9, 0.4, 0.6, 0.2], &[1.0, 1.0, 0.0, 0.0]).unwrap(),
            50.0
        );
        assert_eq!(accuracy(&[0.5, 0.5], &[1.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn accuracy_resamples_by_nearest_sample() {
        // target [1, 0, 1] stretched over five windows -> 1 1 0 1 1
        let got = accuracy(&[0.9, 0.9, 0.1, 0.9, 0.9], &[1.0, 0.0, 1.0]).unwrap();
        assert_eq!(got, 100.0);
    }

    #[test]
    fn fluctuating_target_thirds() {
        let t = TargetTrace::sample(Scenario::Fluctuating, 9);
        assert_eq!(t.values, vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        assert_eq!(
            TargetTrace::sample(Scenario::Fluctuating, 3).values,
            vec![1.0, 0.0, 1.0]
        );
    }

    #[test]
    fn confidence_intervals() {
        let (m, h) = confidence_interval_95(&[3.0; 10]).unwrap();
        assert_eq!((m, h), (3.0, 0.0));
        let (m, h) = confidence_interval_95(&[0.0, 1.0]).unwrap();
        assert_eq!(m, 0.5);
        assert!((h - 0.98).abs() < 1e-12);
        assert_eq!(
            confidence_interval_95(&[1.0]),
            Err(EvalError::InsufficientSamples(1))
        );
        assert!(intervals_overlap((1.0, 0.5), (1.4, 0.1)));
        assert!(!intervals_overlap((1.0, 0.1), (1.4, 0.1)));
    }

    #[test]
    fn scenario_names_parse() {
        for s in Scenario::ALL {
            assert_eq!(s.short_name().parse::<Scenario>().unwrap(), s);
        }
        assert!("sideways".parse::<Scenario>().is_err());
    }

    fn refine(trace: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(trace.len() * 2);
        for w in trace.windows(2) {
            out.push(w[0]);
            out.push(0.5 * (w[0] + w[1]));
        }
        out.push(*trace.last().unwrap());
        out
    }

    proptest! {
        #[test]
        fn area_is_a_bounded_symmetric_distance(
            a in prop::collection::vec(0.0f64..=1.0, 1..30),
            b in prop::collection::vec(0.0f64..=1.0, 1..30),
        ) {
            let ab = area_between(&a, &b).unwrap();
            let ba = area_between(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!(ab >= 0.0 && ab <= 1.0 + 1e-12);
            prop_assert_eq!(area_between(&a, &a).unwrap(), 0.0);
        }

        #[test]
        fn area_survives_doubling_resolution(
            a in prop::collection::vec(0.0f64..=1.0, 2..30),
            b in prop::collection::vec(0.0f64..=1.0, 2..30),
        ) {
            let coarse = area_between(&a, &b).unwrap();
            let fine = area_between(&refine(&a), &refine(&b)).unwrap();
            prop_assert!((coarse - fine).abs() < 1e-9);
        }

        #[test]
        fn zero_reward_means_full_accuracy(
            a in prop::collection::vec(prop_oneof![0.0f64..0.49, 0.51f64..=1.0], 1..20),
        ) {
            prop_assert_eq!(reward(&a, &a, true).unwrap(), 0.0);
            prop_assert_eq!(accuracy(&a, &a).unwrap(), 100.0);
        }
    }

    #[test]
    fn full_accuracy_does_not_imply_zero_reward() {
        let target = [1.0; 4];
        let out = [0.6; 4];
        assert_eq!(accuracy(&out, &target).unwrap(), 100.0);
        assert!(reward(&out, &target, true).unwrap() < 0.0);
    }
}
