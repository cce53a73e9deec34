//! Test instances: piecewise-constant parameter schedules and the observed
//! streams they generate.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ObservationStream, ParamVector};
use crate::error::{Error, Result};
use crate::seed::{self, tag};
use crate::simulators::{simulate, SimulatorKind, SimulatorSpec};

pub const MIN_SEGMENT: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledSegment {
    pub theta: ParamVector,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub id: String,
    pub kind: SimulatorKind,
    pub horizon: usize,
    pub schedule: Vec<ScheduledSegment>,
    /// Seed the schedule was drawn from.
    pub seed: u64,
    /// Noise seed of the observed stream.
    pub stream_seed: u64,
}

impl InstanceSpec {
    pub fn change_count(&self) -> usize {
        self.schedule.len() - 1
    }

    /// Inclusive `(start, end)` of every true segment.
    pub fn segment_bounds(&self) -> Vec<(usize, usize)> {
        let mut start = 1;
        self.schedule
            .iter()
            .map(|s| {
                let b = (start, start + s.len - 1);
                start += s.len;
                b
            })
            .collect()
    }

    /// First steps of segments 2.. .
    pub fn change_points(&self) -> Vec<usize> {
        self.segment_bounds().iter().skip(1).map(|b| b.0).collect()
    }

    pub fn validate(&self, spec: &SimulatorSpec) -> Result<()> {
        let total: usize = self.schedule.iter().map(|s| s.len).sum();
        if self.schedule.is_empty() || total != self.horizon {
            return Err(Error::InfeasibleSchedule(format!(
                "{}: segment lengths sum to {total}, horizon is {}",
                self.id, self.horizon
            )));
        }
        if self.schedule.iter().any(|s| s.len < MIN_SEGMENT) {
            return Err(Error::InfeasibleSchedule(format!(
                "{}: segment shorter than {MIN_SEGMENT}",
                self.id
            )));
        }
        for s in &self.schedule {
            spec.param_space.check(&s.theta.0)?;
        }
        Ok(())
    }

    /// The observed stream with noise seed `stream_seed`: segment `i`
    /// contributes windows `start_i..=end_i` of the trajectory simulated
    /// under its own parameter.
    pub fn observe(&self, spec: &SimulatorSpec) -> Result<ObservationStream> {
        self.observe_with_seed(spec, self.stream_seed)
    }

    pub fn observe_with_seed(&self, spec: &SimulatorSpec, noise_seed: u64) -> Result<ObservationStream> {
        self.validate(spec)?;
        let mut windows = Vec::with_capacity(self.horizon);
        for (seg, (start, end)) in self.schedule.iter().zip(self.segment_bounds()) {
            windows.extend(simulate(spec, &seg.theta, start, end, noise_seed)?);
        }
        ObservationStream::new(windows)
    }
}

/// Segment lengths: a uniformly random composition of `horizon` into
/// `segments` parts, each at least [`MIN_SEGMENT`].
pub fn random_lengths<R: Rng + ?Sized>(horizon: usize, segments: usize, rng: &mut R) -> Result<Vec<usize>> {
    if segments == 0 || MIN_SEGMENT * segments > horizon {
        return Err(Error::InfeasibleSchedule(format!(
            "{segments} segments of length >= {MIN_SEGMENT} do not fit in {horizon} observations"
        )));
    }
    // stars and bars over the slack
    let slack = horizon - MIN_SEGMENT * segments;
    let slots = slack + segments - 1;
    let mut bars: Vec<usize> = index::sample(rng, slots, segments - 1).into_vec();
    bars.sort_unstable();
    let mut lens = Vec::with_capacity(segments);
    let mut prev = 0usize;
    for (i, &b) in bars.iter().enumerate() {
        // stars before bar i, net of bars already placed
        let stars = b - i;
        lens.push(MIN_SEGMENT + stars - prev);
        prev = stars;
    }
    lens.push(MIN_SEGMENT + slack - prev);
    Ok(lens)
}

/// One instance with `changes` change points.
pub fn make_instance(
    kind: SimulatorKind,
    spec: &SimulatorSpec,
    horizon: usize,
    changes: usize,
    id: String,
    seed: u64,
) -> Result<InstanceSpec> {
    let mut rng = seed::rng_from(seed, tag::SCHEDULE);
    let lens = random_lengths(horizon, changes + 1, &mut rng)?;
    let schedule = lens
        .into_iter()
        .map(|len| ScheduledSegment {
            theta: spec.param_space.sample_uniform(&mut rng),
            len,
        })
        .collect();
    Ok(InstanceSpec {
        id,
        kind,
        horizon,
        schedule,
        seed,
        stream_seed: seed::derive(seed, tag::STREAM),
    })
}

/// `per_count` instances for each change count.
pub fn make_instances(
    spec: &SimulatorSpec,
    horizon: usize,
    change_counts: &[usize],
    per_count: usize,
    seed: u64,
) -> Result<Vec<InstanceSpec>> {
    let kind = spec.kind;
    let mut out = Vec::new();
    for &k in change_counts {
        for r in 0..per_count {
            let id = format!("{}-K{k}-{}", kind.name(), r + 1);
            let s = seed::derive(seed, (k as u64) << 16 | r as u64);
            out.push(make_instance(kind, spec, horizon, k, id, s)?);
        }
    }
    Ok(out)
}

/// Horizon and change counts of the standard suites.
pub fn standard_suite(kind: SimulatorKind) -> (usize, Vec<usize>) {
    match kind {
        SimulatorKind::BrockHommes => (30, vec![3, 5, 8]),
        SimulatorKind::Pgps => (18, vec![2, 3, 4]),
    }
}

pub fn standard_instances(spec: &SimulatorSpec, seed: u64) -> Result<Vec<InstanceSpec>> {
    let (horizon, counts) = standard_suite(spec.kind);
    make_instances(spec, horizon, &counts, 3, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bh_suite_shapes() {
        let spec = SimulatorSpec::brock_hommes();
        let inst = standard_instances(&spec, 1).unwrap();
        assert_eq!(inst.len(), 9);
        for i in &inst {
            i.validate(&spec).unwrap();
            assert_eq!(i.horizon, 30);
        }
        let k8: Vec<_> = inst.iter().filter(|i| i.change_count() == 8).collect();
        assert_eq!(k8.len(), 3);
        assert!(k8.iter().all(|i| i.schedule.len() == 9));
        assert_eq!(inst, standard_instances(&spec, 1).unwrap());
        assert_ne!(inst, standard_instances(&spec, 2).unwrap());
    }

    #[test]
    fn pgps_instance_stream_shape() {
        let spec = SimulatorSpec::pgps();
        let inst = make_instance(SimulatorKind::Pgps, &spec, 18, 2, "p".into(), 4).unwrap();
        let s = inst.observe(&spec).unwrap();
        assert_eq!(s.horizon(), 18);
        assert!(s.windows().iter().all(|w| w.len == 200 && w.vars == 1));
    }

    #[test]
    fn infeasible_schedules_rejected() {
        let spec = SimulatorSpec::brock_hommes();
        assert!(matches!(
            make_instance(SimulatorKind::BrockHommes, &spec, 10, 5, "x".into(), 0),
            Err(Error::InfeasibleSchedule(_))
        ));
        assert!(make_instance(SimulatorKind::BrockHommes, &spec, 10, 4, "x".into(), 0).is_ok());
    }

    #[test]
    fn stream_is_spliced_from_segment_trajectories() {
        let spec = SimulatorSpec::brock_hommes();
        let inst = make_instance(SimulatorKind::BrockHommes, &spec, 12, 2, "x".into(), 8).unwrap();
        let s = inst.observe(&spec).unwrap();
        for (seg, (a, b)) in inst.schedule.iter().zip(inst.segment_bounds()) {
            let own = simulate(&spec, &seg.theta, 1, b, inst.stream_seed).unwrap();
            assert_eq!(s.span(a, b), &own[a - 1..b]);
        }
    }

    proptest! {
        #[test]
        fn lengths_are_valid_compositions(h in 2usize..60, k in 1usize..10, seed in any::<u64>()) {
            let mut rng = seed::rng(seed);
            match random_lengths(h, k, &mut rng) {
                Ok(l) => {
                    prop_assert_eq!(l.len(), k);
                    prop_assert_eq!(l.iter().sum::<usize>(), h);
                    prop_assert!(l.iter().all(|&x| x >= MIN_SEGMENT));
                }
                Err(_) => prop_assert!(MIN_SEGMENT * k > h),
            }
        }
    }

    #[test]
    fn compositions_are_uniform() {
        // horizon 7, 2 segments: lengths (2,5),(3,4),(4,3),(5,2) equally likely
        let mut rng = seed::rng(5);
        let mut counts = [0usize; 4];
        let n = 40_000;
        for _ in 0..n {
            let l = random_lengths(7, 2, &mut rng).unwrap();
            counts[l[0] - 2] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() < 0.01, "{counts:?}");
        }
    }
}
