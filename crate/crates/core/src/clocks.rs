//! Hardware and logical clocks.
//!
//! Hardware clocks integrate a piecewise-constant rate in `[1, ϑ]`. Logical
//! clocks add a correction that is either off (`OwnRate`) or on (`Fast`).
//! All values and inverses are computed segment-exactly.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{internal, param, Result};

/// Slack for comparisons against rate envelopes, relative to the compared magnitude.
const REL_TOL: f64 = 1e-12;

/// Correction state of a logical clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    OwnRate,
    Fast,
}

impl Mode {
    /// Encoding used by the trace CSV.
    pub fn as_int(self) -> u8 {
        match self {
            Mode::OwnRate => 0,
            Mode::Fast => 1,
        }
    }
}

/// How fast mode modifies the clock rate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionSemantics {
    /// Fast rate is `(1 + μ)` times the hardware rate.
    #[default]
    Multiplicative,
    /// Fast rate is the hardware rate plus `μ`.
    Additive,
}

impl CorrectionSemantics {
    /// Logical rate for a given hardware rate and mode.
    pub fn logical_rate(self, hw_rate: f64, mu: f64, mode: Mode) -> f64 {
        match (self, mode) {
            (_, Mode::OwnRate) => hw_rate,
            (CorrectionSemantics::Multiplicative, Mode::Fast) => (1.0 + mu) * hw_rate,
            (CorrectionSemantics::Additive, Mode::Fast) => hw_rate + mu,
        }
    }

    /// Largest logical rate reachable with hardware rates up to `theta`.
    pub fn max_rate(self, theta: f64, mu: f64) -> f64 {
        self.logical_rate(theta, mu, Mode::Fast)
    }
}

/// How a rate schedule was produced; kept for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorTag {
    Constant,
    Alternating,
    RandomWalk,
    Scripted,
}

/// Rate-schedule generator configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RateGenerator {
    /// A single rate forever.
    Constant { rate: f64 },
    /// Switches between the extreme rates `1` and `ϑ` every `period` seconds.
    /// Without a period the clock stays at its starting extreme.
    Alternating {
        #[serde(default)]
        period: Option<f64>,
        #[serde(default)]
        start_fast: bool,
    },
    /// Bounded random walk: every `dwell` seconds the rate moves by a uniform
    /// step in `[-step, step]·(ϑ − 1)`, clamped to `[1, ϑ]`.
    RandomWalk { dwell: f64, step: f64 },
    /// Explicit `[start, rate]` segments.
    Scripted { segments: Vec<[f64; 2]> },
}

impl RateGenerator {
    pub fn tag(&self) -> GeneratorTag {
        match self {
            RateGenerator::Constant { .. } => GeneratorTag::Constant,
            RateGenerator::Alternating { .. } => GeneratorTag::Alternating,
            RateGenerator::RandomWalk { .. } => GeneratorTag::RandomWalk,
            RateGenerator::Scripted { .. } => GeneratorTag::Scripted,
        }
    }

    /// Whether [`Self::generate`] draws from its RNG.
    pub fn is_random(&self) -> bool {
        matches!(self, RateGenerator::RandomWalk { .. })
    }

    /// Builds a schedule covering at least `[0, horizon]`; the last segment
    /// extends forever.
    pub fn generate<R: Rng>(&self, theta: f64, horizon: f64, rng: &mut R) -> Result<RateSchedule> {
        let segments = match self {
            RateGenerator::Constant { rate } => vec![(0.0, *rate)],
            RateGenerator::Alternating { period, start_fast } => {
                let rate_of = |fast: bool| if fast { theta } else { 1.0 };
                match period {
                    None => vec![(0.0, rate_of(*start_fast))],
                    Some(p) if !(*p > 0.0) || !p.is_finite() => {
                        return Err(param(format!("alternating period {p} must be positive")))
                    }
                    Some(p) => {
                        let count = (horizon / p).ceil().max(0.0) as usize + 1;
                        (0..count)
                            .map(|k| (k as f64 * p, rate_of(*start_fast ^ (k % 2 == 1))))
                            .collect()
                    }
                }
            }
            RateGenerator::RandomWalk { dwell, step } => {
                if !(*dwell > 0.0) || !dwell.is_finite() {
                    return Err(param(format!("random walk dwell {dwell} must be positive")));
                }
                if !(*step >= 0.0) {
                    return Err(param(format!("random walk step {step} must be non-negative")));
                }
                let span = theta - 1.0;
                let mut rate = 1.0 + rng.gen::<f64>() * span;
                let count = (horizon / dwell).ceil().max(0.0) as usize + 1;
                let mut segs = Vec::with_capacity(count);
                for k in 0..count {
                    segs.push((k as f64 * dwell, rate));
                    let delta = rng.gen_range(-1.0..=1.0) * step * span;
                    rate = (rate + delta).clamp(1.0, theta);
                }
                segs
            }
            RateGenerator::Scripted { segments } => segments.iter().map(|s| (s[0], s[1])).collect(),
        };
        RateSchedule::new(segments, theta, self.tag())
    }
}

/// Piecewise-constant rate function of real time.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSchedule {
    starts: Vec<f64>,
    rates: Vec<f64>,
    /// Integral of the rate from 0 to `starts[i]`.
    cumulative: Vec<f64>,
    tag: GeneratorTag,
}

impl RateSchedule {
    /// Validated schedule: first segment at 0, strictly increasing starts,
    /// every rate in `[1, theta]`.
    pub fn new(segments: Vec<(f64, f64)>, theta: f64, tag: GeneratorTag) -> Result<Self> {
        if segments.is_empty() {
            return Err(param("rate schedule has no segments"));
        }
        if segments[0].0 != 0.0 {
            return Err(param("first rate segment must start at 0"));
        }
        for w in segments.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(param(format!(
                    "rate segment starts not strictly increasing at {}",
                    w[1].0
                )));
            }
        }
        for &(start, rate) in &segments {
            if !rate.is_finite() || !start.is_finite() || rate < 1.0 || rate > theta {
                return Err(param(format!(
                    "rate {rate} at t={start} outside [1, {theta}]"
                )));
            }
        }
        Ok(Self::unchecked(segments, tag))
    }

    /// Builds a schedule without range checks. Only for negative controls.
    pub fn unchecked(segments: Vec<(f64, f64)>, tag: GeneratorTag) -> Self {
        let mut starts = Vec::with_capacity(segments.len());
        let mut rates = Vec::with_capacity(segments.len());
        let mut cumulative = Vec::with_capacity(segments.len());
        let mut acc = 0.0;
        for (i, &(s, r)) in segments.iter().enumerate() {
            if i > 0 {
                acc += rates[i - 1] * (s - starts[i - 1]);
            }
            starts.push(s);
            rates.push(r);
            cumulative.push(acc);
        }
        Self {
            starts,
            rates,
            cumulative,
            tag,
        }
    }

    pub fn constant(rate: f64, theta: f64) -> Result<Self> {
        Self::new(vec![(0.0, rate)], theta, GeneratorTag::Constant)
    }

    pub fn tag(&self) -> GeneratorTag {
        self.tag
    }

    /// `(start, rate)` pairs.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.starts.iter().copied().zip(self.rates.iter().copied())
    }

    /// Index of the segment containing `t` (right-continuous).
    fn segment_at(&self, t: f64) -> usize {
        self.starts.partition_point(|&s| s <= t).saturating_sub(1)
    }

    /// Rate in force at `t`, i.e. on `[t, t + ε)`.
    pub fn rate_at(&self, t: f64) -> f64 {
        self.rates[self.segment_at(t)]
    }

    /// First rate change strictly after `t`, if any.
    pub fn next_change_after(&self, t: f64) -> Option<f64> {
        let i = self.starts.partition_point(|&s| s <= t);
        self.starts.get(i).copied()
    }

    /// `∫_0^t rate`.
    pub fn integral(&self, t: f64) -> f64 {
        let i = self.segment_at(t);
        self.cumulative[i] + self.rates[i] * (t - self.starts[i])
    }

    /// Smallest `t` with `integral(t) = x`, for `x ≥ 0`.
    pub fn inverse_integral(&self, x: f64) -> f64 {
        let i = self.cumulative.partition_point(|&c| c <= x).saturating_sub(1);
        self.starts[i] + (x - self.cumulative[i]) / self.rates[i]
    }
}

/// A node's free-running hardware clock `H_v`.
#[derive(Debug, Clone, PartialEq)]
pub struct HardwareClock {
    pub initial_value: f64,
    pub schedule: RateSchedule,
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(param(format!("time {t} must be finite and non-negative")));
    }
    Ok(())
}

impl HardwareClock {
    pub fn new(initial_value: f64, schedule: RateSchedule) -> Self {
        Self {
            initial_value,
            schedule,
        }
    }

    /// `H_v(t)`.
    pub fn value(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.value_at(t))
    }

    pub(crate) fn value_at(&self, t: f64) -> f64 {
        self.initial_value + self.schedule.integral(t)
    }

    pub fn rate_at(&self, t: f64) -> f64 {
        self.schedule.rate_at(t)
    }

    /// Real time at which the clock reads `value`.
    pub fn invert(&self, value: f64) -> Result<f64> {
        if value < self.initial_value {
            return Err(param(format!(
                "hardware value {value} precedes initial value {}",
                self.initial_value
            )));
        }
        Ok(self.schedule.inverse_integral(value - self.initial_value))
    }
}

/// `(t2 − t1) ≤ H(t2) − H(t1) ≤ ϑ(t2 − t1)`, up to a relative rounding slack.
pub fn check_lipschitz(c: &HardwareClock, t1: f64, t2: f64, theta: f64) -> bool {
    let dt = t2 - t1;
    let dh = c.value_at(t2) - c.value_at(t1);
    let tol = REL_TOL * c.value_at(t2).abs().max(1.0);
    dh >= dt - tol && dh <= theta * dt + tol
}

/// One correction segment of a logical clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrectionSegment {
    pub start: f64,
    pub mode: Mode,
    /// Logical value at `start`.
    #[serde(skip)]
    logical_at_start: f64,
}

/// Logical clock `L_v`: hardware clock plus a logged correction.
#[derive(Debug, Clone, PartialEq)]
pub struct LogicalClock {
    hardware: HardwareClock,
    mu: f64,
    semantics: CorrectionSemantics,
    log: Vec<CorrectionSegment>,
}

impl LogicalClock {
    /// Starts in `OwnRate` with `L_v(0) = H_v(0)`.
    pub fn new(hardware: HardwareClock, mu: f64, semantics: CorrectionSemantics) -> Result<Self> {
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(param(format!("mu {mu} must be positive")));
        }
        let start = hardware.initial_value;
        Ok(Self {
            hardware,
            mu,
            semantics,
            log: vec![CorrectionSegment {
                start: 0.0,
                mode: Mode::OwnRate,
                logical_at_start: start,
            }],
        })
    }

    pub fn hardware(&self) -> &HardwareClock {
        &self.hardware
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn semantics(&self) -> CorrectionSemantics {
        self.semantics
    }

    /// The correction log, oldest first.
    pub fn correction_log(&self) -> &[CorrectionSegment] {
        &self.log
    }

    /// Mode currently in force (after the last logged change).
    pub fn current_mode(&self) -> Mode {
        self.log[self.log.len() - 1].mode
    }

    fn segment_at(&self, t: f64) -> &CorrectionSegment {
        let i = self.log.partition_point(|s| s.start <= t).saturating_sub(1);
        &self.log[i]
    }

    /// Mode in force at `t` (right-continuous).
    pub fn mode_at(&self, t: f64) -> Mode {
        self.segment_at(t).mode
    }

    /// `L_v(t)`. Times past the last mode change extrapolate the current mode.
    pub fn value(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.value_at(t))
    }

    pub(crate) fn value_at(&self, t: f64) -> f64 {
        let seg = self.segment_at(t);
        self.advance(seg, t)
    }

    fn advance(&self, seg: &CorrectionSegment, t: f64) -> f64 {
        let dh = self.hardware.schedule.integral(t) - self.hardware.schedule.integral(seg.start);
        let extra = match (seg.mode, self.semantics) {
            (Mode::OwnRate, _) => 0.0,
            (Mode::Fast, CorrectionSemantics::Multiplicative) => self.mu * dh,
            (Mode::Fast, CorrectionSemantics::Additive) => self.mu * (t - seg.start),
        };
        seg.logical_at_start + dh + extra
    }

    /// Logical rate in force at `t`.
    pub fn rate_at(&self, t: f64) -> f64 {
        self.semantics
            .logical_rate(self.hardware.rate_at(t), self.mu, self.mode_at(t))
    }

    /// Unique real time `t` with `L_v(t) = target`.
    pub fn invert(&self, target: f64) -> Result<f64> {
        let l0 = self.log[0].logical_at_start;
        if !(target >= l0) || !target.is_finite() {
            return Err(param(format!(
                "logical target {target} precedes initial value {l0}"
            )));
        }
        let i = self
            .log
            .partition_point(|s| s.logical_at_start <= target)
            .saturating_sub(1);
        let seg = &self.log[i];
        let sched = &self.hardware.schedule;
        let t = match (seg.mode, self.semantics) {
            (Mode::OwnRate, _) => {
                sched.inverse_integral(sched.integral(seg.start) + (target - seg.logical_at_start))
            }
            (Mode::Fast, CorrectionSemantics::Multiplicative) => sched.inverse_integral(
                sched.integral(seg.start) + (target - seg.logical_at_start) / (1.0 + self.mu),
            ),
            (Mode::Fast, CorrectionSemantics::Additive) => {
                // Walk hardware segments; logical rate is r + μ on each.
                let mut t = seg.start;
                let mut l = seg.logical_at_start;
                loop {
                    let r = sched.rate_at(t) + self.mu;
                    match sched.next_change_after(t) {
                        Some(end) if l + r * (end - t) < target => {
                            l += r * (end - t);
                            t = end;
                        }
                        _ => break t + (target - l) / r,
                    }
                }
            }
        };
        // never return a time before the segment start because of rounding
        Ok(t.max(seg.start))
    }

    /// Switches the correction mode at `t`. Setting the current mode again is a no-op.
    pub fn set_mode(&mut self, t: f64, mode: Mode) -> Result<()> {
        check_time(t)?;
        let last = self.log[self.log.len() - 1];
        if t < last.start {
            return Err(internal(format!(
                "mode change at {t} precedes last change at {}",
                last.start
            )));
        }
        if mode == last.mode {
            return Ok(());
        }
        let logical_at_start = self.advance(&last, t);
        if t == last.start {
            // replace a zero-length segment
            self.log.pop();
            if self.log.last().is_some_and(|s| s.mode == mode) {
                return Ok(());
            }
            self.log.push(CorrectionSegment {
                start: t,
                mode,
                logical_at_start: last.logical_at_start,
            });
            return Ok(());
        }
        self.log.push(CorrectionSegment {
            start: t,
            mode,
            logical_at_start,
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn hw(initial: f64, segs: Vec<(f64, f64)>, theta: f64) -> HardwareClock {
        HardwareClock::new(
            initial,
            RateSchedule::new(segs, theta, GeneratorTag::Scripted).unwrap(),
        )
    }

    fn logical(h: HardwareClock, mu: f64) -> LogicalClock {
        LogicalClock::new(h, mu, CorrectionSemantics::Multiplicative).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn hardware_values() {
        assert_eq!(hw(0.0, vec![(0.0, 1.0)], 1.0).value(5.0).unwrap(), 5.0);
        assert!(close(hw(0.0, vec![(0.0, 1.01)], 1.01).value(100.0).unwrap(), 101.0));
        let c = hw(0.0, vec![(0.0, 1.0), (10.0, 1.01)], 1.01);
        assert!(close(c.value(20.0).unwrap(), 20.1));
        assert!(c.value(-1.0).is_err());
    }

    #[test]
    fn schedule_validation() {
        assert!(RateSchedule::new(vec![], 1.1, GeneratorTag::Scripted).is_err());
        assert!(RateSchedule::new(vec![(1.0, 1.0)], 1.1, GeneratorTag::Scripted).is_err());
        assert!(RateSchedule::new(vec![(0.0, 1.0), (0.0, 1.0)], 1.1, GeneratorTag::Scripted).is_err());
        assert!(RateSchedule::new(vec![(0.0, 0.9)], 1.1, GeneratorTag::Scripted).is_err());
        assert!(RateSchedule::new(vec![(0.0, 1.2)], 1.1, GeneratorTag::Scripted).is_err());
    }

    #[test]
    fn logical_values() {
        let c = logical(hw(0.0, vec![(0.0, 1.0)], 1.0), 0.1);
        assert_eq!(c.value(7.0).unwrap(), 7.0);

        let mut c = logical(hw(0.0, vec![(0.0, 1.0)], 1.0), 0.1);
        c.set_mode(0.0, Mode::Fast).unwrap();
        assert!(close(c.value(10.0).unwrap(), 11.0));

        let mut c = logical(hw(0.0, vec![(0.0, 1.01)], 1.01), 0.1);
        c.set_mode(0.0, Mode::Fast).unwrap();
        c.set_mode(10.0, Mode::OwnRate).unwrap();
        assert!(close(c.value(20.0).unwrap(), 1.1 * 1.01 * 10.0 + 1.01 * 10.0));
        assert!(close(c.value(20.0).unwrap(), 21.21));
    }

    #[test]
    fn additive_semantics() {
        let h = hw(0.0, vec![(0.0, 1.01)], 1.01);
        let mut c = LogicalClock::new(h, 0.1, CorrectionSemantics::Additive).unwrap();
        c.set_mode(0.0, Mode::Fast).unwrap();
        assert!(close(c.value(10.0).unwrap(), 11.1));
        assert!(close(c.invert(11.1).unwrap(), 10.0));
    }

    #[test]
    fn inversion() {
        let c = logical(hw(0.0, vec![(0.0, 1.0)], 1.0), 0.1);
        assert_eq!(c.invert(7.0).unwrap(), 7.0);
        let c = logical(hw(0.0, vec![(0.0, 1.01)], 1.01), 0.1);
        assert!(close(c.invert(20.2).unwrap(), 20.0));
        let c = logical(hw(3.0, vec![(0.0, 1.0)], 1.0), 0.1);
        assert!(c.invert(2.0).is_err());
    }

    #[test]
    fn set_mode_examples() {
        let mut c = logical(hw(0.0, vec![(0.0, 1.0)], 1.0), 0.05);
        c.set_mode(0.0, Mode::Fast).unwrap();
        assert!(close(c.value(1.0).unwrap(), 1.05));

        let mut c = logical(hw(0.0, vec![(0.0, 1.0)], 1.0), 0.05);
        c.set_mode(1.0, Mode::OwnRate).unwrap();
        c.set_mode(2.0, Mode::OwnRate).unwrap();
        assert_eq!(c.correction_log().len(), 1);

        let mut c = logical(hw(0.0, vec![(0.0, 1.0)], 1.0), 0.1);
        for k in 0..4 {
            let mode = if k % 2 == 0 { Mode::Fast } else { Mode::OwnRate };
            c.set_mode(10.0 * k as f64, mode).unwrap();
        }
        assert!(close(c.value(40.0).unwrap(), 42.0));

        assert!(c.set_mode(5.0, Mode::Fast).is_err());
    }

    #[test]
    fn zero_length_segment_is_replaced() {
        let mut c = logical(hw(0.0, vec![(0.0, 1.0)], 1.0), 0.1);
        c.set_mode(5.0, Mode::Fast).unwrap();
        c.set_mode(5.0, Mode::OwnRate).unwrap();
        assert_eq!(c.correction_log().len(), 1);
        assert_eq!(c.value(10.0).unwrap(), 10.0);
    }

    #[test]
    fn lipschitz_checks() {
        let c = hw(0.0, vec![(0.0, 1.0)], 1.0);
        assert!(check_lipschitz(&c, 1.0, 3.0, 1.0));
        let c = hw(0.0, vec![(0.0, 1.01)], 1.01);
        assert!(check_lipschitz(&c, 0.0, 1000.0, 1.01));
        let bad = HardwareClock::new(
            0.0,
            RateSchedule::unchecked(vec![(0.0, 1.0), (5.0, 0.9)], GeneratorTag::Scripted),
        );
        assert!(!check_lipschitz(&bad, 5.0, 10.0, 1.01));
    }

    #[test]
    fn alternating_generator() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = RateGenerator::Alternating { period: Some(10.0), start_fast: true };
        let s = g.generate(1.01, 35.0, &mut rng).unwrap();
        let segs: Vec<_> = s.segments().collect();
        assert_eq!(segs[0], (0.0, 1.01));
        assert_eq!(segs[1], (10.0, 1.0));
        assert_eq!(segs[2], (20.0, 1.01));
        assert!(segs.last().unwrap().0 >= 35.0);
        let g = RateGenerator::Alternating { period: None, start_fast: false };
        assert_eq!(g.generate(1.01, 35.0, &mut rng).unwrap().segments().count(), 1);
    }

    #[test]
    fn random_walk_stays_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = RateGenerator::RandomWalk { dwell: 1.0, step: 0.5 };
        let s = g.generate(1.01, 500.0, &mut rng).unwrap();
        assert!(s.segments().all(|(_, r)| (1.0..=1.01).contains(&r)));
        assert!(s.segments().count() > 500);
    }

    fn schedule_strategy(theta: f64) -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec((0.1f64..50.0, 1.0f64..=theta), 1..12).prop_map(|v| {
            let mut t = 0.0;
            v.into_iter()
                .map(|(d, r)| {
                    let s = t;
                    t += d;
                    (s, r)
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn hardware_envelope(segs in schedule_strategy(1.05), a in 0.0f64..400.0, b in 0.0f64..400.0) {
            let c = hw(2.0, segs, 1.05);
            let (t1, t2) = if a < b { (a, b) } else { (b, a) };
            prop_assume!(t2 > t1);
            prop_assert!(check_lipschitz(&c, t1, t2, 1.05));
        }

        #[test]
        fn logical_envelope_and_inverse(
            segs in schedule_strategy(1.05),
            switches in prop::collection::vec(0.1f64..30.0, 0..10),
            queries in prop::collection::vec(0.0f64..400.0, 2..20),
            additive in any::<bool>(),
        ) {
            let sem = if additive { CorrectionSemantics::Additive } else { CorrectionSemantics::Multiplicative };
            let h = hw(1.0, segs, 1.05);
            let mut c = LogicalClock::new(h.clone(), 0.2, sem).unwrap();
            let mut t = 0.0;
            let mut mode = Mode::OwnRate;
            for d in switches {
                t += d;
                mode = if mode == Mode::Fast { Mode::OwnRate } else { Mode::Fast };
                c.set_mode(t, mode).unwrap();
            }
            let mut qs = queries;
            qs.sort_by(f64::total_cmp);
            for w in qs.windows(2) {
                let (t1, t2) = (w[0], w[1]);
                let dl = c.value(t2).unwrap() - c.value(t1).unwrap();
                let dt = t2 - t1;
                let tol = 1e-9;
                prop_assert!(dl >= dt - tol);
                prop_assert!(dl <= sem.max_rate(1.05, 0.2) * dt + tol);
                if dt > 1e-9 {
                    prop_assert!(dl > 0.0);
                }
            }
            for &q in &qs {
                let x = c.value(q).unwrap();
                prop_assert!(x >= h.value(q).unwrap() - 1e-12);
                let back = c.invert(x).unwrap();
                prop_assert!((c.value(back).unwrap() - x).abs() <= 1e-12);
            }
        }
    }
}
