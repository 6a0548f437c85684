//! Per-node synchronisation state machine: cycle phases, triggers and the
//! mode decision.
//!
//! A cycle is `T` local seconds of measuring followed by `T_stab` local
//! seconds of stabilising. Boundary `k` of node `v` fires when
//! `L_v = L_v(0) + k·(T + T_stab)`; triggers are evaluated once, `T` local
//! seconds later, and the chosen mode holds until the next boundary.

use serde::{Deserialize, Serialize};

use crate::clocks::{LogicalClock, Mode};
use crate::error::{internal, param, Result};
use crate::topology::{NetworkGraph, NodeId};
use crate::twoway::{estimate_value, NeighborEstimate, RequestMsg};

/// Algorithm parameters shared by all nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcsParams {
    pub theta: f64,
    pub mu: f64,
    /// Measuring window `T`, local seconds.
    pub t_meas: f64,
    /// Stabilising window `T_stab`, local seconds.
    pub t_stab: f64,
    /// Highest trigger level searched.
    pub s_max: u32,
    /// Extra slack on the existential trigger clauses.
    pub hysteresis: f64,
}

impl GcsParams {
    /// Cycle length `T + T_stab` in local time.
    pub fn cycle_len(&self) -> f64 {
        self.t_meas + self.t_stab
    }

    /// `σ = μ / (ϑ − 1)`.
    pub fn sigma(&self) -> Result<f64> {
        sigma(self.mu, self.theta)
    }

    /// Checks every parameter invariant; `timeout` is the largest reply
    /// deadline over all nodes.
    pub fn validate(&self, timeout: f64) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.theta >= 1.0) || !self.theta.is_finite() {
            out.push(format!("theta {} must be >= 1", self.theta));
        }
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            out.push(format!("mu {} must be positive", self.mu));
        }
        if self.theta > 1.0 && !(self.mu > self.theta - 1.0) {
            out.push(format!(
                "mu {} must exceed theta - 1 = {} (sigma > 1)",
                self.mu,
                self.theta - 1.0
            ));
        }
        if !(self.t_meas >= timeout) {
            out.push(format!(
                "T {} must be at least the timeout window {timeout}",
                self.t_meas
            ));
        }
        if !(self.t_stab > 0.0) || !self.t_stab.is_finite() {
            out.push(format!("T_stab {} must be positive", self.t_stab));
        }
        if self.s_max < 1 {
            out.push("s_max must be at least 1".into());
        }
        if !(self.hysteresis >= 0.0) {
            out.push(format!("hysteresis {} must be non-negative", self.hysteresis));
        }
        out
    }
}

/// `σ = μ / (ϑ − 1)`; undefined unless `ϑ > 1`.
pub fn sigma(mu: f64, theta: f64) -> Result<f64> {
    if !(theta > 1.0) {
        return Err(param(format!(
            "sigma undefined: requires theta > 1, got {theta}"
        )));
    }
    Ok(mu / drift_rate(theta))
}

/// `ϑ − 1` read off the shortest decimal form of `ϑ`, so `1.001` gives the
/// nearest double to `0.001` instead of the binary residue `1.001 − 1`.
/// Only `σ` needs this: dividing by `ϑ − 1` magnifies the residue.
pub fn drift_rate(theta: f64) -> f64 {
    theta
        .to_string()
        .strip_prefix("1.")
        .and_then(|frac| format!("0.{frac}").parse().ok())
        .unwrap_or(theta - 1.0)
}

/// Cycle phase of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Before the first boundary.
    Idle,
    Measuring,
    Stabilising,
}

/// What a node sees of one neighbour at evaluation time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborView {
    pub neighbor: NodeId,
    /// `L̃_x` at the evaluation instant.
    pub estimate: f64,
    /// `κ̂` of the connecting edge.
    pub kappa: f64,
    /// Error bound used by the fast trigger.
    pub delta: f64,
}

/// Slow trigger at level `s`: some neighbour is at least `(2s−1)κ` behind
/// and none is more than `(2s−1)κ` ahead.
pub fn slow_trigger(l_v: f64, views: &[NeighborView], s: u32, hysteresis: f64) -> bool {
    let k = f64::from(2 * s - 1);
    let exists = views
        .iter()
        .any(|x| l_v - x.estimate >= k * x.kappa + hysteresis);
    let forall = views.iter().all(|y| y.estimate - l_v <= k * y.kappa);
    exists && forall
}

/// Fast trigger at level `s`: some neighbour is more than `2sκ − δ` ahead
/// and none is `2sκ + δ` or more behind.
pub fn fast_trigger(l_v: f64, views: &[NeighborView], s: u32, hysteresis: f64) -> bool {
    let k = f64::from(2 * s);
    let exists = views
        .iter()
        .any(|x| x.estimate - l_v > k * x.kappa - x.delta + hysteresis);
    let forall = views
        .iter()
        .all(|y| l_v - y.estimate < k * y.kappa + y.delta);
    exists && forall
}

/// Outcome of a trigger evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    /// Slow trigger held at some level.
    OwnRate,
    /// Fast trigger held at some level (and no slow trigger).
    Fast,
    /// Neither trigger held.
    DefaultOwnRate,
}

impl Decision {
    pub fn mode(self) -> Mode {
        match self {
            Decision::Fast => Mode::Fast,
            Decision::OwnRate | Decision::DefaultOwnRate => Mode::OwnRate,
        }
    }
}

/// Which trigger levels hold, index `s − 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggerLevels {
    pub slow: Vec<bool>,
    pub fast: Vec<bool>,
}

impl TriggerLevels {
    pub fn evaluate(l_v: f64, views: &[NeighborView], s_max: u32, hysteresis: f64) -> Self {
        Self {
            slow: (1..=s_max)
                .map(|s| slow_trigger(l_v, views, s, hysteresis))
                .collect(),
            fast: (1..=s_max)
                .map(|s| fast_trigger(l_v, views, s, hysteresis))
                .collect(),
        }
    }

    /// Some slow level and some fast level hold together.
    pub fn co_satisfied(&self) -> Option<(u32, u32)> {
        let s = self.slow.iter().position(|&b| b)?;
        let f = self.fast.iter().position(|&b| b)?;
        Some((s as u32 + 1, f as u32 + 1))
    }

    pub fn decision(&self) -> Decision {
        if self.slow.iter().any(|&b| b) {
            Decision::OwnRate
        } else if self.fast.iter().any(|&b| b) {
            Decision::Fast
        } else {
            Decision::DefaultOwnRate
        }
    }
}

/// Mode decision over levels `1..=s_max`.
pub fn evaluate_mode(l_v: f64, views: &[NeighborView], s_max: u32, hysteresis: f64) -> Decision {
    TriggerLevels::evaluate(l_v, views, s_max, hysteresis).decision()
}

/// Side effect requested by the state machine.
#[derive(Debug, Clone, PartialEq)]
pub enum ProtocolAction {
    SendRequest { to: NodeId, msg: RequestMsg },
    /// Evaluate triggers at this real time.
    ScheduleEvaluate { real_time: f64 },
    /// Fire the next cycle boundary at this real time.
    ScheduleBoundary { real_time: f64, cycle: u64 },
}

/// Result of one trigger evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub l_v: f64,
    pub views: Vec<NeighborView>,
    pub levels: TriggerLevels,
    pub decision: Decision,
    /// Mode actually applied; forced to own rate when correction is disabled.
    pub applied: Mode,
}

/// State of one node.
#[derive(Debug, Clone)]
pub struct NodeState {
    pub id: NodeId,
    pub logical: LogicalClock,
    pub phase: Phase,
    /// Index of the current cycle; meaningful once the first boundary fired.
    pub cycle_index: u64,
    /// Latest estimate per neighbour, in the order of `graph.neighbors(id)`.
    pub views: Vec<Option<NeighborEstimate>>,
    initial_local: f64,
    boundaries_fired: u64,
}

/// Relative slack when checking that a boundary fires at its scheduled time.
const BOUNDARY_TOL: f64 = 1e-9;

impl NodeState {
    pub fn new(id: NodeId, logical: LogicalClock, degree: usize) -> Self {
        let initial_local = logical.hardware().initial_value;
        Self {
            id,
            logical,
            phase: Phase::Idle,
            cycle_index: 0,
            views: vec![None; degree],
            initial_local,
            boundaries_fired: 0,
        }
    }

    pub fn mode(&self) -> Mode {
        self.logical.current_mode()
    }

    /// Number of boundaries fired so far.
    pub fn boundaries_fired(&self) -> u64 {
        self.boundaries_fired
    }

    /// Local time at which boundary `k` fires.
    pub fn boundary_local(&self, k: u64, params: &GcsParams) -> f64 {
        self.initial_local + k as f64 * params.cycle_len()
    }

    /// Real time of boundary `k` given the current correction log.
    pub fn boundary_real(&self, k: u64, params: &GcsParams) -> Result<f64> {
        self.logical.invert(self.boundary_local(k, params))
    }

    /// Starts cycle `boundaries_fired`: stops correcting, issues one request
    /// per neighbour (ascending id) and schedules the evaluation.
    pub fn cycle_boundary(
        &mut self,
        real_time: f64,
        graph: &NetworkGraph,
        params: &GcsParams,
    ) -> Result<Vec<ProtocolAction>> {
        let k = self.boundaries_fired;
        let expected = self.boundary_real(k, params)?;
        if (real_time - expected).abs() > BOUNDARY_TOL * expected.abs().max(1.0) {
            return Err(internal(format!(
                "node {} boundary {k} fired at {real_time}, expected {expected}",
                self.id
            )));
        }
        self.logical.set_mode(real_time, Mode::OwnRate)?;
        self.phase = Phase::Measuring;
        self.cycle_index = k;
        self.boundaries_fired += 1;
        let l_t1 = self.logical.value(real_time)?;
        let mut actions: Vec<ProtocolAction> = graph
            .neighbors(self.id)
            .iter()
            .map(|&(to, _)| ProtocolAction::SendRequest {
                to,
                msg: RequestMsg {
                    sender: self.id,
                    l_v_t1: l_t1,
                },
            })
            .collect();
        let eval = self
            .logical
            .invert(self.boundary_local(k, params) + params.t_meas)?;
        actions.push(ProtocolAction::ScheduleEvaluate { real_time: eval });
        Ok(actions)
    }

    /// Stores an estimate for `neighbor`.
    pub fn record_estimate(&mut self, graph: &NetworkGraph, est: NeighborEstimate) -> Result<()> {
        let pos = graph
            .neighbors(self.id)
            .iter()
            .position(|&(w, _)| w == est.neighbor)
            .ok_or_else(|| internal(format!("{} is not a neighbor of {}", est.neighbor, self.id)))?;
        self.views[pos] = Some(est);
        Ok(())
    }

    /// Current-cycle views with trigger error bound `delta[e] = κ̂_e`.
    pub fn neighbor_views(&self, real_time: f64, graph: &NetworkGraph, kappa: &[f64]) -> Result<Vec<NeighborView>> {
        let l_v = self.logical.value(real_time)?;
        graph
            .neighbors(self.id)
            .iter()
            .zip(&self.views)
            .map(|(&(w, e), est)| {
                let est = est.as_ref().ok_or_else(|| {
                    internal(format!("node {} has no estimate for neighbor {w}", self.id))
                })?;
                Ok(NeighborView {
                    neighbor: w,
                    estimate: estimate_value(est, l_v, self.cycle_index)
                        .map_err(|e| internal(e.to_string()))?,
                    kappa: kappa[e],
                    delta: kappa[e],
                })
            })
            .collect()
    }

    /// Evaluates the triggers, applies the resulting mode (own rate if
    /// `correction_enabled` is false) and schedules the next boundary.
    pub fn evaluate(
        &mut self,
        real_time: f64,
        graph: &NetworkGraph,
        kappa: &[f64],
        params: &GcsParams,
        correction_enabled: bool,
    ) -> Result<(Evaluation, ProtocolAction)> {
        if self.phase != Phase::Measuring {
            return Err(internal(format!(
                "node {} evaluated outside its measuring phase",
                self.id
            )));
        }
        let views = self.neighbor_views(real_time, graph, kappa)?;
        let l_v = self.logical.value(real_time)?;
        let levels = TriggerLevels::evaluate(l_v, &views, params.s_max, params.hysteresis);
        let decision = levels.decision();
        let applied = if correction_enabled {
            decision.mode()
        } else {
            Mode::OwnRate
        };
        self.logical.set_mode(real_time, applied)?;
        self.phase = Phase::Stabilising;
        let next = self.boundaries_fired;
        let action = ProtocolAction::ScheduleBoundary {
            real_time: self.boundary_real(next, params)?,
            cycle: next,
        };
        Ok((
            Evaluation {
                l_v,
                views,
                levels,
                decision,
                applied,
            },
            action,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clocks::{CorrectionSemantics, HardwareClock, RateSchedule};
    use crate::topology::{Edge, EdgeParams};

    #[test]
    fn sigma_uses_decimal_drift() {
        assert_eq!(sigma(0.01, 1.001).unwrap(), 10.0);
        assert_eq!(drift_rate(1.5), 0.5);
        assert_eq!(drift_rate(3.0), 2.0);
        assert!(sigma(0.01, 1.0).is_err());
    }
    use proptest::prelude::*;

    fn view(estimate: f64, kappa: f64, delta: f64) -> NeighborView {
        NeighborView {
            neighbor: NodeId(1),
            estimate,
            kappa,
            delta,
        }
    }

    #[test]
    fn slow_trigger_examples() {
        assert!(slow_trigger(10.0, &[view(8.5, 1.0, 1.0)], 1, 0.0));
        let zero = [view(10.0, 1.0, 1.0), view(10.0, 1.0, 1.0)];
        for s in 1..5 {
            assert!(!slow_trigger(10.0, &zero, s, 0.0));
        }
        // boundary is inclusive
        assert!(slow_trigger(10.0, &[view(9.0, 1.0, 1.0)], 1, 0.0));
    }

    #[test]
    fn fast_trigger_examples() {
        assert!(fast_trigger(10.0, &[view(11.9, 1.0, 0.2)], 1, 0.0));
        // 10 + 1.8 is not exactly representable; use integers shifted so the gap is exact
        assert!(!fast_trigger(0.0, &[view(1.75, 1.0, 0.25)], 1, 0.0));
    }

    #[test]
    fn hysteresis_tightens_existential_clauses() {
        assert!(!slow_trigger(10.0, &[view(8.5, 1.0, 1.0)], 1, 0.6));
        assert!(!fast_trigger(10.0, &[view(11.9, 1.0, 0.2)], 1, 0.2));
    }

    #[test]
    fn mode_decisions() {
        let zero = [view(5.0, 1.0, 0.2)];
        assert_eq!(evaluate_mode(5.0, &zero, 4, 0.0), Decision::DefaultOwnRate);
        assert_eq!(evaluate_mode(10.0, &[view(11.9, 1.0, 0.2)], 4, 0.0), Decision::Fast);
        assert_eq!(evaluate_mode(10.0, &[view(8.5, 1.0, 1.0)], 4, 0.0), Decision::OwnRate);
    }

    fn brute_slow(l: f64, v: &[NeighborView], s: u32) -> bool {
        let k = (2 * s - 1) as f64;
        let mut any_behind = false;
        let mut none_ahead = true;
        for x in v {
            if l - x.estimate >= k * x.kappa {
                any_behind = true;
            }
            if x.estimate - l > k * x.kappa {
                none_ahead = false;
            }
        }
        any_behind && none_ahead
    }

    fn brute_fast(l: f64, v: &[NeighborView], s: u32) -> bool {
        let k = (2 * s) as f64;
        let mut any_ahead = false;
        let mut none_behind = true;
        for x in v {
            if x.estimate - l > k * x.kappa - x.delta {
                any_ahead = true;
            }
            if !(l - x.estimate < k * x.kappa + x.delta) {
                none_behind = false;
            }
        }
        any_ahead && none_behind
    }

    #[test]
    fn star_matches_clause_check() {
        let v = [view(9.0, 1.0, 1.0), view(12.0, 2.0, 2.0), view(10.5, 0.5, 0.5)];
        for s in 1..4 {
            assert_eq!(slow_trigger(10.0, &v, s, 0.0), brute_slow(10.0, &v, s));
            assert_eq!(fast_trigger(10.0, &v, s, 0.0), brute_fast(10.0, &v, s));
        }
    }

    proptest! {
        #[test]
        fn triggers_match_brute_force(
            l in -20.0f64..20.0,
            raw in prop::collection::vec((-20.0f64..20.0, 0.1f64..3.0), 1..6),
            s in 1u32..5,
        ) {
            let v: Vec<_> = raw.iter().map(|&(e, k)| view(e, k, k)).collect();
            prop_assert_eq!(slow_trigger(l, &v, s, 0.0), brute_slow(l, &v, s));
            prop_assert_eq!(fast_trigger(l, &v, s, 0.0), brute_fast(l, &v, s));
        }

        // With delta = kappa the slow and fast triggers cannot both hold.
        #[test]
        fn triggers_exclusive(
            l in -20.0f64..20.0,
            raw in prop::collection::vec((-20.0f64..20.0, 0.1f64..3.0), 1..6),
        ) {
            let v: Vec<_> = raw.iter().map(|&(e, k)| view(e, k, k)).collect();
            let lv = TriggerLevels::evaluate(l, &v, 6, 0.0);
            prop_assert!(lv.co_satisfied().is_none());
        }
    }

    fn two_node_graph() -> NetworkGraph {
        NetworkGraph::new(
            2,
            10.0,
            vec![Edge {
                u: NodeId(0),
                v: NodeId(1),
                params: EdgeParams::symmetric(1.0, 0.0, 0.1),
            }],
        )
        .unwrap()
    }

    fn params(t: f64, t_stab: f64) -> GcsParams {
        GcsParams {
            theta: 1.01,
            mu: 0.1,
            t_meas: t,
            t_stab,
            s_max: 3,
            hysteresis: 0.0,
        }
    }

    fn node(rate: f64, degree: usize) -> NodeState {
        let hw = HardwareClock::new(0.0, RateSchedule::constant(rate, 1.01).unwrap());
        let lc = LogicalClock::new(hw, 0.1, CorrectionSemantics::Multiplicative).unwrap();
        NodeState::new(NodeId(0), lc, degree)
    }

    #[test]
    fn boundaries_identity_clock() {
        let n = node(1.0, 1);
        let p = params(60.0, 40.0);
        let times: Vec<f64> = (0..3).map(|k| n.boundary_real(k, &p).unwrap()).collect();
        assert_eq!(times, vec![0.0, 100.0, 200.0]);
    }

    #[test]
    fn boundaries_drifting_clock() {
        let n = node(1.01, 1);
        let p = params(60.0, 41.0);
        for k in 0..3u64 {
            let t = n.boundary_real(k, &p).unwrap();
            assert!((t - 100.0 * k as f64).abs() < 1e-9, "{t}");
        }
    }

    #[test]
    fn boundary_emits_one_request_per_neighbor() {
        let mut edges = Vec::new();
        for i in 1..5 {
            edges.push(Edge {
                u: NodeId(0),
                v: NodeId(i),
                params: EdgeParams::symmetric(1.0, 0.0, 0.1),
            });
        }
        let g = NetworkGraph::new(5, 10.0, edges).unwrap();
        let mut n = node(1.0, 4);
        let p = params(60.0, 40.0);
        let actions = n.cycle_boundary(0.0, &g, &p).unwrap();
        let sends: Vec<NodeId> = actions
            .iter()
            .filter_map(|a| match a {
                ProtocolAction::SendRequest { to, .. } => Some(*to),
                _ => None,
            })
            .collect();
        assert_eq!(sends, vec![NodeId(1), NodeId(2), NodeId(3), NodeId(4)]);
        assert!(actions.contains(&ProtocolAction::ScheduleEvaluate { real_time: 60.0 }));
        assert_eq!(n.phase, Phase::Measuring);
        assert_eq!(n.boundaries_fired(), 1);
    }

    #[test]
    fn out_of_order_boundary_is_rejected() {
        let g = two_node_graph();
        let mut n = node(1.0, 1);
        let p = params(60.0, 40.0);
        assert!(n.cycle_boundary(5.0, &g, &p).is_err());
    }

    #[test]
    fn evaluation_requires_fresh_views() {
        let g = two_node_graph();
        let mut n = node(1.0, 1);
        let p = params(60.0, 40.0);
        n.cycle_boundary(0.0, &g, &p).unwrap();
        assert!(n.evaluate(60.0, &g, &[1.0], &p, true).is_err());
        n.views[0] = Some(NeighborEstimate {
            neighbor: NodeId(1),
            d_avg: 1.0,
            offset: 1.9,
            estimate_deduction: 0.0,
            valid_cycle: 0,
        });
        n.phase = Phase::Measuring;
        let (ev, next) = n.evaluate(60.0, &g, &[1.0], &p, true).unwrap();
        assert_eq!(ev.decision, Decision::Fast);
        assert_eq!(n.mode(), Mode::Fast);
        // 40 local seconds at rate 1.1 → 100 − 60 = 40/1.1 real seconds later
        match next {
            ProtocolAction::ScheduleBoundary { real_time, cycle } => {
                assert_eq!(cycle, 1);
                assert!((real_time - (60.0 + 40.0 / 1.1)).abs() < 1e-9);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn disabled_correction_forces_own_rate() {
        let g = two_node_graph();
        let mut n = node(1.0, 1);
        let p = params(60.0, 40.0);
        n.cycle_boundary(0.0, &g, &p).unwrap();
        n.views[0] = Some(NeighborEstimate {
            neighbor: NodeId(1),
            d_avg: 1.0,
            offset: 1.9,
            estimate_deduction: 0.0,
            valid_cycle: 0,
        });
        let (ev, _) = n.evaluate(60.0, &g, &[1.0], &p, false).unwrap();
        assert_eq!(ev.decision, Decision::Fast);
        assert_eq!(ev.applied, Mode::OwnRate);
    }

    #[test]
    fn sigma_requires_drift() {
        assert!(sigma(0.01, 1.0).is_err());
        assert!((sigma(0.01, 1.001).unwrap() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn parameter_validation() {
        assert!(params(60.0, 40.0).validate(50.0).is_empty());
        assert_eq!(params(40.0, 40.0).validate(50.0).len(), 1);
        let mut p = params(60.0, 40.0);
        p.mu = 0.005;
        assert_eq!(p.validate(50.0).len(), 1);
    }
}
