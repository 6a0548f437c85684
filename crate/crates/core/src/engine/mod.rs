//! Deterministic discrete-event simulation of a scenario.
//!
//! Events at equal times run in scheduling order. After all events at one
//! instant have run, the oracle samples every clock; clocks are linear
//! between events, so the sampled values are the exact breakpoints.

pub mod queue;
pub mod rng;
pub mod transport;

use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::clocks::{check_lipschitz, HardwareClock, LogicalClock, Mode};
use crate::error::{internal, Result};
use crate::gcs::{NodeState, Phase, ProtocolAction};
use crate::metrics::{
    fast_condition, global_skew, local_skew, oracle_tol, potential, slow_condition,
    structural_checks, BoundReport, GrowthTracker, Violation, ViolationKind,
};
use crate::scenario::{Horizon, Scenario};
use crate::topology::{EdgeIdx, NodeId};
use crate::trace::{EvaluationLog, MeasurementLog, Trace, TraceRow};
use crate::twoway::{compute_estimates, handle_request, MeasurementRecord};

use queue::{EventKind, EventQueue};
use rng::StreamRegistry;
use transport::DelaySampler;

/// Violations kept per kind; the rest are only counted.
pub const STORED_VIOLATIONS_PER_KIND: usize = 100;

/// Tolerance for oracle comparisons on estimates and potentials.
pub const ORACLE_TOL: f64 = 1e-9;

/// One mode switch of one node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeChange {
    pub t: f64,
    pub mode: Mode,
}

/// Per-run summary written as `summary.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub scenario_hash: String,
    pub seed: u64,
    pub cycles_completed: u64,
    pub end_time: f64,
    pub aborted: bool,
    pub bounds: BoundReport,
    pub violation_count: u64,
    pub violations_by_kind: BTreeMap<ViolationKind, u64>,
    pub evaluations: u64,
    pub measurements: u64,
    pub estimate_checks: u64,
    pub warnings: Vec<String>,
    pub mode_timelines: Vec<Vec<ModeChange>>,
    /// Wall-clock duration; excluded from the JSON so reruns are byte-identical.
    #[serde(skip)]
    pub wall_time: f64,
}

/// Extra observations used by tests and reports.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RunStats {
    /// `Ψ^s(0)` for `s = 1..=s_max`.
    pub initial_potential: Vec<f64>,
    /// First time the global skew exceeded its bound.
    pub first_global_exceedance: Option<f64>,
    pub first_local_exceedance: Option<f64>,
    /// Largest `L_w − L̃_w` seen at any evaluation, and the smallest.
    pub max_estimate_gap: f64,
    pub min_estimate_gap: f64,
    /// Largest `Ψ^s` per level.
    pub max_psi: Vec<f64>,
    pub samples: u64,
    pub trigger_level_checks: u64,
}

/// Result of [`run`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Trace,
    pub summary: RunSummary,
    /// Stored violations, at most [`STORED_VIOLATIONS_PER_KIND`] per kind, in time order.
    pub violations: Vec<Violation>,
    pub stats: RunStats,
}

impl RunOutput {
    pub fn count(&self, kind: ViolationKind) -> u64 {
        self.summary
            .violations_by_kind
            .get(&kind)
            .copied()
            .unwrap_or(0)
    }
}

struct Sim<'a> {
    sc: &'a Scenario,
    nodes: Vec<NodeState>,
    queue: EventQueue,
    /// Index `2·edge + dir`, dir 0 is `u → v`.
    delays: Vec<DelaySampler>,
    processing: Vec<ChaCha8Rng>,
    correction_enabled: bool,
    trace: Trace,
    violations: Vec<Violation>,
    counts: BTreeMap<ViolationKind, u64>,
    fatal: bool,
    stats: RunStats,
    growth: Vec<GrowthTracker>,
    prev_sample: Option<(f64, Vec<f64>)>,
    max_local: f64,
    max_global: f64,
    max_edge: Vec<f64>,
    row_due: bool,
    estimate_checks: u64,
}

fn direction(sc: &Scenario, from: NodeId, to: NodeId) -> Result<(EdgeIdx, usize)> {
    let e = sc
        .graph
        .edge_between(from, to)
        .ok_or_else(|| internal(format!("no edge {from} -> {to}")))?;
    let dir = usize::from(sc.graph.edge(e).u != from);
    Ok((e, dir))
}

impl<'a> Sim<'a> {
    fn new(sc: &'a Scenario) -> Result<Self> {
        let file = &sc.file;
        let theta = sc.params.theta;
        let n = sc.graph.node_count();
        let c = sc.params.cycle_len();
        let horizon = match file.sim.horizon {
            Horizon::Cycles(k) => (k as f64 + 2.0) * c,
            Horizon::Seconds(s) => s,
        } + c;
        let mut reg = StreamRegistry::new(file.sim.seed);
        let mut nodes = Vec::with_capacity(n);
        for (i, spec) in file.clocks.nodes.iter().enumerate() {
            let mut rng = reg.stream(&format!("clock/{i}"))?;
            let sched = spec.generator.generate(theta, horizon, &mut rng)?;
            let hw = HardwareClock::new(spec.initial_value, sched);
            let lc = LogicalClock::new(hw, file.clocks.mu, file.clocks.correction_semantics)?;
            nodes.push(NodeState::new(NodeId(i), lc, sc.graph.degree(NodeId(i))));
        }
        let mut delays = Vec::new();
        let mut processing = Vec::new();
        for e in sc.graph.edges() {
            let p = &e.params;
            for (from, to, base, script) in [
                (e.u, e.v, p.fwd_delay, &p.fwd_script),
                (e.v, e.u, p.bwd_delay, &p.bwd_script),
            ] {
                let rng = reg.stream(&format!("delay/{from}->{to}"))?;
                delays.push(DelaySampler::new(base, p.jitter, rng, script.clone()));
                processing.push(reg.stream(&format!("proc/{from}->{to}"))?);
            }
        }
        let s_max = sc.params.s_max;
        Ok(Self {
            sc,
            nodes,
            queue: EventQueue::new(),
            delays,
            processing,
            correction_enabled: file.gcs.enabled,
            trace: Trace {
                node_count: n,
                s_max,
                bound_local: sc.bounds.local_bound,
                bound_global: sc.bounds.global_bound,
                ..Default::default()
            },
            violations: Vec::new(),
            counts: BTreeMap::new(),
            fatal: false,
            stats: RunStats {
                min_estimate_gap: f64::INFINITY,
                max_psi: vec![0.0; s_max as usize],
                ..Default::default()
            },
            growth: vec![GrowthTracker::new(theta, ORACLE_TOL); n * s_max as usize],
            prev_sample: None,
            max_local: 0.0,
            max_global: 0.0,
            max_edge: vec![0.0; sc.graph.edges().len()],
            row_due: false,
            estimate_checks: 0,
        })
    }

    fn violate(&mut self, time: f64, kind: ViolationKind, detail: String) {
        let count = self.counts.entry(kind).or_insert(0);
        *count += 1;
        if (*count as usize) <= STORED_VIOLATIONS_PER_KIND {
            log::debug!("violation at {time}: {kind}: {detail}");
            self.violations.push(Violation { time, kind, detail });
        }
        if kind.is_fatal() {
            self.fatal = true;
        }
    }

    /// Samples a delay for `from → to`, checks it and returns it.
    fn deliver_delay(&mut self, t: f64, from: NodeId, to: NodeId) -> Result<f64> {
        let (e, dir) = direction(self.sc, from, to)?;
        let sampler = &mut self.delays[2 * e + dir];
        let (base, jitter) = (sampler.base(), sampler.jitter());
        let d = sampler.sample();
        if !(d >= base && d <= base + jitter && d < self.sc.graph.d_max()) {
            self.violate(
                t,
                ViolationKind::DelayBound,
                format!("delay {d} on {from}->{to} outside [{base}, {}]", base + jitter),
            );
        }
        Ok(d)
    }

    fn apply(&mut self, t: f64, node: NodeId, actions: Vec<ProtocolAction>) -> Result<()> {
        for a in actions {
            match a {
                ProtocolAction::SendRequest { to, msg } => {
                    let d = self.deliver_delay(t, node, to)?;
                    let cycle = self.nodes[node.0].cycle_index;
                    self.queue.push(
                        t + d,
                        EventKind::RequestArrival {
                            from: node,
                            to,
                            msg,
                            cycle,
                            sent_real: t,
                            fwd_delay: d,
                        },
                    );
                }
                ProtocolAction::ScheduleEvaluate { real_time } => {
                    let cycle = self.nodes[node.0].cycle_index;
                    self.queue.push(real_time, EventKind::Evaluate { node, cycle });
                }
                ProtocolAction::ScheduleBoundary { real_time, cycle } => {
                    self.queue
                        .push(real_time, EventKind::CycleBoundary { node, cycle });
                }
            }
        }
        Ok(())
    }

    fn values_at(&self, t: f64) -> Vec<f64> {
        self.nodes.iter().map(|n| n.logical.value_at(t)).collect()
    }

    fn handle(&mut self, t: f64, kind: EventKind) -> Result<()> {
        let sc = self.sc;
        match kind {
            EventKind::RateChange { node } => {
                let next = self.nodes[node.0]
                    .logical
                    .hardware()
                    .schedule
                    .next_change_after(t);
                if let Some(next) = next {
                    self.queue.push(next, EventKind::RateChange { node });
                }
            }
            EventKind::SampleTick { k } => {
                self.row_due = true;
                let dt = sc.file.sim.sample_dt;
                self.queue
                    .push((k + 1) as f64 * dt, EventKind::SampleTick { k: k + 1 });
            }
            EventKind::CycleBoundary { node, cycle } => {
                let st = &mut self.nodes[node.0];
                if cycle != st.boundaries_fired() {
                    return Err(internal(format!(
                        "node {node}: boundary {cycle} out of order"
                    )));
                }
                let actions = st.cycle_boundary(t, &sc.graph, &sc.params)?;
                self.apply(t, node, actions)?;
            }
            EventKind::RequestArrival {
                from,
                to,
                msg,
                cycle,
                sent_real,
                fwd_delay,
            } => {
                let l_w_t2 = self.nodes[to.0].logical.value_at(t);
                let (e, dir) = direction(sc, from, to)?;
                let p_max = sc.file.gcs.p_max;
                let p = if p_max > 0.0 {
                    self.processing[2 * e + dir].gen_range(0.0..=p_max)
                } else {
                    0.0
                };
                self.queue.push(
                    t + p,
                    EventKind::ReplyEmit {
                        responder: to,
                        requester: from,
                        msg,
                        l_w_t2,
                        cycle,
                        sent_real,
                        fwd_delay,
                        processing: p,
                    },
                );
            }
            EventKind::ReplyEmit {
                responder,
                requester,
                msg,
                l_w_t2,
                cycle,
                sent_real,
                fwd_delay,
                processing,
            } => {
                let l_w_t3 = self.nodes[responder.0].logical.value_at(t);
                let reply = handle_request(&msg, responder, l_w_t2, l_w_t3)?;
                let d = self.deliver_delay(t, responder, requester)?;
                self.queue.push(
                    t + d,
                    EventKind::ReplyArrival {
                        from: responder,
                        to: requester,
                        reply,
                        cycle,
                        sent_real,
                        fwd_delay,
                        processing,
                        bwd_delay: d,
                    },
                );
            }
            EventKind::ReplyArrival {
                from,
                to,
                reply,
                cycle,
                sent_real,
                fwd_delay,
                processing,
                bwd_delay,
            } => self.on_reply(t, from, to, reply, cycle, sent_real, fwd_delay, processing, bwd_delay)?,
            EventKind::Evaluate { node, cycle } => self.on_evaluate(t, node, cycle)?,
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn on_reply(
        &mut self,
        t: f64,
        from: NodeId,
        to: NodeId,
        reply: crate::twoway::ReplyMsg,
        cycle: u64,
        sent_real: f64,
        fwd_delay: f64,
        processing: f64,
        bwd_delay: f64,
    ) -> Result<()> {
        let sc = self.sc;
        let l_v_t4 = self.nodes[to.0].logical.value_at(t);
        let rec = MeasurementRecord::from_reply(&reply, l_v_t4, t);
        let rtt = rec.requester_span();
        let st = &self.nodes[to.0];
        if rtt > sc.timeout || st.cycle_index != cycle || st.phase != Phase::Measuring {
            self.violate(
                t,
                ViolationKind::Timeout,
                format!(
                    "reply {from}->{to} for cycle {cycle} took {rtt} local seconds (timeout {})",
                    sc.timeout
                ),
            );
            return Ok(());
        }
        let e = sc
            .graph
            .edge_between(from, to)
            .ok_or_else(|| internal("reply over missing edge"))?;
        let p = &sc.graph.edge(e).params;
        let est = compute_estimates(&rec, p.eps_d, p.eps_m, sc.params.theta, cycle)?;
        self.nodes[to.0].record_estimate(&sc.graph, est)?;
        let mid = 0.5 * (sent_real + t);
        let true_offset_mid =
            self.nodes[from.0].logical.value_at(mid) - self.nodes[to.0].logical.value_at(mid);
        self.trace.measurements.push(MeasurementLog {
            requester: to,
            responder: from,
            cycle,
            sent_real,
            completed_real: t,
            fwd_delay,
            bwd_delay,
            processing,
            d_avg: est.d_avg,
            offset: est.offset,
            deduction: est.estimate_deduction,
            true_offset_mid,
            round_trip_local: rtt,
        });
        Ok(())
    }

    fn on_evaluate(&mut self, t: f64, node: NodeId, cycle: u64) -> Result<()> {
        let sc = self.sc;
        let kappa = &sc.bounds.kappa;
        if self.nodes[node.0].cycle_index != cycle {
            return Err(internal(format!("node {node}: stale evaluation for cycle {cycle}")));
        }
        let missing: Vec<NodeId> = sc
            .graph
            .neighbors(node)
            .iter()
            .zip(&self.nodes[node.0].views)
            .filter(|(_, v)| v.map_or(true, |v| v.valid_cycle != cycle))
            .map(|(&(w, _), _)| w)
            .collect();
        if !missing.is_empty() {
            self.violate(
                t,
                ViolationKind::Timeout,
                format!("node {node} cycle {cycle}: no reply from {missing:?} before evaluation"),
            );
            self.fatal = true;
            return Ok(());
        }
        let values = self.values_at(t);
        let (ev, next) = self.nodes[node.0].evaluate(
            t,
            &sc.graph,
            kappa,
            &sc.params,
            self.correction_enabled,
        )?;
        self.stats.trigger_level_checks += u64::from(sc.params.s_max);
        if let Some((s1, s2)) = ev.levels.co_satisfied() {
            self.violate(
                t,
                ViolationKind::TriggerCoSatisfaction,
                format!("node {node}: slow trigger at level {s1} and fast trigger at level {s2}"),
            );
        }
        for view in &ev.views {
            let truth = values[view.neighbor.0];
            let gap = truth - view.estimate;
            self.estimate_checks += 1;
            self.stats.max_estimate_gap = self.stats.max_estimate_gap.max(gap);
            self.stats.min_estimate_gap = self.stats.min_estimate_gap.min(gap);
            if gap < -ORACLE_TOL || gap > view.kappa + ORACLE_TOL {
                self.violate(
                    t,
                    ViolationKind::EstimateSandwich,
                    format!(
                        "node {node} estimates {} at {} but true value is {truth} (bound {})",
                        view.neighbor, view.estimate, view.kappa
                    ),
                );
            }
        }
        if sc.params.hysteresis == 0.0 {
            for s in 1..=sc.params.s_max {
                let i = (s - 1) as usize;
                if fast_condition(&sc.graph, kappa, &values, node, s) && !ev.levels.fast[i] {
                    self.violate(
                        t,
                        ViolationKind::ConditionWithoutTrigger,
                        format!("node {node}: fast condition at level {s} without fast trigger"),
                    );
                }
                if slow_condition(&sc.graph, kappa, &values, node, s) && !ev.levels.slow[i] {
                    self.violate(
                        t,
                        ViolationKind::ConditionWithoutTrigger,
                        format!("node {node}: slow condition at level {s} without slow trigger"),
                    );
                }
            }
        }
        self.trace.evaluations.push(EvaluationLog {
            time: t,
            node,
            cycle,
            decision: ev.decision,
            applied: ev.applied,
        });
        self.apply(t, node, vec![next])
    }

    fn sample(&mut self, t: f64) {
        let sc = self.sc;
        let theta = sc.params.theta;
        let n = self.nodes.len();
        let s_max = sc.params.s_max;
        let values = self.values_at(t);
        self.stats.samples += 1;

        if let Some((t0, prev)) = self.prev_sample.take() {
            if t > t0 {
                let dt = t - t0;
                let max_rate = self.nodes[0].logical.semantics().max_rate(theta, sc.params.mu);
                for i in 0..n {
                    if !check_lipschitz(self.nodes[i].logical.hardware(), t0, t, theta) {
                        let detail = format!("node {i}: hardware rate envelope broken on [{t0}, {t}]");
                        self.violate(t, ViolationKind::Lipschitz, detail);
                    }
                    let dl = values[i] - prev[i];
                    let tol = oracle_tol(values[i]);
                    if dl < dt - tol || dl > max_rate * dt + tol {
                        let detail =
                            format!("node {i}: logical clock advanced {dl} over {dt} real seconds");
                        self.violate(t, ViolationKind::LogicalRate, detail);
                    }
                }
            }
        }

        let local = local_skew(&sc.graph, &values);
        let global = global_skew(&values);
        self.max_local = self.max_local.max(local);
        self.max_global = self.max_global.max(global);
        for (i, e) in sc.graph.edges().iter().enumerate() {
            let d = (values[e.u.0] - values[e.v.0]).abs();
            if d > self.max_edge[i] {
                self.max_edge[i] = d;
            }
        }
        let tol = oracle_tol(values.iter().fold(0.0f64, |m, x| m.max(x.abs())));
        if local > global + tol {
            self.violate(
                t,
                ViolationKind::SkewOrdering,
                format!("local skew {local} exceeds global skew {global}"),
            );
        }
        if local > sc.bounds.local_bound {
            self.stats.first_local_exceedance.get_or_insert(t);
            self.violate(
                t,
                ViolationKind::LocalBound,
                format!("local skew {local} > bound {}", sc.bounds.local_bound),
            );
        }
        if global > sc.bounds.global_bound {
            self.stats.first_global_exceedance.get_or_insert(t);
            self.violate(
                t,
                ViolationKind::GlobalBound,
                format!("global skew {global} > bound {}", sc.bounds.global_bound),
            );
        }

        let dist = &sc.bounds.distances;
        let mut psi_levels = vec![0.0f64; s_max as usize];
        for s in 1..=s_max {
            let si = (s - 1) as usize;
            for v in 0..n {
                let p = potential(&values, dist, NodeId(v), s);
                psi_levels[si] = psi_levels[si].max(p);
                if let Some((t0, excess)) = self.growth[si * n + v].observe(t, p) {
                    self.violate(
                        t,
                        ViolationKind::PotentialGrowth,
                        format!("node {v} level {s}: potential grew {excess} beyond drift allowance since {t0}"),
                    );
                }
            }
            self.stats.max_psi[si] = self.stats.max_psi[si].max(psi_levels[si]);
        }
        if self.prev_sample.is_none() && self.stats.samples == 1 {
            self.stats.initial_potential = psi_levels.clone();
            for (i, &p) in psi_levels.iter().enumerate() {
                if p != 0.0 {
                    self.violate(
                        t,
                        ViolationKind::InitialPotential,
                        format!("level {}: potential {p} at start", i + 1),
                    );
                }
            }
        }
        for (kind, detail) in structural_checks(&sc.graph, &sc.bounds.kappa, dist, &values, s_max) {
            self.violate(t, kind, detail);
        }

        if self.row_due {
            self.row_due = false;
            self.trace.rows.push(TraceRow {
                t_real: t,
                hardware: self
                    .nodes
                    .iter()
                    .map(|n| n.logical.hardware().value_at(t))
                    .collect(),
                modes: self.nodes.iter().map(|n| n.logical.mode_at(t)).collect(),
                logical: values.clone(),
                local_skew: local,
                global_skew: global,
                psi: psi_levels,
            });
        }
        self.prev_sample = Some((t, values));
    }

    fn cycles_completed(&self) -> u64 {
        self.nodes
            .iter()
            .map(|n| n.boundaries_fired().saturating_sub(1))
            .min()
            .unwrap_or(0)
    }

    fn run(mut self) -> Result<RunOutput> {
        let started = Instant::now();
        let sc = self.sc;
        for i in 0..self.nodes.len() {
            let node = NodeId(i);
            let t0 = self.nodes[i].boundary_real(0, &sc.params)?;
            self.queue
                .push(t0, EventKind::CycleBoundary { node, cycle: 0 });
            let next = self.nodes[i].logical.hardware().schedule.next_change_after(0.0);
            if let Some(next) = next {
                self.queue.push(next, EventKind::RateChange { node });
            }
        }
        self.queue.push(0.0, EventKind::SampleTick { k: 0 });

        let horizon = sc.file.sim.horizon;
        let mut end_time = 0.0;
        while let Some(t) = self.queue.peek_time() {
            if let Horizon::Seconds(s) = horizon {
                if t > s {
                    break;
                }
            }
            while self.queue.peek_time() == Some(t) {
                let ev = self.queue.pop().ok_or_else(|| internal("queue emptied"))?;
                self.handle(t, ev.kind)?;
            }
            self.sample(t);
            end_time = t;
            if self.fatal && sc.file.sim.abort_on_violation {
                break;
            }
            if let Horizon::Cycles(k) = horizon {
                if self.cycles_completed() >= k {
                    break;
                }
            }
        }
        if let Horizon::Seconds(s) = horizon {
            let aborted = self.fatal && sc.file.sim.abort_on_violation;
            if !aborted && end_time < s {
                self.row_due = true;
                self.sample(s);
                end_time = s;
            }
        }

        let aborted = self.fatal && sc.file.sim.abort_on_violation;
        let bounds = BoundReport::new(&sc.bounds, self.max_local, self.max_global, &self.max_edge);
        let mode_timelines = self
            .nodes
            .iter()
            .map(|n| {
                n.logical
                    .correction_log()
                    .iter()
                    .map(|s| ModeChange {
                        t: s.start,
                        mode: s.mode,
                    })
                    .collect()
            })
            .collect();
        let summary = RunSummary {
            scenario_hash: sc.hash(),
            seed: sc.seed(),
            cycles_completed: self.cycles_completed(),
            end_time,
            aborted,
            bounds,
            violation_count: self.counts.values().sum(),
            violations_by_kind: self.counts.clone(),
            evaluations: self.trace.evaluations.len() as u64,
            measurements: self.trace.measurements.len() as u64,
            estimate_checks: self.estimate_checks,
            warnings: sc.warnings.clone(),
            mode_timelines,
            wall_time: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "run finished at t={end_time} after {} cycles, {} violations, {:.3}s wall",
            summary.cycles_completed,
            summary.violation_count,
            summary.wall_time
        );
        let mut violations = self.violations;
        violations.sort_by(|a, b| a.time.total_cmp(&b.time));
        if self.stats.min_estimate_gap == f64::INFINITY {
            self.stats.min_estimate_gap = 0.0;
        }
        Ok(RunOutput {
            trace: self.trace,
            summary,
            violations,
            stats: self.stats,
        })
    }
}

/// Runs a validated scenario to its horizon.
///
/// Invariant breaches are reported in the output; `Err` means the engine
/// itself hit an inconsistency.
pub fn run(sc: &Scenario) -> Result<RunOutput> {
    Sim::new(sc)?.run()
}
