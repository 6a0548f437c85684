//! Ground-truth oracle: skews, potentials, conditions and skew bounds.
//!
//! Everything here reads true logical values. `values[i]` is always the
//! logical clock of node `i` at one instant.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::gcs::sigma;
use crate::topology::{DistanceMatrix, NetworkGraph, NodeId};

/// Maximum `|L_v − L_w|` over edges.
pub fn local_skew(g: &NetworkGraph, values: &[f64]) -> f64 {
    g.edges()
        .iter()
        .map(|e| (values[e.u.0] - values[e.v.0]).abs())
        .fold(0.0, f64::max)
}

/// `max_v L_v − min_w L_w`.
pub fn global_skew(values: &[f64]) -> f64 {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if values.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

fn level_factor(s: u32) -> f64 {
    f64::from(2 * s - 1)
}

/// `Ψ_v^s = max_w {L_w − L_v − (2s−1)·dist(v, w)}`; never negative.
pub fn potential(values: &[f64], dist: &DistanceMatrix, v: NodeId, s: u32) -> f64 {
    let k = level_factor(s);
    (0..values.len())
        .map(|w| values[w] - values[v.0] - k * dist.get(v, NodeId(w)))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `Ψ^s = max_v Ψ_v^s` together with the maximising `v` (lowest id on ties).
pub fn level_potential(values: &[f64], dist: &DistanceMatrix, s: u32) -> (f64, NodeId) {
    let mut best = (f64::NEG_INFINITY, NodeId(0));
    for v in 0..values.len() {
        let p = potential(values, dist, NodeId(v), s);
        if p > best.0 {
            best = (p, NodeId(v));
        }
    }
    best
}

/// The pair realising `Ψ^s`: `(ahead, reference, value)`. The ahead node is
/// the one the potential is measured to; lowest ids win ties.
pub fn leading_node(values: &[f64], dist: &DistanceMatrix, s: u32) -> (NodeId, NodeId, f64) {
    let k = level_factor(s);
    let n = values.len();
    let mut best = (NodeId(0), NodeId(0), f64::NEG_INFINITY);
    for v in 0..n {
        for w in 0..n {
            let x = values[w] - values[v] - k * dist.get(NodeId(v), NodeId(w));
            if x > best.2 {
                best = (NodeId(w), NodeId(v), x);
            }
        }
    }
    best
}

/// Slow condition on true clocks at level `s`.
pub fn slow_condition(g: &NetworkGraph, kappa: &[f64], values: &[f64], v: NodeId, s: u32) -> bool {
    slow_condition_tol(g, kappa, values, v, s, 0.0)
}

/// Fast condition on true clocks at level `s`.
pub fn fast_condition(g: &NetworkGraph, kappa: &[f64], values: &[f64], v: NodeId, s: u32) -> bool {
    fast_condition_tol(g, kappa, values, v, s, 0.0)
}

/// Slow condition with every clause relaxed by `tol`.
pub fn slow_condition_tol(
    g: &NetworkGraph,
    kappa: &[f64],
    values: &[f64],
    v: NodeId,
    s: u32,
    tol: f64,
) -> bool {
    let k = level_factor(s);
    let lv = values[v.0];
    let nb = g.neighbors(v);
    nb.iter().any(|&(x, e)| lv - values[x.0] >= k * kappa[e] - tol)
        && nb.iter().all(|&(y, e)| values[y.0] - lv <= k * kappa[e] + tol)
}

/// Fast condition with every clause relaxed by `tol`.
pub fn fast_condition_tol(
    g: &NetworkGraph,
    kappa: &[f64],
    values: &[f64],
    v: NodeId,
    s: u32,
    tol: f64,
) -> bool {
    let k = f64::from(2 * s);
    let lv = values[v.0];
    let nb = g.neighbors(v);
    nb.iter().any(|&(x, e)| values[x.0] - lv >= k * kappa[e] - tol)
        && nb.iter().all(|&(y, e)| lv - values[y.0] <= k * kappa[e] + tol)
}

/// The level and reference node making `w` trailing at level `s`, if any:
/// `L_v − L_w − 2s·dist(v, w)` equals `max_x {L_v − L_x − 2s·dist(v, x)} > 0`.
pub fn trailing_witness(values: &[f64], dist: &DistanceMatrix, w: NodeId, s: u32) -> Option<NodeId> {
    trailing_witness_tol(values, dist, w, s, 0.0)
}

fn trailing_witness_tol(values: &[f64], dist: &DistanceMatrix, w: NodeId, s: u32, tol: f64) -> Option<NodeId> {
    let k = f64::from(2 * s);
    let n = values.len();
    (0..n).map(NodeId).find(|&v| {
        let own = values[v.0] - values[w.0] - k * dist.get(v, w);
        if !(own > 0.0) {
            return false;
        }
        let best = (0..n)
            .map(|x| values[v.0] - values[x] - k * dist.get(v, NodeId(x)))
            .fold(f64::NEG_INFINITY, f64::max);
        own >= best - tol
    })
}

/// Whether `w` is trailing at some level in `1..=s_max`.
pub fn trailing_node(values: &[f64], dist: &DistanceMatrix, w: NodeId, s_max: u32) -> bool {
    (1..=s_max).any(|s| trailing_witness(values, dist, w, s).is_some())
}

/// Uniform local skew bound `2κ·⌈log_σ(G/κ)⌉`, never below `2κ`.
///
/// The second value is true when the formula itself gave less than `2κ`.
pub fn theorem2_bound(kappa: f64, g_bound: f64, sigma: f64) -> Result<(f64, bool)> {
    if !(sigma > 1.0) {
        return Err(param(format!("sigma {sigma} must exceed 1")));
    }
    if !(kappa > 0.0) {
        return Err(param(format!("kappa {kappa} must be positive")));
    }
    let levels = ((g_bound / kappa).ln() / sigma.ln()).ceil();
    let formula = 2.0 * kappa * levels;
    let floor = 2.0 * kappa;
    Ok(if formula < floor {
        (floor, true)
    } else {
        (formula, false)
    })
}

/// Global skew bound `(1 + 1/(σ − 1))·diameter`, with the diameter measured
/// in summed edge weights.
pub fn theorem3_bound(weighted_diameter: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 1.0) {
        return Err(param(format!("sigma {sigma} must exceed 1")));
    }
    Ok((1.0 + 1.0 / (sigma - 1.0)) * weighted_diameter)
}

/// Default trigger level cap `⌈log_σ(G/κ_min)⌉ + 1`.
pub fn default_s_max(g_bound: f64, kappa_min: f64, sigma: f64) -> u32 {
    let l = ((g_bound / kappa_min).ln() / sigma.ln()).ceil();
    if l.is_finite() && l > 0.0 {
        l as u32 + 1
    } else {
        1
    }
}

/// Per-edge local bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeBound {
    pub u: NodeId,
    pub v: NodeId,
    pub kappa: f64,
    pub bound: f64,
    pub degenerate: bool,
}

/// Everything that can be derived from the scenario without simulating.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticBounds {
    pub sigma: f64,
    /// `κ̂_e` per edge.
    pub kappa: Vec<f64>,
    pub kappa_min: f64,
    pub kappa_max: f64,
    pub distances: DistanceMatrix,
    pub weighted_diameter: f64,
    pub global_bound: f64,
    pub local_bound: f64,
    pub local_degenerate: bool,
    pub edge_bounds: Vec<EdgeBound>,
    pub s_max: u32,
}

impl StaticBounds {
    pub fn compute(g: &NetworkGraph, theta: f64, mu: f64, s_max_override: Option<u32>) -> Result<Self> {
        let sigma = sigma(mu, theta)?;
        let kappa = g.kappa_weights(theta)?;
        if let Some(i) = kappa.iter().position(|&k| !(k > 0.0)) {
            return Err(param(format!("edge {i} has non-positive kappa {}", kappa[i])));
        }
        let kappa_min = kappa.iter().copied().fold(f64::INFINITY, f64::min);
        let kappa_max = kappa.iter().copied().fold(0.0, f64::max);
        let distances = DistanceMatrix::new(g, &kappa);
        let weighted_diameter = distances.diameter();
        let global_bound = theorem3_bound(weighted_diameter, sigma)?;
        let (local_bound, local_degenerate) = if kappa.is_empty() {
            (0.0, true)
        } else {
            theorem2_bound(kappa_max, global_bound, sigma)?
        };
        let edge_bounds = g
            .edges()
            .iter()
            .zip(&kappa)
            .map(|(e, &k)| {
                let (bound, degenerate) = theorem2_bound(k, global_bound, sigma)?;
                Ok(EdgeBound {
                    u: e.u,
                    v: e.v,
                    kappa: k,
                    bound,
                    degenerate,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let s_max = match s_max_override {
            Some(s) => s,
            None if kappa.is_empty() => 1,
            None => default_s_max(global_bound, kappa_min, sigma),
        };
        Ok(Self {
            sigma,
            kappa,
            kappa_min,
            kappa_max,
            distances,
            weighted_diameter,
            global_bound,
            local_bound,
            local_degenerate,
            edge_bounds,
            s_max,
        })
    }
}

/// Bounds against observed maxima, serialized into run summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub sigma: f64,
    pub kappa_max: f64,
    pub weighted_diameter: f64,
    pub local_bound: f64,
    pub local_bound_degenerate: bool,
    pub global_bound: f64,
    pub max_observed_local: f64,
    pub max_observed_global: f64,
    pub local_satisfied: bool,
    pub global_satisfied: bool,
    /// Per edge: bound with that edge's own weight, and the largest observed offset.
    pub edges: Vec<EdgeReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeReport {
    pub u: NodeId,
    pub v: NodeId,
    pub kappa: f64,
    pub bound: f64,
    pub max_observed: f64,
    pub satisfied: bool,
}

impl BoundReport {
    pub fn new(b: &StaticBounds, max_local: f64, max_global: f64, max_edge: &[f64]) -> Self {
        Self {
            sigma: b.sigma,
            kappa_max: b.kappa_max,
            weighted_diameter: b.weighted_diameter,
            local_bound: b.local_bound,
            local_bound_degenerate: b.local_degenerate,
            global_bound: b.global_bound,
            max_observed_local: max_local,
            max_observed_global: max_global,
            local_satisfied: max_local <= b.local_bound,
            global_satisfied: max_global <= b.global_bound,
            edges: b
                .edge_bounds
                .iter()
                .zip(max_edge)
                .map(|(e, &m)| EdgeReport {
                    u: e.u,
                    v: e.v,
                    kappa: e.kappa,
                    bound: e.bound,
                    max_observed: m,
                    satisfied: m <= e.bound,
                })
                .collect(),
        }
    }

    pub fn satisfied(&self) -> bool {
        self.local_satisfied && self.global_satisfied
    }
}

/// One sample of the skew metrics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkewSample {
    pub t_real: f64,
    pub local_skew: f64,
    pub global_skew: f64,
    /// `Ψ^s` for `s = 1..=s_max`.
    pub psi: Vec<f64>,
    /// Ahead node of the `Ψ^1` maximising pair.
    pub leading_node: NodeId,
    /// `L_u − L_v` per edge.
    pub edge_offsets: Vec<f64>,
}

impl SkewSample {
    pub fn compute(t: f64, g: &NetworkGraph, dist: &DistanceMatrix, values: &[f64], s_max: u32) -> Self {
        Self {
            t_real: t,
            local_skew: local_skew(g, values),
            global_skew: global_skew(values),
            psi: (1..=s_max).map(|s| level_potential(values, dist, s).0).collect(),
            leading_node: leading_node(values, dist, 1).0,
            edge_offsets: g.edges().iter().map(|e| values[e.u.0] - values[e.v.0]).collect(),
        }
    }
}

/// Violation categories recorded during a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// Hardware clock left its rate envelope.
    Lipschitz,
    /// Logical clock left `[1, max rate]`.
    LogicalRate,
    /// A reply arrived after the timeout window.
    Timeout,
    /// Slow and fast trigger held together.
    TriggerCoSatisfaction,
    /// A true-clock condition held without its trigger.
    ConditionWithoutTrigger,
    /// An estimate left `[L_w − κ̂, L_w]`.
    EstimateSandwich,
    /// A node's potential grew faster than the drift allowance.
    PotentialGrowth,
    /// The ahead node of the maximising pair missed the slow condition.
    LeadingNode,
    /// A trailing node missed the fast condition.
    TrailingNode,
    /// Potential was positive at time zero.
    InitialPotential,
    LocalBound,
    GlobalBound,
    /// A sampled delay left its bounds.
    DelayBound,
    /// Local skew exceeded global skew.
    SkewOrdering,
}

impl ViolationKind {
    /// Kinds that abort a run when aborting is enabled.
    pub fn is_fatal(self) -> bool {
        matches!(
            self,
            ViolationKind::Lipschitz
                | ViolationKind::LogicalRate
                | ViolationKind::Timeout
                | ViolationKind::TriggerCoSatisfaction
        )
    }
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default();
        f.write_str(&s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub time: f64,
    pub kind: ViolationKind,
    pub detail: String,
}

/// Online potential-growth check for one series: every new value must satisfy
/// `Ψ(t1) − (ϑ−1)·t1 ≤ Ψ(t0) − (ϑ−1)·t0` for every earlier sample `t0`.
#[derive(Debug, Clone)]
pub struct GrowthTracker {
    drift: f64,
    tol: f64,
    running_min: f64,
    argmin_time: f64,
}

impl GrowthTracker {
    pub fn new(theta: f64, tol: f64) -> Self {
        Self {
            drift: theta - 1.0,
            tol,
            running_min: f64::INFINITY,
            argmin_time: 0.0,
        }
    }

    /// Records a sample and returns `(t0, excess)` when it breaks the inequality.
    pub fn observe(&mut self, t: f64, psi: f64) -> Option<(f64, f64)> {
        let f = psi - self.drift * t;
        let out = if f > self.running_min + self.tol {
            Some((self.argmin_time, f - self.running_min))
        } else {
            None
        };
        if f < self.running_min {
            self.running_min = f;
            self.argmin_time = t;
        }
        out
    }
}

/// A pair of samples breaking the potential-growth inequality.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthViolation {
    pub node: NodeId,
    pub t0: f64,
    pub t1: f64,
    pub excess: f64,
}

/// Scans sampled per-node potentials at one level.
///
/// `psi[k][v]` is `Ψ_v^s` at `times[k]`; times must be non-decreasing.
pub fn corollary1_check(times: &[f64], psi: &[Vec<f64>], theta: f64) -> Vec<GrowthViolation> {
    let n = psi.first().map_or(0, Vec::len);
    let mut trackers = vec![GrowthTracker::new(theta, 1e-9); n];
    let mut out = Vec::new();
    for (&t, row) in times.iter().zip(psi) {
        for (v, tr) in trackers.iter_mut().enumerate() {
            if let Some((t0, excess)) = tr.observe(t, row[v]) {
                out.push(GrowthViolation {
                    node: NodeId(v),
                    t0,
                    t1: t,
                    excess,
                });
            }
        }
    }
    out
}

/// Relative tolerance used by oracle checks on clock values of magnitude `scale`.
pub fn oracle_tol(scale: f64) -> f64 {
    1e-9_f64.max(4.0 * f64::EPSILON * scale.abs())
}

/// Checks the leading-node and trailing-node properties at one instant.
pub fn structural_checks(
    g: &NetworkGraph,
    kappa: &[f64],
    dist: &DistanceMatrix,
    values: &[f64],
    s_max: u32,
) -> Vec<(ViolationKind, String)> {
    let scale = values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let tol = oracle_tol(scale);
    let mut out = Vec::new();
    for s in 1..=s_max {
        let (ahead, reference, value) = leading_node(values, dist, s);
        if value > tol && !slow_condition_tol(g, kappa, values, ahead, s, tol) {
            out.push((
                ViolationKind::LeadingNode,
                format!("level {s}: node {ahead} leads {reference} by potential {value} without slow condition"),
            ));
        }
        for w in g.nodes() {
            if let Some(v) = trailing_witness_tol(values, dist, w, s, tol) {
                let own = values[v.0] - values[w.0] - f64::from(2 * s) * dist.get(v, w);
                if own > tol && !fast_condition_tol(g, kappa, values, w, s, tol) {
                    out.push((
                        ViolationKind::TrailingNode,
                        format!("level {s}: node {w} trails {v} without fast condition"),
                    ));
                }
            }
        }
    }
    out
}
