//! Scenario documents: JSON format, validation and derived quantities.
//!
//! A scenario has four sections, `graph`, `clocks`, `gcs` and `sim`.
//! Unknown keys are rejected everywhere.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::clocks::{CorrectionSemantics, RateGenerator};
use crate::engine::rng::StreamRegistry;
use crate::gcs::GcsParams;
use crate::metrics::StaticBounds;
use crate::topology::{validate_graph, Edge, EdgeParams, NetworkGraph, NodeId};
use crate::twoway::timeout_window;

/// Why a scenario could not be used.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum ScenarioError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid scenario:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

/// One edge record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub u: usize,
    pub v: usize,
    pub fwd_delay: f64,
    pub bwd_delay: f64,
    #[serde(default)]
    pub jitter: f64,
    pub eps_d: f64,
    pub eps_m: f64,
    #[serde(default = "default_length")]
    pub length: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fwd_script: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bwd_script: Option<Vec<f64>>,
}

fn default_length() -> f64 {
    1.0
}

impl EdgeSpec {
    pub fn params(&self) -> EdgeParams {
        EdgeParams {
            fwd_delay: self.fwd_delay,
            bwd_delay: self.bwd_delay,
            jitter: self.jitter,
            eps_d: self.eps_d,
            eps_m: self.eps_m,
            length: self.length,
            fwd_script: self.fwd_script.clone(),
            bwd_script: self.bwd_script.clone(),
        }
    }
}

/// Shape used when a sweep changes the node count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphFamily {
    Line,
    Ring,
    Star,
    Complete,
}

impl GraphFamily {
    /// Endpoint pairs of the family on `n` nodes.
    pub fn pairs(self, n: usize) -> Vec<(usize, usize)> {
        match self {
            GraphFamily::Line => (1..n).map(|i| (i - 1, i)).collect(),
            GraphFamily::Ring if n <= 2 => (1..n).map(|i| (i - 1, i)).collect(),
            GraphFamily::Ring => (0..n).map(|i| (i, (i + 1) % n)).collect(),
            GraphFamily::Star => (1..n).map(|i| (0, i)).collect(),
            GraphFamily::Complete => (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    pub n: usize,
    pub d_max: f64,
    pub edges: Vec<EdgeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<GraphFamily>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeClockSpec {
    pub initial_value: f64,
    pub generator: RateGenerator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockSection {
    pub theta: f64,
    pub mu: f64,
    #[serde(default)]
    pub correction_semantics: CorrectionSemantics,
    pub nodes: Vec<NodeClockSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GcsSection {
    #[serde(rename = "T")]
    pub t_meas: f64,
    #[serde(rename = "T_stab")]
    pub t_stab: f64,
    pub p_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_max: Option<u32>,
    #[serde(default)]
    pub hysteresis: f64,
    #[serde(default = "default_true")]
    pub enabled: bool,
}

fn default_true() -> bool {
    true
}

/// When a run stops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Horizon {
    /// Until the slowest node has completed this many cycles.
    Cycles(u64),
    /// Until this real time.
    Seconds(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub horizon: Horizon,
    #[serde(default)]
    pub seed: u64,
    pub sample_dt: f64,
    #[serde(default = "default_true")]
    pub abort_on_violation: bool,
}

/// A scenario document as written on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub graph: GraphSection,
    pub clocks: ClockSection,
    pub gcs: GcsSection,
    pub sim: SimSection,
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).unwrap_or_default()
    }

    /// Hex SHA-256 of the compact serialization.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).unwrap_or_default();
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Copy with `n` nodes: edges are regenerated from the family using the
    /// first edge as template, node clocks are reused cyclically.
    pub fn with_node_count(&self, n: usize) -> Result<Self, ScenarioError> {
        let family = self.graph.family.ok_or_else(|| {
            ScenarioError::Invalid(vec!["changing n requires graph.family".into()])
        })?;
        let template = self
            .graph
            .edges
            .first()
            .ok_or_else(|| ScenarioError::Invalid(vec!["graph has no edge to use as template".into()]))?;
        if self.clocks.nodes.is_empty() {
            return Err(ScenarioError::Invalid(vec!["no node clocks to replicate".into()]));
        }
        let mut out = self.clone();
        out.graph.n = n;
        out.graph.edges = family
            .pairs(n)
            .into_iter()
            .map(|(u, v)| EdgeSpec {
                u,
                v,
                ..template.clone()
            })
            .collect();
        let old = &self.clocks.nodes;
        out.clocks.nodes = (0..n).map(|i| old[i % old.len()].clone()).collect();
        Ok(out)
    }
}

/// Validated scenario with derived quantities.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub graph: NetworkGraph,
    pub params: GcsParams,
    pub bounds: StaticBounds,
    /// Reply deadline in local time.
    pub timeout: f64,
    pub warnings: Vec<String>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        Self::new(ScenarioFile::from_json(text)?)
    }

    pub fn new(file: ScenarioFile) -> Result<Self, ScenarioError> {
        let mut errors = Vec::new();
        let mut warnings = Vec::new();

        let c = &file.clocks;
        let g = &file.graph;
        if c.nodes.len() != g.n {
            errors.push(format!(
                "clocks.nodes has {} entries but graph.n is {}",
                c.nodes.len(),
                g.n
            ));
        }
        let edges: Vec<Edge> = g
            .edges
            .iter()
            .map(|e| Edge {
                u: NodeId(e.u),
                v: NodeId(e.v),
                params: e.params(),
            })
            .collect();
        let graph = match NetworkGraph::new(g.n, g.d_max, edges) {
            Ok(graph) => {
                errors.extend(validate_graph(&graph).iter().map(|v| format!("graph: {v}")));
                Some(graph)
            }
            Err(e) => {
                errors.push(format!("graph: {e}"));
                None
            }
        };

        if !(c.theta >= 1.0) || !c.theta.is_finite() {
            errors.push(format!("clocks.theta {} must be >= 1", c.theta));
        } else if c.theta == 1.0 {
            errors.push(
                "sigma undefined: sigma = mu/(theta - 1) requires theta > 1, got theta = 1".into(),
            );
        }
        if c.mu <= c.theta && c.theta > 1.0 && c.mu > c.theta - 1.0 {
            warnings.push(format!(
                "mu {} <= theta {}: accepted because sigma > 1",
                c.mu, c.theta
            ));
        }
        let gs = &file.gcs;
        if !(gs.p_max >= 0.0) || !gs.p_max.is_finite() {
            errors.push(format!("gcs.p_max {} must be non-negative", gs.p_max));
        }
        let s = &file.sim;
        if !(s.sample_dt > 0.0) || !s.sample_dt.is_finite() {
            errors.push(format!("sim.sample_dt {} must be positive", s.sample_dt));
        }
        match s.horizon {
            Horizon::Cycles(0) => errors.push("sim.horizon.cycles must be positive".into()),
            Horizon::Seconds(x) if !(x > 0.0) || !x.is_finite() => {
                errors.push(format!("sim.horizon.seconds {x} must be positive"))
            }
            _ => {}
        }
        for (i, node) in c.nodes.iter().enumerate() {
            if !node.initial_value.is_finite() {
                errors.push(format!("clocks.nodes[{i}].initial_value must be finite"));
            }
            if let Ok(theta) = check_theta(c.theta) {
                // dry run of the generator: parameters only, the seed does not matter
                let mut reg = StreamRegistry::new(s.seed);
                let horizon = s.sample_dt.max(1.0);
                let gen = match reg.stream(&format!("validate/{i}")) {
                    Ok(mut rng) => node.generator.generate(theta, horizon, &mut rng),
                    Err(e) => Err(e),
                };
                if let Err(e) = gen {
                    errors.push(format!("clocks.nodes[{i}].generator: {e}"));
                }
            }
        }

        let max_eps_m = g.edges.iter().map(|e| e.eps_m).fold(0.0, f64::max);
        let timeout = timeout_window(g.d_max, gs.p_max, max_eps_m, c.theta.max(1.0));

        let mut params = GcsParams {
            theta: c.theta,
            mu: c.mu,
            t_meas: gs.t_meas,
            t_stab: gs.t_stab,
            s_max: gs.s_max.unwrap_or(1),
            hysteresis: gs.hysteresis,
        };
        errors.extend(params.validate(timeout).into_iter().map(|e| format!("gcs: {e}")));

        let bounds = match &graph {
            Some(graph) if errors.is_empty() => {
                match StaticBounds::compute(graph, c.theta, c.mu, gs.s_max) {
                    Ok(b) => Some(b),
                    Err(e) => {
                        errors.push(e.to_string());
                        None
                    }
                }
            }
            _ => None,
        };

        if let (Some(graph), Some(b)) = (&graph, &bounds) {
            errors.extend(initial_sync_violations(graph, b, &file));
            let semantics = c.correction_semantics;
            let drift = c.theta - 1.0;
            let fast_excess = semantics.max_rate(c.theta, c.mu) - 1.0;
            let budget = drift * (gs.t_meas + gs.p_max) + fast_excess * gs.t_stab;
            let min_eps_m = g.edges.iter().map(|e| e.eps_m).fold(f64::INFINITY, f64::min);
            if budget > min_eps_m {
                warnings.push(format!(
                    "estimate budget: drift over a cycle {budget} exceeds min eps_m {min_eps_m}; estimates may leave their error bound"
                ));
            }
        }

        if !errors.is_empty() {
            return Err(ScenarioError::Invalid(errors));
        }
        let (Some(graph), Some(bounds)) = (graph, bounds) else {
            return Err(ScenarioError::Invalid(vec!["internal: missing graph".into()]));
        };
        params.s_max = bounds.s_max;
        Ok(Self {
            file,
            graph,
            params,
            bounds,
            timeout,
            warnings,
        })
    }

    pub fn seed(&self) -> u64 {
        self.file.sim.seed
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.file.sim.seed = seed;
        self
    }

    pub fn hash(&self) -> String {
        self.file.hash()
    }
}

fn check_theta(theta: f64) -> Result<f64, ()> {
    if theta >= 1.0 && theta.is_finite() {
        Ok(theta)
    } else {
        Err(())
    }
}

/// Pairs whose initial hardware offset exceeds their weighted distance.
fn initial_sync_violations(graph: &NetworkGraph, b: &StaticBounds, file: &ScenarioFile) -> Vec<String> {
    let h: Vec<f64> = file.clocks.nodes.iter().map(|n| n.initial_value).collect();
    let mut out = Vec::new();
    for v in graph.nodes() {
        for w in graph.nodes() {
            let gap = h[v.0] - h[w.0];
            let d = b.distances.get(v, w);
            if gap > d + 1e-12 * d.max(1.0) {
                out.push(format!(
                    "initial synchronisation violated: H_{v}(0) - H_{w}(0) = {gap} > weighted distance {d}"
                ));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_node_json(extra_initial: f64) -> String {
        format!(
            r#"{{
  "graph": {{"n": 2, "d_max": 5,
    "edges": [{{"u": 0, "v": 1, "fwd_delay": 1, "bwd_delay": 1, "jitter": 0, "eps_d": 0.0, "eps_m": 0.5, "length": 1}}]}},
  "clocks": {{"theta": 1.001, "mu": 0.01, "nodes": [
    {{"initial_value": 0, "generator": {{"kind": "constant", "rate": 1.0}}}},
    {{"initial_value": {extra_initial}, "generator": {{"kind": "alternating", "start_fast": true}}}}]}},
  "gcs": {{"T": 12, "T_stab": 2, "p_max": 0.5}},
  "sim": {{"horizon": {{"cycles": 10}}, "seed": 1, "sample_dt": 1}}
}}"#
        )
    }

    #[test]
    fn parses_and_validates() {
        let s = Scenario::from_json(&two_node_json(0.5)).unwrap();
        assert_eq!(s.graph.node_count(), 2);
        assert!((s.timeout - (2.0 * 5.0 + 0.5 + 0.5) * 1.001).abs() < 1e-12);
        assert!(s.params.s_max >= 1);
    }

    #[test]
    fn parse_error_has_position() {
        match ScenarioFile::from_json("{\n  \"graph\": ,\n}") {
            Err(ScenarioError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = two_node_json(0.0).replace("\"p_max\"", "\"pmax\"");
        assert!(matches!(ScenarioFile::from_json(&text), Err(ScenarioError::Parse { .. })));
        let text = two_node_json(0.0).replace("\"rate\": 1.0", "\"rate\": 1.0, \"phase\": 2");
        assert!(matches!(ScenarioFile::from_json(&text), Err(ScenarioError::Parse { .. })));
    }

    #[test]
    fn initial_sync_gate() {
        // kappa = 2(1·0.001 + 0.5) = 1.002
        match Scenario::from_json(&two_node_json(5.0)) {
            Err(ScenarioError::Invalid(v)) => {
                assert!(v.iter().any(|m| m.contains("initial synchronisation")), "{v:?}")
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn theta_one_rejected() {
        let text = two_node_json(0.0).replace("1.001", "1.0");
        match Scenario::from_json(&text) {
            Err(ScenarioError::Invalid(v)) => assert!(v.iter().any(|m| m.contains("sigma undefined"))),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn short_measuring_window_rejected() {
        let text = two_node_json(0.0).replace("\"T\": 12", "\"T\": 5");
        assert!(matches!(Scenario::from_json(&text), Err(ScenarioError::Invalid(_))));
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = ScenarioFile::from_json(&two_node_json(0.0)).unwrap();
        let b = ScenarioFile::from_json(&two_node_json(0.0)).unwrap();
        let c = ScenarioFile::from_json(&two_node_json(0.25)).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn node_count_change_needs_family() {
        let mut f = ScenarioFile::from_json(&two_node_json(0.0)).unwrap();
        assert!(f.with_node_count(4).is_err());
        f.graph.family = Some(GraphFamily::Ring);
        let g = f.with_node_count(4).unwrap();
        assert_eq!(g.graph.edges.len(), 4);
        assert_eq!(g.clocks.nodes.len(), 4);
        assert_eq!(g.clocks.nodes[2], f.clocks.nodes[0]);
        assert!(Scenario::new(g).is_ok());
    }

    #[test]
    fn family_shapes() {
        assert_eq!(GraphFamily::Line.pairs(4).len(), 3);
        assert_eq!(GraphFamily::Ring.pairs(5).len(), 5);
        assert_eq!(GraphFamily::Star.pairs(6).len(), 5);
        assert_eq!(GraphFamily::Complete.pairs(5).len(), 10);
    }
}
