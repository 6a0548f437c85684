//! Run traces and their CSV form.

use std::io::{self, Write};

use serde::Serialize;

use crate::clocks::Mode;
use crate::gcs::Decision;
use crate::topology::NodeId;

/// Clock state and skew metrics at one sample tick.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub t_real: f64,
    pub logical: Vec<f64>,
    pub hardware: Vec<f64>,
    pub modes: Vec<Mode>,
    pub local_skew: f64,
    pub global_skew: f64,
    /// `Ψ^s` for `s = 1..=s_max`.
    pub psi: Vec<f64>,
}

/// One completed two-way exchange with the ground truth behind it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasurementLog {
    pub requester: NodeId,
    pub responder: NodeId,
    pub cycle: u64,
    pub sent_real: f64,
    pub completed_real: f64,
    pub fwd_delay: f64,
    pub bwd_delay: f64,
    pub processing: f64,
    pub d_avg: f64,
    pub offset: f64,
    pub deduction: f64,
    /// `L_w − L_v` at the real-time midpoint of the exchange.
    pub true_offset_mid: f64,
    /// `L_v(t4) − L_v(t1)`.
    pub round_trip_local: f64,
}

/// One trigger evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationLog {
    pub time: f64,
    pub node: NodeId,
    pub cycle: u64,
    pub decision: Decision,
    pub applied: Mode,
}

/// Everything recorded during a run.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Trace {
    pub node_count: usize,
    pub s_max: u32,
    pub bound_local: f64,
    pub bound_global: f64,
    pub rows: Vec<TraceRow>,
    pub measurements: Vec<MeasurementLog>,
    pub evaluations: Vec<EvaluationLog>,
}

impl Trace {
    pub fn csv_header(&self) -> String {
        let mut cols = vec!["t_real".to_string()];
        for i in 0..self.node_count {
            cols.push(format!("node_{i}_L"));
            cols.push(format!("node_{i}_H"));
            cols.push(format!("node_{i}_mode"));
        }
        cols.push("local_skew".into());
        cols.push("global_skew".into());
        for s in 1..=self.s_max {
            cols.push(format!("psi_s{s}"));
        }
        cols.push("bound_local".into());
        cols.push("bound_global".into());
        cols.join(",")
    }

    /// Writes the sample rows as CSV. Floats use Rust's shortest round-trip form.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", self.csv_header())?;
        let mut line = String::new();
        for r in &self.rows {
            line.clear();
            line.push_str(&r.t_real.to_string());
            for i in 0..self.node_count {
                line.push(',');
                line.push_str(&r.logical[i].to_string());
                line.push(',');
                line.push_str(&r.hardware[i].to_string());
                line.push(',');
                line.push_str(&r.modes[i].as_int().to_string());
            }
            for x in [r.local_skew, r.global_skew].iter().chain(&r.psi) {
                line.push(',');
                line.push_str(&x.to_string());
            }
            line.push(',');
            line.push_str(&self.bound_local.to_string());
            line.push(',');
            line.push_str(&self.bound_global.to_string());
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}
