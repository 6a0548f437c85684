//! Two-way measurement: request/reply timestamps and the offset algebra.

use serde::{Deserialize, Serialize};

use crate::clocks::LogicalClock;
use crate::error::{internal, param, Error, Result};
use crate::topology::{EdgeParams, NodeId};

/// Request sent by `sender` carrying its logical time at emission.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RequestMsg {
    pub sender: NodeId,
    pub l_v_t1: f64,
}

/// Reply from `responder` with its arrival/emission timestamps and the echoed request time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplyMsg {
    pub responder: NodeId,
    pub l_w_t2: f64,
    pub l_w_t3: f64,
    pub l_v_t1_echo: f64,
}

/// The four timestamps of one completed exchange.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub neighbor: NodeId,
    pub l_v_t1: f64,
    pub l_w_t2: f64,
    pub l_w_t3: f64,
    pub l_v_t4: f64,
    pub completed_at_real: f64,
}

impl MeasurementRecord {
    pub fn from_reply(reply: &ReplyMsg, l_v_t4: f64, completed_at_real: f64) -> Self {
        Self {
            neighbor: reply.responder,
            l_v_t1: reply.l_v_t1_echo,
            l_w_t2: reply.l_w_t2,
            l_w_t3: reply.l_w_t3,
            l_v_t4,
            completed_at_real,
        }
    }

    /// Round-trip time on the requester's clock, `t_v`.
    pub fn requester_span(&self) -> f64 {
        self.l_v_t4 - self.l_v_t1
    }

    /// Processing time on the responder's clock, `t_w`.
    pub fn responder_span(&self) -> f64 {
        self.l_w_t3 - self.l_w_t2
    }
}

/// Derived neighbour estimate, valid for one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborEstimate {
    pub neighbor: NodeId,
    pub d_avg: f64,
    /// `õ`: estimated `L_w − L_v`.
    pub offset: f64,
    /// `d_avg·(ε_d + ϑ − 1) + ε_m`.
    pub estimate_deduction: f64,
    pub valid_cycle: u64,
}

/// Reply deadline in the sender's local time: `(2·d_max + p_max + eps_m)·theta`.
pub fn timeout_window(d_max: f64, p_max: f64, eps_m: f64, theta: f64) -> f64 {
    (2.0 * d_max + p_max + eps_m) * theta
}

/// Builds the reply. `l_w_t2` is the responder's logical time at arrival and
/// `l_w_t3` its logical time when the reply leaves, after processing.
pub fn handle_request(req: &RequestMsg, responder: NodeId, l_w_t2: f64, l_w_t3: f64) -> Result<ReplyMsg> {
    if l_w_t3 < l_w_t2 {
        return Err(internal(format!(
            "reply emitted at local {l_w_t3} before arrival at {l_w_t2}"
        )));
    }
    Ok(ReplyMsg {
        responder,
        l_w_t2,
        l_w_t3,
        l_v_t1_echo: req.l_v_t1,
    })
}

/// Reply computed from the responder's clock: the request arrives at real
/// time `arrival_real` and processing takes `processing_real` seconds.
///
/// The clock's correction log must already cover the processing window.
pub fn respond(
    req: &RequestMsg,
    responder: NodeId,
    clock: &LogicalClock,
    arrival_real: f64,
    processing_real: f64,
) -> Result<ReplyMsg> {
    if !(processing_real >= 0.0) {
        return Err(param(format!("processing delay {processing_real} must be non-negative")));
    }
    let t2 = clock.value(arrival_real)?;
    let t3 = clock.value(arrival_real + processing_real)?;
    handle_request(req, responder, t2, t3)
}

/// Delay and offset estimates from one exchange, tagged with `cycle`.
pub fn compute_estimates(
    rec: &MeasurementRecord,
    eps_d: f64,
    eps_m: f64,
    theta: f64,
    cycle: u64,
) -> Result<NeighborEstimate> {
    let d_avg = (rec.requester_span() - rec.responder_span()) / 2.0;
    if d_avg < 0.0 {
        return Err(internal(format!(
            "negative average delay {d_avg} for neighbor {}",
            rec.neighbor
        )));
    }
    let offset = ((rec.l_w_t2 - rec.l_v_t1) + (rec.l_w_t3 - rec.l_v_t4)) / 2.0;
    Ok(NeighborEstimate {
        neighbor: rec.neighbor,
        d_avg,
        offset,
        estimate_deduction: d_avg * (eps_d + theta - 1.0) + eps_m,
        valid_cycle: cycle,
    })
}

/// `L̃_w = L_v(now) + õ − deduction`. Fails if the estimate is from another cycle.
pub fn estimate_value(est: &NeighborEstimate, l_v_now: f64, current_cycle: u64) -> Result<f64> {
    if est.valid_cycle != current_cycle {
        return Err(Error::Usage(format!(
            "estimate for neighbor {} is from cycle {}, current cycle is {current_cycle}",
            est.neighbor, est.valid_cycle
        )));
    }
    Ok(l_v_now + est.offset - est.estimate_deduction)
}

/// Time-varying estimation error `2·(u + max_delay·(ϑ − 1))`.
pub fn estimation_error(e: &EdgeParams, observed_u: f64, theta: f64) -> f64 {
    2.0 * (observed_u + e.max_delay() * (theta - 1.0))
}

/// Relative frequency uncertainty after averaging `n` measurements over window `t`.
pub fn averaged_uncertainty(eps_m: f64, t: f64, n: u32) -> Result<f64> {
    if !(t > 0.0) {
        return Err(param(format!("averaging window {t} must be positive")));
    }
    if n == 0 {
        return Err(param("measurement count must be positive"));
    }
    Ok(eps_m / (f64::from(n).sqrt() * t))
}
