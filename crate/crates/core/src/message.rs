//! Simulated inter-robot transport with exact message accounting.
//!
//! Two wire patterns carry the shared contribution vectors: full broadcast
//! (every robot to every other, n²−n payloads per phase) and a ring that
//! passes running sums (n−1 to seed the head, then 2(n−1) per sweep). A
//! "message" is one payload vector from one sender to one receiver; delivery
//! is synchronous, ordered, and lossless. Counters are the contract here:
//! the best-response engine aggregates from its own authoritative state so
//! that both patterns produce bit-identical solves.

use crate::error::Error;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommMode {
    Broadcast,
    Ring,
}

impl CommMode {
    pub fn name(self) -> &'static str {
        match self {
            CommMode::Broadcast => "broadcast",
            CommMode::Ring => "ring",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "broadcast" => Some(CommMode::Broadcast),
            "ring" => Some(CommMode::Ring),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseTag {
    /// Initial share of per-robot greedy contributions.
    InitShare,
    /// Post-sweep share of updated contributions (broadcast pattern).
    SweepShare,
    /// Running-sum hop (ring pattern).
    RingSum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionMessage {
    pub sender: usize,
    pub payload: Vec<f64>,
    pub phase: PhaseTag,
}

impl ActionMessage {
    /// Individual shares carry contribution vectors, which are nonnegative up
    /// to solver noise; running sums are only checked for finiteness.
    pub fn new(sender: usize, payload: Vec<f64>, phase: PhaseTag) -> Result<Self> {
        if payload.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidAction(format!(
                "message payload from robot {sender} is not finite"
            )));
        }
        if phase != PhaseTag::RingSum {
            if let Some(bad) = payload.iter().find(|&&x| x < -1e-9) {
                return Err(Error::InvalidAction(format!(
                    "message payload from robot {sender} has negative entry {bad}"
                )));
            }
        }
        Ok(Self {
            sender,
            payload,
            phase,
        })
    }
}

#[derive(Debug, Clone)]
pub struct MessageTransport {
    mode: CommMode,
    n_robot: usize,
    sent_total: u64,
    sent_per_phase: Vec<u64>,
}

impl MessageTransport {
    pub fn new(mode: CommMode, n_robot: usize) -> Result<Self> {
        if n_robot == 0 {
            return Err(Error::EmptyFleet);
        }
        Ok(Self {
            mode,
            n_robot,
            sent_total: 0,
            sent_per_phase: Vec::new(),
        })
    }

    pub fn mode(&self) -> CommMode {
        self.mode
    }

    pub fn n_robot(&self) -> usize {
        self.n_robot
    }

    pub fn sent_total(&self) -> u64 {
        self.sent_total
    }

    /// One entry per completed phase, in execution order.
    pub fn sent_per_phase(&self) -> &[u64] {
        &self.sent_per_phase
    }

    fn record_phase(&mut self, count: u64) {
        self.sent_total += count;
        self.sent_per_phase.push(count);
    }

    /// Every robot sends its payload to every other robot: one phase of
    /// exactly n²−n messages. Returns per-recipient inboxes ordered by
    /// ascending sender id.
    pub fn broadcast_actions(
        &mut self,
        payloads: &[Vec<f64>],
        phase: PhaseTag,
    ) -> Result<Vec<Vec<ActionMessage>>> {
        if payloads.len() != self.n_robot {
            return Err(Error::WrongPayloadCount {
                expected: self.n_robot,
                actual: payloads.len(),
            });
        }
        let mut inboxes: Vec<Vec<ActionMessage>> = vec![Vec::new(); self.n_robot];
        let mut count = 0u64;
        for (sender, payload) in payloads.iter().enumerate() {
            let msg = ActionMessage::new(sender, payload.clone(), phase)?;
            for (recipient, inbox) in inboxes.iter_mut().enumerate() {
                if recipient != sender {
                    inbox.push(msg.clone());
                    count += 1;
                }
            }
        }
        self.record_phase(count);
        Ok(inboxes)
    }

    /// Initial collection: every non-head robot's payload travels to the ring
    /// head (the first id in `fleet_order`), costing n−1 messages. Returns
    /// the head's inbox.
    pub fn ring_init_collect(
        &mut self,
        fleet_order: &[usize],
        payloads: &[Vec<f64>],
    ) -> Result<Vec<ActionMessage>> {
        self.check_ring(fleet_order)?;
        if payloads.len() != self.n_robot {
            return Err(Error::WrongPayloadCount {
                expected: self.n_robot,
                actual: payloads.len(),
            });
        }
        let mut inbox = Vec::with_capacity(self.n_robot.saturating_sub(1));
        for &id in &fleet_order[1..] {
            inbox.push(ActionMessage::new(
                id,
                payloads[id].clone(),
                PhaseTag::InitShare,
            )?);
        }
        let count = inbox.len() as u64;
        self.record_phase(count);
        Ok(inbox)
    }

    /// One sweep of the running-sum protocol: the sum accumulates along the
    /// ring (n−1 hops), then the completed total travels back around (n−1
    /// hops). Each robot's view is the total minus its own payload, exactly
    /// the aggregate it needs for its best response. Returns views indexed by
    /// robot id.
    pub fn ring_pass_sum(
        &mut self,
        fleet_order: &[usize],
        payloads: &[Vec<f64>],
    ) -> Result<Vec<Vec<f64>>> {
        self.check_ring(fleet_order)?;
        if payloads.len() != self.n_robot {
            return Err(Error::WrongPayloadCount {
                expected: self.n_robot,
                actual: payloads.len(),
            });
        }
        let n_class = payloads.first().map(|p| p.len()).unwrap_or(0);
        for p in payloads {
            if p.len() != n_class {
                return Err(Error::DimensionMismatch {
                    context: "ring payload length",
                    expected: n_class,
                    actual: p.len(),
                });
            }
        }

        let mut count = 0u64;
        // Accumulation pass: each hop forwards the running sum.
        let mut running = payloads[fleet_order[0]].clone();
        for &id in &fleet_order[1..] {
            ActionMessage::new(id, running.clone(), PhaseTag::RingSum)?;
            count += 1;
            for (acc, x) in running.iter_mut().zip(&payloads[id]) {
                *acc += x;
            }
        }
        // Distribution pass: the completed total travels back to every robot.
        count += (self.n_robot - 1) as u64;
        self.record_phase(count);

        let mut views = vec![Vec::new(); self.n_robot];
        for &id in fleet_order {
            views[id] = running
                .iter()
                .zip(&payloads[id])
                .map(|(total, own)| total - own)
                .collect();
        }
        Ok(views)
    }

    fn check_ring(&self, fleet_order: &[usize]) -> Result<()> {
        if fleet_order.len() != self.n_robot {
            return Err(Error::BrokenRing(format!(
                "ring order has {} entries for {} robots",
                fleet_order.len(),
                self.n_robot
            )));
        }
        let mut seen = vec![false; self.n_robot];
        for &id in fleet_order {
            if id >= self.n_robot {
                return Err(Error::BrokenRing(format!("unknown robot id {id}")));
            }
            if seen[id] {
                return Err(Error::BrokenRing(format!("robot id {id} appears twice")));
            }
            seen[id] = true;
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(Error::BrokenRing(format!("robot id {missing} missing")));
        }
        Ok(())
    }
}
