//! Signaling procedures as a discrete-event simulation.
//!
//! Two procedures are modeled. Cluster formation runs once per mode-selection
//! round: for every remote/relay pair the base station configures both ends,
//! the relay announces discovery, the remote accepts or rejects against the
//! admission bound, an accepted pair exchanges a two-message security
//! handshake, and the formation outcome rides the relay's next uplink back to
//! the base station. The report cycle then delivers every device's periodic
//! uplink reports: remotes transmit over their D2D link and relays buffer and
//! forward the packets together with their own report, paying one control
//! plane establishment per wake-up; cellular devices connect directly.
//!
//! Every radio activity is booked as a timed episode against per-device
//! busy-until bookkeeping, so one device never has two overlapping episodes
//! and responses always follow their triggers. The event loop is
//! single-threaded and replay-deterministic under a seed; message loss is
//! disabled by default and, when enabled, draws from its own seeded stream.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::NodeId;
use crate::error::SimError;
use crate::geometry::{Device, DeviceId, TxMode};
use crate::seeds;
use crate::Result;

pub const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MessageKind {
    SibDciConfig,
    DiscoveryAnnouncement,
    DiscoveryResponse,
    SecurityExchange,
    FormationReport,
    Page,
    DataPacket,
    D2dAck,
    RelayForward,
    BsAck,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub kind: MessageKind,
    pub src: NodeId,
    pub dst: NodeId,
    pub payload_bits: u64,
    pub timestamp_s: f64,
}

/// Energy-relevant activity kinds. Sleep is implicit: all remaining time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EpisodeKind {
    Transmit { tx_dbm: f64 },
    Receive,
    PagingListen,
    ClockSync,
    CpEstablish,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub node: DeviceId,
    pub start_s: f64,
    pub duration_s: f64,
    pub kind: EpisodeKind,
    pub msg: Option<MessageKind>,
}

impl Episode {
    pub fn end_s(&self) -> f64 {
        self.start_s + self.duration_s
    }
}

/// Episode record of one simulation pass. `messages` is populated only when
/// message recording is enabled; episodes are always kept since the energy
/// accounting consumes them.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EventTrace {
    /// Accounting window in seconds; sleep power covers the non-episode part.
    pub horizon_s: f64,
    pub episodes: Vec<Episode>,
    pub messages: Vec<Message>,
}

impl EventTrace {
    /// Per-device end of the last booked episode; used to chain passes.
    pub fn busy_until(&self) -> BTreeMap<DeviceId, f64> {
        let mut m = BTreeMap::new();
        for e in &self.episodes {
            let entry = m.entry(e.node).or_insert(0.0f64);
            if e.end_s() > *entry {
                *entry = e.end_s();
            }
        }
        m
    }

    /// Concatenates another pass into this one.
    pub fn extend_from(&mut self, other: EventTrace) {
        self.episodes.extend(other.episodes);
        self.messages.extend(other.messages);
        if other.horizon_s > self.horizon_s {
            self.horizon_s = other.horizon_s;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrafficOrigin {
    /// Device-initiated reports (data waiting in the buffer).
    MobileOriginated,
    /// Network pages the device before every report.
    MobileTerminated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    /// Size of control messages (configs, announcements, acks), bits.
    pub control_bits: u64,
    /// Fixed reception time for base-station control messages; these ride
    /// robust broadcast channels, so their cost does not depend on the
    /// device's data rate.
    pub control_rx_s: f64,
    /// Per-message loss probability on D2D data transmissions.
    pub loss_probability: f64,
    /// Retransmission attempts after a loss before the cycle counts failed.
    pub max_retransmissions: u32,
    /// Record full message traces (episodes are always recorded).
    pub record_messages: bool,
    /// Delay before retrying a report that found its device mid-procedure.
    pub report_retry_s: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            control_bits: 256,
            control_rx_s: 0.010,
            loss_probability: 0.0,
            max_retransmissions: 3,
            record_messages: false,
            report_retry_s: 1.0,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.control_bits == 0 {
            return Err(SimError::Config("protocol.control_bits must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.loss_probability) {
            return Err(SimError::Config(
                "protocol.loss_probability must be within [0, 1]".into(),
            ));
        }
        if !(self.report_retry_s > 0.0) {
            return Err(SimError::Config("protocol.report_retry_s must be positive".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Role state machines
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RemoteState {
    Sleep,
    AwaitDiscovery,
    SecurityPending,
    Associated,
    AwaitAck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelayState {
    Idle,
    AwaitResponse,
    SecurityHandshake,
    Associated,
    AwaitBsAck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellularState {
    Sleep,
    AwaitAck,
}

/// What a remote does in response to a delivered message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RemoteAction {
    None,
    /// Answer a discovery announcement; `true` accepts the D2D link.
    SendResponse(bool),
    /// Reply with the second half of the security handshake.
    SendSecurity,
}

/// What a relay does in response to a delivered message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelayAction {
    None,
    SendAnnouncement,
    SendSecurity,
    /// Handshake complete: store the link and queue the formation report.
    EstablishPair,
    /// Remote declined: queue the rejection report.
    RejectPair,
    /// Acknowledge and buffer a received data packet.
    AckAndBuffer,
}

/// Remote-role transition table. `accept` is the remote's admission verdict
/// for a discovery announcement and is ignored for other messages.
pub fn remote_transition(
    state: RemoteState,
    msg: MessageKind,
    accept: bool,
) -> Result<(RemoteState, RemoteAction)> {
    use MessageKind::*;
    use RemoteState::*;
    Ok(match (state, msg) {
        (Sleep, SibDciConfig) => (AwaitDiscovery, RemoteAction::None),
        (AwaitDiscovery, DiscoveryAnnouncement) => {
            if accept {
                (SecurityPending, RemoteAction::SendResponse(true))
            } else {
                (Sleep, RemoteAction::SendResponse(false))
            }
        }
        (SecurityPending, SecurityExchange) => (Associated, RemoteAction::SendSecurity),
        (AwaitAck, D2dAck) => (Associated, RemoteAction::None),
        (s, Page) => (s, RemoteAction::None),
        (s, m) => {
            return Err(SimError::contract(
                "protocol",
                format!("remote fsm: no transition for ({s:?}, {m:?})"),
            ))
        }
    })
}

/// Relay-role transition table. `accept` mirrors the discovery response
/// verdict; `serving` is how many remotes the relay already serves and
/// decides whether a finished handshake parks in `Idle` or `Associated`.
pub fn relay_transition(
    state: RelayState,
    msg: MessageKind,
    accept: bool,
    serving: usize,
) -> Result<(RelayState, RelayAction)> {
    use MessageKind::*;
    use RelayState::*;
    let parked = if serving > 0 { Associated } else { Idle };
    Ok(match (state, msg) {
        (Idle | Associated, SibDciConfig) => (AwaitResponse, RelayAction::SendAnnouncement),
        (AwaitResponse, DiscoveryResponse) => {
            if accept {
                (SecurityHandshake, RelayAction::SendSecurity)
            } else {
                (parked, RelayAction::RejectPair)
            }
        }
        (SecurityHandshake, SecurityExchange) => (Associated, RelayAction::EstablishPair),
        (Associated | AwaitBsAck, DataPacket) => (state, RelayAction::AckAndBuffer),
        (AwaitBsAck, BsAck) => (parked, RelayAction::None),
        (s, Page) => (s, RelayAction::None),
        (s, m) => {
            return Err(SimError::contract(
                "protocol",
                format!("relay fsm: no transition for ({s:?}, {m:?})"),
            ))
        }
    })
}

/// Cellular-role transition table.
pub fn cellular_transition(state: CellularState, msg: MessageKind) -> Result<CellularState> {
    use CellularState::*;
    use MessageKind::*;
    Ok(match (state, msg) {
        (AwaitAck, BsAck) => Sleep,
        (s, Page) => s,
        (s, m) => {
            return Err(SimError::contract(
                "protocol",
                format!("cellular fsm: no transition for ({s:?}, {m:?})"),
            ))
        }
    })
}

// ---------------------------------------------------------------------------
// Pairings, outcomes, statistics
// ---------------------------------------------------------------------------

/// A remote/relay pairing fed into cluster formation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pairing {
    pub remote: DeviceId,
    pub relay: DeviceId,
    pub d2d_pathloss_db: f64,
    pub d2d_rate_bps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FormationStatus {
    Established,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormationOutcome {
    pub remote: DeviceId,
    pub relay: DeviceId,
    pub status: FormationStatus,
}

/// Formation reports a relay still owes the base station; they ride the
/// relay's next uplink.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingReports {
    pub bits: u64,
    pub count: u64,
}

/// Result of the formation pass.
#[derive(Debug, Clone, Default)]
pub struct FormationResult {
    pub trace: EventTrace,
    pub outcomes: Vec<FormationOutcome>,
    pub pending_uplink: BTreeMap<DeviceId, PendingReports>,
}

impl FormationResult {
    pub fn established(&self) -> impl Iterator<Item = &FormationOutcome> {
        self.outcomes
            .iter()
            .filter(|o| o.status == FormationStatus::Established)
    }
}

/// Delivery accounting for one report-cycle pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleStats {
    pub cellular_reports: u64,
    pub relay_own_reports: u64,
    pub remote_reports: u64,
    /// Remote packets acknowledged by their relay.
    pub remote_delivered: u64,
    /// Remote packets lost after exhausting retransmissions.
    pub remote_failed: u64,
    /// Remote packets a relay forwarded to the base station.
    pub remote_forwarded: u64,
}

// ---------------------------------------------------------------------------
// Event engine
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
enum EvKind {
    /// Kick off formation of the next queued pair of this relay.
    FormationNext { relay: DeviceId },
    /// A device's periodic report is due.
    ReportDue { device: DeviceId },
    /// Forward whatever is still buffered at the end of the horizon.
    Flush { relay: DeviceId },
    Deliver(Delivery),
}

#[derive(Debug, Clone)]
struct Delivery {
    kind: MessageKind,
    src: NodeId,
    dst: NodeId,
    bits: u64,
    accept: bool,
    /// (remote, relay) context for formation messages and D2D data.
    pair: Option<(DeviceId, DeviceId)>,
    attempt: u32,
    /// Packets carried by a RelayForward.
    forwarded_packets: u64,
}

struct QueuedEvent {
    time: f64,
    seq: u64,
    kind: EvKind,
}

impl PartialEq for QueuedEvent {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}
impl Eq for QueuedEvent {}
impl PartialOrd for QueuedEvent {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QueuedEvent {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.seq.cmp(&other.seq))
    }
}

#[derive(Debug)]
enum NodeRt {
    Remote {
        state: RemoteState,
        relay: DeviceId,
    },
    Relay {
        state: RelayState,
        serving: Vec<DeviceId>,
        buffered_bits: u64,
        buffered_packets: u64,
        pending_report_bits: u64,
        pending_report_count: u64,
        formation_queue: VecDeque<Pairing>,
    },
    Cellular {
        state: CellularState,
    },
    Silent,
}

struct Engine<'a> {
    cfg: &'a ProtocolConfig,
    devices: &'a BTreeMap<DeviceId, &'a Device>,
    cell_rate: &'a BTreeMap<DeviceId, f64>,
    d2d: &'a BTreeMap<(DeviceId, DeviceId), (f64, f64)>, // (pathloss, rate)
    admission_max_pathloss_db: f64,
    origin: TrafficOrigin,

    queue: BinaryHeap<Reverse<QueuedEvent>>,
    seq: u64,
    busy: BTreeMap<DeviceId, f64>,
    nodes: BTreeMap<DeviceId, NodeRt>,
    trace: EventTrace,
    outcomes: Vec<FormationOutcome>,
    stats: CycleStats,
    loss_rng: rand_chacha::ChaCha8Rng,
}

impl<'a> Engine<'a> {
    fn push(&mut self, time: f64, kind: EvKind) {
        self.seq += 1;
        self.queue.push(Reverse(QueuedEvent {
            time,
            seq: self.seq,
            kind,
        }));
    }

    fn busy_of(&self, node: DeviceId) -> f64 {
        self.busy.get(&node).copied().unwrap_or(0.0)
    }

    fn record_msg(&mut self, kind: MessageKind, src: NodeId, dst: NodeId, bits: u64, t: f64) {
        if self.cfg.record_messages {
            self.trace.messages.push(Message {
                kind,
                src,
                dst,
                payload_bits: bits,
                timestamp_s: t,
            });
        }
    }

    /// Books an episode for one device no earlier than `not_before`.
    fn book(
        &mut self,
        node: DeviceId,
        not_before: f64,
        duration: f64,
        kind: EpisodeKind,
        msg: Option<MessageKind>,
    ) -> f64 {
        let start = not_before.max(self.busy_of(node));
        self.busy.insert(node, start + duration);
        self.trace.episodes.push(Episode {
            node,
            start_s: start,
            duration_s: duration,
            kind,
            msg,
        });
        start + duration
    }

    /// Books a transmission occupying both endpoints for the same window;
    /// returns the delivery time.
    fn book_exchange(
        &mut self,
        tx: DeviceId,
        rx: Option<DeviceId>,
        not_before: f64,
        duration: f64,
        msg: MessageKind,
    ) -> f64 {
        let mut start = not_before.max(self.busy_of(tx));
        if let Some(rx) = rx {
            start = start.max(self.busy_of(rx));
        }
        let tx_dbm = self.devices[&tx].max_tx_power_dbm;
        self.busy.insert(tx, start + duration);
        self.trace.episodes.push(Episode {
            node: tx,
            start_s: start,
            duration_s: duration,
            kind: EpisodeKind::Transmit { tx_dbm },
            msg: Some(msg),
        });
        if let Some(rx) = rx {
            self.busy.insert(rx, start + duration);
            self.trace.episodes.push(Episode {
                node: rx,
                start_s: start,
                duration_s: duration,
                kind: EpisodeKind::Receive,
                msg: Some(msg),
            });
        }
        start + duration
    }

    /// Reception of a base-station control message (fixed duration).
    fn book_bs_control_rx(&mut self, node: DeviceId, not_before: f64, msg: MessageKind) -> f64 {
        let dur = self.cfg.control_rx_s;
        let end = self.book(node, not_before, dur, EpisodeKind::Receive, Some(msg));
        self.record_msg(msg, NodeId::Bs, NodeId::Device(node), self.cfg.control_bits, end);
        end
    }

    fn cell_rate_of(&self, node: DeviceId) -> Result<f64> {
        let r = self.cell_rate.get(&node).copied().unwrap_or(0.0);
        if r <= 0.0 {
            return Err(SimError::contract(
                "protocol",
                format!("device {node} scheduled on a cellular link with rate 0"),
            ));
        }
        Ok(r)
    }

    fn d2d_of(&self, remote: DeviceId, relay: DeviceId) -> Result<(f64, f64)> {
        let v = self.d2d.get(&(remote, relay)).copied();
        match v {
            Some((pl, rate)) if rate > 0.0 => Ok((pl, rate)),
            Some(_) => Err(SimError::contract(
                "protocol",
                format!("pair ({remote}, {relay}) scheduled on a D2D link with rate 0"),
            )),
            None => Err(SimError::contract(
                "protocol",
                format!("pair ({remote}, {relay}) has no evaluated D2D link"),
            )),
        }
    }

    // -- formation ---------------------------------------------------------

    fn on_formation_next(&mut self, relay: DeviceId, now: f64) -> Result<()> {
        let pairing = {
            let Some(NodeRt::Relay { formation_queue, .. }) = self.nodes.get_mut(&relay) else {
                return Err(SimError::contract("protocol", "formation for a non-relay node"));
            };
            match formation_queue.pop_front() {
                Some(p) => p,
                None => return Ok(()),
            }
        };

        // Base station configures both ends, then the relay announces.
        let relay_ready = self.book_bs_control_rx(relay, now, MessageKind::SibDciConfig);
        {
            let Some(NodeRt::Relay { state, serving, .. }) = self.nodes.get_mut(&relay) else {
                unreachable!()
            };
            let (next, action) =
                relay_transition(*state, MessageKind::SibDciConfig, false, serving.len())?;
            debug_assert_eq!(action, RelayAction::SendAnnouncement);
            *state = next;
        }

        let remote_ready = self.book_bs_control_rx(pairing.remote, now, MessageKind::SibDciConfig);
        {
            let Some(NodeRt::Remote { state, .. }) = self.nodes.get_mut(&pairing.remote) else {
                return Err(SimError::contract("protocol", "formation for a non-remote node"));
            };
            let (next, _) = remote_transition(*state, MessageKind::SibDciConfig, false)?;
            *state = next;
        }

        let (_, rate) = self.d2d_of(pairing.remote, pairing.relay)?;
        let dur = self.cfg.control_bits as f64 / rate;
        let deliver = self.book_exchange(
            pairing.relay,
            Some(pairing.remote),
            relay_ready.max(remote_ready),
            dur,
            MessageKind::DiscoveryAnnouncement,
        );
        self.record_msg(
            MessageKind::DiscoveryAnnouncement,
            NodeId::Device(pairing.relay),
            NodeId::Device(pairing.remote),
            self.cfg.control_bits,
            deliver,
        );
        self.push(
            deliver,
            EvKind::Deliver(Delivery {
                kind: MessageKind::DiscoveryAnnouncement,
                src: NodeId::Device(pairing.relay),
                dst: NodeId::Device(pairing.remote),
                bits: self.cfg.control_bits,
                accept: pairing.d2d_pathloss_db <= self.admission_max_pathloss_db,
                pair: Some((pairing.remote, pairing.relay)),
                attempt: 0,
                forwarded_packets: 0,
            }),
        );
        Ok(())
    }

    // -- report sessions ----------------------------------------------------

    fn on_report_due(&mut self, device: DeviceId, now: f64) -> Result<()> {
        let Some(node) = self.nodes.get(&device) else {
            return Err(SimError::contract("protocol", "report for unknown device"));
        };
        match node {
            NodeRt::Silent => Ok(()),
            NodeRt::Cellular { state } => {
                if *state != CellularState::Sleep {
                    self.push(now + self.cfg.report_retry_s, EvKind::ReportDue { device });
                    return Ok(());
                }
                self.start_cellular_session(device, now)
            }
            NodeRt::Remote { state, relay } => match state {
                RemoteState::Associated => {
                    let relay = *relay;
                    self.start_remote_session(device, relay, now)
                }
                RemoteState::Sleep => Ok(()), // pairing was rejected; no path this round
                _ => {
                    self.push(now + self.cfg.report_retry_s, EvKind::ReportDue { device });
                    Ok(())
                }
            },
            NodeRt::Relay { state, .. } => match state {
                RelayState::Idle | RelayState::Associated => self.start_forward_session(device, now),
                _ => {
                    self.push(now + self.cfg.report_retry_s, EvKind::ReportDue { device });
                    Ok(())
                }
            },
        }
    }

    fn book_wakeup_preamble(&mut self, device: DeviceId, now: f64, with_cp: bool) -> f64 {
        let model_now = if self.origin == TrafficOrigin::MobileTerminated {
            let end = self.book(
                device,
                now,
                0.010,
                EpisodeKind::PagingListen,
                Some(MessageKind::Page),
            );
            self.record_msg(MessageKind::Page, NodeId::Bs, NodeId::Device(device), self.cfg.control_bits, end);
            end
        } else {
            now
        };
        let t = self.book(device, model_now, 0.010, EpisodeKind::ClockSync, None);
        if with_cp {
            self.book(device, t, 0.010, EpisodeKind::CpEstablish, None)
        } else {
            t
        }
    }

    fn start_cellular_session(&mut self, device: DeviceId, now: f64) -> Result<()> {
        let rate = self.cell_rate_of(device)?;
        let ready = self.book_wakeup_preamble(device, now, true);
        let bits = self.devices[&device].traffic.packet_bits;
        let deliver = self.book_exchange(device, None, ready, bits as f64 / rate, MessageKind::DataPacket);
        self.record_msg(MessageKind::DataPacket, NodeId::Device(device), NodeId::Bs, bits, deliver);
        if let Some(NodeRt::Cellular { state }) = self.nodes.get_mut(&device) {
            *state = CellularState::AwaitAck;
        }
        self.stats.cellular_reports += 1;
        self.push(
            deliver,
            EvKind::Deliver(Delivery {
                kind: MessageKind::DataPacket,
                src: NodeId::Device(device),
                dst: NodeId::Bs,
                bits,
                accept: true,
                pair: None,
                attempt: 0,
                forwarded_packets: 0,
            }),
        );
        Ok(())
    }

    fn start_remote_session(&mut self, remote: DeviceId, relay: DeviceId, now: f64) -> Result<()> {
        let (_, rate) = self.d2d_of(remote, relay)?;
        // D2D uplink needs synchronization but no control-plane setup.
        let ready = self.book_wakeup_preamble(remote, now, false);
        self.stats.remote_reports += 1;
        if let Some(NodeRt::Remote { state, .. }) = self.nodes.get_mut(&remote) {
            *state = RemoteState::AwaitAck;
        }
        self.transmit_remote_packet(remote, relay, ready, rate, 0)
    }

    fn transmit_remote_packet(
        &mut self,
        remote: DeviceId,
        relay: DeviceId,
        not_before: f64,
        rate: f64,
        attempt: u32,
    ) -> Result<()> {
        let bits = self.devices[&remote].traffic.packet_bits;
        let deliver = self.book_exchange(
            remote,
            Some(relay),
            not_before,
            bits as f64 / rate,
            MessageKind::DataPacket,
        );
        self.record_msg(MessageKind::DataPacket, NodeId::Device(remote), NodeId::Device(relay), bits, deliver);
        self.push(
            deliver,
            EvKind::Deliver(Delivery {
                kind: MessageKind::DataPacket,
                src: NodeId::Device(remote),
                dst: NodeId::Device(relay),
                bits,
                accept: true,
                pair: Some((remote, relay)),
                attempt,
                forwarded_packets: 0,
            }),
        );
        Ok(())
    }

    fn start_forward_session(&mut self, relay: DeviceId, now: f64) -> Result<()> {
        let rate = self.cell_rate_of(relay)?;
        let ready = self.book_wakeup_preamble(relay, now, true);
        let (bits, packets, reports) = {
            let Some(NodeRt::Relay {
                state,
                buffered_bits,
                buffered_packets,
                pending_report_bits,
                pending_report_count,
                ..
            }) = self.nodes.get_mut(&relay)
            else {
                unreachable!()
            };
            let own = self.devices[&relay].traffic.packet_bits;
            let bits = own + *buffered_bits + *pending_report_bits;
            let packets = *buffered_packets;
            let reports = *pending_report_count;
            *buffered_bits = 0;
            *buffered_packets = 0;
            *pending_report_bits = 0;
            *pending_report_count = 0;
            *state = RelayState::AwaitBsAck;
            (bits, packets, reports)
        };
        self.stats.relay_own_reports += 1;
        let deliver = self.book_exchange(relay, None, ready, bits as f64 / rate, MessageKind::RelayForward);
        self.record_msg(MessageKind::RelayForward, NodeId::Device(relay), NodeId::Bs, bits, deliver);
        for _ in 0..reports {
            self.record_msg(MessageKind::FormationReport, NodeId::Device(relay), NodeId::Bs, self.cfg.control_bits, deliver);
        }
        self.push(
            deliver,
            EvKind::Deliver(Delivery {
                kind: MessageKind::RelayForward,
                src: NodeId::Device(relay),
                dst: NodeId::Bs,
                bits,
                accept: true,
                pair: None,
                attempt: 0,
                forwarded_packets: packets,
            }),
        );
        Ok(())
    }

    /// Flush forwards buffered packets without a fresh own report.
    fn start_flush_session(&mut self, relay: DeviceId, now: f64) -> Result<()> {
        let pending = {
            let Some(NodeRt::Relay {
                state,
                buffered_bits,
                buffered_packets,
                pending_report_bits,
                pending_report_count,
                ..
            }) = self.nodes.get_mut(&relay)
            else {
                unreachable!()
            };
            if *buffered_bits + *pending_report_bits == 0 {
                return Ok(());
            }
            if !matches!(*state, RelayState::Idle | RelayState::Associated) {
                None
            } else {
                let bits = *buffered_bits + *pending_report_bits;
                let packets = *buffered_packets;
                let reports = *pending_report_count;
                *buffered_bits = 0;
                *buffered_packets = 0;
                *pending_report_bits = 0;
                *pending_report_count = 0;
                *state = RelayState::AwaitBsAck;
                Some((bits, packets, reports))
            }
        };
        let Some((bits, packets, reports)) = pending else {
            self.push(now + self.cfg.report_retry_s, EvKind::Flush { relay });
            return Ok(());
        };
        let rate = self.cell_rate_of(relay)?;
        let ready = self.book_wakeup_preamble(relay, now, true);
        let deliver = self.book_exchange(relay, None, ready, bits as f64 / rate, MessageKind::RelayForward);
        self.record_msg(MessageKind::RelayForward, NodeId::Device(relay), NodeId::Bs, bits, deliver);
        for _ in 0..reports {
            self.record_msg(MessageKind::FormationReport, NodeId::Device(relay), NodeId::Bs, self.cfg.control_bits, deliver);
        }
        self.push(
            deliver,
            EvKind::Deliver(Delivery {
                kind: MessageKind::RelayForward,
                src: NodeId::Device(relay),
                dst: NodeId::Bs,
                bits,
                accept: true,
                pair: None,
                attempt: 0,
                forwarded_packets: packets,
            }),
        );
        Ok(())
    }

    // -- delivery dispatch ---------------------------------------------------

    fn on_deliver(&mut self, d: Delivery, now: f64) -> Result<()> {
        match d.dst {
            NodeId::Bs => self.on_bs_receive(d, now),
            NodeId::Device(dev) => {
                let role_kind = match self.nodes.get(&dev) {
                    Some(NodeRt::Remote { .. }) => 0,
                    Some(NodeRt::Relay { .. }) => 1,
                    Some(NodeRt::Cellular { .. }) => 2,
                    Some(NodeRt::Silent) | None => {
                        return Err(SimError::contract(
                            "protocol",
                            format!("message {:?} delivered to silent device {dev}", d.kind),
                        ))
                    }
                };
                match role_kind {
                    0 => self.on_remote_receive(dev, d, now),
                    1 => self.on_relay_receive(dev, d, now),
                    _ => self.on_cellular_receive(dev, d, now),
                }
            }
        }
    }

    fn on_bs_receive(&mut self, d: Delivery, now: f64) -> Result<()> {
        match d.kind {
            MessageKind::DataPacket => {
                // Direct cellular uplink: acknowledge to the sender.
                let NodeId::Device(src) = d.src else {
                    return Err(SimError::contract("protocol", "data packet from the BS"));
                };
                let rate = self.cell_rate_of(src)?;
                let dur = self.cfg.control_bits as f64 / rate;
                let end = self.book(src, now, dur, EpisodeKind::Receive, Some(MessageKind::BsAck));
                self.record_msg(MessageKind::BsAck, NodeId::Bs, NodeId::Device(src), self.cfg.control_bits, end);
                self.push(
                    end,
                    EvKind::Deliver(Delivery {
                        kind: MessageKind::BsAck,
                        src: NodeId::Bs,
                        dst: NodeId::Device(src),
                        bits: self.cfg.control_bits,
                        accept: true,
                        pair: None,
                        attempt: 0,
                        forwarded_packets: 0,
                    }),
                );
                Ok(())
            }
            MessageKind::RelayForward => {
                let NodeId::Device(src) = d.src else {
                    return Err(SimError::contract("protocol", "forward from the BS"));
                };
                self.stats.remote_forwarded += d.forwarded_packets;
                let rate = self.cell_rate_of(src)?;
                let dur = self.cfg.control_bits as f64 / rate;
                let end = self.book(src, now, dur, EpisodeKind::Receive, Some(MessageKind::BsAck));
                self.record_msg(MessageKind::BsAck, NodeId::Bs, NodeId::Device(src), self.cfg.control_bits, end);
                self.push(
                    end,
                    EvKind::Deliver(Delivery {
                        kind: MessageKind::BsAck,
                        src: NodeId::Bs,
                        dst: NodeId::Device(src),
                        bits: self.cfg.control_bits,
                        accept: true,
                        pair: None,
                        attempt: 0,
                        forwarded_packets: 0,
                    }),
                );
                Ok(())
            }
            k => Err(SimError::contract(
                "protocol",
                format!("bs cannot process message {k:?}"),
            )),
        }
    }

    fn on_remote_receive(&mut self, dev: DeviceId, d: Delivery, now: f64) -> Result<()> {
        let (state, relay) = match self.nodes.get(&dev) {
            Some(NodeRt::Remote { state, relay }) => (*state, *relay),
            _ => unreachable!(),
        };
        let (next, action) = remote_transition(state, d.kind, d.accept)?;
        if let Some(NodeRt::Remote { state, .. }) = self.nodes.get_mut(&dev) {
            *state = next;
        }
        match action {
            RemoteAction::None => Ok(()),
            RemoteAction::SendResponse(accept) => {
                let (_, rate) = self.d2d_of(dev, relay)?;
                let dur = self.cfg.control_bits as f64 / rate;
                let deliver =
                    self.book_exchange(dev, Some(relay), now, dur, MessageKind::DiscoveryResponse);
                self.record_msg(MessageKind::DiscoveryResponse, NodeId::Device(dev), NodeId::Device(relay), self.cfg.control_bits, deliver);
                self.push(
                    deliver,
                    EvKind::Deliver(Delivery {
                        kind: MessageKind::DiscoveryResponse,
                        src: NodeId::Device(dev),
                        dst: NodeId::Device(relay),
                        bits: self.cfg.control_bits,
                        accept,
                        pair: d.pair,
                        attempt: 0,
                        forwarded_packets: 0,
                    }),
                );
                Ok(())
            }
            RemoteAction::SendSecurity => {
                let (_, rate) = self.d2d_of(dev, relay)?;
                let dur = self.cfg.control_bits as f64 / rate;
                let deliver =
                    self.book_exchange(dev, Some(relay), now, dur, MessageKind::SecurityExchange);
                self.record_msg(MessageKind::SecurityExchange, NodeId::Device(dev), NodeId::Device(relay), self.cfg.control_bits, deliver);
                self.push(
                    deliver,
                    EvKind::Deliver(Delivery {
                        kind: MessageKind::SecurityExchange,
                        src: NodeId::Device(dev),
                        dst: NodeId::Device(relay),
                        bits: self.cfg.control_bits,
                        accept: true,
                        pair: d.pair,
                        attempt: 0,
                        forwarded_packets: 0,
                    }),
                );
                Ok(())
            }
        }
    }

    fn on_relay_receive(&mut self, dev: DeviceId, d: Delivery, now: f64) -> Result<()> {
        // Loss only applies to D2D data packets.
        if d.kind == MessageKind::DataPacket
            && self.cfg.loss_probability > 0.0
            && self.loss_rng.random_range(0.0..1.0) < self.cfg.loss_probability
        {
            let Some((remote, relay)) = d.pair else {
                return Err(SimError::contract("protocol", "d2d data without pair context"));
            };
            if d.attempt < self.cfg.max_retransmissions {
                let (_, rate) = self.d2d_of(remote, relay)?;
                return self.transmit_remote_packet(remote, relay, now, rate, d.attempt + 1);
            }
            self.stats.remote_failed += 1;
            if let Some(NodeRt::Remote { state, .. }) = self.nodes.get_mut(&remote) {
                *state = RemoteState::Associated; // gives up on this report
            }
            return Ok(());
        }

        let (state, serving_count) = match self.nodes.get(&dev) {
            Some(NodeRt::Relay { state, serving, .. }) => (*state, serving.len()),
            _ => unreachable!(),
        };
        let (next, action) = relay_transition(state, d.kind, d.accept, serving_count)?;
        if let Some(NodeRt::Relay { state, .. }) = self.nodes.get_mut(&dev) {
            *state = next;
        }

        match action {
            RelayAction::None => Ok(()),
            RelayAction::SendAnnouncement => unreachable!("announcements start in on_formation_next"),
            RelayAction::SendSecurity => {
                let Some((remote, relay)) = d.pair else {
                    return Err(SimError::contract("protocol", "security without pair context"));
                };
                let (_, rate) = self.d2d_of(remote, relay)?;
                let dur = self.cfg.control_bits as f64 / rate;
                let deliver =
                    self.book_exchange(dev, Some(remote), now, dur, MessageKind::SecurityExchange);
                self.record_msg(MessageKind::SecurityExchange, NodeId::Device(dev), NodeId::Device(remote), self.cfg.control_bits, deliver);
                self.push(
                    deliver,
                    EvKind::Deliver(Delivery {
                        kind: MessageKind::SecurityExchange,
                        src: NodeId::Device(dev),
                        dst: NodeId::Device(remote),
                        bits: self.cfg.control_bits,
                        accept: true,
                        pair: d.pair,
                        attempt: 0,
                        forwarded_packets: 0,
                    }),
                );
                Ok(())
            }
            RelayAction::EstablishPair => {
                let Some((remote, relay)) = d.pair else {
                    return Err(SimError::contract("protocol", "establish without pair context"));
                };
                self.outcomes.push(FormationOutcome {
                    remote,
                    relay,
                    status: FormationStatus::Established,
                });
                if let Some(NodeRt::Relay {
                    serving,
                    pending_report_bits,
                    pending_report_count,
                    ..
                }) = self.nodes.get_mut(&dev)
                {
                    serving.push(remote);
                    *pending_report_bits += self.cfg.control_bits;
                    *pending_report_count += 1;
                }
                self.push(now, EvKind::FormationNext { relay: dev });
                Ok(())
            }
            RelayAction::RejectPair => {
                let Some((remote, relay)) = d.pair else {
                    return Err(SimError::contract("protocol", "reject without pair context"));
                };
                self.outcomes.push(FormationOutcome {
                    remote,
                    relay,
                    status: FormationStatus::Rejected,
                });
                if let Some(NodeRt::Relay {
                    pending_report_bits,
                    pending_report_count,
                    ..
                }) = self.nodes.get_mut(&dev)
                {
                    *pending_report_bits += self.cfg.control_bits;
                    *pending_report_count += 1;
                }
                self.push(now, EvKind::FormationNext { relay: dev });
                Ok(())
            }
            RelayAction::AckAndBuffer => {
                let Some((remote, _)) = d.pair else {
                    return Err(SimError::contract("protocol", "data without pair context"));
                };
                self.stats.remote_delivered += 1;
                if let Some(NodeRt::Relay {
                    buffered_bits,
                    buffered_packets,
                    ..
                }) = self.nodes.get_mut(&dev)
                {
                    *buffered_bits += d.bits;
                    *buffered_packets += 1;
                }
                let (_, rate) = self.d2d_of(remote, dev)?;
                let dur = self.cfg.control_bits as f64 / rate;
                let deliver = self.book_exchange(dev, Some(remote), now, dur, MessageKind::D2dAck);
                self.record_msg(MessageKind::D2dAck, NodeId::Device(dev), NodeId::Device(remote), self.cfg.control_bits, deliver);
                self.push(
                    deliver,
                    EvKind::Deliver(Delivery {
                        kind: MessageKind::D2dAck,
                        src: NodeId::Device(dev),
                        dst: NodeId::Device(remote),
                        bits: self.cfg.control_bits,
                        accept: true,
                        pair: d.pair,
                        attempt: 0,
                        forwarded_packets: 0,
                    }),
                );
                Ok(())
            }
        }
    }

    fn on_cellular_receive(&mut self, dev: DeviceId, d: Delivery, _now: f64) -> Result<()> {
        let state = match self.nodes.get(&dev) {
            Some(NodeRt::Cellular { state }) => *state,
            _ => unreachable!(),
        };
        let next = cellular_transition(state, d.kind)?;
        if let Some(NodeRt::Cellular { state }) = self.nodes.get_mut(&dev) {
            *state = next;
        }
        Ok(())
    }

    fn run(&mut self) -> Result<()> {
        while let Some(Reverse(ev)) = self.queue.pop() {
            match ev.kind {
                EvKind::FormationNext { relay } => self.on_formation_next(relay, ev.time)?,
                EvKind::ReportDue { device } => self.on_report_due(device, ev.time)?,
                EvKind::Flush { relay } => self.start_flush_session(relay, ev.time)?,
                EvKind::Deliver(d) => self.on_deliver(d, ev.time)?,
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Public surface
// ---------------------------------------------------------------------------

/// Inputs shared by the formation and report-cycle passes.
pub struct LinkTables {
    /// Uplink cellular rate per device.
    pub cell_rate: BTreeMap<DeviceId, f64>,
    /// (pathloss, rate) per (remote, relay) pair.
    pub d2d: BTreeMap<(DeviceId, DeviceId), (f64, f64)>,
}

fn device_map(devices: &[Device]) -> BTreeMap<DeviceId, &Device> {
    devices.iter().map(|d| (d.id, d)).collect()
}

fn init_nodes(devices: &[Device], pairs: &[Pairing]) -> BTreeMap<DeviceId, NodeRt> {
    let mut nodes: BTreeMap<DeviceId, NodeRt> = BTreeMap::new();
    for d in devices {
        let rt = match d.mode {
            TxMode::Cellular => NodeRt::Cellular {
                state: CellularState::Sleep,
            },
            TxMode::Relay => NodeRt::Relay {
                state: RelayState::Idle,
                serving: Vec::new(),
                buffered_bits: 0,
                buffered_packets: 0,
                pending_report_bits: 0,
                pending_report_count: 0,
                formation_queue: VecDeque::new(),
            },
            TxMode::Remote => NodeRt::Remote {
                state: RemoteState::Sleep,
                relay: d.paired_relay.unwrap_or(DeviceId::MAX),
            },
            TxMode::Unreachable => NodeRt::Silent,
        };
        nodes.insert(d.id, rt);
    }
    for p in pairs {
        if let Some(NodeRt::Relay { formation_queue, .. }) = nodes.get_mut(&p.relay) {
            formation_queue.push_back(*p);
        }
    }
    nodes
}

/// Runs the cluster-formation procedure for the given pairings.
///
/// Pairs of one relay form sequentially; distinct relays proceed
/// concurrently. A pair whose D2D pathloss exceeds `admission_max_pathloss_db`
/// is rejected by the remote; the rejection still reaches the base station so
/// future rounds avoid the pairing.
pub fn run_formation(
    devices: &[Device],
    pairs: &[Pairing],
    admission_max_pathloss_db: f64,
    links: &LinkTables,
    cfg: &ProtocolConfig,
    seed: u64,
    start_after: &BTreeMap<DeviceId, f64>,
) -> Result<FormationResult> {
    cfg.validate()?;
    let dev_map = device_map(devices);
    let mut engine = Engine {
        cfg,
        devices: &dev_map,
        cell_rate: &links.cell_rate,
        d2d: &links.d2d,
        admission_max_pathloss_db,
        origin: TrafficOrigin::MobileOriginated,
        queue: BinaryHeap::new(),
        seq: 0,
        busy: start_after.clone(),
        nodes: init_nodes(devices, pairs),
        trace: EventTrace {
            horizon_s: 0.0,
            episodes: Vec::new(),
            messages: Vec::new(),
        },
        outcomes: Vec::new(),
        stats: CycleStats::default(),
        loss_rng: seeds::stream_rng(seed, seeds::STREAM_PROTOCOL),
    };

    let mut relays: Vec<DeviceId> = pairs.iter().map(|p| p.relay).collect();
    relays.sort_unstable();
    relays.dedup();
    for relay in relays {
        engine.push(0.0, EvKind::FormationNext { relay });
    }
    engine.run()?;

    let mut pending_uplink = BTreeMap::new();
    for (id, rt) in &engine.nodes {
        if let NodeRt::Relay {
            pending_report_bits,
            pending_report_count,
            ..
        } = rt
        {
            if *pending_report_bits > 0 {
                pending_uplink.insert(
                    *id,
                    PendingReports {
                        bits: *pending_report_bits,
                        count: *pending_report_count,
                    },
                );
            }
        }
    }

    let horizon = engine
        .trace
        .episodes
        .iter()
        .map(Episode::end_s)
        .fold(0.0f64, f64::max);
    engine.trace.horizon_s = horizon;
    Ok(FormationResult {
        trace: std::mem::take(&mut engine.trace),
        outcomes: std::mem::take(&mut engine.outcomes),
        pending_uplink,
    })
}

/// Runs the report cycle over `days` simulated days.
///
/// Every serving device reports `reports_per_day` times at a seeded phase
/// offset; remote devices must already be associated (their formation
/// episodes are passed through `start_after`). Any packets still buffered in
/// a relay at the horizon are flushed with one final forward.
#[allow(clippy::too_many_arguments)]
pub fn run_report_cycle(
    devices: &[Device],
    established: &[Pairing],
    links: &LinkTables,
    origin: TrafficOrigin,
    days: u32,
    cfg: &ProtocolConfig,
    seed: u64,
    start_after: &BTreeMap<DeviceId, f64>,
    pending_uplink: &BTreeMap<DeviceId, PendingReports>,
) -> Result<(EventTrace, CycleStats)> {
    cfg.validate()?;
    let dev_map = device_map(devices);
    let horizon_s = days as f64 * SECONDS_PER_DAY;

    let mut nodes = init_nodes(devices, &[]);
    // Associations formed earlier carry over into the cycle.
    for p in established {
        if let Some(NodeRt::Remote { state, relay }) = nodes.get_mut(&p.remote) {
            *state = RemoteState::Associated;
            *relay = p.relay;
        }
        if let Some(NodeRt::Relay { state, serving, .. }) = nodes.get_mut(&p.relay) {
            *state = RelayState::Associated;
            serving.push(p.remote);
        }
    }
    for (relay, pending) in pending_uplink {
        if let Some(NodeRt::Relay {
            pending_report_bits,
            pending_report_count,
            ..
        }) = nodes.get_mut(relay)
        {
            *pending_report_bits += pending.bits;
            *pending_report_count += pending.count;
        }
    }

    let mut engine = Engine {
        cfg,
        devices: &dev_map,
        cell_rate: &links.cell_rate,
        d2d: &links.d2d,
        admission_max_pathloss_db: f64::INFINITY,
        origin,
        queue: BinaryHeap::new(),
        seq: 0,
        busy: start_after.clone(),
        nodes,
        trace: EventTrace {
            horizon_s,
            episodes: Vec::new(),
            messages: Vec::new(),
        },
        outcomes: Vec::new(),
        stats: CycleStats::default(),
        loss_rng: seeds::stream_rng(seed, seeds::STREAM_PROTOCOL),
    };

    // Seeded per-device phase offsets, drawn in ascending id order.
    let mut phase_rng = seeds::stream_rng(seed, seeds::STREAM_PHASES);
    let mut ids: Vec<DeviceId> = devices.iter().map(|d| d.id).collect();
    ids.sort_unstable();
    for id in ids {
        let dev = dev_map[&id];
        let reports = dev.traffic.reports_per_day;
        if reports == 0 {
            continue;
        }
        let period = SECONDS_PER_DAY / reports as f64;
        let offset: f64 = phase_rng.random_range(0.0..period);
        if dev.mode == TxMode::Unreachable {
            continue; // no usable path; the device stays asleep this round
        }
        for k in 0..(reports as u64 * days as u64) {
            engine.push(offset + k as f64 * period, EvKind::ReportDue { device: id });
        }
    }
    for d in devices {
        if d.mode == TxMode::Relay {
            engine.push(horizon_s, EvKind::Flush { relay: d.id });
        }
    }

    engine.run()?;
    Ok((
        std::mem::take(&mut engine.trace),
        engine.stats,
    ))
}
