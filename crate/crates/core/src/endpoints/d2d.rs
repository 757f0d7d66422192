//! Die-to-die link: the on-chip channel width is kept, but each flit
//! occupies the narrower off-chip PHY for several cycles.

use crate::config::D2dConfig;
use crate::noc::ChannelKind;

#[derive(Debug, Clone)]
pub struct D2dLink {
    cfg: D2dConfig,
    busy_until: [u64; 3],
    pub flits: [u64; 3],
    /// Cycles of the first and last flit sent per channel.
    pub first: [Option<u64>; 3],
    pub last: [Option<u64>; 3],
}

impl D2dLink {
    pub fn new(cfg: D2dConfig) -> Self {
        D2dLink {
            cfg,
            busy_until: [0; 3],
            flits: [0; 3],
            first: [None; 3],
            last: [None; 3],
        }
    }

    pub fn serialization(&self, ch: ChannelKind) -> u64 {
        match ch {
            ChannelKind::Wide => self.cfg.wide_serialization as u64,
            _ => self.cfg.narrow_serialization as u64,
        }
        .max(1)
    }

    pub fn crossing_latency(&self) -> u64 {
        self.cfg.crossing_latency as u64
    }

    pub fn can_send(&self, ch: ChannelKind, now: u64) -> bool {
        self.busy_until[ch.index()] <= now
    }

    /// Occupies the PHY for one flit. Serialization limits throughput only;
    /// the head still arrives after the fixed crossing latency.
    pub fn send(&mut self, ch: ChannelKind, now: u64) {
        debug_assert!(self.can_send(ch, now));
        self.busy_until[ch.index()] = now + self.serialization(ch);
        self.flits[ch.index()] += 1;
        self.first[ch.index()].get_or_insert(now);
        self.last[ch.index()] = Some(now);
    }

    /// Flits per cycle between the first send and the end of the last
    /// flit's serialization.
    pub fn throughput(&self, ch: ChannelKind) -> Option<f64> {
        let c = ch.index();
        let span = self.last[c]? - self.first[c]? + self.serialization(ch);
        Some(self.flits[c] as f64 / span as f64)
    }
}
