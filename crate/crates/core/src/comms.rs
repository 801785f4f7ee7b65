//! Unreliable radio links.
//!
//! Each directed link carries a two-state blackout chain that is stepped once
//! per send attempt; a message sent while the chain is in the blackout state
//! is dropped. Surviving messages are delayed by a log-normal draw, which is
//! what produces reordering.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng::{RngRoot, RngStream};
use crate::time::SimTime;

/// Log-normal delay parameters, in log-seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayModel {
    pub mu: f64,
    pub sigma: f64,
}

impl DelayModel {
    /// Picks `mu`/`sigma` so that `exp(mu - 3 sigma) = lower` and `exp(mu + 3 sigma) = upper`.
    pub fn from_three_sigma_bounds(lower: f64, upper: f64) -> Self {
        DelayModel {
            mu: (lower.ln() + upper.ln()) / 2.0,
            sigma: (upper.ln() - lower.ln()) / 6.0,
        }
    }

    pub fn median(&self) -> f64 {
        self.mu.exp()
    }
}

impl Default for DelayModel {
    fn default() -> Self {
        DelayModel::from_three_sigma_bounds(0.1, 10.0)
    }
}

/// Delay given either directly or through its 3-sigma bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum DelaySpec {
    LogNormal { mu: f64, sigma: f64 },
    Bounds { lower_s: f64, upper_s: f64 },
}

impl DelaySpec {
    pub fn model(&self) -> DelayModel {
        match *self {
            DelaySpec::LogNormal { mu, sigma } => DelayModel { mu, sigma },
            DelaySpec::Bounds { lower_s, upper_s } => DelayModel::from_three_sigma_bounds(lower_s, upper_s),
        }
    }
}

impl Default for DelaySpec {
    fn default() -> Self {
        DelaySpec::Bounds {
            lower_s: 0.1,
            upper_s: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkParams {
    /// Probability of entering blackout on a send, from the clear state.
    pub p_enter: f64,
    /// Probability of leaving blackout on a send, from the blackout state.
    pub p_exit: f64,
    pub delay: DelaySpec,
}

impl Default for LinkParams {
    fn default() -> Self {
        LinkParams {
            p_enter: 0.05,
            p_exit: 0.5,
            delay: DelaySpec::default(),
        }
    }
}

impl LinkParams {
    /// A link that never drops.
    pub fn lossless() -> Self {
        LinkParams {
            p_enter: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, p) in [("p_enter", self.p_enter), ("p_exit", self.p_exit)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} = {p} is not a probability"));
            }
        }
        let m = self.delay.model();
        if !(m.sigma > 0.0) || !m.mu.is_finite() {
            return Err(format!("delay needs finite mu and sigma > 0, got {m:?}"));
        }
        Ok(())
    }

    /// Long-run fraction of sends that are dropped.
    pub fn stationary_drop_rate(&self) -> f64 {
        if self.p_enter + self.p_exit == 0.0 {
            0.0
        } else {
            self.p_enter / (self.p_enter + self.p_exit)
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkStats {
    pub sent: u64,
    pub dropped: u64,
    pub delivered: u64,
    /// Deliveries that arrived after a message sent later than them.
    pub reordered: u64,
}

impl LinkStats {
    pub fn in_flight(&self) -> u64 {
        self.sent - self.dropped - self.delivered
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SendOutcome {
    Dropped { send_seq: u64 },
    Deliver { at: SimTime, send_seq: u64, delay: f64 },
}

#[derive(Debug, Clone)]
pub struct RadioLink {
    pub src: String,
    pub dst: String,
    params: LinkParams,
    delay: DelayModel,
    blackout: bool,
    rng: RngStream,
    stats: LinkStats,
    latest_delivered: Option<u64>,
}

impl RadioLink {
    pub fn new(src: &str, dst: &str, params: LinkParams, rng: RngStream) -> Self {
        RadioLink {
            src: src.to_string(),
            dst: dst.to_string(),
            delay: params.delay.model(),
            params,
            blackout: false,
            rng,
            stats: LinkStats::default(),
            latest_delivered: None,
        }
    }

    pub fn stream_name(src: &str, dst: &str) -> String {
        format!("link:{src}->{dst}")
    }

    pub fn params(&self) -> &LinkParams {
        &self.params
    }

    pub fn in_blackout(&self) -> bool {
        self.blackout
    }

    /// Steps the blackout chain, then either drops the message or schedules its arrival.
    pub fn send(&mut self, t: SimTime) -> SendOutcome {
        let send_seq = self.stats.sent;
        self.stats.sent += 1;
        let u: f64 = self.rng.random();
        self.blackout = if self.blackout {
            u >= self.params.p_exit
        } else {
            u < self.params.p_enter
        };
        if self.blackout {
            self.stats.dropped += 1;
            return SendOutcome::Dropped { send_seq };
        }
        let delay = self.sample_delay();
        SendOutcome::Deliver {
            at: t.after_secs(delay),
            send_seq,
            delay,
        }
    }

    /// One log-normal delay draw, seconds.
    pub fn sample_delay(&mut self) -> f64 {
        let z: f64 = self.rng.sample(StandardNormal);
        (self.delay.mu + self.delay.sigma * z).exp()
    }

    /// Accounts for an arrival; returns true when it arrived out of send order.
    pub fn record_delivery(&mut self, send_seq: u64) -> bool {
        self.stats.delivered += 1;
        match self.latest_delivered {
            Some(latest) if send_seq < latest => {
                self.stats.reordered += 1;
                true
            }
            _ => {
                self.latest_delivered = Some(send_seq);
                false
            }
        }
    }

    pub fn stats(&self) -> LinkStats {
        self.stats
    }
}

/// All links of one simulation, keyed by `(src, dst)`.
#[derive(Debug, Default)]
pub struct CommsModel {
    links: BTreeMap<(String, String), RadioLink>,
}

impl CommsModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_link(&mut self, rng: &mut RngRoot, src: &str, dst: &str, params: LinkParams) {
        let stream = rng.stream(&RadioLink::stream_name(src, dst));
        self.links.insert(
            (src.to_string(), dst.to_string()),
            RadioLink::new(src, dst, params, stream),
        );
    }

    pub fn link_mut(&mut self, src: &str, dst: &str) -> Option<&mut RadioLink> {
        self.links.get_mut(&(src.to_string(), dst.to_string()))
    }

    pub fn link(&self, src: &str, dst: &str) -> Option<&RadioLink> {
        self.links.get(&(src.to_string(), dst.to_string()))
    }

    pub fn links(&self) -> impl Iterator<Item = &RadioLink> {
        self.links.values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn link(params: LinkParams, seed: u64) -> RadioLink {
        let mut root = RngRoot::new(seed);
        RadioLink::new("A", "B", params, root.stream("link:A->B"))
    }

    #[test]
    fn default_bounds() {
        let m = DelayModel::default();
        assert!(m.mu.abs() < 1e-15);
        assert!((m.sigma - 100f64.ln() / 6.0).abs() < 1e-15);
        assert!(((m.mu - 3.0 * m.sigma).exp() - 0.1).abs() < 1e-12);
        assert!(((m.mu + 3.0 * m.sigma).exp() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn never_enters_blackout() {
        let mut l = link(LinkParams::lossless(), 3);
        for k in 0..1000 {
            assert!(matches!(l.send(SimTime::from_secs(k)), SendOutcome::Deliver { .. }));
        }
        assert_eq!(l.stats().dropped, 0);
    }

    #[test]
    fn absorbing_blackout() {
        let mut l = link(
            LinkParams {
                p_enter: 1.0,
                p_exit: 0.0,
                ..Default::default()
            },
            3,
        );
        for k in 0..100 {
            assert!(matches!(l.send(SimTime::from_secs(k)), SendOutcome::Dropped { .. }));
        }
        assert_eq!(
            l.stats(),
            LinkStats {
                sent: 100,
                dropped: 100,
                delivered: 0,
                reordered: 0
            }
        );
    }

    #[test]
    fn stats_start_at_zero() {
        assert_eq!(link(LinkParams::default(), 1).stats(), LinkStats::default());
    }

    #[test]
    fn counts_drops() {
        let mut l = link(LinkParams::default(), 11);
        let mut drops = 0;
        for k in 0..10 {
            if let SendOutcome::Dropped { .. } = l.send(SimTime::from_secs(k)) {
                drops += 1;
            }
        }
        assert_eq!(l.stats().sent, 10);
        assert_eq!(l.stats().dropped, drops);
        assert_eq!(l.stats().in_flight(), 10 - drops);
    }

    #[test]
    fn late_arrival_counts_as_reordered() {
        let mut l = link(LinkParams::lossless(), 1);
        // Sent at t (delay 9 s) and t + 1 s (delay 0.2 s): the second lands first.
        assert!(!l.record_delivery(1));
        assert!(l.record_delivery(0));
        assert_eq!(l.stats().reordered, 1);
    }

    #[test]
    fn degenerate_sigma_gives_constant_delay() {
        let mut l = link(
            LinkParams {
                delay: DelaySpec::LogNormal { mu: 0.5, sigma: 1e-9 },
                ..LinkParams::lossless()
            },
            5,
        );
        for _ in 0..100 {
            assert!((l.sample_delay() - 0.5f64.exp()).abs() < 1e-8);
        }
    }

    #[test]
    fn validation() {
        assert!(LinkParams::default().validate().is_ok());
        assert!(LinkParams {
            p_enter: 1.5,
            ..Default::default()
        }
        .validate()
        .is_err());
        let bad = LinkParams {
            delay: DelaySpec::LogNormal { mu: 0.0, sigma: 0.0 },
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!((LinkParams::default().stationary_drop_rate() - 0.05 / 0.55).abs() < 1e-15);
    }
}
