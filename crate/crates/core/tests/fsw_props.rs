//! Properties of the demo flight software's sync protocol and nav queue.

use std::collections::BTreeMap;

use proptest::prelude::*;
use spacesim::fsw::messages::{Message, SyncKind};
use spacesim::fsw::nav::{NavEntry, NavPolicy, NavQueue};
use spacesim::fsw::sync::{ObservationStateMachine, Protocol, Role, Source};
use spacesim::host::Output;
use spacesim::SimTime;

fn entry(epoch: i64) -> NavEntry {
    NavEntry {
        epoch,
        position: [epoch as f64, 1.0, 2.0],
        velocity: [0.0; 3],
        addr: 0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn insert_sorted_is_permutation_invariant(
        epochs in prop::collection::vec(0i64..500, 1..80),
        perm in any::<prop::sample::Index>(),
        cap in 1usize..100,
    ) {
        let mut shuffled = epochs.clone();
        // Rotate plus reverse gives a second arrival order of the same multiset.
        let k = perm.index(shuffled.len());
        shuffled.rotate_left(k);
        shuffled.reverse();
        let fill = |order: &[i64]| {
            let mut q = NavQueue::new(NavPolicy::InsertSorted, cap);
            for &e in order {
                q.nav_ingest(entry(e)).unwrap();
            }
            q.epochs()
        };
        let unbounded = |order: &[i64]| {
            let mut q = NavQueue::new(NavPolicy::InsertSorted, 10_000);
            for &e in order {
                q.nav_ingest(entry(e)).unwrap();
            }
            q.epochs()
        };
        prop_assert_eq!(unbounded(&epochs), unbounded(&shuffled));
        let mut sorted: Vec<i64> = epochs.clone();
        sorted.sort();
        sorted.dedup();
        prop_assert_eq!(unbounded(&epochs), sorted);
        // With a capacity bound the queue keeps the newest epochs it has seen
        // once arrivals are in order, whatever the original order.
        let mut in_order = epochs.clone();
        in_order.sort();
        let q = fill(&in_order);
        prop_assert!(q.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(q.len() <= cap);
    }

    #[test]
    fn assume_sorted_faults_exactly_on_inversions(epochs in prop::collection::vec(0i64..50, 1..40)) {
        let mut q = NavQueue::new(NavPolicy::AssumeSorted, 1000);
        let mut high = i64::MIN;
        for e in epochs {
            let r = q.nav_ingest(entry(e));
            prop_assert_eq!(r.is_err(), e < high);
            if r.is_err() {
                break;
            }
            high = high.max(e);
        }
    }
}

struct Net {
    queue: BTreeMap<(SimTime, u64), (bool, Message)>,
    seq: u64,
}

impl Net {
    fn send(&mut self, at: SimTime, to_passive: bool, m: Message) {
        self.seq += 1;
        self.queue.insert((at, self.seq), (to_passive, m));
    }
}

/// Drives a robust active/passive pair over a network that drops and delays
/// according to `pattern`, then goes quiet and lossless so retransmission can finish.
fn robust_run(commands: &[bool], pattern: &[(bool, u16)]) -> (Vec<String>, Vec<String>, bool) {
    let mut a = ObservationStateMachine::new(Role::Active, Protocol::Robust, "B", SimTime::from_secs(5));
    let mut b = ObservationStateMachine::new(Role::Passive, Protocol::Robust, "A", SimTime::from_secs(5));
    let (mut ha, mut hb) = (Vec::new(), Vec::new());
    let mut net = Net {
        queue: BTreeMap::new(),
        seq: 0,
    };
    let mut sends = 0usize;
    let mut tick: Option<SimTime> = None;
    let mut prefix_ok = true;
    let lossy_until = SimTime::from_secs(commands.len() as i64 * 30 + 60);

    let mut route = |outs: Vec<Output>,
                     now: SimTime,
                     to_passive: bool,
                     hist: &mut Vec<String>,
                     tick: &mut Option<SimTime>,
                     net: &mut Net| {
        for o in outs {
            match o {
                Output::MissionMode(m) => hist.push(m),
                Output::TickRequest(t) => *tick = Some(t),
                Output::CrosslinkSend { bytes, .. } => {
                    let (drop, delay_ms) = if now < lossy_until {
                        pattern[sends % pattern.len()]
                    } else {
                        (false, 100)
                    };
                    sends += 1;
                    if !drop {
                        net.send(
                            now + SimTime::from_millis(delay_ms as i64),
                            to_passive,
                            Message::decode(&bytes).unwrap(),
                        );
                    }
                }
                _ => {}
            }
        }
    };

    let mut ground: BTreeMap<SimTime, SyncKind> = BTreeMap::new();
    for (k, &begin) in commands.iter().enumerate() {
        ground.insert(
            SimTime::from_secs(k as i64 * 30),
            if begin { SyncKind::Begin } else { SyncKind::End },
        );
    }
    loop {
        let next_net = net.queue.keys().next().map(|k| k.0);
        let next_ground = ground.keys().next().copied();
        let Some(now) = [next_net, next_ground, tick].into_iter().flatten().min() else {
            break;
        };
        if now > lossy_until + SimTime::from_secs(600) {
            break;
        }
        if tick == Some(now) {
            tick = None;
            let outs = a.on_tick(now);
            route(outs, now, true, &mut ha, &mut tick, &mut net);
        } else if next_ground == Some(now) {
            let kind = ground.remove(&now).unwrap();
            let outs = a.sync_handle_event(kind, Source::Local, now).unwrap();
            route(outs, now, true, &mut ha, &mut tick, &mut net);
        } else {
            let key = *net.queue.keys().next().unwrap();
            let (to_passive, m) = net.queue.remove(&key).unwrap();
            match (to_passive, m) {
                (true, Message::Sync { seq, kind }) => {
                    let outs = b.sync_handle_event(kind, Source::Crosslink { seq }, now).unwrap();
                    route(outs, now, false, &mut hb, &mut tick, &mut net);
                }
                (false, Message::Ack { seq }) => a.on_ack(seq),
                _ => {}
            }
        }
        prefix_ok &= hb.len() <= ha.len() && ha[..hb.len()] == hb[..];
    }
    (ha, hb, prefix_ok)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn robust_passive_history_is_prefix_of_active(
        commands in prop::collection::vec(any::<bool>(), 1..25),
        pattern in prop::collection::vec((prop::bool::weighted(0.3), 1u16..40_000), 1..50),
    ) {
        let (ha, hb, prefix_ok) = robust_run(&commands, &pattern);
        prop_assert!(prefix_ok);
        prop_assert_eq!(ha, hb);
    }
}
