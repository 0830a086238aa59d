//! SINR under co-channel interference and three-branch opportunistic relaying.
//!
//! For every sensor packet the hub receives up to three copies: the direct
//! sensor→hub link and two decode-and-forward paths through the hip relays.
//! Before the sensor transmits, the relay whose weaker hop is strongest is
//! picked (max over relays of min over hops). The hub then keeps whichever of
//! the direct copy and the relayed copy has the larger SINR.

use alloc::vec::Vec;

use thiserror::Error;

use crate::channel::{BodyLocation, ChannelSet, Endpoint, LinkId};
use crate::network::{active_interferers, Interval, NodeSpec, SlotSchedule, WbanConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RelayError {
    #[error("SINR inputs must be positive and finite, got {0}")]
    Domain(f64),
    #[error("no trace for required link {link} at block {block}")]
    MissingTrace { link: LinkId, block: usize },
    #[error("invalid link: {0}")]
    Link(#[from] crate::channel::ChannelError),
}

/// Converts dBm (or dB) to linear milliwatts (or ratio).
#[inline]
pub fn db_to_linear(db: f64) -> f64 {
    libm::pow(10.0, db / 10.0)
}

#[inline]
pub fn linear_to_db(x: f64) -> f64 {
    10.0 * libm::log10(x)
}

/// Receiver noise power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub floor_dbm: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel { floor_dbm: -100.0 }
    }
}

/// One interfering contribution at a receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterferenceTerm {
    pub power_dbm: f64,
    pub gain_db: f64,
    /// Fraction of the victim packet overlapped by this transmission.
    pub fraction: f64,
}

/// `P·G / (N + Σ fᵢ·Pᵢ·Gᵢ)` in linear units.
///
/// Interference power is weighted by the time-overlap fraction, which
/// averages it over the duration of the victim packet.
pub fn compute_sinr(
    tx_power_dbm: f64,
    gain_db: f64,
    noise: &NoiseModel,
    interferers: &[InterferenceTerm],
) -> f64 {
    let signal = db_to_linear(tx_power_dbm + gain_db);
    let interference: f64 = interferers
        .iter()
        .map(|i| i.fraction * db_to_linear(i.power_dbm + i.gain_db))
        .sum();
    signal / (db_to_linear(noise.floor_dbm) + interference)
}

/// A time-stamped SINR value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinrSample {
    pub time_ms: f64,
    pub value: f64,
}

impl SinrSample {
    pub fn new(time_ms: f64, value: f64) -> Result<Self, RelayError> {
        if !(value.is_finite() && value > 0.0) {
            return Err(RelayError::Domain(value));
        }
        Ok(SinrSample { time_ms, value })
    }

    pub fn db(&self) -> f64 {
        linear_to_db(self.value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RelayIndex {
    First,
    Second,
}

impl RelayIndex {
    pub fn slot(self) -> usize {
        match self {
            RelayIndex::First => 0,
            RelayIndex::Second => 1,
        }
    }

    /// 1-based number, as used in reports.
    pub fn number(self) -> u8 {
        self.slot() as u8 + 1
    }
}

/// SINR of both hops through one relay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopPair {
    pub sensor_relay: f64,
    pub relay_hub: f64,
}

impl HopPair {
    pub fn bottleneck(&self) -> f64 {
        self.sensor_relay.min(self.relay_hub)
    }

    fn check(&self) -> Result<(), RelayError> {
        for v in [self.sensor_relay, self.relay_hub] {
            if !(v.is_finite() && v > 0.0) {
                return Err(RelayError::Domain(v));
            }
        }
        Ok(())
    }
}

/// Per-hop weights applied before taking the minimum during selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopWeights {
    pub sensor_relay: f64,
    pub relay_hub: f64,
}

impl Default for HopWeights {
    fn default() -> Self {
        HopWeights {
            sensor_relay: 1.0,
            relay_hub: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaySelection {
    pub relay: RelayIndex,
    /// Unweighted `min(ν_sr, ν_rh)` of the chosen relay.
    pub bottleneck: f64,
}

/// Max-min relay selection with unit weights. Ties go to the first relay.
pub fn select_relay(first: HopPair, second: HopPair) -> Result<RelaySelection, RelayError> {
    select_relay_weighted(first, second, HopWeights::default())
}

pub fn select_relay_weighted(
    first: HopPair,
    second: HopPair,
    weights: HopWeights,
) -> Result<RelaySelection, RelayError> {
    first.check()?;
    second.check()?;
    let score =
        |p: &HopPair| (weights.sensor_relay * p.sensor_relay).min(weights.relay_hub * p.relay_hub);
    let (relay, pair) = if score(&second) > score(&first) {
        (RelayIndex::Second, second)
    } else {
        (RelayIndex::First, first)
    };
    Ok(RelaySelection {
        relay,
        bottleneck: pair.bottleneck(),
    })
}

/// End-to-end SINR of the two schemes for one packet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeSinr {
    pub single: f64,
    pub cooperative: f64,
}

/// Hub-side choice between the direct copy and the relayed copy.
pub fn end_to_end_sinr(direct: f64, relayed: Option<RelaySelection>) -> SchemeSinr {
    let cooperative = match relayed {
        Some(sel) => direct.max(sel.bottleneck),
        None => direct,
    };
    SchemeSinr {
        single: direct,
        cooperative,
    }
}

/// Everything decided for one sensor packet.
#[derive(Debug, Clone, PartialEq)]
pub struct RelayDecision {
    pub sensor: NodeSpec,
    /// Hop SINRs through each relay; `None` for a disabled relay.
    pub paths: [Option<HopPair>; 2],
    pub selection: Option<RelaySelection>,
    pub direct: f64,
    pub end_to_end: SchemeSinr,
}

/// A coexisting network as seen by the victim.
#[derive(Debug, Clone, Copy)]
pub struct ForeignNetwork<'a> {
    pub schedule: &'a SlotSchedule,
    /// When set, every transmission of this network is propagated over the
    /// channels from this body location rather than from the actual node.
    pub radiating_from: Option<BodyLocation>,
}

struct Receiver<'a> {
    channels: &'a ChannelSet,
    victim: &'a WbanConfig,
    foreign: &'a [ForeignNetwork<'a>],
    noise: &'a NoiseModel,
    block: usize,
}

impl Receiver<'_> {
    fn gain(&self, tx: Endpoint, rx: Endpoint) -> Result<f64, RelayError> {
        let link = LinkId::new(tx, rx)?;
        self.channels
            .get(&link)
            .and_then(|t| t.block(self.block))
            .ok_or(RelayError::MissingTrace {
                link,
                block: self.block,
            })
    }

    fn own(&self, location: BodyLocation) -> Endpoint {
        Endpoint {
            subject: self.victim.subject(),
            location,
        }
    }

    /// SINR of `tx → rx` for a packet occupying `during`.
    fn sinr(&self, tx: &NodeSpec, rx: BodyLocation, during: &Interval) -> Result<f64, RelayError> {
        let gain = self.gain(self.own(tx.location), self.own(rx))?;
        let mut terms = Vec::new();
        for net in self.foreign {
            let hits = active_interferers(
                during,
                core::slice::from_ref(net.schedule),
                net.schedule.cycle,
            );
            for hit in hits {
                let from = Endpoint {
                    subject: hit.subject,
                    location: net.radiating_from.unwrap_or(hit.node.location),
                };
                terms.push(InterferenceTerm {
                    power_dbm: hit.node.tx_power_dbm,
                    gain_db: self.gain(from, self.own(rx))?,
                    fraction: hit.fraction,
                });
            }
        }
        Ok(compute_sinr(tx.tx_power_dbm, gain, self.noise, &terms))
    }
}

/// Runs relay selection and hub combining for every sensor in one superframe.
///
/// `own` is the victim's schedule, `foreign` the other networks' schedules
/// for the same cycle, and `block` the channel block in force. Sensor→relay
/// SINRs see the interference at each relay during the sensor's broadcast
/// sub-slot; relay→hub SINRs see the interference at the hub during the
/// forward sub-slot.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_superframe(
    wban: &WbanConfig,
    own: &SlotSchedule,
    foreign: &[ForeignNetwork<'_>],
    channels: &ChannelSet,
    noise: &NoiseModel,
    weights: HopWeights,
    block: usize,
) -> Result<Vec<RelayDecision>, RelayError> {
    let rx = Receiver {
        channels,
        victim: wban,
        foreign,
        noise,
        block,
    };
    let hub = wban.hub().location;

    own.slots
        .iter()
        .map(|slot| {
            let direct = rx.sinr(&slot.sensor, hub, &slot.broadcast)?;
            let mut paths = [None, None];
            for (path, relay) in paths.iter_mut().zip(wban.relays()) {
                if relay.is_enabled() {
                    *path = Some(HopPair {
                        sensor_relay: rx.sinr(&slot.sensor, relay.location, &slot.broadcast)?,
                        relay_hub: rx.sinr(relay, hub, &slot.forward)?,
                    });
                }
            }
            let selection = match paths {
                [Some(a), Some(b)] => Some(select_relay_weighted(a, b, weights)?),
                [Some(a), None] => Some(RelaySelection {
                    relay: RelayIndex::First,
                    bottleneck: a.bottleneck(),
                }),
                [None, Some(b)] => Some(RelaySelection {
                    relay: RelayIndex::Second,
                    bottleneck: b.bottleneck(),
                }),
                [None, None] => None,
            };
            Ok(RelayDecision {
                sensor: slot.sensor,
                paths,
                selection,
                direct,
                end_to_end: end_to_end_sinr(direct, selection),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelTrace;
    use crate::network::{build_schedule, MacConfig};
    use alloc::string::ToString;
    use alloc::vec;
    use proptest::prelude::*;
    use BodyLocation::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn sinr_fixture() {
        let noise = NoiseModel::default();
        let one = [InterferenceTerm {
            power_dbm: 0.0,
            gain_db: -80.0,
            fraction: 1.0,
        }];
        let v = compute_sinr(0.0, -60.0, &noise, &one);
        assert!(rel(v, 1e-6 / (1e-10 + 1e-8)) < 1e-12);
        assert!((linear_to_db(v) - 19.956_786_262_173_573).abs() < 1e-9);

        let snr = compute_sinr(0.0, -60.0, &noise, &[]);
        assert!(rel(snr, 1e4) < 1e-12);

        let silent = [InterferenceTerm {
            fraction: 0.0,
            ..one[0]
        }];
        assert_eq!(compute_sinr(0.0, -60.0, &noise, &silent), snr);
    }

    fn pair(sr: f64, rh: f64) -> HopPair {
        HopPair {
            sensor_relay: sr,
            relay_hub: rh,
        }
    }

    #[test]
    fn selection_examples() {
        let s = select_relay(pair(10.0, 4.0), pair(6.0, 5.0)).unwrap();
        assert_eq!(s.relay, RelayIndex::Second);
        assert_eq!(s.bottleneck, 5.0);

        let tie = select_relay(pair(7.0, 7.0), pair(7.0, 7.0)).unwrap();
        assert_eq!(tie.relay, RelayIndex::First);
        assert_eq!(tie.bottleneck, 7.0);

        assert_eq!(
            select_relay(pair(0.0, 1.0), pair(1.0, 1.0)),
            Err(RelayError::Domain(0.0))
        );
        assert!(select_relay(pair(1.0, 1.0), pair(1.0, -2.0)).is_err());
    }

    #[test]
    fn weights_shift_the_choice() {
        // unit weights prefer relay 1 (min 4 vs 3); heavy relay-hub weight flips it
        let a = pair(4.0, 5.0);
        let b = pair(10.0, 3.0);
        assert_eq!(select_relay(a, b).unwrap().relay, RelayIndex::First);
        let w = HopWeights {
            sensor_relay: 1.0,
            relay_hub: 3.0,
        };
        let s = select_relay_weighted(a, b, w).unwrap();
        assert_eq!(s.relay, RelayIndex::Second);
        assert_eq!(s.bottleneck, 3.0);
    }

    #[test]
    fn hub_combining() {
        let sel = RelaySelection {
            relay: RelayIndex::First,
            bottleneck: 5.0,
        };
        assert_eq!(end_to_end_sinr(100.0, Some(sel)).cooperative, 100.0);
        assert_eq!(end_to_end_sinr(2.0, Some(sel)).cooperative, 5.0);
        assert_eq!(
            end_to_end_sinr(2.0, None),
            SchemeSinr {
                single: 2.0,
                cooperative: 2.0
            }
        );
    }

    fn flat(tx: Endpoint, rx: Endpoint, gain: f64) -> ChannelTrace {
        ChannelTrace::new(LinkId::new(tx, rx).unwrap(), 120.0, vec![gain]).unwrap()
    }

    fn on_body(gains: &[(BodyLocation, BodyLocation, f64)]) -> ChannelSet {
        gains
            .iter()
            .map(|&(a, b, g)| flat(Endpoint::new(1, a), Endpoint::new(1, b), g))
            .collect()
    }

    #[test]
    fn single_epoch_hand_trace() {
        let w = WbanConfig::chest_hub(1, &[Head]).unwrap();
        let mac = MacConfig::default();
        let own = build_schedule(&w, &mac, 0.0, 0).unwrap();
        let other_w = WbanConfig::chest_hub(2, &[Head]).unwrap();
        let other = build_schedule(&other_w, &mac, 0.0, 0).unwrap();

        let mut channels = on_body(&[
            (Head, Chest, -60.0),
            (Head, LeftHip, -55.0),
            (Head, RightHip, -58.0),
            (LeftHip, Chest, -62.0),
            (RightHip, Chest, -52.0),
        ]);
        for rx in [LeftHip, RightHip, Chest] {
            channels.insert(flat(Endpoint::new(2, LeftHip), Endpoint::new(1, rx), -80.0));
        }
        let foreign = [ForeignNetwork {
            schedule: &other,
            radiating_from: Some(LeftHip),
        }];
        let d = evaluate_superframe(
            &w,
            &own,
            &foreign,
            &channels,
            &NoiseModel::default(),
            HopWeights::default(),
            0,
        )
        .unwrap();
        assert_eq!(d.len(), 1);
        let d = &d[0];

        // aligned schedules: one full-overlap interferer at 0 dBm, -80 dB on every hop
        let i = 1e-10 + 1e-8;
        let nu = |g: f64| db_to_linear(g) / i;
        assert!(rel(d.direct, nu(-60.0)) < 1e-12);
        assert!(rel(d.direct, 99.009_900_990_099) < 1e-9);
        let p1 = d.paths[0].unwrap();
        let p2 = d.paths[1].unwrap();
        assert!(rel(p1.sensor_relay, nu(-55.0)) < 1e-12);
        assert!(rel(p1.relay_hub, nu(-62.0)) < 1e-12);
        assert!(rel(p2.sensor_relay, nu(-58.0)) < 1e-12);
        assert!(rel(p2.relay_hub, nu(-52.0)) < 1e-12);
        // relay 1 min = -62 dB, relay 2 min = -58 dB → relay 2; -58 beats direct -60
        let sel = d.selection.unwrap();
        assert_eq!(sel.relay, RelayIndex::Second);
        assert!(rel(d.end_to_end.cooperative, nu(-58.0)) < 1e-12);
        assert_eq!(d.end_to_end.single, d.direct);
    }

    #[test]
    fn no_interference_gives_snr() {
        let w = WbanConfig::chest_hub(1, &[Head]).unwrap();
        let own = build_schedule(&w, &MacConfig::default(), 0.0, 0).unwrap();
        let channels = on_body(&[
            (Head, Chest, -70.0),
            (Head, LeftHip, -60.0),
            (Head, RightHip, -65.0),
            (LeftHip, Chest, -60.0),
            (RightHip, Chest, -60.0),
        ]);
        let d = &evaluate_superframe(
            &w,
            &own,
            &[],
            &channels,
            &NoiseModel::default(),
            HopWeights::default(),
            0,
        )
        .unwrap()[0];
        assert!(rel(d.direct, 1e3) < 1e-12);
        assert_eq!(d.selection.unwrap().relay, RelayIndex::First);
        assert!(rel(d.end_to_end.cooperative, 1e4) < 1e-12);
    }

    #[test]
    fn interference_is_local_to_the_receiver() {
        let w = WbanConfig::chest_hub(1, &[Head]).unwrap();
        let mac = MacConfig::default();
        let own = build_schedule(&w, &mac, 0.0, 0).unwrap();
        let other =
            build_schedule(&WbanConfig::chest_hub(2, &[Head]).unwrap(), &mac, 0.0, 0).unwrap();
        let mut channels = on_body(&[
            (Head, Chest, -60.0),
            (Head, LeftHip, -60.0),
            (Head, RightHip, -60.0),
            (LeftHip, Chest, -60.0),
            (RightHip, Chest, -60.0),
        ]);
        channels.insert(flat(
            Endpoint::new(2, LeftHip),
            Endpoint::new(1, LeftHip),
            -70.0,
        ));
        channels.insert(flat(
            Endpoint::new(2, LeftHip),
            Endpoint::new(1, RightHip),
            -400.0,
        ));
        channels.insert(flat(
            Endpoint::new(2, LeftHip),
            Endpoint::new(1, Chest),
            -400.0,
        ));
        let foreign = [ForeignNetwork {
            schedule: &other,
            radiating_from: Some(LeftHip),
        }];
        let d = &evaluate_superframe(
            &w,
            &own,
            &foreign,
            &channels,
            &NoiseModel::default(),
            HopWeights::default(),
            0,
        )
        .unwrap()[0];
        let snr = 1e4;
        let [p1, p2] = d.paths.map(Option::unwrap);
        assert!(p1.sensor_relay < snr / 10.0);
        assert!(rel(p2.sensor_relay, snr) < 1e-12);
        assert!(rel(d.direct, snr) < 1e-12);
    }

    #[test]
    fn missing_link_is_reported() {
        let w = WbanConfig::chest_hub(1, &[Head]).unwrap();
        let own = build_schedule(&w, &MacConfig::default(), 0.0, 0).unwrap();
        let channels = on_body(&[(Head, Chest, -60.0)]);
        let err = evaluate_superframe(
            &w,
            &own,
            &[],
            &channels,
            &NoiseModel::default(),
            HopWeights::default(),
            0,
        )
        .unwrap_err();
        match err {
            RelayError::MissingTrace { link, .. } => assert_eq!(link.to_string(), "1:HD->1:LH"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn disabled_relays_fall_back_to_direct() {
        let w = WbanConfig::chest_hub(1, &[Head]).unwrap().without_relays();
        let own = build_schedule(&w, &MacConfig::default(), 0.0, 0).unwrap();
        let channels = on_body(&[(Head, Chest, -60.0)]);
        let d = &evaluate_superframe(
            &w,
            &own,
            &[],
            &channels,
            &NoiseModel::default(),
            HopWeights::default(),
            0,
        )
        .unwrap()[0];
        assert!(d.selection.is_none());
        assert_eq!(d.end_to_end.cooperative, d.end_to_end.single);
    }

    fn brute_force(pairs: [HopPair; 2]) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (k, p) in pairs.iter().enumerate() {
            let m = if p.sensor_relay < p.relay_hub {
                p.sensor_relay
            } else {
                p.relay_hub
            };
            if m > best.1 {
                best = (k, m);
            }
        }
        best
    }

    proptest! {
        #[test]
        fn selection_matches_oracle(v in prop::array::uniform4(1e-3f64..1e4)) {
            let (a, b) = (pair(v[0], v[1]), pair(v[2], v[3]));
            let s = select_relay(a, b).unwrap();
            let (k, m) = brute_force([a, b]);
            prop_assert_eq!(s.relay.slot(), k);
            prop_assert_eq!(s.bottleneck, m);
        }

        #[test]
        fn selection_is_scale_invariant(v in prop::array::uniform4(1e-3f64..1e4), c in 1e-3f64..1e3) {
            let s = select_relay(pair(v[0], v[1]), pair(v[2], v[3])).unwrap();
            let t = select_relay(pair(c * v[0], c * v[1]), pair(c * v[2], c * v[3])).unwrap();
            prop_assert_eq!(s.relay, t.relay);
        }

        #[test]
        fn cooperative_dominates(direct in 1e-6f64..1e6, m in 1e-6f64..1e6) {
            let e = end_to_end_sinr(direct, Some(RelaySelection { relay: RelayIndex::First, bottleneck: m }));
            prop_assert!(e.cooperative >= e.single);
        }

        #[test]
        fn more_interference_never_helps(
            gain in -100.0f64..-30.0,
            terms in prop::collection::vec((-20.0f64..10.0, -120.0f64..-40.0, 0.0f64..=1.0), 0..4),
            extra in (-20.0f64..10.0, -120.0f64..-40.0, 0.0f64..=1.0),
        ) {
            let noise = NoiseModel::default();
            let mut list: Vec<_> = terms.iter().map(|&(p, g, f)| InterferenceTerm { power_dbm: p, gain_db: g, fraction: f }).collect();
            let before = compute_sinr(0.0, gain, &noise, &list);
            list.push(InterferenceTerm { power_dbm: extra.0, gain_db: extra.1, fraction: extra.2 });
            prop_assert!(compute_sinr(0.0, gain, &noise, &list) <= before);
        }
    }
}
