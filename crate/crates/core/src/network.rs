//! Network topology and the uncoordinated TDMA schedule.
//!
//! Every WBAN runs a superframe of length `T_d` (beacon, then one slot per
//! sensor) and idles for `T_idle = (N_c − 1)·T_d`. With no coordinator
//! between networks, each superframe starts at an offset drawn uniformly
//! over the cycle `N_c·T_d`. The cycle is treated as circular, so intervals
//! that run past its end wrap to the start.

use alloc::vec::Vec;

use rand::Rng;
use thiserror::Error;

use crate::channel::{BodyLocation, SubjectId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("transmit power must not be NaN or +inf, got {0} dBm")]
    InvalidPower(f64),
    #[error(
        "hub and relays must occupy three distinct locations among chest, left hip and right hip"
    )]
    HubRelayPlacement,
    #[error("a WBAN needs between one and three sensors, got {0}")]
    SensorCount(usize),
    #[error("sensor at {0} collides with another node location")]
    SensorPlacement(BodyLocation),
    #[error("node at {0} has the wrong role")]
    RoleMismatch(BodyLocation),
    #[error("sensors must be enabled")]
    DisabledSensor,
    #[error("invalid MAC configuration: {0}")]
    InvalidMac(&'static str),
    #[error("offset {offset} ms outside the cycle [0, {cycle})")]
    OffsetOutOfRange { offset: f64, cycle: f64 },
    #[error("{sensors} sensors do not fit in the {budget} ms left after the beacon")]
    SlotBudget { sensors: usize, budget: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Hub,
    Relay,
    Sensor,
}

/// One radio. A transmit power of `-inf` dBm marks the node as disabled:
/// it never transmits and contributes zero power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeSpec {
    pub role: Role,
    pub location: BodyLocation,
    pub tx_power_dbm: f64,
}

impl NodeSpec {
    pub const DEFAULT_TX_POWER_DBM: f64 = 0.0;

    pub fn new(role: Role, location: BodyLocation) -> Self {
        NodeSpec {
            role,
            location,
            tx_power_dbm: Self::DEFAULT_TX_POWER_DBM,
        }
    }

    pub fn with_power(mut self, dbm: f64) -> Self {
        self.tx_power_dbm = dbm;
        self
    }

    pub fn disabled(role: Role, location: BodyLocation) -> Self {
        NodeSpec {
            role,
            location,
            tx_power_dbm: f64::NEG_INFINITY,
        }
    }

    pub fn is_enabled(&self) -> bool {
        self.tx_power_dbm > f64::NEG_INFINITY
    }

    fn validate(&self, role: Role) -> Result<(), NetworkError> {
        if self.tx_power_dbm.is_nan() || self.tx_power_dbm == f64::INFINITY {
            return Err(NetworkError::InvalidPower(self.tx_power_dbm));
        }
        if self.role != role {
            return Err(NetworkError::RoleMismatch(self.location));
        }
        Ok(())
    }
}

const HUB_RELAY_SITES: [BodyLocation; 3] = [
    BodyLocation::Chest,
    BodyLocation::LeftHip,
    BodyLocation::RightHip,
];

/// A single body area network: one hub, two relays, up to three sensors.
#[derive(Debug, Clone, PartialEq)]
pub struct WbanConfig {
    subject: SubjectId,
    hub: NodeSpec,
    relays: [NodeSpec; 2],
    sensors: Vec<NodeSpec>,
}

impl WbanConfig {
    pub fn new(
        subject: SubjectId,
        hub: NodeSpec,
        relays: [NodeSpec; 2],
        sensors: Vec<NodeSpec>,
    ) -> Result<Self, NetworkError> {
        hub.validate(Role::Hub)?;
        for r in &relays {
            r.validate(Role::Relay)?;
        }
        let sites = [hub.location, relays[0].location, relays[1].location];
        let distinct = sites[0] != sites[1] && sites[0] != sites[2] && sites[1] != sites[2];
        if !distinct || !sites.iter().all(|s| HUB_RELAY_SITES.contains(s)) {
            return Err(NetworkError::HubRelayPlacement);
        }
        if sensors.is_empty() || sensors.len() > 3 {
            return Err(NetworkError::SensorCount(sensors.len()));
        }
        for (i, s) in sensors.iter().enumerate() {
            s.validate(Role::Sensor)?;
            if !s.is_enabled() {
                return Err(NetworkError::DisabledSensor);
            }
            if sites.contains(&s.location) || sensors[..i].iter().any(|o| o.location == s.location)
            {
                return Err(NetworkError::SensorPlacement(s.location));
            }
        }
        Ok(WbanConfig {
            subject,
            hub,
            relays,
            sensors,
        })
    }

    /// Hub at the chest, relays at the left and right hips.
    pub fn chest_hub(subject: u32, sensors: &[BodyLocation]) -> Result<Self, NetworkError> {
        WbanConfig::new(
            SubjectId(subject),
            NodeSpec::new(Role::Hub, BodyLocation::Chest),
            [
                NodeSpec::new(Role::Relay, BodyLocation::LeftHip),
                NodeSpec::new(Role::Relay, BodyLocation::RightHip),
            ],
            sensors
                .iter()
                .map(|&l| NodeSpec::new(Role::Sensor, l))
                .collect(),
        )
    }

    pub fn subject(&self) -> SubjectId {
        self.subject
    }

    pub fn hub(&self) -> &NodeSpec {
        &self.hub
    }

    pub fn relays(&self) -> &[NodeSpec; 2] {
        &self.relays
    }

    pub fn sensors(&self) -> &[NodeSpec] {
        &self.sensors
    }

    /// Copy of this network with every relay switched off.
    pub fn without_relays(&self) -> Self {
        let mut out = self.clone();
        for r in &mut out.relays {
            r.tx_power_dbm = f64::NEG_INFINITY;
        }
        out
    }

    /// Copy of this network with every node silenced.
    pub fn silenced(&self) -> Self {
        let mut out = self.without_relays();
        out.hub.tx_power_dbm = f64::NEG_INFINITY;
        for s in &mut out.sensors {
            s.tx_power_dbm = f64::NEG_INFINITY;
        }
        out
    }

    pub fn with_subject(mut self, subject: SubjectId) -> Self {
        self.subject = subject;
        self
    }
}

/// TDMA parameters shared by all coexisting networks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacConfig {
    pub n_coexisting: u32,
    pub slot_len_ms: f64,
    pub beacon_frac: f64,
}

impl Default for MacConfig {
    fn default() -> Self {
        MacConfig {
            n_coexisting: 2,
            slot_len_ms: 60.0,
            beacon_frac: 0.1,
        }
    }
}

impl MacConfig {
    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.n_coexisting < 1 {
            return Err(NetworkError::InvalidMac("n_coexisting must be >= 1"));
        }
        if !(self.slot_len_ms.is_finite() && self.slot_len_ms > 0.0) {
            return Err(NetworkError::InvalidMac("slot_len_ms must be > 0"));
        }
        if !(self.beacon_frac >= 0.0 && self.beacon_frac < 1.0) {
            return Err(NetworkError::InvalidMac("beacon_frac must lie in [0, 1)"));
        }
        Ok(())
    }

    /// `T_idle = (N_c − 1)·T_d`.
    pub fn idle_ms(&self) -> f64 {
        (self.n_coexisting - 1) as f64 * self.slot_len_ms
    }

    /// `N_c·T_d`, the span over which superframe offsets are drawn.
    pub fn cycle_ms(&self) -> f64 {
        self.n_coexisting as f64 * self.slot_len_ms
    }

    pub fn beacon_ms(&self) -> f64 {
        self.beacon_frac * self.slot_len_ms
    }
}

/// Superframe start offset, uniform on `[0, N_c·T_d)`.
pub fn draw_offset<R: Rng + ?Sized>(rng: &mut R, mac: &MacConfig) -> f64 {
    let cycle = mac.cycle_ms();
    let x = rng.random::<f64>() * cycle;
    // guard the half-open upper end against rounding
    if x >= cycle {
        0.0
    } else {
        x
    }
}

/// A half-open interval `[start, start + len)` on a circle of circumference `cycle`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub start: f64,
    pub len: f64,
}

impl Interval {
    pub fn new(start: f64, len: f64, cycle: f64) -> Self {
        Interval {
            start: wrap(start, cycle),
            len,
        }
    }

    pub fn end(&self) -> f64 {
        self.start + self.len
    }

    /// Splits into at most two non-wrapping pieces within `[0, cycle)`.
    pub fn pieces(&self, cycle: f64) -> impl Iterator<Item = (f64, f64)> {
        let end = self.end();
        let (first, second) = if end <= cycle {
            ((self.start, end), None)
        } else {
            ((self.start, cycle), Some((0.0, end - cycle)))
        };
        core::iter::once(first).chain(second)
    }
}

fn wrap(t: f64, cycle: f64) -> f64 {
    let mut w = libm::fmod(t, cycle);
    if w < 0.0 {
        w += cycle;
    }
    if w >= cycle {
        0.0
    } else {
        w
    }
}

/// Length of the circular intersection of two intervals.
pub fn circular_overlap(a: &Interval, b: &Interval, cycle: f64) -> f64 {
    let mut total = 0.0;
    for (a0, a1) in a.pieces(cycle) {
        for (b0, b1) in b.pieces(cycle) {
            total += (a1.min(b1) - a0.max(b0)).max(0.0);
        }
    }
    total
}

/// Fraction of `a` covered by `b` on the circular cycle.
pub fn overlap_fraction(a: &Interval, b: &Interval, cycle: f64) -> f64 {
    if a.len <= 0.0 {
        return 0.0;
    }
    (circular_overlap(a, b, cycle) / a.len).clamp(0.0, 1.0)
}

/// One sensor's share of the superframe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorSlot {
    pub sensor: NodeSpec,
    /// Sensor transmits; relays and hub listen.
    pub broadcast: Interval,
    /// A relay forwards the sensor's packet to the hub.
    pub forward: Interval,
}

/// A transmission in the schedule, with the radio that makes it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transmission {
    pub node: NodeSpec,
    pub interval: Interval,
}

/// Placement of one WBAN's superframe within the shared cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotSchedule {
    pub subject: SubjectId,
    pub superframe: u64,
    pub offset: f64,
    pub cycle: f64,
    pub beacon: Transmission,
    pub slots: Vec<SensorSlot>,
    /// Nominal radio for the forward sub-slots: the first enabled relay, or
    /// none when relaying is switched off.
    pub forwarder: Option<NodeSpec>,
}

impl SlotSchedule {
    /// Every interval in which this network puts energy on the air.
    pub fn transmissions(&self) -> impl Iterator<Item = Transmission> + '_ {
        let beacon = self.beacon.node.is_enabled().then_some(self.beacon);
        let slots = self.slots.iter().flat_map(move |slot| {
            let tx = slot.sensor.is_enabled().then_some(Transmission {
                node: slot.sensor,
                interval: slot.broadcast,
            });
            let fwd = self.forwarder.map(|node| Transmission {
                node,
                interval: slot.forward,
            });
            tx.into_iter().chain(fwd)
        });
        beacon.into_iter().chain(slots)
    }

    /// All intervals, active or not, in superframe order.
    pub fn intervals(&self) -> impl Iterator<Item = Interval> + '_ {
        core::iter::once(self.beacon.interval)
            .chain(self.slots.iter().flat_map(|s| [s.broadcast, s.forward]))
    }
}

/// Lays out a superframe: beacon first, then each sensor's slot split evenly
/// into a broadcast and a relay-forward sub-slot, all placed back to back
/// from `offset` and wrapped modulo the cycle.
pub fn build_schedule(
    wban: &WbanConfig,
    mac: &MacConfig,
    offset: f64,
    superframe: u64,
) -> Result<SlotSchedule, NetworkError> {
    mac.validate()?;
    let cycle = mac.cycle_ms();
    if !(offset >= 0.0 && offset < cycle) {
        return Err(NetworkError::OffsetOutOfRange { offset, cycle });
    }
    let beacon_len = mac.beacon_ms();
    let budget = mac.slot_len_ms - beacon_len;
    let n = wban.sensors().len();
    if n == 0 || budget <= 0.0 {
        return Err(NetworkError::SlotBudget { sensors: n, budget });
    }
    let slot_len = budget / n as f64;
    let half = slot_len / 2.0;

    let beacon = Transmission {
        node: *wban.hub(),
        interval: Interval::new(offset, beacon_len, cycle),
    };
    let slots = wban
        .sensors()
        .iter()
        .enumerate()
        .map(|(i, sensor)| {
            let start = offset + beacon_len + i as f64 * slot_len;
            SensorSlot {
                sensor: *sensor,
                broadcast: Interval::new(start, half, cycle),
                forward: Interval::new(start + half, half, cycle),
            }
        })
        .collect();
    let forwarder = wban.relays().iter().copied().find(NodeSpec::is_enabled);

    Ok(SlotSchedule {
        subject: wban.subject(),
        superframe,
        offset,
        cycle,
        beacon,
        slots,
        forwarder,
    })
}

/// A foreign transmission that overlaps a victim interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActiveInterferer {
    pub subject: SubjectId,
    pub node: NodeSpec,
    pub fraction: f64,
}

/// Lists every transmission of `others` that overlaps `victim` with positive
/// measure, with the fraction of `victim` it covers.
pub fn active_interferers(
    victim: &Interval,
    others: &[SlotSchedule],
    cycle: f64,
) -> Vec<ActiveInterferer> {
    others
        .iter()
        .flat_map(|sched| {
            sched.transmissions().filter_map(move |tx| {
                let fraction = overlap_fraction(victim, &tx.interval, cycle);
                (fraction > 0.0).then_some(ActiveInterferer {
                    subject: sched.subject,
                    node: tx.node,
                    fraction,
                })
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use BodyLocation::*;

    fn wban(subject: u32, sensors: &[BodyLocation]) -> WbanConfig {
        WbanConfig::chest_hub(subject, sensors).unwrap()
    }

    fn mac() -> MacConfig {
        MacConfig::default()
    }

    #[test]
    fn wban_placement_rules() {
        assert!(wban(1, &[Head, RightWrist, LeftAnkle]).sensors().len() == 3);
        assert_eq!(
            WbanConfig::chest_hub(1, &[]),
            Err(NetworkError::SensorCount(0))
        );
        assert_eq!(
            WbanConfig::chest_hub(1, &[Head, Back, LeftWrist, RightWrist]),
            Err(NetworkError::SensorCount(4))
        );
        assert_eq!(
            WbanConfig::chest_hub(1, &[LeftHip]),
            Err(NetworkError::SensorPlacement(LeftHip))
        );
        assert_eq!(
            WbanConfig::chest_hub(1, &[Head, Head]),
            Err(NetworkError::SensorPlacement(Head))
        );

        let bad_hub = WbanConfig::new(
            SubjectId(1),
            NodeSpec::new(Role::Hub, Head),
            [
                NodeSpec::new(Role::Relay, LeftHip),
                NodeSpec::new(Role::Relay, RightHip),
            ],
            vec![NodeSpec::new(Role::Sensor, Back)],
        );
        assert_eq!(bad_hub, Err(NetworkError::HubRelayPlacement));

        let nan_power = WbanConfig::new(
            SubjectId(1),
            NodeSpec::new(Role::Hub, Chest).with_power(f64::NAN),
            [
                NodeSpec::new(Role::Relay, LeftHip),
                NodeSpec::new(Role::Relay, RightHip),
            ],
            vec![NodeSpec::new(Role::Sensor, Back)],
        );
        assert!(matches!(nan_power, Err(NetworkError::InvalidPower(_))));
    }

    #[test]
    fn mac_derived_quantities() {
        let m = MacConfig {
            n_coexisting: 3,
            slot_len_ms: 40.0,
            beacon_frac: 0.1,
        };
        assert_eq!(m.idle_ms(), 80.0);
        assert_eq!(m.cycle_ms(), 120.0);
        assert!(MacConfig {
            n_coexisting: 0,
            ..m
        }
        .validate()
        .is_err());
        assert!(MacConfig {
            slot_len_ms: 0.0,
            ..m
        }
        .validate()
        .is_err());
        assert!(MacConfig {
            beacon_frac: 1.0,
            ..m
        }
        .validate()
        .is_err());
    }

    #[test]
    fn offsets_stay_in_cycle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let single = MacConfig {
            n_coexisting: 1,
            ..mac()
        };
        for _ in 0..10_000 {
            let x = draw_offset(&mut rng, &single);
            assert!((0.0..60.0).contains(&x));
            let y = draw_offset(&mut rng, &mac());
            assert!((0.0..120.0).contains(&y));
        }
    }

    #[test]
    fn offset_mean_is_half_cycle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let mean = (0..n).map(|_| draw_offset(&mut rng, &mac())).sum::<f64>() / n as f64;
        assert!((mean - 60.0).abs() < 0.5, "mean {mean}");
    }

    #[test]
    fn three_sensor_partition() {
        let w = wban(1, &[Head, RightWrist, LeftAnkle]);
        let s = build_schedule(&w, &mac(), 0.0, 0).unwrap();
        assert_eq!(
            s.beacon.interval,
            Interval {
                start: 0.0,
                len: 6.0
            }
        );
        let expected = [(6.0, 15.0), (24.0, 33.0), (42.0, 51.0)];
        for (slot, (b, f)) in s.slots.iter().zip(expected) {
            assert!((slot.broadcast.start - b).abs() < 1e-12);
            assert!((slot.forward.start - f).abs() < 1e-12);
            assert!((slot.broadcast.len - 9.0).abs() < 1e-12);
            assert!((slot.forward.len - 9.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_sensor_spans_remaining_budget() {
        let s = build_schedule(&wban(1, &[Head]), &mac(), 0.0, 0).unwrap();
        assert_eq!(s.slots.len(), 1);
        let slot = s.slots[0];
        assert!((slot.broadcast.len + slot.forward.len - 54.0).abs() < 1e-12);
    }

    #[test]
    fn schedule_wraps_around_cycle() {
        let s = build_schedule(&wban(1, &[Head]), &mac(), 110.0, 0).unwrap();
        // beacon [110,116), broadcast [116,143) -> [116,120) ∪ [0,23)
        let pieces: Vec<_> = s.slots[0].broadcast.pieces(120.0).collect();
        assert_eq!(pieces.len(), 2);
        assert!((pieces[0].0 - 116.0).abs() < 1e-12 && pieces[0].1 == 120.0);
        assert!(pieces[1].0 == 0.0 && (pieces[1].1 - 23.0).abs() < 1e-12);
        assert!(s.slots[0].forward.start < 120.0);
    }

    #[test]
    fn schedule_errors() {
        let w = wban(1, &[Head]);
        assert!(matches!(
            build_schedule(&w, &mac(), 120.0, 0),
            Err(NetworkError::OffsetOutOfRange { .. })
        ));
        assert!(matches!(
            build_schedule(&w, &mac(), -1.0, 0),
            Err(NetworkError::OffsetOutOfRange { .. })
        ));
    }

    #[test]
    fn overlap_examples() {
        let c = 120.0;
        let a = Interval::new(0.0, 10.0, c);
        assert_eq!(overlap_fraction(&a, &Interval::new(20.0, 10.0, c), c), 0.0);
        assert_eq!(overlap_fraction(&a, &a, c), 1.0);
        assert_eq!(overlap_fraction(&a, &Interval::new(5.0, 10.0, c), c), 0.5);
        // wrapped b covers [115,120) ∪ [0,5)
        assert_eq!(overlap_fraction(&a, &Interval::new(115.0, 10.0, c), c), 0.5);
    }

    #[test]
    fn interferer_listing() {
        let victim_w = wban(1, &[Head, RightWrist, LeftAnkle]);
        let other_w = wban(2, &[Head, RightWrist, LeftAnkle]);
        let victim = build_schedule(&victim_w, &mac(), 0.0, 0).unwrap();

        // other network active in [60,120): silent during the victim's slots
        let idle = build_schedule(&other_w, &mac(), 60.0, 0).unwrap();
        for iv in victim.intervals() {
            assert!(active_interferers(&iv, core::slice::from_ref(&idle), 120.0).is_empty());
        }

        // aligned schedules: each victim sub-slot meets exactly its twin
        let aligned = build_schedule(&other_w, &mac(), 0.0, 0).unwrap();
        let hits = active_interferers(
            &victim.slots[1].broadcast,
            core::slice::from_ref(&aligned),
            120.0,
        );
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].fraction, 1.0);
        assert_eq!(hits[0].node.location, RightWrist);
        assert_eq!(hits[0].subject, SubjectId(2));

        let fwd = active_interferers(
            &victim.slots[0].forward,
            core::slice::from_ref(&aligned),
            120.0,
        );
        assert_eq!(fwd.len(), 1);
        assert_eq!(fwd[0].node.role, Role::Relay);

        // a silenced network is never listed
        let quiet = build_schedule(&other_w.silenced(), &mac(), 0.0, 0).unwrap();
        assert!(active_interferers(&victim.slots[0].broadcast, &[quiet], 120.0).is_empty());
    }

    proptest! {
        #[test]
        fn own_intervals_disjoint_and_fill_superframe(
            offset in 0.0f64..120.0,
            n in 1usize..=3,
            beacon_frac in 0.0f64..0.5,
        ) {
            let sensors = [Head, RightWrist, LeftAnkle];
            let w = wban(1, &sensors[..n]);
            let m = MacConfig { beacon_frac, ..mac() };
            let s = build_schedule(&w, &m, offset, 0).unwrap();
            let ivs: Vec<_> = s.intervals().collect();
            let mut total = 0.0;
            for (i, a) in ivs.iter().enumerate() {
                total += a.len;
                for b in &ivs[i + 1..] {
                    prop_assert!(circular_overlap(a, b, 120.0) < 1e-9);
                }
            }
            prop_assert!((total - m.slot_len_ms).abs() < 1e-9);
            // duty cycle 1/N_c
            prop_assert!((total / m.cycle_ms() - 0.5).abs() < 1e-9);
        }

        #[test]
        fn overlap_is_measure_symmetric(
            s1 in 0.0f64..120.0, l1 in 0.1f64..120.0,
            s2 in 0.0f64..120.0, l2 in 0.1f64..120.0,
        ) {
            let a = Interval::new(s1, l1, 120.0);
            let b = Interval::new(s2, l2, 120.0);
            let lhs = a.len * overlap_fraction(&a, &b, 120.0);
            let rhs = b.len * overlap_fraction(&b, &a, 120.0);
            prop_assert!((lhs - rhs).abs() < 1e-9);
            let f = overlap_fraction(&a, &b, 120.0);
            prop_assert!((0.0..=1.0).contains(&f));
        }
    }
}
