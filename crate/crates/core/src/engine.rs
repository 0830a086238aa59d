//! Experiment orchestration.
//!
//! [`assemble_channels`] turns a channel source (measured traces or the
//! synthetic generator) into the full set of block-rate links one run needs,
//! building each interfering channel from the measured inter-body trace plus
//! the victim's own on-body shadowing. [`run`] then steps through the
//! epochs, drawing fresh TDMA offsets per superframe, and reduces the
//! per-packet SINRs into outage and level-crossing curves. [`sweep`] repeats
//! runs over a subject matrix with varied trace start blocks.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::channel::{
    downsample, extract_shadowing, generate_synthetic, overlay, BodyLocation, ChannelError,
    ChannelSet, ChannelTrace, Endpoint, LinkId, SubjectId, SyntheticChannelParams,
    DEFAULT_CARRIER_HZ,
};
use crate::metrics::{
    default_threshold_grid, gain_at_outage, lcr_curve, outage_from_values, threshold_at_outage,
    CurveKind, MetricsCurve, MetricsError, SinrSeries,
};
use crate::network::{build_schedule, draw_offset, MacConfig, NetworkError, NodeSpec, WbanConfig};
use crate::relaying::{
    evaluate_superframe, linear_to_db, ForeignNetwork, HopWeights, NoiseModel, RelayError,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error("channel source has no trace for link {0}")]
    UnresolvableLink(LinkId),
    #[error("no distance configured between {0} and {1}")]
    MissingDistance(BodyLocation, BodyLocation),
    #[error("traces cover {available} blocks but the run needs {required}")]
    InsufficientTrace { required: usize, available: usize },
    #[error("channel: {0}")]
    Channel(#[from] ChannelError),
    #[error("network: {0}")]
    Network(#[from] NetworkError),
    #[error("relaying: {0}")]
    Relay(#[from] RelayError),
    #[error("metrics: {0}")]
    Metrics(#[from] MetricsError),
    #[error("combination {id}: {source}")]
    Combination { id: usize, source: Box<EngineError> },
}

/// Stable 64-bit seed for a labelled purpose under a master seed.
///
/// FNV-1a over the master seed bytes and the label, finished with the
/// SplitMix64 mixer. Independent of platform and of any other label.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = FNV_OFFSET;
    for b in master.to_le_bytes().iter().chain(label.as_bytes()) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    let mut z = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A coexisting network and how its emissions reach the victim.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfererSpec {
    pub wban: WbanConfig,
    /// Location whose inter-body channels carry every emission of this
    /// network; `None` uses each transmitting node's own location.
    pub radiating_from: Option<BodyLocation>,
}

impl InterfererSpec {
    /// Interferer radiating from its left hip, the only inter-body
    /// transmitter with measured channels.
    pub fn new(wban: WbanConfig) -> Self {
        InterfererSpec {
            wban,
            radiating_from: Some(BodyLocation::LeftHip),
        }
    }

    fn radiating_locations(&self) -> BTreeSet<BodyLocation> {
        match self.radiating_from {
            Some(loc) => [loc].into_iter().collect(),
            None => {
                let w = &self.wban;
                core::iter::once(w.hub())
                    .chain(w.relays())
                    .chain(w.sensors())
                    .map(|n| n.location)
                    .collect()
            }
        }
    }
}

/// Which way the on-body shadowing source link runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ShadowDirection {
    /// anchor → receiver, e.g. LH(I) → RH(I)
    #[default]
    FromAnchor,
    /// receiver → anchor
    ToAnchor,
}

/// How interfering channels are composed from measured pieces.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlayGeometry {
    pub frequency_hz: f64,
    /// Victim location reached by the measured inter-body trace.
    pub anchor: BodyLocation,
    pub direction: ShadowDirection,
    /// On-body separations (m) used to strip free-space loss.
    pub distances: Vec<(BodyLocation, BodyLocation, f64)>,
}

impl Default for OverlayGeometry {
    fn default() -> Self {
        use BodyLocation::*;
        OverlayGeometry {
            frequency_hz: DEFAULT_CARRIER_HZ,
            anchor: LeftHip,
            direction: ShadowDirection::FromAnchor,
            distances: alloc::vec![
                (LeftHip, RightHip, 0.30),
                (LeftHip, Chest, 0.40),
                (RightHip, Chest, 0.40)
            ],
        }
    }
}

impl OverlayGeometry {
    pub fn distance(&self, a: BodyLocation, b: BodyLocation) -> Result<f64, EngineError> {
        self.distances
            .iter()
            .find(|(x, y, _)| (*x == a && *y == b) || (*x == b && *y == a))
            .map(|d| d.2)
            .ok_or(EngineError::MissingDistance(a, b))
    }
}

/// Generator settings shared by a class of links; the seed is derived per link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkTemplate {
    pub mean_gain_db: f64,
    pub shadow_sigma_db: f64,
    pub coherence_time_ms: f64,
    pub sample_period_ms: f64,
}

impl LinkTemplate {
    pub fn on_body() -> Self {
        LinkTemplate {
            mean_gain_db: -60.0,
            shadow_sigma_db: 6.0,
            coherence_time_ms: 500.0,
            sample_period_ms: 15.0,
        }
    }

    pub fn inter_body() -> Self {
        LinkTemplate {
            mean_gain_db: -70.0,
            shadow_sigma_db: 6.0,
            coherence_time_ms: 500.0,
            sample_period_ms: 40.0,
        }
    }
}

/// Synthetic stand-in for measured traces.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPlan {
    pub on_body: LinkTemplate,
    pub inter_body: LinkTemplate,
    /// Full parameter sets for individual links, used verbatim.
    pub overrides: BTreeMap<LinkId, SyntheticChannelParams>,
    /// Trace length in epoch blocks; defaults to `start_index + epochs`.
    pub span_blocks: Option<usize>,
}

impl Default for SyntheticPlan {
    fn default() -> Self {
        SyntheticPlan {
            on_body: LinkTemplate::on_body(),
            inter_body: LinkTemplate::inter_body(),
            overrides: BTreeMap::new(),
            span_blocks: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChannelSource {
    /// Raw traces at their native rates, keyed by link.
    Traces(Arc<ChannelSet>),
    Synthetic(SyntheticPlan),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub victim: WbanConfig,
    pub interferers: Vec<InterfererSpec>,
    pub mac: MacConfig,
    pub noise: NoiseModel,
    pub weights: HopWeights,
    pub channels: ChannelSource,
    pub geometry: OverlayGeometry,
    pub epoch_period_ms: f64,
    pub epochs: usize,
    pub start_index: usize,
    pub repetitions: usize,
    pub seed: u64,
    pub thresholds: Vec<f64>,
    pub lcr_reference_db: f64,
}

impl ExperimentConfig {
    /// Two-network scenario with synthetic channels and default settings.
    pub fn two_wban(victim: WbanConfig, interferer: WbanConfig) -> Self {
        ExperimentConfig {
            victim,
            interferers: alloc::vec![InterfererSpec::new(interferer)],
            mac: MacConfig::default(),
            noise: NoiseModel::default(),
            weights: HopWeights::default(),
            channels: ChannelSource::Synthetic(SyntheticPlan::default()),
            geometry: OverlayGeometry::default(),
            epoch_period_ms: 120.0,
            epochs: 1000,
            start_index: 0,
            repetitions: 1,
            seed: 1,
            thresholds: default_threshold_grid(),
            lcr_reference_db: 10.0,
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let invalid = |m: &str| Err(EngineError::Invalid(m.into()));
        if self.epochs < 1 {
            return invalid("epochs must be >= 1");
        }
        if self.repetitions < 1 {
            return invalid("repetitions must be >= 1");
        }
        if !(self.epoch_period_ms.is_finite() && self.epoch_period_ms > 0.0) {
            return invalid("epoch_period_ms must be > 0");
        }
        if self.thresholds.is_empty() {
            return invalid("threshold grid is empty");
        }
        self.mac.validate()?;
        let mut subjects = BTreeSet::new();
        subjects.insert(self.victim.subject());
        for i in &self.interferers {
            if !subjects.insert(i.wban.subject()) {
                return Err(EngineError::Invalid(format!(
                    "subject {} appears twice",
                    i.wban.subject()
                )));
            }
        }
        if self.interferers.len() + 1 > self.mac.n_coexisting as usize {
            return invalid("more networks than n_coexisting");
        }
        Ok(())
    }

    fn victim_endpoint(&self, location: BodyLocation) -> Endpoint {
        Endpoint {
            subject: self.victim.subject(),
            location,
        }
    }

    /// Victim receivers that can hear interference: hub and both relays.
    fn receivers(&self) -> [BodyLocation; 3] {
        let r = self.victim.relays();
        [self.victim.hub().location, r[0].location, r[1].location]
    }

    fn shadow_link(&self, target: BodyLocation) -> Result<LinkId, EngineError> {
        let anchor = self.victim_endpoint(self.geometry.anchor);
        let other = self.victim_endpoint(target);
        Ok(match self.geometry.direction {
            ShadowDirection::FromAnchor => LinkId::new(anchor, other)?,
            ShadowDirection::ToAnchor => LinkId::new(other, anchor)?,
        })
    }

    /// On-body links of the victim used directly or as shadowing sources.
    fn on_body_links(&self) -> Result<BTreeSet<LinkId>, EngineError> {
        let hub = self.victim.hub().location;
        let mut links = BTreeSet::new();
        for s in self.victim.sensors() {
            links.insert(LinkId::new(
                self.victim_endpoint(s.location),
                self.victim_endpoint(hub),
            )?);
            for r in self.victim.relays() {
                links.insert(LinkId::new(
                    self.victim_endpoint(s.location),
                    self.victim_endpoint(r.location),
                )?);
            }
        }
        for r in self.victim.relays() {
            links.insert(LinkId::new(
                self.victim_endpoint(r.location),
                self.victim_endpoint(hub),
            )?);
        }
        if !self.interferers.is_empty() {
            for rx in self.receivers() {
                if rx != self.geometry.anchor {
                    links.insert(self.shadow_link(rx)?);
                }
            }
        }
        Ok(links)
    }

    /// Measured inter-body links: interferer transmitter → victim anchor.
    fn part1_links(&self) -> Result<Vec<(LinkId, SubjectId, BodyLocation)>, EngineError> {
        let mut out = Vec::new();
        for i in &self.interferers {
            for loc in i.radiating_locations() {
                let tx = Endpoint {
                    subject: i.wban.subject(),
                    location: loc,
                };
                out.push((
                    LinkId::new(tx, self.victim_endpoint(self.geometry.anchor))?,
                    i.wban.subject(),
                    loc,
                ));
            }
        }
        Ok(out)
    }

    /// Raw links the channel source must supply: victim on-body links and
    /// the measured interferer→anchor links.
    pub fn source_links(&self) -> Result<BTreeSet<LinkId>, EngineError> {
        let mut links = self.on_body_links()?;
        links.extend(self.part1_links()?.into_iter().map(|p| p.0));
        Ok(links)
    }

    /// Links the simulation reads at every epoch.
    pub fn required_links(&self) -> Result<BTreeSet<LinkId>, EngineError> {
        let hub = self.victim.hub().location;
        let mut links = BTreeSet::new();
        for s in self.victim.sensors() {
            links.insert(LinkId::new(
                self.victim_endpoint(s.location),
                self.victim_endpoint(hub),
            )?);
            for r in self.victim.relays() {
                links.insert(LinkId::new(
                    self.victim_endpoint(s.location),
                    self.victim_endpoint(r.location),
                )?);
            }
        }
        for r in self.victim.relays() {
            links.insert(LinkId::new(
                self.victim_endpoint(r.location),
                self.victim_endpoint(hub),
            )?);
        }
        for (_, subject, loc) in self.part1_links()? {
            for rx in self.receivers() {
                links.insert(LinkId::new(
                    Endpoint {
                        subject,
                        location: loc,
                    },
                    self.victim_endpoint(rx),
                )?);
            }
        }
        Ok(links)
    }
}

fn synthetic_trace(
    plan: &SyntheticPlan,
    link: LinkId,
    master: u64,
    span_blocks: usize,
    epoch_period: f64,
) -> Result<ChannelTrace, EngineError> {
    let params = match plan.overrides.get(&link) {
        Some(p) => *p,
        None => {
            let t = if link.is_intra_wban() {
                plan.on_body
            } else {
                plan.inter_body
            };
            // enough native samples that decimation yields span_blocks blocks
            let stride = libm::round(epoch_period / t.sample_period_ms).max(1.0);
            let native = (span_blocks.saturating_sub(1)) as f64 * stride + 1.0;
            SyntheticChannelParams {
                mean_gain_db: t.mean_gain_db,
                shadow_sigma_db: t.shadow_sigma_db,
                coherence_time_ms: t.coherence_time_ms,
                duration_ms: native * t.sample_period_ms,
                sample_period_ms: t.sample_period_ms,
                seed: derive_seed(master, &format!("channel/{link}")),
            }
        }
    };
    Ok(generate_synthetic(&params, link)?)
}

/// Raw link a channel source must provide, at its native rate.
fn source_trace(config: &ExperimentConfig, link: LinkId) -> Result<ChannelTrace, EngineError> {
    match &config.channels {
        ChannelSource::Traces(set) => set
            .get(&link)
            .cloned()
            .ok_or(EngineError::UnresolvableLink(link)),
        ChannelSource::Synthetic(plan) => {
            let span = plan
                .span_blocks
                .unwrap_or(config.start_index + config.epochs);
            synthetic_trace(plan, link, config.seed, span, config.epoch_period_ms)
        }
    }
}

/// Every raw trace the configured source supplies, at native rate.
pub fn source_traces(config: &ExperimentConfig) -> Result<Vec<ChannelTrace>, EngineError> {
    config.validate()?;
    config
        .source_links()?
        .into_iter()
        .map(|l| source_trace(config, l))
        .collect()
}

/// Builds every block-rate link a run needs.
///
/// Victim on-body links come straight from the source. Each interfering
/// channel towards a victim receiver `X` is the measured interferer→anchor
/// trace, plus (when `X` is not the anchor) the shadowing of the victim's
/// own anchor–`X` link after free-space loss is removed. All traces are
/// decimated to the epoch period.
pub fn assemble_channels(config: &ExperimentConfig) -> Result<ChannelSet, EngineError> {
    config.validate()?;
    let period = config.epoch_period_ms;
    let fetch = |link: LinkId| -> Result<ChannelTrace, EngineError> {
        Ok(downsample(&source_trace(config, link)?, period)?)
    };

    let mut set = ChannelSet::new();
    for link in config.on_body_links()? {
        set.insert(fetch(link)?);
    }
    for (part1_link, subject, loc) in config.part1_links()? {
        let part1 = fetch(part1_link)?;
        for rx in config.receivers() {
            let out_link = LinkId::new(
                Endpoint {
                    subject,
                    location: loc,
                },
                config.victim_endpoint(rx),
            )?;
            let trace = if rx == config.geometry.anchor {
                part1.clone().with_link(out_link)
            } else {
                let source = set
                    .get(&config.shadow_link(rx)?)
                    .ok_or(EngineError::UnresolvableLink(config.shadow_link(rx)?))?;
                let d = config.geometry.distance(config.geometry.anchor, rx)?;
                let shadow = extract_shadowing(source, d, config.geometry.frequency_hz)?;
                overlay(&part1, &shadow, out_link)?
            };
            set.insert(trace);
        }
    }
    Ok(set)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scheme {
    Single,
    Cooperative,
}

impl Scheme {
    pub const ALL: [Scheme; 2] = [Scheme::Single, Scheme::Cooperative];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Single => "single",
            Scheme::Cooperative => "coop",
        }
    }
}

/// SINR series of one sensor under both schemes.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorSeries {
    pub sensor: NodeSpec,
    pub single: SinrSeries,
    pub cooperative: SinrSeries,
}

impl SensorSeries {
    pub fn scheme(&self, scheme: Scheme) -> &SinrSeries {
        match scheme {
            Scheme::Single => &self.single,
            Scheme::Cooperative => &self.cooperative,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeCurves {
    pub outage: MetricsCurve,
    /// Mean over sensors of each sensor's crossing rate.
    pub lcr: MetricsCurve,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeSummary {
    pub threshold_at_1pct_db: Option<f64>,
    pub threshold_at_10pct_db: Option<f64>,
    pub lcr_at_reference_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RelayUsage {
    pub packets: usize,
    /// How often each relay was selected.
    pub chosen: [usize; 2],
    /// Packets where the relayed copy beat the direct one.
    pub relayed_won: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub start_index: usize,
    pub sensors: Vec<SensorSeries>,
    pub single: SchemeCurves,
    pub cooperative: SchemeCurves,
    pub single_summary: SchemeSummary,
    pub cooperative_summary: SchemeSummary,
    /// Cooperative minus single-link threshold at 10 % outage.
    pub gain_at_10pct_db: Option<f64>,
    pub usage: RelayUsage,
}

impl RunResult {
    pub fn curves(&self, scheme: Scheme) -> &SchemeCurves {
        match scheme {
            Scheme::Single => &self.single,
            Scheme::Cooperative => &self.cooperative,
        }
    }

    pub fn summary(&self, scheme: Scheme) -> &SchemeSummary {
        match scheme {
            Scheme::Single => &self.single_summary,
            Scheme::Cooperative => &self.cooperative_summary,
        }
    }

    /// All packets of one scheme, sensor by sensor.
    pub fn pooled(&self, scheme: Scheme) -> Vec<f64> {
        self.sensors
            .iter()
            .flat_map(|s| s.scheme(scheme).values().iter().copied())
            .collect()
    }
}

/// Assembles channels and runs one experiment.
pub fn run(config: &ExperimentConfig) -> Result<RunResult, EngineError> {
    let channels = assemble_channels(config)?;
    run_with_channels(config, &channels)
}

/// Runs one experiment over already assembled block-rate channels.
pub fn run_with_channels(
    config: &ExperimentConfig,
    channels: &ChannelSet,
) -> Result<RunResult, EngineError> {
    config.validate()?;
    let required = config.start_index + config.epochs;
    let mut available = usize::MAX;
    for link in config.required_links()? {
        let trace = channels
            .get(&link)
            .ok_or(EngineError::UnresolvableLink(link))?;
        available = available.min(trace.len());
    }
    if available < required {
        return Err(EngineError::InsufficientTrace {
            required,
            available,
        });
    }

    let mut victim_rng = ChaCha8Rng::seed_from_u64(derive_seed(
        config.seed,
        &format!("offsets/{}", config.victim.subject()),
    ));
    let mut foreign_rngs: Vec<ChaCha8Rng> = config
        .interferers
        .iter()
        .map(|i| {
            ChaCha8Rng::seed_from_u64(derive_seed(
                config.seed,
                &format!("offsets/{}", i.wban.subject()),
            ))
        })
        .collect();

    let n_sensors = config.victim.sensors().len();
    let mut single: Vec<Vec<f64>> = alloc::vec![Vec::with_capacity(config.epochs); n_sensors];
    let mut coop: Vec<Vec<f64>> = alloc::vec![Vec::with_capacity(config.epochs); n_sensors];
    let mut usage = RelayUsage::default();

    for epoch in 0..config.epochs {
        let block = config.start_index + epoch;
        let superframe = epoch as u64;
        let own = build_schedule(
            &config.victim,
            &config.mac,
            draw_offset(&mut victim_rng, &config.mac),
            superframe,
        )?;
        let schedules = config
            .interferers
            .iter()
            .zip(foreign_rngs.iter_mut())
            .map(|(i, rng)| {
                build_schedule(
                    &i.wban,
                    &config.mac,
                    draw_offset(rng, &config.mac),
                    superframe,
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        let foreign: Vec<ForeignNetwork<'_>> = schedules
            .iter()
            .zip(&config.interferers)
            .map(|(schedule, i)| ForeignNetwork {
                schedule,
                radiating_from: i.radiating_from,
            })
            .collect();

        let decisions = evaluate_superframe(
            &config.victim,
            &own,
            &foreign,
            channels,
            &config.noise,
            config.weights,
            block,
        )?;
        for (k, d) in decisions.iter().enumerate() {
            single[k].push(linear_to_db(d.end_to_end.single));
            coop[k].push(linear_to_db(d.end_to_end.cooperative));
            usage.packets += 1;
            if let Some(sel) = d.selection {
                usage.chosen[sel.relay.slot()] += 1;
                if sel.bottleneck > d.direct {
                    usage.relayed_won += 1;
                }
            }
        }
    }

    let t0 = config.start_index as f64 * config.epoch_period_ms;
    let sensors = config
        .victim
        .sensors()
        .iter()
        .zip(single.into_iter().zip(coop))
        .map(|(sensor, (s, c))| {
            Ok(SensorSeries {
                sensor: *sensor,
                single: SinrSeries::uniform(t0, config.epoch_period_ms, s)?,
                cooperative: SinrSeries::uniform(t0, config.epoch_period_ms, c)?,
            })
        })
        .collect::<Result<Vec<_>, MetricsError>>()?;

    let curves = |scheme: Scheme| -> Result<SchemeCurves, EngineError> {
        let pooled: Vec<f64> = sensors
            .iter()
            .flat_map(|s| s.scheme(scheme).values().iter().copied())
            .collect();
        let outage = outage_from_values(&pooled, &config.thresholds)?;
        let mut lcr = alloc::vec![0.0; config.thresholds.len()];
        for s in &sensors {
            let c = lcr_curve(s.scheme(scheme), &config.thresholds)?;
            for (acc, v) in lcr.iter_mut().zip(&c.values) {
                *acc += v / sensors.len() as f64;
            }
        }
        Ok(SchemeCurves {
            outage,
            lcr: MetricsCurve::new(CurveKind::Lcr, config.thresholds.clone(), lcr)?,
        })
    };
    let single = curves(Scheme::Single)?;
    let cooperative = curves(Scheme::Cooperative)?;

    let summarize = |c: &SchemeCurves, scheme: Scheme| -> Result<SchemeSummary, EngineError> {
        let mut lcr_ref = 0.0;
        for s in &sensors {
            lcr_ref +=
                crate::metrics::level_crossing_rate(s.scheme(scheme), config.lcr_reference_db)?;
        }
        Ok(SchemeSummary {
            threshold_at_1pct_db: threshold_at_outage(&c.outage, 0.01).ok(),
            threshold_at_10pct_db: threshold_at_outage(&c.outage, 0.10).ok(),
            lcr_at_reference_hz: lcr_ref / sensors.len() as f64,
        })
    };
    let single_summary = summarize(&single, Scheme::Single)?;
    let cooperative_summary = summarize(&cooperative, Scheme::Cooperative)?;
    let gain_at_10pct_db = gain_at_outage(&cooperative.outage, &single.outage, 0.10).ok();

    Ok(RunResult {
        start_index: config.start_index,
        sensors,
        single,
        cooperative,
        single_summary,
        cooperative_summary,
        gain_at_10pct_db,
        usage,
    })
}

/// One (victim, interferers) pairing of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Combination {
    pub victim: WbanConfig,
    pub interferers: Vec<InterfererSpec>,
}

impl Combination {
    pub fn victim_subject(&self) -> SubjectId {
        self.victim.subject()
    }

    pub fn interferer_subjects(&self) -> Vec<SubjectId> {
        self.interferers.iter().map(|i| i.wban.subject()).collect()
    }
}

/// Every marked cell of a victim × interferer table, skipping the diagonal.
///
/// Both templates are relabelled to the row and column subjects.
pub fn combination_matrix(
    victim_template: &WbanConfig,
    interferer_template: &InterfererSpec,
    victims: &[u32],
    interferers: &[u32],
) -> Vec<Combination> {
    let mut out = Vec::new();
    for &v in victims {
        for &i in interferers {
            if v == i {
                continue;
            }
            let mut intf = interferer_template.clone();
            intf.wban = intf.wban.with_subject(SubjectId(i));
            out.push(Combination {
                victim: victim_template.clone().with_subject(SubjectId(v)),
                interferers: alloc::vec![intf],
            });
        }
    }
    out
}

/// How each repetition picks its first channel block.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum StartPolicy {
    /// Uniform over the usable span of the assembled traces.
    #[default]
    Random,
    /// One entry per repetition.
    Listed(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub base: ExperimentConfig,
    pub combinations: Vec<Combination>,
    pub starts: StartPolicy,
}

/// A combination with its channels assembled and start blocks fixed.
#[derive(Debug, Clone)]
pub struct PreparedCombination {
    pub id: usize,
    pub config: ExperimentConfig,
    pub channels: ChannelSet,
    pub starts: Vec<usize>,
}

impl PreparedCombination {
    pub fn run_repetition(&self, rep: usize) -> Result<RunResult, EngineError> {
        let mut config = self.config.clone();
        config.start_index = self.starts[rep];
        run_with_channels(&config, &self.channels).map_err(|e| tag(self.id, e))
    }
}

fn tag(id: usize, e: EngineError) -> EngineError {
    match e {
        EngineError::Combination { .. } => e,
        other => EngineError::Combination {
            id,
            source: Box::new(other),
        },
    }
}

impl SweepPlan {
    pub fn config_for(&self, id: usize) -> ExperimentConfig {
        let c = &self.combinations[id];
        let mut cfg = self.base.clone();
        cfg.victim = c.victim.clone();
        cfg.interferers = c.interferers.clone();
        cfg
    }

    /// Assembles channels for combination `id` and fixes each repetition's start block.
    pub fn prepare(&self, id: usize) -> Result<PreparedCombination, EngineError> {
        let config = self.config_for(id);
        let reps = config.repetitions;
        let prepared = (|| {
            let mut for_assembly = config.clone();
            if let ChannelSource::Synthetic(plan) = &mut for_assembly.channels {
                // room for every start block unless a span is configured
                let span = match &self.starts {
                    StartPolicy::Random => 2 * config.epochs,
                    StartPolicy::Listed(list) => {
                        list.iter().copied().max().unwrap_or(0) + config.epochs
                    }
                };
                plan.span_blocks.get_or_insert(span);
            }
            let channels = assemble_channels(&for_assembly)?;
            let mut available = usize::MAX;
            for link in config.required_links()? {
                available = available.min(
                    channels
                        .get(&link)
                        .ok_or(EngineError::UnresolvableLink(link))?
                        .len(),
                );
            }
            if available < config.epochs {
                return Err(EngineError::InsufficientTrace {
                    required: config.epochs,
                    available,
                });
            }
            let usable = available - config.epochs;
            let starts = match &self.starts {
                StartPolicy::Listed(list) => {
                    if list.len() < reps {
                        return Err(EngineError::Invalid(format!(
                            "{} start indices listed for {} repetitions",
                            list.len(),
                            reps
                        )));
                    }
                    list[..reps].to_vec()
                }
                StartPolicy::Random => (0..reps)
                    .map(|r| {
                        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                            config.seed,
                            &format!("start/{id}/{r}"),
                        ));
                        rng.random_range(0..=usable)
                    })
                    .collect(),
            };
            Ok(PreparedCombination {
                id,
                config: config.clone(),
                channels,
                starts,
            })
        })();
        prepared.map_err(|e| tag(id, e))
    }
}

/// Mean and population standard deviation over the repetitions that produced a value.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Spread {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Spread {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            return Spread {
                mean: f64::NAN,
                std: f64::NAN,
                count: 0,
            };
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Spread {
            mean,
            std: libm::sqrt(var),
            count: v.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeAggregate {
    pub threshold_at_1pct_db: Spread,
    pub threshold_at_10pct_db: Spread,
    pub lcr_at_reference_hz: Spread,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CombinationResult {
    pub id: usize,
    pub victim: SubjectId,
    pub interferers: Vec<SubjectId>,
    pub runs: Vec<RunResult>,
    pub single: SchemeAggregate,
    pub cooperative: SchemeAggregate,
    pub gain_at_10pct_db: Spread,
}

impl CombinationResult {
    pub fn aggregate(&self, scheme: Scheme) -> &SchemeAggregate {
        match scheme {
            Scheme::Single => &self.single,
            Scheme::Cooperative => &self.cooperative,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub combinations: Vec<CombinationResult>,
}

/// Reduces one combination's repetitions into mean and spread.
pub fn aggregate(plan: &SweepPlan, id: usize, runs: Vec<RunResult>) -> CombinationResult {
    let scheme = |s: Scheme| {
        let pick = |f: fn(&SchemeSummary) -> Option<f64>| {
            Spread::of(runs.iter().map(|r| f(r.summary(s)).unwrap_or(f64::NAN)))
        };
        SchemeAggregate {
            threshold_at_1pct_db: pick(|x| x.threshold_at_1pct_db),
            threshold_at_10pct_db: pick(|x| x.threshold_at_10pct_db),
            lcr_at_reference_hz: Spread::of(runs.iter().map(|r| r.summary(s).lcr_at_reference_hz)),
        }
    };
    let c = &plan.combinations[id];
    CombinationResult {
        id,
        victim: c.victim_subject(),
        interferers: c.interferer_subjects(),
        single: scheme(Scheme::Single),
        cooperative: scheme(Scheme::Cooperative),
        gain_at_10pct_db: Spread::of(runs.iter().map(|r| r.gain_at_10pct_db.unwrap_or(f64::NAN))),
        runs,
    }
}

/// Runs every combination `repetitions` times, sequentially, in order.
pub fn sweep(plan: &SweepPlan) -> Result<SweepResult, EngineError> {
    if plan.combinations.is_empty() {
        return Err(EngineError::Invalid("combination matrix is empty".into()));
    }
    let mut combinations = Vec::with_capacity(plan.combinations.len());
    for id in 0..plan.combinations.len() {
        let prepared = plan.prepare(id)?;
        let runs = (0..prepared.config.repetitions)
            .map(|r| prepared.run_repetition(r))
            .collect::<Result<Vec<_>, _>>()?;
        combinations.push(aggregate(plan, id, runs));
    }
    Ok(SweepResult { combinations })
}
