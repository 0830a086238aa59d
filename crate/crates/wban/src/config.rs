//! TOML experiment configuration.
//!
//! ```toml
//! seed = 2013
//! epochs = 1000
//!
//! [mac]
//! slot_len_ms = 60.0
//!
//! [victim]
//! subject = 1
//! sensors = [{ location = "HD" }, { location = "RW" }, { location = "LA" }]
//!
//! [[interferer]]
//! subject = 2
//! sensors = [{ location = "HD" }, { location = "RW" }, { location = "LA" }]
//! ```
//!
//! Every section rejects unknown keys. Locations accept either the short
//! code (`LH`) or the full name (`LeftHip`).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use wban_core::channel::{BodyLocation, LinkId, SubjectId, SyntheticChannelParams};
use wban_core::engine::{
    combination_matrix, derive_seed, ChannelSource, ExperimentConfig, InterfererSpec, LinkTemplate,
    OverlayGeometry, ShadowDirection, StartPolicy, SweepPlan, SyntheticPlan,
};
use wban_core::metrics::threshold_grid;
use wban_core::network::{MacConfig, NodeSpec, Role, WbanConfig};
use wban_core::relaying::{HopWeights, NoiseModel};

use crate::error::{Error, Result};
use crate::io;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub start_index: usize,
    #[serde(default = "one")]
    pub repetitions: usize,
    #[serde(default = "default_epoch_period")]
    pub epoch_period_ms: f64,
    pub mac: Option<MacSection>,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub relaying: RelayingSection,
    #[serde(default)]
    pub metrics: MetricsSection,
    pub victim: Option<NetworkSection>,
    #[serde(default)]
    pub interferer: Vec<InterfererSection>,
    #[serde(default)]
    pub channels: ChannelsSection,
    pub sweep: Option<SweepSection>,
    /// Explicit trace list for `gen-traces`.
    #[serde(default)]
    pub trace: Vec<TraceSection>,
}

fn default_seed() -> u64 {
    1
}
fn default_epochs() -> usize {
    1000
}
fn one() -> usize {
    1
}
fn default_epoch_period() -> f64 {
    120.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MacSection {
    #[serde(default = "default_coexisting")]
    pub n_coexisting: u32,
    pub slot_len_ms: f64,
    #[serde(default = "default_beacon_frac")]
    pub beacon_frac: f64,
}

fn default_coexisting() -> u32 {
    2
}
fn default_beacon_frac() -> f64 {
    0.1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub floor_dbm: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection {
            floor_dbm: NoiseModel::default().floor_dbm,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelayingSection {
    #[serde(default = "unit")]
    pub weight_sensor_relay: f64,
    #[serde(default = "unit")]
    pub weight_relay_hub: f64,
}

fn unit() -> f64 {
    1.0
}

impl Default for RelayingSection {
    fn default() -> Self {
        RelayingSection {
            weight_sensor_relay: 1.0,
            weight_relay_hub: 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSection {
    #[serde(default = "grid_lo")]
    pub threshold_min_db: f64,
    #[serde(default = "grid_hi")]
    pub threshold_max_db: f64,
    #[serde(default = "grid_step")]
    pub threshold_step_db: f64,
    #[serde(default = "lcr_ref")]
    pub lcr_reference_db: f64,
}

fn grid_lo() -> f64 {
    -30.0
}
fn grid_hi() -> f64 {
    50.0
}
fn grid_step() -> f64 {
    0.5
}
fn lcr_ref() -> f64 {
    10.0
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection {
            threshold_min_db: grid_lo(),
            threshold_max_db: grid_hi(),
            threshold_step_db: grid_step(),
            lcr_reference_db: lcr_ref(),
        }
    }
}

impl MetricsSection {
    pub fn thresholds(&self) -> Result<Vec<f64>> {
        let ok = self.threshold_min_db.is_finite()
            && self.threshold_max_db >= self.threshold_min_db
            && self.threshold_max_db.is_finite()
            && self.threshold_step_db > 0.0;
        if !ok {
            return Err(Error::config(
                "metrics",
                "threshold grid needs min <= max and step > 0",
            ));
        }
        Ok(threshold_grid(
            self.threshold_min_db,
            self.threshold_max_db,
            self.threshold_step_db,
        ))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSection {
    pub location: String,
    pub tx_power_dbm: Option<f64>,
    #[serde(default = "yes")]
    pub enabled: bool,
}

fn yes() -> bool {
    true
}

impl NodeSection {
    fn at(location: &str) -> Self {
        NodeSection {
            location: location.into(),
            tx_power_dbm: None,
            enabled: true,
        }
    }

    fn build(&self, role: Role, section: &str) -> Result<NodeSpec> {
        let loc = location(&self.location, section)?;
        if !self.enabled {
            return Ok(NodeSpec::disabled(role, loc));
        }
        Ok(NodeSpec::new(role, loc)
            .with_power(self.tx_power_dbm.unwrap_or(NodeSpec::DEFAULT_TX_POWER_DBM)))
    }
}

fn location(s: &str, section: &str) -> Result<BodyLocation> {
    s.parse()
        .map_err(|_| Error::config(section, format!("unknown body location `{s}`")))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub subject: u32,
    #[serde(default = "default_hub")]
    pub hub: NodeSection,
    #[serde(default = "default_relays")]
    pub relays: [NodeSection; 2],
    pub sensors: Vec<NodeSection>,
}

fn default_hub() -> NodeSection {
    NodeSection::at("C")
}
fn default_relays() -> [NodeSection; 2] {
    [NodeSection::at("LH"), NodeSection::at("RH")]
}

impl NetworkSection {
    pub fn build(&self, section: &str) -> Result<WbanConfig> {
        let hub = self.hub.build(Role::Hub, section)?;
        let relays = [
            self.relays[0].build(Role::Relay, section)?,
            self.relays[1].build(Role::Relay, section)?,
        ];
        let sensors = self
            .sensors
            .iter()
            .map(|s| s.build(Role::Sensor, section))
            .collect::<Result<Vec<_>>>()?;
        WbanConfig::new(SubjectId(self.subject), hub, relays, sensors)
            .map_err(|e| Error::config(section, e.to_string()))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterfererSection {
    pub subject: u32,
    #[serde(default = "default_hub")]
    pub hub: NodeSection,
    #[serde(default = "default_relays")]
    pub relays: [NodeSection; 2],
    pub sensors: Vec<NodeSection>,
    /// A body location, or `"own"` to radiate from each node's own site.
    #[serde(default = "default_radiating")]
    pub radiating_from: String,
}

fn default_radiating() -> String {
    "LH".into()
}

impl InterfererSection {
    pub fn build(&self) -> Result<InterfererSpec> {
        let section = "interferer";
        let network = NetworkSection {
            subject: self.subject,
            hub: self.hub.clone(),
            relays: self.relays.clone(),
            sensors: self.sensors.clone(),
        };
        let wban = network.build(section)?;
        let radiating_from = match self.radiating_from.as_str() {
            "own" => None,
            s => Some(location(s, section)?),
        };
        Ok(InterfererSpec {
            wban,
            radiating_from,
        })
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TemplateSection {
    pub mean_gain_db: f64,
    pub shadow_sigma_db: f64,
    pub coherence_time_ms: f64,
    pub sample_period_ms: f64,
}

impl From<TemplateSection> for LinkTemplate {
    fn from(t: TemplateSection) -> Self {
        LinkTemplate {
            mean_gain_db: t.mean_gain_db,
            shadow_sigma_db: t.shadow_sigma_db,
            coherence_time_ms: t.coherence_time_ms,
            sample_period_ms: t.sample_period_ms,
        }
    }
}

impl From<LinkTemplate> for TemplateSection {
    fn from(t: LinkTemplate) -> Self {
        TemplateSection {
            mean_gain_db: t.mean_gain_db,
            shadow_sigma_db: t.shadow_sigma_db,
            coherence_time_ms: t.coherence_time_ms,
            sample_period_ms: t.sample_period_ms,
        }
    }
}

/// One synthetic link with explicit parameters. Without a seed, the seed is
/// derived from the master seed and the link name.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSection {
    pub link: String,
    pub mean_gain_db: f64,
    pub shadow_sigma_db: f64,
    pub coherence_time_ms: f64,
    pub duration_ms: f64,
    pub sample_period_ms: f64,
    pub seed: Option<u64>,
}

impl TraceSection {
    pub fn build(&self, master: u64, section: &str) -> Result<(LinkId, SyntheticChannelParams)> {
        let link: LinkId = self
            .link
            .parse()
            .map_err(|e| Error::config(section, format!("link `{}`: {e}", self.link)))?;
        let params = SyntheticChannelParams {
            mean_gain_db: self.mean_gain_db,
            shadow_sigma_db: self.shadow_sigma_db,
            coherence_time_ms: self.coherence_time_ms,
            duration_ms: self.duration_ms,
            sample_period_ms: self.sample_period_ms,
            seed: self
                .seed
                .unwrap_or_else(|| derive_seed(master, &format!("channel/{link}"))),
        };
        params
            .validate()
            .map_err(|e| Error::config(section, format!("link {link}: {e}")))?;
        Ok((link, params))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistanceSection {
    pub a: String,
    pub b: String,
    pub metres: f64,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    #[default]
    Synthetic,
    Traces,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
pub enum DirectionKind {
    #[default]
    FromAnchor,
    ToAnchor,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelsSection {
    #[serde(default)]
    pub source: SourceKind,
    /// Directory of trace CSVs, relative to the config file.
    pub trace_dir: Option<PathBuf>,
    #[serde(default = "on_body")]
    pub on_body: TemplateSection,
    #[serde(default = "inter_body")]
    pub inter_body: TemplateSection,
    #[serde(default, rename = "override")]
    pub overrides: Vec<TraceSection>,
    pub span_blocks: Option<usize>,
    pub frequency_hz: Option<f64>,
    pub anchor: Option<String>,
    #[serde(default)]
    pub direction: DirectionKind,
    pub distances: Option<Vec<DistanceSection>>,
}

fn on_body() -> TemplateSection {
    LinkTemplate::on_body().into()
}
fn inter_body() -> TemplateSection {
    LinkTemplate::inter_body().into()
}

impl Default for ChannelsSection {
    fn default() -> Self {
        ChannelsSection {
            source: SourceKind::default(),
            trace_dir: None,
            on_body: on_body(),
            inter_body: inter_body(),
            overrides: Vec::new(),
            span_blocks: None,
            frequency_hz: None,
            anchor: None,
            direction: DirectionKind::default(),
            distances: None,
        }
    }
}

impl ChannelsSection {
    fn geometry(&self) -> Result<OverlayGeometry> {
        let section = "channels";
        let mut g = OverlayGeometry::default();
        if let Some(f) = self.frequency_hz {
            if !(f.is_finite() && f > 0.0) {
                return Err(Error::config(section, "frequency_hz must be > 0"));
            }
            g.frequency_hz = f;
        }
        if let Some(a) = &self.anchor {
            g.anchor = location(a, section)?;
        }
        g.direction = match self.direction {
            DirectionKind::FromAnchor => ShadowDirection::FromAnchor,
            DirectionKind::ToAnchor => ShadowDirection::ToAnchor,
        };
        if let Some(ds) = &self.distances {
            g.distances = ds
                .iter()
                .map(|d| {
                    if !(d.metres.is_finite() && d.metres > 0.0) {
                        return Err(Error::config(
                            section,
                            format!("distance {}-{} must be > 0", d.a, d.b),
                        ));
                    }
                    Ok((location(&d.a, section)?, location(&d.b, section)?, d.metres))
                })
                .collect::<Result<_>>()?;
        }
        Ok(g)
    }

    fn source(&self, master: u64, base_dir: &Path) -> Result<ChannelSource> {
        match self.source {
            SourceKind::Traces => {
                let dir = self.trace_dir.as_ref().ok_or_else(|| {
                    Error::config(
                        "channels",
                        "missing key `trace_dir` for source = \"traces\"",
                    )
                })?;
                Ok(ChannelSource::Traces(Arc::new(io::load_trace_dir(
                    &base_dir.join(dir),
                )?)))
            }
            SourceKind::Synthetic => {
                let mut overrides = BTreeMap::new();
                for o in &self.overrides {
                    let (link, p) = o.build(master, "channels.override")?;
                    overrides.insert(link, p);
                }
                Ok(ChannelSource::Synthetic(SyntheticPlan {
                    on_body: self.on_body.into(),
                    inter_body: self.inter_body.into(),
                    overrides,
                    span_blocks: self.span_blocks,
                }))
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub victims: Vec<u32>,
    pub interferers: Vec<u32>,
    /// Explicit start blocks, one per repetition; random when absent.
    pub start_indices: Option<Vec<usize>>,
}

/// A parsed config file and the directory relative paths resolve against.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub file: ConfigFile,
    pub base_dir: PathBuf,
}

pub fn parse(text: &str, src: &str) -> Result<ConfigFile> {
    toml::from_str(text).map_err(|e| Error::config(src, e.to_string().trim_end().to_string()))
}

pub fn load(path: &Path) -> Result<Loaded> {
    let text = io::read_text(path).map_err(|e| match e {
        Error::Io { path, source } => Error::config(path.display().to_string(), source.to_string()),
        other => other,
    })?;
    let file = parse(&text, &path.display().to_string())?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Loaded { file, base_dir })
}

impl Loaded {
    pub fn parse_str(text: &str) -> Result<Self> {
        Ok(Loaded {
            file: parse(text, "<inline>")?,
            base_dir: PathBuf::from("."),
        })
    }

    pub fn override_seed(&mut self, seed: Option<u64>) {
        if let Some(s) = seed {
            self.file.seed = s;
        }
    }

    pub fn experiment(&self) -> Result<ExperimentConfig> {
        let f = &self.file;
        let mac = f
            .mac
            .as_ref()
            .ok_or_else(|| Error::config("mac", "missing section `[mac]` (needs `slot_len_ms`)"))?;
        let mac = MacConfig {
            n_coexisting: mac.n_coexisting,
            slot_len_ms: mac.slot_len_ms,
            beacon_frac: mac.beacon_frac,
        };
        mac.validate()
            .map_err(|e| Error::config("mac", e.to_string()))?;
        if !f.noise.floor_dbm.is_finite() {
            return Err(Error::config("noise", "floor_dbm must be finite"));
        }
        let weights = HopWeights {
            sensor_relay: f.relaying.weight_sensor_relay,
            relay_hub: f.relaying.weight_relay_hub,
        };
        if !(weights.sensor_relay > 0.0 && weights.relay_hub > 0.0) {
            return Err(Error::config("relaying", "hop weights must be > 0"));
        }
        let victim = f
            .victim
            .as_ref()
            .ok_or_else(|| Error::config("victim", "missing section `[victim]`"))?;
        let config = ExperimentConfig {
            victim: victim.build("victim")?,
            interferers: f
                .interferer
                .iter()
                .map(InterfererSection::build)
                .collect::<Result<_>>()?,
            mac,
            noise: NoiseModel {
                floor_dbm: f.noise.floor_dbm,
            },
            weights,
            channels: f.channels.source(f.seed, &self.base_dir)?,
            geometry: f.channels.geometry()?,
            epoch_period_ms: f.epoch_period_ms,
            epochs: f.epochs,
            start_index: f.start_index,
            repetitions: f.repetitions,
            seed: f.seed,
            thresholds: f.metrics.thresholds()?,
            lcr_reference_db: f.metrics.lcr_reference_db,
        };
        config
            .validate()
            .map_err(|e| Error::config("experiment", e.to_string()))?;
        Ok(config)
    }

    /// Sweep over `[sweep]`, or the single configured pairing when absent.
    pub fn sweep_plan(&self) -> Result<SweepPlan> {
        let base = self.experiment()?;
        let section = "sweep";
        let (combinations, starts) = match &self.file.sweep {
            Some(s) => {
                let template = base.interferers.first().ok_or_else(|| {
                    Error::config(section, "a sweep needs one `[[interferer]]` as template")
                })?;
                if base.interferers.len() > 1 {
                    return Err(Error::config(
                        section,
                        "a sweep takes exactly one `[[interferer]]` template",
                    ));
                }
                let combos = combination_matrix(&base.victim, template, &s.victims, &s.interferers);
                let starts = match &s.start_indices {
                    Some(list) if list.len() < base.repetitions => {
                        return Err(Error::config(
                            section,
                            format!(
                                "{} start_indices for {} repetitions",
                                list.len(),
                                base.repetitions
                            ),
                        ))
                    }
                    Some(list) => StartPolicy::Listed(list.clone()),
                    None => StartPolicy::Random,
                };
                (combos, starts)
            }
            None => (
                vec![wban_core::engine::Combination {
                    victim: base.victim.clone(),
                    interferers: base.interferers.clone(),
                }],
                StartPolicy::Random,
            ),
        };
        if combinations.is_empty() {
            return Err(Error::config(section, "combination matrix is empty"));
        }
        Ok(SweepPlan {
            base,
            combinations,
            starts,
        })
    }

    /// Explicit `[[trace]]` entries.
    pub fn trace_list(&self) -> Result<Vec<(LinkId, SyntheticChannelParams)>> {
        self.file
            .trace
            .iter()
            .map(|t| t.build(self.file.seed, "trace"))
            .collect()
    }
}
