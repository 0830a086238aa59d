//! Block-fading channel-gain traces.
//!
//! Gains are stored in dB (`20·log10|h|`), so the linear power gain of a
//! sample is `10^(dB/10) = |h|²`. Conversion to linear units is left to the
//! SINR arithmetic in [`crate::relaying`].
//!
//! Traces come from two places: measured RSSI logs (parsed by the std
//! companion crate) and the seeded AR(1) log-normal generator in
//! [`generate_synthetic`]. Either way they pass through the same
//! resampling, shadowing extraction and overlay steps.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Carrier frequency of the body-worn channel sounders, Hz.
pub const DEFAULT_CARRIER_HZ: f64 = 2.36e9;

/// Relative slack used when checking that one period divides another.
const RATIO_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("sample period must be positive and finite, got {0} ms")]
    InvalidPeriod(f64),
    #[error("trace has no samples")]
    Empty,
    #[error("sample {index} is not finite ({value})")]
    NonFiniteSample { index: usize, value: f64 },
    #[error("target period {target} ms is not an integer multiple of {source_period} ms")]
    NonIntegerRatio { source_period: f64, target: f64 },
    #[error("{what} must be positive and finite, got {value}")]
    Domain { what: &'static str, value: f64 },
    #[error("sample periods differ: {left} ms vs {right} ms")]
    PeriodMismatch { left: f64, right: f64 },
    #[error("time {t} ms outside trace span [0, {duration}) ms")]
    OutOfRange { t: f64, duration: f64 },
    #[error("invalid synthetic parameters: {0}")]
    InvalidParams(&'static str),
    #[error("a link cannot start and end at the same node")]
    SelfLink,
    #[error("unknown body location `{0}`")]
    UnknownLocation(alloc::string::String),
    #[error("malformed link `{0}`, expected `<subject>:<loc>-><subject>:<loc>`")]
    MalformedLink(alloc::string::String),
}

/// Where a radio sits on a subject's body.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BodyLocation {
    LeftHip,
    RightHip,
    Chest,
    Head,
    RightWrist,
    LeftWrist,
    UpperLeftArm,
    LeftAnkle,
    RightAnkle,
    Back,
}

impl BodyLocation {
    pub const ALL: [BodyLocation; 10] = [
        BodyLocation::LeftHip,
        BodyLocation::RightHip,
        BodyLocation::Chest,
        BodyLocation::Head,
        BodyLocation::RightWrist,
        BodyLocation::LeftWrist,
        BodyLocation::UpperLeftArm,
        BodyLocation::LeftAnkle,
        BodyLocation::RightAnkle,
        BodyLocation::Back,
    ];

    /// Short code used in trace headers and config files.
    pub fn code(self) -> &'static str {
        match self {
            BodyLocation::LeftHip => "LH",
            BodyLocation::RightHip => "RH",
            BodyLocation::Chest => "C",
            BodyLocation::Head => "HD",
            BodyLocation::RightWrist => "RW",
            BodyLocation::LeftWrist => "LW",
            BodyLocation::UpperLeftArm => "LAR",
            BodyLocation::LeftAnkle => "LA",
            BodyLocation::RightAnkle => "RA",
            BodyLocation::Back => "B",
        }
    }
}

impl fmt::Display for BodyLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for BodyLocation {
    type Err = ChannelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        for loc in BodyLocation::ALL {
            if s.eq_ignore_ascii_case(loc.code())
                || s.eq_ignore_ascii_case(&alloc::format!("{loc:?}"))
            {
                return Ok(loc);
            }
        }
        Err(ChannelError::UnknownLocation(s.into()))
    }
}

/// Identifies a person wearing a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SubjectId(pub u32);

impl fmt::Display for SubjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A radio position: which subject, and where on the body.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Endpoint {
    pub subject: SubjectId,
    pub location: BodyLocation,
}

impl Endpoint {
    pub const fn new(subject: u32, location: BodyLocation) -> Self {
        Endpoint {
            subject: SubjectId(subject),
            location,
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.subject, self.location)
    }
}

/// A directed radio link. Never a self-link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinkId {
    tx: Endpoint,
    rx: Endpoint,
}

impl LinkId {
    pub fn new(tx: Endpoint, rx: Endpoint) -> Result<Self, ChannelError> {
        if tx == rx {
            return Err(ChannelError::SelfLink);
        }
        Ok(LinkId { tx, rx })
    }

    pub fn tx(&self) -> Endpoint {
        self.tx
    }

    pub fn rx(&self) -> Endpoint {
        self.rx
    }

    /// True when both ends are worn by the same subject.
    pub fn is_intra_wban(&self) -> bool {
        self.tx.subject == self.rx.subject
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.tx, self.rx)
    }
}

impl FromStr for LinkId {
    type Err = ChannelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let malformed = || ChannelError::MalformedLink(s.into());
        let (tx, rx) = s.trim().split_once("->").ok_or_else(malformed)?;
        let endpoint = |part: &str| -> Result<Endpoint, ChannelError> {
            let (subject, loc) = part.trim().split_once(':').ok_or_else(malformed)?;
            let subject = subject.trim().parse::<u32>().map_err(|_| malformed())?;
            Ok(Endpoint {
                subject: SubjectId(subject),
                location: loc.parse()?,
            })
        };
        LinkId::new(endpoint(tx)?, endpoint(rx)?)
    }
}

/// A regularly sampled sequence of channel gains for one link.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTrace {
    link: LinkId,
    sample_period: f64,
    samples: Vec<f64>,
}

impl ChannelTrace {
    pub fn new(
        link: LinkId,
        sample_period_ms: f64,
        samples: Vec<f64>,
    ) -> Result<Self, ChannelError> {
        if !(sample_period_ms.is_finite() && sample_period_ms > 0.0) {
            return Err(ChannelError::InvalidPeriod(sample_period_ms));
        }
        if samples.is_empty() {
            return Err(ChannelError::Empty);
        }
        if let Some((index, &value)) = samples.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(ChannelError::NonFiniteSample { index, value });
        }
        Ok(ChannelTrace {
            link,
            sample_period: sample_period_ms,
            samples,
        })
    }

    pub fn link(&self) -> LinkId {
        self.link
    }

    /// Sample period in milliseconds.
    pub fn sample_period(&self) -> f64 {
        self.sample_period
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Total span covered by the trace, `len · period` ms.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 * self.sample_period
    }

    /// Gain of block `index`, if present.
    pub fn block(&self, index: usize) -> Option<f64> {
        self.samples.get(index).copied()
    }

    /// Same samples, relabelled to another link.
    pub fn with_link(mut self, link: LinkId) -> Self {
        self.link = link;
        self
    }

    fn map_samples(&self, f: impl Fn(f64) -> f64) -> Result<Self, ChannelError> {
        ChannelTrace::new(
            self.link,
            self.sample_period,
            self.samples.iter().map(|&g| f(g)).collect(),
        )
    }
}

/// Integer ratio `target / source`, or an error when it is not integral.
fn stride(source: f64, target: f64) -> Result<usize, ChannelError> {
    let err = ChannelError::NonIntegerRatio {
        source_period: source,
        target,
    };
    if !(target.is_finite() && target > 0.0) {
        return Err(err);
    }
    let ratio = target / source;
    let k = libm::round(ratio);
    if k < 1.0 || libm::fabs(ratio - k) > RATIO_TOLERANCE * k {
        return Err(err);
    }
    Ok(k as usize)
}

/// Decimates `trace` to `target_period` by keeping every k-th block.
///
/// Output sample `i` is input sample `i·k` with `k = target / period`, so the
/// output has `floor((len − 1) / k) + 1` samples.
pub fn downsample(
    trace: &ChannelTrace,
    target_period_ms: f64,
) -> Result<ChannelTrace, ChannelError> {
    let k = stride(trace.sample_period, target_period_ms)?;
    let samples = trace.samples.iter().copied().step_by(k).collect();
    ChannelTrace::new(trace.link, target_period_ms, samples)
}

/// Free-space path loss `20·log10(4π·d·f/c)` in dB.
pub fn fspl_db(distance_m: f64, frequency_hz: f64) -> Result<f64, ChannelError> {
    if !(distance_m.is_finite() && distance_m > 0.0) {
        return Err(ChannelError::Domain {
            what: "distance",
            value: distance_m,
        });
    }
    if !(frequency_hz.is_finite() && frequency_hz > 0.0) {
        return Err(ChannelError::Domain {
            what: "frequency",
            value: frequency_hz,
        });
    }
    Ok(
        20.0 * libm::log10(
            4.0 * core::f64::consts::PI * distance_m * frequency_hz / SPEED_OF_LIGHT,
        ),
    )
}

/// Strips free-space path loss from a measured trace, leaving shadowing.
pub fn extract_shadowing(
    trace: &ChannelTrace,
    distance_m: f64,
    frequency_hz: f64,
) -> Result<ChannelTrace, ChannelError> {
    let loss = fspl_db(distance_m, frequency_hz)?;
    trace.map_samples(|g| g + loss)
}

/// Inverse of [`extract_shadowing`]: puts the free-space loss back.
pub fn restore_path_loss(
    shadowing: &ChannelTrace,
    distance_m: f64,
    frequency_hz: f64,
) -> Result<ChannelTrace, ChannelError> {
    let loss = fspl_db(distance_m, frequency_hz)?;
    shadowing.map_samples(|g| g - loss)
}

/// Adds a shadowing trace onto a measured gain trace, sample by sample in dB.
/// The result is truncated to the shorter input.
pub fn overlay(
    part1: &ChannelTrace,
    shadowing: &ChannelTrace,
    out_link: LinkId,
) -> Result<ChannelTrace, ChannelError> {
    if !periods_match(part1.sample_period, shadowing.sample_period) {
        return Err(ChannelError::PeriodMismatch {
            left: part1.sample_period,
            right: shadowing.sample_period,
        });
    }
    let samples = part1
        .samples
        .iter()
        .zip(&shadowing.samples)
        .map(|(a, b)| a + b)
        .collect();
    ChannelTrace::new(out_link, part1.sample_period, samples)
}

fn periods_match(a: f64, b: f64) -> bool {
    libm::fabs(a - b) <= RATIO_TOLERANCE * a.max(b)
}

/// Piecewise-constant lookup: the block containing time `t_ms`.
pub fn gain_at(trace: &ChannelTrace, t_ms: f64) -> Result<f64, ChannelError> {
    let duration = trace.duration();
    if !(t_ms >= 0.0 && t_ms < duration) {
        return Err(ChannelError::OutOfRange { t: t_ms, duration });
    }
    let index = libm::floor(t_ms / trace.sample_period) as usize;
    // floor can land on len when t is within rounding of the end
    Ok(trace.samples[index.min(trace.samples.len() - 1)])
}

/// Traces keyed by link, all sharing the block period of the simulation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChannelSet {
    traces: BTreeMap<LinkId, ChannelTrace>,
}

impl ChannelSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a trace under its own link, replacing any previous one.
    pub fn insert(&mut self, trace: ChannelTrace) -> Option<ChannelTrace> {
        self.traces.insert(trace.link(), trace)
    }

    pub fn get(&self, link: &LinkId) -> Option<&ChannelTrace> {
        self.traces.get(link)
    }

    pub fn contains(&self, link: &LinkId) -> bool {
        self.traces.contains_key(link)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ChannelTrace> {
        self.traces.values()
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    /// Shortest trace length, in blocks.
    pub fn min_len(&self) -> Option<usize> {
        self.traces.values().map(ChannelTrace::len).min()
    }
}

impl FromIterator<ChannelTrace> for ChannelSet {
    fn from_iter<I: IntoIterator<Item = ChannelTrace>>(iter: I) -> Self {
        let mut set = ChannelSet::new();
        for t in iter {
            set.insert(t);
        }
        set
    }
}

/// Parameters of the log-normal AR(1) shadowing generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticChannelParams {
    pub mean_gain_db: f64,
    pub shadow_sigma_db: f64,
    pub coherence_time_ms: f64,
    pub duration_ms: f64,
    pub sample_period_ms: f64,
    pub seed: u64,
}

impl SyntheticChannelParams {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if !self.mean_gain_db.is_finite() {
            return Err(ChannelError::InvalidParams("mean_gain_db must be finite"));
        }
        if !(self.shadow_sigma_db.is_finite() && self.shadow_sigma_db >= 0.0) {
            return Err(ChannelError::InvalidParams("shadow_sigma_db must be >= 0"));
        }
        if !(self.coherence_time_ms.is_finite() && self.coherence_time_ms > 0.0) {
            return Err(ChannelError::InvalidParams("coherence_time_ms must be > 0"));
        }
        if !(self.sample_period_ms.is_finite() && self.sample_period_ms > 0.0) {
            return Err(ChannelError::InvalidParams("sample_period_ms must be > 0"));
        }
        if !(self.duration_ms.is_finite() && self.duration_ms >= self.sample_period_ms) {
            return Err(ChannelError::InvalidParams(
                "duration_ms must be >= sample_period_ms",
            ));
        }
        Ok(())
    }

    /// Number of samples the generator emits: `floor(duration / period)`.
    pub fn sample_count(&self) -> usize {
        libm::floor(self.duration_ms / self.sample_period_ms + RATIO_TOLERANCE) as usize
    }

    /// Lag-one correlation `exp(−period / coherence)`.
    pub fn correlation(&self) -> f64 {
        libm::exp(-self.sample_period_ms / self.coherence_time_ms)
    }
}

/// Generates a stationary first-order autoregressive trace in dB:
///
/// ```text
/// s[0] = μ + σ·w[0]
/// s[i] = μ + ρ·(s[i−1] − μ) + σ·√(1 − ρ²)·w[i]
/// ```
///
/// with `ρ = exp(−T/τ)` and `w` standard normal from a ChaCha8 stream seeded
/// by `params.seed`.
pub fn generate_synthetic(
    params: &SyntheticChannelParams,
    link: LinkId,
) -> Result<ChannelTrace, ChannelError> {
    params.validate()?;
    let n = params.sample_count();
    let mean = params.mean_gain_db;
    let sigma = params.shadow_sigma_db;
    let rho = params.correlation();
    let innovation = sigma * libm::sqrt(1.0 - rho * rho);

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut samples = Vec::with_capacity(n);
    let first: f64 = StandardNormal.sample(&mut rng);
    let mut deviation = sigma * first;
    samples.push(mean + deviation);
    for _ in 1..n {
        let w: f64 = StandardNormal.sample(&mut rng);
        deviation = rho * deviation + innovation * w;
        samples.push(mean + deviation);
    }
    ChannelTrace::new(link, params.sample_period_ms, samples)
}
