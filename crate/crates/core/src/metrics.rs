//! Outage probability and level crossing rate of SINR time series.

use alloc::vec::Vec;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("series is empty")]
    EmptySeries,
    #[error("series times must be strictly increasing (sample {0})")]
    NonIncreasingTime(usize),
    #[error("series value {index} is not finite")]
    NonFiniteValue { index: usize },
    #[error("series cadence is not uniform at sample {0}")]
    NonUniformCadence(usize),
    #[error("curve is not an outage curve")]
    WrongKind,
    #[error("probability {p} is not bracketed by the curve range [{min}, {max}]")]
    NotBracketed { p: f64, min: f64, max: f64 },
    #[error("threshold grid and values differ in length")]
    ShapeMismatch,
}

/// Relative slack on the sampling interval when checking cadence.
const CADENCE_TOLERANCE: f64 = 1e-9;

/// Per-packet SINR in dB, at strictly increasing times (ms).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SinrSeries {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl SinrSeries {
    pub fn new(points: impl IntoIterator<Item = (f64, f64)>) -> Result<Self, MetricsError> {
        let (times, values): (Vec<f64>, Vec<f64>) = points.into_iter().unzip();
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(MetricsError::NonFiniteValue { index: i });
            }
        }
        for i in 1..times.len() {
            if times[i].partial_cmp(&times[i - 1]) != Some(core::cmp::Ordering::Greater) {
                return Err(MetricsError::NonIncreasingTime(i));
            }
        }
        Ok(SinrSeries { times, values })
    }

    /// Builds a series at a fixed cadence starting at `start_ms`.
    pub fn uniform(start_ms: f64, period_ms: f64, values: Vec<f64>) -> Result<Self, MetricsError> {
        SinrSeries::new(
            values
                .into_iter()
                .enumerate()
                .map(|(i, v)| (start_ms + i as f64 * period_ms, v)),
        )
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// SINR values in dB.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.values.iter().copied())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CurveKind {
    Outage,
    Lcr,
}

impl CurveKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CurveKind::Outage => "outage",
            CurveKind::Lcr => "lcr",
        }
    }
}

/// Metric values over a threshold grid (dB).
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsCurve {
    pub kind: CurveKind,
    pub thresholds: Vec<f64>,
    pub values: Vec<f64>,
}

impl MetricsCurve {
    pub fn new(
        kind: CurveKind,
        thresholds: Vec<f64>,
        values: Vec<f64>,
    ) -> Result<Self, MetricsError> {
        if thresholds.len() != values.len() {
            return Err(MetricsError::ShapeMismatch);
        }
        Ok(MetricsCurve {
            kind,
            thresholds,
            values,
        })
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.thresholds
            .iter()
            .copied()
            .zip(self.values.iter().copied())
    }
}

/// `lo, lo + step, …` up to and including `hi` (within half a step).
pub fn threshold_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    if step.is_nan() || step <= 0.0 || hi < lo {
        return Vec::new();
    }
    let n = libm::floor((hi - lo) / step + 0.5) as usize;
    (0..=n).map(|i| lo + i as f64 * step).collect()
}

/// −30 dB to +50 dB in 0.5 dB steps.
pub fn default_threshold_grid() -> Vec<f64> {
    threshold_grid(-30.0, 50.0, 0.5)
}

/// Fraction of samples strictly below each threshold.
pub fn outage_curve(series: &SinrSeries, thresholds: &[f64]) -> Result<MetricsCurve, MetricsError> {
    outage_from_values(series.values(), thresholds)
}

/// [`outage_curve`] over a bare slice of dB values.
pub fn outage_from_values(
    values: &[f64],
    thresholds: &[f64],
) -> Result<MetricsCurve, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::EmptySeries);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let probs = thresholds
        .iter()
        .map(|&thr| sorted.partition_point(|&v| v < thr) as f64 / n)
        .collect();
    MetricsCurve::new(CurveKind::Outage, thresholds.to_vec(), probs)
}

/// Threshold at which the outage curve reaches `p`, by linear interpolation
/// between grid points. When `p` sits on a flat stretch the left end of the
/// stretch is returned.
pub fn threshold_at_outage(curve: &MetricsCurve, p: f64) -> Result<f64, MetricsError> {
    if curve.kind != CurveKind::Outage {
        return Err(MetricsError::WrongKind);
    }
    let (min, max) = curve
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let not_bracketed = MetricsError::NotBracketed { p, min, max };
    if curve.values.is_empty() || !(p > 0.0 && p < 1.0) {
        return Err(not_bracketed);
    }
    let i = curve
        .values
        .iter()
        .position(|&v| v >= p)
        .ok_or(not_bracketed.clone())?;
    let (t1, v1) = (curve.thresholds[i], curve.values[i]);
    if v1 == p {
        return Ok(t1);
    }
    if i == 0 {
        return Err(not_bracketed);
    }
    let (t0, v0) = (curve.thresholds[i - 1], curve.values[i - 1]);
    Ok(t0 + (p - v0) / (v1 - v0) * (t1 - t0))
}

/// Down-crossings of `threshold` per second.
///
/// A crossing happens at sample `i > 0` when the previous sample is at or
/// above the threshold and sample `i` is below it. With crossing times
/// `τ₁ … τₙ` the rate is `n / Σ(τᵢ₊₁ − τᵢ)`; fewer than two crossings give 0.
pub fn level_crossing_rate(series: &SinrSeries, threshold: f64) -> Result<f64, MetricsError> {
    check_cadence(series)?;
    let v = series.values();
    let t = series.times();
    let mut n = 0usize;
    let (mut first, mut last) = (0.0, 0.0);
    for i in 1..v.len() {
        if v[i - 1] >= threshold && v[i] < threshold {
            if n == 0 {
                first = t[i];
            }
            last = t[i];
            n += 1;
        }
    }
    if n < 2 {
        return Ok(0.0);
    }
    // Σ of consecutive gaps telescopes to last − first
    Ok(n as f64 / ((last - first) / 1000.0))
}

/// [`level_crossing_rate`] at every threshold of a grid.
pub fn lcr_curve(series: &SinrSeries, thresholds: &[f64]) -> Result<MetricsCurve, MetricsError> {
    let values = thresholds
        .iter()
        .map(|&thr| level_crossing_rate(series, thr))
        .collect::<Result<Vec<_>, _>>()?;
    MetricsCurve::new(CurveKind::Lcr, thresholds.to_vec(), values)
}

fn check_cadence(series: &SinrSeries) -> Result<(), MetricsError> {
    if series.is_empty() {
        return Err(MetricsError::EmptySeries);
    }
    let t = series.times();
    if t.len() < 3 {
        return Ok(());
    }
    let step = t[1] - t[0];
    for i in 2..t.len() {
        if libm::fabs((t[i] - t[i - 1]) - step) > CADENCE_TOLERANCE * step.max(1.0) {
            return Err(MetricsError::NonUniformCadence(i));
        }
    }
    Ok(())
}

/// SINR improvement of the cooperative scheme at outage probability `p`.
pub fn gain_at_outage(
    coop: &MetricsCurve,
    single: &MetricsCurve,
    p: f64,
) -> Result<f64, MetricsError> {
    Ok(threshold_at_outage(coop, p)? - threshold_at_outage(single, p)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn series(values: &[f64]) -> SinrSeries {
        SinrSeries::uniform(0.0, 120.0, values.to_vec()).unwrap()
    }

    fn outage(points: &[(f64, f64)]) -> MetricsCurve {
        let (t, v) = points.iter().copied().unzip();
        MetricsCurve::new(CurveKind::Outage, t, v).unwrap()
    }

    #[test]
    fn series_validation() {
        assert_eq!(
            SinrSeries::new([(0.0, 1.0), (0.0, 2.0)]),
            Err(MetricsError::NonIncreasingTime(1))
        );
        assert!(matches!(
            SinrSeries::new([(0.0, f64::NAN)]),
            Err(MetricsError::NonFiniteValue { index: 0 })
        ));
    }

    #[test]
    fn grid_shape() {
        let g = default_threshold_grid();
        assert_eq!(g.len(), 161);
        assert_eq!(g[0], -30.0);
        assert_eq!(g[160], 50.0);
        assert_eq!(g[61], 0.5);
    }

    #[test]
    fn outage_examples() {
        let s = series(&[3.0, 7.0, 12.0, 1.0]);
        let c = outage_curve(&s, &[5.0, 0.0, 13.0, 3.0]).unwrap();
        assert_eq!(c.values, vec![0.5, 0.0, 1.0, 0.25]);
        assert_eq!(
            outage_curve(&SinrSeries::default(), &[0.0]),
            Err(MetricsError::EmptySeries)
        );
    }

    #[test]
    fn quantile_inversion() {
        let c = outage(&[(0.0, 0.05), (5.0, 0.15)]);
        assert!((threshold_at_outage(&c, 0.10).unwrap() - 2.5).abs() < 1e-12);
        assert_eq!(threshold_at_outage(&c, 0.05).unwrap(), 0.0);
        assert_eq!(threshold_at_outage(&c, 0.15).unwrap(), 5.0);
        assert!(matches!(
            threshold_at_outage(&c, 0.2),
            Err(MetricsError::NotBracketed { .. })
        ));
        assert!(matches!(
            threshold_at_outage(&c, 0.01),
            Err(MetricsError::NotBracketed { .. })
        ));

        let flat = outage(&[(0.0, 0.0), (1.0, 0.1), (2.0, 0.1), (3.0, 0.3)]);
        assert_eq!(threshold_at_outage(&flat, 0.1).unwrap(), 1.0);

        let lcr = MetricsCurve::new(CurveKind::Lcr, vec![0.0], vec![1.0]).unwrap();
        assert_eq!(threshold_at_outage(&lcr, 0.5), Err(MetricsError::WrongKind));
    }

    #[test]
    fn lcr_fixture() {
        let s = series(&[10.0, 2.0, 10.0, 2.0, 10.0]);
        let r = level_crossing_rate(&s, 5.0).unwrap();
        assert!((r - 2.0 / 0.24).abs() < 1e-9);
        assert_eq!(level_crossing_rate(&series(&[4.0; 10]), 5.0).unwrap(), 0.0);
        assert_eq!(level_crossing_rate(&s, 1.0).unwrap(), 0.0);
        assert_eq!(level_crossing_rate(&s, 11.0).unwrap(), 0.0);
    }

    #[test]
    fn lcr_needs_uniform_cadence() {
        let s = SinrSeries::new([(0.0, 1.0), (120.0, 2.0), (300.0, 3.0)]).unwrap();
        assert_eq!(
            level_crossing_rate(&s, 0.0),
            Err(MetricsError::NonUniformCadence(2))
        );
    }

    #[test]
    fn gain_examples() {
        let single = outage(&[(0.0, 0.02), (5.0, 0.2), (10.0, 0.6)]);
        assert_eq!(gain_at_outage(&single, &single, 0.1).unwrap(), 0.0);
        let shifted = outage(&[(5.0, 0.02), (10.0, 0.2), (15.0, 0.6)]);
        for p in [0.05, 0.1, 0.3, 0.5] {
            assert!((gain_at_outage(&shifted, &single, p).unwrap() - 5.0).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn outage_is_monotone_and_exact_on_samples(values in prop::collection::vec(-40.0f64..60.0, 1..200)) {
            let s = SinrSeries::uniform(0.0, 120.0, values.clone()).unwrap();
            let grid = default_threshold_grid();
            let c = outage_curve(&s, &grid).unwrap();
            for w in c.values.windows(2) {
                prop_assert!(w[0] <= w[1]);
            }
            prop_assert!(c.values.iter().all(|v| (0.0..=1.0).contains(v)));

            let mut sorted = values.clone();
            sorted.sort_by(f64::total_cmp);
            let at_samples = outage_curve(&s, &sorted).unwrap();
            let n = values.len() as f64;
            for (thr, p) in at_samples.points() {
                let k = sorted.iter().filter(|&&v| v < thr).count();
                prop_assert_eq!(p, k as f64 / n);
            }
        }

        #[test]
        fn dominance_orders_outage(pairs in prop::collection::vec((-40.0f64..60.0, 0.0f64..20.0), 1..200)) {
            let b: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let a: Vec<f64> = pairs.iter().map(|p| p.0 + p.1).collect();
            let grid = default_threshold_grid();
            let ca = outage_from_values(&a, &grid).unwrap();
            let cb = outage_from_values(&b, &grid).unwrap();
            for (x, y) in ca.values.iter().zip(&cb.values) {
                prop_assert!(x <= y);
            }
        }

        #[test]
        fn lcr_zero_outside_range(values in prop::collection::vec(-40.0f64..60.0, 1..100)) {
            let s = SinrSeries::uniform(0.0, 120.0, values.clone()).unwrap();
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(level_crossing_rate(&s, lo).unwrap(), 0.0);
            prop_assert_eq!(level_crossing_rate(&s, hi + 1.0).unwrap(), 0.0);
        }

        #[test]
        fn quantile_round_trip(values in prop::collection::vec(-40.0f64..60.0, 10..300), q in 0.05f64..0.95) {
            let mut sorted = values.clone();
            sorted.sort_by(f64::total_cmp);
            sorted.dedup();
            prop_assume!(sorted.len() >= 3);
            let c = outage_from_values(&values, &sorted).unwrap();
            // a realised probability on the curve
            let idx = ((c.values.len() - 1) as f64 * q) as usize;
            let p = c.values[idx];
            prop_assume!(p > 0.0 && p < 1.0);
            let thr = threshold_at_outage(&c, p).unwrap();
            let again = outage_from_values(&values, &[thr]).unwrap().values[0];
            prop_assert!((again - p).abs() <= 1.0 / values.len() as f64 + 1e-12);
        }
    }
}
