//! Plain-text file formats.
//!
//! Trace CSV:
//!
//! ```text
//! link=2:LH->1:LH,period_ms=40
//! 0,-71.5
//! 40,-70.25
//! ```
//!
//! Rows hold `<t_ms>,<gain_db>` with `t_ms = i·period_ms`. Series files hold
//! `t_ms,sinr_db` rows under that header line. Curve files start with
//! `kind,<outage|lcr>,scheme,<single|coop>,subject,<id>` followed by
//! `<threshold_db>,<value>` rows.
//!
//! Numbers are written with the shortest representation that parses back
//! to the same `f64`, so every file round-trips exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use wban_core::channel::{ChannelSet, ChannelTrace, LinkId};
use wban_core::engine::{CombinationResult, RunResult, Scheme, Spread};
use wban_core::metrics::{CurveKind, MetricsCurve, SinrSeries};

use crate::error::{Error, Result};

/// Relative slack allowed between a row timestamp and `i·period`.
const TIME_TOLERANCE: f64 = 1e-6;

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Non-blank lines with their 1-based numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_f64(field: &str, what: &str, src: &str, line: usize) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| {
        Error::parse(
            src,
            line,
            format!("{what} `{}` is not a number", field.trim()),
        )
    })?;
    if !v.is_finite() {
        return Err(Error::parse(
            src,
            line,
            format!("{what} `{}` is not finite", field.trim()),
        ));
    }
    Ok(v)
}

fn pair<'a>(row: &'a str, src: &str, line: usize) -> Result<(&'a str, &'a str)> {
    let mut it = row.split(',');
    match (it.next(), it.next(), it.next()) {
        (Some(a), Some(b), None) => Ok((a, b)),
        _ => Err(Error::parse(
            src,
            line,
            format!("expected two comma-separated fields, got `{row}`"),
        )),
    }
}

/// Parses a trace file body. `src` names the input in error messages.
pub fn parse_trace(text: &str, src: &str) -> Result<ChannelTrace> {
    let mut rows = lines(text);
    let (hline, header) = rows
        .next()
        .ok_or_else(|| Error::parse(src, 1, "missing header line"))?;
    let mut link = None;
    let mut period = None;
    for field in header.split(',') {
        match field.split_once('=') {
            Some(("link", v)) => {
                link = Some(
                    v.parse::<LinkId>()
                        .map_err(|e| Error::parse(src, hline, e.to_string()))?,
                )
            }
            Some(("period_ms", v)) => period = Some(parse_f64(v, "period_ms", src, hline)?),
            _ => {
                return Err(Error::parse(
                    src,
                    hline,
                    format!("unexpected header field `{field}`"),
                ))
            }
        }
    }
    let link = link.ok_or_else(|| Error::parse(src, hline, "header lacks `link=`"))?;
    let period = period.ok_or_else(|| Error::parse(src, hline, "header lacks `period_ms=`"))?;
    if period <= 0.0 {
        return Err(Error::parse(src, hline, "period_ms must be positive"));
    }

    let mut samples = Vec::new();
    for (line, row) in rows {
        let (t, g) = pair(row, src, line)?;
        let t = parse_f64(t, "timestamp", src, line)?;
        let expected = samples.len() as f64 * period;
        if (t - expected).abs() > TIME_TOLERANCE * period {
            return Err(Error::parse(
                src,
                line,
                format!("timestamp {t} breaks the regular grid (expected {expected})"),
            ));
        }
        samples.push(parse_f64(g, "gain", src, line)?);
    }
    if samples.is_empty() {
        return Err(Error::parse(src, hline, "trace has no samples"));
    }
    Ok(ChannelTrace::new(link, period, samples)?)
}

/// Reads a trace file whatever link it declares.
pub fn read_trace(path: &Path) -> Result<ChannelTrace> {
    parse_trace(&read_text(path)?, &path.display().to_string())
}

/// Reads a trace file and checks it carries `link`.
pub fn load_trace(path: &Path, link: LinkId) -> Result<ChannelTrace> {
    let trace = read_trace(path)?;
    if trace.link() != link {
        return Err(Error::parse(
            path.display().to_string(),
            1,
            format!(
                "header declares {} but {} was requested",
                trace.link(),
                link
            ),
        ));
    }
    Ok(trace)
}

pub fn format_trace(trace: &ChannelTrace) -> String {
    let mut out = format!(
        "link={},period_ms={}\n",
        trace.link(),
        trace.sample_period()
    );
    for (i, g) in trace.samples().iter().enumerate() {
        let _ = writeln!(out, "{},{}", i as f64 * trace.sample_period(), g);
    }
    out
}

pub fn write_trace(path: &Path, trace: &ChannelTrace) -> Result<()> {
    write_text(path, &format_trace(trace))
}

/// File name used for a link's trace, e.g. `2_LH__1_C.csv`.
pub fn trace_file_name(link: &LinkId) -> String {
    format!(
        "{}_{}__{}_{}.csv",
        link.tx().subject,
        link.tx().location,
        link.rx().subject,
        link.rx().location
    )
}

/// Loads every `*.csv` trace in `dir`, keyed by the link in its header.
pub fn load_trace_dir(dir: &Path) -> Result<ChannelSet> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "csv") {
            paths.push(path);
        }
    }
    paths.sort();
    let mut set = ChannelSet::new();
    for path in paths {
        let trace = read_trace(&path)?;
        let link = trace.link();
        if set.insert(trace).is_some() {
            return Err(Error::parse(
                path.display().to_string(),
                1,
                format!("second trace for link {link}"),
            ));
        }
    }
    Ok(set)
}

pub const SERIES_HEADER: &str = "t_ms,sinr_db";

pub fn parse_series(text: &str, src: &str) -> Result<SinrSeries> {
    let mut rows = lines(text).peekable();
    if rows.peek().is_some_and(|(_, l)| *l == SERIES_HEADER) {
        rows.next();
    }
    let mut points = Vec::new();
    for (line, row) in rows {
        let (t, v) = pair(row, src, line)?;
        let t = parse_f64(t, "time", src, line)?;
        if let Some(&(prev, _)) = points.last() {
            if t <= prev {
                return Err(Error::parse(src, line, "times must be strictly increasing"));
            }
        }
        points.push((t, parse_f64(v, "SINR", src, line)?));
    }
    if points.is_empty() {
        return Err(Error::parse(src, 1, "series has no samples"));
    }
    SinrSeries::new(points).map_err(|e| Error::parse(src, 1, e.to_string()))
}

pub fn read_series(path: &Path) -> Result<SinrSeries> {
    parse_series(&read_text(path)?, &path.display().to_string())
}

pub fn format_series(series: &SinrSeries) -> String {
    let mut out = format!("{SERIES_HEADER}\n");
    for (t, v) in series.points() {
        let _ = writeln!(out, "{t},{v}");
    }
    out
}

/// Curve file contents with its identifying header.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveFile {
    pub scheme: String,
    pub subject: String,
    pub curve: MetricsCurve,
}

pub fn format_curve(curve: &MetricsCurve, scheme: &str, subject: &str) -> String {
    let mut out = format!(
        "kind,{},scheme,{},subject,{}\n",
        curve.kind.as_str(),
        scheme,
        subject
    );
    for (thr, v) in curve.points() {
        let _ = writeln!(out, "{thr},{v}");
    }
    out
}

pub fn parse_curve(text: &str, src: &str) -> Result<CurveFile> {
    let mut rows = lines(text);
    let (hline, header) = rows
        .next()
        .ok_or_else(|| Error::parse(src, 1, "missing header line"))?;
    let fields: Vec<&str> = header.split(',').collect();
    let (kind, scheme, subject) = match fields.as_slice() {
        ["kind", kind, "scheme", scheme, "subject", subject] => (*kind, *scheme, *subject),
        _ => {
            return Err(Error::parse(
                src,
                hline,
                "expected `kind,<k>,scheme,<s>,subject,<id>` header",
            ))
        }
    };
    let kind = match kind {
        "outage" => CurveKind::Outage,
        "lcr" => CurveKind::Lcr,
        other => {
            return Err(Error::parse(
                src,
                hline,
                format!("unknown curve kind `{other}`"),
            ))
        }
    };
    let mut thresholds = Vec::new();
    let mut values = Vec::new();
    for (line, row) in rows {
        let (t, v) = pair(row, src, line)?;
        thresholds.push(parse_f64(t, "threshold", src, line)?);
        values.push(parse_f64(v, "value", src, line)?);
    }
    let curve = MetricsCurve::new(kind, thresholds, values)
        .map_err(|e| Error::parse(src, hline, e.to_string()))?;
    Ok(CurveFile {
        scheme: scheme.into(),
        subject: subject.into(),
        curve,
    })
}

pub fn read_curve(path: &Path) -> Result<CurveFile> {
    parse_curve(&read_text(path)?, &path.display().to_string())
}

pub const SUMMARY_HEADER: &str =
    "combination,victim,interferer,rep,scheme,thr_at_1pct_db,thr_at_10pct_db,gain_at_10pct_db,lcr_at_ref_hz";

pub const AGGREGATE_HEADER: &str = "combination,victim,interferer,scheme,reps,\
thr_at_1pct_mean_db,thr_at_1pct_std_db,thr_at_10pct_mean_db,thr_at_10pct_std_db,\
gain_at_10pct_mean_db,gain_at_10pct_std_db,lcr_at_ref_mean_hz,lcr_at_ref_std_hz";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NaN".into(), |x| x.to_string())
}

/// Row labels for one run in a summary table.
#[derive(Debug, Clone, Copy)]
pub struct RunLabel<'a> {
    pub combination: usize,
    pub victim: &'a str,
    pub interferer: &'a str,
    pub rep: usize,
}

/// One summary row per scheme.
pub fn summary_rows(label: RunLabel<'_>, result: &RunResult) -> String {
    let mut out = String::new();
    for scheme in Scheme::ALL {
        let s = result.summary(scheme);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            label.combination,
            label.victim,
            label.interferer,
            label.rep,
            scheme.as_str(),
            opt(s.threshold_at_1pct_db),
            opt(s.threshold_at_10pct_db),
            opt(result.gain_at_10pct_db),
            s.lcr_at_reference_hz
        );
    }
    out
}

pub fn aggregate_rows(c: &CombinationResult, victim: &str, interferer: &str) -> String {
    let mut out = String::new();
    let sp = |s: &Spread| format!("{},{}", s.mean, s.std);
    for scheme in Scheme::ALL {
        let a = c.aggregate(scheme);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            c.id,
            victim,
            interferer,
            scheme.as_str(),
            c.runs.len(),
            sp(&a.threshold_at_1pct_db),
            sp(&a.threshold_at_10pct_db),
            sp(&c.gain_at_10pct_db),
            sp(&a.lcr_at_reference_hz)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn link() -> LinkId {
        "2:LH->1:LH".parse().unwrap()
    }

    #[test]
    fn three_row_trace() {
        let t = parse_trace("link=1:LH->1:C,period_ms=15\n0,-60\n15,-61\n30,-59\n", "t").unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.sample_period(), 15.0);
        assert_eq!(t.samples(), &[-60.0, -61.0, -59.0]);
    }

    #[test]
    fn twenty_five_rows_at_forty_ms() {
        let mut text = String::from("link=2:LH->1:LH,period_ms=40\n");
        for i in 0..25 {
            text += &format!("{},{}\n", i * 40, -70 - i % 3);
        }
        let t = parse_trace(&text, "t").unwrap();
        assert_eq!(t.len(), 25);
        assert_eq!(t.sample_period(), 40.0);
    }

    fn err_line(text: &str) -> usize {
        match parse_trace(text, "t") {
            Err(Error::Parse { line, .. }) => line,
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn trace_errors_name_the_line() {
        assert_eq!(err_line("link=1:LH->1:C,period_ms=15\n0,-60\n15,NaN\n"), 3);
        assert_eq!(err_line("link=1:LH->1:C,period_ms=15\n0,-60\n0,-61\n"), 3);
        assert_eq!(err_line("link=1:LH->1:C,period_ms=15\n0,-60\n30,-61\n"), 3);
        assert_eq!(err_line("link=1:LH->1:C,period_ms=15\n0,-60,1\n"), 2);
        assert_eq!(err_line("0,-60\n15,-61\n"), 1);
        assert_eq!(err_line("link=1:LH->1:C\n0,-60\n"), 1);
        assert_eq!(err_line(""), 1);
    }

    #[test]
    fn curve_and_series_round_trip() {
        let c = MetricsCurve::new(
            CurveKind::Lcr,
            vec![-1.5, 0.0, 2.5],
            vec![0.0, 8.333333333333334, 0.1],
        )
        .unwrap();
        let text = format_curve(&c, "coop", "1");
        assert!(text.starts_with("kind,lcr,scheme,coop,subject,1\n"));
        let back = parse_curve(&text, "c").unwrap();
        assert_eq!(back.curve, c);
        assert_eq!(back.scheme, "coop");

        let s = SinrSeries::uniform(0.0, 120.0, vec![10.0, 2.0, 10.0]).unwrap();
        assert_eq!(parse_series(&format_series(&s), "s").unwrap(), s);
    }

    #[test]
    fn series_errors() {
        assert!(matches!(
            parse_series("", "s"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_series("t_ms,sinr_db\n", "s"),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            parse_series("t_ms,sinr_db\n0,1\nx,2\n", "s"),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn directory_loading() {
        let dir = tempfile::tempdir().unwrap();
        let t = ChannelTrace::new(link(), 40.0, vec![-70.0, -71.0]).unwrap();
        write_trace(&dir.path().join(trace_file_name(&link())), &t).unwrap();
        std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let set = load_trace_dir(dir.path()).unwrap();
        assert_eq!(set.get(&link()), Some(&t));
        assert_eq!(trace_file_name(&link()), "2_LH__1_LH.csv");

        let path = dir.path().join("2_LH__1_LH.csv");
        assert!(load_trace(&path, link()).is_ok());
        assert!(load_trace(&path, "2:LH->1:C".parse().unwrap()).is_err());

        std::fs::write(dir.path().join("dup.csv"), format_trace(&t)).unwrap();
        assert!(load_trace_dir(dir.path()).is_err());
    }

    proptest! {
        #[test]
        fn traces_round_trip(samples in prop::collection::vec(-150.0f64..20.0, 1..100), period in prop::sample::select(vec![15.0, 40.0, 120.0, 12.5])) {
            let t = ChannelTrace::new(link(), period, samples).unwrap();
            prop_assert_eq!(parse_trace(&format_trace(&t), "p").unwrap(), t);
        }
    }
}
