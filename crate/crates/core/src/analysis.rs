//! Post-processing of per-tick logs: overlap and jamming-success ratios,
//! smoothed series with ±2σ bands, and stage summaries.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::TickRecord;

/// Percentage of ticks whose jammer band overlaps the ally channel.
pub fn overlap_ratio(window: &[TickRecord]) -> Result<f64> {
    if window.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let hits = window.iter().filter(|r| r.overlap > 0.0).count();
    Ok(100.0 * hits as f64 / window.len() as f64)
}

/// Percentage of ticks that are both overlapped and below the SNR threshold
/// `m_db`.
pub fn jamming_success_rate(window: &[TickRecord], m_db: f64) -> Result<f64> {
    if window.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let hits = window.iter().filter(|r| r.overlap > 0.0 && r.snr < m_db).count();
    Ok(100.0 * hits as f64 / window.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricSeries {
    pub name: String,
    /// `(tick, value)` with strictly increasing ticks.
    pub points: Vec<(u64, f64)>,
    /// Smoothing window that produced the series; 1 for raw data.
    pub window: usize,
}

impl MetricSeries {
    pub fn new(name: impl Into<String>, points: Vec<(u64, f64)>) -> Result<Self> {
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Domain("series ticks must be strictly increasing".into()));
        }
        Ok(Self { name: name.into(), points, window: 1 })
    }

    /// Builds a series from one field of each record, keyed by tick.
    pub fn from_records(name: &str, records: &[TickRecord], f: impl Fn(&TickRecord) -> f64) -> Result<Self> {
        Self::new(name, records.iter().map(|r| (r.tick, f(r))).collect())
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.1)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Index range of the centered window of width `w` around `i`, truncated at
/// the series ends. Even widths lean one sample to the left.
fn centered(i: usize, w: usize, n: usize) -> std::ops::Range<usize> {
    let left = w / 2;
    let right = w - 1 - left;
    i.saturating_sub(left)..(i + right + 1).min(n)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation; zero for fewer than two values.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

fn smooth(series: &MetricSeries, w: usize, name: String, f: impl Fn(&[f64]) -> f64) -> MetricSeries {
    let w = w.max(1);
    let v: Vec<f64> = series.values().collect();
    let points = series
        .points
        .iter()
        .enumerate()
        .map(|(i, &(tick, _))| (tick, f(&v[centered(i, w, v.len())])))
        .collect();
    MetricSeries { name, points, window: w }
}

/// Centered moving average, truncated at the edges. `w = 0` is treated as 1.
pub fn moving_average(series: &MetricSeries, w: usize) -> MetricSeries {
    smooth(series, w, format!("{}_ma{w}", series.name), mean)
}

/// Smoothed series with a ±2σ band from the window sample deviation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Band {
    pub mean: MetricSeries,
    pub lower: MetricSeries,
    pub upper: MetricSeries,
}

pub fn std_band(series: &MetricSeries, w: usize) -> Band {
    let mean = moving_average(series, w);
    let sd = smooth(series, w, String::new(), sample_std);
    let shift = |sign: f64, suffix: &str| MetricSeries {
        name: format!("{}_{suffix}", mean.name),
        points: mean.points.iter().zip(&sd.points).map(|(&(t, m), &(_, s))| (t, m + sign * 2.0 * s)).collect(),
        window: mean.window,
    };
    let (lower, upper) = (shift(-1.0, "lower"), shift(1.0, "upper"));
    Band { mean, lower, upper }
}

/// Linear-interpolation quantile (type 7) of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Half-open tick range `[start, end)` of a named stage.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Stage {
    pub name: String,
    pub start: u64,
    pub end: u64,
}

impl Stage {
    pub fn new(name: impl Into<String>, start: u64, end: u64) -> Self {
        Self { name: name.into(), start, end }
    }

    /// Early, middle and late stages of a run of `total` ticks: the first
    /// half, 5% around the midpoint, and the last 5%.
    pub fn standard(total: u64) -> Vec<Stage> {
        let at = |f: f64| (total as f64 * f).round() as u64;
        vec![
            Stage::new("early", 1, at(0.5) + 1),
            Stage::new("middle", at(0.475) + 1, at(0.525) + 1),
            Stage::new("late", at(0.95) + 1, total + 1),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageSummary {
    pub stage: String,
    pub start: u64,
    pub end: u64,
    pub ticks: usize,
    pub overlap_pct: f64,
    pub success_pct: f64,
    /// Quartiles and spread of the ally center frequency, MHz.
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub std: f64,
    /// Largest per-tick overlap fraction within the stage.
    pub max_overlap: f64,
    pub mean_r_ally: f64,
    pub mean_r_opponent: f64,
}

/// Summarizes each stage of `log`. Stages must be non-empty and lie within
/// the log's tick range.
pub fn stage_summary(log: &[TickRecord], stages: &[Stage], m_db: f64) -> Result<Vec<StageSummary>> {
    let (Some(first), Some(last)) = (log.first(), log.last()) else {
        return Err(Error::EmptyWindow);
    };
    let (lo, hi) = (first.tick, last.tick + 1);
    stages
        .iter()
        .map(|st| {
            if st.start >= st.end || st.start < lo || st.end > hi {
                return Err(Error::StageOutOfRange(format!(
                    "`{}` covers ticks [{}, {}) but the log holds [{lo}, {hi})",
                    st.name, st.start, st.end
                )));
            }
            let window: Vec<TickRecord> =
                log.iter().filter(|r| r.tick >= st.start && r.tick < st.end).cloned().collect();
            summarize(st, &window, m_db)
        })
        .collect()
}

fn summarize(st: &Stage, window: &[TickRecord], m_db: f64) -> Result<StageSummary> {
    let mut freqs: Vec<f64> = window.iter().map(|r| r.f_ally).collect();
    if freqs.is_empty() {
        return Err(Error::EmptyWindow);
    }
    freqs.sort_by(f64::total_cmp);
    let (q1, q3) = (quantile_sorted(&freqs, 0.25), quantile_sorted(&freqs, 0.75));
    let n = window.len() as f64;
    Ok(StageSummary {
        stage: st.name.clone(),
        start: st.start,
        end: st.end,
        ticks: window.len(),
        overlap_pct: overlap_ratio(window)?,
        success_pct: jamming_success_rate(window, m_db)?,
        q1,
        q3,
        iqr: q3 - q1,
        std: sample_std(&freqs),
        max_overlap: window.iter().map(|r| r.overlap).fold(0.0, f64::max),
        mean_r_ally: window.iter().map(|r| r.r_ally).sum::<f64>() / n,
        mean_r_opponent: window.iter().map(|r| r.r_opp).sum::<f64>() / n,
    })
}

/// Per-episode aggregate row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpisodeRow {
    pub episode: u64,
    pub ticks: usize,
    pub mean_r_ally: f64,
    pub mean_r_opponent: f64,
    pub mean_snr: f64,
    pub overlap_pct: f64,
    pub success_pct: f64,
}

pub fn episode_rows(log: &[TickRecord], m_db: f64) -> Result<Vec<EpisodeRow>> {
    log.chunk_by(|a, b| a.episode == b.episode)
        .map(|ep| {
            let n = ep.len() as f64;
            Ok(EpisodeRow {
                episode: ep[0].episode,
                ticks: ep.len(),
                mean_r_ally: ep.iter().map(|r| r.r_ally).sum::<f64>() / n,
                mean_r_opponent: ep.iter().map(|r| r.r_opp).sum::<f64>() / n,
                mean_snr: ep.iter().map(|r| r.snr).sum::<f64>() / n,
                overlap_pct: overlap_ratio(ep)?,
                success_pct: jamming_success_rate(ep, m_db)?,
            })
        })
        .collect()
}

#[derive(Serialize)]
struct SmoothedRow {
    tick: u64,
    raw: f64,
    mean: f64,
    lower: f64,
    upper: f64,
}

/// Metric tables derived from one log; a pure function of the log.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricTables {
    pub overlap_pct: f64,
    pub success_pct: f64,
    pub episodes: Vec<EpisodeRow>,
    pub stages: Vec<StageSummary>,
    pub r_ally: (MetricSeries, Band),
    pub r_opponent: (MetricSeries, Band),
}

impl MetricTables {
    /// Smoothing uses a window of `w` ticks; stages are the standard three
    /// over the log's tick range.
    pub fn compute(log: &[TickRecord], m_db: f64, w: usize) -> Result<Self> {
        let (Some(first), Some(last)) = (log.first(), log.last()) else {
            return Err(Error::EmptyWindow);
        };
        let span = last.tick + 1 - first.tick;
        let stages: Vec<Stage> = Stage::standard(span)
            .into_iter()
            .map(|s| Stage { start: s.start - 1 + first.tick, end: s.end - 1 + first.tick, ..s })
            .filter(|s| s.start < s.end)
            .collect();
        let ally = MetricSeries::from_records("r_ally", log, |r| r.r_ally)?;
        let opp = MetricSeries::from_records("r_opponent", log, |r| r.r_opp)?;
        Ok(Self {
            overlap_pct: overlap_ratio(log)?,
            success_pct: jamming_success_rate(log, m_db)?,
            episodes: episode_rows(log, m_db)?,
            stages: stage_summary(log, &stages, m_db)?,
            r_ally: (ally.clone(), std_band(&ally, w)),
            r_opponent: (opp.clone(), std_band(&opp, w)),
        })
    }

    pub fn write_episodes<W: Write>(&self, w: W) -> Result<()> {
        write_csv(w, &self.episodes)
    }

    pub fn write_stages<W: Write>(&self, w: W) -> Result<()> {
        write_csv(w, &self.stages)
    }

    pub fn write_rewards<W: Write>(&self, w: W) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            tick: u64,
            r_ally: f64,
            r_ally_ma: f64,
            r_ally_lower: f64,
            r_ally_upper: f64,
            r_opponent: f64,
            r_opponent_ma: f64,
            r_opponent_lower: f64,
            r_opponent_upper: f64,
        }
        let (a, ab) = &self.r_ally;
        let (o, ob) = &self.r_opponent;
        let rows: Vec<Row> = (0..a.len())
            .map(|i| Row {
                tick: a.points[i].0,
                r_ally: a.points[i].1,
                r_ally_ma: ab.mean.points[i].1,
                r_ally_lower: ab.lower.points[i].1,
                r_ally_upper: ab.upper.points[i].1,
                r_opponent: o.points[i].1,
                r_opponent_ma: ob.mean.points[i].1,
                r_opponent_lower: ob.lower.points[i].1,
                r_opponent_upper: ob.upper.points[i].1,
            })
            .collect();
        write_csv(w, &rows)
    }

    /// Writes `episodes.csv`, `stages.csv` and `rewards.csv` into `dir`.
    pub fn write_dir(&self, dir: &std::path::Path) -> Result<()> {
        self.write_episodes(std::fs::File::create(dir.join("episodes.csv"))?)?;
        self.write_stages(std::fs::File::create(dir.join("stages.csv"))?)?;
        self.write_rewards(std::fs::File::create(dir.join("rewards.csv"))?)?;
        Ok(())
    }
}

/// Writes rows as comma-separated values with a one-line header.
pub fn write_csv<W: Write, T: Serialize>(w: W, rows: &[T]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    out.flush()?;
    Ok(())
}

/// Writes a smoothed series with its band as `tick,raw,mean,lower,upper`.
pub fn write_band<W: Write>(w: W, raw: &MetricSeries, band: &Band) -> Result<()> {
    let rows: Vec<SmoothedRow> = raw
        .points
        .iter()
        .enumerate()
        .map(|(i, &(tick, v))| SmoothedRow {
            tick,
            raw: v,
            mean: band.mean.points[i].1,
            lower: band.lower.points[i].1,
            upper: band.upper.points[i].1,
        })
        .collect();
    write_csv(w, &rows)
}
