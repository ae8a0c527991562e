//! Agreement analysis between two kinematic systems: bias removal, integer
//! lag search, RMSE and Pearson correlation, and aggregation into
//! median-[IQR] report tables and measure correlations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kin::ChannelId;
use crate::math::quantile;

/// Maximum lag searched by default, seconds.
pub const DEFAULT_MAX_LAG_S: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Affected,
    Unaffected,
}

impl Arm {
    pub fn name(self) -> &'static str {
        match self {
            Arm::Affected => "affected",
            Arm::Unaffected => "unaffected",
        }
    }

    pub fn parse(s: &str) -> Option<Arm> {
        match s {
            "affected" => Some(Arm::Affected),
            "unaffected" => Some(Arm::Unaffected),
            _ => None,
        }
    }
}

/// Agreement of one channel on one trial.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AlignmentResult {
    pub channel: ChannelId,
    /// mean(a) - mean(b), in channel units.
    pub bias: f64,
    /// Lag minimizing RMSE, seconds; positive when `b` is delayed
    /// relative to `a`.
    pub lag_s: f64,
    /// RMSE over the aligned overlap, channel units.
    pub rmse: f64,
    /// Pearson correlation over the aligned overlap; `None` when either
    /// signal has zero variance there.
    pub r: Option<f64>,
}

/// Bias between two equal-length series: `bias = mean(a) - mean(b)`.
/// Returns the bias and `b` shifted onto `a`'s level.
pub fn static_bias(a: &[f64], b: &[f64]) -> Result<(f64, Vec<f64>)> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "static bias",
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }
    let ma = a.iter().sum::<f64>() / a.len() as f64;
    let mb = b.iter().sum::<f64>() / b.len() as f64;
    let bias = ma - mb;
    Ok((bias, b.iter().map(|v| v + bias).collect()))
}

fn rmse_at_lag(a: &[f64], b: &[f64], lag: i64) -> Option<(f64, usize)> {
    let n = a.len() as i64;
    // Compare a[i] against b[i + lag] over the valid overlap.
    let start = 0.max(-lag);
    let end = n.min(n - lag);
    if end <= start {
        return None;
    }
    let len = (end - start) as usize;
    let mut sq = 0.0;
    for i in start..end {
        let d = a[i as usize] - b[(i + lag) as usize];
        sq += d * d;
    }
    Some(((sq / len as f64).sqrt(), len))
}

/// Integer-sample grid search for the lag minimizing RMSE.
///
/// Positive lag means `b` is delayed relative to `a` by that many samples.
/// Ties break toward smaller |lag|, then toward the negative lag. The
/// overlap at any candidate lag must keep at least half the signal.
pub fn align_lag(a: &[f64], b: &[f64], rate_hz: f64, max_lag_s: f64) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "lag alignment",
            expected: a.len(),
            got: b.len(),
        });
    }
    let max_lag = (max_lag_s * rate_hz).round() as i64;
    let min_overlap = a.len().div_ceil(2);
    let mut best: Option<(f64, i64)> = None;
    for lag in -max_lag..=max_lag {
        let Some((rmse, overlap)) = rmse_at_lag(a, b, lag) else {
            continue;
        };
        if overlap < min_overlap {
            return Err(Error::Alignment(format!(
                "overlap {overlap} below half of {} samples at lag {lag}",
                a.len()
            )));
        }
        let better = match best {
            None => true,
            Some((best_rmse, best_lag)) => {
                rmse < best_rmse - 1e-15
                    || ((rmse - best_rmse).abs() <= 1e-15
                        && (lag.abs() < best_lag.abs()
                            || (lag.abs() == best_lag.abs() && lag < best_lag)))
            }
        };
        if better {
            best = Some((rmse, lag));
        }
    }
    let (rmse, lag) = best.ok_or_else(|| Error::Alignment("no valid lag".into()))?;
    Ok((lag as f64 / rate_hz, rmse))
}

/// RMSE and Pearson correlation of two aligned, equal-length series.
pub fn agreement(a: &[f64], b: &[f64]) -> Result<(f64, Option<f64>)> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "agreement",
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.len() < 3 {
        return Err(Error::TooShort {
            needed: 3,
            got: a.len(),
        });
    }
    let n = a.len() as f64;
    let mut sq = 0.0;
    for (x, y) in a.iter().zip(b) {
        sq += (x - y) * (x - y);
    }
    let rmse = (sq / n).sqrt();

    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    let r = if saa <= 0.0 || sbb <= 0.0 {
        None
    } else {
        Some(sab / (saa * sbb).sqrt())
    };
    Ok((rmse, r))
}

/// Full per-channel comparison: bias on the whole trial, then lag search on
/// the bias-adjusted pair, then RMSE/correlation on the aligned overlap.
pub fn compare_channel(
    channel: ChannelId,
    a: &[f64],
    b: &[f64],
    rate_hz: f64,
    max_lag_s: f64,
) -> Result<AlignmentResult> {
    let (bias, b_adj) = static_bias(a, b)?;
    let (lag_s, _) = align_lag(a, &b_adj, rate_hz, max_lag_s)?;
    let lag = (lag_s * rate_hz).round() as i64;
    let n = a.len() as i64;
    let start = 0.max(-lag) as usize;
    let end = n.min(n - lag) as usize;
    let a_seg = &a[start..end];
    let b_seg: Vec<f64> = (start..end).map(|i| b_adj[(i as i64 + lag) as usize]).collect();
    let (rmse, r) = agreement(a_seg, &b_seg)?;
    Ok(AlignmentResult {
        channel,
        bias,
        lag_s,
        rmse,
        r,
    })
}

/// One trial's alignment results plus grouping tags.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrialComparison {
    pub participant: String,
    pub trial_id: String,
    pub arm: Arm,
    pub channels: Vec<AlignmentResult>,
}

/// `median [q25, q75]` triple.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MedianIqr {
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

impl MedianIqr {
    pub fn from_values(values: &[f64]) -> Option<MedianIqr> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Some(MedianIqr {
            median: quantile(&v, 0.5),
            q25: quantile(&v, 0.25),
            q75: quantile(&v, 0.75),
        })
    }

    pub fn render(&self, decimals: usize) -> String {
        format!(
            "{:.d$} [{:.d$}, {:.d$}]",
            self.median,
            self.q25,
            self.q75,
            d = decimals
        )
    }
}

/// Per (channel, arm) distribution of each agreement statistic across trials,
/// plus the per-participant mean bias-IQR table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AggregateReport {
    /// channel -> arm -> (r, rmse, bias, lag) distributions.
    pub table1: BTreeMap<ChannelId, BTreeMap<Arm, ChannelAggregate>>,
    /// channel -> arm -> mean over participants of each participant's
    /// within-session bias IQR width.
    pub table2: BTreeMap<ChannelId, BTreeMap<Arm, f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChannelAggregate {
    pub r: Option<MedianIqr>,
    pub rmse: Option<MedianIqr>,
    pub bias: Option<MedianIqr>,
    pub lag_s: Option<MedianIqr>,
    pub n_trials: usize,
}

/// Aggregate trial comparisons: median and [q25, q75] per (channel, arm), and
/// the mean-over-participants of within-participant bias IQR widths.
pub fn aggregate(trials: &[TrialComparison]) -> Result<AggregateReport> {
    if trials.is_empty() {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }
    let mut table1: BTreeMap<ChannelId, BTreeMap<Arm, ChannelAggregate>> = BTreeMap::new();
    let mut table2: BTreeMap<ChannelId, BTreeMap<Arm, f64>> = BTreeMap::new();

    for channel in ChannelId::ALL {
        for arm in [Arm::Unaffected, Arm::Affected] {
            let rows: Vec<&AlignmentResult> = trials
                .iter()
                .filter(|t| t.arm == arm)
                .flat_map(|t| t.channels.iter().filter(|c| c.channel == channel))
                .collect();
            if rows.is_empty() {
                log::warn!("empty group ({}, {}), omitted", channel.name(), arm.name());
                continue;
            }
            let collect = |f: &dyn Fn(&AlignmentResult) -> Option<f64>| -> Vec<f64> {
                rows.iter().filter_map(|r| f(r)).collect()
            };
            let agg = ChannelAggregate {
                r: MedianIqr::from_values(&collect(&|x| x.r)),
                rmse: MedianIqr::from_values(&collect(&|x| Some(x.rmse))),
                bias: MedianIqr::from_values(&collect(&|x| Some(x.bias))),
                lag_s: MedianIqr::from_values(&collect(&|x| Some(x.lag_s))),
                n_trials: rows.len(),
            };
            table1.entry(channel).or_default().insert(arm, agg);

            // Table 2: within-participant IQR width of the bias, averaged
            // over participants.
            let mut by_participant: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
            for t in trials.iter().filter(|t| t.arm == arm) {
                for c in t.channels.iter().filter(|c| c.channel == channel) {
                    by_participant
                        .entry(t.participant.as_str())
                        .or_default()
                        .push(c.bias);
                }
            }
            let widths: Vec<f64> = by_participant
                .values()
                .filter_map(|biases| {
                    MedianIqr::from_values(biases).map(|m| m.q75 - m.q25)
                })
                .collect();
            if !widths.is_empty() {
                let mean = widths.iter().sum::<f64>() / widths.len() as f64;
                table2.entry(channel).or_default().insert(arm, mean);
            }
        }
    }
    Ok(AggregateReport { table1, table2 })
}

/// One paired movement-quality value (same trial measured by both systems).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeasurePair {
    pub measure: String,
    pub participant: String,
    pub trial_id: String,
    pub arm: Arm,
    pub value_a: f64,
    pub value_b: f64,
}

/// Correlations of one measure across systems: `r_s` over individual trials,
/// `r_av` over per-participant-per-arm trial means.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeasureCorrelation {
    pub measure: String,
    pub r_s: Option<f64>,
    pub r_av: Option<f64>,
    pub n_trials: usize,
    pub n_groups: usize,
}

fn pearson_opt(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() < 3 {
        return None;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        None
    } else {
        Some(sab / (saa * sbb).sqrt())
    }
}

/// Compute `r_s` and `r_av` for every measure present in `pairs`.
pub fn measure_correlations(pairs: &[MeasurePair]) -> Vec<MeasureCorrelation> {
    let mut measures: Vec<&str> = pairs.iter().map(|p| p.measure.as_str()).collect();
    measures.sort_unstable();
    measures.dedup();

    measures
        .into_iter()
        .map(|m| {
            let rows: Vec<&MeasurePair> = pairs.iter().filter(|p| p.measure == m).collect();
            let a: Vec<f64> = rows.iter().map(|p| p.value_a).collect();
            let b: Vec<f64> = rows.iter().map(|p| p.value_b).collect();
            let r_s = pearson_opt(&a, &b);

            let mut groups: BTreeMap<(String, Arm), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
            for p in &rows {
                let e = groups
                    .entry((p.participant.clone(), p.arm))
                    .or_default();
                e.0.push(p.value_a);
                e.1.push(p.value_b);
            }
            let ga: Vec<f64> = groups
                .values()
                .map(|(x, _)| x.iter().sum::<f64>() / x.len() as f64)
                .collect();
            let gb: Vec<f64> = groups
                .values()
                .map(|(_, y)| y.iter().sum::<f64>() / y.len() as f64)
                .collect();
            let r_av = pearson_opt(&ga, &gb);

            MeasureCorrelation {
                measure: m.to_string(),
                r_s,
                r_av,
                n_trials: rows.len(),
                n_groups: groups.len(),
            }
        })
        .collect()
}
