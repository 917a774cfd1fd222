//! Test-time evaluation: accuracy metrics, forecast ensembling, the rolling
//! forecast protocol, and the forecast dump format.
//!
//! The headline metrics pool absolute errors over every (series, time) pair
//! of the evaluation region — they are not averages of per-series scores,
//! though the report carries those too. Ensembles combine members by the
//! pointwise median of their forecasts; decomposition columns follow the
//! median member so that `forecast = local_part + periodic_part` stays exact
//! on every emitted row.

use std::collections::HashMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::data::Series;
use crate::error::{Error, Result};
use crate::network::{network_forward, VariantFlags};
use crate::periodicity::{PeriodMask, PeriodicCoefficients};
use crate::train::TrainedModel;

// --- metrics -----------------------------------------------------------------

/// Normalized deviation: `sum |x - f| / sum |x|` over all given points.
///
/// Errors when the actuals are all zero or the shapes disagree.
pub fn nd(actual: &[f64], forecast: &[f64]) -> Result<f64> {
    let denom = abs_sum_checked(actual, forecast)?;
    let err: f64 = actual.iter().zip(forecast).map(|(x, f)| (x - f).abs()).sum();
    Ok(err / denom)
}

/// Normalized root-mean-square error:
/// `sqrt(mean (x - f)^2) / mean |x|` over all given points.
pub fn nrmse(actual: &[f64], forecast: &[f64]) -> Result<f64> {
    let denom = abs_sum_checked(actual, forecast)? / actual.len() as f64;
    let mse: f64 = actual.iter().zip(forecast).map(|(x, f)| (x - f) * (x - f)).sum::<f64>()
        / actual.len() as f64;
    Ok(mse.sqrt() / denom)
}

fn abs_sum_checked(actual: &[f64], forecast: &[f64]) -> Result<f64> {
    if actual.len() != forecast.len() || actual.is_empty() {
        return Err(Error::Data(format!(
            "metric inputs differ in shape or are empty: {} actuals vs {} forecasts",
            actual.len(),
            forecast.len()
        )));
    }
    let denom: f64 = actual.iter().map(|x| x.abs()).sum();
    if denom == 0.0 {
        return Err(Error::Numeric("metric denominator is zero: all actuals are zero".into()));
    }
    Ok(denom)
}

// --- ensembling --------------------------------------------------------------

/// Pointwise median across members; an even count averages the two middle
/// values.
///
/// Errors on an empty collection or mismatched member shapes.
pub fn ensemble(members: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = members.first().ok_or_else(|| Error::Data("ensemble of zero members".into()))?;
    if members.iter().any(|m| m.len() != first.len()) {
        return Err(Error::Data("ensemble members differ in shape".into()));
    }
    let mut scratch = vec![0.0; members.len()];
    Ok((0..first.len())
        .map(|i| {
            for (s, m) in scratch.iter_mut().zip(members) {
                *s = m[i];
            }
            scratch.sort_by(f64::total_cmp);
            let mid = scratch.len() / 2;
            if scratch.len() % 2 == 1 {
                scratch[mid]
            } else {
                (scratch[mid - 1] + scratch[mid]) / 2.0
            }
        })
        .collect())
}

// --- forecast rows -----------------------------------------------------------

/// One evaluated time point of one series: the truth, the forecast, and the
/// forecast's additive decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRow {
    pub series_id: String,
    pub t: i64,
    pub actual: f64,
    pub forecast: f64,
    pub local_part: f64,
    pub periodic_part: f64,
}

/// Combines per-member forecast rows into ensemble rows.
///
/// The ensembled forecast is the pointwise median of the member forecasts
/// (even count: mean of the two middle values). Decomposition columns follow
/// the median member — and, for even counts, average the two middle members'
/// local parts and assign the remainder to the periodic part — so every
/// output row keeps `periodic_part = forecast - local_part` bit-exact, and a
/// variant without periodic forecasts keeps that column at exactly zero.
pub fn ensemble_rows(members: &[Vec<ForecastRow>]) -> Result<Vec<ForecastRow>> {
    let first = members.first().ok_or_else(|| Error::Data("ensemble of zero members".into()))?;
    for m in members {
        if m.len() != first.len()
            || m.iter().zip(first).any(|(a, b)| a.series_id != b.series_id || a.t != b.t)
        {
            return Err(Error::Data("ensemble members cover different (series, t) keys".into()));
        }
    }
    let mut scratch: Vec<(f64, f64, f64)> = vec![(0.0, 0.0, 0.0); members.len()];
    Ok((0..first.len())
        .map(|i| {
            for (s, m) in scratch.iter_mut().zip(members) {
                *s = (m[i].forecast, m[i].local_part, m[i].periodic_part);
            }
            // Value-determined order keeps the result member-permutation
            // invariant even under forecast ties.
            scratch.sort_by(|a, b| {
                a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.total_cmp(&b.2))
            });
            let mid = scratch.len() / 2;
            let (forecast, local_part, periodic_part) = if scratch.len() % 2 == 1 {
                scratch[mid]
            } else {
                let (ta, la, _) = scratch[mid - 1];
                let (tb, lb, _) = scratch[mid];
                let forecast = (ta + tb) / 2.0;
                let local = (la + lb) / 2.0;
                (forecast, local, forecast - local)
            };
            ForecastRow {
                series_id: first[i].series_id.clone(),
                t: first[i].t,
                actual: first[i].actual,
                forecast,
                local_part,
                periodic_part,
            }
        })
        .collect())
}

// --- rolling forecast protocol ------------------------------------------------

/// Non-overlapping forecast anchors covering `[start, end)` in steps of `h`;
/// the final window is truncated to the remainder.
pub fn rolling_anchors(start: i64, end: i64, h: usize) -> Vec<(i64, usize)> {
    let mut anchors = Vec::new();
    let mut t = start;
    while t < end {
        let emit = ((end - t) as usize).min(h);
        anchors.push((t, emit));
        t += h as i64;
    }
    anchors
}

/// Forecasts `[start, end)` of every data series with one trained model,
/// anchoring each window's lookback on the true history.
///
/// Series are matched to the model by id; the range must leave room for a
/// full lookback before `start` and lie inside each series.
pub fn model_forecast_rows(
    model: &TrainedModel,
    data: &[Series],
    start: i64,
    end: i64,
) -> Result<Vec<ForecastRow>> {
    if start >= end {
        return Err(Error::Data(format!("empty forecast range [{start}, {end})")));
    }
    let flags = model.config.variant.flags();
    let mut rows = Vec::new();
    for series in data {
        let index =
            model.series_ids.iter().position(|id| *id == series.id).ok_or_else(|| {
                Error::Data(format!("series '{}' is not in the model", series.id))
            })?;
        let (coeffs, mask) = model.periodicity[index].into_parts();
        rows.extend(forecast_series(
            &model.params,
            index,
            &coeffs,
            &mask,
            &flags,
            series,
            start,
            end,
        )?);
    }
    Ok(rows)
}

/// Rolling forecast of `[start, end)` for one series.
#[allow(clippy::too_many_arguments)]
pub fn forecast_series(
    params: &crate::network::NetworkParams,
    series_index: usize,
    coeffs: &PeriodicCoefficients,
    mask: &PeriodMask,
    flags: &VariantFlags,
    series: &Series,
    start: i64,
    end: i64,
) -> Result<Vec<ForecastRow>> {
    let (l, h) = (params.lookback, params.horizon);
    let mut rows = Vec::new();
    for (anchor, emit) in rolling_anchors(start, end, h) {
        let lookback = series.window(anchor - l as i64, anchor)?;
        let times: Vec<i64> = (anchor - l as i64..anchor + h as i64).collect();
        let z = coeffs.evaluate(mask, &times)?;
        let decomp = network_forward(params, series_index, lookback, &z, flags)?;
        let actual = series.window(anchor, anchor + emit as i64)?;
        for (j, &actual_value) in actual.iter().enumerate() {
            rows.push(ForecastRow {
                series_id: series.id.clone(),
                t: anchor + j as i64,
                actual: actual_value,
                forecast: decomp.forecast[j],
                local_part: decomp.local_part[j],
                periodic_part: decomp.periodic_part[j],
            });
        }
    }
    Ok(rows)
}

// --- reports -----------------------------------------------------------------

/// A normalized-deviation / normalized-RMSE pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricPair {
    pub nd: f64,
    pub nrmse: f64,
}

/// Metrics of a single series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesMetrics {
    pub series_id: String,
    pub nd: f64,
    pub nrmse: f64,
}

/// Evaluation summary: pooled metrics over the whole evaluation space (the
/// headline numbers), the per-series breakdown, and its plain mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub horizon: usize,
    /// Ensemble size behind the evaluated forecast, when known.
    pub member_count: Option<usize>,
    pub aggregate: MetricPair,
    pub per_series_mean: MetricPair,
    pub per_series: Vec<SeriesMetrics>,
}

impl EvalReport {
    /// Renders the report as a fixed-width table for terminals.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let members = self.member_count.map_or_else(|| "-".into(), |m| m.to_string());
        out.push_str(&format!("horizon: {}    members: {members}\n", self.horizon));
        out.push_str(&format!("{:<24} {:>12} {:>12}\n", "series", "nd", "nrmse"));
        for s in &self.per_series {
            out.push_str(&format!("{:<24} {:>12.6} {:>12.6}\n", s.series_id, s.nd, s.nrmse));
        }
        out.push_str(&format!(
            "{:<24} {:>12.6} {:>12.6}\n",
            "mean of series", self.per_series_mean.nd, self.per_series_mean.nrmse
        ));
        out.push_str(&format!(
            "{:<24} {:>12.6} {:>12.6}\n",
            "aggregate", self.aggregate.nd, self.aggregate.nrmse
        ));
        out
    }
}

/// Scores forecast rows: pooled metrics over every row, plus per-series
/// metrics in first-seen order.
pub fn evaluate_rows(
    rows: &[ForecastRow],
    horizon: usize,
    member_count: Option<usize>,
) -> Result<EvalReport> {
    if rows.is_empty() {
        return Err(Error::Data("no forecast rows to evaluate".into()));
    }
    let mut order: Vec<&str> = Vec::new();
    let mut grouped: HashMap<&str, (Vec<f64>, Vec<f64>)> = HashMap::new();
    for row in rows {
        let entry = grouped.entry(&row.series_id).or_insert_with(|| {
            order.push(&row.series_id);
            (Vec::new(), Vec::new())
        });
        entry.0.push(row.actual);
        entry.1.push(row.forecast);
    }
    let mut per_series = Vec::with_capacity(order.len());
    for id in &order {
        let (actual, forecast) = &grouped[id];
        per_series.push(SeriesMetrics {
            series_id: (*id).to_string(),
            nd: nd(actual, forecast)?,
            nrmse: nrmse(actual, forecast)?,
        });
    }
    let n = per_series.len() as f64;
    let per_series_mean = MetricPair {
        nd: per_series.iter().map(|s| s.nd).sum::<f64>() / n,
        nrmse: per_series.iter().map(|s| s.nrmse).sum::<f64>() / n,
    };
    let actual: Vec<f64> = rows.iter().map(|r| r.actual).collect();
    let forecast: Vec<f64> = rows.iter().map(|r| r.forecast).collect();
    let aggregate = MetricPair { nd: nd(&actual, &forecast)?, nrmse: nrmse(&actual, &forecast)? };
    Ok(EvalReport { horizon, member_count, aggregate, per_series_mean, per_series })
}

/// Checks that every row's (series, t, actual) triple agrees with the
/// dataset; the guard for scoring a forecast file against its data.
pub fn verify_rows_against(rows: &[ForecastRow], data: &[Series]) -> Result<()> {
    let by_id: HashMap<&str, &Series> = data.iter().map(|s| (s.id.as_str(), s)).collect();
    for row in rows {
        let series = by_id.get(row.series_id.as_str()).ok_or_else(|| {
            Error::Data(format!("forecast row names unknown series '{}'", row.series_id))
        })?;
        let window = series.window(row.t, row.t + 1).map_err(|_| {
            Error::Data(format!(
                "forecast row at t={} is outside series '{}'",
                row.t, row.series_id
            ))
        })?;
        if window[0] != row.actual {
            return Err(Error::Data(format!(
                "forecast row at (series '{}', t={}) claims actual {} but the dataset holds {}",
                row.series_id, row.t, row.actual, window[0]
            )));
        }
    }
    Ok(())
}

// --- forecast CSV ------------------------------------------------------------

const FORECAST_HEADER: [&str; 6] =
    ["series_id", "t", "actual", "forecast", "local_part", "periodic_part"];

/// Serializes forecast rows as CSV with a fixed header.
pub fn forecast_csv_bytes(rows: &[ForecastRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| Error::Data(format!("cannot encode forecast row: {e}")))?;
    }
    w.into_inner().map_err(|e| Error::Data(format!("cannot encode forecast csv: {e}")))
}

/// Parses a forecast CSV from any reader.
///
/// Shared by the evaluation command and the fuzz harness: it must reject
/// malformed input, never panic. Numeric fields must be finite.
pub fn parse_forecast_csv(reader: impl Read) -> Result<Vec<ForecastRow>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let data_err = |e: csv::Error| Error::Data(format!("malformed forecast csv: {e}"));
    let header = rdr.headers().map_err(data_err)?;
    if header != FORECAST_HEADER.as_slice() {
        return Err(Error::Data(format!(
            "expected forecast header '{}', found '{}'",
            FORECAST_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for record in rdr.deserialize::<ForecastRow>() {
        let row = record.map_err(data_err)?;
        for (name, value) in [
            ("actual", row.actual),
            ("forecast", row.forecast),
            ("local_part", row.local_part),
            ("periodic_part", row.periodic_part),
        ] {
            if !value.is_finite() {
                return Err(Error::Data(format!(
                    "non-finite {name} at (series '{}', t={})",
                    row.series_id, row.t
                )));
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::NetworkParams;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn nd_hand_fixtures() {
        assert_eq!(nd(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(nd(&[1.0, 2.0, 3.0], &[2.0, 2.0, 3.0]).unwrap(), 1.0 / 6.0);
        assert_eq!(nd(&[0.0, 0.0], &[1.0, 2.0]).unwrap_err().exit_code(), 3);
    }

    #[test]
    fn nrmse_hand_fixtures() {
        assert_eq!(nrmse(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        let got = nrmse(&[1.0, 2.0, 3.0], &[2.0, 2.0, 3.0]).unwrap();
        assert!((got - (1.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-15, "{got}");
        assert_eq!(nrmse(&[2.0], &[0.0]).unwrap(), 1.0);
    }

    #[test]
    fn metrics_reject_shape_mismatch() {
        assert!(nd(&[1.0], &[1.0, 2.0]).is_err());
        assert!(nrmse(&[], &[]).is_err());
    }

    proptest! {
        #[test]
        fn metrics_are_scale_invariant(
            pairs in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 1..20),
            scale in 0.01f64..1000.0,
        ) {
            let actual: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let forecast: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            prop_assume!(actual.iter().map(|x| x.abs()).sum::<f64>() > 1e-6);
            let sa: Vec<f64> = actual.iter().map(|x| x * scale).collect();
            let sf: Vec<f64> = forecast.iter().map(|x| x * scale).collect();
            let (a, b) = (nd(&actual, &forecast).unwrap(), nd(&sa, &sf).unwrap());
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
            let (a, b) = (nrmse(&actual, &forecast).unwrap(), nrmse(&sa, &sf).unwrap());
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }

        #[test]
        fn ensemble_is_permutation_invariant_and_bounded(
            members in proptest::collection::vec(
                proptest::collection::vec(-50.0f64..50.0, 4),
                1..7,
            ),
        ) {
            let combined = ensemble(&members).unwrap();
            let mut reversed = members.clone();
            reversed.reverse();
            prop_assert_eq!(&combined, &ensemble(&reversed).unwrap());
            for i in 0..4 {
                let lo = members.iter().map(|m| m[i]).fold(f64::INFINITY, f64::min);
                let hi = members.iter().map(|m| m[i]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(combined[i] >= lo && combined[i] <= hi);
            }
        }
    }

    #[test]
    fn ensemble_hand_fixtures() {
        assert_eq!(ensemble(&[vec![7.0, -1.0]]).unwrap(), vec![7.0, -1.0]);
        assert_eq!(ensemble(&[vec![1.0], vec![3.0], vec![100.0]]).unwrap(), vec![3.0]);
        assert_eq!(ensemble(&[vec![1.0], vec![3.0]]).unwrap(), vec![2.0]);
        assert!(ensemble(&[]).is_err());
        assert!(ensemble(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    fn row(id: &str, t: i64, actual: f64, local: f64, periodic: f64) -> ForecastRow {
        ForecastRow {
            series_id: id.into(),
            t,
            actual,
            forecast: local + periodic,
            local_part: local,
            periodic_part: periodic,
        }
    }

    #[test]
    fn ensemble_rows_keeps_decomposition_consistent() {
        let members = vec![
            vec![row("a", 0, 1.0, 0.25, 0.75)],
            vec![row("a", 0, 1.0, 2.0, 1.0)],
            vec![row("a", 0, 1.0, -1.0, 1.5)],
        ];
        let out = ensemble_rows(&members).unwrap();
        // Median total is 1.0 (from the first member); its parts come along.
        assert_eq!(out[0].forecast, 1.0);
        assert_eq!(out[0].local_part, 0.25);
        assert_eq!(out[0].periodic_part, 0.75);

        let even = vec![vec![row("a", 0, 1.0, 1.0, 0.0)], vec![row("a", 0, 1.0, 3.0, 0.0)]];
        let out = ensemble_rows(&even).unwrap();
        assert_eq!(out[0].forecast, 2.0);
        assert_eq!(out[0].periodic_part, out[0].forecast - out[0].local_part);

        // A variant with no periodic forecast keeps the column exactly zero.
        let zeroed = vec![vec![row("a", 0, 1.0, 1.25, 0.0)], vec![row("a", 0, 1.0, 0.5, 0.0)]];
        let out = ensemble_rows(&zeroed).unwrap();
        assert_eq!(out[0].periodic_part, 0.0);
        assert_eq!(out[0].forecast, 0.875);
    }

    #[test]
    fn ensemble_rows_rejects_key_disagreement() {
        let a = vec![row("a", 0, 1.0, 1.0, 0.0)];
        let b = vec![row("a", 1, 1.0, 1.0, 0.0)];
        assert!(ensemble_rows(&[a.clone(), b]).is_err());
        let c = vec![row("b", 0, 1.0, 1.0, 0.0)];
        assert!(ensemble_rows(&[a, c]).is_err());
    }

    #[test]
    fn rolling_anchors_cover_the_range_without_overlap() {
        assert_eq!(rolling_anchors(0, 10, 4), vec![(0, 4), (4, 4), (8, 2)]);
        assert_eq!(rolling_anchors(5, 13, 4), vec![(5, 4), (9, 4)]);
        assert_eq!(rolling_anchors(3, 3, 4), vec![]);
        let anchors = rolling_anchors(100, 137, 6);
        let covered: usize = anchors.iter().map(|(_, e)| e).sum();
        assert_eq!(covered, 37);
        for w in anchors.windows(2) {
            assert_eq!(w[0].0 + w[0].1 as i64, w[1].0.min(w[0].0 + 6));
        }
    }

    fn tiny_model(ids: &[&str]) -> TrainedModel {
        let config = crate::train::TrainingConfig {
            lookback_multiplier: 2,
            horizon: 4,
            layers: 1,
            width: 6,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let params = NetworkParams::init(ids.len(), 8, 4, 6, 1, &mut rng);
        let coeffs = PeriodicCoefficients {
            a0: 5.0,
            atoms: vec![crate::kernels::CosineAtom { amplitude: 1.0, frequency: 0.1, phase: 0.0 }],
        };
        TrainedModel {
            series_ids: ids.iter().map(|s| s.to_string()).collect(),
            config,
            params,
            periodicity: ids
                .iter()
                .map(|id| {
                    crate::periodicity::SeriesPeriodicity::from_parts(
                        id,
                        &coeffs,
                        &PeriodMask::all(1),
                    )
                })
                .collect(),
            initial_loss: None,
            final_loss: None,
        }
    }

    fn wavy(id: &str, n: usize) -> Series {
        let values = (0..n).map(|t| 5.0 + (t as f64 * 0.37).sin()).collect();
        Series::new(id, 0, values).unwrap()
    }

    #[test]
    fn model_forecast_rows_cover_the_range_consistently() {
        let model = tiny_model(&["a", "b"]);
        let data = vec![wavy("a", 60), wavy("b", 60)];
        let rows = model_forecast_rows(&model, &data, 50, 60).unwrap();
        assert_eq!(rows.len(), 20);
        for r in &rows {
            assert_eq!(r.periodic_part, r.forecast - r.local_part);
            assert!(r.t >= 50 && r.t < 60);
        }
        // The truth column is copied from the data.
        assert_eq!(rows[0].actual, data[0].values[50]);
        verify_rows_against(&rows, &data).unwrap();
    }

    #[test]
    fn model_forecast_rows_rejects_unknown_series_and_short_history() {
        let model = tiny_model(&["a"]);
        let unknown = vec![wavy("zzz", 60)];
        assert!(model_forecast_rows(&model, &unknown, 50, 60).is_err());
        // Lookback is 8; a start of 4 leaves too little history.
        let data = vec![wavy("a", 60)];
        assert!(model_forecast_rows(&model, &data, 4, 12).is_err());
        assert!(model_forecast_rows(&model, &data, 50, 50).is_err());
    }

    #[test]
    fn evaluate_rows_pools_and_breaks_down() {
        let rows = vec![
            row("a", 0, 1.0, 2.0, 0.0),
            row("a", 1, 2.0, 2.0, 0.0),
            row("a", 2, 3.0, 3.0, 0.0),
            row("b", 0, 10.0, 8.0, 0.0),
        ];
        let report = evaluate_rows(&rows, 3, Some(2)).unwrap();
        assert_eq!(report.horizon, 3);
        assert_eq!(report.member_count, Some(2));
        assert_eq!(report.per_series.len(), 2);
        assert_eq!(report.per_series[0].nd, 1.0 / 6.0);
        assert_eq!(report.per_series[1].nd, 0.2);
        // Pooled: errors (1 + 0 + 0 + 2) over actuals (1+2+3+10).
        assert_eq!(report.aggregate.nd, 3.0 / 16.0);
        let mean = (1.0 / 6.0 + 0.2) / 2.0;
        assert!((report.per_series_mean.nd - mean).abs() < 1e-15);
        assert_ne!(report.aggregate.nd, report.per_series_mean.nd);
        let table = report.render_table();
        assert!(table.contains("aggregate"));
        assert!(table.contains('a') && table.contains('b'));
    }

    #[test]
    fn verify_rows_against_catches_tampering() {
        let data = vec![wavy("a", 20)];
        let good = ForecastRow {
            series_id: "a".into(),
            t: 5,
            actual: data[0].values[5],
            forecast: 0.0,
            local_part: 0.0,
            periodic_part: 0.0,
        };
        verify_rows_against(std::slice::from_ref(&good), &data).unwrap();
        let mut wrong_actual = good.clone();
        wrong_actual.actual += 0.5;
        assert!(verify_rows_against(&[wrong_actual], &data).is_err());
        let mut outside = good.clone();
        outside.t = 99;
        assert!(verify_rows_against(&[outside], &data).is_err());
        let mut unknown = good;
        unknown.series_id = "nope".into();
        assert!(verify_rows_against(&[unknown], &data).is_err());
    }

    #[test]
    fn forecast_csv_round_trips_bit_exactly() {
        let rows = vec![row("a", -3, 1.0 / 3.0, 0.1, 0.2), row("b", 7, 6.02e23, -1e-300, 2.5)];
        let bytes = forecast_csv_bytes(&rows).unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.starts_with("series_id,t,actual,forecast,local_part,periodic_part\n"));
        let back = parse_forecast_csv(bytes.as_slice()).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn parse_forecast_csv_rejects_malformed_input() {
        let cases: [&[u8]; 5] = [
            b"series_id,t,actual\n",
            b"series_id,t,actual,forecast,local_part,periodic_part\na,x,1,2,3,4\n",
            b"series_id,t,actual,forecast,local_part,periodic_part\na,0,1,2,3\n",
            b"series_id,t,actual,forecast,local_part,periodic_part\na,0,NaN,2,3,4\n",
            b"\xff\xfe,broken",
        ];
        for case in cases {
            let err = parse_forecast_csv(case).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{case:?}");
        }
    }
}
