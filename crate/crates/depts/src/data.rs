//! Time-series containers, CSV ingestion, splitting, and window sampling.
//!
//! A [`Series`] is a run of equally spaced observations indexed by a global
//! integer time axis: the value at position `i` of `values` sits at time
//! `t0 + i`. The global axis matters because the periodicity function is
//! evaluated at absolute times; splitting a series preserves each segment's
//! position on that axis.
//!
//! The on-disk format is long-form CSV with the exact header
//! `series_id,t,value`, UTF-8, one row per observation, rows of each series
//! sorted by `t` with no gaps and no duplicates.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One univariate series on the global integer time axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    /// Identifier carried through all file formats.
    pub id: String,
    /// Global time index of `values[0]`.
    pub t0: i64,
    /// Observations at `t0, t0 + 1, ...`; non-empty, all finite.
    pub values: Vec<f64>,
}

impl Series {
    /// Builds a series, enforcing the non-empty / all-finite invariants.
    pub fn new(id: impl Into<String>, t0: i64, values: Vec<f64>) -> Result<Self> {
        let id = id.into();
        if values.is_empty() {
            return Err(Error::Data(format!("series '{id}' has no observations")));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "series '{id}' has a non-finite value at t={}",
                t0 + i as i64
            )));
        }
        Ok(Series { id, t0, values })
    }

    /// Number of observations.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// True when the series holds no observations (never for validated data).
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// One past the last global time index.
    pub fn end(&self) -> i64 {
        self.t0 + self.values.len() as i64
    }

    /// Values on the half-open global interval `[from, to)`.
    ///
    /// Errors when the interval falls outside the series.
    pub fn window(&self, from: i64, to: i64) -> Result<&[f64]> {
        if from < self.t0 || to > self.end() || from > to {
            return Err(Error::Data(format!(
                "window [{from}, {to}) outside series '{}' covering [{}, {})",
                self.id,
                self.t0,
                self.end()
            )));
        }
        let a = (from - self.t0) as usize;
        let b = (to - self.t0) as usize;
        Ok(&self.values[a..b])
    }
}

/// Boundaries of a train/validation/test split on the global time axis.
///
/// The three segments are `[t0, train_end)`, `[train_end, val_end)` and
/// `[val_end, test_end)`. Validation and test may be empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SplitSpec {
    pub train_end: i64,
    pub val_end: i64,
    pub test_end: i64,
}

impl SplitSpec {
    fn validate(&self, series: &Series) -> Result<()> {
        if series.t0 < self.train_end
            && self.train_end <= self.val_end
            && self.val_end <= self.test_end
            && self.test_end <= series.end()
        {
            Ok(())
        } else {
            Err(Error::Data(format!(
                "split {}/{}/{} invalid for series '{}' covering [{}, {})",
                self.train_end,
                self.val_end,
                self.test_end,
                series.id,
                series.t0,
                series.end()
            )))
        }
    }
}

/// Cuts a series into contiguous train/validation/test segments.
///
/// Each segment keeps its position on the global time axis, so
/// `val.t0 == train_end` and `test.t0 == val_end`. Empty validation or test
/// segments come back as `None`.
pub fn split(
    series: &Series,
    spec: &SplitSpec,
) -> Result<(Series, Option<Series>, Option<Series>)> {
    spec.validate(series)?;
    let part = |from: i64, to: i64| -> Result<Option<Series>> {
        if from == to {
            return Ok(None);
        }
        Ok(Some(Series::new(series.id.clone(), from, series.window(from, to)?.to_vec())?))
    };
    let train = part(series.t0, spec.train_end)?
        .expect("train segment is non-empty because t0 < train_end");
    let val = part(spec.train_end, spec.val_end)?;
    let test = part(spec.val_end, spec.test_end)?;
    Ok((train, val, test))
}

/// One training example: a lookback window and the horizon that follows it.
#[derive(Debug, Clone)]
pub struct WindowSample {
    /// Position of the source series in its dataset.
    pub series_index: usize,
    /// Global time of the forecast origin; lookback covers `[anchor-L, anchor)`.
    pub anchor: i64,
    /// The `L` observations before the anchor.
    pub lookback: Vec<f64>,
    /// The `H` observations from the anchor onwards.
    pub target: Vec<f64>,
}

/// Inclusive range of valid anchors for windows drawn from `region`.
///
/// An anchor `t` is valid when the lookback `[t-L, t)` and target `[t, t+H)`
/// both lie inside the region and `t` falls within the trailing
/// `horizon_len` positions of the region.
pub fn anchor_range(region: &Series, l: usize, h: usize, horizon_len: usize) -> Option<(i64, i64)> {
    let lo = (region.t0 + l as i64).max(region.end() - horizon_len as i64);
    let hi = region.end() - h as i64;
    (lo <= hi).then_some((lo, hi))
}

/// Draws `count` windows uniformly over the valid anchors of one region.
///
/// Errors when no anchor admits a full lookback and target.
pub fn sample_windows(
    region: &Series,
    series_index: usize,
    l: usize,
    h: usize,
    horizon_len: usize,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<WindowSample>> {
    let (lo, hi) = anchor_range(region, l, h, horizon_len).ok_or_else(|| {
        Error::Data(format!(
            "series '{}': no valid anchors for lookback {l}, horizon {h} in a region of {} points",
            region.id,
            region.len()
        ))
    })?;
    (0..count)
        .map(|_| {
            let anchor = rng.gen_range(lo..=hi);
            window_at(region, series_index, anchor, l, h)
        })
        .collect()
}

/// Builds the sample anchored at a specific time.
pub fn window_at(
    region: &Series,
    series_index: usize,
    anchor: i64,
    l: usize,
    h: usize,
) -> Result<WindowSample> {
    Ok(WindowSample {
        series_index,
        anchor,
        lookback: region.window(anchor - l as i64, anchor)?.to_vec(),
        target: region.window(anchor, anchor + h as i64)?.to_vec(),
    })
}

const CSV_HEADER: [&str; 3] = ["series_id", "t", "value"];

/// Parses long-form CSV from any reader; series appear in first-seen order.
///
/// This is the single entry point for untrusted bytes, shared by
/// [`load_csv`] and the fuzz harness: it must reject, never panic.
pub fn parse_csv(reader: impl Read) -> Result<Vec<Series>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let data_err = |e: csv::Error| Error::Data(format!("malformed csv: {e}"));
    let header = rdr.headers().map_err(data_err)?;
    if header != CSV_HEADER.as_slice() {
        return Err(Error::Data(format!(
            "expected header 'series_id,t,value', found '{}'",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut order: Vec<Series> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(data_err)?;
        if record.len() != 3 {
            return Err(Error::Data(format!(
                "row {}: expected 3 fields, found {}",
                line + 2,
                record.len()
            )));
        }
        let id = record[0].to_string();
        let t: i64 = record[1].trim().parse().map_err(|_| {
            Error::Data(format!("row {}: non-integer time '{}'", line + 2, &record[1]))
        })?;
        let value: f64 = record[2].trim().parse().map_err(|_| {
            Error::Data(format!("row {}: non-numeric value '{}'", line + 2, &record[2]))
        })?;
        if !value.is_finite() {
            return Err(Error::Data(format!(
                "row {}: non-finite value for series '{id}'",
                line + 2
            )));
        }
        match index.get(&id) {
            None => {
                index.insert(id.clone(), order.len());
                order.push(Series { id, t0: t, values: vec![value] });
            }
            Some(&i) => {
                let series = &mut order[i];
                let expected = series.end();
                if t != expected {
                    return Err(Error::Data(format!(
                        "row {}: series '{id}' expects t={expected}, found t={t} (gap, duplicate, or unsorted rows)",
                        line + 2
                    )));
                }
                series.values.push(value);
            }
        }
    }
    Ok(order)
}

/// Loads a long-form CSV dataset from disk.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<Series>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv(std::io::BufReader::new(file))
}

/// Serializes series to the long-form CSV format accepted by [`parse_csv`].
pub fn csv_bytes(series: &[Series]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("write to Vec cannot fail");
    for s in series {
        for (i, v) in s.values.iter().enumerate() {
            w.write_record([s.id.as_str(), &(s.t0 + i as i64).to_string(), &format_float(*v)])
                .expect("write to Vec cannot fail");
        }
    }
    w.into_inner().expect("flush to Vec cannot fail")
}

/// Shortest decimal form that parses back to the identical bits; `{}` on
/// `f64` is Rust's shortest-round-trip rendering.
pub(crate) fn format_float(v: f64) -> String {
    format!("{v}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn series(len: usize) -> Series {
        Series::new("s", 0, (0..len).map(|i| i as f64).collect()).unwrap()
    }

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(Series::new("a", 0, vec![]).is_err());
        assert!(Series::new("a", 0, vec![1.0, f64::NAN]).is_err());
        assert!(Series::new("a", 0, vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn split_preserves_global_axis() {
        let s = Series::new("a", 5, (0..10).map(|i| i as f64).collect()).unwrap();
        let spec = SplitSpec { train_end: 12, val_end: 13, test_end: 15 };
        let (train, val, test) = split(&s, &spec).unwrap();
        assert_eq!((train.t0, train.len()), (5, 7));
        let val = val.unwrap();
        let test = test.unwrap();
        assert_eq!((val.t0, val.len()), (12, 1));
        assert_eq!((test.t0, test.len()), (13, 2));
        // Partition: concatenation reproduces the original values.
        let mut joined = train.values.clone();
        joined.extend_from_slice(&val.values);
        joined.extend_from_slice(&test.values);
        assert_eq!(joined, s.values);
    }

    #[test]
    fn split_allows_empty_val_and_test() {
        let s = series(10);
        let spec = SplitSpec { train_end: 10, val_end: 10, test_end: 10 };
        let (train, val, test) = split(&s, &spec).unwrap();
        assert_eq!(train.len(), 10);
        assert!(val.is_none());
        assert!(test.is_none());
    }

    #[test]
    fn split_rejects_bad_boundaries() {
        let s = series(10);
        for spec in [
            SplitSpec { train_end: 0, val_end: 5, test_end: 10 },
            SplitSpec { train_end: 6, val_end: 5, test_end: 10 },
            SplitSpec { train_end: 5, val_end: 6, test_end: 11 },
        ] {
            assert!(split(&s, &spec).is_err(), "{spec:?}");
        }
    }

    #[test]
    fn anchor_range_matches_hand_count() {
        // 100-point region, L = 24, H = 24: anchors t in [t0+24, t0+76].
        let s = series(100);
        assert_eq!(anchor_range(&s, 24, 24, 100), Some((24, 76)));
        // Trailing-horizon restriction moves the lower bound up.
        assert_eq!(anchor_range(&s, 24, 24, 40), Some((60, 76)));
        // Too few trailing positions leave no room for the target.
        assert_eq!(anchor_range(&s, 24, 24, 10), None);
    }

    #[test]
    fn sampled_windows_have_expected_shape() {
        let s = series(100);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let windows = sample_windows(&s, 3, 24, 24, 100, 32, &mut rng).unwrap();
        assert_eq!(windows.len(), 32);
        for w in windows {
            assert_eq!(w.series_index, 3);
            assert!((24..=76).contains(&w.anchor));
            assert_eq!(w.lookback.len(), 24);
            assert_eq!(w.target.len(), 24);
            assert_eq!(w.lookback[23], (w.anchor - 1) as f64);
            assert_eq!(w.target[0], w.anchor as f64);
        }
    }

    #[test]
    fn sample_windows_errors_when_region_too_short() {
        let s = series(30);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_windows(&s, 0, 24, 24, 30, 4, &mut rng).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let a = Series::new("a", 0, vec![1.5, -2.0, 3.25]).unwrap();
        let b = Series::new("b", 7, vec![0.1, 0.2]).unwrap();
        let bytes = csv_bytes(&[a.clone(), b.clone()]);
        let parsed = parse_csv(bytes.as_slice()).unwrap();
        assert_eq!(parsed, vec![a, b]);
    }

    #[test]
    fn csv_rejects_malformed_input() {
        let cases: [&[u8]; 6] = [
            b"wrong,header,here\na,0,1\n",
            b"series_id,t,value\na,0,abc\n",
            b"series_id,t,value\na,x,1\n",
            b"series_id,t,value\na,0,1\na,2,1\n", // gap
            b"series_id,t,value\na,0,1\na,0,2\n", // duplicate
            b"series_id,t,value\na,1,1\na,0,2\n", // unsorted
        ];
        for c in cases {
            assert!(parse_csv(c).is_err(), "{}", String::from_utf8_lossy(c));
        }
    }

    #[test]
    fn csv_accepts_interleaved_series() {
        let text = b"series_id,t,value\na,0,1\nb,0,5\na,1,2\nb,1,6\n";
        let parsed = parse_csv(text.as_slice()).unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed[0].values, vec![1.0, 2.0]);
        assert_eq!(parsed[1].values, vec![5.0, 6.0]);
    }

    #[test]
    fn missing_file_is_a_data_class_error() {
        let err = load_csv("/nonexistent/depts.csv").unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
