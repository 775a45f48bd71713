//! Binary classification metrics with `+1` as the positive class.
//!
//! Undefined precision, recall and f1 are `NaN`, not zero, and serialize as
//! the string `"NaN"`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::BinaryLabel;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn record(&mut self, prediction: BinaryLabel, label: BinaryLabel) {
        match (prediction.is_positive(), label.is_positive()) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }
}

pub fn confusion(predictions: &[BinaryLabel], labels: &[BinaryLabel]) -> Result<ConfusionCounts> {
    if predictions.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::invalid("confusion counts need at least one sample"));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &l) in predictions.iter().zip(labels) {
        c.record(p, l);
    }
    Ok(c)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(with = "nan_f64")]
    pub accuracy: f64,
    #[serde(with = "nan_f64")]
    pub precision: f64,
    #[serde(with = "nan_f64")]
    pub recall: f64,
    #[serde(with = "nan_f64")]
    pub f1: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    F1,
    Accuracy,
}

impl Metrics {
    pub fn get(&self, which: SelectionMetric) -> f64 {
        match which {
            SelectionMetric::F1 => self.f1,
            SelectionMetric::Accuracy => self.accuracy,
        }
    }

    /// Elementwise arithmetic mean; any `NaN` entry makes that mean `NaN`.
    pub fn mean(all: &[Metrics]) -> Option<Metrics> {
        if all.is_empty() {
            return None;
        }
        let n = all.len() as f64;
        let avg = |f: fn(&Metrics) -> f64| all.iter().map(f).sum::<f64>() / n;
        Some(Metrics {
            accuracy: avg(|m| m.accuracy),
            precision: avg(|m| m.precision),
            recall: avg(|m| m.recall),
            f1: avg(|m| m.f1),
        })
    }

    /// Four three-decimal cells in table order `acc prec rec f1`.
    pub fn table_cells(&self) -> [String; 4] {
        [self.accuracy, self.precision, self.recall, self.f1].map(format_cell)
    }
}

pub fn compute_metrics(c: &ConfusionCounts) -> Result<Metrics> {
    let total = c.total();
    if total == 0 {
        return Err(Error::invalid("metrics need at least one sample"));
    }
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            f64::NAN
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision.is_nan() || recall.is_nan() || precision + recall == 0.0 {
        f64::NAN
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(Metrics {
        accuracy: (c.tp + c.tn) as f64 / total as f64,
        precision,
        recall,
        f1,
    })
}

/// Three decimals with the leading zero dropped, `NaN` verbatim: `.790`, `1.000`, `NaN`.
pub fn format_cell(v: f64) -> String {
    if v.is_nan() {
        return "NaN".to_string();
    }
    let s = format!("{v:.3}");
    match s.strip_prefix("0.") {
        Some(rest) => format!(".{rest}"),
        None => s,
    }
}

/// Finite values as JSON numbers, `NaN` as the string `"NaN"`.
pub mod nan_f64 {
    use serde::de::{self, Deserializer, Visitor};
    use serde::Serializer;
    use std::fmt;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_str("NaN")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = f64;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or \"NaN\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
                Ok(v)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
                Ok(v as f64)
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
                Ok(v as f64)
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
                if v == "NaN" {
                    Ok(f64::NAN)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use BinaryLabel::{Negative as N, Positive as P};

    #[test]
    fn confusion_examples() {
        let c = confusion(&[P, N, P], &[P, N, P]).unwrap();
        assert_eq!((c.fp, c.fn_), (0, 0));
        let c = confusion(&[N, N, N, N], &[P, N, P, N]).unwrap();
        assert_eq!((c.tp, c.fp), (0, 0));
        let c = confusion(&[P, P, N, P], &[P, N, N, N]).unwrap();
        assert_eq!(
            c,
            ConfusionCounts {
                tp: 1,
                fp: 2,
                tn: 1,
                fn_: 0
            }
        );
        assert!(confusion(&[P], &[P, N]).is_err());
        assert!(confusion(&[], &[]).is_err());
    }

    #[test]
    fn constant_negative_gives_nan_precision() {
        let m = compute_metrics(&ConfusionCounts {
            tp: 0,
            fp: 0,
            tn: 90,
            fn_: 10,
        })
        .unwrap();
        assert!(m.precision.is_nan());
        assert_eq!(m.recall, 0.0);
        assert!(m.f1.is_nan());
        assert_eq!(m.table_cells(), [".900", "NaN", ".000", "NaN"].map(String::from));
    }

    #[test]
    fn hand_computed_metrics() {
        let m = compute_metrics(&ConfusionCounts {
            tp: 2,
            fp: 1,
            tn: 6,
            fn_: 1,
        })
        .unwrap();
        assert!((m.accuracy - 0.8).abs() < 1e-12);
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_and_degenerate() {
        let m = compute_metrics(&ConfusionCounts {
            tp: 3,
            fp: 0,
            tn: 4,
            fn_: 0,
        })
        .unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (1.0, 1.0, 1.0, 1.0));
        // p + r == 0
        let m = compute_metrics(&ConfusionCounts {
            tp: 0,
            fp: 2,
            tn: 0,
            fn_: 3,
        })
        .unwrap();
        assert_eq!((m.precision, m.recall), (0.0, 0.0));
        assert!(m.f1.is_nan());
        assert!(compute_metrics(&ConfusionCounts::default()).is_err());
    }

    #[test]
    fn nan_serializes_as_literal_string() {
        let m = Metrics {
            accuracy: 0.5,
            precision: f64::NAN,
            recall: 0.0,
            f1: f64::NAN,
        };
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(
            s,
            r#"{"accuracy":0.5,"precision":"NaN","recall":0.0,"f1":"NaN"}"#
        );
        let back: Metrics = serde_json::from_str(&s).unwrap();
        assert_eq!(back.accuracy, 0.5);
        assert!(back.precision.is_nan() && back.f1.is_nan());
    }

    #[test]
    fn mean_propagates_nan() {
        let a = Metrics {
            accuracy: 0.5,
            precision: 0.5,
            recall: 0.5,
            f1: 0.5,
        };
        let b = Metrics {
            precision: f64::NAN,
            ..a
        };
        let m = Metrics::mean(&[a, b]).unwrap();
        assert_eq!(m.accuracy, 0.5);
        assert!(m.precision.is_nan());
        assert_eq!(Metrics::mean(&[a]).unwrap(), a);
        assert!(Metrics::mean(&[]).is_none());
    }

    #[test]
    fn formatting() {
        assert_eq!(format_cell(0.7904), ".790");
        assert_eq!(format_cell(1.0), "1.000");
        assert_eq!(format_cell(0.0), ".000");
        assert_eq!(format_cell(f64::NAN), "NaN");
    }

    fn labels() -> impl Strategy<Value = Vec<(bool, bool)>> {
        proptest::collection::vec((any::<bool>(), any::<bool>()), 1..200)
    }

    fn to_labels(v: &[(bool, bool)]) -> (Vec<BinaryLabel>, Vec<BinaryLabel>) {
        let l = |b: bool| if b { P } else { N };
        (v.iter().map(|p| l(p.0)).collect(), v.iter().map(|p| l(p.1)).collect())
    }

    proptest! {
        #[test]
        fn metrics_are_bounded_and_f1_is_harmonic(v in labels()) {
            let (p, l) = to_labels(&v);
            let m = compute_metrics(&confusion(&p, &l).unwrap()).unwrap();
            for x in [m.accuracy, m.precision, m.recall, m.f1] {
                prop_assert!(x.is_nan() || (0.0..=1.0).contains(&x));
            }
            if !m.f1.is_nan() {
                prop_assert!(m.f1 >= m.precision.min(m.recall) - 1e-12);
                prop_assert!(m.f1 <= m.precision.max(m.recall) + 1e-12);
            }
        }

        #[test]
        fn metrics_ignore_order(mut v in labels(), seed in any::<u64>()) {
            let (p, l) = to_labels(&v);
            let before = confusion(&p, &l).unwrap();
            use rand::{seq::SliceRandom, SeedableRng};
            v.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let (p, l) = to_labels(&v);
            prop_assert_eq!(before, confusion(&p, &l).unwrap());
        }
    }
}
