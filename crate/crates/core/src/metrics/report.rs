use std::fmt::Write as _;
use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl AddAssign for Counts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

impl Counts {
    /// Number of ground-truth paths that landed in this cell.
    pub fn gt_paths(&self) -> u64 {
        self.tp + self.fp + self.fn_
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Association,
    Reachability,
}

impl MetricKind {
    fn prefix(self) -> &'static str {
        match self {
            MetricKind::Association => "A",
            MetricKind::Reachability => "R",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSummary {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: MetricKind,
    pub thresholds: Vec<f64>,
    pub length_buckets: Vec<f64>,
    /// `counts[threshold][bucket]`.
    pub counts: Vec<Vec<Counts>>,
    pub per_threshold: Vec<ThresholdSummary>,
    pub aggregate: Aggregate,
}

impl MetricReport {
    /// Per threshold, P and R are averaged over the buckets that hold at least
    /// one gt path. The aggregate averages those over thresholds.
    pub fn from_counts(
        metric: MetricKind,
        thresholds: Vec<f64>,
        length_buckets: Vec<f64>,
        counts: Vec<Vec<Counts>>,
    ) -> Self {
        let per_threshold: Vec<ThresholdSummary> = thresholds
            .iter()
            .zip(&counts)
            .map(|(&threshold, row)| {
                let filled: Vec<&Counts> = row.iter().filter(|c| c.gt_paths() > 0).collect();
                let n = filled.len() as f64;
                let (precision, recall) = if filled.is_empty() {
                    (0.0, 0.0)
                } else {
                    (
                        filled.iter().map(|c| c.precision()).sum::<f64>() / n,
                        filled.iter().map(|c| c.recall()).sum::<f64>() / n,
                    )
                };
                ThresholdSummary { threshold, precision, recall, f1: f1(precision, recall) }
            })
            .collect();
        let n = per_threshold.len().max(1) as f64;
        let precision = per_threshold.iter().map(|s| s.precision).sum::<f64>() / n;
        let recall = per_threshold.iter().map(|s| s.recall).sum::<f64>() / n;
        Self {
            metric,
            thresholds,
            length_buckets,
            counts,
            per_threshold,
            aggregate: Aggregate { precision, recall, f1: f1(precision, recall) },
        }
    }

    /// Summary at the threshold closest to `th`, if within 1e-9.
    pub fn at(&self, th: f64) -> Option<&ThresholdSummary> {
        self.per_threshold.iter().find(|s| (s.threshold - th).abs() < 1e-9)
    }

    /// Label of bucket `b`, e.g. `[5,10)` or `[70,inf)`.
    pub fn bucket_label(&self, b: usize) -> String {
        let lo = self.length_buckets[b];
        match self.length_buckets.get(b + 1) {
            Some(hi) => format!("[{lo},{hi})"),
            None => format!("[{lo},inf)"),
        }
    }

    /// Aligned text table, values in percent.
    pub fn table(&self) -> String {
        let p = self.metric.prefix();
        let mut head: Vec<String> = Vec::new();
        let mut vals: Vec<String> = Vec::new();
        let pct = |v: f64| format!("{:.1}", 100.0 * v);
        match self.metric {
            MetricKind::Association => {
                for th in [0.5, 0.75, 0.95] {
                    head.push(format!("{p}-F1^{}", (th * 100.0f64).round()));
                    vals.push(self.at(th).map_or("-".into(), |s| pct(s.f1)));
                }
                let range = match (self.thresholds.first(), self.thresholds.last()) {
                    (Some(a), Some(b)) => format!("{}:{}", (a * 100.0).round(), (b * 100.0).round()),
                    _ => String::new(),
                };
                for (name, v) in [
                    ("P", self.aggregate.precision),
                    ("R", self.aggregate.recall),
                    ("F1", self.aggregate.f1),
                ] {
                    head.push(format!("{p}-{name}^{range}"));
                    vals.push(pct(v));
                }
            }
            MetricKind::Reachability => {
                for (name, v) in [
                    ("P", self.aggregate.precision),
                    ("R", self.aggregate.recall),
                    ("F1", self.aggregate.f1),
                ] {
                    head.push(format!("{p}-{name}"));
                    vals.push(pct(v));
                }
            }
        }
        let widths: Vec<usize> = head.iter().zip(&vals).map(|(h, v)| h.len().max(v.len())).collect();
        let mut out = String::new();
        for (row_i, row) in [&head, &vals].into_iter().enumerate() {
            let cells: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
            let _ = writeln!(out, "{}", cells.join("  "));
            if row_i == 0 {
                let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
                let _ = writeln!(out, "{}", rule.join("  "));
            }
        }
        out
    }
}
