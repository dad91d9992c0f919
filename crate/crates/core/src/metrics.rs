//! Attack-positive classification metrics and 5-run aggregation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::catalog::Label;
use crate::error::{Error, Result};

/// Binary verdict; `Attack` is the positive class (an alert).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Original,
    Attack,
}

impl Verdict {
    pub fn is_attack(self) -> bool {
        self == Verdict::Attack
    }
}

impl From<Label> for Verdict {
    fn from(l: Label) -> Self {
        match l {
            Label::Original => Verdict::Original,
            Label::Attack => Verdict::Attack,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FScore {
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
    /// Set when a zero denominator forced a value to 0.
    pub undefined: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn from_pairs(verdicts: &[Verdict], labels: &[Label]) -> Self {
        let mut c = Confusion::default();
        for (v, l) in verdicts.iter().zip(labels) {
            match (v, l) {
                (Verdict::Attack, Label::Attack) => c.tp += 1,
                (Verdict::Attack, Label::Original) => c.fp += 1,
                (Verdict::Original, Label::Original) => c.tn += 1,
                (Verdict::Original, Label::Attack) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn fscore(&self) -> FScore {
        let mut undefined = false;
        let mut ratio = |num: usize, den: usize| {
            if den == 0 {
                undefined = true;
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        let fscore = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            undefined = true;
            0.0
        };
        FScore {
            precision,
            recall,
            fscore,
            undefined,
        }
    }
}

pub fn f_score(verdicts: &[Verdict], labels: &[Label]) -> FScore {
    Confusion::from_pairs(verdicts, labels).fscore()
}

/// Fraction of clips flagged as attacks, for attack-only test sets.
pub fn attack_recall(verdicts: &[Verdict]) -> Result<f64> {
    if verdicts.is_empty() {
        return Err(Error::Empty("verdicts"));
    }
    Ok(verdicts.iter().filter(|v| v.is_attack()).count() as f64 / verdicts.len() as f64)
}

/// Probability that a random attack outranks a random original (ties count
/// one half). Higher scores must mean "more attack-like".
pub fn roc_auc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape("scores and labels differ in length".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l == Label::Attack).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass("roc_auc needs both labels"));
    }
    // Mann-Whitney U via midranks.
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] == Label::Attack {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetTag {
    HoloVanilla,
    HoloPhotoReplacement,
    Midv2020Clips,
}

impl DatasetTag {
    pub const ALL: [DatasetTag; 3] = [
        DatasetTag::HoloVanilla,
        DatasetTag::HoloPhotoReplacement,
        DatasetTag::Midv2020Clips,
    ];

    pub fn header(self) -> &'static str {
        match self {
            DatasetTag::HoloVanilla => "MIDV-Holo Vanilla F-score (%)",
            DatasetTag::HoloPhotoReplacement => "MIDV-Holo Photo repl. Recall (%)",
            DatasetTag::Midv2020Clips => "MIDV-2020 Clips Recall (%)",
        }
    }

    /// Mixed sets are scored by F-score, attack-only sets by recall.
    pub fn primary_metric(self) -> &'static str {
        match self {
            DatasetTag::HoloVanilla => "fscore",
            _ => "recall",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipOutcome {
    pub clip_id: String,
    pub verdict: Verdict,
    pub label: Label,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run_id: usize,
    pub dataset_tag: DatasetTag,
    pub clips: Vec<ClipOutcome>,
}

impl RunResult {
    /// Named metric values for this run (fractions in `[0, 1]`).
    pub fn metrics(&self) -> BTreeMap<&'static str, f64> {
        let verdicts: Vec<Verdict> = self.clips.iter().map(|c| c.verdict).collect();
        let labels: Vec<Label> = self.clips.iter().map(|c| c.label).collect();
        let f = f_score(&verdicts, &labels);
        let mut m = BTreeMap::new();
        m.insert("precision", f.precision);
        m.insert("recall", f.recall);
        m.insert("fscore", f.fscore);
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    /// Sample statistics (n - 1 denominator).
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n > 0 && values.iter().all(|&v| v == values[0]) {
            return MeanStd { mean: values[0], std: 0.0, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        MeanStd { mean, std, n }
    }

    /// Integer percentages, e.g. `90 ± 2`.
    pub fn percent(&self) -> String {
        format!("{:.0} ± {:.0}", self.mean * 100.0, self.std * 100.0)
    }
}

pub type Aggregate = BTreeMap<(DatasetTag, String), MeanStd>;

pub fn aggregate_runs(results: &[RunResult]) -> Aggregate {
    let mut values: BTreeMap<(DatasetTag, String), Vec<f64>> = BTreeMap::new();
    for r in results {
        for (name, v) in r.metrics() {
            values.entry((r.dataset_tag, name.to_string())).or_default().push(v);
        }
    }
    values.into_iter().map(|(k, v)| (k, MeanStd::of(&v))).collect()
}

/// One row of a results table: method, strategy, and a mean ± std cell per test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub strategy: String,
    pub cells: BTreeMap<DatasetTag, MeanStd>,
}

impl ReportRow {
    pub fn from_aggregate(method: &str, strategy: &str, agg: &Aggregate) -> Self {
        let cells = DatasetTag::ALL
            .iter()
            .filter_map(|t| agg.get(&(*t, t.primary_metric().to_string())).map(|m| (*t, *m)))
            .collect();
        ReportRow {
            method: method.to_string(),
            strategy: strategy.to_string(),
            cells,
        }
    }
}

/// Reference rows for constant and random predictors.
pub fn dummy_rows() -> Vec<ReportRow> {
    let row = |name: &str, vanilla: f64, attack_only: f64| ReportRow {
        method: name.to_string(),
        strategy: "dummy".to_string(),
        cells: DatasetTag::ALL
            .iter()
            .map(|&t| {
                let v = if t == DatasetTag::HoloVanilla { vanilla } else { attack_only };
                (t, MeanStd { mean: v, std: 0.0, n: 1 })
            })
            .collect(),
    };
    vec![
        row("Perfectly random", 0.5, 0.5),
        row("Always positive (attack)", 2.0 / 3.0, 1.0),
        row("Always negative (original)", 0.0, 0.0),
    ]
}

pub fn format_table(title: &str, rows: &[ReportRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{title}");
    let _ = write!(out, "| {:<12} | {:<34} |", "Decision", "Method");
    for t in DatasetTag::ALL {
        let _ = write!(out, " {:<32} |", t.header());
    }
    out.push('\n');
    for r in rows {
        let _ = write!(out, "| {:<12} | {:<34} |", r.strategy, r.method);
        for t in DatasetTag::ALL {
            let cell = r.cells.get(&t).map(|m| m.percent()).unwrap_or_else(|| "-".into());
            let _ = write!(out, " {:<32} |", cell);
        }
        out.push('\n');
    }
    out
}
