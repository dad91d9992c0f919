//! Clip-level verdicts from per-frame embeddings.
//!
//! The clip score is the mean cosine distance `1 - cos(v_i, v_j)` over all
//! unordered frame pairs. Varied appearances give a high score, so a clip is
//! flagged as an attack when its score falls below the calibrated threshold.

use serde::{Deserialize, Serialize};

use crate::catalog::Label;
use crate::error::{Error, Result};
use crate::metrics::{Confusion, Verdict};

/// Frames accumulated before the cumulative strategy may accept a clip.
pub const DEFAULT_MIN_BUFFER: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSequence {
    pub clip_id: String,
    pub vectors: Vec<Vec<f32>>,
}

impl EmbeddingSequence {
    pub fn new(clip_id: impl Into<String>, vectors: Vec<Vec<f32>>) -> Self {
        Self {
            clip_id: clip_id.into(),
            vectors,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Whole,
    Cumulative,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Whole => "whole",
            Strategy::Cumulative => "cumulative",
        }
    }
}

/// Which side of the threshold is the attack side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    /// `score < threshold` means attack.
    BelowIsAttack,
    /// `score >= threshold` means attack.
    AtOrAboveIsAttack,
}

impl Polarity {
    pub fn verdict(self, score: f64, threshold: f64) -> Verdict {
        let attack = match self {
            Polarity::BelowIsAttack => score < threshold,
            Polarity::AtOrAboveIsAttack => score >= threshold,
        };
        if attack {
            Verdict::Attack
        } else {
            Verdict::Original
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub threshold: f64,
    pub validation_fscore: f64,
    pub polarity: Polarity,
    pub strategy: Strategy,
    /// Minimum buffer used for cumulative scores.
    pub min_buffer: usize,
}

impl CalibrationResult {
    pub fn verdict(&self, score: f64) -> Verdict {
        self.polarity.verdict(score, self.threshold)
    }
}

struct Normalized {
    vectors: Vec<Vec<f64>>,
    norms: Vec<f64>,
}

fn prepare(clip_id: &str, vectors: &[Vec<f32>]) -> Result<Normalized> {
    let dim = vectors.first().map_or(0, |v| v.len());
    let mut out = Normalized {
        vectors: Vec::with_capacity(vectors.len()),
        norms: Vec::with_capacity(vectors.len()),
    };
    for v in vectors {
        if v.len() != dim {
            return Err(Error::Shape(format!("clip {clip_id}: embeddings differ in length")));
        }
        let v: Vec<f64> = v.iter().map(|&x| x as f64).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::DegenerateEmbedding(clip_id.to_string()));
        }
        out.vectors.push(v);
        out.norms.push(norm);
    }
    Ok(out)
}

#[inline]
fn cosine_distance(n: &Normalized, i: usize, j: usize) -> f64 {
    let dot: f64 = n.vectors[i].iter().zip(&n.vectors[j]).map(|(a, b)| a * b).sum();
    1.0 - dot / (n.norms[i] * n.norms[j])
}

/// Mean pairwise cosine distance, in `[0, 2]`. A single frame scores 0.
pub fn video_score(seq: &EmbeddingSequence) -> Result<f64> {
    if seq.vectors.is_empty() {
        return Err(Error::Empty("embedding sequence"));
    }
    let n = prepare(&seq.clip_id, &seq.vectors)?;
    let len = n.vectors.len();
    if len < 2 {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for i in 0..len {
        for j in i + 1..len {
            acc += cosine_distance(&n, i, j);
        }
    }
    Ok(acc / (len * (len - 1) / 2) as f64)
}

/// Mean pairwise distance of every prefix `0..=k`, for `k` in `0..len`.
pub fn prefix_scores(seq: &EmbeddingSequence) -> Result<Vec<f64>> {
    let n = prepare(&seq.clip_id, &seq.vectors)?;
    let mut out = Vec::with_capacity(n.vectors.len());
    let mut acc = 0.0;
    for j in 0..n.vectors.len() {
        for i in 0..j {
            acc += cosine_distance(&n, i, j);
        }
        let pairs = j * (j + 1) / 2;
        out.push(if pairs == 0 { 0.0 } else { acc / pairs as f64 });
    }
    Ok(out)
}

/// Frame indices at which the cumulative strategy evaluates its metric.
fn evaluation_points(len: usize, min_buffer: usize) -> impl Iterator<Item = usize> {
    let first = if len < min_buffer.max(1) { len.saturating_sub(1) } else { min_buffer.max(1) - 1 };
    first..len
}

/// Running-metric score of the cumulative strategy: the best prefix score
/// over all evaluation points. The clip is accepted iff this reaches the
/// threshold.
pub fn cumulative_score(seq: &EmbeddingSequence, min_buffer: usize) -> Result<f64> {
    let prefix = prefix_scores(seq)?;
    if prefix.is_empty() {
        return Err(Error::Empty("embedding sequence"));
    }
    Ok(evaluation_points(prefix.len(), min_buffer)
        .map(|k| prefix[k])
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Threshold sweep maximizing the F-score (attack = positive class).
///
/// Candidates are midpoints between consecutive distinct scores plus two
/// sentinels beyond the extremes; ties go to the smallest threshold.
pub fn calibrate_threshold(val: &[(f64, Label)], strategy: Strategy) -> Result<CalibrationResult> {
    let (threshold, validation_fscore) = sweep(val, Polarity::BelowIsAttack)?;
    Ok(CalibrationResult {
        threshold,
        validation_fscore,
        polarity: Polarity::BelowIsAttack,
        strategy,
        min_buffer: DEFAULT_MIN_BUFFER,
    })
}

pub(crate) fn sweep(val: &[(f64, Label)], polarity: Polarity) -> Result<(f64, f64)> {
    let has = |l: Label| val.iter().any(|(_, x)| *x == l);
    if !has(Label::Attack) || !has(Label::Original) {
        return Err(Error::SingleClass("calibration needs both labels"));
    }
    if val.iter().any(|(s, _)| !s.is_finite()) {
        return Err(Error::Config("non-finite validation score".into()));
    }
    let mut distinct: Vec<f64> = val.iter().map(|(s, _)| *s).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut candidates = Vec::with_capacity(distinct.len() + 1);
    candidates.push(f64::MIN);
    candidates.extend(distinct.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
    candidates.push(f64::MAX);

    let labels: Vec<Label> = val.iter().map(|(_, l)| *l).collect();
    let mut best = (f64::MIN, -1.0);
    for &tau in &candidates {
        let verdicts: Vec<Verdict> = val.iter().map(|(s, _)| polarity.verdict(*s, tau)).collect();
        let f = Confusion::from_pairs(&verdicts, &labels).fscore().fscore;
        if f > best.1 {
            best = (tau, f);
        }
    }
    Ok(best)
}

pub fn decide_whole(seq: &EmbeddingSequence, cal: &CalibrationResult) -> Result<Verdict> {
    Ok(cal.verdict(video_score(seq)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CumulativeDecision {
    pub verdict: Verdict,
    pub stop_index: usize,
    /// Metric value at `stop_index`.
    pub score: f64,
}

/// Streaming decision: accept as original the first time the prefix score
/// reaches the threshold at or after frame `min_buffer - 1`.
pub fn decide_cumulative<I>(stream: I, cal: &CalibrationResult, min_buffer: usize) -> Result<CumulativeDecision>
where
    I: IntoIterator<Item = Vec<f32>>,
{
    let mut seen: Vec<Vec<f64>> = Vec::new();
    let mut norms: Vec<f64> = Vec::new();
    let mut acc = 0.0;
    let mut last_score = 0.0;
    let mut iter = stream.into_iter().peekable();
    let mut index = 0usize;
    while let Some(v) = iter.next() {
        let v: Vec<f64> = v.iter().map(|&x| x as f64).collect();
        if let Some(first) = seen.first() {
            if first.len() != v.len() {
                return Err(Error::Shape("embeddings differ in length".into()));
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::DegenerateEmbedding(format!("frame {index}")));
        }
        for (u, nu) in seen.iter().zip(&norms) {
            let dot: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
            acc += 1.0 - dot / (nu * norm);
        }
        seen.push(v);
        norms.push(norm);
        let pairs = index * (index + 1) / 2;
        last_score = if pairs == 0 { 0.0 } else { acc / pairs as f64 };
        let is_last = iter.peek().is_none();
        if (index + 1 >= min_buffer || is_last) && cal.verdict(last_score) == Verdict::Original {
            return Ok(CumulativeDecision {
                verdict: Verdict::Original,
                stop_index: index,
                score: last_score,
            });
        }
        index += 1;
    }
    if seen.is_empty() {
        return Err(Error::Empty("embedding stream"));
    }
    Ok(CumulativeDecision {
        verdict: Verdict::Attack,
        stop_index: seen.len() - 1,
        score: last_score,
    })
}

/// Mean per-frame attack probability; attack iff the mean reaches `tau`.
pub fn classifier_decide(frame_probs: &[f64], tau: f64) -> Result<Verdict> {
    Ok(Polarity::AtOrAboveIsAttack.verdict(mean_probability(frame_probs)?, tau))
}

pub fn mean_probability(frame_probs: &[f64]) -> Result<f64> {
    if frame_probs.is_empty() {
        return Err(Error::Empty("frame probabilities"));
    }
    if frame_probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::Config("frame probability outside [0, 1]".into()));
    }
    Ok(frame_probs.iter().sum::<f64>() / frame_probs.len() as f64)
}

/// Calibrates the classifier-ablation threshold on mean clip probabilities.
pub fn calibrate_classifier(val: &[(f64, Label)]) -> Result<CalibrationResult> {
    let (threshold, validation_fscore) = sweep(val, Polarity::AtOrAboveIsAttack)?;
    Ok(CalibrationResult {
        threshold,
        validation_fscore,
        polarity: Polarity::AtOrAboveIsAttack,
        strategy: Strategy::Whole,
        min_buffer: DEFAULT_MIN_BUFFER,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(i: usize, dim: usize) -> Vec<f32> {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        v
    }

    fn cal(threshold: f64) -> CalibrationResult {
        CalibrationResult {
            threshold,
            validation_fscore: 1.0,
            polarity: Polarity::BelowIsAttack,
            strategy: Strategy::Cumulative,
            min_buffer: DEFAULT_MIN_BUFFER,
        }
    }

    #[test]
    fn score_examples() {
        let same = EmbeddingSequence::new("a", vec![vec![1.0, 2.0]; 4]);
        assert!(video_score(&same).unwrap().abs() < 1e-12);
        let ortho = EmbeddingSequence::new("b", vec![e(0, 2), e(1, 2)]);
        assert_eq!(video_score(&ortho).unwrap(), 1.0);
        let three = EmbeddingSequence::new("c", vec![e(0, 2), e(0, 2), e(1, 2)]);
        assert!((video_score(&three).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let single = EmbeddingSequence::new("d", vec![e(0, 2)]);
        assert_eq!(video_score(&single).unwrap(), 0.0);
        let zero = EmbeddingSequence::new("z", vec![e(0, 2), vec![0.0, 0.0]]);
        assert!(matches!(video_score(&zero), Err(Error::DegenerateEmbedding(_))));
    }

    #[test]
    fn separable_calibration_picks_adjacent_midpoint() {
        let val = [
            (0.01, Label::Attack),
            (0.02, Label::Attack),
            (0.5, Label::Original),
            (0.6, Label::Original),
        ];
        let c = calibrate_threshold(&val, Strategy::Whole).unwrap();
        assert_eq!(c.validation_fscore, 1.0);
        assert!((c.threshold - 0.26).abs() < 1e-12);
    }

    #[test]
    fn constant_scores_fall_back_to_all_attack() {
        let val = [(0.3, Label::Attack), (0.3, Label::Original)];
        let c = calibrate_threshold(&val, Strategy::Whole).unwrap();
        assert!((c.validation_fscore - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(c.verdict(0.3), Verdict::Attack);
        assert!(calibrate_threshold(&[(0.1, Label::Attack)], Strategy::Whole).is_err());
    }

    #[test]
    fn whole_boundary_is_original() {
        let seq = EmbeddingSequence::new("b", vec![e(0, 2), e(1, 2)]);
        assert_eq!(decide_whole(&seq, &cal(1.0)).unwrap(), Verdict::Original);
        let flat = EmbeddingSequence::new("f", vec![e(0, 2); 3]);
        assert_eq!(decide_whole(&flat, &cal(0.01)).unwrap(), Verdict::Attack);
    }

    #[test]
    fn cumulative_alternating_accepts_at_index_four() {
        let stream: Vec<Vec<f32>> = (0..10).map(|i| e(i % 2, 2)).collect();
        let d = decide_cumulative(stream, &cal(0.3), 5).unwrap();
        assert_eq!(d.verdict, Verdict::Original);
        assert_eq!(d.stop_index, 4);
        assert!((d.score - 0.6).abs() < 1e-12);
    }

    #[test]
    fn cumulative_constant_is_attack_at_end() {
        let stream = vec![vec![0.3f32, 0.4]; 7];
        let d = decide_cumulative(stream, &cal(1e-9), 5).unwrap();
        assert_eq!(d.verdict, Verdict::Attack);
        assert_eq!(d.stop_index, 6);
    }

    #[test]
    fn short_clips_are_decided_at_the_end() {
        let stream = vec![e(0, 2), e(1, 2), e(0, 2)];
        let d = decide_cumulative(stream, &cal(0.3), 5).unwrap();
        assert_eq!((d.verdict, d.stop_index), (Verdict::Original, 2));
    }

    #[test]
    fn cumulative_score_agrees_with_streaming_decision() {
        let seq = EmbeddingSequence::new("s", (0..9).map(|i| e(i % 3 / 2, 2)).collect());
        let score = cumulative_score(&seq, 5).unwrap();
        for tau in [0.1, 0.3, score, score + 1e-9, 0.9] {
            let c = cal(tau);
            let d = decide_cumulative(seq.vectors.clone(), &c, 5).unwrap();
            assert_eq!(d.verdict, c.verdict(score), "tau {tau}");
        }
    }

    #[test]
    fn classifier_examples() {
        assert_eq!(classifier_decide(&[1.0, 1.0], 1.0).unwrap(), Verdict::Attack);
        assert_eq!(classifier_decide(&[0.2, 0.4], 0.3).unwrap(), Verdict::Attack);
        assert_eq!(classifier_decide(&[0.0, 0.0], 0.1).unwrap(), Verdict::Original);
        assert!(classifier_decide(&[], 0.5).is_err());
    }
}
