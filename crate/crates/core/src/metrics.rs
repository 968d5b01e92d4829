//! nMSD, average precision and evaluation reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annotations::AnnotationSet;
use crate::error::{Error, Result};
use crate::fusion::{normalize_and_fuse, FusionWeights, ScoreTimeline};
use crate::io;
use crate::segment::{clip_scores, rank_descending, select_at_recall, ClipScores, DEFAULT_CLIP_LEN};
use crate::stream::{PerStream, StreamId};

pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_POSITIVE_OVERLAP: f64 = 0.5;

/// `(|G*| - alpha |G_gt|) / (|V| - alpha |G_gt|)`; 0 is best, 1 means the
/// whole video had to be selected.
pub fn nmsd(len_gstar: f64, len_ggt: f64, len_v: f64, alpha: f64) -> Result<f64> {
    if len_gstar < 0.0 || len_ggt < 0.0 || len_v < 0.0 {
        return Err(Error::InvalidSelection("segment lengths must be non-negative".into()));
    }
    let bound = alpha * len_ggt;
    if len_v <= bound {
        return Err(Error::DegenerateNmsd { len_v, bound });
    }
    Ok((len_gstar - bound) / (len_v - bound))
}

/// Mean over positives of precision at the positive's rank. Items are ranked
/// by descending score, earlier index first on ties.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            actual: labels.len(),
        });
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Err(Error::NoPositives);
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, i) in rank_descending(scores).into_iter().enumerate() {
        if labels[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / positives as f64)
}

/// A clip is positive when at least `threshold` of its length is ground truth.
pub fn clip_labels(clips: &ClipScores, annotations: &AnnotationSet, threshold: f64) -> Vec<bool> {
    clips
        .clips
        .iter()
        .map(|c| annotations.overlap_with(c.start_sec, c.end_sec) >= threshold * c.len() - 1e-9)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub alpha: f64,
    pub clip_len: f64,
    pub positive_overlap: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            alpha: DEFAULT_ALPHA,
            clip_len: DEFAULT_CLIP_LEN,
            positive_overlap: DEFAULT_POSITIVE_OVERLAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoEval {
    pub video_id: String,
    pub alpha: f64,
    pub len_gstar_sec: f64,
    pub len_ggt_sec: f64,
    pub len_v_sec: f64,
    pub nmsd: f64,
    pub ap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// Stream combination, e.g. `t+s+a`.
    pub label: String,
    pub config: EvalConfig,
    pub videos: Vec<VideoEval>,
    pub mean_nmsd: f64,
    pub map: f64,
}

pub fn evaluate_video(timeline: &ScoreTimeline, annotations: &AnnotationSet, config: &EvalConfig) -> Result<VideoEval> {
    if annotations.is_empty() {
        return Err(Error::InvalidSelection(format!(
            "{}: no ground-truth segments, nMSD is undefined",
            timeline.video_id
        )));
    }
    let clips = clip_scores(timeline, config.clip_len)?;
    let labels = clip_labels(&clips, annotations, config.positive_overlap);
    let ap = average_precision(&clips.scores(), &labels)?;
    let selection = select_at_recall(&clips, annotations, config.alpha)?;
    let len_v = timeline.duration_sec;
    let len_ggt = annotations.total_len();
    Ok(VideoEval {
        video_id: timeline.video_id.clone(),
        alpha: config.alpha,
        len_gstar_sec: selection.total_len_sec,
        len_ggt_sec: len_ggt,
        len_v_sec: len_v,
        nmsd: nmsd(selection.total_len_sec, len_ggt, len_v, config.alpha)?,
        ap,
    })
}

/// Evaluates every timeline against its annotations. Videos are reported in
/// id order; aggregates are unweighted means.
pub fn evaluate(
    label: &str,
    timelines: &[ScoreTimeline],
    annotations: &BTreeMap<String, AnnotationSet>,
    config: &EvalConfig,
) -> Result<EvaluationReport> {
    if timelines.is_empty() {
        return Err(Error::InvalidConfig("no timelines to evaluate".into()));
    }
    let mut sorted: Vec<&ScoreTimeline> = timelines.iter().collect();
    sorted.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    let videos = sorted
        .into_iter()
        .map(|t| {
            let ann = annotations.get(&t.video_id).ok_or_else(|| Error::MissingInput {
                what: "annotations",
                video: t.video_id.clone(),
            })?;
            evaluate_video(t, ann, config)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = videos.len() as f64;
    Ok(EvaluationReport {
        label: label.to_string(),
        config: *config,
        mean_nmsd: videos.iter().map(|v| v.nmsd).sum::<f64>() / n,
        map: videos.iter().map(|v| v.ap).sum::<f64>() / n,
        videos,
    })
}

impl EvaluationReport {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "# {} alpha={} clip_len={} positive_overlap={}\n",
            self.label, self.config.alpha, self.config.clip_len, self.config.positive_overlap
        );
        out.push_str("video_id\t|G*|\t|G_gt|\t|V|\tnMSD\tAP\n");
        for v in &self.videos {
            let _ = writeln!(
                out,
                "{}\t{:.1}\t{:.1}\t{:.1}\t{:.2}%\t{:.2}%",
                v.video_id,
                v.len_gstar_sec,
                v.len_ggt_sec,
                v.len_v_sec,
                100.0 * v.nmsd,
                100.0 * v.ap
            );
        }
        let _ = writeln!(out, "mean\t\t\t\t{:.2}%\t{:.2}%", 100.0 * self.mean_nmsd, 100.0 * self.map);
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// The five stream combinations of an ablation, in table order.
pub const ABLATION_ROWS: [&[StreamId]; 5] = [
    &[StreamId::Temporal],
    &[StreamId::Spatial],
    &[StreamId::Audio],
    &[StreamId::Temporal, StreamId::Spatial],
    &[StreamId::Temporal, StreamId::Spatial, StreamId::Audio],
];

pub fn combination_label(streams: &[StreamId]) -> String {
    streams
        .iter()
        .map(|s| &s.as_str()[..1])
        .collect::<Vec<_>>()
        .join("+")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub weights: FusionWeights,
    pub rows: Vec<EvaluationReport>,
}

/// Re-fuses raw per-stream timelines with weights restricted to each stream
/// combination and evaluates every combination.
pub fn evaluate_ablation(
    stream_timelines: &[PerStream<ScoreTimeline>],
    annotations: &BTreeMap<String, AnnotationSet>,
    weights: &FusionWeights,
    config: &EvalConfig,
) -> Result<AblationReport> {
    let rows = ABLATION_ROWS
        .iter()
        .map(|streams| {
            let w = weights.restricted_to(streams)?;
            let fused = stream_timelines
                .iter()
                .map(|p| normalize_and_fuse(&p.temporal, &p.spatial, &p.audio, &w))
                .collect::<Result<Vec<_>>>()?;
            evaluate(&combination_label(streams), &fused, annotations, config)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationReport {
        weights: *weights,
        rows,
    })
}

impl AblationReport {
    pub fn row(&self, label: &str) -> Option<&EvaluationReport> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "# weights temporal={} spatial={} audio={}\ntemporal\tspatial\taudio\tnMSD\tmAP\n",
            self.weights.temporal, self.weights.spatial, self.weights.audio
        );
        for row in &self.rows {
            let mark = |c: &str| if row.label.contains(c) { "x" } else { "" };
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{:.2}%\t{:.2}%",
                mark("t"),
                mark("s"),
                mark("a"),
                100.0 * row.mean_nmsd,
                100.0 * row.map
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn save_report(text: &str, json: &str, dir: &Path, stem: &str) -> Result<()> {
    io::write_atomic(&dir.join(format!("{stem}.txt")), text.as_bytes())?;
    io::write_atomic(&dir.join(format!("{stem}.json")), json.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::Origin;
    use proptest::prelude::*;

    /// Precision/recall curve oracle: walk every threshold and sum precision
    /// times the recall increment. Ties are ordered by index, matching the
    /// ranking contract.
    fn ap_oracle(scores: &[f64], labels: &[bool]) -> f64 {
        let n = scores.len();
        let mut idx: Vec<usize> = (0..n).collect();
        // insertion sort on (score desc, index asc)
        for i in 1..n {
            let mut j = i;
            while j > 0 && scores[idx[j - 1]] < scores[idx[j]] {
                idx.swap(j - 1, j);
                j -= 1;
            }
        }
        let total = labels.iter().filter(|&&l| l).count() as f64;
        let mut ap = 0.0;
        let mut prev_recall = 0.0;
        for k in 1..=n {
            let tp = idx[..k].iter().filter(|&&i| labels[i]).count() as f64;
            let precision = tp / k as f64;
            let recall = tp / total;
            ap += precision * (recall - prev_recall);
            prev_recall = recall;
        }
        ap
    }

    #[test]
    fn nmsd_cases() {
        assert_eq!(nmsd(50.0, 100.0, 900.0, 0.5).unwrap(), 0.0);
        assert_eq!(nmsd(900.0, 100.0, 900.0, 0.5).unwrap(), 1.0);
        assert!((nmsd(150.0, 100.0, 900.0, 0.5).unwrap() - 100.0 / 850.0).abs() < 1e-12);
        assert!(matches!(nmsd(10.0, 100.0, 50.0, 0.5), Err(Error::DegenerateNmsd { .. })));
    }

    #[test]
    fn ap_cases() {
        assert_eq!(average_precision(&[0.9, 0.8, 0.1], &[true, true, false]).unwrap(), 1.0);
        let ap = average_precision(&[0.9, 0.8, 0.7, 0.6], &[true, false, true, false]).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        let n = 7;
        let mut labels = vec![false; n];
        labels[n - 1] = true;
        let scores: Vec<f64> = (0..n).map(|i| (n - i) as f64).collect();
        assert!((average_precision(&scores, &labels).unwrap() - 1.0 / n as f64).abs() < 1e-15);
        assert!(matches!(average_precision(&[1.0], &[false]), Err(Error::NoPositives)));
    }

    #[test]
    fn ties_rank_earlier_first() {
        // constant scores: ranking is index order
        let labels = [false, true, false, true];
        let ap = average_precision(&[0.5; 4], &labels).unwrap();
        assert!((ap - (0.5 + 0.5) / 2.0).abs() < 1e-15);
        assert_eq!(ap, ap_oracle(&[0.5; 4], &labels));
    }

    fn oracle_timeline(gt: &AnnotationSet, n: usize, inverted: bool) -> ScoreTimeline {
        let scores = (0..n)
            .map(|s| {
                let hit = gt.overlap_with(s as f64, s as f64 + 1.0) > 0.0;
                if hit != inverted {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        ScoreTimeline::new("v", Origin::Fused, n as f64, scores).unwrap()
    }

    #[test]
    fn oracle_and_inverted_oracle() {
        let gt = AnnotationSet::new(vec![(100.0, 112.0), (300.0, 307.0), (500.0, 515.0)], 900.0).unwrap();
        let anns = BTreeMap::from([("v".to_string(), gt.clone())]);
        let cfg = EvalConfig::default();
        let good = evaluate("oracle", &[oracle_timeline(&gt, 900, false)], &anns, &cfg).unwrap();
        let slack = 5.0 / (900.0 - 0.5 * gt.total_len());
        assert!(good.mean_nmsd <= slack, "{}", good.mean_nmsd);
        assert!(good.map >= 0.99);
        let bad = evaluate("inverse", &[oracle_timeline(&gt, 900, true)], &anns, &cfg).unwrap();
        assert!(bad.mean_nmsd > 0.9);
        let clips = clip_scores(&oracle_timeline(&gt, 900, true), 5.0).unwrap();
        let labels = clip_labels(&clips, &gt, 0.5);
        let prevalence = labels.iter().filter(|&&l| l).count() as f64 / labels.len() as f64;
        assert!(bad.map < 2.0 * prevalence);
    }

    #[test]
    fn constant_scores_follow_tie_rule() {
        let gt = AnnotationSet::new(vec![(20.0, 30.0)], 60.0).unwrap();
        let t = ScoreTimeline::new("v", Origin::Fused, 60.0, vec![0.3; 60]).unwrap();
        let r = evaluate_video(&t, &gt, &EvalConfig::default()).unwrap();
        let clips = clip_scores(&t, 5.0).unwrap();
        let labels = clip_labels(&clips, &gt, 0.5);
        assert_eq!(r.ap, ap_oracle(&clips.scores(), &labels));
        // clips are taken in order until [20, 30) is half covered: [0, 25)
        assert_eq!(r.len_gstar_sec, 25.0);
    }

    #[test]
    fn empty_ground_truth_rejected() {
        let t = ScoreTimeline::new("v", Origin::Fused, 10.0, vec![0.0; 10]).unwrap();
        let empty = AnnotationSet::new(vec![], 10.0).unwrap();
        assert!(evaluate_video(&t, &empty, &EvalConfig::default()).is_err());
        let anns = BTreeMap::new();
        assert!(matches!(
            evaluate("x", &[t], &anns, &EvalConfig::default()),
            Err(Error::MissingInput { .. })
        ));
    }

    #[test]
    fn labels() {
        assert_eq!(combination_label(&[StreamId::Temporal, StreamId::Spatial]), "t+s");
        assert_eq!(combination_label(ABLATION_ROWS[4]), "t+s+a");
    }

    proptest! {
        #[test]
        fn ap_matches_oracle(v in prop::collection::vec((0u8..6, any::<bool>()), 1..20)) {
            prop_assume!(v.iter().any(|x| x.1));
            let scores: Vec<f64> = v.iter().map(|x| x.0 as f64).collect();
            let labels: Vec<bool> = v.iter().map(|x| x.1).collect();
            prop_assert!((average_precision(&scores, &labels).unwrap() - ap_oracle(&scores, &labels)).abs() < 1e-12);
        }

        #[test]
        fn ap_invariant_under_increasing_maps(v in prop::collection::vec((-5.0f64..5.0, any::<bool>()), 1..20)) {
            prop_assume!(v.iter().any(|x| x.1));
            let scores: Vec<f64> = v.iter().map(|x| x.0).collect();
            let labels: Vec<bool> = v.iter().map(|x| x.1).collect();
            let mapped: Vec<f64> = scores.iter().map(|s| s.exp() * 3.0 + 1.0).collect();
            prop_assert_eq!(average_precision(&scores, &labels).unwrap(), average_precision(&mapped, &labels).unwrap());
        }

        #[test]
        fn nmsd_strictly_increasing(a in 0.0f64..400.0, b in 0.0f64..400.0, gt in 1.0f64..200.0, alpha in 0.01f64..1.0) {
            prop_assume!(a < b);
            prop_assert!(nmsd(a, gt, 900.0, alpha).unwrap() < nmsd(b, gt, 900.0, alpha).unwrap());
        }
    }
}
