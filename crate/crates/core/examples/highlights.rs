//! Cuts a score timeline into 5 s clips, picks highlights under a length
//! budget and scores a recall-constrained selection with nMSD and AP.
//!
//! cargo run --example highlights

use hlrank::annotations::AnnotationSet;
use hlrank::metrics::{average_precision, clip_labels, evaluate_video, EvalConfig, DEFAULT_POSITIVE_OVERLAP};
use hlrank::segment::{clip_scores, select_at_recall, select_top, DEFAULT_CLIP_LEN};
use hlrank::{Origin, ScoreTimeline};

fn main() -> hlrank::Result<()> {
    let duration = 120.0;
    let truth = AnnotationSet::new(vec![(20.0, 32.0), (70.0, 78.0)], duration)?;
    // a noisy scorer: high inside the highlights, with a false alarm at 100 s
    let scores: Vec<f64> = (0..120)
        .map(|s| {
            let t = s as f64 + 0.5;
            let inside = truth.overlap_with(t - 0.5, t + 0.5) > 0.0;
            let alarm = (100.0..104.0).contains(&t);
            0.1 * ((s * 37 % 11) as f64 / 11.0) + if inside { 0.8 } else if alarm { 0.6 } else { 0.0 }
        })
        .collect();
    let timeline = ScoreTimeline::new("demo", Origin::Fused, duration, scores)?;

    let clips = clip_scores(&timeline, DEFAULT_CLIP_LEN)?;
    let top = select_top(&clips, 20.0)?;
    println!("budget 20 s -> {:?} ({} s)", top.segments, top.total_len_sec);

    let at_half = select_at_recall(&clips, &truth, 0.5)?;
    println!("recall 0.5 -> {:?} ({} s)", at_half.segments, at_half.total_len_sec);

    let labels = clip_labels(&clips, &truth, DEFAULT_POSITIVE_OVERLAP);
    println!("AP {:.4}", average_precision(&clips.scores(), &labels)?);
    for alpha in [0.25, 0.5, 1.0] {
        let e = evaluate_video(&timeline, &truth, &EvalConfig { alpha, ..EvalConfig::default() })?;
        println!("alpha {alpha}: |G*| = {} s, nMSD {:.4}", e.len_gstar_sec, e.nmsd);
    }
    Ok(())
}
