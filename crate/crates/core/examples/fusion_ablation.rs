//! Trains compact heads for all three streams on a dataset where each stream
//! carries a different amount of signal, then reports every stream
//! combination the way a fusion ablation table does.
//!
//! cargo run --release --example fusion_ablation -- [updates] [seed] [n_edited]
//!
//! The acceptance run uses 10000 updates; 2000 takes about a minute.

use std::collections::BTreeMap;

use hlrank::fusion::score_timeline;
use hlrank::metrics::{evaluate_ablation, EvalConfig};
use hlrank::stream::PerStream;
use hlrank::synth::{generate, SynthSpec};
use hlrank::trainer::{train_stream, TrainConfig};
use hlrank::{FusionWeights, Role, StreamId};

fn main() -> hlrank::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let updates = args.get(1).map_or(2000, |s| s.parse().expect("updates"));
    let seed = args.get(2).map_or(0, |s| s.parse().expect("seed"));
    let n_edited = args.get(3).map_or(450, |s| s.parse().expect("n_edited"));

    let spec = SynthSpec {
        separation: PerStream::new(1.2, 0.8, 0.5),
        n_edited,
        seed,
        ..SynthSpec::default()
    };
    let mut data = generate(&spec)?;
    let tests: Vec<_> = data.manifest.with_role(Role::Test).cloned().collect();

    let mut timelines: BTreeMap<StreamId, Vec<_>> = BTreeMap::new();
    for stream in StreamId::ALL {
        let config = TrainConfig {
            total_updates: updates,
            seed: hlrank::seed::derive(seed, stream.as_str()),
            widths: Some(vec![stream.input_dim(), 64, 1]),
            ..TrainConfig::for_stream(stream)
        };
        let corpus = data.take_corpus(stream)?;
        let outcome = train_stream(&corpus, &config)?;
        println!(
            "{stream}: holdout pair accuracy {:.4}",
            outcome.log.final_accuracy().unwrap_or(f64::NAN)
        );
        let scored = tests
            .iter()
            .map(|v| score_timeline(&outcome.net, data.track(&v.id, stream).expect("track"), &v.id, v.duration_sec))
            .collect::<hlrank::Result<Vec<_>>>()?;
        timelines.insert(stream, scored);
    }

    let per_video: Vec<PerStream<_>> = (0..tests.len())
        .map(|i| {
            PerStream::new(
                timelines[&StreamId::Temporal][i].clone(),
                timelines[&StreamId::Spatial][i].clone(),
                timelines[&StreamId::Audio][i].clone(),
            )
        })
        .collect();
    let report = evaluate_ablation(&per_video, &data.annotations, &FusionWeights::default(), &EvalConfig::default())?;
    print!("{}", report.to_text());
    Ok(())
}
