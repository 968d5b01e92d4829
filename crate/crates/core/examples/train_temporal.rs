//! Trains the stock temporal head on the default synthetic dataset and
//! evaluates it alone on the test videos.
//!
//! cargo run --release --example train_temporal -- [updates] [seed]

use std::collections::BTreeMap;
use std::time::Instant;

use hlrank::fusion::{normalize, score_timeline};
use hlrank::metrics::{evaluate, EvalConfig};
use hlrank::synth::{generate, SynthSpec};
use hlrank::trainer::{train_stream, TrainConfig};
use hlrank::{Role, StreamId};

fn main() -> hlrank::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let updates = args.get(1).map_or(10_000, |s| s.parse().expect("updates"));
    let seed = args.get(2).map_or(0, |s| s.parse().expect("seed"));

    let t0 = Instant::now();
    let spec = SynthSpec {
        streams: vec![StreamId::Temporal],
        seed,
        ..SynthSpec::default()
    };
    let data = generate(&spec)?;
    println!("generated in {:.1?}", t0.elapsed());

    let config = TrainConfig {
        total_updates: updates,
        seed,
        ..TrainConfig::for_stream(StreamId::Temporal)
    };
    let t1 = Instant::now();
    let outcome = train_stream(&data.corpus(StreamId::Temporal)?, &config)?;
    println!("trained {updates} updates in {:.1?}", t1.elapsed());
    for (update, acc) in &outcome.log.holdout_accuracy {
        println!("  update {update:>6}  holdout pair accuracy {acc:.4}");
    }

    let mut timelines = Vec::new();
    let mut annotations = BTreeMap::new();
    for v in data.manifest.with_role(Role::Test) {
        let track = data.track(&v.id, StreamId::Temporal).expect("track");
        timelines.push(normalize(&score_timeline(&outcome.net, track, &v.id, v.duration_sec)?));
        annotations.insert(v.id.clone(), data.annotations[&v.id].clone());
    }
    let report = evaluate("t", &timelines, &annotations, &EvalConfig::default())?;
    print!("{}", report.to_text());
    Ok(())
}
