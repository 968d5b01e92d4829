//! Command-line pipeline. Each subcommand reads the files of the previous
//! stage and writes its own outputs under `--out`:
//!
//! ```text
//! synth       -> DATASET/manifest.toml, features/, annotations/
//! train       -> OUT/checkpoints/{stream}.hlck, OUT/logs/{stream}.tsv
//! score       -> OUT/timelines/{stream}/{video}.tsv
//! fuse        -> OUT/timelines/fused/{video}.tsv
//! evaluate    -> OUT/report.txt, OUT/report.json
//! highlights  -> OUT/highlights/{video}.tsv
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::checkpoint::load_checkpoint;
use crate::error::{Error, Result};
use crate::fusion::{normalize_and_fuse, score_timeline, FusionWeights, Origin, ScoreTimeline};
use crate::loss::LossSpec;
use crate::manifest::{load_manifest, DatasetManifest, Role};
use crate::metrics::{evaluate, evaluate_ablation, save_report, EvalConfig, DEFAULT_ALPHA, DEFAULT_POSITIVE_OVERLAP};
use crate::segment::{clip_scores, select_top, DEFAULT_CLIP_LEN};
use crate::stream::{PerStream, StreamId};
use crate::synth::{generate_to_dir, plant_report, SynthSpec};
use crate::trainer::{checkpoint_path, stock_configs, train_all, TrainConfig};
use crate::{io, seed};

#[derive(Debug, Parser)]
#[command(name = "hlrank", version, about = "Weakly supervised video highlight ranking")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with planted highlights.
    Synth(SynthArgs),
    /// Train one ranking head per stream.
    Train(TrainArgs),
    /// Score the test videos with trained heads.
    Score(ScoreArgs),
    /// Normalize and fuse per-stream timelines.
    Fuse(FuseArgs),
    /// Evaluate fused timelines with nMSD and mAP.
    Evaluate(EvaluateArgs),
    /// Select highlight segments under a length budget.
    Highlights(HighlightsArgs),
}

fn parse_list<T: std::str::FromStr>(s: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(|p| p.trim().parse::<T>().map_err(|e| format!("{p:?}: {e}")))
        .collect()
}

/// Comma-separated stream names, sorted and deduplicated.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamList(pub Vec<StreamId>);

fn parse_streams(s: &str) -> std::result::Result<StreamList, String> {
    let mut streams: Vec<StreamId> = parse_list(s)?;
    streams.sort();
    streams.dedup();
    Ok(StreamList(streams))
}

/// Comma-separated layer widths.
#[derive(Debug, Clone, PartialEq)]
pub struct Widths(pub Vec<usize>);

fn parse_widths(s: &str) -> std::result::Result<Widths, String> {
    parse_list(s).map(Widths)
}

fn parse_triple(s: &str) -> std::result::Result<PerStream<f64>, String> {
    match parse_list::<f64>(s)?[..] {
        [t, sp, a] => Ok(PerStream::new(t, sp, a)),
        _ => Err(format!("expected three comma-separated values, got {s:?}")),
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Dataset directory to create.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 45)]
    pub n_edited: usize,
    #[arg(long, default_value_t = 21.0)]
    pub edited_len: f64,
    #[arg(long, default_value_t = 20)]
    pub n_raw: usize,
    #[arg(long, default_value_t = 780.0)]
    pub raw_len: f64,
    #[arg(long, default_value_t = 4)]
    pub n_test: usize,
    #[arg(long, default_value_t = 900.0)]
    pub test_len: f64,
    #[arg(long, default_value_t = 0.2)]
    pub highlight_fraction: f64,
    /// Separation per stream as temporal,spatial,audio.
    #[arg(long, value_parser = parse_triple)]
    pub separation: Option<PerStream<f64>>,
    /// Noise scale per stream as temporal,spatial,audio.
    #[arg(long, value_parser = parse_triple)]
    pub noise: Option<PerStream<f64>>,
    /// Streams to emit, comma separated.
    #[arg(long, value_parser = parse_streams)]
    pub streams: Option<StreamList>,
}

impl SynthArgs {
    pub fn spec(&self) -> SynthSpec {
        let d = SynthSpec::default();
        SynthSpec {
            n_edited: self.n_edited,
            edited_len_sec: self.edited_len,
            n_raw: self.n_raw,
            raw_len_sec: self.raw_len,
            n_test: self.n_test,
            test_len_sec: self.test_len,
            highlight_fraction_raw: self.highlight_fraction,
            separation: self.separation.unwrap_or(d.separation),
            stream_noise: self.noise.unwrap_or(d.stream_noise),
            streams: self.streams.clone().map_or(d.streams, |l| l.0),
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    Huber,
    Hinge1,
    Hinge2,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Master seed; each stream derives its own.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = LossArg::Huber)]
    pub loss: LossArg,
    #[arg(long, default_value_t = 1.5)]
    pub delta: f64,
    #[arg(long)]
    pub lr_temporal: Option<f64>,
    #[arg(long)]
    pub lr_spatial: Option<f64>,
    #[arg(long)]
    pub lr_audio: Option<f64>,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 0.00005)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 10_000)]
    pub updates: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.1)]
    pub holdout_fraction: f64,
    #[arg(long, default_value_t = 0.5)]
    pub dropout: f64,
    #[arg(long, default_value_t = 1000)]
    pub eval_every: usize,
    #[arg(long, default_value_t = 2000)]
    pub holdout_pairs: usize,
    /// Layer widths overriding the stock temporal head, e.g. 512,64,1.
    #[arg(long, value_parser = parse_widths)]
    pub widths_temporal: Option<Widths>,
    #[arg(long, value_parser = parse_widths)]
    pub widths_spatial: Option<Widths>,
    #[arg(long, value_parser = parse_widths)]
    pub widths_audio: Option<Widths>,
    /// Streams to train, comma separated.
    #[arg(long, value_parser = parse_streams)]
    pub streams: Option<StreamList>,
}

impl TrainArgs {
    pub fn configs(&self) -> Vec<TrainConfig> {
        let loss = match self.loss {
            LossArg::Huber => LossSpec::Huber { delta: self.delta },
            LossArg::Hinge1 => LossSpec::Hinge { p: 1 },
            LossArg::Hinge2 => LossSpec::Hinge { p: 2 },
        };
        let streams = self.streams.clone().map_or_else(|| StreamId::ALL.to_vec(), |l| l.0);
        stock_configs(self.seed)
            .into_iter()
            .filter(|c| streams.contains(&c.stream))
            .map(|c| {
                let (lr, widths) = match c.stream {
                    StreamId::Temporal => (self.lr_temporal, &self.widths_temporal),
                    StreamId::Spatial => (self.lr_spatial, &self.widths_spatial),
                    StreamId::Audio => (self.lr_audio, &self.widths_audio),
                };
                TrainConfig {
                    loss,
                    lr: lr.unwrap_or(c.lr),
                    momentum: self.momentum,
                    weight_decay: self.weight_decay,
                    batch_size: self.batch_size,
                    total_updates: self.updates,
                    holdout_fraction: self.holdout_fraction,
                    dropout: self.dropout,
                    widths: widths.as_ref().map(|w| w.0.clone()),
                    eval_every: self.eval_every,
                    holdout_pairs: self.holdout_pairs,
                    ..c
                }
            })
            .collect()
    }
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Run directory holding checkpoints/.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = parse_streams)]
    pub streams: Option<StreamList>,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Fusion weights as temporal,spatial,audio.
    #[arg(long, default_value = "0.7,0.15,0.15")]
    pub weights: FusionWeights,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, default_value_t = DEFAULT_CLIP_LEN)]
    pub clip_len: f64,
    #[arg(long, default_value_t = DEFAULT_POSITIVE_OVERLAP)]
    pub positive_overlap: f64,
    /// Report every stream combination, re-fused from the per-stream timelines.
    #[arg(long)]
    pub ablate: bool,
    #[arg(long, default_value = "0.7,0.15,0.15")]
    pub weights: FusionWeights,
}

#[derive(Debug, Args)]
pub struct HighlightsArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Maximum total length of selected segments, in seconds.
    #[arg(long)]
    pub budget: f64,
    #[arg(long, default_value_t = DEFAULT_CLIP_LEN)]
    pub clip_len: f64,
    /// Restrict to one video.
    #[arg(long)]
    pub video: Option<String>,
}

pub fn timeline_dir(out: &Path, origin: Origin) -> PathBuf {
    out.join("timelines").join(origin.as_str())
}

fn timeline_path(out: &Path, origin: Origin, video_id: &str) -> PathBuf {
    timeline_dir(out, origin).join(format!("{video_id}.tsv"))
}

/// Loads every timeline of one origin, in video-id order.
fn load_timelines(out: &Path, origin: Origin) -> Result<Vec<ScoreTimeline>> {
    let dir = timeline_dir(out, origin);
    let entries = std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(&dir, e))?.path();
        if path.extension().is_some_and(|x| x == "tsv") {
            paths.push(path);
        }
    }
    paths.sort();
    let timelines = paths
        .iter()
        .map(|p| ScoreTimeline::load(p))
        .collect::<Result<Vec<_>>>()?;
    for t in &timelines {
        if t.origin != origin {
            return Err(Error::InvalidTimeline(format!(
                "{}: {} timeline found under {}",
                t.video_id,
                t.origin,
                dir.display()
            )));
        }
    }
    Ok(timelines)
}

fn run_synth(args: &SynthArgs) -> Result<String> {
    let (manifest, truth) = generate_to_dir(&args.spec(), &args.out)?;
    let report = plant_report(&truth, &manifest);
    io::write_atomic(&args.out.join("planted.tsv"), report.to_text().as_bytes())?;
    Ok(format!(
        "wrote {} videos to {}",
        manifest.videos.len(),
        args.out.display()
    ))
}

fn run_train(args: &TrainArgs) -> Result<String> {
    let manifest = load_manifest(&args.dataset)?;
    manifest.check_training_roles()?;
    let configs = args.configs();
    for c in &configs {
        c.validate()?;
    }
    let runs = train_all(&manifest, &configs, Some(&args.out)).into_result()?;
    let mut lines = Vec::new();
    for run in runs {
        let acc = run
            .outcome
            .log
            .final_accuracy()
            .map_or_else(|| "n/a".to_string(), |a| format!("{a:.4}"));
        lines.push(format!("{}: holdout pair accuracy {acc}", run.stream));
    }
    Ok(lines.join("\n"))
}

fn test_videos(manifest: &DatasetManifest) -> Result<Vec<&crate::manifest::VideoEntry>> {
    let tests: Vec<_> = manifest.with_role(Role::Test).collect();
    if tests.is_empty() {
        return Err(Error::InvalidManifest("no test videos".into()));
    }
    Ok(tests)
}

fn run_score(args: &ScoreArgs) -> Result<String> {
    let manifest = load_manifest(&args.dataset)?;
    let streams: Vec<StreamId> = match &args.streams {
        Some(l) => l.0.clone(),
        None => StreamId::ALL
            .into_iter()
            .filter(|&s| checkpoint_path(&args.out, s).is_file())
            .collect(),
    };
    if streams.is_empty() {
        return Err(Error::MissingInput {
            what: "checkpoints",
            video: args.out.join("checkpoints").display().to_string(),
        });
    }
    let tests = test_videos(&manifest)?;
    let mut written = 0;
    for &stream in &streams {
        let (net, _) = load_checkpoint(&checkpoint_path(&args.out, stream))?;
        for v in &tests {
            let track = manifest.load_track(v, stream)?;
            let timeline = score_timeline(&net, &track, &v.id, v.duration_sec)?;
            timeline.save(&timeline_path(&args.out, stream.into(), &v.id))?;
            written += 1;
        }
    }
    Ok(format!("wrote {written} timelines"))
}

/// Per-stream timelines of every scored video. Streams with no timeline
/// directory are absent from the result.
fn load_stream_timelines(out: &Path) -> Result<BTreeMap<String, BTreeMap<StreamId, ScoreTimeline>>> {
    let mut by_video: BTreeMap<String, BTreeMap<StreamId, ScoreTimeline>> = BTreeMap::new();
    for stream in StreamId::ALL {
        if !timeline_dir(out, stream.into()).is_dir() {
            continue;
        }
        for t in load_timelines(out, stream.into())? {
            by_video.entry(t.video_id.clone()).or_default().insert(stream, t);
        }
    }
    if by_video.is_empty() {
        return Err(Error::MissingInput {
            what: "stream timelines",
            video: timeline_dir(out, Origin::Temporal).display().to_string(),
        });
    }
    Ok(by_video)
}

/// Fills missing streams with a constant timeline. Callers give them zero
/// weight, so they only satisfy the shape of the fusion call.
fn complete(video_id: &str, present: &BTreeMap<StreamId, ScoreTimeline>) -> Result<PerStream<ScoreTimeline>> {
    let any = present.values().next().expect("at least one stream");
    let get = |s: StreamId| -> Result<ScoreTimeline> {
        match present.get(&s) {
            Some(t) => Ok(t.clone()),
            None => ScoreTimeline::new(video_id, s.into(), any.duration_sec, vec![0.0; any.len()]),
        }
    };
    Ok(PerStream::new(
        get(StreamId::Temporal)?,
        get(StreamId::Spatial)?,
        get(StreamId::Audio)?,
    ))
}

fn run_fuse(args: &FuseArgs) -> Result<String> {
    let by_video = load_stream_timelines(&args.out)?;
    for (id, present) in &by_video {
        let streams: Vec<StreamId> = present.keys().copied().collect();
        let weights = args.weights.restricted_to(&streams)?;
        let p = complete(id, present)?;
        let fused = normalize_and_fuse(&p.temporal, &p.spatial, &p.audio, &weights)?;
        fused.save(&timeline_path(&args.out, Origin::Fused, id))?;
    }
    Ok(format!("fused {} videos", by_video.len()))
}

fn load_test_annotations(dataset: &Path) -> Result<BTreeMap<String, crate::annotations::AnnotationSet>> {
    let manifest = load_manifest(dataset)?;
    test_videos(&manifest)?
        .into_iter()
        .map(|v| Ok((v.id.clone(), manifest.load_annotations(v)?)))
        .collect()
}

fn run_evaluate(args: &EvaluateArgs) -> Result<String> {
    let annotations = load_test_annotations(&args.dataset)?;
    let config = EvalConfig {
        alpha: args.alpha,
        clip_len: args.clip_len,
        positive_overlap: args.positive_overlap,
    };
    let (text, json) = if args.ablate {
        let by_video = load_stream_timelines(&args.out)?;
        let mut per_stream = Vec::new();
        for (id, present) in &by_video {
            if let Some(missing) = StreamId::ALL.into_iter().find(|s| !present.contains_key(s)) {
                return Err(Error::MissingInput {
                    what: "stream timeline for ablation",
                    video: format!("{id} ({missing})"),
                });
            }
            per_stream.push(complete(id, present)?);
        }
        let report = evaluate_ablation(&per_stream, &annotations, &args.weights, &config)?;
        (report.to_text(), report.to_json())
    } else {
        let fused = load_timelines(&args.out, Origin::Fused)?;
        let report = evaluate("t+s+a", &fused, &annotations, &config)?;
        (report.to_text(), report.to_json())
    };
    save_report(&text, &json, &args.out, "report")?;
    Ok(text)
}

fn run_highlights(args: &HighlightsArgs) -> Result<String> {
    let mut fused = load_timelines(&args.out, Origin::Fused)?;
    if let Some(id) = &args.video {
        fused.retain(|t| &t.video_id == id);
        if fused.is_empty() {
            return Err(Error::MissingInput {
                what: "fused timeline",
                video: id.clone(),
            });
        }
    }
    let mut lines = Vec::new();
    for t in &fused {
        let clips = clip_scores(t, args.clip_len)?;
        let segments = select_top(&clips, args.budget)?;
        segments.save(&t.video_id, &args.out.join("highlights").join(format!("{}.tsv", t.video_id)))?;
        lines.push(format!(
            "{}: {} segments, {} s",
            t.video_id,
            segments.segments.len(),
            segments.total_len_sec
        ));
    }
    Ok(lines.join("\n"))
}

pub fn execute(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Synth(a) => run_synth(a),
        Command::Train(a) => run_train(a),
        Command::Score(a) => run_score(a),
        Command::Fuse(a) => run_fuse(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::Highlights(a) => run_highlights(a),
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code: 0 on success, 1 on a pipeline error, 2 on bad usage.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(summary) => {
            if !summary.is_empty() {
                println!("{summary}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Seed used by `train` for one stream, for callers reproducing a CLI run.
pub fn stream_seed(master_seed: u64, stream: StreamId) -> u64 {
    seed::derive(master_seed, stream.as_str())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_defaults() {
        let cli = Cli::try_parse_from(["hlrank", "train", "--dataset", "d", "--out", "o"]).unwrap();
        let Command::Train(args) = cli.command else { panic!() };
        let configs = args.configs();
        assert_eq!(configs.len(), 3);
        assert_eq!(configs[0].lr, 0.005);
        assert_eq!(configs[2].lr, 0.1);
        assert_eq!(configs[0].loss, LossSpec::Huber { delta: 1.5 });
        assert_eq!(configs[1].seed, stream_seed(0, StreamId::Spatial));
    }

    #[test]
    fn overrides_apply() {
        let cli = Cli::try_parse_from([
            "hlrank", "train", "--dataset", "d", "--out", "o", "--loss", "hinge2", "--lr-audio", "0.3",
            "--streams", "audio", "--widths-audio", "256,8,1",
        ])
        .unwrap();
        let Command::Train(args) = cli.command else { panic!() };
        let configs = args.configs();
        assert_eq!(configs.len(), 1);
        assert_eq!(configs[0].lr, 0.3);
        assert_eq!(configs[0].loss, LossSpec::Hinge { p: 2 });
        assert_eq!(configs[0].widths, Some(vec![256, 8, 1]));
    }

    #[test]
    fn weights_renormalize() {
        let cli = Cli::try_parse_from(["hlrank", "fuse", "--out", "o", "--weights", "2,1,1"]).unwrap();
        let Command::Fuse(args) = cli.command else { panic!() };
        assert_eq!(args.weights.temporal, 0.5);
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        assert_eq!(run(["hlrank", "fuse", "--out", "o", "--bogus"]), 2);
        assert_eq!(run(["hlrank", "frobnicate"]), 2);
    }

    #[test]
    fn missing_inputs_fail_cleanly() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        assert_eq!(run(["hlrank", "fuse", "--out", out]), 1);
        assert_eq!(run(["hlrank", "highlights", "--out", out, "--budget", "30"]), 1);
    }
}
