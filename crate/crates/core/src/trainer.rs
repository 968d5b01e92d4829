//! Weakly supervised training of one stream head.
//!
//! Every unit of an edited highlight video is treated as a positive and every
//! unit of a raw video as a negative. Pairs are drawn uniformly at random each
//! batch, first a video and then a unit within it, so long videos do not
//! dominate. A video-level holdout split measures pair accuracy during
//! training and never contributes gradients.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::{s, Array2, ArrayView2};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::save_checkpoint;
use crate::error::{Error, Result};
use crate::features::FeatureTrack;
use crate::io;
use crate::loss::{batch_loss, LossSpec};
use crate::manifest::{DatasetManifest, Role};
use crate::net::{sgd_step, stock_head, LayerSpec, Mode, OptimizerState, RankingNet, DEFAULT_DROPOUT};
use crate::seed;
use crate::stream::StreamId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub stream: StreamId,
    pub loss: LossSpec,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub total_updates: usize,
    pub seed: u64,
    pub holdout_fraction: f64,
    pub dropout: f64,
    /// Overrides the stock head when set.
    pub widths: Option<Vec<usize>>,
    /// Holdout accuracy is measured every `eval_every` updates and at the end.
    pub eval_every: usize,
    pub holdout_pairs: usize,
}

impl TrainConfig {
    pub fn default_lr(stream: StreamId) -> f64 {
        match stream {
            StreamId::Temporal | StreamId::Spatial => 0.005,
            StreamId::Audio => 0.1,
        }
    }

    pub fn for_stream(stream: StreamId) -> Self {
        TrainConfig {
            stream,
            loss: LossSpec::default(),
            lr: Self::default_lr(stream),
            momentum: 0.9,
            weight_decay: 0.00005,
            batch_size: 64,
            total_updates: 10_000,
            seed: 0,
            holdout_fraction: 0.1,
            dropout: DEFAULT_DROPOUT,
            widths: None,
            eval_every: 1000,
            holdout_pairs: 2000,
        }
    }

    pub fn layer_spec(&self) -> Result<LayerSpec> {
        match &self.widths {
            Some(widths) => LayerSpec::new(widths.clone(), self.dropout),
            None => stock_head(self.stream).with_dropout(self.dropout),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.layer_spec()?;
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        if self.total_updates == 0 {
            return Err(Error::InvalidConfig("total_updates must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::InvalidConfig(format!(
                "holdout_fraction {} outside [0, 1)",
                self.holdout_fraction
            )));
        }
        if self.eval_every == 0 {
            return Err(Error::InvalidConfig("eval_every must be positive".into()));
        }
        Ok(())
    }
}

/// Stock configurations for all three streams, seeded from one master seed.
pub fn stock_configs(master_seed: u64) -> Vec<TrainConfig> {
    StreamId::ALL
        .iter()
        .map(|&stream| TrainConfig {
            seed: seed::derive(master_seed, stream.as_str()),
            ..TrainConfig::for_stream(stream)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct VideoUnits {
    pub id: String,
    pub track: Arc<FeatureTrack>,
}

/// Positive and negative sources of one stream.
#[derive(Debug, Clone)]
pub struct StreamCorpus {
    stream: StreamId,
    dim: usize,
    positives: Vec<VideoUnits>,
    negatives: Vec<VideoUnits>,
}

impl StreamCorpus {
    /// Videos without units are dropped; each role must keep at least one.
    pub fn new(stream: StreamId, positives: Vec<VideoUnits>, negatives: Vec<VideoUnits>) -> Result<Self> {
        let positives: Vec<_> = positives.into_iter().filter(|v| !v.track.is_empty()).collect();
        let negatives: Vec<_> = negatives.into_iter().filter(|v| !v.track.is_empty()).collect();
        let dim = positives
            .first()
            .ok_or(Error::MissingRole {
                role: "edited_positive",
                stream,
            })?
            .track
            .dim();
        if negatives.is_empty() {
            return Err(Error::MissingRole {
                role: "raw_negative",
                stream,
            });
        }
        for v in positives.iter().chain(&negatives) {
            if v.track.stream() != stream {
                return Err(Error::InvalidTrack(format!("{}: not a {stream} track", v.id)));
            }
            if v.track.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: v.track.dim(),
                });
            }
        }
        Ok(StreamCorpus {
            stream,
            dim,
            positives,
            negatives,
        })
    }

    /// Loads every edited_positive and raw_negative track of `stream`.
    pub fn from_manifest(manifest: &DatasetManifest, stream: StreamId) -> Result<Self> {
        let load = |role: Role| -> Result<Vec<VideoUnits>> {
            manifest
                .with_role(role)
                .map(|v| {
                    Ok(VideoUnits {
                        id: v.id.clone(),
                        track: Arc::new(manifest.load_track(v, stream)?),
                    })
                })
                .collect()
        };
        Self::new(stream, load(Role::EditedPositive)?, load(Role::RawNegative)?)
    }

    pub fn stream(&self) -> StreamId {
        self.stream
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn positives(&self) -> &[VideoUnits] {
        &self.positives
    }

    pub fn negatives(&self) -> &[VideoUnits] {
        &self.negatives
    }

    /// Splits off holdout videos: a video is held out when a seeded hash of
    /// its id falls below `fraction`. Membership depends only on the id, so
    /// removing held-out videos leaves the training side unchanged. The
    /// holdout side is `None` unless it has both roles.
    pub fn split_holdout(&self, fraction: f64, seed: u64) -> Result<(StreamCorpus, Option<StreamCorpus>)> {
        let key = seed::derive(seed, "holdout");
        let held = |v: &VideoUnits| seed::unit_hash(key, &v.id) < fraction;
        let part = |vs: &[VideoUnits], want: bool| -> Vec<VideoUnits> {
            vs.iter().filter(|v| held(v) == want).cloned().collect()
        };
        let train = StreamCorpus::new(self.stream, part(&self.positives, false), part(&self.negatives, false))?;
        let holdout = StreamCorpus::new(self.stream, part(&self.positives, true), part(&self.negatives, true)).ok();
        Ok((train, holdout))
    }
}

/// `batch` positives followed by `batch` negatives, one row per unit.
#[derive(Debug, Clone)]
pub struct PairBatch {
    rows: Array2<f64>,
    pub positive_sources: Vec<usize>,
    pub negative_sources: Vec<usize>,
}

impl PairBatch {
    pub fn len(&self) -> usize {
        self.positive_sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positive_sources.is_empty()
    }

    pub fn positives(&self) -> ArrayView2<'_, f64> {
        self.rows.slice(s![..self.len(), ..])
    }

    pub fn negatives(&self) -> ArrayView2<'_, f64> {
        self.rows.slice(s![self.len().., ..])
    }

    pub fn stacked(&self) -> ArrayView2<'_, f64> {
        self.rows.view()
    }
}

fn draw_unit<R: Rng + ?Sized>(videos: &[VideoUnits], rng: &mut R) -> (usize, usize) {
    let v = rng.random_range(0..videos.len());
    let u = rng.random_range(0..videos[v].track.len());
    (v, u)
}

pub fn sample_pair_batch<R: Rng + ?Sized>(corpus: &StreamCorpus, batch_size: usize, rng: &mut R) -> Result<PairBatch> {
    if batch_size == 0 {
        return Err(Error::EmptyBatch);
    }
    let mut rows = Array2::zeros((2 * batch_size, corpus.dim));
    let mut positive_sources = Vec::with_capacity(batch_size);
    let mut negative_sources = Vec::with_capacity(batch_size);
    for i in 0..batch_size {
        let (v, u) = draw_unit(&corpus.positives, rng);
        positive_sources.push(v);
        copy_row(&mut rows, i, corpus.positives[v].track.vector(u));
        let (v, u) = draw_unit(&corpus.negatives, rng);
        negative_sources.push(v);
        copy_row(&mut rows, batch_size + i, corpus.negatives[v].track.vector(u));
    }
    Ok(PairBatch {
        rows,
        positive_sources,
        negative_sources,
    })
}

fn copy_row(rows: &mut Array2<f64>, i: usize, src: &[f32]) {
    for (dst, &v) in rows.row_mut(i).iter_mut().zip(src) {
        *dst = v as f64;
    }
}

/// Fraction of pairs with `f(x+) > f(x-)`.
pub fn pair_accuracy(net: &RankingNet, batch: &PairBatch) -> Result<f64> {
    let mut correct = 0usize;
    let chunk = 512;
    let n = batch.len();
    for start in (0..n).step_by(chunk) {
        let end = (start + chunk).min(n);
        let pos = net.score_batch(batch.positives().slice(s![start..end, ..]))?;
        let neg = net.score_batch(batch.negatives().slice(s![start..end, ..]))?;
        correct += pos.iter().zip(neg.iter()).filter(|(p, n)| p > n).count();
    }
    Ok(correct as f64 / n as f64)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    /// Mean batch loss per update.
    pub losses: Vec<f64>,
    /// `(update, holdout pair accuracy)` at each evaluation point.
    pub holdout_accuracy: Vec<(usize, f64)>,
    pub checkpoint: Option<PathBuf>,
}

impl TrainLog {
    pub fn final_accuracy(&self) -> Option<f64> {
        self.holdout_accuracy.last().map(|&(_, a)| a)
    }

    /// Tab-separated `update, mean_loss, holdout_accuracy` lines; the last
    /// column is empty where holdout accuracy was not measured.
    pub fn to_text(&self) -> String {
        let mut out = String::from("update\tmean_loss\tholdout_accuracy\n");
        let mut acc = self.holdout_accuracy.iter().peekable();
        for (i, loss) in self.losses.iter().enumerate() {
            let update = i + 1;
            let _ = write!(out, "{update}\t{loss}\t");
            if let Some(&&(u, a)) = acc.peek() {
                if u == update {
                    let _ = write!(out, "{a}");
                    acc.next();
                }
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: RankingNet,
    pub optimizer: OptimizerState,
    pub log: TrainLog,
}

pub fn train_stream(corpus: &StreamCorpus, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if corpus.stream() != config.stream {
        return Err(Error::InvalidConfig(format!(
            "corpus holds {} features, config is for {}",
            corpus.stream(),
            config.stream
        )));
    }
    let spec = config.layer_spec()?;
    if spec.input_dim() != corpus.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.input_dim(),
            actual: corpus.dim(),
        });
    }
    let (train, holdout) = corpus.split_holdout(config.holdout_fraction, config.seed)?;
    let holdout_batch = match &holdout {
        Some(h) if config.holdout_pairs > 0 => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(config.seed, "holdout-pairs"));
            Some(sample_pair_batch(h, config.holdout_pairs, &mut rng)?)
        }
        _ => None,
    };

    let mut net = RankingNet::init(spec, seed::derive(config.seed, "init"));
    let mut optimizer = OptimizerState::new(&net, config.lr, config.momentum, config.weight_decay)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(config.seed, "train"));
    let mut log = TrainLog {
        losses: Vec::with_capacity(config.total_updates),
        ..TrainLog::default()
    };
    let b = config.batch_size;
    let mut pairs = vec![(0.0, 0.0); b];
    let mut d_scores = ndarray::Array1::zeros(2 * b);
    for update in 1..=config.total_updates {
        let batch = sample_pair_batch(&train, b, &mut rng)?;
        let (scores, cache) = net.forward_batch(batch.stacked(), Mode::Train, Some(&mut rng as &mut dyn RngCore))?;
        for (i, pair) in pairs.iter_mut().enumerate() {
            *pair = (scores[i], scores[b + i]);
        }
        let loss = batch_loss(&pairs, &config.loss)?;
        if !loss.mean.is_finite() {
            return Err(Error::Diverged { update });
        }
        for i in 0..b {
            d_scores[i] = loss.d_pos[i];
            d_scores[b + i] = loss.d_neg[i];
        }
        let grads = net.backward_batch(&cache, d_scores.view())?;
        sgd_step(&mut net, &grads, &mut optimizer)?;
        log.losses.push(loss.mean);
        if update % config.eval_every == 0 || update == config.total_updates {
            if let Some(h) = &holdout_batch {
                log.holdout_accuracy.push((update, pair_accuracy(&net, h)?));
            }
        }
    }
    if !net.is_finite() {
        return Err(Error::Diverged {
            update: config.total_updates,
        });
    }
    Ok(TrainOutcome { net, optimizer, log })
}

pub fn checkpoint_path(out_dir: &Path, stream: StreamId) -> PathBuf {
    out_dir.join("checkpoints").join(format!("{stream}.hlck"))
}

pub fn log_path(out_dir: &Path, stream: StreamId) -> PathBuf {
    out_dir.join("logs").join(format!("{stream}.tsv"))
}

#[derive(Debug)]
pub struct StreamRun {
    pub stream: StreamId,
    pub outcome: TrainOutcome,
}

#[derive(Debug, Default)]
pub struct TrainAllReport {
    pub completed: Vec<StreamRun>,
    pub failures: Vec<(StreamId, Error)>,
}

impl TrainAllReport {
    /// `Err` carrying every per-stream failure, if there were any.
    pub fn into_result(self) -> Result<Vec<StreamRun>> {
        if self.failures.is_empty() {
            Ok(self.completed)
        } else {
            Err(Error::StreamFailures(self.failures))
        }
    }
}

fn run_one(manifest: &DatasetManifest, config: &TrainConfig, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    let corpus = StreamCorpus::from_manifest(manifest, config.stream)?;
    let mut outcome = train_stream(&corpus, config)?;
    if let Some(dir) = out_dir {
        let ckpt = checkpoint_path(dir, config.stream);
        save_checkpoint(&outcome.net, &outcome.optimizer, &ckpt)?;
        io::write_atomic(&log_path(dir, config.stream), outcome.log.to_text().as_bytes())?;
        outcome.log.checkpoint = Some(ckpt);
    }
    Ok(outcome)
}

/// Trains each configured stream independently (in parallel threads). A
/// failing stream does not stop the others; its error is collected in the
/// report. With `out_dir` set, checkpoints and logs of completed streams are
/// written under it.
pub fn train_all(manifest: &DatasetManifest, configs: &[TrainConfig], out_dir: Option<&Path>) -> TrainAllReport {
    let results: Vec<(StreamId, Result<TrainOutcome>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = configs
            .iter()
            .map(|config| (config.stream, scope.spawn(move || run_one(manifest, config, out_dir))))
            .collect();
        handles
            .into_iter()
            .map(|(stream, h)| {
                let res = h
                    .join()
                    .unwrap_or_else(|_| Err(Error::InvalidConfig(format!("{stream} training thread panicked"))));
                (stream, res)
            })
            .collect()
    });
    let mut report = TrainAllReport::default();
    for (stream, res) in results {
        match res {
            Ok(outcome) => report.completed.push(StreamRun { stream, outcome }),
            Err(e) => report.failures.push((stream, e)),
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn track(stream: StreamId, dim: usize, n: usize, value: f32) -> Arc<FeatureTrack> {
        let spans = (0..n).map(|i| (i as f64, i as f64 + 1.0)).collect();
        Arc::new(FeatureTrack::new(stream, dim, spans, vec![value; n * dim]).unwrap())
    }

    fn corpus(n_pos: usize, n_neg: usize) -> StreamCorpus {
        let s = StreamId::Audio;
        let pos = (0..n_pos)
            .map(|i| VideoUnits {
                id: format!("e{i}"),
                track: track(s, 4, 10, 1.0),
            })
            .collect();
        let neg = (0..n_neg)
            .map(|i| VideoUnits {
                id: format!("r{i}"),
                track: track(s, 4, 50, -1.0),
            })
            .collect();
        StreamCorpus::new(s, pos, neg).unwrap()
    }

    #[test]
    fn defaults() {
        let t = TrainConfig::for_stream(StreamId::Temporal);
        assert_eq!((t.lr, t.momentum, t.weight_decay), (0.005, 0.9, 0.00005));
        assert_eq!(t.loss, LossSpec::Huber { delta: 1.5 });
        assert_eq!((t.batch_size, t.total_updates, t.holdout_fraction), (64, 10_000, 0.1));
        assert_eq!(TrainConfig::for_stream(StreamId::Spatial).lr, 0.005);
        assert_eq!(TrainConfig::for_stream(StreamId::Audio).lr, 0.1);
        let stock = stock_configs(1);
        assert_eq!(stock.len(), 3);
        assert!(stock[0].seed != stock[1].seed && stock[1].seed != stock[2].seed);
    }

    #[test]
    fn batch_shape() {
        let c = corpus(2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = sample_pair_batch(&c, 64, &mut rng).unwrap();
        assert_eq!(b.positives().dim(), (64, 4));
        assert_eq!(b.negatives().dim(), (64, 4));
        assert!(b.positives().iter().all(|&v| v == 1.0));
        assert!(b.negatives().iter().all(|&v| v == -1.0));
    }

    #[test]
    fn missing_roles() {
        let s = StreamId::Audio;
        let pos = vec![VideoUnits {
            id: "e".into(),
            track: track(s, 4, 3, 1.0),
        }];
        assert!(matches!(
            StreamCorpus::new(s, pos, vec![]),
            Err(Error::MissingRole { role: "raw_negative", .. })
        ));
    }

    #[test]
    fn videos_sampled_uniformly_first() {
        // equal-length positives: each gets half the draws
        let c = corpus(2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut first = 0usize;
        let draws = 100_000;
        let mut done = 0;
        while done < draws {
            let b = sample_pair_batch(&c, 1000, &mut rng).unwrap();
            first += b.positive_sources.iter().filter(|&&v| v == 0).count();
            done += 1000;
        }
        let share = first as f64 / draws as f64;
        assert!((share - 0.5).abs() <= 0.02, "share {share}");
    }

    #[test]
    fn two_stage_ignores_video_length() {
        let s = StreamId::Audio;
        let neg = vec![
            VideoUnits {
                id: "short".into(),
                track: track(s, 4, 5, 0.0),
            },
            VideoUnits {
                id: "long".into(),
                track: track(s, 4, 500, 0.0),
            },
        ];
        let pos = vec![VideoUnits {
            id: "e".into(),
            track: track(s, 4, 5, 0.0),
        }];
        let c = StreamCorpus::new(s, pos, neg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = sample_pair_batch(&c, 20_000, &mut rng).unwrap();
        let share = b.negative_sources.iter().filter(|&&v| v == 0).count() as f64 / 20_000.0;
        assert!((share - 0.5).abs() < 0.02);
    }

    #[test]
    fn holdout_split_is_by_id() {
        let c = corpus(40, 40);
        let (train, holdout) = c.split_holdout(0.25, 3).unwrap();
        let holdout = holdout.expect("40 videos per role leave some holdout");
        let n = train.positives().len() + holdout.positives().len();
        assert_eq!(n, 40);
        for v in holdout.positives() {
            assert!(train.positives().iter().all(|t| t.id != v.id));
        }
        // re-splitting the training side holds nothing else out
        let (again, none) = train.split_holdout(0.25, 3).unwrap();
        assert!(none.is_none());
        assert_eq!(again.positives().len(), train.positives().len());
    }

    #[test]
    fn zero_fraction_holds_nothing_out() {
        let (train, holdout) = corpus(3, 3).split_holdout(0.0, 1).unwrap();
        assert!(holdout.is_none());
        assert_eq!(train.positives().len(), 3);
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::for_stream(StreamId::Audio);
        c.batch_size = 0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::for_stream(StreamId::Audio);
        c.holdout_fraction = 1.0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::for_stream(StreamId::Audio);
        c.widths = Some(vec![4, 2]);
        assert!(c.validate().is_err());
    }

    #[test]
    fn dim_mismatch_with_head() {
        let c = corpus(2, 2);
        let config = TrainConfig::for_stream(StreamId::Audio);
        assert!(matches!(train_stream(&c, &config), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn divergence_is_reported() {
        let c = corpus(3, 3);
        let mut config = TrainConfig::for_stream(StreamId::Audio);
        config.widths = Some(vec![4, 1]);
        config.loss = LossSpec::hinge(2).unwrap();
        config.lr = 1e300;
        config.momentum = 0.0;
        config.total_updates = 50;
        config.holdout_fraction = 0.0;
        assert!(matches!(train_stream(&c, &config), Err(Error::Diverged { .. })));
    }

    #[test]
    fn log_text() {
        let log = TrainLog {
            losses: vec![1.0, 0.5],
            holdout_accuracy: vec![(2, 0.75)],
            checkpoint: None,
        };
        assert_eq!(log.to_text(), "update\tmean_loss\tholdout_accuracy\n1\t1\t\n2\t0.5\t0.75\n");
    }
}
