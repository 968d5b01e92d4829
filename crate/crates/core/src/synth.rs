//! Synthetic datasets with planted highlight intervals.
//!
//! Non-highlight units draw features from `N(mu0, sigma^2 I)` and highlight
//! units from `N(mu0 + separation * sigma * u, sigma^2 I)`, where `u` is a
//! fixed random unit direction per stream and `sigma` is the stream's noise
//! scale. Edited videos are highlight throughout. Raw and test videos carry
//! contiguous highlight intervals of 5 to 15 whole seconds totalling a fixed
//! share of the video.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::annotations::AnnotationSet;
use crate::error::{Error, Result};
use crate::features::{write_feature_file, FeatureTrack};
use crate::manifest::{DatasetManifest, Role, VideoEntry};
use crate::seed;
use crate::stream::{PerStream, StreamId};
use crate::trainer::{StreamCorpus, VideoUnits};

/// Temporal units cover 16 frames at 30 fps.
pub const TEMPORAL_UNIT_SEC: f64 = 16.0 / 30.0;
const MIN_INTERVAL_SEC: u32 = 5;
const MAX_INTERVAL_SEC: u32 = 15;

/// Noise scale giving each stream an expected noise norm of one, the scale of
/// L2-normalized backbone features. The stock learning rates are tuned for
/// inputs of roughly this size.
pub fn unit_norm_noise(stream: StreamId) -> f64 {
    1.0 / (stream.input_dim() as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_edited: usize,
    pub edited_len_sec: f64,
    pub n_raw: usize,
    pub raw_len_sec: f64,
    pub n_test: usize,
    pub test_len_sec: f64,
    pub highlight_fraction_raw: f64,
    /// Mean shift of highlight features, in units of sigma.
    pub separation: PerStream<f64>,
    /// Per-component standard deviation sigma of each stream.
    pub stream_noise: PerStream<f64>,
    /// Streams to emit.
    pub streams: Vec<StreamId>,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_edited: 45,
            edited_len_sec: 21.0,
            n_raw: 20,
            raw_len_sec: 780.0,
            n_test: 4,
            test_len_sec: 900.0,
            highlight_fraction_raw: 0.2,
            separation: PerStream::new(2.0, 1.0, 0.5),
            stream_noise: PerStream::new(
                unit_norm_noise(StreamId::Temporal),
                unit_norm_noise(StreamId::Spatial),
                unit_norm_noise(StreamId::Audio),
            ),
            streams: StreamId::ALL.to_vec(),
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_edited == 0 || self.n_raw == 0 || self.n_test == 0 {
            return bad("video counts must be positive".into());
        }
        for (name, len) in [
            ("edited", self.edited_len_sec),
            ("raw", self.raw_len_sec),
            ("test", self.test_len_sec),
        ] {
            if !(len.is_finite() && len >= 1.0) {
                return bad(format!("{name} length {len} must be at least one second"));
            }
        }
        if !(self.highlight_fraction_raw > 0.0 && self.highlight_fraction_raw < 1.0) {
            return bad(format!("highlight_fraction_raw {} outside (0, 1)", self.highlight_fraction_raw));
        }
        for s in StreamId::ALL {
            let (sep, noise) = (*self.separation.get(s), *self.stream_noise.get(s));
            if !(sep.is_finite() && sep >= 0.0) {
                return bad(format!("{s} separation {sep} must be non-negative"));
            }
            if !(noise.is_finite() && noise > 0.0) {
                return bad(format!("{s} noise {noise} must be positive"));
            }
        }
        if self.streams.is_empty() {
            return bad("no streams selected".into());
        }
        Ok(())
    }
}

/// Planted highlight intervals of every raw and test video.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub videos: BTreeMap<String, Vec<(f64, f64)>>,
}

#[derive(Debug, Clone)]
struct VideoPlan {
    id: String,
    role: Role,
    duration: f64,
    highlights: Vec<(f64, f64)>,
}

impl VideoPlan {
    fn is_highlight(&self, t: f64) -> bool {
        self.role == Role::EditedPositive || self.highlights.iter().any(|&(s, e)| t >= s && t < e)
    }
}

/// Integer-second intervals of 5..=15 s summing to `round(fraction * duration)`,
/// separated by gaps of at least one second.
fn plant_intervals(duration: f64, fraction: f64, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let whole = duration.floor() as u32;
    let target = (fraction * duration).round() as u32;
    let mut lengths = Vec::new();
    let mut remaining = target;
    while remaining > 0 {
        if remaining <= MAX_INTERVAL_SEC {
            lengths.push(remaining);
            break;
        }
        let hi = MAX_INTERVAL_SEC.min(remaining - MIN_INTERVAL_SEC);
        let len = rng.random_range(MIN_INTERVAL_SEC..=hi);
        lengths.push(len);
        remaining -= len;
    }
    let n = lengths.len() as u32;
    // n + 1 gaps; the n - 1 inner ones need at least one second each
    let free = whole.saturating_sub(target);
    if n == 0 || free + 1 < n {
        return Vec::new();
    }
    let spare = free - (n - 1);
    let mut cuts: Vec<u32> = (0..n).map(|_| rng.random_range(0..=spare)).collect();
    cuts.sort_unstable();
    let mut intervals = Vec::with_capacity(n as usize);
    let mut t = 0u32;
    let mut prev_cut = 0u32;
    for (k, (&len, &cut)) in lengths.iter().zip(&cuts).enumerate() {
        t += cut - prev_cut + u32::from(k > 0);
        prev_cut = cut;
        intervals.push((t as f64, (t + len) as f64));
        t += len;
    }
    intervals
}

fn plans(spec: &SynthSpec) -> Vec<VideoPlan> {
    let mut out = Vec::new();
    for i in 0..spec.n_edited {
        out.push(VideoPlan {
            id: format!("edited_{i:03}"),
            role: Role::EditedPositive,
            duration: spec.edited_len_sec,
            highlights: Vec::new(),
        });
    }
    let planted = |id: String, role: Role, duration: f64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(spec.seed, &format!("plant/{id}")));
        let highlights = plant_intervals(duration, spec.highlight_fraction_raw, &mut rng);
        VideoPlan {
            id,
            role,
            duration,
            highlights,
        }
    };
    for i in 0..spec.n_raw {
        out.push(planted(format!("raw_{i:03}"), Role::RawNegative, spec.raw_len_sec));
    }
    for i in 0..spec.n_test {
        out.push(planted(format!("test_{i:03}"), Role::Test, spec.test_len_sec));
    }
    out
}

fn unit_spans(stream: StreamId, duration: f64) -> Vec<(f64, f64)> {
    let step = match stream {
        StreamId::Temporal => TEMPORAL_UNIT_SEC,
        StreamId::Spatial | StreamId::Audio => 1.0,
    };
    let mut spans = Vec::new();
    let mut k = 0usize;
    loop {
        let start = k as f64 * step;
        if start >= duration {
            break;
        }
        spans.push((start, ((k + 1) as f64 * step).min(duration)));
        k += 1;
    }
    spans
}

/// Per-stream base mean and highlight direction.
struct StreamBasis {
    mean: Vec<f64>,
    direction: Vec<f64>,
}

fn stream_basis(spec: &SynthSpec, stream: StreamId) -> StreamBasis {
    let dim = stream.input_dim();
    let sigma = *spec.stream_noise.get(stream);
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(spec.seed, &format!("basis/{stream}")));
    let mean: Vec<f64> = (0..dim).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect();
    let mut direction: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    direction.iter_mut().for_each(|v| *v /= norm);
    StreamBasis { mean, direction }
}

fn generate_track(spec: &SynthSpec, basis: &StreamBasis, plan: &VideoPlan, stream: StreamId) -> Result<FeatureTrack> {
    let dim = stream.input_dim();
    let sigma = *spec.stream_noise.get(stream);
    let shift = *spec.separation.get(stream) * sigma;
    let spans = unit_spans(stream, plan.duration);
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(spec.seed, &format!("features/{stream}/{}", plan.id)));
    let mut data = Vec::with_capacity(spans.len() * dim);
    for &(start, end) in &spans {
        let highlight = plan.is_highlight(0.5 * (start + end));
        for k in 0..dim {
            let z: f64 = rng.sample(StandardNormal);
            let mut v = basis.mean[k] + sigma * z;
            if highlight {
                v += shift * basis.direction[k];
            }
            data.push(v as f32);
        }
    }
    FeatureTrack::new(stream, dim, spans, data)
}

fn track_rel(id: &str, stream: StreamId) -> String {
    format!("features/{id}.{stream}.hlft")
}

fn annotation_rel(id: &str) -> String {
    format!("annotations/{id}.toml")
}

/// A generated dataset held in memory.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub manifest: DatasetManifest,
    pub tracks: BTreeMap<(String, StreamId), FeatureTrack>,
    pub annotations: BTreeMap<String, AnnotationSet>,
    pub truth: PlantedTruth,
}

fn manifest_for(spec: &SynthSpec, plans: &[VideoPlan], root: &Path) -> Result<DatasetManifest> {
    let videos = plans
        .iter()
        .map(|p| VideoEntry {
            id: p.id.clone(),
            role: p.role,
            duration_sec: p.duration,
            annotation_path: (p.role == Role::Test).then(|| annotation_rel(&p.id)),
            tracks: spec.streams.iter().map(|&s| (s, track_rel(&p.id, s))).collect(),
        })
        .collect();
    DatasetManifest::new(root, videos)
}

fn truth_for(plans: &[VideoPlan]) -> PlantedTruth {
    PlantedTruth {
        videos: plans
            .iter()
            .filter(|p| p.role != Role::EditedPositive)
            .map(|p| (p.id.clone(), p.highlights.clone()))
            .collect(),
    }
}

fn annotations_for(plans: &[VideoPlan]) -> Result<BTreeMap<String, AnnotationSet>> {
    plans
        .iter()
        .filter(|p| p.role == Role::Test)
        .map(|p| Ok((p.id.clone(), AnnotationSet::new(p.highlights.clone(), p.duration)?)))
        .collect()
}

/// Generates the whole dataset in memory.
pub fn generate(spec: &SynthSpec) -> Result<SynthDataset> {
    spec.validate()?;
    let plans = plans(spec);
    let mut tracks = BTreeMap::new();
    for &stream in &spec.streams {
        let basis = stream_basis(spec, stream);
        for p in &plans {
            tracks.insert((p.id.clone(), stream), generate_track(spec, &basis, p, stream)?);
        }
    }
    Ok(SynthDataset {
        manifest: manifest_for(spec, &plans, Path::new("."))?,
        tracks,
        annotations: annotations_for(&plans)?,
        truth: truth_for(&plans),
    })
}

/// Generates straight to `dir`, writing each track as soon as it exists so
/// peak memory stays at one track.
pub fn generate_to_dir(spec: &SynthSpec, dir: &Path) -> Result<(DatasetManifest, PlantedTruth)> {
    spec.validate()?;
    let plans = plans(spec);
    let manifest = manifest_for(spec, &plans, dir)?;
    for &stream in &spec.streams {
        let basis = stream_basis(spec, stream);
        for p in &plans {
            let track = generate_track(spec, &basis, p, stream)?;
            write_feature_file(&track, &dir.join(track_rel(&p.id, stream)))?;
        }
    }
    for (id, ann) in annotations_for(&plans)? {
        ann.save(&dir.join(annotation_rel(&id)))?;
    }
    manifest.save()?;
    Ok((manifest, truth_for(&plans)))
}

impl SynthDataset {
    pub fn track(&self, id: &str, stream: StreamId) -> Option<&FeatureTrack> {
        self.tracks.get(&(id.to_string(), stream))
    }

    /// Training corpus of one stream, sharing no state with the dataset.
    pub fn corpus(&self, stream: StreamId) -> Result<StreamCorpus> {
        let units = |role: Role| -> Result<Vec<VideoUnits>> {
            self.manifest
                .with_role(role)
                .map(|v| {
                    let track = self.track(&v.id, stream).ok_or_else(|| Error::MissingTrack {
                        video: v.id.clone(),
                        stream,
                    })?;
                    Ok(VideoUnits {
                        id: v.id.clone(),
                        track: std::sync::Arc::new(track.clone()),
                    })
                })
                .collect()
        };
        StreamCorpus::new(stream, units(Role::EditedPositive)?, units(Role::RawNegative)?)
    }

    /// Moves the tracks of one stream out into a corpus, avoiding a copy.
    pub fn take_corpus(&mut self, stream: StreamId) -> Result<StreamCorpus> {
        let mut take = |role: Role| -> Result<Vec<VideoUnits>> {
            let ids: Vec<String> = self.manifest.with_role(role).map(|v| v.id.clone()).collect();
            ids.into_iter()
                .map(|id| {
                    let track = self
                        .tracks
                        .remove(&(id.clone(), stream))
                        .ok_or_else(|| Error::MissingTrack { video: id.clone(), stream })?;
                    Ok(VideoUnits {
                        id,
                        track: std::sync::Arc::new(track),
                    })
                })
                .collect()
        };
        let pos = take(Role::EditedPositive)?;
        let neg = take(Role::RawNegative)?;
        StreamCorpus::new(stream, pos, neg)
    }

    /// Writes the dataset in the on-disk layout and returns the rooted manifest.
    pub fn write(&self, dir: &Path) -> Result<DatasetManifest> {
        for ((id, stream), track) in &self.tracks {
            write_feature_file(track, &dir.join(track_rel(id, *stream)))?;
        }
        for (id, ann) in &self.annotations {
            ann.save(&dir.join(annotation_rel(id)))?;
        }
        let manifest = DatasetManifest::new(dir, self.manifest.videos.clone())?;
        manifest.save()?;
        Ok(manifest)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedVideo {
    pub video_id: String,
    pub role: Role,
    pub intervals: usize,
    pub total_sec: f64,
    pub duration_sec: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantReport {
    pub videos: Vec<PlantedVideo>,
    pub edited_videos: usize,
    pub total_planted_sec: f64,
}

/// Counts and planted lengths per raw/test video, for auditing a dataset.
pub fn plant_report(truth: &PlantedTruth, manifest: &DatasetManifest) -> PlantReport {
    let videos: Vec<PlantedVideo> = manifest
        .videos
        .iter()
        .filter_map(|v| {
            truth.videos.get(&v.id).map(|iv| PlantedVideo {
                video_id: v.id.clone(),
                role: v.role,
                intervals: iv.len(),
                total_sec: iv.iter().map(|(s, e)| e - s).sum(),
                duration_sec: v.duration_sec,
            })
        })
        .collect();
    PlantReport {
        edited_videos: manifest.with_role(Role::EditedPositive).count(),
        total_planted_sec: videos.iter().map(|v| v.total_sec).sum(),
        videos,
    }
}

impl PlantReport {
    pub fn to_text(&self) -> String {
        let mut out = String::from("video_id\trole\tintervals\tplanted_sec\tduration_sec\tshare\n");
        for v in &self.videos {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{:.3}",
                v.video_id,
                v.role,
                v.intervals,
                v.total_sec,
                v.duration_sec,
                v.total_sec / v.duration_sec
            );
        }
        let _ = writeln!(
            out,
            "# edited videos: {} (no planted intervals); total planted: {} s",
            self.edited_videos, self.total_planted_sec
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthSpec {
        SynthSpec {
            n_edited: 3,
            n_raw: 2,
            raw_len_sec: 120.0,
            n_test: 1,
            test_len_sec: 100.0,
            streams: vec![StreamId::Audio, StreamId::Temporal],
            seed: 5,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn planted_intervals_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let iv = plant_intervals(900.0, 0.2, &mut rng);
            let total: f64 = iv.iter().map(|(s, e)| e - s).sum();
            assert_eq!(total, 180.0);
            assert!(iv.iter().all(|&(s, e)| (5.0..=15.0).contains(&(e - s)) && s >= 0.0 && e <= 900.0));
            for w in iv.windows(2) {
                assert!(w[1].0 > w[0].1, "{iv:?}");
            }
        }
    }

    #[test]
    fn temporal_spans_tile() {
        let spans = unit_spans(StreamId::Temporal, 2.0);
        assert_eq!(spans.len(), 4);
        assert_eq!(spans[3].1, 2.0);
        assert_eq!(unit_spans(StreamId::Audio, 900.0).len(), 900);
        assert_eq!(unit_spans(StreamId::Audio, 20.5).last(), Some(&(20.0, 20.5)));
    }

    #[test]
    fn deterministic() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.tracks, b.tracks);
        assert_eq!(a.truth, b.truth);
        let c = generate(&SynthSpec { seed: 6, ..small() }).unwrap();
        assert_ne!(a.tracks, c.tracks);
    }

    #[test]
    fn disk_and_memory_agree() {
        let dir = tempfile::tempdir().unwrap();
        let (manifest, truth) = generate_to_dir(&small(), dir.path()).unwrap();
        let mem = generate(&small()).unwrap();
        assert_eq!(truth, mem.truth);
        let loaded = crate::manifest::load_manifest(dir.path()).unwrap();
        assert_eq!(loaded.videos, manifest.videos);
        for v in &loaded.videos {
            for &s in &small().streams {
                assert_eq!(&loaded.load_track(v, s).unwrap(), mem.track(&v.id, s).unwrap());
            }
        }
        let t = loaded.get("test_000").unwrap();
        assert_eq!(loaded.load_annotations(t).unwrap(), mem.annotations["test_000"]);
    }

    #[test]
    fn zero_separation_means_identical_distributions() {
        let spec = SynthSpec {
            separation: PerStream::new(0.0, 0.0, 0.0),
            ..small()
        };
        let d = generate(&spec).unwrap();
        // with no shift, the highlight flag never touches the features:
        // regenerate with a different planting and compare a raw video
        let plans = plans(&spec);
        let basis = stream_basis(&spec, StreamId::Audio);
        let mut p = plans.iter().find(|p| p.id == "raw_000").unwrap().clone();
        p.highlights.clear();
        let unplanted = generate_track(&spec, &basis, &p, StreamId::Audio).unwrap();
        assert_eq!(&unplanted, d.track("raw_000", StreamId::Audio).unwrap());
    }

    #[test]
    fn separation_shifts_along_direction() {
        let spec = SynthSpec {
            separation: PerStream::new(2.0, 1.0, 3.0),
            n_edited: 20,
            ..small()
        };
        let d = generate(&spec).unwrap();
        let basis = stream_basis(&spec, StreamId::Audio);
        let project = |id: &str, want: bool| -> Vec<f64> {
            let plan = plans(&spec).into_iter().find(|p| p.id == id).unwrap();
            let t = d.track(id, StreamId::Audio).unwrap();
            (0..t.len())
                .filter(|&i| plan.is_highlight(0.5 * (t.spans()[i].0 + t.spans()[i].1)) == want)
                .map(|i| {
                    t.vector(i)
                        .iter()
                        .zip(&basis.direction)
                        .zip(&basis.mean)
                        .map(|((&x, &u), &m)| (x as f64 - m) * u)
                        .sum()
                })
                .collect()
        };
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let pos: Vec<f64> = (0..20).flat_map(|i| project(&format!("edited_{i:03}"), true)).collect();
        let neg = project("raw_000", false);
        let gap = (mean(&pos) - mean(&neg)) / spec.stream_noise.audio;
        assert!((gap - 3.0).abs() < 0.3, "gap {gap}");
    }

    #[test]
    fn report_matches_annotations() {
        let d = generate(&small()).unwrap();
        let r = plant_report(&d.truth, &d.manifest);
        assert_eq!(r.edited_videos, 3);
        assert_eq!(r.videos.len(), 3);
        let test = r.videos.iter().find(|v| v.video_id == "test_000").unwrap();
        assert_eq!(test.total_sec, d.annotations["test_000"].total_len());
        assert_eq!(test.total_sec, 20.0);
        assert!(r.to_text().contains("test_000"));
    }

    #[test]
    fn spec_validation() {
        assert!(SynthSpec { n_raw: 0, ..small() }.validate().is_err());
        assert!(SynthSpec {
            highlight_fraction_raw: 1.0,
            ..small()
        }
        .validate()
        .is_err());
        assert!(SynthSpec {
            streams: vec![],
            ..small()
        }
        .validate()
        .is_err());
    }
}
