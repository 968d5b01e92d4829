//! Writes a small synthetic dataset to disk, reads it back through the
//! manifest and prints the planted highlight report.
//!
//! cargo run --example synth_dataset -- [dir]

use hlrank::manifest::load_manifest;
use hlrank::synth::{generate_to_dir, plant_report, SynthSpec};
use hlrank::{Role, StreamId};

fn main() -> hlrank::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("hlrank-synth-example"));
    let spec = SynthSpec {
        n_edited: 6,
        n_raw: 3,
        raw_len_sec: 180.0,
        n_test: 2,
        test_len_sec: 240.0,
        seed: 7,
        ..SynthSpec::default()
    };
    let (_, truth) = generate_to_dir(&spec, &dir)?;

    let manifest = load_manifest(&dir)?;
    println!("{} videos under {}", manifest.videos.len(), dir.display());
    for v in manifest.with_role(Role::Test) {
        let ann = manifest.load_annotations(v)?;
        println!("{}: {} s of {} s annotated, {} segments", v.id, ann.total_len(), v.duration_sec, ann.segments().len());
        for stream in StreamId::ALL {
            let track = manifest.load_track(v, stream)?;
            println!("  {stream}: {} units of dim {}", track.len(), track.dim());
        }
    }
    print!("{}", plant_report(&truth, &manifest).to_text());
    Ok(())
}
