//! Generates the three synthetic tasks, writes one as IDX files and reads
//! it back.
//!
//! ```text
//! cargo run --release --example synthetic_data -- /tmp/conj
//! ```

use s3fnet::data::{generate_synthetic, load_idx, split, write_idx, SynthTask, SynthTaskSpec};

const SHADES: &[u8] = b" .:-=+*#%@";

fn main() -> s3fnet::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| std::env::temp_dir().join("s3f-synth").display().to_string());
    for task in [SynthTask::Shape, SynthTask::Texture, SynthTask::Conjunction] {
        let spec = SynthTaskSpec {
            task,
            per_class: 50,
            noise: 0.0,
            amplitude: 0.3,
            ..SynthTaskSpec::default()
        };
        let data = generate_synthetic(&spec)?;
        println!("{task}: {} images of {:?}, classes {:?}", data.len(), data.image_shape(), data.class_names());
    }

    let data = generate_synthetic(&SynthTaskSpec {
        task: SynthTask::Conjunction,
        per_class: 50,
        noise: 0.0,
        amplitude: 0.3,
        ..SynthTaskSpec::default()
    })?;
    let n = data.image_shape()[0];
    println!("\nfirst image, class {}:", data.class_names()[data.labels()[0]]);
    for row in data.image(0).chunks(n) {
        let line: String = row
            .iter()
            .map(|v| SHADES[((v * (SHADES.len() - 1) as f64).round() as usize).min(SHADES.len() - 1)] as char)
            .collect();
        println!("  {line}");
    }

    let parts = split(&data, &[0.8, 0.2], 0)?;
    std::fs::create_dir_all(&out).map_err(|e| s3fnet::Error::io(&out, e))?;
    let dir = std::path::Path::new(&out);
    write_idx(&parts[0], dir.join("train-images.idx"), dir.join("train-labels.idx"))?;
    let back = load_idx(dir.join("train-images.idx"), dir.join("train-labels.idx"), None)?;
    println!("\nwrote and reloaded {} training images from {out}; class counts {:?}", back.len(), back.class_counts());
    Ok(())
}
