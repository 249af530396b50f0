//! Writes the synthetic texture benchmark to disk as PNGs plus manifests,
//! ready for the `smalldata` command-line tool.
//!
//! cargo run --release --example make_texture_dataset -- <out_dir> [size]
//!
//! Produces `source.csv` (13 one-hot texture labels) and `target.csv`
//! (one label: the held-out texture).

use std::path::PathBuf;

use smalldata::bench::synth::{source_data, target_data};
use smalldata::bench::{save_image, ExperimentData};

fn write(dir: &std::path::Path, name: &str, data: &ExperimentData) -> smalldata::Result<()> {
    let img_dir = dir.join(name);
    std::fs::create_dir_all(&img_dir).map_err(|e| smalldata::Error::Io {
        path: img_dir.clone(),
        source: e,
    })?;
    let mut csv = format!("path,{}\n", data.manifest.label_names.join(","));
    for (i, (row, img)) in data.manifest.rows.iter().zip(&data.images).enumerate() {
        let rel = format!("{name}/{i:05}.png");
        save_image(&dir.join(&rel), img)?;
        let labels: Vec<&str> = row
            .labels
            .iter()
            .map(|&l| if l { "1" } else { "0" })
            .collect();
        csv.push_str(&format!("{rel},{}\n", labels.join(",")));
    }
    let path = dir.join(format!("{name}.csv"));
    std::fs::write(&path, csv).map_err(|e| smalldata::Error::Io { path, source: e })
}

fn main() -> smalldata::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "texture_data".into()));
    let size: usize = args.next().map_or(16, |s| s.parse().expect("image size"));
    write(&dir, "source", &source_data(40, size, 1)?)?;
    write(&dir, "target", &target_data(150, 150, size, 2)?)?;
    println!("wrote {}", dir.display());
    Ok(())
}
