#![allow(dead_code)]

use std::path::{Path, PathBuf};

use lmsnn::data::{self, Dataset};
use lmsnn::pnm::Image;
use lmsnn_cli::RunConfig;

/// Four classes of 8x8 images: class `c` lights rows `2c` and `2c + 1`.
pub fn bars(n_per_class: usize, offset: usize) -> Dataset {
    let mut levels = Vec::new();
    let mut labels = Vec::new();
    for k in offset..offset + n_per_class {
        for c in 0..4u8 {
            for r in 0..8 {
                for col in 0..8 {
                    let on = r / 2 == c as usize;
                    let jitter = ((k * 31 + r * 7 + col * 13) % 40) as u8;
                    levels.push(if on { 215 + jitter } else { jitter / 4 });
                }
            }
            labels.push(c);
        }
    }
    Dataset::new(8, 8, 4, levels, labels).unwrap()
}

/// Writes a train/test split in the standard MNIST file layout.
pub fn write_idx_split(dir: &Path) {
    let (ti, tl) = data::mnist_paths(dir, true);
    bars(8, 0).write_idx(&ti, &tl).unwrap();
    let (vi, vl) = data::mnist_paths(dir, false);
    bars(4, 100).write_idx(&vi, &vl).unwrap();
}

/// Writes PGM frames plus `train.csv` and `test.csv` manifests.
pub fn write_frame_split(dir: &Path) -> (PathBuf, PathBuf) {
    let mut out = Vec::new();
    for (name, ds) in [("train", bars(8, 0)), ("test", bars(4, 100))] {
        let mut manifest = String::from("path,label\n");
        for i in 0..ds.len() {
            let file = format!("{name}_{i:03}.pgm");
            Image::gray(ds.width(), ds.height(), ds.levels(i).to_vec())
                .unwrap()
                .write(&dir.join(&file))
                .unwrap();
            manifest.push_str(&format!("{file},{}\n", ds.label(i)));
        }
        let path = dir.join(format!("{name}.csv"));
        std::fs::write(&path, manifest).unwrap();
        out.push(path);
    }
    (out.remove(0), out.remove(0))
}

/// Small configuration over the bars data in `data_dir`, writing into `out`.
pub fn toy_overrides(data_dir: &Path, out: &Path) -> Vec<String> {
    vec![
        format!("data.mnist_dir=\"{}\"", data_dir.display()),
        format!("run.output_dir=\"{}\"", out.display()),
        "network.n_neurons=4".into(),
        "network.c_norm=6.4".into(),
        "data.label_examples=16".into(),
        "training.estimate_window=4".into(),
        "run.seeds=[1]".into(),
    ]
}

pub fn toy_config(data_dir: &Path, out: &Path, extra: &[&str]) -> RunConfig {
    let mut o = toy_overrides(data_dir, out);
    o.extend(extra.iter().map(|s| s.to_string()));
    RunConfig::load(None, &o).unwrap()
}
