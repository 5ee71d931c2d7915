//! Synthetic dataset fixtures written to disk.

#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use zoomground::synth::{render_scene, SceneSpec};
use zoomground::Dims;

const PLATFORMS: [&str; 3] = ["web", "desktop", "mobile"];

/// Writes `n` PNG screenshots and a `samples.jsonl` next to them; returns
/// the JSONL path.
pub fn write_dataset(dir: &Path, n: usize, dims: Dims, seed: u64) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = SceneSpec::new(dims);
    let mut jsonl = String::new();
    for i in 0..n {
        let scene = render_scene(&spec, &mut rng);
        let name = format!("shot_{i:03}.png");
        std::fs::write(dir.join(&name), scene.image.encode_png().unwrap()).unwrap();
        let b = scene.target.to_array();
        writeln!(
            jsonl,
            r#"{{"id": "s{i:03}", "image": "{name}", "instruction": "click the red control", "gt_box": [{}, {}, {}, {}], "tags": {{"platform": "{}"}}}}"#,
            b[0],
            b[1],
            b[2],
            b[3],
            PLATFORMS[i % PLATFORMS.len()]
        )
        .unwrap();
    }
    let path = dir.join("samples.jsonl");
    std::fs::write(&path, jsonl).unwrap();
    path
}
