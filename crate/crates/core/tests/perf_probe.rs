// Temporary probe: one pass-1 epoch at desk scale.
use std::time::Instant;

use mapseg_core::data::{raster_to_tensor, Sample};
use mapseg_core::synthmap::{generate_scene, SceneSpec};
use mapseg_core::train::{train_pass, TrainConfig};
use mapseg_core::unet::NetConfig;

#[test]
#[ignore]
fn time_one_epoch() {
    let t0 = Instant::now();
    let train: Vec<Sample> = (0..64)
        .map(|i| {
            let s = generate_scene(&SceneSpec::easy(128, i)).unwrap();
            Sample { image: raster_to_tensor(&s.image), mask: s.truth }
        })
        .collect();
    let val: Vec<Sample> = (0..16)
        .map(|i| {
            let s = generate_scene(&SceneSpec::easy(128, 1000 + i)).unwrap();
            Sample { image: raster_to_tensor(&s.image), mask: s.truth }
        })
        .collect();
    println!("data gen: {:?}", t0.elapsed());
    let t1 = Instant::now();
    let tcfg = TrainConfig { epochs: 1, seed: 7, ..TrainConfig::default() };
    let dir = tempfile::tempdir().unwrap();
    let art = train_pass(&train, &val, &NetConfig::pass1(), &tcfg, dir.path()).unwrap();
    println!("one epoch: {:?}, curve {:?}", t1.elapsed(), art.curve.records[0]);
}
