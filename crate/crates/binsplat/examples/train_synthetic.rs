//! End-to-end walkthrough: generate a hierarchical synthetic scene, train
//! binary codes, render class maps, and evaluate per-level mIoU and
//! pairwise consistency.
//!
//! Run with: cargo run --release --example train_synthetic

use binsplat::eval::{eval_miou, pairwise_consistency};
use binsplat::render::render_class_map;
use binsplat::synth::{generate, SynthSpec};
use binsplat::trainer::{train, TrainConfig};

fn main() -> binsplat::Result<()> {
    let spec = SynthSpec::default_tree();
    let out = generate(&spec)?;
    println!(
        "scene: {} gaussians, {} views, {} levels, masks {}x{}",
        out.scene.len(),
        out.cameras.len(),
        out.pyramid.levels(),
        out.pyramid.width(),
        out.pyramid.height()
    );

    let cfg = TrainConfig::desk();
    let started = std::time::Instant::now();
    let result = train(&out.scene, &out.cameras, &out.pyramid, &cfg)?;
    println!(
        "trained {} iterations in {:.1} s (skipped views: {})",
        cfg.iterations,
        started.elapsed().as_secs_f64(),
        result.skipped_views
    );
    if let Some(last) = result.log.last() {
        println!(
            "final loss {:.3} (regularizer {:.4})",
            last.breakdown.total, last.breakdown.regularizer
        );
    }

    let views: Vec<usize> = (0..out.cameras.len()).collect();
    for level in 1..=out.pyramid.levels() {
        let mut predictions = Vec::new();
        for cam in &out.cameras {
            predictions.push(render_class_map(&result.scene, cam, &result.codes, level)?);
        }
        let miou = eval_miou(&predictions, &out.pyramid, &views, level)?;
        let consistency = pairwise_consistency(&predictions, &out.pyramid, &views, level)?;
        println!(
            "level {level}: mIoU {:.2}%, pairwise consistency {:.2}%",
            miou.miou * 100.0,
            consistency * 100.0
        );
    }
    Ok(())
}
