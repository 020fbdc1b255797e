//! Screen-space projection and differentiable alpha compositing.

pub mod composite;
pub mod project;

pub use composite::{
    bin_splats, composite_backward, composite_color, composite_forward, dominant_contributors,
    frame_pixels, FeatureMap, RenderGrads, TileBins, ALPHA_CLAMP, ALPHA_SKIP, TILE_SIZE,
    TRANSMITTANCE_EPS,
};
pub use project::{project, project_with_codes, Splat, SplatList, COV_REGULARIZER, CULL_SIGMA};

use crate::codec;
use crate::error::{Error, Result};
use crate::scene::{pack_code, Camera, CodeTable, GaussianScene};

/// Render the full feature image for a camera: project, bin, composite.
pub fn render_features(scene: &GaussianScene, camera: &Camera) -> FeatureMap {
    let list = project(scene, camera);
    let bins = bin_splats(&list);
    composite_forward(&list, &bins, &frame_pixels(camera.width, camera.height))
}

/// Render the level-`level` class-id image from a trained scene and its code
/// table.
///
/// Composites the code bits, binarizes each pixel, masks to the level prefix
/// and packs the result; mostly-empty pixels (transmittance above 0.5) emit
/// label 0. No per-pixel distance computation or clustering is involved.
pub fn render_class_map(
    scene: &GaussianScene,
    camera: &Camera,
    codes: &CodeTable,
    level: usize,
) -> Result<Vec<u32>> {
    if level < 1 || level > scene.layout.levels() {
        return Err(Error::Contract(format!(
            "level {level} out of range 1..={}",
            scene.layout.levels()
        )));
    }
    if codes.len() != scene.len() {
        return Err(Error::Contract(format!(
            "code table has {} entries for {} gaussians",
            codes.len(),
            scene.len()
        )));
    }
    let list = project_with_codes(scene, camera, codes);
    let bins = bin_splats(&list);
    let map = composite_forward(&list, &bins, &frame_pixels(camera.width, camera.height));
    let mask = scene.layout.prefix_mask(level);
    let labels = (0..map.pixels.len())
        .map(|p| {
            if map.transmittance[p] > 0.5 {
                0
            } else {
                let bits = codec::binarize(map.row(p));
                pack_code(&bits, &scene.layout) & mask
            }
        })
        .collect();
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Gaussian, GaussianScene, LevelLayout};

    fn blob_scene(code_bits: Vec<f64>, layout: LevelLayout) -> GaussianScene {
        // A thick slab of overlapping gaussians so every central pixel is
        // well covered.
        let logits: Vec<f64> =
            code_bits.iter().map(|&b| if b > 0.5 { 8.0 } else { -8.0 }).collect();
        let gaussians: Vec<Gaussian> = (0..25)
            .map(|i| Gaussian {
                position: [
                    ((i % 5) as f64 - 2.0) * 0.25,
                    ((i / 5) as f64 - 2.0) * 0.25,
                    3.0,
                ],
                log_scale: [-0.9; 3],
                rotation: [1.0, 0.0, 0.0, 0.0],
                opacity_logit: 4.0,
                color: [0.5; 3],
                feature_logits: logits.clone(),
            })
            .collect();
        GaussianScene::new(gaussians, layout).unwrap()
    }

    fn camera(size: u32) -> Camera {
        Camera::look_at([0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0], 40.0, size, size)
    }

    #[test]
    fn uniform_code_scene_renders_constant_labels() {
        let layout = LevelLayout::new(&[3]).unwrap();
        // Code 5 = bits (1,0,1).
        let scene = blob_scene(vec![1.0, 0.0, 1.0], layout);
        let codes = crate::codec::extract_codes(&scene);
        assert!(codes.codes.iter().all(|&c| c == 5));
        let labels = render_class_map(&scene, &camera(32), &codes, 1).unwrap();
        let covered: Vec<u32> = labels.iter().copied().filter(|&l| l != 0).collect();
        assert!(!covered.is_empty());
        assert!(covered.iter().all(|&l| l == 5));
    }

    #[test]
    fn level_out_of_range_is_rejected() {
        let layout = LevelLayout::new(&[3]).unwrap();
        let scene = blob_scene(vec![0.0, 0.0, 0.0], layout);
        let codes = crate::codec::extract_codes(&scene);
        assert!(render_class_map(&scene, &camera(16), &codes, 0).is_err());
        assert!(render_class_map(&scene, &camera(16), &codes, 2).is_err());
    }

    #[test]
    fn label_classes_are_prefix_nested() {
        let layout = LevelLayout::new(&[2, 2]).unwrap();
        let scene = blob_scene(vec![1.0, 0.0, 1.0, 1.0], layout.clone());
        let codes = crate::codec::extract_codes(&scene);
        let cam = camera(24);
        let coarse = render_class_map(&scene, &cam, &codes, 1).unwrap();
        let fine = render_class_map(&scene, &cam, &codes, 2).unwrap();
        for (c, f) in coarse.iter().zip(&fine) {
            if *f != 0 {
                assert_eq!(f & layout.prefix_mask(1), *c);
            }
        }
    }
}
