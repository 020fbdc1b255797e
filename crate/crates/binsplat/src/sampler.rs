//! Training-pixel selection: a uniform random pool over all labeled pixels
//! plus mask-balanced quotas over finest-level masks, so small masks are not
//! drowned out by large ones.

use rand::seq::SliceRandom;
use rand::Rng;
use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::mask::MaskPyramid;

/// Pixel budgets per iteration. The paper-scale budget is 2k random + 8k
/// balanced pixels; the desk profile shrinks both so that all-pairs terms
/// stay exact at interactive speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub random_pixels: usize,
    pub balanced_pixels: usize,
    pub masks_per_iter: usize,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn paper() -> Self {
        Self { random_pixels: 2000, balanced_pixels: 8000, masks_per_iter: 64, seed: 0 }
    }

    pub fn desk() -> Self {
        Self { random_pixels: 256, balanced_pixels: 768, masks_per_iter: 64, seed: 0 }
    }
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self::desk()
    }
}

/// Draw one iteration's pixels for a view.
///
/// The random pool draws without replacement from all labeled pixels. Each
/// selected finest-level mask receives an equal share of the balanced
/// budget, drawn with replacement only when the mask is smaller than its
/// quota. Duplicates are removed (first occurrence wins) and the final order
/// is shuffled. Masks are capped so every selected mask gets at least one
/// pixel.
pub fn sample_batch<R: Rng>(
    view: usize,
    pyramid: &MaskPyramid,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<Vec<(u32, u32)>> {
    let pool = pyramid.labeled_pixels(view);
    if pool.is_empty() {
        return Err(Error::Sampling(format!(
            "view {view} has no labeled pixels; skip this view"
        )));
    }
    let width = pyramid.width();
    let mut picked: Vec<u32> = Vec::new();
    let mut seen: HashSet<u32> = HashSet::new();

    let take = config.random_pixels.min(pool.len());
    if take > 0 {
        for idx in rand::seq::index::sample(rng, pool.len(), take) {
            let p = pool[idx];
            if seen.insert(p) {
                picked.push(p);
            }
        }
    }

    if config.balanced_pixels > 0 {
        let masks = pyramid.finest_masks(view);
        let ids: Vec<u32> = masks.keys().copied().collect();
        if !ids.is_empty() {
            let selected =
                config.masks_per_iter.min(ids.len()).min(config.balanced_pixels).max(1);
            let quota = config.balanced_pixels / selected;
            for mi in rand::seq::index::sample(rng, ids.len(), selected) {
                let pixels = &masks[&ids[mi]];
                if pixels.len() >= quota {
                    for k in rand::seq::index::sample(rng, pixels.len(), quota) {
                        let p = pixels[k];
                        if seen.insert(p) {
                            picked.push(p);
                        }
                    }
                } else {
                    for _ in 0..quota {
                        let p = pixels[rng.gen_range(0..pixels.len())];
                        if seen.insert(p) {
                            picked.push(p);
                        }
                    }
                }
            }
        }
    }

    picked.shuffle(rng);
    Ok(picked.into_iter().map(|p| (p % width, p / width)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::MaskPyramid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// 8x8 view, level 1 all labeled as 1, level 2 split into left mask 10
    /// and right mask 11.
    fn two_mask_pyramid() -> MaskPyramid {
        let mut l1 = vec![0u32; 64];
        let mut l2 = vec![0u32; 64];
        for y in 0..8 {
            for x in 0..8 {
                l1[y * 8 + x] = 1;
                l2[y * 8 + x] = if x < 4 { 10 } else { 11 };
            }
        }
        MaskPyramid::from_label_maps(8, 8, vec![vec![l1, l2]]).unwrap()
    }

    #[test]
    fn balanced_quota_is_exact() {
        let p = two_mask_pyramid();
        let cfg =
            SamplerConfig { random_pixels: 0, balanced_pixels: 4, masks_per_iter: 2, seed: 0 };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let batch = sample_batch(0, &p, &cfg, &mut rng).unwrap();
        assert_eq!(batch.len(), 4);
        let left = batch.iter().filter(|&&(x, _)| x < 4).count();
        assert_eq!(left, 2, "two pixels from each selected mask");
    }

    #[test]
    fn tiny_mask_deduplicates_to_one_pixel() {
        // Mask 20 owns a single pixel; quota 5 with replacement collapses.
        let mut l1 = vec![1u32; 16];
        let mut l2 = vec![0u32; 16];
        l2[3] = 20;
        for (i, v) in l2.iter_mut().enumerate() {
            if i != 3 {
                *v = 21;
            }
        }
        l1[0] = 1;
        let p = MaskPyramid::from_label_maps(4, 4, vec![vec![l1, l2]]).unwrap();
        let cfg =
            SamplerConfig { random_pixels: 0, balanced_pixels: 10, masks_per_iter: 2, seed: 0 };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let batch = sample_batch(0, &p, &cfg, &mut rng).unwrap();
        let from_tiny = batch.iter().filter(|&&(x, y)| y * 4 + x == 3).count();
        assert_eq!(from_tiny, 1);
    }

    #[test]
    fn unlabeled_pixels_never_sampled() {
        let mut l1 = vec![0u32; 64];
        for (i, v) in l1.iter_mut().enumerate() {
            if i % 3 == 0 {
                *v = 1;
            }
        }
        let p = MaskPyramid::from_label_maps(8, 8, vec![vec![l1.clone()]]).unwrap();
        let cfg = SamplerConfig { random_pixels: 30, balanced_pixels: 30, ..SamplerConfig::desk() };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let batch = sample_batch(0, &p, &cfg, &mut rng).unwrap();
            assert!(!batch.is_empty());
            for (x, y) in batch {
                assert_ne!(l1[(y * 8 + x) as usize], 0);
            }
        }
    }

    #[test]
    fn empty_view_is_an_error() {
        let p = MaskPyramid::from_label_maps(2, 2, vec![vec![vec![1; 4]], vec![vec![0; 4]]])
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_batch(1, &p, &SamplerConfig::desk(), &mut rng).is_err());
    }

    #[test]
    fn same_seed_reproduces_the_batch() {
        let p = two_mask_pyramid();
        let cfg = SamplerConfig { random_pixels: 10, balanced_pixels: 20, ..SamplerConfig::desk() };
        let a = sample_batch(0, &p, &cfg, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let b = sample_batch(0, &p, &cfg, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn batch_size_is_bounded_by_the_budget() {
        let p = two_mask_pyramid();
        let cfg =
            SamplerConfig { random_pixels: 40, balanced_pixels: 40, masks_per_iter: 2, seed: 0 };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let batch = sample_batch(0, &p, &cfg, &mut rng).unwrap();
        assert!(batch.len() <= 80);
    }

    /// Small masks receive far more than their area share: one 90%-area mask
    /// against ten 1%-area masks, measured over many iterations.
    #[test]
    fn small_masks_are_oversampled_relative_to_area() {
        let side = 40u32;
        let pixels = (side * side) as usize; // 1600
        let mut l1 = vec![1u32; pixels];
        // Ten 16-pixel masks (1% each) in the top rows, the rest one mask.
        let mut l2 = vec![100u32; pixels];
        for m in 0..10u32 {
            for k in 0..16u32 {
                l2[(m * 16 + k) as usize] = m + 1;
            }
        }
        for v in l1.iter_mut() {
            *v = 1;
        }
        let p = MaskPyramid::from_label_maps(side, side, vec![vec![l1, l2]]).unwrap();
        let cfg = SamplerConfig {
            random_pixels: 20,
            balanced_pixels: 80,
            masks_per_iter: 11,
            seed: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut small = 0u64;
        let mut total = 0u64;
        for _ in 0..10_000 {
            let batch = sample_batch(0, &p, &cfg, &mut rng).unwrap();
            total += batch.len() as u64;
            small += batch
                .iter()
                .filter(|&&(x, y)| {
                    let id = p.label_map(0, 2)[(y * side + x) as usize];
                    (1..=10).contains(&id)
                })
                .count() as u64;
        }
        let share = small as f64 / total as f64;
        let area_share = 160.0 / 1600.0;
        assert!(
            share >= 5.0 * area_share,
            "small-mask share {share:.3} not 5x area share {area_share:.3}"
        );
    }
}
