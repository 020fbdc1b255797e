//! Front-to-back alpha compositing of splat features, with analytic
//! gradients for feature and opacity logits.
//!
//! The fast path bins splats into 16x16 pixel tiles. All parallel loops use
//! fixed-size chunks combined in a fixed order, so results are bit-identical
//! for any worker count.

use rayon::prelude::*;

use crate::render::project::SplatList;

/// Upper clamp applied to every per-splat alpha.
pub const ALPHA_CLAMP: f64 = 0.99;
/// Contributions below this alpha are skipped.
pub const ALPHA_SKIP: f64 = 1.0 / 255.0;
/// Compositing stops once transmittance falls below this.
pub const TRANSMITTANCE_EPS: f64 = 1e-4;
/// Tile edge in pixels.
pub const TILE_SIZE: u32 = 16;

const PIXEL_CHUNK: usize = 64;

/// Depth-ordered splat indices per tile.
#[derive(Debug, Clone)]
pub struct TileBins {
    pub tile_size: u32,
    pub tiles_x: u32,
    pub tiles_y: u32,
    lists: Vec<Vec<u32>>,
}

impl TileBins {
    pub fn candidates(&self, x: u32, y: u32) -> &[u32] {
        let tx = x / self.tile_size;
        let ty = y / self.tile_size;
        &self.lists[(ty * self.tiles_x + tx) as usize]
    }
}

/// Assign each splat to every tile its extent radius overlaps. Iterating
/// splats in list order keeps each tile's candidates depth-sorted.
pub fn bin_splats(list: &SplatList) -> TileBins {
    let ts = TILE_SIZE;
    let tiles_x = list.width.div_ceil(ts).max(1);
    let tiles_y = list.height.div_ceil(ts).max(1);
    let mut lists = vec![Vec::new(); (tiles_x * tiles_y) as usize];
    for (i, s) in list.splats.iter().enumerate() {
        let x0 = ((s.mean[0] - s.radius).floor().max(0.0) as u32 / ts).min(tiles_x - 1);
        let x1 = ((s.mean[0] + s.radius).ceil().max(0.0) as u32 / ts).min(tiles_x - 1);
        let y0 = ((s.mean[1] - s.radius).floor().max(0.0) as u32 / ts).min(tiles_y - 1);
        let y1 = ((s.mean[1] + s.radius).ceil().max(0.0) as u32 / ts).min(tiles_y - 1);
        for ty in y0..=y1 {
            for tx in x0..=x1 {
                lists[(ty * tiles_x + tx) as usize].push(i as u32);
            }
        }
    }
    TileBins { tile_size: ts, tiles_x, tiles_y, lists }
}

/// Per-pixel pre-binarized features and final transmittance, rows aligned
/// with the requested pixel order.
#[derive(Debug, Clone)]
pub struct FeatureMap {
    pub dim: usize,
    pub pixels: Vec<(u32, u32)>,
    /// Row-major, one row of `dim` per pixel.
    pub features: Vec<f64>,
    pub transmittance: Vec<f64>,
}

impl FeatureMap {
    pub fn row(&self, pixel: usize) -> &[f64] {
        &self.features[pixel * self.dim..(pixel + 1) * self.dim]
    }
}

/// Gradients of a scalar loss w.r.t. the trainable logits, indexed by
/// gaussian. Assumes splat feature rows are sigmoid activations.
#[derive(Debug, Clone)]
pub struct RenderGrads {
    pub feature_logits: Vec<f64>,
    pub opacity_logits: Vec<f64>,
    pub dim: usize,
}

#[inline]
fn walk_pixel<V>(list: &SplatList, candidates: &[u32], x: u32, y: u32, mut visit: V) -> f64
where
    V: FnMut(u32, f64, f64, bool),
{
    let px = x as f64 + 0.5;
    let py = y as f64 + 0.5;
    let mut t = 1.0;
    for &si in candidates {
        let s = &list.splats[si as usize];
        let dx = px - s.mean[0];
        let dy = py - s.mean[1];
        let q = s.inv_cov[0] * dx * dx + 2.0 * s.inv_cov[1] * dx * dy + s.inv_cov[2] * dy * dy;
        let raw = s.opacity * (-0.5 * q).exp();
        let (alpha, clamped) = if raw >= ALPHA_CLAMP { (ALPHA_CLAMP, true) } else { (raw, false) };
        if alpha < ALPHA_SKIP {
            continue;
        }
        visit(si, alpha, t, clamped);
        t *= 1.0 - alpha;
        if t < TRANSMITTANCE_EPS {
            break;
        }
    }
    t
}

/// Composite splat features at the given pixels (front to back, Eq. of the
/// standard splatting pipeline). Empty pixels keep zero features and unit
/// transmittance.
pub fn composite_forward(list: &SplatList, bins: &TileBins, pixels: &[(u32, u32)]) -> FeatureMap {
    let dim = list.dim;
    let mut features = vec![0.0; pixels.len() * dim];
    let mut transmittance = vec![1.0; pixels.len()];
    features
        .par_chunks_mut(PIXEL_CHUNK * dim)
        .zip(transmittance.par_chunks_mut(PIXEL_CHUNK))
        .zip(pixels.par_chunks(PIXEL_CHUNK))
        .for_each(|((feat_chunk, t_chunk), px_chunk)| {
            for (k, &(x, y)) in px_chunk.iter().enumerate() {
                let row = &mut feat_chunk[k * dim..(k + 1) * dim];
                let cands = bins.candidates(x, y);
                t_chunk[k] = walk_pixel(list, cands, x, y, |si, alpha, t, _| {
                    let f = list.feature_row(si as usize);
                    let w = alpha * t;
                    for d in 0..dim {
                        row[d] += f[d] * w;
                    }
                });
            }
        });
    FeatureMap { dim, pixels: pixels.to_vec(), features, transmittance }
}

/// Composite per-splat colors at the given pixels; returns RGB rows and
/// final transmittance.
pub fn composite_color(
    list: &SplatList,
    bins: &TileBins,
    pixels: &[(u32, u32)],
) -> (Vec<[f64; 3]>, Vec<f64>) {
    let mut colors = vec![[0.0; 3]; pixels.len()];
    let mut transmittance = vec![1.0; pixels.len()];
    colors
        .par_chunks_mut(PIXEL_CHUNK)
        .zip(transmittance.par_chunks_mut(PIXEL_CHUNK))
        .zip(pixels.par_chunks(PIXEL_CHUNK))
        .for_each(|((c_chunk, t_chunk), px_chunk)| {
            for (k, &(x, y)) in px_chunk.iter().enumerate() {
                let cands = bins.candidates(x, y);
                t_chunk[k] = walk_pixel(list, cands, x, y, |si, alpha, t, _| {
                    let c = list.splats[si as usize].color;
                    let w = alpha * t;
                    for d in 0..3 {
                        c_chunk[k][d] += c[d] * w;
                    }
                });
            }
        });
    (colors, transmittance)
}

/// Per pixel, the gaussian contributing the largest blend weight, plus the
/// final transmittance. `None` where nothing contributes.
pub fn dominant_contributors(
    list: &SplatList,
    bins: &TileBins,
    pixels: &[(u32, u32)],
) -> (Vec<Option<u32>>, Vec<f64>) {
    let mut winners = vec![None; pixels.len()];
    let mut transmittance = vec![1.0; pixels.len()];
    winners
        .par_chunks_mut(PIXEL_CHUNK)
        .zip(transmittance.par_chunks_mut(PIXEL_CHUNK))
        .zip(pixels.par_chunks(PIXEL_CHUNK))
        .for_each(|((w_chunk, t_chunk), px_chunk)| {
            for (k, &(x, y)) in px_chunk.iter().enumerate() {
                let mut best = f64::NEG_INFINITY;
                let cands = bins.candidates(x, y);
                t_chunk[k] = walk_pixel(list, cands, x, y, |si, alpha, t, _| {
                    let w = alpha * t;
                    if w > best {
                        best = w;
                        w_chunk[k] = Some(list.splats[si as usize].gaussian);
                    }
                });
            }
        });
    (winners, transmittance)
}

/// Backward pass of [`composite_forward`].
///
/// `d_features` holds dLoss/dF_p rows aligned with `pixels`. Per-pixel alphas
/// and transmittances are recomputed front to back, then a back-to-front
/// sweep accumulates the suffix sums that alpha gradients need. Gradients are
/// chained through alpha's dependence on opacity (zero at the clamp) and
/// through both logit parameterizations. Geometry receives no gradient.
pub fn composite_backward(
    list: &SplatList,
    bins: &TileBins,
    pixels: &[(u32, u32)],
    d_features: &[f64],
    n_gaussians: usize,
) -> RenderGrads {
    let dim = list.dim;
    assert_eq!(
        d_features.len(),
        pixels.len() * dim,
        "gradient rows do not match the forward pixel set"
    );

    let chunks: Vec<(Vec<f64>, Vec<f64>)> = pixels
        .par_chunks(PIXEL_CHUNK)
        .zip(d_features.par_chunks(PIXEL_CHUNK * dim))
        .map(|(px_chunk, dldf_chunk)| {
            let mut d_feat = vec![0.0; n_gaussians * dim];
            let mut d_op = vec![0.0; n_gaussians];
            let mut contribs: Vec<(u32, f64, f64, bool)> = Vec::new();
            let mut suffix = vec![0.0; dim];
            for (k, &(x, y)) in px_chunk.iter().enumerate() {
                let dldf = &dldf_chunk[k * dim..(k + 1) * dim];
                contribs.clear();
                let cands = bins.candidates(x, y);
                walk_pixel(list, cands, x, y, |si, alpha, t, clamped| {
                    contribs.push((si, alpha, t, clamped));
                });
                suffix.iter_mut().for_each(|s| *s = 0.0);
                for &(si, alpha, t_before, clamped) in contribs.iter().rev() {
                    let s = &list.splats[si as usize];
                    let g = s.gaussian as usize;
                    let f = list.feature_row(si as usize);
                    let w = alpha * t_before;
                    let mut d_alpha = 0.0;
                    for d in 0..dim {
                        // dF/df_i = alpha * T_i per component; chain
                        // through the feature sigmoid.
                        d_feat[g * dim + d] += dldf[d] * w * f[d] * (1.0 - f[d]);
                        // dF/dalpha_i = f_i T_i - suffix / (1 - alpha_i).
                        d_alpha += dldf[d] * (f[d] * t_before - suffix[d] / (1.0 - alpha));
                    }
                    if !clamped {
                        // dalpha/do = alpha/o off the clamp; do/dlogit =
                        // o(1-o), so the product is alpha (1 - o).
                        d_op[g] += d_alpha * alpha * (1.0 - s.opacity);
                    }
                    for d in 0..dim {
                        suffix[d] += f[d] * w;
                    }
                }
            }
            (d_feat, d_op)
        })
        .collect();

    let mut feature_logits = vec![0.0; n_gaussians * dim];
    let mut opacity_logits = vec![0.0; n_gaussians];
    for (df, dop) in chunks {
        for (acc, v) in feature_logits.iter_mut().zip(df) {
            *acc += v;
        }
        for (acc, v) in opacity_logits.iter_mut().zip(dop) {
            *acc += v;
        }
    }
    RenderGrads { feature_logits, opacity_logits, dim }
}

/// All pixel coordinates of a frame in row-major order.
pub fn frame_pixels(width: u32, height: u32) -> Vec<(u32, u32)> {
    (0..height).flat_map(|y| (0..width).map(move |x| (x, y))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::project::{project, Splat};
    use crate::scene::{Camera, Gaussian, GaussianScene, LevelLayout};

    fn camera(size: u32) -> Camera {
        Camera::new(
            50.0,
            50.0,
            size as f64 / 2.0,
            size as f64 / 2.0,
            size,
            size,
            0.1,
            1.0e6,
            [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            [0.0, 0.0, 0.0],
        )
        .unwrap()
    }

    /// A synthetic splat exactly on a pixel center with a huge flat profile,
    /// so its alpha equals its opacity at that pixel.
    fn flat_splat(gaussian: u32, opacity: f64, depth: f64) -> Splat {
        Splat {
            gaussian,
            mean: [8.5, 8.5],
            cov: [1e6, 0.0, 1e6],
            inv_cov: [1e-6, 0.0, 1e-6],
            depth,
            opacity,
            radius: 1e4,
            color: [1.0, 1.0, 1.0],
        }
    }

    fn list_of(splats: Vec<Splat>, features: Vec<f64>, dim: usize) -> SplatList {
        SplatList { splats, features, dim, width: 16, height: 16, degenerate_culled: 0 }
    }

    #[test]
    fn single_opaque_splat_clamps_alpha() {
        // Opacity 1.0 is unreachable through the logit, so drive it to the
        // clamp with a value above 0.99.
        let list = list_of(vec![flat_splat(0, 0.999, 1.0)], vec![1.0, 0.0], 2);
        let bins = bin_splats(&list);
        let map = composite_forward(&list, &bins, &[(8, 8)]);
        assert!((map.row(0)[0] - ALPHA_CLAMP).abs() < 1e-12);
        assert_eq!(map.row(0)[1], 0.0);
    }

    #[test]
    fn two_coincident_half_alpha_splats() {
        // F = 0.5*1 + 0.5*0.5*0 on the first bit = 0.5.
        let list = list_of(
            vec![flat_splat(0, 0.5, 1.0), flat_splat(1, 0.5, 2.0)],
            vec![1.0, 0.0],
            1,
        );
        let bins = bin_splats(&list);
        let map = composite_forward(&list, &bins, &[(8, 8)]);
        assert!((map.row(0)[0] - 0.5).abs() < 1e-12);
        assert!((map.transmittance[0] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn uncovered_pixel_stays_zero() {
        let list = list_of(vec![], vec![], 2);
        let bins = bin_splats(&list);
        let map = composite_forward(&list, &bins, &[(3, 3)]);
        assert_eq!(map.row(0), &[0.0, 0.0]);
        assert_eq!(map.transmittance[0], 1.0);
    }

    #[test]
    fn transmittance_bounds_features() {
        let layout = LevelLayout::new(&[3]).unwrap();
        let gaussians: Vec<Gaussian> = (0..20)
            .map(|i| Gaussian {
                position: [(i % 5) as f64 * 0.2 - 0.4, (i / 5) as f64 * 0.2 - 0.4, 3.0],
                log_scale: [-1.2; 3],
                rotation: [1.0, 0.0, 0.0, 0.0],
                opacity_logit: 1.0,
                color: [0.5; 3],
                feature_logits: vec![2.0, -2.0, 0.3],
            })
            .collect();
        let scene = GaussianScene::new(gaussians, layout).unwrap();
        let cam = camera(32);
        let list = project(&scene, &cam);
        let bins = bin_splats(&list);
        let map = composite_forward(&list, &bins, &frame_pixels(32, 32));
        for p in 0..map.pixels.len() {
            let cover = 1.0 - map.transmittance[p];
            for &f in map.row(p) {
                assert!(f >= 0.0 && f <= cover + 1e-12);
            }
        }
    }

    #[test]
    fn single_splat_backward_gradient() {
        // One splat, upstream gradient 1: dLoss/df = alpha * T = alpha, and
        // the logit chain multiplies by f(1-f).
        let o = 0.7;
        let f = 0.6;
        let mut list = list_of(vec![flat_splat(0, o, 1.0)], vec![f], 1);
        list.splats[0].opacity = o;
        let bins = bin_splats(&list);
        let grads = composite_backward(&list, &bins, &[(8, 8)], &[1.0], 1);
        let expect_feat = o * f * (1.0 - f);
        assert!((grads.feature_logits[0] - expect_feat).abs() < 1e-12);
        // d_alpha = f*T = f; chain alpha*(1-o).
        let expect_op = f * o * (1.0 - o);
        assert!((grads.opacity_logits[0] - expect_op).abs() < 1e-12);
    }

    #[test]
    fn clamped_alpha_gets_zero_opacity_gradient() {
        let list = list_of(vec![flat_splat(0, 0.995, 1.0)], vec![0.5], 1);
        let bins = bin_splats(&list);
        let grads = composite_backward(&list, &bins, &[(8, 8)], &[1.0], 1);
        assert_eq!(grads.opacity_logits[0], 0.0);
        assert!(grads.feature_logits[0] > 0.0);
    }

    /// Central finite differences through project + composite on a random
    /// scene: perturb each logit, re-render, and compare against the analytic
    /// backward under a fixed random upstream gradient.
    #[test]
    fn backward_matches_finite_differences() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let layout = LevelLayout::new(&[2, 2]).unwrap();
        let dim = 4;
        let gaussians: Vec<Gaussian> = (0..20)
            .map(|_| Gaussian {
                position: [
                    rng.gen_range(-0.6..0.6),
                    rng.gen_range(-0.6..0.6),
                    rng.gen_range(2.0..4.0),
                ],
                log_scale: [rng.gen_range(-1.8..-0.8); 3],
                rotation: [1.0, 0.0, 0.0, 0.0],
                opacity_logit: rng.gen_range(-1.0..2.0),
                color: [0.5; 3],
                feature_logits: (0..dim).map(|_| rng.gen_range(-1.5..1.5)).collect(),
            })
            .collect();
        let scene = GaussianScene::new(gaussians, layout).unwrap();
        let cam = camera(8);
        let pixels = frame_pixels(8, 8);
        let upstream: Vec<f64> =
            (0..pixels.len() * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let render = |s: &GaussianScene| -> f64 {
            let list = project(s, &cam);
            let bins = bin_splats(&list);
            let map = composite_forward(&list, &bins, &pixels);
            map.features.iter().zip(&upstream).map(|(f, u)| f * u).sum()
        };

        let list = project(&scene, &cam);
        let bins = bin_splats(&list);
        let grads = composite_backward(&list, &bins, &pixels, &upstream, scene.len());

        let h = 1e-4;
        let mut checked = 0;
        for gi in 0..scene.len() {
            for d in 0..=dim {
                let mut plus = scene.clone();
                let mut minus = scene.clone();
                let analytic = if d < dim {
                    plus.gaussians[gi].feature_logits[d] += h;
                    minus.gaussians[gi].feature_logits[d] -= h;
                    grads.feature_logits[gi * dim + d]
                } else {
                    plus.gaussians[gi].opacity_logit += h;
                    minus.gaussians[gi].opacity_logit -= h;
                    grads.opacity_logits[gi]
                };
                let fd = (render(&plus) - render(&minus)) / (2.0 * h);
                let denom = analytic.abs().max(fd.abs()).max(1e-6);
                assert!(
                    (analytic - fd).abs() / denom < 1e-4,
                    "gaussian {gi} channel {d}: analytic {analytic} vs fd {fd}"
                );
                checked += 1;
            }
        }
        assert_eq!(checked, scene.len() * (dim + 1));
    }

    #[test]
    fn opacity_gradient_direction_raises_coverage() {
        // Increasing opacity should increase a positive-weighted feature sum.
        let list = list_of(vec![flat_splat(0, 0.4, 1.0)], vec![0.9], 1);
        let bins = bin_splats(&list);
        let grads = composite_backward(&list, &bins, &[(8, 8)], &[1.0], 1);
        assert!(grads.opacity_logits[0] > 0.0);
    }
}
