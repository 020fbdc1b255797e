//! Brute-force feature renderer: the oracle twin of the tiled compositor.
//!
//! Every pixel iterates every splat in global depth order — no tiles, no
//! extent or far-plane culling, only the near plane. The projection math is
//! written out in scalar form, independent of the production path, so the
//! two implementations can check each other.

use crate::render::composite::{ALPHA_CLAMP, ALPHA_SKIP, TRANSMITTANCE_EPS};
use crate::render::FeatureMap;
use crate::scene::{Camera, GaussianScene};

struct OracleSplat {
    depth: f64,
    index: usize,
    mean: [f64; 2],
    inv_cov: [f64; 3],
    opacity: f64,
}

fn quat_to_matrix(q: [f64; 4]) -> [[f64; 3]; 3] {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

fn mat_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn transpose(a: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in a.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            out[j][i] = v;
        }
    }
    out
}

/// Evaluate the compositing sum directly at the given pixels, with the same
/// alpha clamp, skip threshold and termination as the fast path.
pub fn brute_force_render(
    scene: &GaussianScene,
    camera: &Camera,
    pixels: &[(u32, u32)],
) -> FeatureMap {
    let dim = scene.layout.total_dim();

    let mut splats: Vec<OracleSplat> = Vec::new();
    for (i, g) in scene.gaussians.iter().enumerate() {
        let p = camera.to_camera(g.position);
        if p[2] <= camera.near {
            continue;
        }
        let (x, y, z) = (p[0], p[1], p[2]);
        let mean = [camera.fx * x / z + camera.cx, camera.fy * y / z + camera.cy];

        let r = quat_to_matrix(g.rotation);
        let s = [g.log_scale[0].exp(), g.log_scale[1].exp(), g.log_scale[2].exp()];
        let mut m = r;
        for row in &mut m {
            for (k, cell) in row.iter_mut().enumerate() {
                *cell *= s[k];
            }
        }
        let sigma_world = mat_mul(&m, &transpose(&m));
        let rw = camera.rotation;
        let sigma_cam = mat_mul(&mat_mul(&rw, &sigma_world), &transpose(&rw));

        let j = [
            [camera.fx / z, 0.0, -camera.fx * x / (z * z)],
            [0.0, camera.fy / z, -camera.fy * y / (z * z)],
        ];
        let mut a = [[0.0; 2]; 3]; // sigma_cam * j^T
        for (row, arow) in a.iter_mut().enumerate() {
            for (col, cell) in arow.iter_mut().enumerate() {
                *cell = (0..3).map(|k| sigma_cam[row][k] * j[col][k]).sum();
            }
        }
        let mut cov = [[0.0; 2]; 2];
        for (row, jrow) in j.iter().enumerate() {
            for col in 0..2 {
                cov[row][col] = (0..3).map(|k| jrow[k] * a[k][col]).sum();
            }
        }
        cov[0][0] += 0.3;
        cov[1][1] += 0.3;
        let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
        if !(det > 0.0 && cov[0][0] > 0.0) || !det.is_finite() {
            continue;
        }
        let inv_cov = [cov[1][1] / det, -cov[0][1] / det, cov[0][0] / det];
        splats.push(OracleSplat { depth: z, index: i, mean, inv_cov, opacity: g.opacity() });
    }
    splats.sort_by(|l, r| l.depth.partial_cmp(&r.depth).unwrap().then(l.index.cmp(&r.index)));

    let mut features = vec![0.0; pixels.len() * dim];
    let mut transmittance = vec![1.0; pixels.len()];
    for (p, &(px, py)) in pixels.iter().enumerate() {
        let cx = px as f64 + 0.5;
        let cy = py as f64 + 0.5;
        let row = &mut features[p * dim..(p + 1) * dim];
        let mut t = 1.0;
        for s in &splats {
            let dx = cx - s.mean[0];
            let dy = cy - s.mean[1];
            let q = s.inv_cov[0] * dx * dx + 2.0 * s.inv_cov[1] * dx * dy + s.inv_cov[2] * dy * dy;
            let raw = s.opacity * (-0.5 * q).exp();
            let alpha = if raw >= ALPHA_CLAMP { ALPHA_CLAMP } else { raw };
            if alpha < ALPHA_SKIP {
                continue;
            }
            let g = &scene.gaussians[s.index];
            let w = alpha * t;
            for (d, cell) in row.iter_mut().enumerate() {
                *cell += crate::scene::logistic(g.feature_logits[d]) * w;
            }
            t *= 1.0 - alpha;
            if t < TRANSMITTANCE_EPS {
                break;
            }
        }
        transmittance[p] = t;
    }
    FeatureMap { dim, pixels: pixels.to_vec(), features, transmittance }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::{bin_splats, composite_forward, frame_pixels, project};
    use crate::scene::{Gaussian, GaussianScene, LevelLayout};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_scene(rng: &mut ChaCha8Rng, count: usize, dim_spec: &[u8]) -> GaussianScene {
        let layout = LevelLayout::new(dim_spec).unwrap();
        let dim = layout.total_dim();
        let gaussians: Vec<Gaussian> = (0..count)
            .map(|_| {
                let axis: [f64; 3] =
                    [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let n = (axis.iter().map(|a| a * a).sum::<f64>()).sqrt().max(1e-9);
                let (sh, ch) = ((angle / 2.0).sin(), (angle / 2.0).cos());
                Gaussian {
                    position: [
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(2.0..6.0),
                    ],
                    log_scale: [
                        rng.gen_range(-2.2..-0.7),
                        rng.gen_range(-2.2..-0.7),
                        rng.gen_range(-2.2..-0.7),
                    ],
                    rotation: [ch, sh * axis[0] / n, sh * axis[1] / n, sh * axis[2] / n],
                    opacity_logit: rng.gen_range(-2.0..3.0),
                    color: [rng.gen_range(0.0..1.0); 3],
                    feature_logits: (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect(),
                }
            })
            .collect();
        GaussianScene::new(gaussians, layout).unwrap()
    }

    #[test]
    fn empty_pixels_render_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let scene = random_scene(&mut rng, 3, &[2]);
        let cam = crate::scene::Camera::look_at(
            [0.0, 0.0, 20.0],
            [0.0, 0.0, 21.0],
            [0.0, 1.0, 0.0],
            30.0,
            16,
            16,
        );
        let map = brute_force_render(&scene, &cam, &[(0, 0)]);
        assert_eq!(map.row(0), &[0.0, 0.0]);
    }

    #[test]
    fn agrees_with_tiled_compositor() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..5 {
            let scene = random_scene(&mut rng, 120, &[3, 3]);
            let cam = crate::scene::Camera::look_at(
                [
                    rng.gen_range(-0.3..0.3),
                    rng.gen_range(-0.3..0.3),
                    rng.gen_range(-0.5..0.0),
                ],
                [0.0, 0.0, 3.0],
                [0.0, 1.0, 0.0],
                rng.gen_range(20.0..40.0),
                32,
                32,
            );
            let pixels = frame_pixels(32, 32);
            let oracle = brute_force_render(&scene, &cam, &pixels);
            let list = project(&scene, &cam);
            let bins = bin_splats(&list);
            let fast = composite_forward(&list, &bins, &pixels);
            for (i, (a, b)) in oracle.features.iter().zip(&fast.features).enumerate() {
                assert!(
                    (a - b).abs() <= 1e-6,
                    "trial {trial}, component {i}: oracle {a} vs fast {b}"
                );
            }
        }
    }
}
