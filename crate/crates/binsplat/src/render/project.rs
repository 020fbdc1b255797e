//! Projection of 3D gaussians to screen-space splats.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Quaternion, UnitQuaternion, Vector3};

use crate::scene::{unpack_code, Camera, CodeTable, GaussianScene};

/// Low-pass regularizer added to every screen-space covariance diagonal.
pub const COV_REGULARIZER: f64 = 0.3;
/// Cull/bin radius in units of the screen-space standard deviation. 3.5
/// sigma strictly covers the alpha-skip radius (about 3.33 sigma at full
/// opacity), so extent culling can never drop a splat that the per-pixel
/// alpha test would have kept.
pub const CULL_SIGMA: f64 = 3.5;

/// One projected gaussian. Covariances are symmetric 2x2 stored as
/// (xx, xy, yy) in pixel^2.
#[derive(Debug, Clone)]
pub struct Splat {
    /// Index into the source scene.
    pub gaussian: u32,
    pub mean: [f64; 2],
    pub cov: [f64; 3],
    pub inv_cov: [f64; 3],
    /// View-space depth, strictly inside (near, far).
    pub depth: f64,
    pub opacity: f64,
    /// Binning radius in pixels: CULL_SIGMA times the largest eigenvalue root.
    pub radius: f64,
    pub color: [f64; 3],
}

/// Depth-sorted visible splats plus their per-splat feature rows.
#[derive(Debug, Clone)]
pub struct SplatList {
    pub splats: Vec<Splat>,
    /// Row-major feature matrix, one row of `dim` per splat.
    pub features: Vec<f64>,
    pub dim: usize,
    pub width: u32,
    pub height: u32,
    /// Splats dropped because the regularized covariance was not invertible.
    pub degenerate_culled: usize,
}

impl SplatList {
    pub fn feature_row(&self, splat: usize) -> &[f64] {
        &self.features[splat * self.dim..(splat + 1) * self.dim]
    }
}

enum FeatureSource<'a> {
    Activations,
    Codes(&'a CodeTable),
}

/// Project the scene for a camera: world covariance from scale and rotation,
/// EWA perspective Jacobian, screen covariance regularized by +0.3 I. Culls
/// gaussians outside (near, far) or whose screen extent misses the image; the
/// result is sorted ascending by depth with ties broken by gaussian index.
/// Feature rows are the sigmoid activations of the feature logits.
pub fn project(scene: &GaussianScene, camera: &Camera) -> SplatList {
    project_impl(scene, camera, FeatureSource::Activations)
}

/// Like [`project`], but feature rows are the 0/1 bits of each gaussian's
/// packed code. Used for class-map rendering from the stored artifact.
pub fn project_with_codes(scene: &GaussianScene, camera: &Camera, codes: &CodeTable) -> SplatList {
    assert_eq!(codes.len(), scene.len(), "code table size does not match scene");
    project_impl(scene, camera, FeatureSource::Codes(codes))
}

fn project_impl(scene: &GaussianScene, camera: &Camera, source: FeatureSource) -> SplatList {
    let dim = scene.layout.total_dim();
    let w_rot = Matrix3::from_iterator(
        (0..3).flat_map(|c| (0..3).map(move |r| camera.rotation[r][c])),
    );
    let mut splats = Vec::new();
    let mut degenerate = 0usize;
    for (i, g) in scene.gaussians.iter().enumerate() {
        let p_cam = camera.to_camera(g.position);
        let z = p_cam[2];
        if z <= camera.near || z >= camera.far {
            continue;
        }
        let (x, y) = (p_cam[0], p_cam[1]);
        let mean = [camera.fx * x / z + camera.cx, camera.fy * y / z + camera.cy];

        let quat = UnitQuaternion::from_quaternion(Quaternion::new(
            g.rotation[0],
            g.rotation[1],
            g.rotation[2],
            g.rotation[3],
        ));
        let r = quat.to_rotation_matrix();
        let s = Vector3::new(g.log_scale[0].exp(), g.log_scale[1].exp(), g.log_scale[2].exp());
        let m = r.matrix() * Matrix3::from_diagonal(&s);
        let sigma_world = m * m.transpose();

        let z2 = z * z;
        let jacobian = Matrix2x3::new(
            camera.fx / z,
            0.0,
            -camera.fx * x / z2,
            0.0,
            camera.fy / z,
            -camera.fy * y / z2,
        );
        let t = jacobian * w_rot;
        let sigma = t * sigma_world * t.transpose() + Matrix2::identity() * COV_REGULARIZER;
        let (a, b, c) = (sigma[(0, 0)], sigma[(0, 1)], sigma[(1, 1)]);
        let det = a * c - b * b;
        if !(det > 0.0 && a > 0.0) || !det.is_finite() {
            degenerate += 1;
            continue;
        }
        let inv_cov = [c / det, -b / det, a / det];

        let mid = 0.5 * (a + c);
        let lambda_max = mid + (mid * mid - det).max(0.0).sqrt();
        let radius = CULL_SIGMA * lambda_max.sqrt();
        if mean[0] + radius < 0.0
            || mean[0] - radius > camera.width as f64
            || mean[1] + radius < 0.0
            || mean[1] - radius > camera.height as f64
        {
            continue;
        }

        splats.push(Splat {
            gaussian: i as u32,
            mean,
            cov: [a, b, c],
            inv_cov,
            depth: z,
            opacity: g.opacity(),
            radius,
            color: g.color,
        });
    }
    splats.sort_by(|l, r| {
        l.depth.partial_cmp(&r.depth).unwrap().then(l.gaussian.cmp(&r.gaussian))
    });

    let mut features = Vec::with_capacity(splats.len() * dim);
    for s in &splats {
        let g = &scene.gaussians[s.gaussian as usize];
        match source {
            FeatureSource::Activations => {
                features.extend(g.feature_logits.iter().map(|&l| crate::scene::logistic(l)));
            }
            FeatureSource::Codes(table) => {
                features.extend(unpack_code(table.codes[s.gaussian as usize], &scene.layout));
            }
        }
    }

    SplatList {
        splats,
        features,
        dim,
        width: camera.width,
        height: camera.height,
        degenerate_culled: degenerate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Gaussian, GaussianScene, LevelLayout};

    fn gaussian_at(position: [f64; 3], log_scale: f64) -> Gaussian {
        Gaussian {
            position,
            log_scale: [log_scale; 3],
            rotation: [1.0, 0.0, 0.0, 0.0],
            opacity_logit: 0.0,
            color: [0.5; 3],
            feature_logits: vec![0.0; 2],
        }
    }

    fn identity_camera(fx: f64, size: u32) -> Camera {
        Camera::new(
            fx,
            fx,
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

    #[test]
    fn isotropic_on_axis_covariance_matches_pinhole_closed_form() {
        // Identity rotation, isotropic scale sigma, on the optical axis at
        // depth z: screen covariance should be (fx * sigma / z)^2 * I plus
        // the regularizer.
        let sigma = 0.2f64;
        let z = 4.0;
        let fx = 100.0;
        let layout = LevelLayout::new(&[2]).unwrap();
        let scene =
            GaussianScene::new(vec![gaussian_at([0.0, 0.0, z], sigma.ln())], layout).unwrap();
        let cam = identity_camera(fx, 64);
        let list = project(&scene, &cam);
        assert_eq!(list.splats.len(), 1);
        let expected = (fx * sigma / z).powi(2) + COV_REGULARIZER;
        let s = &list.splats[0];
        assert!((s.cov[0] - expected).abs() < 1e-9, "xx {} vs {expected}", s.cov[0]);
        assert!((s.cov[2] - expected).abs() < 1e-9);
        assert!(s.cov[1].abs() < 1e-9);
    }

    #[test]
    fn behind_camera_is_culled() {
        let layout = LevelLayout::new(&[2]).unwrap();
        let scene =
            GaussianScene::new(vec![gaussian_at([0.0, 0.0, -3.0], -1.0)], layout).unwrap();
        let list = project(&scene, &identity_camera(50.0, 32));
        assert!(list.splats.is_empty());
        assert_eq!(list.degenerate_culled, 0);
    }

    #[test]
    fn sorted_by_depth() {
        let layout = LevelLayout::new(&[2]).unwrap();
        let scene = GaussianScene::new(
            vec![gaussian_at([0.0, 0.0, 2.0], -1.0), gaussian_at([0.0, 0.0, 1.0], -1.0)],
            layout,
        )
        .unwrap();
        let list = project(&scene, &identity_camera(50.0, 32));
        assert_eq!(list.splats.len(), 2);
        assert_eq!(list.splats[0].depth, 1.0);
        assert_eq!(list.splats[1].depth, 2.0);
        assert_eq!(list.splats[0].gaussian, 1);
    }

    #[test]
    fn equal_depth_ties_break_by_index() {
        let layout = LevelLayout::new(&[2]).unwrap();
        let g = gaussian_at([0.0, 0.0, 2.0], -1.0);
        let scene = GaussianScene::new(vec![g.clone(), g.clone(), g], layout).unwrap();
        let list = project(&scene, &identity_camera(50.0, 32));
        let order: Vec<u32> = list.splats.iter().map(|s| s.gaussian).collect();
        assert_eq!(order, vec![0, 1, 2]);
    }

    #[test]
    fn off_image_extent_is_culled() {
        let layout = LevelLayout::new(&[2]).unwrap();
        let scene =
            GaussianScene::new(vec![gaussian_at([100.0, 0.0, 2.0], -2.0)], layout).unwrap();
        let list = project(&scene, &identity_camera(50.0, 32));
        assert!(list.splats.is_empty());
    }
}
