//! Scene representation: gaussians, the granularity layout, cameras, and
//! packed code tables.
//!
//! Levels are numbered 1..=L everywhere; level 1 is the coarsest. Within the
//! concatenated feature vector, level 1 occupies the lowest components and
//! component 0 of a level maps to the least significant bit of its segment,
//! so the level-l class of a packed code is simply its low-bit prefix.

use crate::error::{Error, Result};

/// Granularity schedule: number of levels and per-level bit widths.
///
/// The total width `D = sum(level_dims)` must fit a 32-bit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelLayout {
    level_dims: Vec<u8>,
    offsets: Vec<usize>,
}

impl LevelLayout {
    pub fn new(level_dims: &[u8]) -> Result<Self> {
        if level_dims.is_empty() {
            return Err(Error::Contract("layout needs at least one level".into()));
        }
        if level_dims.iter().any(|&d| d == 0) {
            return Err(Error::Contract("every level width must be >= 1".into()));
        }
        let total: usize = level_dims.iter().map(|&d| d as usize).sum();
        if total > 32 {
            return Err(Error::Contract(format!(
                "total feature width {total} exceeds 32 bits"
            )));
        }
        let mut offsets = Vec::with_capacity(level_dims.len() + 1);
        let mut acc = 0usize;
        offsets.push(0);
        for &d in level_dims {
            acc += d as usize;
            offsets.push(acc);
        }
        Ok(Self { level_dims: level_dims.to_vec(), offsets })
    }

    /// Default schedule: three levels filling the 32-bit budget.
    pub fn default_32() -> Self {
        Self::new(&[8, 12, 12]).unwrap()
    }

    pub fn levels(&self) -> usize {
        self.level_dims.len()
    }

    pub fn total_dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn level_dims(&self) -> &[u8] {
        &self.level_dims
    }

    /// Width of level `level` (1-based).
    pub fn level_dim(&self, level: usize) -> usize {
        assert!(level >= 1 && level <= self.levels(), "level {level} out of range");
        self.level_dims[level - 1] as usize
    }

    /// Component range of level `level` within the concatenated vector.
    pub fn level_range(&self, level: usize) -> std::ops::Range<usize> {
        assert!(level >= 1 && level <= self.levels(), "level {level} out of range");
        self.offsets[level - 1]..self.offsets[level]
    }

    /// Number of components covered by levels 1..=level.
    pub fn prefix_width(&self, level: usize) -> usize {
        assert!(level >= 1 && level <= self.levels(), "level {level} out of range");
        self.offsets[level]
    }

    /// Bit mask selecting the level-`level` class from a packed code.
    pub fn prefix_mask(&self, level: usize) -> u32 {
        let w = self.prefix_width(level);
        (((1u64) << w) - 1) as u32
    }
}

/// One anisotropic 3D gaussian with trainable per-level feature logits.
///
/// Scale is stored in log space; opacity and features are stored as logits
/// and activated through the logistic function.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub position: [f64; 3],
    pub log_scale: [f64; 3],
    /// Unit quaternion (w, x, y, z).
    pub rotation: [f64; 4],
    pub opacity_logit: f64,
    /// RGB in [0, 1], degree-0 only.
    pub color: [f64; 3],
    /// One logit per feature component, laid out per the scene's layout.
    pub feature_logits: Vec<f64>,
}

impl Gaussian {
    pub fn opacity(&self) -> f64 {
        logistic(self.opacity_logit)
    }

    pub fn quaternion_norm(&self) -> f64 {
        self.rotation.iter().map(|q| q * q).sum::<f64>().sqrt()
    }

    /// Sigmoid activations of the feature logits, each in (0, 1).
    pub fn feature_activations(&self) -> Vec<f64> {
        self.feature_logits.iter().map(|&x| logistic(x)).collect()
    }
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Inverse of [`logistic`]; input must lie strictly in (0, 1).
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// A set of gaussians sharing one granularity layout.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianScene {
    pub gaussians: Vec<Gaussian>,
    pub layout: LevelLayout,
}

impl GaussianScene {
    pub fn new(gaussians: Vec<Gaussian>, layout: LevelLayout) -> Result<Self> {
        if gaussians.is_empty() {
            return Err(Error::EmptyScene);
        }
        let dim = layout.total_dim();
        for (i, g) in gaussians.iter().enumerate() {
            if g.feature_logits.len() != dim {
                return Err(Error::Contract(format!(
                    "gaussian {i} carries {} feature logits, layout expects {dim}",
                    g.feature_logits.len()
                )));
            }
            if (g.quaternion_norm() - 1.0).abs() > 1e-6 {
                return Err(Error::Contract(format!(
                    "gaussian {i} quaternion norm {} deviates from 1",
                    g.quaternion_norm()
                )));
            }
        }
        Ok(Self { gaussians, layout })
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }
}

/// Pinhole camera with a rigid world-to-camera transform.
///
/// Camera space has +z pointing forward; a point is visible when its camera
/// depth lies strictly inside (near, far).
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub near: f64,
    pub far: f64,
    /// Rotation rows of the world-to-camera transform.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl Camera {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        near: f64,
        far: f64,
        rotation: [[f64; 3]; 3],
        translation: [f64; 3],
    ) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(Error::Contract("focal lengths must be positive".into()));
        }
        if !(near < far) {
            return Err(Error::Contract("near must be below far".into()));
        }
        if width == 0 || height == 0 {
            return Err(Error::Contract("image must be at least 1x1".into()));
        }
        Ok(Self { fx, fy, cx, cy, width, height, near, far, rotation, translation })
    }

    /// Camera placed at `eye` looking at `target`, +y world up by default.
    pub fn look_at(
        eye: [f64; 3],
        target: [f64; 3],
        up: [f64; 3],
        fx: f64,
        width: u32,
        height: u32,
    ) -> Self {
        use nalgebra::Vector3;
        let eye_v = Vector3::from(eye);
        let forward = (Vector3::from(target) - eye_v).normalize();
        let right = forward.cross(&Vector3::from(up)).normalize();
        let down = forward.cross(&right);
        // Rows: camera x (right), y (down), z (forward).
        let rotation = [
            [right.x, right.y, right.z],
            [down.x, down.y, down.z],
            [forward.x, forward.y, forward.z],
        ];
        let t = [-right.dot(&eye_v), -down.dot(&eye_v), -forward.dot(&eye_v)];
        Self {
            fx,
            fy: fx,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
            near: 0.05,
            far: 1.0e6,
            rotation,
            translation: t,
        }
    }

    /// World point into camera coordinates.
    pub fn to_camera(&self, p: [f64; 3]) -> [f64; 3] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2] + t[0],
            r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2] + t[1],
            r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2] + t[2],
        ]
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// One packed 32-bit code per gaussian: the final segmentation artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeTable {
    pub codes: Vec<u32>,
    pub layout: LevelLayout,
}

impl CodeTable {
    pub fn new(codes: Vec<u32>, layout: LevelLayout) -> Result<Self> {
        let mask = layout.prefix_mask(layout.levels());
        if let Some(i) = codes.iter().position(|&c| c & !mask != 0) {
            return Err(Error::Contract(format!(
                "code {i} has bits above position {}",
                layout.total_dim() - 1
            )));
        }
        Ok(Self { codes, layout })
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    /// Level-`level` class id of gaussian `index`: the code masked to the
    /// low `prefix_width(level)` bits.
    pub fn class_at(&self, index: usize, level: usize) -> u32 {
        self.codes[index] & self.layout.prefix_mask(level)
    }
}

/// Pack a vector of 0/1 components into a 32-bit code.
///
/// Component `j` of level `l` contributes `2^(offset_l + j)`; with the
/// concatenated storage order this is just positional binary with component 0
/// least significant. Entries must be exactly 0.0 or 1.0.
pub fn pack_code(bits: &[f64], layout: &LevelLayout) -> u32 {
    assert_eq!(
        bits.len(),
        layout.total_dim(),
        "bit vector length {} does not match layout width {}",
        bits.len(),
        layout.total_dim()
    );
    let mut code = 0u32;
    for (k, &b) in bits.iter().enumerate() {
        assert!(b == 0.0 || b == 1.0, "component {k} is not binary: {b}");
        if b == 1.0 {
            code |= 1u32 << k;
        }
    }
    code
}

/// Inverse of [`pack_code`].
pub fn unpack_code(code: u32, layout: &LevelLayout) -> Vec<f64> {
    let dim = layout.total_dim();
    debug_assert_eq!(code & !layout.prefix_mask(layout.levels()), 0);
    (0..dim).map(|k| f64::from(code >> k & 1)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_rejects_invalid() {
        assert!(LevelLayout::new(&[]).is_err());
        assert!(LevelLayout::new(&[0]).is_err());
        assert!(LevelLayout::new(&[16, 17]).is_err());
        assert!(LevelLayout::new(&[8, 12, 12]).is_ok());
    }

    #[test]
    fn layout_prefixes() {
        let l = LevelLayout::new(&[2, 3, 4]).unwrap();
        assert_eq!(l.total_dim(), 9);
        assert_eq!(l.level_range(1), 0..2);
        assert_eq!(l.level_range(2), 2..5);
        assert_eq!(l.level_range(3), 5..9);
        assert_eq!(l.prefix_mask(1), 0b11);
        assert_eq!(l.prefix_mask(2), 0b11111);
    }

    #[test]
    fn full_width_mask_does_not_overflow() {
        let l = LevelLayout::new(&[8, 12, 12]).unwrap();
        assert_eq!(l.prefix_mask(3), u32::MAX);
    }

    #[test]
    fn pack_zero_vector() {
        let l = LevelLayout::new(&[4]).unwrap();
        assert_eq!(pack_code(&[0.0; 4], &l), 0);
    }

    #[test]
    fn pack_positional_encoding() {
        // Index 0 least significant: (1,0,1,1) -> 1 + 4 + 8.
        let l = LevelLayout::new(&[4]).unwrap();
        assert_eq!(pack_code(&[1.0, 0.0, 1.0, 1.0], &l), 13);
    }

    #[test]
    fn pack_unpack_identity() {
        let l = LevelLayout::new(&[2, 3]).unwrap();
        for code in 0..(1u32 << 5) {
            assert_eq!(pack_code(&unpack_code(code, &l), &l), code);
        }
    }

    #[test]
    fn coarse_class_is_prefix_of_fine() {
        let l = LevelLayout::new(&[3, 2, 4]).unwrap();
        let table = CodeTable::new(vec![0b0110_11_010], l.clone()).unwrap();
        for level in 2..=3 {
            let fine = table.class_at(0, level);
            let coarse = table.class_at(0, level - 1);
            assert_eq!(fine & l.prefix_mask(level - 1), coarse);
        }
    }

    #[test]
    #[should_panic(expected = "does not match layout width")]
    fn pack_rejects_wrong_length() {
        let l = LevelLayout::new(&[4]).unwrap();
        pack_code(&[1.0; 3], &l);
    }

    #[test]
    fn logistic_midpoint() {
        assert_eq!(logistic(0.0), 0.5);
        assert!((logit(0.25) - (-(3.0f64).ln())).abs() < 1e-12);
    }

    #[test]
    fn scene_rejects_bad_quaternion() {
        let layout = LevelLayout::new(&[2]).unwrap();
        let g = Gaussian {
            position: [0.0; 3],
            log_scale: [0.0; 3],
            rotation: [0.9, 0.0, 0.0, 0.0],
            opacity_logit: 0.0,
            color: [0.5; 3],
            feature_logits: vec![0.0; 2],
        };
        assert!(GaussianScene::new(vec![g], layout).is_err());
    }

    #[test]
    fn look_at_projects_target_to_center() {
        let cam = Camera::look_at([0.0, 0.0, -5.0], [0.0, 0.0, 0.0], [0.0, 1.0, 0.0], 50.0, 64, 64);
        let p = cam.to_camera([0.0, 0.0, 0.0]);
        assert!((p[0]).abs() < 1e-12 && (p[1]).abs() < 1e-12);
        assert!((p[2] - 5.0).abs() < 1e-12);
    }
}
