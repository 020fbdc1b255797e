//! The optimization loop: sampling, sparse rendering, loss, backward, and
//! adaptive updates of feature logits and (optionally) opacity logits.
//! Geometry and color are frozen throughout.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec;
use crate::config::{self, KvFile};
use crate::error::{Error, Result};
use crate::formats::bgs1;
use crate::loss::{detect_indivisible, total_loss, LossBreakdown, LossWeights, PixelBatch, PixelSample};
use crate::mask::MaskPyramid;
use crate::optim::Adam;
use crate::render::{bin_splats, composite_backward, composite_forward, project};
use crate::sampler::{sample_batch, SamplerConfig};
use crate::scene::{Camera, CodeTable, GaussianScene};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub iterations: u64,
    pub lr_features: f64,
    /// 2% of the reconstruction training's initial opacity rate.
    pub lr_opacity: f64,
    pub opacity_finetune: bool,
    pub virtual_negative: bool,
    pub mask_balanced: bool,
    pub weights: LossWeights,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Write a checkpoint every this many iterations; 0 disables.
    pub checkpoint_every: u64,
    pub checkpoint_dir: Option<PathBuf>,
    pub seed: u64,
    pub sampler: SamplerConfig,
    /// Feature logits are redrawn uniformly from (-noise, noise) when a
    /// fresh (non-resumed, non-empty) run starts. Exactly-zero logits are a
    /// stall point: every rendered feature sits below the 0.5 threshold, all
    /// binarized rows coincide, and zero-distance pairs carry no gradient.
    /// Set to 0 to keep the scene's logits.
    pub feature_init_noise: f64,
}

impl TrainConfig {
    /// Desk-scale profile: small pixel budgets, exact all-pairs terms.
    pub fn desk() -> Self {
        Self {
            iterations: 2000,
            lr_features: 0.005,
            lr_opacity: 0.001,
            opacity_finetune: true,
            virtual_negative: true,
            mask_balanced: true,
            weights: LossWeights::default(),
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            checkpoint_every: 0,
            checkpoint_dir: None,
            seed: 0,
            sampler: SamplerConfig::desk(),
            feature_init_noise: 0.5,
        }
    }

    /// Published pixel budgets (2k random + 8k mask-balanced per iteration).
    pub fn paper_scale() -> Self {
        Self { sampler: SamplerConfig::paper(), ..Self::desk() }
    }

    /// Parse a `key = value` config file. A `profile` key (`desk` or
    /// `paper`) selects the base profile first; remaining keys override it.
    /// Unknown keys are rejected.
    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        let mut cfg = match kv.get("profile") {
            None | Some("desk") => Self::desk(),
            Some("paper") => Self::paper_scale(),
            Some(other) => {
                return Err(Error::Config(format!("profile: unknown profile {other:?}")))
            }
        };
        for (key, value) in &kv.entries {
            match key.as_str() {
                "profile" => {}
                "iterations" => cfg.iterations = config::parse_u64(key, value)?,
                "lr_features" => cfg.lr_features = config::parse_f64(key, value)?,
                "lr_opacity" => cfg.lr_opacity = config::parse_f64(key, value)?,
                "opacity_finetune" => cfg.opacity_finetune = config::parse_bool(key, value)?,
                "virtual_negative" => cfg.virtual_negative = config::parse_bool(key, value)?,
                "mask_balanced" => cfg.mask_balanced = config::parse_bool(key, value)?,
                "lambda_reg" => cfg.weights.regularizer = config::parse_f64(key, value)?,
                "lambda_guiding" => cfg.weights.guiding = config::parse_f64(key, value)?,
                "lambda_con" => cfg.weights.contrastive = config::parse_f64(key, value)?,
                "beta1" => cfg.beta1 = config::parse_f64(key, value)?,
                "beta2" => cfg.beta2 = config::parse_f64(key, value)?,
                "epsilon" => cfg.epsilon = config::parse_f64(key, value)?,
                "checkpoint_every" => cfg.checkpoint_every = config::parse_u64(key, value)?,
                "seed" => cfg.seed = config::parse_u64(key, value)?,
                "feature_init_noise" => {
                    cfg.feature_init_noise = config::parse_f64(key, value)?
                }
                "random_pixels" => cfg.sampler.random_pixels = config::parse_usize(key, value)?,
                "balanced_pixels" => {
                    cfg.sampler.balanced_pixels = config::parse_usize(key, value)?
                }
                "masks_per_iter" => cfg.sampler.masks_per_iter = config::parse_usize(key, value)?,
                other => return Err(Error::Config(format!("unknown config key {other:?}"))),
            }
        }
        if cfg.lr_features < 0.0 || cfg.lr_opacity < 0.0 {
            return Err(Error::Config("learning rates must be non-negative".into()));
        }
        cfg.sampler.seed = cfg.seed;
        Ok(cfg)
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

/// One logged iteration.
#[derive(Debug, Clone)]
pub struct IterationLog {
    pub iteration: u64,
    pub view: u32,
    pub pixels: usize,
    pub breakdown: LossBreakdown,
}

#[derive(Debug)]
pub struct TrainResult {
    pub scene: GaussianScene,
    pub codes: CodeTable,
    pub log: Vec<IterationLog>,
    /// Loss totals of every iteration since iteration 0, including those
    /// before a resume point.
    pub history: Vec<f64>,
    pub skipped_views: u64,
}

/// Render the training log as CSV, seed echoed in a leading comment.
pub fn log_to_csv(log: &[IterationLog], levels: usize, seed: u64) -> String {
    let mut out = String::new();
    out.push_str(&format!("# seed = {seed}\n"));
    out.push_str("iteration,view,pixels,total,regularizer");
    for l in 1..=levels {
        out.push_str(&format!(
            ",l{l}_positive,l{l}_negative,l{l}_vn,l{l}_skipped_pairs,l{l}_excluded_pairs"
        ));
    }
    out.push('\n');
    for row in log {
        out.push_str(&format!(
            "{},{},{},{},{}",
            row.iteration, row.view, row.pixels, row.breakdown.total, row.breakdown.regularizer
        ));
        for t in &row.breakdown.levels {
            out.push_str(&format!(
                ",{},{},{},{},{}",
                t.positive, t.negative, t.virtual_negative, t.skipped_pairs, t.excluded_pairs
            ));
        }
        out.push('\n');
    }
    out
}

/// Resumable optimizer and RNG state alongside a scene snapshot.
///
/// The scene snapshot is a BGS1 file; the sidecar keeps full-precision
/// copies of the trainable logits plus moment and RNG state, so resuming
/// reproduces an uninterrupted run bit for bit (geometry is frozen and
/// f32-representable for every scene this crate produces).
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub iteration: u64,
    pub scene: GaussianScene,
    pub adam_t: u64,
    pub m_features: Vec<f64>,
    pub v_features: Vec<f64>,
    pub m_opacity: Vec<f64>,
    pub v_opacity: Vec<f64>,
    pub seed: u64,
    pub rng_word_pos: u128,
    pub history: Vec<f64>,
    pub skipped_views: u64,
}

impl Checkpoint {
    /// Write `{stem}.bgs1` and `{stem}.opt`.
    pub fn save(&self, stem: &Path) -> Result<()> {
        bgs1::write(&stem.with_extension("bgs1"), &self.scene)?;
        let mut w = std::io::BufWriter::new(std::fs::File::create(stem.with_extension("opt"))?);
        w.write_all(b"BGO1")?;
        w.write_u64::<LittleEndian>(self.iteration)?;
        w.write_u64::<LittleEndian>(self.adam_t)?;
        w.write_u64::<LittleEndian>(self.seed)?;
        w.write_u128::<LittleEndian>(self.rng_word_pos)?;
        w.write_u64::<LittleEndian>(self.skipped_views)?;
        let n = self.scene.len();
        let dim = self.scene.layout.total_dim();
        w.write_u32::<LittleEndian>(n as u32)?;
        w.write_u32::<LittleEndian>(dim as u32)?;
        let mut feats = Vec::with_capacity(n * dim);
        let mut ops = Vec::with_capacity(n);
        for g in &self.scene.gaussians {
            feats.extend_from_slice(&g.feature_logits);
            ops.push(g.opacity_logit);
        }
        for buf in [&feats, &self.m_features, &self.v_features, &ops, &self.m_opacity,
            &self.v_opacity]
        {
            for &v in buf {
                w.write_f64::<LittleEndian>(v)?;
            }
        }
        w.write_u64::<LittleEndian>(self.history.len() as u64)?;
        for &h in &self.history {
            w.write_f64::<LittleEndian>(h)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let mut scene = bgs1::read(&stem.with_extension("bgs1"))?;
        let mut r = std::io::BufReader::new(std::fs::File::open(stem.with_extension("opt"))?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"BGO1" {
            return Err(Error::Format("optimizer sidecar: bad magic".into()));
        }
        let iteration = r.read_u64::<LittleEndian>()?;
        let adam_t = r.read_u64::<LittleEndian>()?;
        let seed = r.read_u64::<LittleEndian>()?;
        let rng_word_pos = r.read_u128::<LittleEndian>()?;
        let skipped_views = r.read_u64::<LittleEndian>()?;
        let n = r.read_u32::<LittleEndian>()? as usize;
        let dim = r.read_u32::<LittleEndian>()? as usize;
        if n != scene.len() || dim != scene.layout.total_dim() {
            return Err(Error::CheckpointMismatch(format!(
                "sidecar shapes ({n} x {dim}) do not match the scene snapshot ({} x {})",
                scene.len(),
                scene.layout.total_dim()
            )));
        }
        fn read_vec<R: Read>(r: &mut R, len: usize) -> Result<Vec<f64>> {
            let mut v = vec![0.0f64; len];
            r.read_f64_into::<LittleEndian>(&mut v)?;
            Ok(v)
        }
        let feats = read_vec(&mut r, n * dim)?;
        let m_features = read_vec(&mut r, n * dim)?;
        let v_features = read_vec(&mut r, n * dim)?;
        let ops = read_vec(&mut r, n)?;
        let m_opacity = read_vec(&mut r, n)?;
        let v_opacity = read_vec(&mut r, n)?;
        let count = r.read_u64::<LittleEndian>()? as usize;
        let history = read_vec(&mut r, count)?;
        // Full-precision trainables override the f32 snapshot.
        for (i, g) in scene.gaussians.iter_mut().enumerate() {
            g.feature_logits.copy_from_slice(&feats[i * dim..(i + 1) * dim]);
            g.opacity_logit = ops[i];
        }
        Ok(Self {
            iteration,
            scene,
            adam_t,
            m_features,
            v_features,
            m_opacity,
            v_opacity,
            seed,
            rng_word_pos,
            history,
            skipped_views,
        })
    }
}

fn validate_alignment(
    scene: &GaussianScene,
    cameras: &[Camera],
    pyramid: &MaskPyramid,
) -> Result<()> {
    if pyramid.levels() != scene.layout.levels() {
        return Err(Error::Contract(format!(
            "mask pyramid has {} levels, scene layout {}",
            pyramid.levels(),
            scene.layout.levels()
        )));
    }
    if cameras.len() != pyramid.view_count() {
        return Err(Error::Contract(format!(
            "{} cameras for {} mask views",
            cameras.len(),
            pyramid.view_count()
        )));
    }
    for (i, c) in cameras.iter().enumerate() {
        if c.width != pyramid.width() || c.height != pyramid.height() {
            return Err(Error::Contract(format!(
                "camera {i} is {}x{}, masks are {}x{}",
                c.width,
                c.height,
                pyramid.width(),
                pyramid.height()
            )));
        }
    }
    Ok(())
}

struct LoopState {
    start_iteration: u64,
    adam_features: Adam,
    adam_opacity: Adam,
    rng: ChaCha8Rng,
    history: Vec<f64>,
    skipped_views: u64,
}

/// Train feature codes (and optionally opacity) on a scene.
pub fn train(
    scene: &GaussianScene,
    cameras: &[Camera],
    pyramid: &MaskPyramid,
    cfg: &TrainConfig,
) -> Result<TrainResult> {
    let n = scene.len();
    let dim = scene.layout.total_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut scene = scene.clone();
    if cfg.iterations > 0 && cfg.feature_init_noise > 0.0 {
        let s = cfg.feature_init_noise;
        for g in &mut scene.gaussians {
            for logit in &mut g.feature_logits {
                *logit = rng.gen_range(-s..s);
            }
        }
    }
    let state = LoopState {
        start_iteration: 0,
        adam_features: Adam::new(cfg.lr_features, cfg.beta1, cfg.beta2, cfg.epsilon, n * dim),
        adam_opacity: Adam::new(cfg.lr_opacity, cfg.beta1, cfg.beta2, cfg.epsilon, n),
        rng,
        history: Vec::new(),
        skipped_views: 0,
    };
    run_loop(scene, cameras, pyramid, cfg, state)
}

/// Continue a checkpointed run. The trajectory matches an uninterrupted run
/// bit for bit when the config is unchanged; learning-rate changes are
/// allowed and diverge, layout or seed changes are refused.
pub fn resume(
    checkpoint: Checkpoint,
    cameras: &[Camera],
    pyramid: &MaskPyramid,
    cfg: &TrainConfig,
) -> Result<TrainResult> {
    if cfg.seed != checkpoint.seed {
        return Err(Error::CheckpointMismatch(format!(
            "checkpoint was trained with seed {}, config requests {}",
            checkpoint.seed, cfg.seed
        )));
    }
    let n = checkpoint.scene.len();
    let dim = checkpoint.scene.layout.total_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(checkpoint.seed);
    rng.set_word_pos(checkpoint.rng_word_pos);
    let adam_features = Adam {
        lr: cfg.lr_features,
        beta1: cfg.beta1,
        beta2: cfg.beta2,
        epsilon: cfg.epsilon,
        t: checkpoint.adam_t,
        m: checkpoint.m_features,
        v: checkpoint.v_features,
    };
    let adam_opacity = Adam {
        lr: cfg.lr_opacity,
        beta1: cfg.beta1,
        beta2: cfg.beta2,
        epsilon: cfg.epsilon,
        t: checkpoint.adam_t,
        m: checkpoint.m_opacity,
        v: checkpoint.v_opacity,
    };
    if adam_features.m.len() != n * dim || adam_opacity.m.len() != n {
        return Err(Error::CheckpointMismatch("optimizer state shapes differ".into()));
    }
    let state = LoopState {
        start_iteration: checkpoint.iteration,
        adam_features,
        adam_opacity,
        rng,
        history: checkpoint.history,
        skipped_views: checkpoint.skipped_views,
    };
    run_loop(checkpoint.scene, cameras, pyramid, cfg, state)
}

fn run_loop(
    mut scene: GaussianScene,
    cameras: &[Camera],
    pyramid: &MaskPyramid,
    cfg: &TrainConfig,
    mut state: LoopState,
) -> Result<TrainResult> {
    validate_alignment(&scene, cameras, pyramid)?;
    let n = scene.len();
    let dim = scene.layout.total_dim();
    let levels = scene.layout.levels();
    let frozen: Vec<([f64; 3], [f64; 3], [f64; 4], [f64; 3])> = scene
        .gaussians
        .iter()
        .map(|g| (g.position, g.log_scale, g.rotation, g.color))
        .collect();

    let indivisible = if cfg.virtual_negative {
        detect_indivisible(pyramid)
    } else {
        Default::default()
    };
    let sampler_cfg = if cfg.mask_balanced {
        cfg.sampler
    } else {
        SamplerConfig {
            random_pixels: cfg.sampler.random_pixels + cfg.sampler.balanced_pixels,
            balanced_pixels: 0,
            ..cfg.sampler
        }
    };

    let mut feats: Vec<f64> = Vec::with_capacity(n * dim);
    let mut ops: Vec<f64> = Vec::with_capacity(n);
    for g in &scene.gaussians {
        feats.extend_from_slice(&g.feature_logits);
        ops.push(g.opacity_logit);
    }

    let mut log = Vec::new();
    for iteration in state.start_iteration..cfg.iterations {
        let view = state.rng.gen_range(0..cameras.len());
        let pixels = match sample_batch(view, pyramid, &sampler_cfg, &mut state.rng) {
            Ok(p) => p,
            Err(Error::Sampling(_)) => {
                state.skipped_views += 1;
                state.history.push(f64::NAN);
                continue;
            }
            Err(e) => return Err(e),
        };

        let list = project(&scene, &cameras[view]);
        let bins = bin_splats(&list);
        let map = composite_forward(&list, &bins, &pixels);
        let binary = codec::binarize(&map.features);
        let samples: Vec<PixelSample> = pixels
            .iter()
            .map(|&(x, y)| PixelSample {
                view: view as u32,
                x,
                y,
                labels: (1..=levels).map(|l| pyramid.label_at(view, l, x, y)).collect(),
            })
            .collect();
        let batch =
            PixelBatch::new(scene.layout.clone(), samples, map.features.clone(), binary);
        let (breakdown, d_features) = total_loss(&batch, &indivisible, cfg.weights);
        if !breakdown.is_finite() {
            return Err(Error::NonFinite {
                iteration,
                detail: format!(
                    "regularizer {}, level terms {:?}",
                    breakdown.regularizer,
                    breakdown
                        .levels
                        .iter()
                        .map(|t| (t.positive, t.negative, t.virtual_negative))
                        .collect::<Vec<_>>()
                ),
            });
        }

        let grads = composite_backward(&list, &bins, &pixels, &d_features, n);
        state.adam_features.step(&mut feats, &grads.feature_logits);
        if cfg.opacity_finetune {
            state.adam_opacity.step(&mut ops, &grads.opacity_logits);
        }
        for (i, g) in scene.gaussians.iter_mut().enumerate() {
            g.feature_logits.copy_from_slice(&feats[i * dim..(i + 1) * dim]);
            if cfg.opacity_finetune {
                g.opacity_logit = ops[i];
            }
        }

        state.history.push(breakdown.total);
        log.push(IterationLog { iteration, view: view as u32, pixels: pixels.len(), breakdown });

        let done = iteration + 1;
        if cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 && done < cfg.iterations {
            if let Some(dir) = &cfg.checkpoint_dir {
                std::fs::create_dir_all(dir)?;
                let ckpt = Checkpoint {
                    iteration: done,
                    scene: scene.clone(),
                    adam_t: state.adam_features.t,
                    m_features: state.adam_features.m.clone(),
                    v_features: state.adam_features.v.clone(),
                    m_opacity: state.adam_opacity.m.clone(),
                    v_opacity: state.adam_opacity.v.clone(),
                    seed: cfg.seed,
                    rng_word_pos: state.rng.get_word_pos(),
                    history: state.history.clone(),
                    skipped_views: state.skipped_views,
                };
                ckpt.save(&dir.join(format!("checkpoint_{done:06}")))?;
            }
        }
    }

    for (g, (p, s, r, c)) in scene.gaussians.iter().zip(&frozen) {
        assert!(
            g.position == *p && g.log_scale == *s && g.rotation == *r && g.color == *c,
            "frozen geometry changed during training"
        );
    }

    let codes = codec::extract_codes(&scene);
    Ok(TrainResult {
        scene,
        codes,
        log,
        history: state.history,
        skipped_views: state.skipped_views,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Gaussian, LevelLayout};

    fn quantize_f32(x: f64) -> f64 {
        x as f32 as f64
    }

    /// Two well-separated blobs in front of one camera, one level. Each
    /// gaussian is laterally offset and depth-staggered so all of them
    /// contribute visibly somewhere.
    fn two_blob_fixture() -> (GaussianScene, Vec<Camera>, MaskPyramid) {
        let layout = LevelLayout::new(&[4]).unwrap();
        let mut gaussians = Vec::new();
        for side in 0..2 {
            let cx = if side == 0 { -0.9 } else { 0.9 };
            for i in 0..6 {
                gaussians.push(Gaussian {
                    position: [
                        quantize_f32(cx + (i % 3) as f64 * 0.2 - 0.2),
                        quantize_f32((i / 3) as f64 * 0.2 - 0.1),
                        quantize_f32(3.0 + i as f64 * 0.03),
                    ],
                    log_scale: [quantize_f32(-1.7); 3],
                    rotation: [1.0, 0.0, 0.0, 0.0],
                    opacity_logit: 2.0,
                    color: [0.5; 3],
                    feature_logits: vec![0.0; 4],
                });
            }
        }
        let scene = GaussianScene::new(gaussians, layout).unwrap();
        let cam = Camera::look_at([0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0], 24.0, 32, 32);
        // Ground-truth masks from the dominant contributor.
        let list = crate::render::project(&scene, &cam);
        let bins = crate::render::bin_splats(&list);
        let (winners, trans) = crate::render::dominant_contributors(
            &list,
            &bins,
            &crate::render::frame_pixels(32, 32),
        );
        let labels: Vec<u32> = winners
            .iter()
            .zip(&trans)
            .map(|(w, &t)| match w {
                Some(g) if t <= 0.5 => {
                    if *g < 6 {
                        1
                    } else {
                        2
                    }
                }
                _ => 0,
            })
            .collect();
        let pyramid = MaskPyramid::from_label_maps(32, 32, vec![vec![labels]]).unwrap();
        (scene, vec![cam], pyramid)
    }

    #[test]
    fn zero_iterations_is_the_identity() {
        let (scene, cams, pyramid) = two_blob_fixture();
        let cfg = TrainConfig { iterations: 0, ..TrainConfig::desk() };
        let out = train(&scene, &cams, &pyramid, &cfg).unwrap();
        assert_eq!(out.scene, scene);
        assert_eq!(out.codes, codec::extract_codes(&scene));
        assert!(out.log.is_empty());
    }

    #[test]
    fn frozen_opacity_stays_bit_identical() {
        let (scene, cams, pyramid) = two_blob_fixture();
        let cfg = TrainConfig {
            iterations: 40,
            opacity_finetune: false,
            sampler: SamplerConfig { random_pixels: 64, balanced_pixels: 64, ..SamplerConfig::desk() },
            ..TrainConfig::desk()
        };
        let out = train(&scene, &cams, &pyramid, &cfg).unwrap();
        for (a, b) in scene.gaussians.iter().zip(&out.scene.gaussians) {
            assert_eq!(a.opacity_logit.to_bits(), b.opacity_logit.to_bits());
        }
    }

    #[test]
    fn geometry_is_invariant_and_codes_separate() {
        let (scene, cams, pyramid) = two_blob_fixture();
        let cfg = TrainConfig {
            iterations: 400,
            sampler: SamplerConfig { random_pixels: 96, balanced_pixels: 160, ..SamplerConfig::desk() },
            ..TrainConfig::desk()
        };
        let out = train(&scene, &cams, &pyramid, &cfg).unwrap();
        for (a, b) in scene.gaussians.iter().zip(&out.scene.gaussians) {
            assert_eq!(a.position, b.position);
            assert_eq!(a.rotation, b.rotation);
            assert_eq!(a.log_scale, b.log_scale);
            assert_eq!(a.color, b.color);
        }
        // The two blobs end up with distinct, internally uniform codes.
        let left = out.codes.codes[0];
        let right = out.codes.codes[6];
        assert!(out.codes.codes[..6].iter().all(|&c| c == left), "{:?}", out.codes.codes);
        assert!(out.codes.codes[6..].iter().all(|&c| c == right), "{:?}", out.codes.codes);
        assert_ne!(left, right);
    }

    #[test]
    fn same_seed_same_codes() {
        let (scene, cams, pyramid) = two_blob_fixture();
        let cfg = TrainConfig {
            iterations: 60,
            sampler: SamplerConfig { random_pixels: 48, balanced_pixels: 48, ..SamplerConfig::desk() },
            seed: 123,
            ..TrainConfig::desk()
        };
        let a = train(&scene, &cams, &pyramid, &cfg).unwrap();
        let b = train(&scene, &cams, &pyramid, &cfg).unwrap();
        assert_eq!(a.codes.codes, b.codes.codes);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn split_run_equals_uninterrupted_run() {
        let (scene, cams, pyramid) = two_blob_fixture();
        let dir = tempfile::tempdir().unwrap();
        let base = TrainConfig {
            iterations: 120,
            seed: 9,
            sampler: SamplerConfig { random_pixels: 48, balanced_pixels: 48, ..SamplerConfig::desk() },
            ..TrainConfig::desk()
        };
        let full = train(&scene, &cams, &pyramid, &base).unwrap();

        let split_cfg = TrainConfig {
            checkpoint_every: 60,
            checkpoint_dir: Some(dir.path().to_path_buf()),
            ..base.clone()
        };
        let _ = train(&scene, &cams, &pyramid, &split_cfg).unwrap();
        let ckpt = Checkpoint::load(&dir.path().join("checkpoint_000060")).unwrap();
        assert_eq!(ckpt.iteration, 60);
        let resumed = resume(ckpt, &cams, &pyramid, &base).unwrap();

        assert_eq!(full.codes.codes, resumed.codes.codes);
        assert_eq!(full.history.len(), resumed.history.len());
        for (a, b) in full.history.iter().zip(&resumed.history) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (a, b) in full.scene.gaussians.iter().zip(&resumed.scene.gaussians) {
            assert_eq!(a.feature_logits, b.feature_logits);
            assert_eq!(a.opacity_logit.to_bits(), b.opacity_logit.to_bits());
        }
    }

    #[test]
    fn resume_refuses_layout_mismatch() {
        let (scene, cams, pyramid) = two_blob_fixture();
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig {
            iterations: 20,
            checkpoint_every: 10,
            checkpoint_dir: Some(dir.path().to_path_buf()),
            sampler: SamplerConfig { random_pixels: 32, balanced_pixels: 32, ..SamplerConfig::desk() },
            ..TrainConfig::desk()
        };
        train(&scene, &cams, &pyramid, &cfg).unwrap();
        let ckpt = Checkpoint::load(&dir.path().join("checkpoint_000010")).unwrap();
        // A pyramid with a different level count must be refused.
        let other = MaskPyramid::from_label_maps(
            32,
            32,
            vec![vec![vec![1; 32 * 32], vec![2; 32 * 32]]],
        )
        .unwrap();
        assert!(resume(ckpt.clone(), &cams, &other, &cfg).is_err());
        // A changed seed must be refused.
        let reseeded = TrainConfig { seed: 77, ..cfg };
        assert!(matches!(
            resume(ckpt, &cams, &pyramid, &reseeded),
            Err(Error::CheckpointMismatch(_))
        ));
    }

    #[test]
    fn config_file_round_trip() {
        let kv = KvFile::parse(
            "profile = desk\niterations = 500\nlr_features = 0.01\nopacity_finetune = off\n\
             lambda_reg = 5\nrandom_pixels = 100\nseed = 4",
        )
        .unwrap();
        let cfg = TrainConfig::from_kv(&kv).unwrap();
        assert_eq!(cfg.iterations, 500);
        assert_eq!(cfg.lr_features, 0.01);
        assert!(!cfg.opacity_finetune);
        assert_eq!(cfg.weights.regularizer, 5.0);
        assert_eq!(cfg.sampler.random_pixels, 100);
        assert_eq!(cfg.seed, 4);
    }

    #[test]
    fn unknown_config_key_rejected() {
        let kv = KvFile::parse("iterations = 10\nbogus = 1").unwrap();
        assert!(matches!(TrainConfig::from_kv(&kv), Err(Error::Config(_))));
    }
}

