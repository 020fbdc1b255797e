//! Synthetic scenes with ground-truth hierarchical masks.
//!
//! Objects form a tree of blob clusters, one tree level per granularity
//! level; leaves carry gaussians. Ground-truth pixel labels come from the
//! dominant contributor under the same compositor used everywhere else, so
//! the truth is always expressible by compositing. Mostly-empty pixels
//! (transmittance above 0.5) stay unlabeled.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{self, KvFile};
use crate::error::{Error, Result};
use crate::mask::MaskPyramid;
use crate::render::{bin_splats, dominant_contributors, frame_pixels, project};
use crate::scene::{logit, Camera, Gaussian, GaussianScene, LevelLayout};

/// One node of the object hierarchy. Leaves (no children) own gaussians.
#[derive(Debug, Clone)]
pub struct ObjectNode {
    pub opacity: f64,
    pub children: Vec<ObjectNode>,
    /// Override the spec's per-leaf gaussian count.
    pub gaussians: Option<usize>,
    /// Override the placement spread of this node's cluster.
    pub spread: Option<f64>,
    /// Pin this node's center instead of circle placement.
    pub center: Option<[f64; 3]>,
}

impl ObjectNode {
    pub fn leaf(opacity: f64) -> Self {
        Self { opacity, children: Vec::new(), gaussians: None, spread: None, center: None }
    }

    pub fn with_children(opacity: f64, children: Vec<ObjectNode>) -> Self {
        Self { opacity, children, gaussians: None, spread: None, center: None }
    }

    /// A uniform tree: `branching[0]` root objects, each splitting by
    /// `branching[l]` at level l+1.
    pub fn uniform(branching: &[usize], opacity: f64) -> Vec<ObjectNode> {
        fn build(rest: &[usize], opacity: f64) -> ObjectNode {
            match rest.split_first() {
                None => ObjectNode::leaf(opacity),
                Some((&k, tail)) => ObjectNode::with_children(
                    opacity,
                    (0..k).map(|_| build(tail, opacity)).collect(),
                ),
            }
        }
        (0..branching[0]).map(|_| build(&branching[1..], opacity)).collect()
    }

    fn depth(&self) -> usize {
        1 + self.children.iter().map(|c| c.depth()).max().unwrap_or(0)
    }

    fn min_depth(&self) -> usize {
        1 + self.children.iter().map(|c| c.min_depth()).min().unwrap_or(0)
    }
}

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub roots: Vec<ObjectNode>,
    pub layout: LevelLayout,
    pub gaussians_per_leaf: usize,
    pub camera_count: usize,
    pub camera_radius: f64,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
    /// Placement radius of the root clusters.
    pub cluster_radius: f64,
    /// Radius shrink factor per level.
    pub cluster_shrink: f64,
    /// Render ground-truth masks with every opacity overridden to this
    /// value: what an annotator looking at the scene would label, even when
    /// the actual opacities underweight an object.
    pub mask_opacity_override: Option<f64>,
}

impl SynthSpec {
    /// The default benchmark: three levels, 2/2/2 branching, ~600 gaussians,
    /// 12 views at 64x64.
    pub fn default_tree() -> Self {
        Self {
            roots: ObjectNode::uniform(&[2, 2, 2], 0.92),
            layout: LevelLayout::default_32(),
            gaussians_per_leaf: 75,
            camera_count: 12,
            camera_radius: 7.0,
            width: 64,
            height: 64,
            seed: 0,
            cluster_radius: 1.25,
            cluster_shrink: 0.45,
            mask_opacity_override: None,
        }
    }

    /// Indivisible-group fixture: object A keeps a single child at level 2
    /// (no negatives there) and sits between B's two children so boundary
    /// pixels mix both objects' gaussians.
    pub fn indivisible_group() -> Self {
        let mut a = ObjectNode::with_children(0.92, vec![ObjectNode::leaf(0.92)]);
        a.center = Some([0.0, 0.0, 0.0]);
        a.spread = Some(0.55);
        let mut b1 = ObjectNode::leaf(0.92);
        b1.center = Some([-0.85, 0.1, 0.1]);
        let mut b2 = ObjectNode::leaf(0.92);
        b2.center = Some([0.85, -0.1, -0.1]);
        let mut b = ObjectNode::with_children(0.92, vec![b1, b2]);
        b.center = Some([0.0, 0.0, 0.0]);
        Self {
            roots: vec![a, b],
            layout: LevelLayout::new(&[6, 10]).unwrap(),
            gaussians_per_leaf: 60,
            camera_count: 8,
            camera_radius: 7.0,
            width: 48,
            height: 48,
            seed: 0,
            cluster_radius: 1.1,
            cluster_shrink: 0.5,
            mask_opacity_override: None,
        }
    }

    /// Sampling fixture: one large mask plus a ring of tiny masks at the
    /// same (finest) level.
    pub fn small_masks() -> Self {
        let mut big = ObjectNode::leaf(0.93);
        big.gaussians = Some(140);
        big.spread = Some(1.35);
        big.center = Some([0.0, 0.0, 0.0]);
        let mut roots = vec![big];
        for i in 0..8 {
            let angle = std::f64::consts::TAU * i as f64 / 8.0;
            let mut tiny = ObjectNode::leaf(0.93);
            tiny.gaussians = Some(5);
            tiny.spread = Some(0.08);
            tiny.center = Some([1.9 * angle.cos(), 0.3 * angle.sin(), 1.9 * angle.sin()]);
            roots.push(tiny);
        }
        Self {
            roots,
            layout: LevelLayout::new(&[8]).unwrap(),
            gaussians_per_leaf: 20,
            camera_count: 8,
            camera_radius: 8.0,
            width: 56,
            height: 56,
            seed: 0,
            cluster_radius: 1.0,
            cluster_shrink: 0.5,
            mask_opacity_override: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.roots.is_empty() {
            return Err(Error::Contract("object tree needs at least one root".into()));
        }
        let levels = self.layout.levels();
        for (i, r) in self.roots.iter().enumerate() {
            if r.depth() != levels || r.min_depth() != levels {
                return Err(Error::Contract(format!(
                    "root {i} has depth {}..{}, layout expects uniform depth {levels}",
                    r.min_depth(),
                    r.depth()
                )));
            }
        }
        Ok(())
    }
}

/// Ground-truth hierarchy as generated, independent of any mask rendering.
#[derive(Debug, Clone)]
pub struct SynthTree {
    /// parents[l-2]: level-l node id -> its level-(l-1) parent id.
    pub parents: Vec<BTreeMap<u32, u32>>,
    /// Per leaf (in id order): its ancestor ids at levels 1..=L.
    pub leaf_ancestors: Vec<Vec<u32>>,
    /// Per gaussian: owning leaf index.
    pub gaussian_leaf: Vec<u32>,
    /// Nodes with exactly one child: (child level, parent id).
    pub indivisible: BTreeSet<(usize, u32)>,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub scene: GaussianScene,
    pub cameras: Vec<Camera>,
    pub pyramid: MaskPyramid,
    pub tree: SynthTree,
}

fn quantize(x: f64) -> f64 {
    x as f32 as f64
}

/// Uniform unit quaternion (Shoemake's method).
fn random_quaternion(rng: &mut ChaCha8Rng) -> [f64; 4] {
    let u1: f64 = rng.gen();
    let u2: f64 = rng.gen::<f64>() * std::f64::consts::TAU;
    let u3: f64 = rng.gen::<f64>() * std::f64::consts::TAU;
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    [b * u3.cos(), a * u2.sin(), a * u2.cos(), b * u3.sin()]
}

fn hue_color(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let h: f64 = rng.gen::<f64>() * 6.0;
    let x = 1.0 - (h % 2.0 - 1.0).abs();
    let (r, g, b) = match h as u32 {
        0 => (1.0, x, 0.2),
        1 => (x, 1.0, 0.2),
        2 => (0.2, 1.0, x),
        3 => (0.2, x, 1.0),
        4 => (x, 0.2, 1.0),
        _ => (1.0, 0.2, x),
    };
    [r, g, b]
}

struct FlatNode {
    level: usize,
    id: u32,
    parent: Option<u32>,
    center: [f64; 3],
    spread: f64,
    opacity: f64,
    gaussians: Option<usize>,
    children: Vec<usize>,
}

/// Generate the scene, cameras, nested masks and ground-truth tree.
pub fn generate(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let levels = spec.layout.levels();

    // Flatten the tree breadth-first, assigning per-level ids and placing
    // cluster centers on jittered circles around their parents.
    let mut nodes: Vec<FlatNode> = Vec::new();
    let mut next_id = vec![0u32; levels];
    let mut queue: Vec<(usize, Option<usize>, ObjectNode)> =
        spec.roots.iter().map(|r| (1usize, None, r.clone())).collect();
    while !queue.is_empty() {
        let mut next_queue = Vec::new();
        let by_parent: Vec<(usize, Option<usize>, ObjectNode)> = queue;
        // Count siblings per parent for circle placement.
        let mut sibling_count: BTreeMap<Option<usize>, usize> = BTreeMap::new();
        for (_, parent, _) in &by_parent {
            *sibling_count.entry(*parent).or_insert(0) += 1;
        }
        let mut sibling_index: BTreeMap<Option<usize>, usize> = BTreeMap::new();
        for (level, parent, node) in by_parent {
            let idx_in_parent = {
                let e = sibling_index.entry(parent).or_insert(0);
                let v = *e;
                *e += 1;
                v
            };
            let count = sibling_count[&parent];
            let radius = spec.cluster_radius * spec.cluster_shrink.powi(level as i32 - 1);
            let (parent_center, parent_spread) = match parent {
                Some(pi) => (nodes[pi].center, nodes[pi].spread),
                None => ([0.0, 0.0, 0.0], spec.cluster_radius),
            };
            let center = match node.center {
                Some(c) => c,
                None => {
                    let angle = std::f64::consts::TAU * idx_in_parent as f64 / count as f64
                        + rng.gen_range(-0.25..0.25);
                    let r = if count == 1 { 0.0 } else { radius.min(parent_spread) };
                    [
                        parent_center[0] + r * angle.cos(),
                        parent_center[1] + rng.gen_range(-0.3..0.3) * r,
                        parent_center[2] + r * angle.sin(),
                    ]
                }
            };
            let spread = node.spread.unwrap_or(radius * 0.55);
            next_id[level - 1] += 1;
            let id = next_id[level - 1];
            let flat_idx = nodes.len();
            nodes.push(FlatNode {
                level,
                id,
                parent: parent.map(|pi| nodes[pi].id),
                center,
                spread,
                opacity: node.opacity,
                gaussians: node.gaussians,
                children: Vec::new(),
            });
            if let Some(pi) = parent {
                nodes[pi].children.push(flat_idx);
            }
            for child in node.children {
                next_queue.push((level + 1, Some(flat_idx), child));
            }
        }
        queue = next_queue;
    }

    let mut parents: Vec<BTreeMap<u32, u32>> = vec![BTreeMap::new(); levels.saturating_sub(1)];
    for n in &nodes {
        if let Some(p) = n.parent {
            parents[n.level - 2].insert(n.id, p);
        }
    }

    // Leaves in id order, with ancestor chains.
    let mut leaves: Vec<usize> = nodes
        .iter()
        .enumerate()
        .filter(|(_, n)| n.level == levels)
        .map(|(i, _)| i)
        .collect();
    leaves.sort_by_key(|&i| nodes[i].id);
    let mut leaf_ancestors = Vec::with_capacity(leaves.len());
    for &li in &leaves {
        let mut chain = vec![0u32; levels];
        chain[levels - 1] = nodes[li].id;
        let mut cur = &nodes[li];
        while let Some(pid) = cur.parent {
            let pi = nodes
                .iter()
                .position(|n| n.level == cur.level - 1 && n.id == pid)
                .expect("parent exists");
            chain[cur.level - 2] = pid;
            cur = &nodes[pi];
        }
        leaf_ancestors.push(chain);
    }

    // Gaussians per leaf.
    let dim = spec.layout.total_dim();
    let mut gaussians = Vec::new();
    let mut gaussian_leaf = Vec::new();
    for (leaf_idx, &li) in leaves.iter().enumerate() {
        let n = &nodes[li];
        let count = n.gaussians.unwrap_or(spec.gaussians_per_leaf).max(1);
        let color = hue_color(&mut rng);
        let sigma = n.spread;
        for _ in 0..count {
            let position = [
                quantize(n.center[0] + rng.gen_range(-sigma..sigma)),
                quantize(n.center[1] + rng.gen_range(-sigma..sigma) * 0.7),
                quantize(n.center[2] + rng.gen_range(-sigma..sigma)),
            ];
            let splat_sigma = sigma * rng.gen_range(0.35..0.6) + 0.02;
            let log_scale = [
                quantize(splat_sigma.ln() + rng.gen_range(-0.2..0.2)),
                quantize(splat_sigma.ln() + rng.gen_range(-0.2..0.2)),
                quantize(splat_sigma.ln() + rng.gen_range(-0.2..0.2)),
            ];
            let q = random_quaternion(&mut rng);
            let rotation = [quantize(q[0]), quantize(q[1]), quantize(q[2]), quantize(q[3])];
            gaussians.push(Gaussian {
                position,
                log_scale,
                rotation,
                opacity_logit: quantize(logit(n.opacity)),
                color: [quantize(color[0]), quantize(color[1]), quantize(color[2])],
                feature_logits: vec![0.0; dim],
            });
            gaussian_leaf.push(leaf_idx as u32);
        }
    }
    let scene = GaussianScene::new(gaussians, spec.layout.clone())?;

    // Camera ring with mild elevation variation.
    let fx = spec.width as f64 * 1.05;
    let mut cameras = Vec::with_capacity(spec.camera_count);
    for i in 0..spec.camera_count {
        let angle = std::f64::consts::TAU * i as f64 / spec.camera_count as f64;
        let elevation = 0.35 + 0.25 * ((i % 3) as f64 - 1.0);
        let eye = [
            spec.camera_radius * angle.cos(),
            spec.camera_radius * elevation,
            spec.camera_radius * angle.sin(),
        ];
        cameras.push(Camera::look_at(
            eye,
            [0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            fx,
            spec.width,
            spec.height,
        ));
    }

    // Ground-truth masks: dominant contributor per pixel, optionally with
    // overridden opacity so annotation matches what is visible rather than
    // what out-blends what.
    let mask_scene = match spec.mask_opacity_override {
        Some(o) => {
            let mut s = scene.clone();
            let l = quantize(logit(o));
            for g in &mut s.gaussians {
                g.opacity_logit = l;
            }
            s
        }
        None => scene.clone(),
    };
    let mut views = Vec::with_capacity(cameras.len());
    for cam in &cameras {
        let list = project(&mask_scene, cam);
        let bins = bin_splats(&list);
        let (winners, trans) =
            dominant_contributors(&list, &bins, &frame_pixels(spec.width, spec.height));
        let mut maps = vec![vec![0u32; (spec.width * spec.height) as usize]; levels];
        for (p, winner) in winners.iter().enumerate() {
            if trans[p] > 0.5 {
                continue;
            }
            if let Some(g) = winner {
                let chain = &leaf_ancestors[gaussian_leaf[*g as usize] as usize];
                for l in 0..levels {
                    maps[l][p] = chain[l];
                }
            }
        }
        views.push(maps);
    }
    let pyramid = MaskPyramid::from_label_maps(spec.width, spec.height, views)?;

    let mut indivisible = BTreeSet::new();
    for (li, map) in parents.iter().enumerate() {
        let mut child_counts: BTreeMap<u32, usize> = BTreeMap::new();
        for &p in map.values() {
            *child_counts.entry(p).or_insert(0) += 1;
        }
        for (&p, &c) in &child_counts {
            if c == 1 {
                indivisible.insert((li + 2, p));
            }
        }
    }

    Ok(SynthOutput {
        scene,
        cameras,
        pyramid,
        tree: SynthTree { parents, leaf_ancestors, gaussian_leaf, indivisible },
    })
}

/// Semi-transparent fixture: an opacity-0.3 box floating over an opaque
/// floor. Ground truth is annotated with full opacity (the annotator sees
/// the box), while compositing with the stored opacities underweights it —
/// the failure mode opacity fine-tuning repairs.
pub fn semi_transparent_fixture(seed: u64) -> Result<SynthOutput> {
    let layout = LevelLayout::new(&[6]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gaussians = Vec::new();
    let mut gaussian_leaf = Vec::new();
    // Floor: a 12x12 grid of flat splats at y = -0.55.
    for iy in 0..12 {
        for ix in 0..12 {
            let x = -1.8 + 3.6 * ix as f64 / 11.0 + rng.gen_range(-0.05..0.05);
            let z = -1.8 + 3.6 * iy as f64 / 11.0 + rng.gen_range(-0.05..0.05);
            gaussians.push(Gaussian {
                position: [quantize(x), quantize(-0.55), quantize(z)],
                log_scale: [quantize(-1.45), quantize(-2.5), quantize(-1.45)],
                rotation: [1.0, 0.0, 0.0, 0.0],
                opacity_logit: quantize(logit(0.95)),
                color: [0.35, 0.3, 0.25],
                feature_logits: vec![0.0; 6],
            });
            gaussian_leaf.push(0);
        }
    }
    // Box: a loose cluster above the floor with low opacity.
    for _ in 0..70 {
        gaussians.push(Gaussian {
            position: [
                quantize(rng.gen_range(-0.5..0.5)),
                quantize(rng.gen_range(-0.15..0.45)),
                quantize(rng.gen_range(-0.5..0.5)),
            ],
            log_scale: [
                quantize(rng.gen_range(-1.9..-1.5)),
                quantize(rng.gen_range(-1.9..-1.5)),
                quantize(rng.gen_range(-1.9..-1.5)),
            ],
            rotation: {
                let q = random_quaternion(&mut rng);
                [quantize(q[0]), quantize(q[1]), quantize(q[2]), quantize(q[3])]
            },
            opacity_logit: quantize(logit(0.3)),
            color: [0.7, 0.8, 0.9],
            feature_logits: vec![0.0; 6],
        });
        gaussian_leaf.push(1);
    }
    let scene = GaussianScene::new(gaussians, layout)?;

    let width = 48u32;
    let height = 48u32;
    let fx = width as f64 * 1.05;
    let mut cameras = Vec::new();
    for i in 0..8 {
        let angle = std::f64::consts::TAU * i as f64 / 8.0;
        let eye = [5.2 * angle.cos(), 4.2, 5.2 * angle.sin()];
        cameras.push(Camera::look_at(eye, [0.0, -0.2, 0.0], [0.0, 1.0, 0.0], fx, width, height));
    }

    // Annotate with full opacity: the box owns its silhouette.
    let mut annotated = scene.clone();
    for g in &mut annotated.gaussians {
        g.opacity_logit = quantize(logit(0.95));
    }
    let mut views = Vec::new();
    for cam in &cameras {
        let list = project(&annotated, cam);
        let bins = bin_splats(&list);
        let (winners, trans) = dominant_contributors(&list, &bins, &frame_pixels(width, height));
        let mut map = vec![0u32; (width * height) as usize];
        for (p, winner) in winners.iter().enumerate() {
            if trans[p] > 0.5 {
                continue;
            }
            if let Some(g) = winner {
                map[p] = gaussian_leaf[*g as usize] + 1;
            }
        }
        views.push(vec![map]);
    }
    let pyramid = MaskPyramid::from_label_maps(width, height, views)?;
    Ok(SynthOutput {
        scene,
        cameras,
        pyramid,
        tree: SynthTree {
            parents: Vec::new(),
            leaf_ancestors: vec![vec![1], vec![2]],
            gaussian_leaf,
            indivisible: BTreeSet::new(),
        },
    })
}

/// Build a synthetic scene from a `key = value` spec file. `preset` picks a
/// named fixture; remaining keys override its fields.
pub fn generate_from_kv(kv: &KvFile) -> Result<SynthOutput> {
    if let Some("semi_transparent") = kv.get("preset") {
        let seed = match kv.get("seed") {
            Some(v) => config::parse_u64("seed", v)?,
            None => 0,
        };
        for (key, _) in &kv.entries {
            if !matches!(key.as_str(), "preset" | "seed") {
                return Err(Error::Config(format!(
                    "key {key:?} is not applicable to the semi_transparent preset"
                )));
            }
        }
        return semi_transparent_fixture(seed);
    }
    let mut spec = match kv.get("preset") {
        None | Some("default") => SynthSpec::default_tree(),
        Some("indivisible") => SynthSpec::indivisible_group(),
        Some("small_masks") => SynthSpec::small_masks(),
        Some(other) => return Err(Error::Config(format!("unknown preset {other:?}"))),
    };
    for (key, value) in &kv.entries {
        match key.as_str() {
            "preset" => {}
            "branching" => {
                let branching: Vec<usize> = config::parse_u8_list(key, value)?
                    .into_iter()
                    .map(|v| v as usize)
                    .collect();
                if branching.is_empty() || branching.contains(&0) {
                    return Err(Error::Config("branching: entries must be >= 1".into()));
                }
                spec.roots = ObjectNode::uniform(&branching, 0.92);
            }
            "level_dims" => {
                spec.layout = LevelLayout::new(&config::parse_u8_list(key, value)?)?
            }
            "gaussians_per_leaf" => {
                spec.gaussians_per_leaf = config::parse_usize(key, value)?.max(1)
            }
            "cameras" => spec.camera_count = config::parse_usize(key, value)?.max(1),
            "radius" => spec.camera_radius = config::parse_f64(key, value)?,
            "width" => spec.width = config::parse_u64(key, value)? as u32,
            "height" => spec.height = config::parse_u64(key, value)? as u32,
            "seed" => spec.seed = config::parse_u64(key, value)?,
            "cluster_radius" => spec.cluster_radius = config::parse_f64(key, value)?,
            "cluster_shrink" => spec.cluster_shrink = config::parse_f64(key, value)?,
            "opacity" => {
                let o = config::parse_f64(key, value)?;
                if !(0.0 < o && o < 1.0) {
                    return Err(Error::Config("opacity: must lie in (0, 1)".into()));
                }
                fn set_opacity(n: &mut ObjectNode, o: f64) {
                    n.opacity = o;
                    for c in &mut n.children {
                        set_opacity(c, o);
                    }
                }
                for r in &mut spec.roots {
                    set_opacity(r, o);
                }
            }
            "mask_opacity_override" => {
                spec.mask_opacity_override = Some(config::parse_f64(key, value)?)
            }
            other => return Err(Error::Config(format!("unknown synth key {other:?}"))),
        }
    }
    if spec.roots.iter().any(|r| r.depth() != spec.layout.levels()) {
        return Err(Error::Config(format!(
            "object tree depth does not match {} layout levels; set branching and level_dims together",
            spec.layout.levels()
        )));
    }
    generate(&spec)
}
