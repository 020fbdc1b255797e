//! Hierarchical mask pyramids and their nesting discipline.
//!
//! Label 0 means unlabeled. Mask ids are global across views: the same id at
//! the same level names the same physical object in every view. Two rules
//! must hold for every view:
//!   1. pixels sharing a level-l mask share one level-(l-1) mask, and
//!   2. a pixel labeled at level l is labeled at every coarser level.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::formats::bgm1;
use crate::scene::LevelLayout;

/// Per-view, per-level label maps with the validated hierarchy and the
/// sampling indexes derived from it. Immutable after construction.
#[derive(Debug, Clone)]
pub struct MaskPyramid {
    width: u32,
    height: u32,
    levels: usize,
    /// views[v][l-1] is the level-l label map of view v, row-major.
    views: Vec<Vec<Vec<u32>>>,
    /// Per level: mask id -> pixel count summed over views.
    registries: Vec<BTreeMap<u32, u64>>,
    /// parents[l-2]: level-l mask id -> its level-(l-1) parent id.
    parents: Vec<BTreeMap<u32, u32>>,
    /// Per view: linear indices of pixels labeled at level 1.
    labeled: Vec<Vec<u32>>,
    /// Per view: finest-level mask id -> linear pixel indices in that view.
    finest: Vec<BTreeMap<u32, Vec<u32>>>,
}

impl MaskPyramid {
    /// Validate raw label maps and build the registries and parent links.
    pub fn from_label_maps(width: u32, height: u32, views: Vec<Vec<Vec<u32>>>) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::Format("mask pyramid needs at least one view".into()));
        }
        let levels = views[0].len();
        if levels == 0 {
            return Err(Error::Format("mask pyramid needs at least one level".into()));
        }
        let pixels = width as usize * height as usize;
        for (v, maps) in views.iter().enumerate() {
            if maps.len() != levels {
                return Err(Error::Format(format!(
                    "view {v} has {} levels, expected {levels}",
                    maps.len()
                )));
            }
            if let Some(l) = maps.iter().position(|m| m.len() != pixels) {
                return Err(Error::Format(format!(
                    "view {v} level {} has {} pixels, expected {pixels}",
                    l + 1,
                    maps[l].len()
                )));
            }
        }

        let mut registries = vec![BTreeMap::new(); levels];
        let mut parents: Vec<BTreeMap<u32, u32>> = vec![BTreeMap::new(); levels.saturating_sub(1)];
        for (v, maps) in views.iter().enumerate() {
            for p in 0..pixels {
                for l in 1..=levels {
                    let id = maps[l - 1][p];
                    if id == 0 {
                        continue;
                    }
                    *registries[l - 1].entry(id).or_insert(0) += 1;
                    if l >= 2 {
                        let parent = maps[l - 2][p];
                        let (x, y) = (p as u32 % width, p as u32 / width);
                        if parent == 0 {
                            return Err(Error::Nesting { view: v, x, y, level: l });
                        }
                        match parents[l - 2].get(&id) {
                            None => {
                                parents[l - 2].insert(id, parent);
                            }
                            Some(&known) if known != parent => {
                                return Err(Error::Nesting { view: v, x, y, level: l });
                            }
                            _ => {}
                        }
                    }
                }
            }
        }

        let mut labeled = Vec::with_capacity(views.len());
        let mut finest = Vec::with_capacity(views.len());
        for maps in &views {
            let mut lab = Vec::new();
            let mut fin: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
            for p in 0..pixels {
                if maps[0][p] != 0 {
                    lab.push(p as u32);
                }
                let f = maps[levels - 1][p];
                if f != 0 {
                    fin.entry(f).or_default().push(p as u32);
                }
            }
            labeled.push(lab);
            finest.push(fin);
        }

        Ok(Self { width, height, levels, views, registries, parents, labeled, finest })
    }

    /// Load one BGM1 file per view and validate the hierarchy against the
    /// layout's level count.
    pub fn load<P: AsRef<std::path::Path>>(paths: &[P], layout: &LevelLayout) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::Format("no mask files given".into()));
        }
        let mut views = Vec::with_capacity(paths.len());
        let mut dims = None;
        for path in paths {
            let (w, h, maps) = bgm1::read(path.as_ref())?;
            if maps.len() != layout.levels() {
                return Err(Error::Format(format!(
                    "{}: {} levels, layout expects {}",
                    path.as_ref().display(),
                    maps.len(),
                    layout.levels()
                )));
            }
            match dims {
                None => dims = Some((w, h)),
                Some(d) if d != (w, h) => {
                    return Err(Error::Format(format!(
                        "{}: size {w}x{h} differs from first view {}x{}",
                        path.as_ref().display(),
                        d.0,
                        d.1
                    )));
                }
                _ => {}
            }
            views.push(maps);
        }
        let (w, h) = dims.unwrap();
        Self::from_label_maps(w, h, views)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn view_count(&self) -> usize {
        self.views.len()
    }

    /// Level-`level` label map of a view, row-major.
    pub fn label_map(&self, view: usize, level: usize) -> &[u32] {
        &self.views[view][level - 1]
    }

    /// Label of a pixel at a level; 0 when unlabeled.
    pub fn label_at(&self, view: usize, level: usize, x: u32, y: u32) -> u32 {
        self.views[view][level - 1][(y * self.width + x) as usize]
    }

    /// Mask id -> total pixel count at a level.
    pub fn registry(&self, level: usize) -> &BTreeMap<u32, u64> {
        &self.registries[level - 1]
    }

    /// Parent (level-(l-1)) id of a level-`level` mask, for level >= 2.
    pub fn parent_of(&self, level: usize, id: u32) -> Option<u32> {
        self.parents.get(level - 2).and_then(|m| m.get(&id)).copied()
    }

    /// Linear indices of level-1-labeled pixels in a view.
    pub fn labeled_pixels(&self, view: usize) -> &[u32] {
        &self.labeled[view]
    }

    /// Finest-level mask id -> pixel indices in a view.
    pub fn finest_masks(&self, view: usize) -> &BTreeMap<u32, Vec<u32>> {
        &self.finest[view]
    }

    /// Number of distinct children a level-(l-1) mask has at level l.
    pub fn child_count(&self, parent_level: usize, parent_id: u32) -> usize {
        match self.parents.get(parent_level - 1) {
            Some(m) => m.values().filter(|&&p| p == parent_id).count(),
            None => 0,
        }
    }
}

/// Rewrite arbitrary label maps into a nested pyramid.
///
/// Level 1 keeps its partition with ids renumbered in ascending id order.
/// At each finer level, every mask is split by intersection with the
/// level-(l-1) masks; the fragments are renumbered by (parent id, original
/// id) lexicographic order. Pixels whose parent is unlabeled become
/// unlabeled, so rule 2 holds by construction.
pub fn enforce_nesting(width: u32, height: u32, views: &[Vec<Vec<u32>>]) -> Result<MaskPyramid> {
    if views.is_empty() || views[0].is_empty() {
        return Err(Error::Format("enforce_nesting needs at least one view and level".into()));
    }
    let levels = views[0].len();
    let pixels = width as usize * height as usize;
    let mut out: Vec<Vec<Vec<u32>>> = vec![vec![Vec::new(); levels]; views.len()];

    // Level 1: renumber distinct ids in ascending order.
    let mut ids: Vec<u32> = views
        .iter()
        .flat_map(|maps| maps[0].iter().copied())
        .filter(|&id| id != 0)
        .collect();
    ids.sort_unstable();
    ids.dedup();
    let renumber: BTreeMap<u32, u32> =
        ids.iter().enumerate().map(|(i, &id)| (id, i as u32 + 1)).collect();
    for (v, maps) in views.iter().enumerate() {
        out[v][0] = maps[0].iter().map(|id| renumber.get(id).copied().unwrap_or(0)).collect();
    }

    for l in 2..=levels {
        // Collect every (new parent id, original id) fragment in use.
        let mut pairs: Vec<(u32, u32)> = Vec::new();
        for (v, maps) in views.iter().enumerate() {
            for p in 0..pixels {
                let orig = maps[l - 1][p];
                let parent = out[v][l - 2][p];
                if orig != 0 && parent != 0 {
                    pairs.push((parent, orig));
                }
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        let assigned: BTreeMap<(u32, u32), u32> =
            pairs.iter().enumerate().map(|(i, &pair)| (pair, i as u32 + 1)).collect();
        for (v, maps) in views.iter().enumerate() {
            out[v][l - 1] = (0..pixels)
                .map(|p| {
                    let orig = maps[l - 1][p];
                    let parent = out[v][l - 2][p];
                    if orig == 0 || parent == 0 {
                        0
                    } else {
                        assigned[&(parent, orig)]
                    }
                })
                .collect();
        }
    }

    MaskPyramid::from_label_maps(width, height, out)
}
