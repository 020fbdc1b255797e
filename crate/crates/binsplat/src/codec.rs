//! Binarization with straight-through gradients, level slicing, the binary
//! regularizer, and extraction of final per-gaussian codes.

use crate::scene::{pack_code, CodeTable, GaussianScene, LevelLayout};

/// Hard threshold: 1 where the component is strictly above 0.5, else 0.
/// The tie at exactly 0.5 maps to 0.
pub fn binarize(features: &[f64]) -> Vec<f64> {
    features.iter().map(|&x| if x > 0.5 { 1.0 } else { 0.0 }).collect()
}

/// The straight-through backward: gradients w.r.t. the binarized output pass
/// to the pre-binarized input unchanged.
pub fn ste_backward(upstream: &[f64]) -> Vec<f64> {
    upstream.to_vec()
}

/// Components of levels 1..=level: a contiguous prefix of the storage, so
/// concatenating the per-level slices is the identity on storage.
pub fn slice_prefix<'a>(features: &'a [f64], layout: &LevelLayout, level: usize) -> &'a [f64] {
    assert!(
        level >= 1 && level <= layout.levels(),
        "level {level} out of range 1..={}",
        layout.levels()
    );
    assert_eq!(features.len(), layout.total_dim());
    &features[..layout.prefix_width(level)]
}

/// Mean over batch pixels of the squared distance between each pre-binarized
/// feature row and its hard threshold. Returns the loss and its gradient
/// w.r.t. the features (the indicator is treated as a constant).
pub fn binary_regularizer(features: &[f64], dim: usize) -> (f64, Vec<f64>) {
    assert!(dim > 0 && features.len() % dim == 0);
    let batch = features.len() / dim;
    if batch == 0 {
        return (0.0, Vec::new());
    }
    let inv = 1.0 / batch as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; features.len()];
    for (g, &x) in grad.iter_mut().zip(features) {
        let b = if x > 0.5 { 1.0 } else { 0.0 };
        let d = b - x;
        loss += d * d;
        *g = 2.0 * (x - b) * inv;
    }
    (loss * inv, grad)
}

/// Threshold each gaussian's sigmoid activations at 0.5 and pack the bits
/// into the scene's code table.
pub fn extract_codes(scene: &GaussianScene) -> CodeTable {
    let codes = scene
        .gaussians
        .iter()
        .map(|g| {
            let bits = binarize(&g.feature_activations());
            pack_code(&bits, &scene.layout)
        })
        .collect();
    CodeTable::new(codes, scene.layout.clone()).expect("packed codes fit the layout")
}

/// Indices of gaussians whose level-`level` class equals `class_value`.
/// A plain O(N) scan over packed codes; no clustering, no distances.
pub fn select_gaussians(codes: &CodeTable, level: usize, class_value: u32) -> Vec<usize> {
    let mask = codes.layout.prefix_mask(level);
    assert_eq!(class_value & !mask, 0, "class value does not fit level {level}");
    codes
        .codes
        .iter()
        .enumerate()
        .filter(|(_, &c)| c & mask == class_value)
        .map(|(i, _)| i)
        .collect()
}
