//! Scratch experiment harness (not part of the deliverable).

use binsplat::eval::{eval_miou, pairwise_consistency};
use binsplat::render::render_class_map;
use binsplat::synth::{generate, SynthSpec};
use binsplat::trainer::{train, TrainConfig};

fn main() -> binsplat::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let iterations: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let lr: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.005);
    let noise: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.5);
    let opacity: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0.92);

    let mut spec = SynthSpec::default_tree();
    fn set_opacity(n: &mut binsplat::synth::ObjectNode, o: f64) {
        n.opacity = o;
        for c in &mut n.children {
            set_opacity(c, o);
        }
    }
    for r in &mut spec.roots {
        set_opacity(r, opacity);
    }
    let out = generate(&spec)?;
    let cfg = TrainConfig {
        iterations,
        lr_features: lr,
        feature_init_noise: noise,
        ..TrainConfig::desk()
    };
    let t0 = std::time::Instant::now();
    let result = train(&out.scene, &out.cameras, &out.pyramid, &cfg)?;
    print!("iters {iterations} lr {lr} noise {noise}: {:.1}s |", t0.elapsed().as_secs_f64());
    for probe in [iterations as usize / 4, iterations as usize / 2, iterations as usize - 1] {
        let b = &result.log[probe].breakdown;
        print!(
            " @{probe}: tot {:.0} reg {:.3} pos {:?} |",
            b.total,
            b.regularizer,
            b.levels.iter().map(|l| l.positive.round()).collect::<Vec<_>>()
        );
    }
    println!();
    let views: Vec<usize> = (0..out.cameras.len()).collect();
    for level in 1..=out.pyramid.levels() {
        let preds: Vec<Vec<u32>> = out
            .cameras
            .iter()
            .map(|c| render_class_map(&result.scene, c, &result.codes, level).unwrap())
            .collect();
        let miou = eval_miou(&preds, &out.pyramid, &views, level)?;
        let cons = pairwise_consistency(&preds, &out.pyramid, &views, level)?;
        println!(
            "  level {level}: mIoU {:.2}% cons {:.2}%  per-mask {:?}",
            miou.miou * 100.0,
            cons * 100.0,
            miou.per_mask.iter().map(|(id, i)| (*id, (i * 100.0).round())).collect::<Vec<_>>()
        );
    }
    // Worst-mask breakdown at the finest level.
    let finest = out.pyramid.levels();
    let preds: Vec<Vec<u32>> = out
        .cameras
        .iter()
        .map(|c| render_class_map(&result.scene, c, &result.codes, finest).unwrap())
        .collect();
    for target in out.pyramid.registry(finest).keys() {
        let mut hist: std::collections::BTreeMap<u32, u64> = Default::default();
        for (v, pred) in preds.iter().enumerate() {
            let truth = out.pyramid.label_map(v, finest);
            for (p, &t) in truth.iter().enumerate() {
                if t == *target {
                    *hist.entry(pred[p]).or_default() += 1;
                }
            }
        }
        let mut top: Vec<(u64, u32)> = hist.iter().map(|(&l, &n)| (n, l)).collect();
        top.sort_unstable_by(|a, b| b.cmp(a));
        let total: u64 = hist.values().sum();
        println!(
            "  truth mask {target}: {total} px, top predicted {:?}",
            top.iter().take(3).map(|(n, l)| (format!("{l:#x}"), *n)).collect::<Vec<_>>()
        );
        if top.len() >= 2 && top[1].0 * 4 > total {
            // Split mask: show the two top codes' share per view.
            let (a, b) = (top[0].1, top[1].1);
            let mut shares = Vec::new();
            for (v, pred) in preds.iter().enumerate() {
                let truth = out.pyramid.label_map(v, finest);
                let mut na = 0u32;
                let mut nb = 0u32;
                for (p, &t) in truth.iter().enumerate() {
                    if t == *target {
                        if pred[p] == a {
                            na += 1;
                        } else if pred[p] == b {
                            nb += 1;
                        }
                    }
                }
                shares.push(format!("v{v}:{na}/{nb}"));
            }
            println!("    split detail: {}", shares.join(" "));
        }
    }
    // Code spread per leaf cluster.
    let mut leaf_codes: std::collections::BTreeMap<u32, Vec<u32>> = Default::default();
    for (gi, &leaf) in out.tree.gaussian_leaf.iter().enumerate() {
        leaf_codes.entry(leaf).or_default().push(result.codes.codes[gi]);
    }
    for (leaf, codes) in &leaf_codes {
        let mut uniq: Vec<u32> = codes.clone();
        uniq.sort_unstable();
        uniq.dedup();
        let mode = {
            let mut best = (0u32, 0usize);
            for &c in &uniq {
                let n = codes.iter().filter(|&&x| x == c).count();
                if n > best.1 {
                    best = (c, n);
                }
            }
            best
        };
        println!(
            "  leaf {leaf}: {} gaussians, {} distinct codes, mode {:#010x} x{}",
            codes.len(),
            uniq.len(),
            mode.0,
            mode.1
        );
    }
    Ok(())
}
