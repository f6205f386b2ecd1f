use iadbench_core::image::PixelMask;
use iadbench_core::metrics::{
    aupro, auroc, average_precision, connected_regions, forgetting_measure, mean_spro,
    pixel_scores, pro_curve, LabeledScores, RegionSet, Saturation, ScoreMap, TaskMatrix,
};
use iadbench_core::rng::SplitMix64;
use iadbench_oracles as oracle;
use proptest::prelude::*;

/// Random labelled scores; half the instances draw from a handful of levels
/// so ties are common.
fn random_instance(rng: &mut SplitMix64) -> (Vec<f64>, Vec<bool>) {
    let n = 2 + rng.below(199) as usize;
    let tie_heavy = rng.below(2) == 0;
    let levels = 1 + rng.below(5);
    loop {
        let labels: Vec<bool> = (0..n).map(|_| rng.below(3) == 0).collect();
        if !labels.iter().any(|l| *l) || labels.iter().all(|l| *l) {
            continue;
        }
        let scores = labels
            .iter()
            .map(|&l| {
                let base = if tie_heavy {
                    rng.below(levels) as f64 / levels as f64
                } else {
                    rng.next_f64()
                };
                if l {
                    base + 0.2 * rng.next_f64()
                } else {
                    base
                }
            })
            .collect();
        return (scores, labels);
    }
}

#[test]
fn ranking_metrics_match_oracles() {
    let mut rng = SplitMix64::new(11);
    for _ in 0..500 {
        let (s, l) = random_instance(&mut rng);
        let data = LabeledScores::new(s.clone(), l.clone()).unwrap();
        let a = auroc(&data).unwrap();
        assert!((a - oracle::auroc_pairwise(&s, &l)).abs() < 1e-9);
        let ap = average_precision(&data).unwrap();
        assert!((ap - oracle::ap_step_sum(&s, &l)).abs() < 1e-9);
        assert!(
            (0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&ap),
            "{a} {ap}"
        );
    }
}

proptest! {
    #[test]
    fn ranking_metrics_invariant_under_monotone_maps(
        raw in prop::collection::vec((0u32..50, any::<bool>()), 2..120),
        scale in 0.1f64..10.0,
        shift in -5.0f64..5.0,
    ) {
        let labels: Vec<bool> = raw.iter().map(|r| r.1).collect();
        prop_assume!(labels.iter().any(|l| *l) && labels.iter().any(|l| !*l));
        let scores: Vec<f64> = raw.iter().map(|r| r.0 as f64 / 50.0).collect();
        let mapped: Vec<f64> = scores.iter().map(|s| (s * scale).exp() + shift).collect();
        let a = LabeledScores::new(scores, labels.clone()).unwrap();
        let b = LabeledScores::new(mapped, labels).unwrap();
        prop_assert_eq!(auroc(&a).unwrap(), auroc(&b).unwrap());
        prop_assert_eq!(average_precision(&a).unwrap(), average_precision(&b).unwrap());
    }

    #[test]
    fn auroc_complement_law(
        labels in prop::collection::vec(any::<bool>(), 2..150),
        seed in any::<u64>(),
    ) {
        prop_assume!(labels.iter().any(|l| *l) && labels.iter().any(|l| !*l));
        let mut rng = SplitMix64::new(seed);
        let mut scores: Vec<f64> = (0..labels.len()).map(|i| i as f64).collect();
        for i in (1..scores.len()).rev() {
            scores.swap(i, rng.below(i as u64 + 1) as usize);
        }
        let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
        let a = auroc(&LabeledScores::new(scores.clone(), labels).unwrap()).unwrap();
        let b = auroc(&LabeledScores::new(scores, flipped).unwrap()).unwrap();
        prop_assert!((a + b - 1.0).abs() < 1e-12);
    }
}

struct RegionInstance {
    maps: Vec<ScoreMap>,
    masks: Vec<PixelMask>,
}

/// Up to three 16×16 images with 1–4 rectangular defects in total and
/// quantized scores (so thresholds tie).
fn random_region_instance(rng: &mut SplitMix64) -> RegionInstance {
    const S: usize = 16;
    let images = 1 + rng.below(3) as usize;
    let mut masks: Vec<PixelMask> = (0..images)
        .map(|_| PixelMask::empty(S, S).unwrap())
        .collect();
    let defects = 1 + rng.below(4) as usize;
    for _ in 0..defects {
        let m = &mut masks[rng.below(images as u64) as usize];
        let (h, w) = (1 + rng.below(5) as usize, 1 + rng.below(5) as usize);
        let (r0, c0) = (
            rng.below((S - h) as u64) as usize,
            rng.below((S - w) as u64) as usize,
        );
        for r in r0..r0 + h {
            for c in c0..c0 + w {
                m.set(r, c, true);
            }
        }
    }
    let levels = 2 + rng.below(30);
    let maps = masks
        .iter()
        .map(|m| {
            let v = m
                .bits()
                .iter()
                .map(|&b| {
                    let base = rng.below(levels) as f64 / levels as f64;
                    if b {
                        (base + 0.3).min(1.0)
                    } else {
                        base
                    }
                })
                .collect();
            ScoreMap::new(S, S, v).unwrap()
        })
        .collect();
    RegionInstance { maps, masks }
}

fn oracle_regions(sets: &[RegionSet]) -> Vec<oracle::OracleRegion> {
    sets.iter()
        .enumerate()
        .flat_map(|(image, rs)| {
            rs.regions().iter().map(move |r| oracle::OracleRegion {
                image,
                pixels: r.pixels.clone(),
                saturation: r.saturation,
            })
        })
        .collect()
}

fn raw_maps(maps: &[ScoreMap]) -> Vec<Vec<f64>> {
    maps.iter().map(|m| m.values().to_vec()).collect()
}

#[test]
fn region_metrics_match_exhaustive_oracle() {
    let mut rng = SplitMix64::new(12);
    for _ in 0..100 {
        let inst = random_region_instance(&mut rng);
        let raw = raw_maps(&inst.maps);
        let plain: Vec<RegionSet> = inst
            .masks
            .iter()
            .map(|m| connected_regions(m, None))
            .collect();
        for limit in [0.05, 0.3, 1.0] {
            let got = aupro(&inst.maps, &inst.masks, limit).unwrap();
            let want = oracle::region_overlap_area(&raw, &oracle_regions(&plain), limit);
            assert!((got - want).abs() < 1e-6, "aupro {got} vs {want}");
        }
        let sat = Saturation::Pixels(1.0 + rng.below(6) as f64);
        let saturated: Vec<RegionSet> = inst
            .masks
            .iter()
            .map(|m| connected_regions(m, Some(sat)))
            .collect();
        for limit in [0.05, 0.3] {
            let got = mean_spro(&inst.maps, &saturated, limit).unwrap();
            let want = oracle::region_overlap_area(&raw, &oracle_regions(&saturated), limit);
            assert!((got - want).abs() < 1e-6, "spro {got} vs {want}");
        }
    }
}

#[test]
fn spro_reduces_to_pro_at_full_saturation() {
    let mut rng = SplitMix64::new(13);
    for _ in 0..100 {
        let inst = random_region_instance(&mut rng);
        let full: Vec<RegionSet> = inst
            .masks
            .iter()
            .map(|m| connected_regions(m, Some(Saturation::Relative(1.0))))
            .collect();
        for limit in [0.05, 0.3, 0.7, 1.0] {
            let a = aupro(&inst.maps, &inst.masks, limit).unwrap();
            let s = mean_spro(&inst.maps, &full, limit).unwrap();
            assert!((a - s).abs() <= 1e-12, "{a} vs {s}");
        }
    }
}

#[test]
fn region_connectivity_matches_flood_fill() {
    let mut rng = SplitMix64::new(14);
    for _ in 0..200 {
        let bits: Vec<bool> = (0..144).map(|_| rng.below(3) == 0).collect();
        let mask = PixelMask::new(12, 12, bits.clone()).unwrap();
        let got: Vec<Vec<usize>> = connected_regions(&mask, None)
            .regions()
            .iter()
            .map(|r| r.pixels.clone())
            .collect();
        assert_eq!(got, oracle::flood_fill_components(&bits, 12, 12));
    }
}

#[test]
fn pro_curve_is_monotone() {
    let mut rng = SplitMix64::new(15);
    for _ in 0..50 {
        let inst = random_region_instance(&mut rng);
        let curve = pro_curve(&inst.maps, &inst.masks).unwrap();
        for w in curve.windows(2) {
            assert!(w[0].fpr <= w[1].fpr && w[0].value <= w[1].value);
        }
        let last = curve.last().unwrap();
        assert_eq!((last.fpr, last.value), (1.0, 1.0));
    }
}

#[test]
fn pixel_pooling_ignores_image_order() {
    let mut rng = SplitMix64::new(16);
    for _ in 0..20 {
        let inst = random_region_instance(&mut rng);
        let fwd = pixel_scores(&inst.maps, &inst.masks).unwrap();
        let mut maps = inst.maps.clone();
        let mut masks = inst.masks.clone();
        maps.reverse();
        masks.reverse();
        let rev = pixel_scores(&maps, &masks).unwrap();
        assert_eq!(auroc(&fwd).unwrap(), auroc(&rev).unwrap());
        assert_eq!(
            average_precision(&fwd).unwrap(),
            average_precision(&rev).unwrap()
        );
    }
}

#[test]
fn forgetting_matches_dense_oracle() {
    let mut rng = SplitMix64::new(17);
    for _ in 0..200 {
        let k = 2 + rng.below(5) as usize;
        let dense: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..k).map(|_| rng.next_f64()).collect())
            .collect();
        let mut t = TaskMatrix::new(k);
        for l in 1..=k {
            for j in 1..=l {
                t.set(l, j, dense[l - 1][j - 1]).unwrap();
            }
        }
        let fm = forgetting_measure(&t).unwrap();
        assert_eq!(fm.per_task, oracle::forgetting_dense(&dense));
        assert!(fm.per_task.iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}

#[test]
fn forgetting_three_task_example() {
    let mut t = TaskMatrix::new(3);
    for (l, j, v) in [
        (1, 1, 0.8),
        (2, 1, 0.6),
        (2, 2, 0.9),
        (3, 1, 0.7),
        (3, 2, 0.85),
        (3, 3, 0.5),
    ] {
        t.set(l, j, v).unwrap();
    }
    let fm = forgetting_measure(&t).unwrap();
    assert!((fm.per_task[0] - 0.1).abs() < 1e-12);
    assert!((fm.per_task[1] - 0.05).abs() < 1e-12);
    assert!((fm.mean - 0.075).abs() < 1e-12);
}
