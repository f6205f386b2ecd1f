use iadbench_core::detector::{
    coreset_select, covering_radius, extend_bank_for_task, render_anomaly_map, reweight,
    score_image, score_patches, CoresetBudget, CoresetParams, MemoryBank,
};
use iadbench_core::features::{Descriptor, FeatureProviderConfig, PatchFeatureGrid};
use iadbench_core::rng::SplitMix64;
use iadbench_oracles as oracle;
use proptest::prelude::*;

fn random_bank(rng: &mut SplitMix64, n: usize, dim: usize, quantized: bool) -> MemoryBank {
    let data = (0..n * dim)
        .map(|_| {
            if quantized {
                rng.below(4) as f32
            } else {
                (rng.next_f64() * 10.0 - 5.0) as f32
            }
        })
        .collect();
    MemoryBank::from_parts(dim, data, vec![0; n]).unwrap()
}

fn as_points(bank: &MemoryBank) -> Vec<Vec<f64>> {
    bank.vectors()
        .map(|v| v.iter().map(|x| f64::from(*x)).collect())
        .collect()
}

fn count(l: usize) -> CoresetParams {
    CoresetParams {
        budget: CoresetBudget::Count(l),
        projection_dim: None,
        seed: 0,
    }
}

fn grid_of(bank: &MemoryBank) -> PatchFeatureGrid {
    PatchFeatureGrid::new(
        1,
        bank.len(),
        bank.dim(),
        bank.vectors().flatten().copied().collect(),
    )
    .unwrap()
}

#[test]
fn coreset_matches_brute_greedy() {
    let mut rng = SplitMix64::new(21);
    for i in 0..200 {
        let n = 1 + rng.below(12) as usize;
        let dim = 1 + rng.below(4) as usize;
        let bank = random_bank(&mut rng, n, dim, i % 2 == 0);
        let pts = as_points(&bank);
        for l in 1..=n {
            assert_eq!(
                coreset_select(&bank, &count(l)).unwrap(),
                oracle::greedy_k_center_brute(&pts, l)
            );
        }
    }
}

#[test]
fn coreset_is_two_approximation() {
    let mut rng = SplitMix64::new(22);
    for _ in 0..100 {
        let n = 1 + rng.below(10) as usize;
        let dim = 1 + rng.below(4) as usize;
        let bank = random_bank(&mut rng, n, dim, false);
        let pts = as_points(&bank);
        for l in 1..=n.min(3) {
            let picked = coreset_select(&bank, &count(l)).unwrap();
            let r = covering_radius(&bank, &picked);
            assert!((r - oracle::covering_radius(&pts, &picked)).abs() < 1e-9);
            assert!(r <= 2.0 * oracle::optimal_k_center_radius(&pts, l) + 1e-9);
        }
    }
}

#[test]
fn projected_coreset_is_deterministic() {
    let mut rng = SplitMix64::new(23);
    let bank = random_bank(&mut rng, 200, 16, false);
    let p = CoresetParams {
        budget: CoresetBudget::Fraction(0.1),
        projection_dim: Some(4),
        seed: 9,
    };
    let a = coreset_select(&bank, &p).unwrap();
    assert_eq!(a.len(), 20);
    assert_eq!(a, coreset_select(&bank, &p).unwrap());
    assert_eq!(a[0], 0);
}

#[test]
fn reweighted_score_stays_in_bounds() {
    let mut rng = SplitMix64::new(24);
    for _ in 0..1000 {
        let n = 1 + rng.below(20) as usize;
        let dim = 1 + rng.below(4) as usize;
        let quantized = rng.below(2) == 0;
        let bank = random_bank(&mut rng, n, dim, quantized);
        let q = random_bank(&mut rng, 1, dim, false);
        let b = 1 + rng.below(n as u64) as usize;
        let r = score_image(&bank, &grid_of(&q), b).unwrap().result;
        assert!(r.s >= 0.0 && r.s <= r.s_star, "{r:?}");
        if b == 1 {
            assert_eq!(r.s, r.s_star);
        }
    }
}

#[test]
fn closer_second_neighbor_lowers_score() {
    // Nearest neighbour fixed at 0 with the query at 1; the second moves in.
    let mut prev = f64::INFINITY;
    for second in [8.0f32, 6.0, 4.0, 3.0, 2.5, 2.0, 1.5] {
        let bank = MemoryBank::from_parts(1, vec![0.0, second], vec![0, 0]).unwrap();
        let s = reweight(&bank, &[1.0], 1.0, 0, 2).unwrap();
        assert!(s < prev, "{second}: {s} !< {prev}");
        prev = s;
    }
}

#[test]
fn replayed_training_grid_scores_zero() {
    let mut rng = SplitMix64::new(25);
    for _ in 0..20 {
        let grids: Vec<PatchFeatureGrid> = (0..3)
            .map(|_| {
                let data = (0..4 * 4 * 6).map(|_| rng.next_f64() as f32).collect();
                PatchFeatureGrid::new(4, 4, 6, data).unwrap()
            })
            .collect();
        let bank = MemoryBank::build(&grids).unwrap();
        for g in &grids {
            for b in [1, 3] {
                let r = score_image(&bank, g, b).unwrap();
                assert_eq!(r.result.s, 0.0);
                assert!(r.patches.distances.iter().all(|d| *d == 0.0));
            }
        }
    }
}

#[test]
fn bank_order_does_not_change_scores() {
    let mut rng = SplitMix64::new(26);
    for i in 0..100 {
        let n = 2 + rng.below(30) as usize;
        let bank = random_bank(&mut rng, n, 3, i % 2 == 0);
        let mut order: Vec<usize> = (0..n).collect();
        for k in (1..n).rev() {
            order.swap(k, rng.below(k as u64 + 1) as usize);
        }
        let shuffled = bank.subset(&order);
        let q = grid_of(&random_bank(&mut rng, 5, 3, i % 2 == 0));
        let b = 1 + rng.below(n as u64) as usize;
        let a = score_image(&bank, &q, b).unwrap().result;
        let c = score_image(&shuffled, &q, b).unwrap().result;
        assert_eq!(a.s_star, c.s_star);
        assert!((a.s - c.s).abs() < 1e-12);
    }
}

#[test]
fn coreset_never_lowers_max_distance() {
    let mut rng = SplitMix64::new(27);
    for _ in 0..30 {
        let bank = random_bank(&mut rng, 40, 4, false);
        let q = grid_of(&random_bank(&mut rng, 6, 4, false));
        let full = score_patches(&bank, &q).unwrap().s_star;
        for l in [1, 5, 20, 40] {
            let sub = bank.subset(&coreset_select(&bank, &count(l)).unwrap());
            assert!(score_patches(&sub, &q).unwrap().s_star >= full);
        }
    }
}

#[test]
fn continual_extension_never_moves_task_one_further() {
    let mut rng = SplitMix64::new(28);
    let task = |rng: &mut SplitMix64, offset: f32| {
        let data = (0..3 * 3 * 4)
            .map(|_| rng.next_f64() as f32 + offset)
            .collect();
        PatchFeatureGrid::new(3, 3, 4, data).unwrap()
    };
    let full = CoresetParams::full();
    let t1 = task(&mut rng, 0.0);
    let b1 = extend_bank_for_task(&MemoryBank::empty(4), &[t1], 1, &full).unwrap();
    let b2 = extend_bank_for_task(&b1, &[task(&mut rng, 0.5)], 2, &full).unwrap();
    for _ in 0..50 {
        let q = task(&mut rng, 0.0);
        let before = score_patches(&b1, &q).unwrap();
        let after = score_patches(&b2, &q).unwrap();
        for (a, b) in after.distances.iter().zip(&before.distances) {
            assert!(a <= b);
        }
    }
}

proptest! {
    #[test]
    fn render_matches_bilinear_oracle(
        gh in 1usize..5,
        gw in 1usize..5,
        patch in 1usize..6,
        stride in 1usize..4,
        seed in any::<u64>(),
    ) {
        let mut rng = SplitMix64::new(seed);
        let vals: Vec<f64> = (0..gh * gw).map(|_| rng.next_f64()).collect();
        let geo = FeatureProviderConfig { patch_size: patch, stride, descriptor: Descriptor::RawPatch };
        let (h, w) = ((gh - 1) * stride + patch, (gw - 1) * stride + patch);
        let m = render_anomaly_map(&vals, gh, gw, &geo, h, w, 0.0).unwrap();
        let offset = (patch as f64 - 1.0) / 2.0;
        let rows: Vec<f64> = (0..gh).map(|r| r as f64 * stride as f64 + offset).collect();
        let cols: Vec<f64> = (0..gw).map(|c| c as f64 * stride as f64 + offset).collect();
        for y in 0..h {
            for x in 0..w {
                let want = oracle::bilinear(&vals, gh, gw, &rows, &cols, y as f64, x as f64);
                prop_assert!((m.values()[y * w + x] - want).abs() < 1e-12);
            }
        }
    }
}
