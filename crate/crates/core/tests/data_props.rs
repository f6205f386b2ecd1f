use std::collections::BTreeMap;

use iadbench_core::dataset::{load_dataset, Dataset, Label, Sample};
use iadbench_core::features::{
    extract_features, Descriptor, FeatureProviderConfig, PatchFeatureGrid,
};
use iadbench_core::image::ImageGrid;
use iadbench_core::protocols::{
    augment_rotations, inject_noise, make_continual, make_fewshot, make_supervised,
    make_unsupervised, noise_injection_count, Split, Transform,
};
use iadbench_core::rng::SplitMix64;
use iadbench_core::synth::{synth_dataset, synth_dataset_with_references, DefectKind, SynthSpec};
use iadbench_oracles as oracle;
use proptest::prelude::*;

fn spec(categories: usize, train: usize, normals: usize, abnormals: usize) -> SynthSpec {
    SynthSpec {
        categories,
        normals_train: train,
        normals_test: normals,
        abnormals_test: abnormals,
        image_size: 32,
        defect_kinds: vec![
            DefectKind::Scratch,
            DefectKind::Blob,
            DefectKind::MissingPatch,
        ],
    }
}

#[test]
fn feature_grid_round_trips_on_random_grids() {
    let mut rng = SplitMix64::new(31);
    for _ in 0..1000 {
        let (gh, gw, dim) = (
            1 + rng.below(6) as usize,
            1 + rng.below(6) as usize,
            1 + rng.below(9) as usize,
        );
        let data = (0..gh * gw * dim)
            .map(|_| f32::from_bits(rng.next_u64() as u32))
            .map(|v| if v.is_finite() { v } else { 0.5 })
            .collect();
        let g = PatchFeatureGrid::new(gh, gw, dim, data).unwrap();
        let bytes = g.to_bytes();
        let back = PatchFeatureGrid::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!((back.grid_h(), back.grid_w(), back.dim()), (gh, gw, dim));
    }
}

proptest! {
    #[test]
    fn feature_grid_shape_law(h in 1usize..40, w in 1usize..40, patch in 1usize..12, stride in 1usize..6) {
        prop_assume!(patch <= h && patch <= w && stride <= patch);
        let img = ImageGrid::filled(h, w, 0.5).unwrap();
        let cfg = FeatureProviderConfig { patch_size: patch, stride, descriptor: Descriptor::RawPatch };
        let g = extract_features(&img, &cfg).unwrap();
        prop_assert_eq!(g.grid_h(), oracle::sliding_window_count(h, patch, stride));
        prop_assert_eq!(g.grid_w(), oracle::sliding_window_count(w, patch, stride));
        prop_assert_eq!(g.dim(), patch * patch);
    }
}

#[test]
fn synthetic_masks_mark_exactly_the_changed_pixels() {
    let (ds, refs) = synth_dataset_with_references(&spec(3, 2, 2, 12), 5).unwrap();
    let mut checked = 0;
    for (cat, samples) in &ds.test {
        for s in samples.iter().filter(|s| s.label == Label::Abnormal) {
            let clean = &refs[&(cat.clone(), s.id.clone())];
            let mask = s.mask.as_ref().unwrap();
            for (i, (a, b)) in s.image.values().iter().zip(clean.values()).enumerate() {
                assert_eq!(a != b, mask.bits()[i], "{cat}/{} pixel {i}", s.id);
            }
            checked += 1;
        }
    }
    assert_eq!(checked, 36);
}

#[test]
fn synthesis_and_extraction_are_pure() {
    let a = synth_dataset(&spec(2, 3, 2, 2), 77).unwrap();
    assert_eq!(a, synth_dataset(&spec(2, 3, 2, 2), 77).unwrap());
    assert_ne!(a, synth_dataset(&spec(2, 3, 2, 2), 78).unwrap());
    let cfg = FeatureProviderConfig::default();
    let img = &a.test["synth00"][0].image;
    assert_eq!(
        extract_features(img, &cfg).unwrap(),
        extract_features(img, &cfg).unwrap()
    );
}

#[test]
fn written_dataset_reloads_identically() {
    let ds = synth_dataset(&spec(2, 3, 2, 3), 8).unwrap();
    let dir = tempfile::tempdir().unwrap();
    ds.write_to(dir.path()).unwrap();
    let back = load_dataset(dir.path(), None).unwrap();
    assert_eq!(back.categories, ds.categories);
    assert_eq!(back.saturation_table, ds.saturation_table);
    for c in &ds.categories {
        let ids = |v: &[Sample]| {
            let mut x: Vec<(String, Label)> = v.iter().map(|s| (s.id.clone(), s.label)).collect();
            x.sort();
            x
        };
        assert_eq!(ids(&back.train[c]), ids(&ds.train[c]));
        assert_eq!(ids(&back.test[c]), ids(&ds.test[c]));
        let masks = |v: &[Sample]| -> BTreeMap<String, Vec<bool>> {
            v.iter()
                .filter_map(|s| s.mask.as_ref().map(|m| (s.id.clone(), m.bits().to_vec())))
                .collect()
        };
        assert_eq!(masks(&back.test[c]), masks(&ds.test[c]));
    }
}

/// Multiset of `(id, true label)` across train, test and held-out records,
/// collapsing rotated copies onto their source id.
fn accounted(split: &Split) -> BTreeMap<(String, Label), usize> {
    let mut out = BTreeMap::new();
    let mut seen_rot = std::collections::BTreeSet::new();
    for t in &split.train {
        let source = t.sample.id.split('@').next().unwrap().to_string();
        if seen_rot.insert((source.clone(), t.sample.label)) {
            *out.entry((source, t.sample.label)).or_insert(0) += 1;
        }
    }
    for s in &split.test {
        *out.entry((s.id.clone(), s.label)).or_insert(0) += 1;
    }
    for r in &split.provenance {
        if matches!(r.transform, Transform::FewshotExcluded) {
            *out.entry((r.sample_id.clone(), r.true_label)).or_insert(0) += 1;
        }
    }
    out
}

fn original(ds: &Dataset, cat: &str) -> BTreeMap<(String, Label), usize> {
    let mut out = BTreeMap::new();
    for s in ds.train[cat].iter().chain(&ds.test[cat]) {
        *out.entry((s.id.clone(), s.label)).or_insert(0) += 1;
    }
    out
}

#[test]
fn every_protocol_conserves_samples() {
    let ds = synth_dataset(&spec(2, 16, 6, 20), 3).unwrap();
    for cat in &ds.categories {
        let fewshot = make_fewshot(&ds, cat, 2, 9).unwrap();
        let splits = vec![
            make_unsupervised(&ds, cat).unwrap(),
            make_supervised(&ds, cat, 5, 1).unwrap(),
            augment_rotations(&fewshot, 4).unwrap(),
            fewshot,
            inject_noise(&ds, cat, 0.2, 4).unwrap(),
        ];
        for split in &splits {
            assert_eq!(accounted(split), original(&ds, cat), "{:?}", split.setting);
            split
                .verify_conservation(&ds.train[cat], &ds.test[cat])
                .unwrap();
        }
        let noisy = &splits[4];
        let injected: Vec<&str> = noisy
            .train
            .iter()
            .filter(|t| t.sample.label == Label::Abnormal)
            .map(|t| t.sample.id.as_str())
            .collect();
        assert_eq!(injected.len(), 4);
        assert!(splits[0]
            .train
            .iter()
            .chain(&splits[3].train)
            .all(|t| t.sample.label == Label::Normal));
    }
    let seq = make_continual(&ds, &ds.categories, 0).unwrap();
    for t in &seq.tasks {
        assert_eq!(accounted(&t.split), original(&ds, &t.category));
    }
}

#[test]
fn protocols_are_deterministic() {
    let ds = synth_dataset(&spec(1, 16, 4, 12), 3).unwrap();
    let c = "synth00";
    assert_eq!(
        make_supervised(&ds, c, 5, 7).unwrap(),
        make_supervised(&ds, c, 5, 7).unwrap()
    );
    assert_eq!(
        make_fewshot(&ds, c, 4, 7).unwrap(),
        make_fewshot(&ds, c, 4, 7).unwrap()
    );
    assert_eq!(
        inject_noise(&ds, c, 0.1, 7).unwrap(),
        inject_noise(&ds, c, 0.1, 7).unwrap()
    );
}

#[test]
fn achieved_noise_ratio_is_close_when_uncapped() {
    for m in 1..60usize {
        for r in [0.05, 0.1, 0.15, 0.2] {
            let (uncapped, n) = noise_injection_count(r, m, 1000);
            assert_eq!(uncapped, n);
            if n == 0 {
                continue;
            }
            let achieved = n as f64 / (m + n) as f64;
            assert!(
                (achieved - r).abs() <= 1.0 / (m + n) as f64 + 1e-12,
                "m={m} r={r}"
            );
        }
    }
    assert_eq!(noise_injection_count(0.2, 16, 20), (4, 4));
    assert_eq!(noise_injection_count(0.2, 100, 20), (25, 15));
    assert_eq!(noise_injection_count(0.05, 19, 20).1, 1);
}
