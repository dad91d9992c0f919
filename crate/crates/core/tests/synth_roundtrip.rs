use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use holoverify::baseline::holographic_map;
use holoverify::catalog::{clip_rectified_frames, scan_dataset, AttackKind, DatasetKind, CANONICAL_SIZE};
use holoverify::synthcam::{generate_dataset, SynthSpec};

fn small_spec() -> SynthSpec {
    SynthSpec { n_models: 2, frames_per_clip: 3, ..SynthSpec::default() }
}

fn files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn two_models_round_trip_through_the_catalog() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = small_spec();
    assert_eq!(generate_dataset(&spec, tmp.path(), 3).unwrap(), 70);
    let clips = scan_dataset(tmp.path(), DatasetKind::Synthetic).unwrap();
    assert_eq!(clips.len(), 70);

    let mut per_kind: BTreeMap<&str, usize> = BTreeMap::new();
    for c in &clips {
        *per_kind.entry(c.attack_kind.as_str()).or_default() += 1;
        assert_eq!(c.frames.len(), spec.frames_per_clip);
        assert_eq!(c.fps, spec.fps);
        assert_eq!(c.label, c.attack_kind.label());
        assert!(c.document_model.starts_with("model"), "{}", c.document_model);
    }
    assert_eq!(per_kind[AttackKind::None.as_str()], 30);
    for k in AttackKind::FRAUD_KINDS {
        assert_eq!(per_kind[k.as_str()], 10, "{k:?}");
    }
}

#[test]
fn same_seed_gives_identical_trees() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let spec = SynthSpec { n_models: 1, n_identities: 2, ..small_spec() };
    generate_dataset(&spec, a.path(), 9).unwrap();
    generate_dataset(&spec, b.path(), 9).unwrap();
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert!(!fa.is_empty());
    assert_eq!(fa, fb);
}

#[test]
fn baseline_flags_dynamic_overlays_only() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = SynthSpec { n_models: 1, n_identities: 2, camera_jitter: 0.0, ..small_spec() };
    generate_dataset(&spec, tmp.path(), 1).unwrap();
    for clip in scan_dataset(tmp.path(), DatasetKind::Synthetic).unwrap() {
        let frames = clip_rectified_frames(&clip, CANONICAL_SIZE, spec.fps).unwrap();
        let ratio = holographic_map(&frames, 50.0).unwrap().ratio();
        match clip.attack_kind {
            AttackKind::None | AttackKind::PhotoReplacement => assert!(ratio > 0.01, "{}: {ratio}", clip.clip_id),
            _ => assert_eq!(ratio, 0.0, "{}: {ratio}", clip.clip_id),
        }
    }
}
