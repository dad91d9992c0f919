//! Identity-disjoint, model-stratified train/validation/test splits.
//!
//! For run `r` and a document model with (seeded) rank `k` among models and
//! seeded identity permutation `p` of length `n`:
//!
//! * `p[(k + r) mod n]` goes to test,
//! * if `(k + r) mod 5 != 4`, `p[(k + r + 1) mod n]` goes to validation,
//! * every other identity goes to train.
//!
//! Over 20 models that is 16 validation donors per run, i.e. a 64/16/20
//! identity partition, and over 5 runs every identity is tested once.
//! Photo-replacement clips are only ever used in test.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{AttackKind, ClipRecord};
use crate::config::hash_of;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    Train,
    Validation,
    Test,
}

impl Subset {
    pub fn as_str(self) -> &'static str {
        match self {
            Subset::Train => "train",
            Subset::Validation => "validation",
            Subset::Test => "test",
        }
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Subset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Subset::Train),
            "validation" => Ok(Subset::Validation),
            "test" => Ok(Subset::Test),
            other => Err(Error::Parse {
                what: "split subset".into(),
                message: format!("unknown subset '{other}'"),
            }),
        }
    }
}

pub type IdentityKey = (String, String);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub run_id: usize,
    pub seed: u64,
    pub config_hash: String,
    pub assignment: BTreeMap<IdentityKey, Subset>,
}

/// Clips of one run, grouped by role.
#[derive(Debug, Clone, Default)]
pub struct SplitClips<'a> {
    pub train: Vec<&'a ClipRecord>,
    pub validation: Vec<&'a ClipRecord>,
    /// Test clips without photo replacement.
    pub test_vanilla: Vec<&'a ClipRecord>,
    pub test_photo_replacement: Vec<&'a ClipRecord>,
    pub dropped: Vec<&'a ClipRecord>,
}

pub fn generate_splits(catalog: &[ClipRecord], n_runs: usize, seed: u64) -> Result<Vec<SplitPlan>> {
    let mut by_model: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for c in catalog {
        by_model
            .entry(c.document_model.clone())
            .or_default()
            .insert(c.identity.clone());
    }
    if by_model.is_empty() {
        return Err(Error::Empty("catalog"));
    }
    for (model, ids) in &by_model {
        if ids.len() < 2 {
            return Err(Error::CannotStratify {
                model: model.clone(),
                count: ids.len(),
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut models: Vec<&String> = by_model.keys().collect();
    models.shuffle(&mut rng);
    let mut perms: BTreeMap<&String, Vec<&String>> = BTreeMap::new();
    for (model, ids) in &by_model {
        let mut p: Vec<&String> = ids.iter().collect();
        p.shuffle(&mut rng);
        perms.insert(model, p);
    }

    let identities: Vec<(&String, &BTreeSet<String>)> = by_model.iter().collect();
    let config_hash = hash_of(&(n_runs, seed, &identities));

    let plans = (0..n_runs)
        .map(|run_id| {
            let mut assignment = BTreeMap::new();
            for (rank, model) in models.iter().enumerate() {
                let p = &perms[model];
                let n = p.len();
                let slot = rank + run_id;
                let test = slot % n;
                let validation = (slot % 5 != 4).then_some((slot + 1) % n);
                for (i, id) in p.iter().enumerate() {
                    let subset = if i == test {
                        Subset::Test
                    } else if Some(i) == validation {
                        Subset::Validation
                    } else {
                        Subset::Train
                    };
                    assignment.insert(((*model).clone(), (*id).clone()), subset);
                }
            }
            SplitPlan {
                run_id,
                seed,
                config_hash: config_hash.clone(),
                assignment,
            }
        })
        .collect();
    Ok(plans)
}

impl SplitPlan {
    pub const FORMAT_VERSION: u32 = 1;

    pub fn subset_of_identity(&self, model: &str, identity: &str) -> Option<Subset> {
        self.assignment
            .get(&(model.to_string(), identity.to_string()))
            .copied()
    }

    /// Role of a clip in this run; `None` for photo-replacement clips of
    /// non-test identities and for identities absent from the plan.
    pub fn subset_of(&self, clip: &ClipRecord) -> Option<Subset> {
        let subset = self.subset_of_identity(&clip.document_model, &clip.identity)?;
        if clip.attack_kind == AttackKind::PhotoReplacement && subset != Subset::Test {
            None
        } else {
            Some(subset)
        }
    }

    pub fn partition<'a>(&self, catalog: &'a [ClipRecord]) -> SplitClips<'a> {
        let mut out = SplitClips::default();
        for c in catalog {
            match self.subset_of(c) {
                Some(Subset::Train) => out.train.push(c),
                Some(Subset::Validation) => out.validation.push(c),
                Some(Subset::Test) if c.attack_kind == AttackKind::PhotoReplacement => {
                    out.test_photo_replacement.push(c)
                }
                Some(Subset::Test) => out.test_vanilla.push(c),
                None => out.dropped.push(c),
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("# holoverify split plan\n");
        s.push_str(&format!("version\t{}\n", Self::FORMAT_VERSION));
        s.push_str(&format!("run_id\t{}\n", self.run_id));
        s.push_str(&format!("seed\t{}\n", self.seed));
        s.push_str(&format!("config_hash\t{}\n", self.config_hash));
        for ((model, identity), subset) in &self.assignment {
            s.push_str(&format!("{model}\t{identity}\t{subset}\n"));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |message: String| Error::Parse {
            what: "split file".into(),
            message,
        };
        let mut header: BTreeMap<&str, &str> = BTreeMap::new();
        let mut assignment = BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#')) {
            let fields: Vec<&str> = line.split('\t').collect();
            match fields.as_slice() {
                [key, value] => {
                    header.insert(key, value);
                }
                [model, identity, subset] => {
                    assignment.insert((model.to_string(), identity.to_string()), subset.parse()?);
                }
                _ => return Err(bad(format!("malformed line '{line}'"))),
            }
        }
        let get = |k: &str| header.get(k).copied().ok_or_else(|| bad(format!("missing '{k}'")));
        let version: u32 = get("version")?.parse().map_err(|_| bad("bad version".into()))?;
        if version != Self::FORMAT_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        Ok(SplitPlan {
            run_id: get("run_id")?.parse().map_err(|_| bad("bad run_id".into()))?,
            seed: get("seed")?.parse().map_err(|_| bad("bad seed".into()))?,
            config_hash: get("config_hash")?.to_string(),
            assignment,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn file_name(run_id: usize) -> String {
        format!("run_{run_id}.split")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Label;

    fn catalog(models: usize, ids: usize) -> Vec<ClipRecord> {
        let mut out = Vec::new();
        for m in 0..models {
            for i in 0..ids {
                let mut push = |kind: AttackKind, take: usize| {
                    out.push(ClipRecord {
                        clip_id: format!("{kind}/m{m:02}/id{i}/{take}"),
                        document_model: format!("m{m:02}"),
                        identity: format!("id{i}"),
                        label: kind.label(),
                        attack_kind: kind,
                        fps: 5.0,
                        frames: Vec::new(),
                    })
                };
                for t in 0..3 {
                    push(AttackKind::None, t);
                }
                for k in AttackKind::FRAUD_KINDS {
                    push(k, 0);
                }
            }
        }
        out
    }

    #[test]
    fn single_identity_model_cannot_stratify() {
        let cat = catalog(2, 1);
        assert!(matches!(generate_splits(&cat, 5, 1), Err(Error::CannotStratify { .. })));
    }

    #[test]
    fn every_identity_is_tested_once_over_five_runs() {
        let cat = catalog(20, 5);
        let plans = generate_splits(&cat, 5, 3).unwrap();
        let mut tested: BTreeMap<IdentityKey, usize> = BTreeMap::new();
        for p in &plans {
            for (k, s) in &p.assignment {
                if *s == Subset::Test {
                    *tested.entry(k.clone()).or_default() += 1;
                }
            }
        }
        assert_eq!(tested.len(), 100);
        assert!(tested.values().all(|&n| n == 1));
    }

    #[test]
    fn split_file_round_trips() {
        let cat = catalog(3, 5);
        let plan = &generate_splits(&cat, 2, 9).unwrap()[1];
        assert_eq!(&SplitPlan::parse(&plan.to_text()).unwrap(), plan);
    }

    #[test]
    fn small_catalog_keeps_train_identities() {
        let cat = catalog(4, 5);
        for plan in generate_splits(&cat, 5, 11).unwrap() {
            let parts = plan.partition(&cat);
            assert!(!parts.train.is_empty());
            assert!(parts.train.iter().any(|c| c.label == Label::Original));
            assert_eq!(parts.test_photo_replacement.len(), 4);
        }
    }
}
