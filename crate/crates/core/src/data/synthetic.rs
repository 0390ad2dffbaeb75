//! Synthetic attribute-compositional dataset for desk-scale experiments.
//!
//! Classes are binary attribute vectors. The first `n_attributes / 2` bits are
//! a prefix shared by every class of a coarse group; the remaining bits are
//! drawn per class. Features are `M·a_c + σ·ε` for a fixed Gaussian mixing
//! matrix `M` with entries of variance `1 / n_attributes`, rounded to `f32` so
//! a 32-bit feature file stores them exactly.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TaskKind;
use crate::tensor::Tensor;

use super::{FeatureStore, SplitSpec, TaskTable, SPLIT_VERSION};

const MAX_DRAWS: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_attributes: usize,
    pub n_classes_seen: usize,
    pub n_classes_unseen: usize,
    pub samples_per_class: usize,
    pub d_in: usize,
    pub noise: f64,
    pub seed: u64,
    pub n_groups: usize,
    /// Share of each seen class's samples held out for testing.
    pub test_fraction: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_attributes: 16,
            n_classes_seen: 20,
            n_classes_unseen: 10,
            samples_per_class: 50,
            d_in: 64,
            noise: 0.3,
            seed: 0,
            n_groups: 5,
            test_fraction: 0.2,
        }
    }
}

impl SyntheticConfig {
    pub fn n_classes(&self) -> usize {
        self.n_classes_seen + self.n_classes_unseen
    }

    pub fn prefix_len(&self) -> usize {
        self.n_attributes / 2
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_attributes", self.n_attributes),
            ("n_classes_seen", self.n_classes_seen),
            ("samples_per_class", self.samples_per_class),
            ("d_in", self.d_in),
            ("n_groups", self.n_groups),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(Error::config(field, "must be positive"));
            }
        }
        if self.n_attributes < 2 {
            return Err(Error::config("n_attributes", "need at least 2 for prefix and suffix"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::config("noise", "must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::config("test_fraction", "must lie in [0, 1)"));
        }
        let n = self.n_classes();
        if self.n_groups > n {
            return Err(Error::config(
                "n_groups",
                format!("{} groups for {n} classes", self.n_groups),
            ));
        }
        let prefix = self.prefix_len() as u32;
        let suffix = (self.n_attributes - self.prefix_len()) as u32;
        if prefix < 63 && (self.n_groups as u64) >= (1u64 << prefix) {
            return Err(Error::config("n_groups", "more groups than distinct non-zero prefixes"));
        }
        let per_group = n.div_ceil(self.n_groups) as u64;
        if suffix < 63 && per_group > (1u64 << suffix) {
            return Err(Error::config(
                "n_attributes",
                "too few suffix bits for the classes of one group",
            ));
        }
        Ok(())
    }
}

/// Generated store, task table (with coarse groups) and split.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticData {
    pub store: FeatureStore,
    pub tasks: TaskTable,
    pub split: SplitSpec,
    /// The `d_in x n_attributes` mixing matrix.
    pub mixing: Tensor,
}

fn distinct_bits(
    rng: &mut ChaCha8Rng,
    len: usize,
    count: usize,
    taken: &mut HashSet<Vec<u8>>,
    nonzero: bool,
) -> Result<Vec<Vec<u8>>> {
    let mut out = Vec::with_capacity(count);
    let mut draws = 0;
    while out.len() < count {
        draws += 1;
        if draws > MAX_DRAWS * count.max(1) {
            return Err(Error::config("seed", "could not draw distinct attribute vectors"));
        }
        let bits: Vec<u8> = (0..len).map(|_| rng.gen_range(0..2u8)).collect();
        if nonzero && bits.iter().all(|&b| b == 0) {
            continue;
        }
        if taken.insert(bits.clone()) {
            out.push(bits);
        }
    }
    Ok(out)
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_classes = cfg.n_classes();
    let (na, plen) = (cfg.n_attributes, cfg.prefix_len());

    let prefixes = distinct_bits(&mut rng, plen, cfg.n_groups, &mut HashSet::new(), true)?;
    let groups: Vec<usize> = (0..n_classes).map(|c| c % cfg.n_groups).collect();
    let mut suffix_pools: Vec<HashSet<Vec<u8>>> = vec![HashSet::new(); cfg.n_groups];
    let mut attributes = Vec::with_capacity(n_classes * na);
    for &g in &groups {
        let suffix = distinct_bits(&mut rng, na - plen, 1, &mut suffix_pools[g], false)?;
        attributes.extend(prefixes[g].iter().chain(&suffix[0]).map(|&b| f64::from(b)));
    }
    let attributes = Tensor::new(&[n_classes, na], attributes)?;

    let std = 1.0 / (na as f64).sqrt();
    let mixing_data: Vec<f64> = (0..cfg.d_in * na)
        .map(|_| std * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mixing = Tensor::new(&[cfg.d_in, na], mixing_data)?;
    // class means, n_classes x d_in
    let means = attributes.matmul(&mixing.transpose()?)?;

    let total = n_classes * cfg.samples_per_class;
    let mut values = Vec::with_capacity(total * cfg.d_in);
    let mut labels = Vec::with_capacity(total);
    for c in 0..n_classes {
        for _ in 0..cfg.samples_per_class {
            for &mu in means.row_slice(c) {
                let eps: f64 = StandardNormal.sample(&mut rng);
                values.push(f64::from((mu + cfg.noise * eps) as f32));
            }
            labels.push(c);
        }
    }
    let ids: Vec<u64> = (0..total as u64).collect();
    let store = FeatureStore::new(Tensor::new(&[total, cfg.d_in], values)?, labels, ids)?;

    let names: Vec<String> = (0..n_classes).map(|c| format!("class-{c:02}")).collect();
    let n_test = ((cfg.samples_per_class as f64) * cfg.test_fraction).round() as usize;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for c in 0..n_classes {
        let mut ids: Vec<u64> = (0..cfg.samples_per_class)
            .map(|i| (c * cfg.samples_per_class + i) as u64)
            .collect();
        if c < cfg.n_classes_seen {
            ids.shuffle(&mut rng);
            let (te, tr) = ids.split_at(n_test);
            let (mut te, mut tr) = (te.to_vec(), tr.to_vec());
            te.sort_unstable();
            tr.sort_unstable();
            test.extend(te);
            train.extend(tr);
        } else {
            test.extend(ids);
        }
    }
    let split = SplitSpec {
        version: SPLIT_VERSION,
        seen: names[..cfg.n_classes_seen].to_vec(),
        unseen: names[cfg.n_classes_seen..].to_vec(),
        train,
        test,
        fewshot: (cfg.n_classes_unseen > 0).then(|| super::FewShotPartition {
            base: names[..cfg.n_classes_seen].to_vec(),
            novel: names[cfg.n_classes_seen..].to_vec(),
        }),
    };
    split.validate()?;
    let tasks = TaskTable::new(TaskKind::Attribute, names, attributes, Some(groups))?;
    Ok(SyntheticData {
        store,
        tasks,
        split,
        mixing,
    })
}
