//! Synthetic hierarchical feature datasets.
//!
//! Superclass means are drawn around the origin, class means around their
//! superclass mean, and samples around their class mean, all isotropic
//! Gaussians. With `sigma_class < sigma_super`, classes sharing a superclass
//! are closer than classes that do not, so semantically hard tasks are also
//! geometrically hard.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::episode::DataDictionary;
use crate::error::{Error, Result};
use crate::rng::{derive_stream, StreamPurpose};
use crate::taxonomy::Taxonomy;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub superclasses: usize,
    pub classes_per_superclass: usize,
    pub samples_per_class: usize,
    pub dim: usize,
    pub sigma_super: f64,
    pub sigma_class: f64,
    pub sigma_noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            superclasses: 12,
            classes_per_superclass: 5,
            samples_per_class: 50,
            dim: 16,
            sigma_super: 3.0,
            sigma_class: 1.0,
            sigma_noise: 0.5,
            seed: 0,
        }
    }
}

/// Superclasses held out for testing in the default train/test split.
pub const DEFAULT_TEST_SUPERCLASSES: usize = 5;

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.superclasses == 0
            || self.classes_per_superclass == 0
            || self.samples_per_class == 0
            || self.dim == 0
        {
            return Err(Error::InvalidArgument("synthetic counts must be >= 1".into()));
        }
        for (name, s) in [
            ("sigma_super", self.sigma_super),
            ("sigma_class", self.sigma_class),
            ("sigma_noise", self.sigma_noise),
        ] {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

pub fn superclass_id(s: usize) -> String {
    format!("s{s:03}")
}

pub fn class_id(s: usize, c: usize) -> String {
    format!("s{s:03}_c{c:03}")
}

fn gaussian_around<R: Rng + ?Sized>(center: &[f64], sigma: f64, rng: &mut R) -> Vec<f64> {
    center
        .iter()
        .map(|m| {
            let z: f64 = StandardNormal.sample(rng);
            m + sigma * z
        })
        .collect()
}

/// Draws a dataset and its matching taxonomy.
pub fn generate(spec: &SynthSpec) -> Result<(DataDictionary, Taxonomy)> {
    spec.validate()?;
    let mut rng = derive_stream(spec.seed, StreamPurpose::Synthesis, 0);
    let origin = vec![0.0; spec.dim];
    let mut classes = Vec::with_capacity(spec.superclasses * spec.classes_per_superclass);
    let mut groups = Vec::with_capacity(spec.superclasses);
    for s in 0..spec.superclasses {
        let super_mean = gaussian_around(&origin, spec.sigma_super, &mut rng);
        let mut members = Vec::with_capacity(spec.classes_per_superclass);
        for c in 0..spec.classes_per_superclass {
            let class_mean = gaussian_around(&super_mean, spec.sigma_class, &mut rng);
            let samples = (0..spec.samples_per_class)
                .map(|_| gaussian_around(&class_mean, spec.sigma_noise, &mut rng))
                .collect();
            classes.push((class_id(s, c), samples));
            members.push(class_id(s, c));
        }
        groups.push((superclass_id(s), members));
    }
    Ok((DataDictionary::new(spec.dim, classes)?, Taxonomy::new(groups)?))
}

/// Dataset plus the taxonomy restricted to its classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub data: DataDictionary,
    pub taxonomy: Taxonomy,
}

/// Superclass-disjoint split: the last `test_superclasses` superclasses (in
/// taxonomy order) form the test side, the rest the training side.
pub fn split_by_superclass(
    data: &DataDictionary,
    tax: &Taxonomy,
    test_superclasses: usize,
) -> Result<(Split, Split)> {
    let total = tax.num_superclasses();
    if test_superclasses == 0 || test_superclasses >= total {
        return Err(Error::InvalidArgument(format!(
            "test superclass count must be in 1..{total}, got {test_superclasses}"
        )));
    }
    let cut = total - test_superclasses;
    let side = |indices: Vec<usize>| -> Result<Split> {
        let taxonomy = tax.subset(&indices)?;
        let data = data.restrict_to(&taxonomy)?;
        Ok(Split { data, taxonomy })
    };
    Ok((side((0..cut).collect())?, side((cut..total).collect())?))
}

/// Generates the default hierarchy for `seed` and splits it into
/// superclass-disjoint training and test sides.
pub fn default_benchmark(seed: u64) -> Result<(Split, Split)> {
    let spec = SynthSpec {
        seed,
        ..SynthSpec::default()
    };
    let (data, tax) = generate(&spec)?;
    split_by_superclass(&data, &tax, DEFAULT_TEST_SUPERCLASSES)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<DataDictionary> {
    DataDictionary::load(path)
}
