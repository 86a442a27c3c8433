//! Feature dictionary and N-way K-shot episode construction.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use crate::error::{Error, Result};
use crate::taxonomy::Taxonomy;

/// Samples grouped by class, classes kept sorted by id.
///
/// Dataset files are CSV: a `dim,<d>` header followed by one
/// `<class-id>,<f1>,...,<fd>` row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DataDictionary {
    dim: usize,
    classes: Vec<(String, Vec<Vec<f64>>)>,
}

impl DataDictionary {
    pub fn new(dim: usize, classes: Vec<(String, Vec<Vec<f64>>)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("feature dimension must be >= 1".into()));
        }
        if classes.is_empty() {
            return Err(Error::Empty("dataset has no classes".into()));
        }
        let mut classes = classes;
        classes.sort_by(|a, b| a.0.cmp(&b.0));
        for pair in classes.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(Error::InvalidArgument(format!("duplicate class `{}`", pair[0].0)));
            }
        }
        for (id, samples) in &classes {
            if id.is_empty() {
                return Err(Error::InvalidArgument("empty class id".into()));
            }
            if samples.is_empty() {
                return Err(Error::InvalidArgument(format!("class `{id}` has no samples")));
            }
            for s in samples {
                if s.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: s.len(),
                    });
                }
                if s.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("sample of class `{id}`")));
                }
            }
        }
        Ok(DataDictionary { dim, classes })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
            .filter(|(_, l)| !l.trim().is_empty());
        let (header_no, header) = lines
            .next()
            .ok_or_else(|| Error::Empty("dataset file is empty".into()))?;
        let dim = header
            .strip_prefix("dim,")
            .and_then(|d| d.trim().parse::<usize>().ok())
            .filter(|&d| d > 0)
            .ok_or_else(|| Error::format(header_no, "expected header `dim,<d>` with d >= 1"))?;

        let mut classes: Vec<(String, Vec<Vec<f64>>)> = Vec::new();
        let mut slot_of = std::collections::HashMap::new();
        for (line_no, line) in lines {
            let mut fields = line.split(',');
            let id = fields.next().unwrap_or("").trim();
            if id.is_empty() {
                return Err(Error::format(line_no, "missing class id"));
            }
            let values = fields
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::format(line_no, format!("bad number: {e}")))?;
            if values.len() != dim {
                return Err(Error::format(
                    line_no,
                    format!("expected {dim} features, found {}", values.len()),
                ));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::format(line_no, "non-finite feature"));
            }
            let slot = *slot_of.entry(id.to_string()).or_insert_with(|| {
                classes.push((id.to_string(), Vec::new()));
                classes.len() - 1
            });
            classes[slot].1.push(values);
        }
        if classes.is_empty() {
            return Err(Error::Empty("dataset has no samples".into()));
        }
        DataDictionary::new(dim, classes)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(&path, e))?;
        DataDictionary::parse(&text)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("dim,{}\n", self.dim);
        for (id, samples) in &self.classes {
            for s in samples {
                out.push_str(id);
                for v in s {
                    let _ = write!(out, ",{v}");
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_ids(&self) -> impl Iterator<Item = &str> {
        self.classes.iter().map(|(id, _)| id.as_str())
    }

    pub fn samples(&self, class: &str) -> Option<&[Vec<f64>]> {
        self.classes
            .binary_search_by(|(id, _)| id.as_str().cmp(class))
            .ok()
            .map(|i| self.classes[i].1.as_slice())
    }

    pub fn num_samples(&self) -> usize {
        self.classes.iter().map(|(_, s)| s.len()).sum()
    }

    /// Checks that this dictionary and `tax` name exactly the same classes.
    pub fn check_taxonomy(&self, tax: &Taxonomy) -> Result<()> {
        for class in tax.class_ids() {
            if self.samples(class).is_none() {
                return Err(Error::UnknownClass(class.to_string()));
            }
        }
        if let Some(extra) = self.class_ids().find(|c| tax.owner_of(c).is_none()) {
            return Err(Error::Config(format!(
                "dataset class `{extra}` is missing from the taxonomy"
            )));
        }
        Ok(())
    }

    /// Keeps only the classes that `tax` lists.
    pub fn restrict_to(&self, tax: &Taxonomy) -> Result<Self> {
        let classes = tax
            .class_ids()
            .map(|c| {
                self.samples(c)
                    .map(|s| (c.to_string(), s.to_vec()))
                    .ok_or_else(|| Error::UnknownClass(c.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        DataDictionary::new(self.dim, classes)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: Vec<f64>,
    pub label: usize,
}

/// One few-shot task. `classes[i]` is the global id behind local label `i`;
/// support and query sets are stored class-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub task_index: u64,
    pub classes: Vec<String>,
    pub shots: usize,
    pub queries: usize,
    pub support: Vec<Example>,
    pub query: Vec<Example>,
}

impl Episode {
    pub fn ways(&self) -> usize {
        self.classes.len()
    }

    /// Query examples of local class `label`.
    pub fn query_of(&self, label: usize) -> &[Example] {
        &self.query[label * self.queries..(label + 1) * self.queries]
    }
}

/// Splits each class's samples into `k` support and `q` query examples.
///
/// Samples of a class are shuffled and the first `k` become support, the next
/// `q` query. Local labels are a random permutation of the classes drawn from
/// `rng`; `Episode::classes` records the mapping.
pub fn build_episode<R: Rng + ?Sized>(
    data: &DataDictionary,
    classes: &[String],
    k: usize,
    q: usize,
    task_index: u64,
    rng: &mut R,
) -> Result<Episode> {
    if classes.len() < 2 {
        return Err(Error::InvalidArgument("an episode needs at least 2 classes".into()));
    }
    if k == 0 || q == 0 {
        return Err(Error::InvalidArgument("shots and queries must be >= 1".into()));
    }
    let mut sorted = classes.to_vec();
    sorted.sort();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument("episode classes must be distinct".into()));
    }
    for class in &sorted {
        let available = data
            .samples(class)
            .ok_or_else(|| Error::UnknownClass(class.clone()))?
            .len();
        if available < k + q {
            return Err(Error::InsufficientSamples {
                class: class.clone(),
                needed: k + q,
                available,
            });
        }
    }
    // Labels are a fresh permutation per episode so that no global class is
    // tied to a fixed output unit across tasks.
    let mut labelled = sorted;
    labelled.shuffle(rng);

    let mut support = Vec::with_capacity(labelled.len() * k);
    let mut query = Vec::with_capacity(labelled.len() * q);
    for (label, class) in labelled.iter().enumerate() {
        let samples = data.samples(class).expect("checked above");
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let (picked, _) = order.partial_shuffle(rng, k + q);
        for (slot, &i) in picked.iter().enumerate() {
            let example = Example {
                features: samples[i].clone(),
                label,
            };
            if slot < k {
                support.push(example);
            } else {
                query.push(example);
            }
        }
    }
    Ok(Episode {
        task_index,
        classes: labelled,
        shots: k,
        queries: q,
        support,
        query,
    })
}

/// Episode over `n` classes drawn uniformly without replacement.
pub fn random_episode<R: Rng + ?Sized>(
    data: &DataDictionary,
    n: usize,
    k: usize,
    q: usize,
    task_index: u64,
    rng: &mut R,
) -> Result<Episode> {
    let classes = random_classes(data, n, rng)?;
    build_episode(data, &classes, k, q, task_index, rng)
}

pub fn random_classes<R: Rng + ?Sized>(
    data: &DataDictionary,
    n: usize,
    rng: &mut R,
) -> Result<Vec<String>> {
    if n > data.num_classes() {
        return Err(Error::InsufficientClasses {
            needed: n,
            available: data.num_classes(),
        });
    }
    let ids: Vec<&str> = data.class_ids().collect();
    Ok(ids.choose_multiple(rng, n).map(|s| s.to_string()).collect())
}
