//! Two-level label hierarchy and semantic easy/hard class selection.
//!
//! The taxonomy file is tab-separated text, one `<superclass>\t<class>`
//! record per line. Lines starting with `#` and blank lines are skipped.
//! Superclasses keep the order in which they first appear.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Superclass {
    pub id: String,
    pub classes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    superclasses: Vec<Superclass>,
    owner: HashMap<String, usize>,
}

impl Taxonomy {
    /// Builds a taxonomy from `(superclass, classes)` groups, checking the
    /// structural invariants.
    pub fn new(groups: Vec<(String, Vec<String>)>) -> Result<Self> {
        let mut owner = HashMap::new();
        let mut seen_super = HashSet::new();
        let mut superclasses = Vec::with_capacity(groups.len());
        for (index, (id, classes)) in groups.into_iter().enumerate() {
            if id.is_empty() {
                return Err(Error::InvalidArgument("empty superclass id".into()));
            }
            if !seen_super.insert(id.clone()) {
                return Err(Error::InvalidArgument(format!("duplicate superclass `{id}`")));
            }
            if classes.is_empty() {
                return Err(Error::InvalidArgument(format!("superclass `{id}` has no classes")));
            }
            for class in &classes {
                if class.is_empty() {
                    return Err(Error::InvalidArgument("empty class id".into()));
                }
                if owner.insert(class.clone(), index).is_some() {
                    return Err(Error::InvalidArgument(format!("duplicate class `{class}`")));
                }
            }
            superclasses.push(Superclass { id, classes });
        }
        if superclasses.is_empty() {
            return Err(Error::Empty("taxonomy has no classes".into()));
        }
        Ok(Taxonomy { superclasses, owner })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut groups: Vec<(String, Vec<String>)> = Vec::new();
        let mut group_of: HashMap<String, usize> = HashMap::new();
        let mut seen: HashSet<String> = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split('\t');
            let (sup, class) = match (fields.next(), fields.next(), fields.next()) {
                (Some(s), Some(c), None) => (s.trim(), c.trim()),
                _ => {
                    return Err(Error::format(
                        line_no,
                        "expected `<superclass>\\t<class>`",
                    ))
                }
            };
            if sup.is_empty() || class.is_empty() {
                return Err(Error::format(line_no, "empty superclass or class id"));
            }
            if !seen.insert(class.to_string()) {
                return Err(Error::DuplicateClass {
                    class: class.to_string(),
                    line: line_no,
                });
            }
            let slot = *group_of.entry(sup.to_string()).or_insert_with(|| {
                groups.push((sup.to_string(), Vec::new()));
                groups.len() - 1
            });
            groups[slot].1.push(class.to_string());
        }
        if groups.is_empty() {
            return Err(Error::Empty("taxonomy file has no records".into()));
        }
        Taxonomy::new(groups)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(&path, e))?;
        Taxonomy::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for sup in &self.superclasses {
            for class in &sup.classes {
                let _ = writeln!(out, "{}\t{}", sup.id, class);
            }
        }
        out
    }

    pub fn superclasses(&self) -> &[Superclass] {
        &self.superclasses
    }

    /// Number of superclasses, `L`.
    pub fn num_superclasses(&self) -> usize {
        self.superclasses.len()
    }

    /// Total number of classes, `M`.
    pub fn num_classes(&self) -> usize {
        self.owner.len()
    }

    pub fn superclass_sizes(&self) -> Vec<usize> {
        self.superclasses.iter().map(|s| s.classes.len()).collect()
    }

    /// Index of the superclass that owns `class`.
    pub fn owner_of(&self, class: &str) -> Option<usize> {
        self.owner.get(class).copied()
    }

    pub fn class_ids(&self) -> impl Iterator<Item = &str> {
        self.superclasses
            .iter()
            .flat_map(|s| s.classes.iter().map(String::as_str))
    }

    /// Restriction to the given superclass indices, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let groups = indices
            .iter()
            .map(|&i| {
                self.superclasses
                    .get(i)
                    .map(|s| (s.id.clone(), s.classes.clone()))
                    .ok_or_else(|| Error::InvalidArgument(format!("no superclass {i}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Taxonomy::new(groups)
    }

    /// Easy task classes: `n` distinct superclasses, one class from each.
    pub fn sample_easy_classes<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<String>> {
        let available = self.num_superclasses();
        if n > available {
            return Err(Error::InsufficientSuperclasses {
                needed: n,
                available,
            });
        }
        let mut order: Vec<usize> = (0..available).collect();
        let (picked, _) = order.partial_shuffle(rng, n);
        Ok(picked
            .iter()
            .map(|&s| {
                let classes = &self.superclasses[s].classes;
                classes[rng.random_range(0..classes.len())].clone()
            })
            .collect())
    }

    /// Hard task classes: shuffle the superclasses, pool classes from the
    /// shuffled prefix until at least `n` are available, then draw `n`
    /// uniformly from that pool.
    pub fn sample_hard_classes<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<String>> {
        let available = self.num_classes();
        if n > available {
            return Err(Error::InsufficientClasses {
                needed: n,
                available,
            });
        }
        let mut order: Vec<usize> = (0..self.num_superclasses()).collect();
        order.shuffle(rng);
        let mut candidate: Vec<&str> = Vec::new();
        for &s in &order {
            candidate.extend(self.superclasses[s].classes.iter().map(String::as_str));
            if candidate.len() >= n {
                break;
            }
        }
        let (picked, _) = candidate.partial_shuffle(rng, n);
        Ok(picked.iter().map(|c| c.to_string()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_task_rng;

    fn grid(supers: usize, per: usize) -> Taxonomy {
        let groups = (0..supers)
            .map(|s| {
                (
                    format!("S{s}"),
                    (0..per).map(|c| format!("S{s}c{c}")).collect(),
                )
            })
            .collect();
        Taxonomy::new(groups).unwrap()
    }

    #[test]
    fn parses_small_file() {
        let tax = Taxonomy::parse("A\tc1\nA\tc2\nB\tc3").unwrap();
        assert_eq!(tax.num_superclasses(), 2);
        assert_eq!(tax.num_classes(), 3);
        assert_eq!(tax.superclass_sizes(), vec![2, 1]);
    }

    #[test]
    fn comments_blank_lines_and_order() {
        let tax = Taxonomy::parse("# header\n\nB\tb1\nA\ta1\n\nB\tb2\n").unwrap();
        let ids: Vec<&str> = tax.superclasses().iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, ["B", "A"]);
        assert_eq!(tax.superclass_sizes(), vec![2, 1]);
    }

    #[test]
    fn duplicate_class_names_line() {
        match Taxonomy::parse("A\tc1\nB\tc1") {
            Err(Error::DuplicateClass { class, line }) => {
                assert_eq!(class, "c1");
                assert_eq!(line, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_and_malformed() {
        assert!(matches!(Taxonomy::parse(""), Err(Error::Empty(_))));
        assert!(matches!(Taxonomy::parse("# only\n\n"), Err(Error::Empty(_))));
        assert!(matches!(
            Taxonomy::parse("A\tc1\nno-tab-here"),
            Err(Error::Format { line: 2, .. })
        ));
        assert!(matches!(
            Taxonomy::parse("A\tc1\tc2"),
            Err(Error::Format { line: 1, .. })
        ));
    }

    #[test]
    fn tiered_sized_taxonomy() {
        // 34 superclasses holding 608 classes.
        let mut text = String::new();
        let mut class = 0;
        for s in 0..34 {
            let size = if s < 30 { 18 } else { 17 };
            for _ in 0..size {
                text.push_str(&format!("sup{s}\tn{class:05}\n"));
                class += 1;
            }
        }
        assert_eq!(class, 608);
        let tax = Taxonomy::parse(&text).unwrap();
        assert_eq!(tax.num_superclasses(), 34);
        assert_eq!(tax.num_classes(), 608);
    }

    #[test]
    fn text_round_trip() {
        let tax = grid(3, 2);
        assert_eq!(Taxonomy::parse(&tax.to_text()).unwrap(), tax);
    }

    #[test]
    fn easy_uses_distinct_superclasses() {
        let tax = grid(5, 3);
        let mut rng = derive_task_rng(1, 0);
        for _ in 0..200 {
            let classes = tax.sample_easy_classes(3, &mut rng).unwrap();
            let mut owners: Vec<usize> = classes.iter().map(|c| tax.owner_of(c).unwrap()).collect();
            owners.sort();
            owners.dedup();
            assert_eq!(owners.len(), 3);
        }
    }

    #[test]
    fn easy_rejects_too_many_ways() {
        let tax = grid(2, 4);
        let mut rng = derive_task_rng(1, 0);
        assert!(matches!(
            tax.sample_easy_classes(3, &mut rng),
            Err(Error::InsufficientSuperclasses { needed: 3, available: 2 })
        ));
    }

    #[test]
    fn easy_with_n_equal_l_covers_all_superclasses() {
        let tax = grid(4, 3);
        let mut rng = derive_task_rng(2, 0);
        let classes = tax.sample_easy_classes(4, &mut rng).unwrap();
        let mut owners: Vec<usize> = classes.iter().map(|c| tax.owner_of(c).unwrap()).collect();
        owners.sort();
        assert_eq!(owners, vec![0, 1, 2, 3]);
    }

    #[test]
    fn hard_shares_a_large_superclass() {
        let groups = vec![
            ("A".to_string(), (0..8).map(|c| format!("a{c}")).collect()),
            ("B".to_string(), (0..9).map(|c| format!("b{c}")).collect()),
        ];
        let tax = Taxonomy::new(groups).unwrap();
        let mut rng = derive_task_rng(3, 0);
        for _ in 0..100 {
            let classes = tax.sample_hard_classes(5, &mut rng).unwrap();
            let owner = tax.owner_of(&classes[0]).unwrap();
            assert!(classes.iter().all(|c| tax.owner_of(c) == Some(owner)));
        }
    }

    #[test]
    fn hard_falls_back_to_neighbouring_superclasses() {
        let groups = vec![
            ("A".to_string(), vec!["a0".into(), "a1".into()]),
            ("B".to_string(), (0..4).map(|c| format!("b{c}")).collect()),
        ];
        let tax = Taxonomy::new(groups).unwrap();
        let mut rng = derive_task_rng(4, 0);
        let mut seen_mixed = false;
        for _ in 0..200 {
            let classes = tax.sample_hard_classes(3, &mut rng).unwrap();
            let owners: HashSet<usize> = classes.iter().map(|c| tax.owner_of(c).unwrap()).collect();
            seen_mixed |= owners.len() == 2;
        }
        // When A comes first the pool is A+B (6 classes), so mixed draws occur.
        assert!(seen_mixed);
    }

    #[test]
    fn hard_with_n_equal_m_returns_everything() {
        let tax = grid(3, 2);
        let mut rng = derive_task_rng(5, 0);
        let mut classes = tax.sample_hard_classes(6, &mut rng).unwrap();
        classes.sort();
        let mut all: Vec<String> = tax.class_ids().map(String::from).collect();
        all.sort();
        assert_eq!(classes, all);
        assert!(matches!(
            tax.sample_hard_classes(7, &mut rng),
            Err(Error::InsufficientClasses { .. })
        ));
    }

    #[test]
    fn sampling_is_deterministic() {
        let tax = grid(6, 4);
        let a = tax.sample_hard_classes(5, &mut derive_task_rng(9, 9)).unwrap();
        let b = tax.sample_hard_classes(5, &mut derive_task_rng(9, 9)).unwrap();
        assert_eq!(a, b);
        let a = tax.sample_easy_classes(5, &mut derive_task_rng(9, 9)).unwrap();
        let b = tax.sample_easy_classes(5, &mut derive_task_rng(9, 9)).unwrap();
        assert_eq!(a, b);
    }
}
