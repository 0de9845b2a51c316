use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::templates::{
    Relation, AUTHOR_FIRST, AUTHOR_LAST, AUTHOR_RELATIONS, COUNTRIES, REAL_FIRST, REAL_LAST, WORLD_RELATIONS,
};
use super::{CorpusError, Split};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Authors,
    RealAuthors,
    WorldFacts,
}

impl Domain {
    pub fn id_prefix(self) -> &'static str {
        match self {
            Domain::Authors => "tofu",
            Domain::RealAuthors => "real",
            Domain::WorldFacts => "world",
        }
    }

    pub fn default_split(self) -> Split {
        match self {
            Domain::Authors => Split::Retain,
            Domain::RealAuthors => Split::RealAuthorsAnalog,
            Domain::WorldFacts => Split::WorldFactsAnalog,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fact {
    pub subject_id: u32,
    pub subject: String,
    pub relation: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactSet {
    pub domain: Domain,
    pub facts: Vec<Fact>,
}

impl FactSet {
    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn n_subjects(&self) -> usize {
        let mut ids: Vec<u32> = self.facts.iter().map(|f| f.subject_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }
}

fn generate(
    domain: Domain,
    names: Vec<String>,
    n_subjects: usize,
    relations: &[Relation],
    facts_per_subject: usize,
    seed: u64,
) -> Result<FactSet, CorpusError> {
    if n_subjects == 0 || facts_per_subject == 0 {
        return Err(CorpusError::InvalidArgument(
            "subject and fact counts must be positive".into(),
        ));
    }
    if facts_per_subject > relations.len() {
        return Err(CorpusError::InvalidArgument(format!(
            "at most {} facts per subject are available, {facts_per_subject} requested",
            relations.len()
        )));
    }
    if n_subjects > names.len() {
        return Err(CorpusError::InvalidArgument(format!(
            "at most {} distinct subjects are available, {n_subjects} requested",
            names.len()
        )));
    }
    let mut rng = seed::rng(seed);
    let mut names = names;
    names.shuffle(&mut rng);
    let mut facts = Vec::with_capacity(n_subjects * facts_per_subject);
    for (sid, name) in names.into_iter().take(n_subjects).enumerate() {
        for rel in &relations[..facts_per_subject] {
            let value = rel.values[rng.random_range(0..rel.values.len())];
            facts.push(Fact {
                subject_id: sid as u32,
                subject: name.clone(),
                relation: rel.id.to_string(),
                value: value.to_string(),
            });
        }
    }
    Ok(FactSet { domain, facts })
}

fn full_names(first: &[&str], last: &[&str]) -> Vec<String> {
    first
        .iter()
        .flat_map(|f| last.iter().map(move |l| format!("{f} {l}")))
        .collect()
}

/// Synthetic author profiles with `facts_per_profile` facts each, using the
/// first `facts_per_profile` author relations.
pub fn generate_profiles(n_profiles: usize, facts_per_profile: usize, seed: u64) -> Result<FactSet, CorpusError> {
    generate(
        Domain::Authors,
        full_names(AUTHOR_FIRST, AUTHOR_LAST),
        n_profiles,
        AUTHOR_RELATIONS,
        facts_per_profile,
        seed,
    )
}

/// Held-out author profiles with names disjoint from [`generate_profiles`].
pub fn generate_real_authors(n_profiles: usize, facts_per_profile: usize, seed: u64) -> Result<FactSet, CorpusError> {
    generate(
        Domain::RealAuthors,
        full_names(REAL_FIRST, REAL_LAST),
        n_profiles,
        AUTHOR_RELATIONS,
        facts_per_profile,
        seed,
    )
}

/// Facts about fictional countries (capital, currency, region).
pub fn generate_world_facts(n_countries: usize, seed: u64) -> Result<FactSet, CorpusError> {
    generate(
        Domain::WorldFacts,
        COUNTRIES.iter().map(|c| c.to_string()).collect(),
        n_countries,
        WORLD_RELATIONS,
        WORLD_RELATIONS.len(),
        seed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        let fs = generate_profiles(2, 3, 9).unwrap();
        assert_eq!(fs.len(), 6);
        assert_eq!(fs.n_subjects(), 2);
    }

    #[test]
    fn tofu_shape() {
        let fs = generate_profiles(200, 20, 1).unwrap();
        assert_eq!(fs.len(), 4000);
        assert_eq!(fs.n_subjects(), 200);
        let mut keys: Vec<(u32, &str)> = fs.facts.iter().map(|f| (f.subject_id, f.relation.as_str())).collect();
        keys.sort_unstable();
        keys.dedup();
        assert_eq!(keys.len(), 4000, "(subject, relation) must be unique");
    }

    #[test]
    fn deterministic() {
        assert_eq!(
            generate_profiles(10, 5, 3).unwrap(),
            generate_profiles(10, 5, 3).unwrap()
        );
        assert_ne!(
            generate_profiles(10, 5, 3).unwrap(),
            generate_profiles(10, 5, 4).unwrap()
        );
    }

    #[test]
    fn invalid_arguments() {
        assert!(generate_profiles(0, 3, 1).is_err());
        assert!(generate_profiles(3, 0, 1).is_err());
        assert!(generate_profiles(3, 21, 1).is_err());
        assert!(generate_real_authors(101, 1, 1).is_err());
    }

    #[test]
    fn utility_domains_are_disjoint_from_profiles() {
        let a = generate_profiles(50, 1, 1).unwrap();
        let r = generate_real_authors(50, 1, 1).unwrap();
        let w = generate_world_facts(10, 1).unwrap();
        for f in &r.facts {
            assert!(a.facts.iter().all(|g| g.subject != f.subject));
        }
        assert_eq!(w.len(), 30);
    }
}
