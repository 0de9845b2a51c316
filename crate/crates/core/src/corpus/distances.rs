use serde::{Deserialize, Serialize};

use super::lang::{LangSpec, Lexicon};
use super::templates::SLOTS;
use super::CorpusError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    Syntactic,
    Inventory,
    Phonological,
}

impl DistanceKind {
    pub const ALL: [DistanceKind; 3] = [
        DistanceKind::Syntactic,
        DistanceKind::Inventory,
        DistanceKind::Phonological,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DistanceKind::Syntactic => "syntactic",
            DistanceKind::Inventory => "inventory",
            DistanceKind::Phonological => "phonological",
        }
    }
}

/// Pairwise language distances, rows and columns in `languages` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrices {
    pub languages: Vec<String>,
    pub syntactic: Vec<Vec<f64>>,
    pub inventory: Vec<Vec<f64>>,
    /// Only available when ingested from an external source.
    pub phonological: Option<Vec<Vec<f64>>>,
}

impl DistanceMatrices {
    pub fn get(&self, kind: DistanceKind) -> Option<&Vec<Vec<f64>>> {
        match kind {
            DistanceKind::Syntactic => Some(&self.syntactic),
            DistanceKind::Inventory => Some(&self.inventory),
            DistanceKind::Phonological => self.phonological.as_ref(),
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let k = self.languages.len();
        if k < 2 {
            return Err(CorpusError::InvalidDistances(
                "at least two languages are required".into(),
            ));
        }
        for kind in DistanceKind::ALL {
            if let Some(m) = self.get(kind) {
                validate_matrix(kind.as_str(), m, k)?;
            }
        }
        Ok(())
    }
}

/// Checks a `k x k` matrix is symmetric with zero diagonal and entries in [0, 1].
pub fn validate_matrix(name: &str, m: &[Vec<f64>], k: usize) -> Result<(), CorpusError> {
    let bad = |reason: String| Err(CorpusError::InvalidDistances(format!("{name}: {reason}")));
    if m.len() != k || m.iter().any(|r| r.len() != k) {
        return bad(format!("expected a {k}x{k} matrix"));
    }
    for i in 0..k {
        for j in 0..k {
            let v = m[i][j];
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("entry ({i},{j}) = {v} outside [0, 1]"));
            }
            if i == j && v != 0.0 {
                return bad(format!("diagonal entry {i} is {v}"));
            }
            if (v - m[j][i]).abs() > 1e-12 {
                return bad(format!("not symmetric at ({i},{j})"));
            }
        }
    }
    Ok(())
}

/// Fraction of slot pairs the two orders disagree on.
pub fn order_distance(a: &[usize], b: &[usize]) -> f64 {
    let pos = |order: &[usize], slot: usize| order.iter().position(|&s| s == slot).unwrap();
    let mut discordant = 0;
    let mut pairs = 0;
    for s in 0..SLOTS {
        for t in s + 1..SLOTS {
            pairs += 1;
            if (pos(a, s) < pos(a, t)) != (pos(b, s) < pos(b, t)) {
                discordant += 1;
            }
        }
    }
    discordant as f64 / pairs as f64
}

/// Distances computed from the language definitions: syntactic is the
/// normalized Kendall distance between word orders, inventory is one minus
/// the Jaccard similarity of the shared-word sets.
pub fn synthetic_distances(specs: &[LangSpec]) -> Result<DistanceMatrices, CorpusError> {
    if specs.len() < 2 {
        return Err(CorpusError::InvalidDistances(
            "at least two languages are required".into(),
        ));
    }
    let lexicons = specs.iter().map(Lexicon::build).collect::<Result<Vec<_>, _>>()?;
    let k = specs.len();
    let mut syntactic = vec![vec![0.0; k]; k];
    let mut inventory = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            syntactic[i][j] = order_distance(&specs[i].word_order, &specs[j].word_order);
            let (a, b) = (lexicons[i].shared(), lexicons[j].shared());
            let union = a.union(b).count();
            inventory[i][j] = if union == 0 {
                0.0
            } else {
                1.0 - a.intersection(b).count() as f64 / union as f64
            };
        }
    }
    let out = DistanceMatrices {
        languages: specs.iter().map(|s| s.lang_id.clone()).collect(),
        syntactic,
        inventory,
        phonological: None,
    };
    out.validate()?;
    Ok(out)
}
