use rand::seq::{IndexedRandom, SliceRandom};
use serde::{Deserialize, Serialize};

use super::lang::{unknown_option, LangSpec, Lexicon};
use super::templates::{ATTR_ADJECTIVES, ATTR_NOUNS, IDENTITIES, MCQ_QUESTION};
use super::{CorpusError, MCQExample};
use crate::seed::{self, derive_seed};

/// A stereotyped association between a group and an attribute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StereoPair {
    pub identity: String,
    pub attribute: String,
}

/// Draws `n` pairs with distinct attributes ("lazy drivers", ...) and a
/// random identity each.
pub fn default_stereo_pairs(n: usize, seed: u64) -> Result<Vec<StereoPair>, CorpusError> {
    let mut attributes: Vec<String> = ATTR_ADJECTIVES
        .iter()
        .flat_map(|a| ATTR_NOUNS.iter().map(move |n| format!("{a} {n}")))
        .collect();
    if n == 0 || n > attributes.len() {
        return Err(CorpusError::InvalidArgument(format!(
            "between 1 and {} stereotype pairs can be drawn, {n} requested",
            attributes.len()
        )));
    }
    let mut rng = seed::rng(derive_seed(seed, &["stereo-pairs"]));
    attributes.shuffle(&mut rng);
    Ok(attributes
        .into_iter()
        .take(n)
        .map(|attribute| StereoPair {
            identity: IDENTITIES.choose(&mut rng).unwrap().to_string(),
            attribute,
        })
        .collect())
}

/// One multiple-choice item per pair: the stereotyped identity, the
/// "unknown" option and `n_distractors` other identities from the pairs,
/// shuffled. Option order and distractors depend only on `seed` and the pair
/// index, so every language gets the same layout.
pub fn generate_mcq(
    pairs: &[StereoPair],
    spec: &LangSpec,
    n_distractors: usize,
    seed: u64,
) -> Result<Vec<MCQExample>, CorpusError> {
    let lex = Lexicon::build(spec)?;
    let unknown = unknown_option(&lex);
    let mut pool: Vec<&str> = pairs.iter().map(|p| p.identity.as_str()).collect();
    pool.sort_unstable();
    pool.dedup();
    if pool.len().saturating_sub(1) < n_distractors {
        return Err(CorpusError::InsufficientDistractors {
            available: pool.len().saturating_sub(1),
            requested: n_distractors,
        });
    }
    let mut out = Vec::with_capacity(pairs.len());
    for (i, pair) in pairs.iter().enumerate() {
        let mut rng = seed::rng(derive_seed(seed, &["mcq", &i.to_string()]));
        let others: Vec<&str> = pool.iter().copied().filter(|p| *p != pair.identity).collect();
        // Tag each option with its role so the indices survive the shuffle.
        let mut options: Vec<(u8, String)> = vec![(1, lex.phrase(&pair.identity)), (2, unknown.clone())];
        options.extend(
            others
                .choose_multiple(&mut rng, n_distractors)
                .map(|d| (0, lex.phrase(d))),
        );
        options.shuffle(&mut rng);
        let ex = MCQExample {
            id: format!("mcq-{i:04}"),
            language: spec.lang_id.clone(),
            question: lex.render(&MCQ_QUESTION, &spec.word_order, &[("{attr}", &pair.attribute)]),
            stereotype_index: options.iter().position(|o| o.0 == 1).unwrap(),
            unknown_index: options.iter().position(|o| o.0 == 2).unwrap(),
            options: options.into_iter().map(|o| o.1).collect(),
        };
        ex.validate(Some(&unknown))?;
        out.push(ex);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn items_are_well_formed_and_parallel() {
        let pairs = default_stereo_pairs(20, 4).unwrap();
        let en = generate_mcq(&pairs, &LangSpec::base("en"), 2, 9).unwrap();
        let other = LangSpec {
            lang_id: "xx".into(),
            lexicon_seed: 3,
            shared_fraction: 0.0,
            word_order: vec![3, 1, 2, 0],
            script_offset: 0,
        };
        let xx = generate_mcq(&pairs, &other, 2, 9).unwrap();
        assert_eq!(en.len(), 20);
        for (a, b) in en.iter().zip(&xx) {
            assert_eq!(a.options.len(), 4);
            assert_eq!(a.options[a.unknown_index], "unknown");
            assert_eq!(
                a.options[a.stereotype_index],
                pairs[a.id[4..].parse::<usize>().unwrap()].identity
            );
            assert_eq!(
                (a.stereotype_index, a.unknown_index),
                (b.stereotype_index, b.unknown_index)
            );
            assert_ne!(a.question, b.question);
        }
    }

    #[test]
    fn distractor_pool_is_checked() {
        let pairs = vec![
            StereoPair {
                identity: "ostari".into(),
                attribute: "shy cooks".into(),
            },
            StereoPair {
                identity: "kembu".into(),
                attribute: "loud cooks".into(),
            },
        ];
        assert!(generate_mcq(&pairs, &LangSpec::base("en"), 1, 0).is_ok());
        assert!(matches!(
            generate_mcq(&pairs, &LangSpec::base("en"), 2, 0),
            Err(CorpusError::InsufficientDistractors {
                available: 1,
                requested: 2
            })
        ));
    }

    #[test]
    fn pair_count_bounds() {
        assert!(default_stereo_pairs(0, 1).is_err());
        assert!(default_stereo_pairs(61, 1).is_err());
        let p = default_stereo_pairs(60, 1).unwrap();
        let mut attrs: Vec<_> = p.iter().map(|p| p.attribute.clone()).collect();
        attrs.dedup();
        attrs.sort();
        attrs.dedup();
        assert_eq!(attrs.len(), 60);
    }
}
