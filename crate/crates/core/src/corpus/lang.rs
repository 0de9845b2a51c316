use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::{IndexedRandom, SliceRandom};
use serde::{Deserialize, Serialize};

use super::facts::FactSet;
use super::templates::{
    self, author_relation, base_lexemes, Slots, AUTHOR_FIRST, AUTHOR_LAST, AUTHOR_RELATIONS, COUNTRIES,
    GENERIC_SUBJECTS, REAL_FIRST, REAL_LAST, SLOTS,
};
use super::{CorpusError, QAExample, Split};
use crate::seed::{self, derive_seed};

pub const DEFAULT_PERTURBED: usize = 3;

/// A synthetic language, defined relative to the base language.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LangSpec {
    pub lang_id: String,
    pub lexicon_seed: u64,
    /// Fraction of content words kept verbatim from the base language.
    pub shared_fraction: f64,
    /// `word_order[k]` is the template slot rendered at position `k`.
    pub word_order: Vec<usize>,
    /// Code-point shift applied to the letters of non-shared words.
    #[serde(default)]
    pub script_offset: u32,
}

impl LangSpec {
    /// The base language itself: every word shared, identity order.
    pub fn base(lang_id: &str) -> Self {
        Self {
            lang_id: lang_id.to_string(),
            lexicon_seed: 0,
            shared_fraction: 1.0,
            word_order: (0..SLOTS).collect(),
            script_offset: 0,
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |reason: &str| {
            Err(CorpusError::InvalidLangSpec {
                lang: self.lang_id.clone(),
                reason: reason.to_string(),
            })
        };
        let id_ok = !self.lang_id.is_empty()
            && self
                .lang_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
        if !id_ok {
            return bad("lang_id must be non-empty ASCII alphanumerics, '_' or '-'");
        }
        if !(0.0..=1.0).contains(&self.shared_fraction) {
            return bad("shared_fraction must lie in [0, 1]");
        }
        let mut seen = [false; SLOTS];
        if self.word_order.len() != SLOTS {
            return bad("word_order must permute the template slots");
        }
        for &i in &self.word_order {
            if i >= SLOTS || seen[i] {
                return bad("word_order must permute the template slots");
            }
            seen[i] = true;
        }
        if self.script_offset > 0 && char::from_u32('z' as u32 + self.script_offset).is_none() {
            return bad("script_offset leaves the valid code-point range");
        }
        Ok(())
    }
}

/// Base word to language word mapping for one [`LangSpec`].
#[derive(Debug, Clone)]
pub struct Lexicon {
    map: BTreeMap<String, String>,
    shared: BTreeSet<String>,
}

const CONSONANTS: &[char] = &['b', 'd', 'f', 'g', 'k', 'l', 'm', 'n', 'p', 'r', 's', 't', 'v', 'z'];
const VOWELS: &[char] = &['a', 'e', 'i', 'o', 'u'];

fn pseudo_word(lexicon_seed: u64, word: &str, attempt: u32, offset: u32) -> String {
    let mut rng = seed::rng(derive_seed(lexicon_seed, &["lexeme", word, &attempt.to_string()]));
    let syllables = 2 + usize::from(word.chars().count() > 6) + attempt as usize / 4;
    let mut s = String::new();
    for _ in 0..syllables {
        s.push(*CONSONANTS.choose(&mut rng).unwrap());
        s.push(*VOWELS.choose(&mut rng).unwrap());
    }
    if offset == 0 {
        return s;
    }
    s.chars()
        .map(|c| {
            char::from_u32(c as u32 + offset)
                .filter(|m| !m.is_whitespace())
                .unwrap_or(c)
        })
        .collect()
}

fn name_tokens() -> HashSet<&'static str> {
    AUTHOR_FIRST
        .iter()
        .chain(AUTHOR_LAST)
        .chain(REAL_FIRST)
        .chain(REAL_LAST)
        .chain(COUNTRIES)
        .copied()
        .collect()
}

impl Lexicon {
    pub fn build(spec: &LangSpec) -> Result<Self, CorpusError> {
        spec.validate()?;
        let base = base_lexemes();
        let n_shared = (spec.shared_fraction * base.len() as f64).round() as usize;
        let mut order = base.clone();
        order.shuffle(&mut seed::rng(derive_seed(spec.lexicon_seed, &["shared"])));
        let shared: BTreeSet<String> = order[..n_shared].iter().map(|s| s.to_string()).collect();

        let mut reserved: HashSet<String> = base.iter().map(|s| s.to_string()).collect();
        reserved.extend(name_tokens().into_iter().map(String::from));
        let mut map = BTreeMap::new();
        for word in &base {
            if shared.contains(*word) {
                map.insert(word.to_string(), word.to_string());
                continue;
            }
            let mut attempt = 0;
            let form = loop {
                let cand = pseudo_word(spec.lexicon_seed, word, attempt, spec.script_offset);
                if !reserved.contains(&cand) {
                    break cand;
                }
                attempt += 1;
            };
            reserved.insert(form.clone());
            map.insert(word.to_string(), form);
        }
        Ok(Self { map, shared })
    }

    /// Base words this language keeps verbatim.
    pub fn shared(&self) -> &BTreeSet<String> {
        &self.shared
    }

    /// Translates one word; words outside the closed vocabulary (names) are
    /// kept as they are.
    pub fn word(&self, word: &str) -> String {
        self.map.get(word).cloned().unwrap_or_else(|| word.to_string())
    }

    pub fn phrase(&self, phrase: &str) -> String {
        phrase.split(' ').map(|w| self.word(w)).collect::<Vec<_>>().join(" ")
    }

    /// Fills the placeholders of `slots`, translates the fixed phrases and
    /// applies the word order. Placeholder fillers are translated too, except
    /// `{name}`.
    pub fn render(&self, slots: &Slots, order: &[usize], fill: &[(&str, &str)]) -> String {
        order
            .iter()
            .map(|&i| {
                let slot = slots[i];
                match fill.iter().find(|(k, _)| *k == slot) {
                    Some(("{name}", v)) => v.to_string(),
                    Some((_, v)) => self.phrase(v),
                    None => self.phrase(slot),
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Renders every fact as a question/answer item in the language of `spec`,
/// with `DEFAULT_PERTURBED` perturbed answers each.
pub fn render_language(facts: &FactSet, spec: &LangSpec, seed: u64) -> Result<Vec<QAExample>, CorpusError> {
    render_language_with(facts, spec, seed, DEFAULT_PERTURBED)
}

/// As [`render_language`] with an explicit number of perturbed answers. The
/// wrong values drawn for a fact depend only on `seed` and the fact, so every
/// language perturbs the same way.
pub fn render_language_with(
    facts: &FactSet,
    spec: &LangSpec,
    seed: u64,
    n_perturbed: usize,
) -> Result<Vec<QAExample>, CorpusError> {
    let lex = Lexicon::build(spec)?;
    let prefix = facts.domain.id_prefix();
    let mut out = Vec::with_capacity(facts.len());
    for fact in &facts.facts {
        let rel = author_relation(&fact.relation).ok_or_else(|| CorpusError::TemplateGap(fact.relation.clone()))?;
        let wrong: Vec<&str> = rel.values.iter().copied().filter(|v| *v != fact.value).collect();
        if n_perturbed == 0 || n_perturbed > wrong.len() {
            return Err(CorpusError::InvalidArgument(format!(
                "relation {} supports 1..={} perturbed answers, {n_perturbed} requested",
                rel.id,
                wrong.len()
            )));
        }
        let mut rng = seed::rng(derive_seed(
            seed,
            &["perturb", prefix, &fact.subject_id.to_string(), rel.id],
        ));
        let picks: Vec<&str> = wrong.choose_multiple(&mut rng, n_perturbed).copied().collect();
        let order = &spec.word_order;
        let name = fact.subject.as_str();
        let answer = lex.render(&rel.answer, order, &[("{name}", name), ("{value}", &fact.value)]);
        let ex = QAExample {
            id: format!("{prefix}-{:04}-{}", fact.subject_id, rel.id),
            language: spec.lang_id.clone(),
            subject_id: format!("{prefix}-{:04}", fact.subject_id),
            split: facts.domain.default_split(),
            question: lex.render(&rel.question, order, &[("{name}", name)]),
            paraphrased_answer: lex.render(&rel.paraphrase, order, &[("{name}", name), ("{value}", &fact.value)]),
            perturbed_answers: picks
                .iter()
                .map(|v| lex.render(&rel.answer, order, &[("{name}", name), ("{value}", v)]))
                .collect(),
            answer,
        };
        ex.validate()?;
        out.push(ex);
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

/// Moves every example of `ceil(forget_fraction * n_subjects)` seeded subjects
/// into the forget split. The choice depends only on the set of subject ids
/// and `seed`, so all renderings of a fact set split identically.
pub fn split_forget_retain(
    dataset: &[QAExample],
    forget_fraction: f64,
    seed: u64,
) -> Result<(Vec<QAExample>, Vec<QAExample>), CorpusError> {
    if !(forget_fraction > 0.0 && forget_fraction < 1.0) {
        return Err(CorpusError::InvalidArgument(format!(
            "forget_fraction must lie in (0, 1), got {forget_fraction}"
        )));
    }
    let mut subjects: Vec<&str> = dataset.iter().map(|e| e.subject_id.as_str()).collect();
    subjects.sort_unstable();
    subjects.dedup();
    if subjects.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let n_forget = ((forget_fraction * subjects.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    subjects.shuffle(&mut seed::rng(derive_seed(seed, &["forget-split"])));
    let forget_subjects: HashSet<&str> = subjects[..n_forget.min(subjects.len())].iter().copied().collect();

    let (mut forget, retain): (Vec<_>, Vec<_>) = dataset
        .iter()
        .cloned()
        .partition(|e| forget_subjects.contains(e.subject_id.as_str()));
    for e in &mut forget {
        e.split = Split::Forget;
    }
    Ok((forget, retain))
}

/// General-purpose sentences: author-style statements about generic
/// subjects ("the neighbor was born in lima"). Sentence content depends only
/// on `seed`, so corpora for different languages are parallel.
pub fn general_corpus(spec: &LangSpec, n_sentences: usize, seed: u64) -> Result<Vec<String>, CorpusError> {
    let lex = Lexicon::build(spec)?;
    let mut out = Vec::with_capacity(n_sentences);
    for i in 0..n_sentences {
        let mut rng = seed::rng(derive_seed(seed, &["general", &i.to_string()]));
        let subject = *GENERIC_SUBJECTS.choose(&mut rng).unwrap();
        let rel = AUTHOR_RELATIONS.choose(&mut rng).unwrap();
        let value = *rel.values.choose(&mut rng).unwrap();
        // Generic subjects are ordinary words, so translate them here.
        let subject = lex.phrase(subject);
        out.push(lex.render(
            &rel.answer,
            &spec.word_order,
            &[("{name}", &subject), ("{value}", value)],
        ));
    }
    Ok(out)
}

/// The rendering of the "unknown" option in this language.
pub fn unknown_option(lex: &Lexicon) -> String {
    lex.word(templates::UNKNOWN_OPTION)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::facts::generate_profiles;

    fn spec(id: &str, omega: f64, order: [usize; 4], seed: u64) -> LangSpec {
        LangSpec {
            lang_id: id.into(),
            lexicon_seed: seed,
            shared_fraction: omega,
            word_order: order.to_vec(),
            script_offset: 0,
        }
    }

    #[test]
    fn identity_spec_renders_base_language() {
        let fs = generate_profiles(3, 4, 1).unwrap();
        let a = render_language(&fs, &LangSpec::base("en"), 5).unwrap();
        let b = render_language(&fs, &spec("en", 1.0, [0, 1, 2, 3], 99), 5).unwrap();
        assert_eq!(a, b);
        let birth = a.iter().find(|e| e.id.ends_with("birthplace")).unwrap();
        assert!(birth.question.starts_with("where was "));
        assert!(birth.question.ends_with(" born"));
    }

    #[test]
    fn zero_overlap_changes_every_lexeme() {
        let lex = Lexicon::build(&spec("xx", 0.0, [0, 1, 2, 3], 3)).unwrap();
        assert!(lex.shared().is_empty());
        for w in base_lexemes() {
            assert_ne!(lex.word(w), w);
        }
        let offset = Lexicon::build(&LangSpec {
            script_offset: 0x3B1 - 'a' as u32,
            ..spec("gr", 0.0, [0, 1, 2, 3], 3)
        })
        .unwrap();
        assert!(offset.word("paris").chars().all(|c| !c.is_ascii()));
    }

    #[test]
    fn shared_sets_are_seed_determined() {
        let a = Lexicon::build(&spec("a", 0.5, [0, 1, 2, 3], 11)).unwrap();
        let b = Lexicon::build(&spec("b", 0.5, [3, 2, 1, 0], 11)).unwrap();
        assert_eq!(a.shared(), b.shared());
        let n = base_lexemes().len();
        assert_eq!(a.shared().len(), (0.5 * n as f64).round() as usize);
        let c = Lexicon::build(&spec("c", 0.5, [0, 1, 2, 3], 12)).unwrap();
        assert_ne!(a.shared(), c.shared());
    }

    #[test]
    fn word_order_permutes_slots() {
        let fs = generate_profiles(1, 1, 1).unwrap();
        let ex = &render_language(&fs, &spec("r", 1.0, [3, 2, 1, 0], 0), 1).unwrap()[0];
        assert!(ex.question.starts_with("born "));
    }

    #[test]
    fn perturbations_are_shared_across_languages() {
        let fs = generate_profiles(4, 5, 2).unwrap();
        let a = render_language(&fs, &LangSpec::base("en"), 8).unwrap();
        let b = render_language(&fs, &spec("zz", 0.0, [0, 1, 2, 3], 4), 8).unwrap();
        let lex = Lexicon::build(&spec("zz", 0.0, [0, 1, 2, 3], 4)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.id, y.id);
            for (p, q) in x.perturbed_answers.iter().zip(&y.perturbed_answers) {
                let last = p.rsplit(' ').next().unwrap();
                assert!(q.ends_with(&lex.word(last)));
            }
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(Lexicon::build(&spec("", 0.5, [0, 1, 2, 3], 0)).is_err());
        assert!(Lexicon::build(&spec("a", 1.5, [0, 1, 2, 3], 0)).is_err());
        assert!(Lexicon::build(&spec("a", 0.5, [0, 1, 1, 3], 0)).is_err());
    }

    #[test]
    fn template_gap_is_reported() {
        let mut fs = generate_profiles(1, 1, 1).unwrap();
        fs.facts[0].relation = "shoe_size".into();
        assert!(matches!(
            render_language(&fs, &LangSpec::base("en"), 1),
            Err(CorpusError::TemplateGap(_))
        ));
    }

    #[test]
    fn forget_split_counts() {
        let fs = generate_profiles(200, 1, 1).unwrap();
        let data = render_language(&fs, &LangSpec::base("en"), 1).unwrap();
        let (f, r) = split_forget_retain(&data, 0.01, 3).unwrap();
        assert_eq!(f.len(), 2);
        assert_eq!(r.len(), 198);

        let fs = generate_profiles(10, 20, 1).unwrap();
        let data = render_language(&fs, &LangSpec::base("en"), 1).unwrap();
        let (f, _) = split_forget_retain(&data, 0.1, 3).unwrap();
        assert_eq!(f.len(), 20);
        assert!(f.iter().all(|e| e.split == Split::Forget));
        assert!(split_forget_retain(&data, 0.0, 3).is_err());
        assert!(split_forget_retain(&data, 1.0, 3).is_err());
    }

    #[test]
    fn forget_split_is_identical_across_languages() {
        let fs = generate_profiles(20, 3, 1).unwrap();
        let en = render_language(&fs, &LangSpec::base("en"), 1).unwrap();
        let xx = render_language(&fs, &spec("xx", 0.2, [1, 0, 3, 2], 7), 1).unwrap();
        let (fa, _) = split_forget_retain(&en, 0.15, 9).unwrap();
        let (fb, _) = split_forget_retain(&xx, 0.15, 9).unwrap();
        let ids = |v: &[QAExample]| v.iter().map(|e| e.id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(&fa), ids(&fb));
    }

    #[test]
    fn general_corpus_is_parallel() {
        let a = general_corpus(&LangSpec::base("en"), 5, 3).unwrap();
        let b = general_corpus(&spec("xx", 0.0, [0, 1, 2, 3], 1), 5, 3).unwrap();
        assert_eq!(a.len(), 5);
        assert_eq!(a, general_corpus(&LangSpec::base("en"), 5, 3).unwrap());
        assert_ne!(a, b);
    }
}
