use proptest::prelude::*;

use unlearn_core::model::{Model, ModelConfig, ScoredSeq};
use unlearn_core::unlearn::{cross_entropy, kl_to_reference};

fn model(seed: u64) -> Model<f64> {
    Model::init(ModelConfig {
        vocab_size: 6,
        embed_dim: 8,
        n_layers: 1,
        n_heads: 2,
        ff_mult: 2,
        context_len: 10,
        init_seed: seed,
    })
    .unwrap()
}

fn seqs(raw: &[Vec<u32>]) -> Vec<ScoredSeq> {
    raw.iter()
        .map(|s| ScoredSeq::question_answer(&s[..1], &s[1..]))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn kl_is_nonnegative_and_zero_on_itself(
        a in 0u64..1000,
        b in 0u64..1000,
        raw in prop::collection::vec(prop::collection::vec(3u32..6, 2..6), 1..4),
    ) {
        let (m, r) = (model(a), model(b).frozen());
        let batch = seqs(&raw);
        prop_assert!(kl_to_reference(&m, &r, &batch).unwrap() >= -1e-12);
        let same = m.clone().frozen();
        prop_assert!(kl_to_reference(&m, &same, &batch).unwrap().abs() < 1e-12);
        prop_assert!(cross_entropy(&m, &batch).unwrap() > 0.0);
    }
}
