//! Turning dataset text into scored token sequences.

use crate::corpus::{CorpusError, MCQExample, QAExample, Vocab};
use crate::model::ScoredSeq;

/// `[BOS] question [SEP] answer`, scoring the answer tokens.
pub fn qa_seq(vocab: &Vocab, question: &str, answer: &str) -> Result<ScoredSeq, CorpusError> {
    Ok(ScoredSeq::question_answer(
        &vocab.tokenize(question)?,
        &vocab.tokenize(answer)?,
    ))
}

/// `[BOS] sentence`, scoring every token.
pub fn sentence_seq(vocab: &Vocab, text: &str) -> Result<ScoredSeq, CorpusError> {
    Ok(ScoredSeq::sentence(&vocab.tokenize(text)?))
}

/// The question paired with its correct answer.
pub fn answer_seq(vocab: &Vocab, ex: &QAExample) -> Result<ScoredSeq, CorpusError> {
    qa_seq(vocab, &ex.question, &ex.answer)
}

/// The question paired with each option, in option order.
pub fn option_seqs(vocab: &Vocab, ex: &MCQExample) -> Result<Vec<ScoredSeq>, CorpusError> {
    ex.options.iter().map(|o| qa_seq(vocab, &ex.question, o)).collect()
}
