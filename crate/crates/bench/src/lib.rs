//! Fixtures shared by the benchmarks.

use ndarray::Array1;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use capvqa::dataset::{join_examples, CaptionMap, ExampleSet, InputMode, Split};
use capvqa::modeling::head::{ClassifierHeadParams, PooledRepresentation};
use capvqa::synthetic::memorization_corpus;
use capvqa::vocab::{build_answer_vocab, VocabCutoff};
use capvqa::{AnnotationRecord, AnswerVocab, PredictionDistribution};

const WORDS: [&str; 12] = [
    "red", "blue", "dog", "cat", "two", "yes", "no", "tennis", "pizza", "wood", "bus", "kite",
];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` questions with ten answers each drawn from a small alphabet.
pub fn annotations(n: usize, seed: u64) -> Vec<AnnotationRecord> {
    let mut rng = rng(seed);
    (0..n as u64)
        .map(|q| {
            let answers: Vec<&str> = (0..10).map(|_| *WORDS.choose(&mut rng).unwrap()).collect();
            AnnotationRecord::new(q, q, &answers).unwrap()
        })
        .collect()
}

pub fn word_vocab() -> AnswerVocab {
    AnswerVocab::from_answers(WORDS[..8].iter().map(|s| s.to_string()).collect()).unwrap()
}

pub fn distribution(n: usize, seed: u64) -> PredictionDistribution {
    let mut rng = rng(seed);
    let logits: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    PredictionDistribution::from_logits(&logits).unwrap()
}

pub fn head(d_h: usize, n_label: usize) -> (PooledRepresentation, ClassifierHeadParams) {
    let mut rng = rng(7);
    let params = ClassifierHeadParams::init(d_h, n_label, 0.02, &mut rng);
    let t = Array1::from_iter((0..d_h).map(|_| rng.random_range(-1.0..1.0)));
    (PooledRepresentation::new(t).unwrap(), params)
}

/// Caption-mode training set over the synthetic memorization corpus.
pub fn caption_examples(n: usize) -> (ExampleSet, AnswerVocab) {
    let corpus = memorization_corpus(n, 1);
    let captions: CaptionMap = corpus.captions.iter().map(|c| (c.image_id, c.clone())).collect();
    let set = join_examples(&corpus.questions, &corpus.annotations, &captions, InputMode::Caption, Split::Train).unwrap();
    let vocab = build_answer_vocab(&corpus.annotations, VocabCutoff::MinCount(1)).unwrap();
    (set, vocab)
}
