//! Plumbing for answer generators: teacher-forcing pairs and inference.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ExampleSet, QuestionId};
use crate::error::Result;
use crate::harness::predictions::Predictions;
use crate::modeling::adapters::AnswerGenerator;
use crate::modeling::input::{InputStyle, SerializedInput};
use crate::vocab::{sample_target, select_generative_targets};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherForcingPair {
    pub question_id: QuestionId,
    pub input: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpochPairs {
    pub pairs: Vec<TeacherForcingPair>,
    /// Questions with no answer given by two or more annotators.
    pub discarded: Vec<QuestionId>,
}

/// Prompt/target pairs for one epoch. Each target is redrawn per epoch from
/// the answers at least two annotators agree on.
pub fn epoch_pairs(examples: &ExampleSet, epoch: u64, seed: u64) -> Result<EpochPairs> {
    let mut out = EpochPairs::default();
    for ex in &examples.examples {
        let pool = select_generative_targets(&ex.annotation);
        if pool.discarded {
            out.discarded.push(pool.question_id);
            continue;
        }
        out.pairs.push(TeacherForcingPair {
            question_id: pool.question_id,
            input: ex.model_input(InputStyle::PrefixedGenerative).text,
            target: sample_target(&pool, epoch, seed)?.to_string(),
        });
    }
    Ok(out)
}

pub fn generate_answers(generator: &dyn AnswerGenerator, examples: &ExampleSet) -> Result<Predictions> {
    let prompts: Vec<(QuestionId, SerializedInput)> = examples
        .examples
        .iter()
        .map(|e| (e.question_id(), e.model_input(InputStyle::PrefixedGenerative)))
        .collect();
    prompts
        .par_iter()
        .map(|(qid, prompt)| Ok((*qid, generator.generate(prompt)?)))
        .collect()
}
