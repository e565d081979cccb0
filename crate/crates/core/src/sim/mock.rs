//! A model stand-in whose tool choice follows the interference hazard.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::assembler::AssembledPrompt;
use crate::costmodel::p_correct_mono;
use crate::gate::{ModelClient, ModelError, ModelReply};

/// Picks the gold tool with probability `alpha / (alpha + beta·(m−1))` when
/// it is among the `m` exposed tools, otherwise a uniform distractor.
/// Confidence is uniform in `[tau, 1]` when gold is exposed and in
/// `[0, tau)` when it is not.
pub struct MockModel<'a> {
    pub gold: String,
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
    pub rng: &'a mut ChaCha8Rng,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MockChoice {
    pub tool: Option<String>,
    pub confidence: f64,
}

pub fn mock_model_step(
    exposed: &[String],
    gold: &str,
    alpha: f64,
    beta: f64,
    tau: f64,
    rng: &mut ChaCha8Rng,
) -> MockChoice {
    if exposed.is_empty() {
        return MockChoice {
            tool: None,
            confidence: 0.0,
        };
    }
    let distractors: Vec<&String> = exposed.iter().filter(|t| *t != gold).collect();
    if distractors.len() < exposed.len() {
        let p = p_correct_mono(exposed.len() as u64, alpha, beta);
        let tool = if distractors.is_empty() || rng.random_bool(p) {
            gold.to_string()
        } else {
            (*distractors.choose(rng).expect("non-empty")).clone()
        };
        MockChoice {
            tool: Some(tool),
            confidence: rng.random_range(tau..=1.0),
        }
    } else {
        let tool = (*distractors.choose(rng).expect("non-empty")).clone();
        let confidence = if tau > 0.0 { rng.random_range(0.0..tau) } else { 0.0 };
        MockChoice {
            tool: Some(tool),
            confidence,
        }
    }
}

impl ModelClient for MockModel<'_> {
    fn call(&mut self, _prompt: &AssembledPrompt, exposed: &[String], _query: &str) -> Result<ModelReply, ModelError> {
        let c = mock_model_step(exposed, &self.gold, self.alpha, self.beta, self.tau, self.rng);
        Ok(ModelReply {
            output: String::new(),
            tool_call: c.tool,
            confidence: c.confidence,
        })
    }
}
