//! Model clients selectable from configuration.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use itr_core::assembler::AssembledPrompt;
use itr_core::gate::{FixedModel, ModelClient, ModelError, ModelReply};

use crate::config::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    /// Calls the first exposed tool with a fixed confidence.
    Mock { confidence: f64 },
    /// POSTs each prompt to `url` and reads back a [`ModelReply`].
    Callback {
        url: String,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
    },
}

fn default_timeout_ms() -> u64 {
    30_000
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::Mock { confidence: 0.9 }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        match self {
            ModelConfig::Mock { confidence } if !(0.0..=1.0).contains(confidence) => {
                Err(CliError::Config(format!("mock confidence {confidence} is outside [0, 1]")))
            }
            ModelConfig::Callback { url, .. } if !(url.starts_with("http://") || url.starts_with("https://")) => {
                Err(CliError::Config(format!("callback url {url:?} is not http(s)")))
            }
            _ => Ok(()),
        }
    }

    pub fn client(&self) -> Box<dyn ModelClient + Send> {
        match self {
            ModelConfig::Mock { confidence } => Box::new(FixedModel {
                confidence: *confidence,
            }),
            ModelConfig::Callback { url, timeout_ms } => Box::new(CallbackModel::new(url, *timeout_ms)),
        }
    }
}

/// Request body sent to the callback.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CallbackRequest {
    pub query: String,
    pub prompt: String,
    pub exposed_tools: Vec<String>,
    pub total_tokens: u64,
}

pub struct CallbackModel {
    url: String,
    agent: ureq::Agent,
}

impl CallbackModel {
    pub fn new(url: &str, timeout_ms: u64) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(timeout_ms)))
            .build()
            .into();
        CallbackModel {
            url: url.to_string(),
            agent,
        }
    }
}

impl ModelClient for CallbackModel {
    fn call(&mut self, prompt: &AssembledPrompt, exposed: &[String], query: &str) -> Result<ModelReply, ModelError> {
        let body = CallbackRequest {
            query: query.to_string(),
            prompt: prompt.render(),
            exposed_tools: exposed.to_vec(),
            total_tokens: prompt.total_tokens,
        };
        let mut response = self
            .agent
            .post(&self.url)
            .send_json(&body)
            .map_err(|e| ModelError(format!("{}: {e}", self.url)))?;
        let reply: ModelReply = response
            .body_mut()
            .read_json()
            .map_err(|e| ModelError(format!("bad reply from {}: {e}", self.url)))?;
        if !(0.0..=1.0).contains(&reply.confidence) {
            return Err(ModelError(format!("confidence {} outside [0, 1]", reply.confidence)));
        }
        Ok(reply)
    }
}
