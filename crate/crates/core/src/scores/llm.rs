//! Chat-model judge: asks for four 1-5 ratings as a JSON object and maps them
//! onto the unified scale the same way human ratings are mapped.

use super::{normalize_value, Dimension, Judge, JudgeError, JudgeRequest, ScoreVector};
use crate::chat::{ChatBackend, ChatRequest, RetryPolicy};
use serde_json::Value;
use std::collections::BTreeMap;
use std::sync::Arc;

pub fn judge_prompt(request: &JudgeRequest) -> String {
    format!(
        "We ran a deliberation with many participants on the issue: {question}\n\n\
One participant's opinion on this question is: {opinion}\n\n\
Below is a summary of everyone's opinions on the issue:\n{summary}\n\n\
Rate this summary on each of the following 4 criteria using a 1-5 scale:\n\
1. Representativeness: to what extent does the summary reflect this participant's perspective?\n\
2. Informativeness: how much useful information does the summary provide?\n\
3. Neutrality: does the summary present a balanced and unbiased view of the issue?\n\
4. Policy approval: would this participant approve of the summary being used by policymakers to make decisions?\n\n\
Answer with only a JSON object of the form:\n\
{{\"{rep}\": <1-5>, \"{inf}\": <1-5>, \"{neu}\": <1-5>, \"{pol}\": <1-5>}}",
        question = request.question_text.trim(),
        opinion = request.opinion_text.trim(),
        summary = request.summary_text.trim(),
        rep = Dimension::Rep.output_key(),
        inf = Dimension::Inf.output_key(),
        neu = Dimension::Neu.output_key(),
        pol = Dimension::Pol.output_key(),
    )
}

/// Parses the first JSON object in a model reply into a normalized score.
///
/// Each of the four keys must hold a number in `[1,5]`; the raw text is kept
/// in the error when anything is off.
pub fn parse_judge_output(raw: &str) -> Result<ScoreVector, JudgeError> {
    let fail = |reason: String| JudgeError::Unparseable {
        raw: raw.to_string(),
        reason,
    };
    let start = raw.find('{').ok_or_else(|| fail("no JSON object".into()))?;
    let end = raw.rfind('}').filter(|&e| e > start).ok_or_else(|| fail("no JSON object".into()))?;
    let obj: BTreeMap<String, Value> =
        serde_json::from_str(&raw[start..=end]).map_err(|e| fail(e.to_string()))?;
    let mut values = [0.0; 4];
    for d in Dimension::ALL {
        let key = d.output_key();
        let v = match obj.get(key) {
            Some(Value::Number(n)) => n.as_f64(),
            Some(Value::String(s)) => s.trim().parse::<f64>().ok(),
            _ => None,
        }
        .ok_or_else(|| fail(format!("missing numeric `{key}`")))?;
        if !(1.0..=5.0).contains(&v) {
            return Err(fail(format!("`{key}` = {v} outside [1,5]")));
        }
        values[d.index()] = normalize_value(v);
    }
    ScoreVector::from_array(values).map_err(|e| fail(e.to_string()))
}

pub struct LlmJudge {
    model: String,
    backend: Arc<dyn ChatBackend>,
    params: BTreeMap<String, Value>,
    retry: RetryPolicy,
}

impl LlmJudge {
    pub fn new(model: impl Into<String>, backend: Arc<dyn ChatBackend>, retry: RetryPolicy) -> Self {
        Self {
            model: model.into(),
            backend,
            params: BTreeMap::new(),
            retry,
        }
    }

    pub fn with_params(mut self, params: BTreeMap<String, Value>) -> Self {
        self.params = params;
        self
    }
}

impl Judge for LlmJudge {
    fn id(&self) -> String {
        format!("llm:{}", self.model)
    }

    fn score(&self, request: &JudgeRequest) -> Result<ScoreVector, JudgeError> {
        request.validate()?;
        let chat = ChatRequest {
            model: self.model.clone(),
            prompt: judge_prompt(request),
            params: self.params.clone(),
            seed: None,
        };
        let reply = self.retry.run(|_| self.backend.complete(&chat))?;
        parse_judge_output(&reply)
    }
}
