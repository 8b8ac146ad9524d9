use crate::error::{Error, Result};

/// One dialogue over a fixed context, as token ids.
#[derive(Clone, Debug, PartialEq)]
pub struct DialogueBatch {
    pub context: Vec<usize>,
    /// One question per turn.
    pub questions: Vec<Vec<usize>>,
    /// Inclusive, 0-based gold `(start, end)` per turn.
    pub spans: Vec<(usize, usize)>,
    pub human_f1: Option<Vec<f64>>,
    pub history_dependent: Option<Vec<bool>>,
}

impl DialogueBatch {
    pub fn new(context: Vec<usize>, questions: Vec<Vec<usize>>, spans: Vec<(usize, usize)>) -> Result<Self> {
        let b = DialogueBatch { context, questions, spans, human_f1: None, history_dependent: None };
        b.validate()?;
        Ok(b)
    }

    pub fn turns(&self) -> usize {
        self.questions.len()
    }

    pub fn context_len(&self) -> usize {
        self.context.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.context.len();
        if m == 0 {
            return Err(Error::Data("empty context".into()));
        }
        if self.questions.is_empty() {
            return Err(Error::Data("dialogue has no turns".into()));
        }
        if self.spans.len() != self.questions.len() {
            return Err(Error::Data(format!("{} spans for {} questions", self.spans.len(), self.questions.len())));
        }
        for (k, (q, &(s, e))) in self.questions.iter().zip(&self.spans).enumerate() {
            if q.is_empty() {
                return Err(Error::Data(format!("turn {k}: empty question")));
            }
            if s > e || e >= m {
                return Err(Error::Data(format!("turn {k}: span ({s}, {e}) outside a context of {m} tokens")));
            }
        }
        for (name, len) in [
            ("human_f1", self.human_f1.as_ref().map(Vec::len)),
            ("history_dependent", self.history_dependent.as_ref().map(Vec::len)),
        ] {
            if let Some(len) = len {
                if len != self.turns() {
                    return Err(Error::Data(format!("{name} has {len} entries for {} turns", self.turns())));
                }
            }
        }
        Ok(())
    }

    /// Largest token id used anywhere in the dialogue.
    pub fn max_id(&self) -> usize {
        self.context.iter().chain(self.questions.iter().flatten()).copied().max().unwrap_or(0)
    }

    /// The first `turns` turns.
    pub fn prefix(&self, turns: usize) -> DialogueBatch {
        DialogueBatch {
            context: self.context.clone(),
            questions: self.questions[..turns].to_vec(),
            spans: self.spans[..turns].to_vec(),
            human_f1: self.human_f1.as_ref().map(|v| v[..turns].to_vec()),
            history_dependent: self.history_dependent.as_ref().map(|v| v[..turns].to_vec()),
        }
    }
}
