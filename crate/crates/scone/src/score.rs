//! Dialogue accuracy: an episode is correct iff executing the predicted
//! actions from `W_0` ends in the gold final state.

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::episode::Episode;
use crate::error::{Error, Result};
use crate::world::{execute, ActionCode};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SconeScore {
    pub episodes: usize,
    pub instructions: usize,
    pub dialogue_accuracy: f64,
    /// Fraction of instructions whose predicted action, applied to the gold
    /// previous state, yields the gold next state.
    pub instruction_accuracy: f64,
}

impl SconeScore {
    pub fn to_text(&self) -> String {
        format!(
            "episodes={}\ninstructions={}\ndialogue_accuracy={:.6}\ninstruction_accuracy={:.6}\n",
            self.episodes, self.instructions, self.dialogue_accuracy, self.instruction_accuracy
        )
    }
}

/// Whether `predicted` takes `ep` from `W_0` to its gold final state. A
/// rejected action makes the episode wrong.
pub fn episode_correct(ep: &Episode, predicted: &[ActionCode]) -> bool {
    let mut state = ep.initial.clone();
    for a in predicted {
        match execute(&state, a) {
            Ok(s) => state = s,
            Err(_) => return false,
        }
    }
    &state == ep.final_state()
}

pub fn dialogue_accuracy(predictions: &[Vec<ActionCode>], episodes: &[Episode]) -> Result<f64> {
    score(predictions, episodes).map(|s| s.dialogue_accuracy)
}

pub fn score(predictions: &[Vec<ActionCode>], episodes: &[Episode]) -> Result<SconeScore> {
    if predictions.len() != episodes.len() {
        return Err(Error::Usage(format!("{} prediction sequences for {} episodes", predictions.len(), episodes.len())));
    }
    if episodes.is_empty() {
        return Err(Error::Usage("no episodes to score".into()));
    }
    let (mut dialogues, mut steps, mut total) = (0usize, 0usize, 0usize);
    for (ep, pred) in episodes.iter().zip(predictions) {
        dialogues += episode_correct(ep, pred) as usize;
        for k in 0..ep.turns() {
            total += 1;
            steps += pred.get(k).is_some_and(|a| execute(ep.state(k), a).is_ok_and(|s| &s == ep.state(k + 1))) as usize;
        }
    }
    Ok(SconeScore {
        episodes: episodes.len(),
        instructions: total,
        dialogue_accuracy: dialogues as f64 / episodes.len() as f64,
        instruction_accuracy: steps as f64 / total as f64,
    })
}

/// One line of a predictions file: the action tuples for one episode.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub actions: Vec<Vec<u32>>,
}

/// Tuples are only checked for arity here; ops and positions that make no
/// sense are scored as infeasible rather than rejected.
pub fn parse_predictions(reader: impl BufRead) -> Result<Vec<Vec<ActionCode>>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let i = out.len();
        let rec: PredictionRecord = serde_json::from_str(&line).map_err(|e| Error::Data(format!("prediction {i}: {e}")))?;
        let actions = rec
            .actions
            .iter()
            .enumerate()
            .map(|(k, a)| ActionCode::from_slice(a).map_err(|e| e.in_data(format!("prediction {i}: actions[{k}]"))))
            .collect::<Result<Vec<_>>>()?;
        out.push(actions);
    }
    Ok(out)
}
