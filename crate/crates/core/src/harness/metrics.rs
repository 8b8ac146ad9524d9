//! Answer-overlap and human-equivalence metrics.

use std::collections::HashMap;

use crate::error::{Error, Result};

const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// Lowercases, strips ASCII punctuation and the articles a/an/the, and
/// splits on whitespace.
pub fn normalize_answer(text: &str) -> Vec<String> {
    let cleaned: String = text.to_lowercase().chars().filter(|c| !c.is_ascii_punctuation()).collect();
    cleaned.split_whitespace().filter(|w| !ARTICLES.contains(w)).map(str::to_string).collect()
}

/// Bag-of-tokens F1 between two token lists after [`normalize_answer`].
/// Both empty gives 1, exactly one empty gives 0.
pub fn token_f1<A: AsRef<str>, B: AsRef<str>>(prediction: &[A], gold: &[B]) -> f64 {
    let join = |t: &[&str]| t.join(" ");
    let p = normalize_answer(&join(&prediction.iter().map(AsRef::as_ref).collect::<Vec<_>>()));
    let g = normalize_answer(&join(&gold.iter().map(AsRef::as_ref).collect::<Vec<_>>()));
    if p.is_empty() || g.is_empty() {
        return if p.is_empty() && g.is_empty() { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &g {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &p {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / p.len() as f64;
    let recall = common as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Human-equivalence rates `(HEQ-Q, HEQ-D)`: the fraction of questions, and
/// of whole dialogues, where the model's F1 is at least the human F1.
/// `dialogue_lengths` partitions the question list in order. Returns `None`
/// when any human reference is missing.
pub fn heq(model_f1: &[f64], human_f1: &[Option<f64>], dialogue_lengths: &[usize]) -> Result<Option<(f64, f64)>> {
    if model_f1.len() != human_f1.len() {
        return Err(Error::Usage(format!("{} model scores for {} human scores", model_f1.len(), human_f1.len())));
    }
    if dialogue_lengths.iter().sum::<usize>() != model_f1.len() || dialogue_lengths.contains(&0) {
        return Err(Error::Usage("dialogue lengths do not partition the questions".into()));
    }
    if model_f1.is_empty() {
        return Ok(None);
    }
    let Some(human) = human_f1.iter().copied().collect::<Option<Vec<f64>>>() else {
        return Ok(None);
    };
    let ok: Vec<bool> = model_f1.iter().zip(&human).map(|(m, h)| m >= h).collect();
    let q = ok.iter().filter(|&&b| b).count() as f64 / ok.len() as f64;
    let mut at = 0;
    let mut dialogues_ok = 0;
    for &len in dialogue_lengths {
        if ok[at..at + len].iter().all(|&b| b) {
            dialogues_ok += 1;
        }
        at += len;
    }
    Ok(Some((q, dialogues_ok as f64 / dialogue_lengths.len() as f64)))
}
