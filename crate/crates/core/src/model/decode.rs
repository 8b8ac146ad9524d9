/// Best span `(s, e)` with `s <= e < s + max_len` under `p_start[s]·p_end[e]`.
/// Ties go to the smallest `s`, then the smallest `e`.
pub fn decode_span(p_start: &[f64], p_end: &[f64], max_len: usize) -> (usize, usize) {
    let max_len = max_len.max(1);
    let m = p_start.len().min(p_end.len());
    let mut best = (0, 0);
    let mut best_score = f64::NEG_INFINITY;
    for s in 0..m {
        for e in s..m.min(s + max_len) {
            let score = p_start[s] * p_end[e];
            if score > best_score {
                best_score = score;
                best = (s, e);
            }
        }
    }
    best
}
