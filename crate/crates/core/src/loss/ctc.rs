//! Connectionist temporal classification with blank id [`BLANK`].

use crate::autodiff::kernels::log_add;

pub const BLANK: usize = 0;

/// Negative log-likelihood of one target and its gradient with respect to
/// the (unnormalized) log-probability matrix.
#[derive(Clone, Debug)]
pub struct CtcItem {
    pub loss: f64,
    /// `frames x vocab`, row-major.
    pub grad: Vec<f64>,
}

/// `frames >= len(target) + number of adjacent repeats`.
pub fn is_feasible(frames: usize, target: &[usize]) -> bool {
    let repeats = target.windows(2).filter(|w| w[0] == w[1]).count();
    frames >= target.len() + repeats
}

/// Forward-backward over the blank-interleaved label sequence in log space.
///
/// `log_probs` holds `frames` rows of `vocab` entries. Returns `None` when no
/// alignment exists.
pub fn ctc_item(log_probs: &[f64], frames: usize, vocab: usize, target: &[usize]) -> Option<CtcItem> {
    assert_eq!(log_probs.len(), frames * vocab);
    if frames == 0 || !is_feasible(frames, target) {
        return None;
    }
    let mut ext = Vec::with_capacity(2 * target.len() + 1);
    ext.push(BLANK);
    for &k in target {
        ext.push(k);
        ext.push(BLANK);
    }
    let s_len = ext.len();
    let lp = |t: usize, s: usize| log_probs[t * vocab + ext[s]];
    // A label may be reached by skipping the preceding blank unless it
    // repeats the label before that blank.
    let can_skip = |s: usize| s >= 2 && ext[s] != BLANK && ext[s] != ext[s - 2];

    let ninf = f64::NEG_INFINITY;
    let mut alpha = vec![ninf; frames * s_len];
    alpha[0] = lp(0, 0);
    if s_len > 1 {
        alpha[1] = lp(0, 1);
    }
    for t in 1..frames {
        let (prev, cur) = alpha.split_at_mut(t * s_len);
        let prev = &prev[(t - 1) * s_len..];
        for s in 0..s_len {
            let mut a = prev[s];
            if s >= 1 {
                a = log_add(a, prev[s - 1]);
            }
            if can_skip(s) {
                a = log_add(a, prev[s - 2]);
            }
            cur[s] = a + lp(t, s);
        }
    }
    let last = (frames - 1) * s_len;
    let log_total = if s_len > 1 {
        log_add(alpha[last + s_len - 1], alpha[last + s_len - 2])
    } else {
        alpha[last]
    };
    if !log_total.is_finite() {
        return None;
    }

    let mut beta = vec![ninf; frames * s_len];
    beta[last + s_len - 1] = lp(frames - 1, s_len - 1);
    if s_len > 1 {
        beta[last + s_len - 2] = lp(frames - 1, s_len - 2);
    }
    for t in (0..frames - 1).rev() {
        let (cur, next) = beta.split_at_mut((t + 1) * s_len);
        let cur = &mut cur[t * s_len..];
        for s in 0..s_len {
            let mut b = next[s];
            if s + 1 < s_len {
                b = log_add(b, next[s + 1]);
            }
            if s + 2 < s_len && can_skip(s + 2) {
                b = log_add(b, next[s + 2]);
            }
            cur[s] = b + lp(t, s);
        }
    }

    // alpha_t(s) + beta_t(s) counts the emission at (t, s) twice.
    let mut grad = vec![0.0; frames * vocab];
    let mut occupancy = vec![ninf; vocab];
    for t in 0..frames {
        occupancy.iter_mut().for_each(|o| *o = ninf);
        for s in 0..s_len {
            let k = ext[s];
            occupancy[k] = log_add(occupancy[k], alpha[t * s_len + s] + beta[t * s_len + s]);
        }
        for k in 0..vocab {
            if occupancy[k] > ninf {
                grad[t * vocab + k] = -(occupancy[k] - log_probs[t * vocab + k] - log_total).exp();
            }
        }
    }
    Some(CtcItem {
        loss: -log_total,
        grad,
    })
}

/// Best-path decoding: per-frame argmax, merge repeats, drop blanks.
///
/// `log_probs` is `[batch, frames, vocab]` row-major; only the first
/// `frame_lengths[b]` frames of item `b` are read.
pub fn ctc_greedy_decode(log_probs: &[f64], shape: [usize; 3], frame_lengths: &[usize]) -> Vec<Vec<usize>> {
    let [batch, t_max, vocab] = shape;
    assert_eq!(log_probs.len(), batch * t_max * vocab);
    (0..batch)
        .map(|b| {
            let mut out = Vec::new();
            let mut prev = BLANK;
            for t in 0..frame_lengths[b].min(t_max) {
                let row = &log_probs[(b * t_max + t) * vocab..(b * t_max + t + 1) * vocab];
                let best = row
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc })
                    .0;
                if best != BLANK && best != prev {
                    out.push(best);
                }
                prev = best;
            }
            out
        })
        .collect()
}

/// Decodes a sequence of frame labels directly.
pub fn collapse(frame_labels: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = BLANK;
    for &k in frame_labels {
        if k != BLANK && k != prev {
            out.push(k);
        }
        prev = k;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::kernels::log_sum_exp;

    fn brute_force(log_probs: &[f64], frames: usize, vocab: usize, target: &[usize]) -> f64 {
        let mut terms = Vec::new();
        let mut path = vec![0usize; frames];
        loop {
            if collapse(&path) == target {
                terms.push((0..frames).map(|t| log_probs[t * vocab + path[t]]).sum::<f64>());
            }
            let mut i = 0;
            loop {
                if i == frames {
                    return -log_sum_exp(&terms);
                }
                path[i] += 1;
                if path[i] < vocab {
                    break;
                }
                path[i] = 0;
                i += 1;
            }
        }
    }

    #[test]
    fn single_frame_single_label() {
        let lp = [0.5f64.ln(), 0.5f64.ln()];
        let item = ctc_item(&lp, 1, 2, &[1]).unwrap();
        assert!((item.loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn two_frames_uniform_matches_three_paths() {
        let lp = vec![0.5f64.ln(); 4];
        let item = ctc_item(&lp, 2, 2, &[1]).unwrap();
        assert!((item.loss + 0.75f64.ln()).abs() < 1e-12);
        assert!((brute_force(&lp, 2, 2, &[1]) - item.loss).abs() < 1e-12);
    }

    #[test]
    fn empty_target_is_all_blank_path() {
        let lp = [0.2f64.ln(), 0.8f64.ln(), 0.6f64.ln(), 0.4f64.ln()];
        let item = ctc_item(&lp, 2, 2, &[]).unwrap();
        assert!((item.loss + (0.2f64 * 0.6).ln()).abs() < 1e-12);
    }

    #[test]
    fn infeasible_repeat_needs_separator() {
        assert!(!is_feasible(2, &[1, 1]));
        assert!(is_feasible(3, &[1, 1]));
        let lp = vec![0.5f64.ln(); 4];
        assert!(ctc_item(&lp, 2, 2, &[1, 1]).is_none());
    }

    #[test]
    fn greedy_examples() {
        assert_eq!(collapse(&[1, 1, 0, 2]), vec![1, 2]);
        assert_eq!(collapse(&[0, 0, 0]), Vec::<usize>::new());
        assert_eq!(collapse(&[1, 0, 1]), vec![1, 1]);
        let lp = [
            0.1, 0.9, 0.0, // a
            0.1, 0.9, 0.0, // a
            0.9, 0.1, 0.0, // blank
            0.0, 0.1, 0.9, // b
        ];
        assert_eq!(ctc_greedy_decode(&lp, [1, 4, 3], &[4]), vec![vec![1, 2]]);
        assert_eq!(ctc_greedy_decode(&lp, [1, 4, 3], &[3]), vec![vec![1]]);
    }
}
