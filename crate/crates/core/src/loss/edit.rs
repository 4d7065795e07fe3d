/// Minimum number of substitutions, insertions and deletions turning
/// `reference` into `hypothesis` (Levenshtein distance).
pub fn edit_distance<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=hypothesis.len()).collect();
    let mut cur = vec![0; hypothesis.len() + 1];
    for (i, r) in reference.iter().enumerate() {
        cur[0] = i + 1;
        for (j, h) in hypothesis.iter().enumerate() {
            let sub = prev[j] + usize::from(r != h);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[hypothesis.len()]
}

/// Edit count normalized by reference length.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorRate {
    pub edits: usize,
    pub reference_len: usize,
    /// `edits / max(1, reference_len)`.
    pub rate: f64,
    /// Set when the reference was empty but the hypothesis was not.
    pub empty_reference: bool,
}

impl ErrorRate {
    pub fn from_counts(edits: usize, reference_len: usize) -> Self {
        ErrorRate {
            edits,
            reference_len,
            rate: edits as f64 / reference_len.max(1) as f64,
            empty_reference: reference_len == 0 && edits > 0,
        }
    }

    pub fn compute<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Self {
        Self::from_counts(edit_distance(reference, hypothesis), reference.len())
    }

    /// Pools edits and reference lengths over a corpus.
    pub fn corpus<'a, T: PartialEq + 'a>(
        pairs: impl IntoIterator<Item = (&'a [T], &'a [T])>,
    ) -> Self {
        let (edits, n) = pairs
            .into_iter()
            .fold((0, 0), |(e, n), (r, h)| (e + edit_distance(r, h), n + r.len()));
        Self::from_counts(edits, n)
    }
}
