use crate::types::DiffusionState;

/// Shortest run a state must persist after smoothing.
pub const MIN_DWELL: usize = 3;

fn runs(states: &[DiffusionState]) -> Vec<(DiffusionState, usize)> {
    let mut out: Vec<(DiffusionState, usize)> = Vec::new();
    for &s in states {
        match out.last_mut() {
            Some((v, n)) if *v == s => *n += 1,
            _ => out.push((s, 1)),
        }
    }
    out
}

/// Absorbs runs shorter than [`MIN_DWELL`] into a neighboring run.
///
/// The shortest offending run is handled first (leftmost on ties) and
/// takes the label of its longer neighbor (the earlier one on ties). This
/// repeats until every run is long enough or a single run remains.
pub fn smooth_states(states: &[DiffusionState]) -> Vec<DiffusionState> {
    let mut r = runs(states);
    while r.len() > 1 {
        let Some((i, _)) = r
            .iter()
            .enumerate()
            .filter(|(_, run)| run.1 < MIN_DWELL)
            .min_by_key(|(i, run)| (run.1, *i))
        else {
            break;
        };
        let target = match (i.checked_sub(1), r.get(i + 1)) {
            (Some(p), Some(next)) => {
                if next.1 > r[p].1 {
                    i + 1
                } else {
                    p
                }
            }
            (Some(p), None) => p,
            (None, _) => i + 1,
        };
        r[i].0 = r[target].0;
        let flat: Vec<DiffusionState> = r
            .iter()
            .flat_map(|&(s, n)| std::iter::repeat_n(s, n))
            .collect();
        r = runs(&flat);
    }
    r.iter()
        .flat_map(|&(s, n)| std::iter::repeat_n(s, n))
        .collect()
}
