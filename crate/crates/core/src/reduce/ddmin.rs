//! Delta debugging over statement sequences: subset/complement reduction to
//! a 1-minimal failure-inducing subsequence.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DdminError {
    #[error("oracle is flaky: the full input no longer satisfies the predicate")]
    OracleFlaky,
}

/// Classic ddmin. Returns the minimal subsequence (original order preserved)
/// plus the number of oracle calls spent. The oracle must be deterministic;
/// a failing recheck of the full input aborts with [`DdminError::OracleFlaky`].
pub fn ddmin_statements<T, F>(seq: &[T], oracle: &mut F) -> Result<(Vec<T>, usize), DdminError>
where
    T: Clone,
    F: FnMut(&[T]) -> bool,
{
    let mut calls = 0usize;
    let mut check = |candidate: &[T], calls: &mut usize| {
        *calls += 1;
        oracle(candidate)
    };
    if !check(seq, &mut calls) {
        return Err(DdminError::OracleFlaky);
    }
    let mut current: Vec<T> = seq.to_vec();
    let mut granularity = 2usize;
    while current.len() >= 2 {
        let chunk_size = current.len().div_ceil(granularity);
        let chunks: Vec<&[T]> = current.chunks(chunk_size).collect();

        // reduce to subset
        let mut reduced = None;
        for chunk in &chunks {
            if check(chunk, &mut calls) {
                reduced = Some(chunk.to_vec());
                break;
            }
        }
        if let Some(subset) = reduced {
            current = subset;
            granularity = 2;
            continue;
        }

        // reduce to complement
        let mut complement_hit = None;
        for skip in 0..chunks.len() {
            let complement: Vec<T> = chunks
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != skip)
                .flat_map(|(_, c)| c.iter().cloned())
                .collect();
            if complement.is_empty() {
                continue;
            }
            if check(&complement, &mut calls) {
                complement_hit = Some(complement);
                break;
            }
        }
        if let Some(complement) = complement_hit {
            current = complement;
            granularity = granularity.saturating_sub(1).max(2);
            continue;
        }

        // refine granularity
        if granularity < current.len() {
            granularity = (granularity * 2).min(current.len());
            continue;
        }
        break;
    }
    Ok((current, calls))
}
