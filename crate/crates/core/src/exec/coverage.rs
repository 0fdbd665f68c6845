//! Pluggable coverage oracles: an edge-hit shared map consumed from an
//! instrumented target, and a behavioral proxy over
//! (statement-kind, error-code) pairs for stock binaries.

use std::collections::HashSet;

use crate::case::StatementKind;

/// Map size of the standard edge-coverage shared map.
pub const DEFAULT_MAP_SIZE: usize = 65_536;

/// Hit-count bucketization: {1, 2, 3, 4-7, 8-15, 16-31, 32-127, 128+} each
/// map to one class bit, so a position contributes again when its hit count
/// moves into a new bucket.
pub fn bucketize(count: u8) -> u8 {
    match count {
        0 => 0,
        1 => 1,
        2 => 2,
        3 => 4,
        4..=7 => 8,
        8..=15 => 16,
        16..=31 => 32,
        32..=127 => 64,
        128..=u8::MAX => 128,
    }
}

/// One case's worth of observable coverage state: the shared map (when the
/// target exposes one) and the behavioral pairs of the executed prefix.
pub struct CoverageSample<'a> {
    pub map: Option<&'a [u8]>,
    pub pairs: &'a [(StatementKind, i64)],
}

#[derive(Debug, Clone)]
pub struct SharedMapOracle {
    map_size: usize,
    /// Accumulated class bits per position; 0 = never hit.
    virgin: Vec<u8>,
    covered_positions: usize,
    fallback: BehavioralOracle,
    /// Cases where the map was unavailable and the behavioral proxy stood in.
    pub fallbacks_used: u64,
}

#[derive(Debug, Clone, Default)]
pub struct BehavioralOracle {
    seen: HashSet<(StatementKind, i64)>,
}

impl BehavioralOracle {
    fn delta(&mut self, pairs: &[(StatementKind, i64)]) -> u64 {
        let mut new_entries = 0;
        for pair in pairs {
            if self.seen.insert(*pair) {
                new_entries += 1;
            }
        }
        new_entries
    }
}

#[derive(Debug, Clone)]
pub enum CoverageOracle {
    SharedMap(SharedMapOracle),
    Behavioral(BehavioralOracle),
}

impl CoverageOracle {
    pub fn shared_map(map_size: usize) -> Self {
        CoverageOracle::SharedMap(SharedMapOracle {
            map_size,
            virgin: vec![0u8; map_size],
            covered_positions: 0,
            fallback: BehavioralOracle::default(),
            fallbacks_used: 0,
        })
    }

    pub fn behavioral() -> Self {
        CoverageOracle::Behavioral(BehavioralOracle::default())
    }

    /// New-entry count for this sample, folded into persistent state.
    /// A SharedMap oracle without a readable map falls back to the
    /// behavioral proxy for the case and counts the fallback.
    pub fn delta(&mut self, sample: &CoverageSample<'_>) -> u64 {
        match self {
            CoverageOracle::Behavioral(b) => b.delta(sample.pairs),
            CoverageOracle::SharedMap(s) => match sample.map {
                Some(map) if map.len() == s.map_size => {
                    let mut new_positions = 0;
                    for (virgin, hit) in s.virgin.iter_mut().zip(map.iter()) {
                        let class = bucketize(*hit);
                        if class & !*virgin != 0 {
                            if *virgin == 0 {
                                s.covered_positions += 1;
                            }
                            *virgin |= class;
                            new_positions += 1;
                        }
                    }
                    new_positions
                }
                _ => {
                    s.fallbacks_used += 1;
                    s.fallback.delta(sample.pairs)
                }
            },
        }
    }

    /// Cumulative covered entries; non-decreasing across a session.
    pub fn covered_entries(&self) -> usize {
        match self {
            CoverageOracle::Behavioral(b) => b.seen.len(),
            CoverageOracle::SharedMap(s) => s.covered_positions + s.fallback.seen.len(),
        }
    }
}
