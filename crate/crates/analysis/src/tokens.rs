use botboard_core::model::RunRecord;
use serde::Serialize;

use crate::AnalysisError;

/// Per-run token means for one configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TokenMeans {
    pub n: usize,
    pub input: f64,
    pub cache_create: f64,
    pub cache_read: f64,
    pub output: f64,
    pub total: f64,
}

impl TokenMeans {
    pub fn parts_sum(&self) -> f64 {
        self.input + self.cache_create + self.cache_read + self.output
    }
}

pub fn token_rollup<'a>(records: impl IntoIterator<Item = &'a RunRecord>) -> Result<TokenMeans, AnalysisError> {
    let mut n = 0usize;
    let mut sums = [0u128; 5];
    for r in records {
        n += 1;
        let t = &r.tokens;
        for (slot, v) in sums
            .iter_mut()
            .zip([t.input, t.cache_create, t.cache_read, t.output, t.total])
        {
            *slot += u128::from(v);
        }
    }
    if n == 0 {
        return Err(AnalysisError::EmptyInput);
    }
    let m = |i: usize| sums[i] as f64 / n as f64;
    Ok(TokenMeans {
        n,
        input: m(0),
        cache_create: m(1),
        cache_read: m(2),
        output: m(3),
        total: m(4),
    })
}

#[cfg(test)]
mod tests {
    use botboard_core::model::{TokenCounts, Variant};

    use super::*;
    use crate::testutil::record;

    fn with_tokens(t: TokenCounts) -> RunRecord {
        let mut r = record("p", "m", Variant::Baseline, 0.1);
        r.tokens = t;
        r
    }

    #[test]
    fn single_record_is_its_own_mean() {
        let r = with_tokens(TokenCounts::new(77, 5_552, 13_812, 369_291));
        let m = token_rollup([&r]).unwrap();
        assert_eq!(
            (m.input, m.output, m.cache_create, m.cache_read, m.total),
            (77.0, 5552.0, 13812.0, 369291.0, 388732.0)
        );
    }

    #[test]
    fn two_records_average() {
        let a = with_tokens(TokenCounts::new(10, 20, 30, 40));
        let b = with_tokens(TokenCounts::new(30, 60, 90, 120));
        let m = token_rollup([&a, &b]).unwrap();
        assert_eq!(m.total, 200.0);
        assert_eq!(m.parts_sum(), m.total);
    }

    #[test]
    fn empty_rejected() {
        assert_eq!(token_rollup(std::iter::empty()), Err(AnalysisError::EmptyInput));
    }
}
