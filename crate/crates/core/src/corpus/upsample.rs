use super::{CorpusError, LabeledExample};
use crate::util::PortableRng;

/// Identifies the replication procedure; recorded in run manifests.
pub const UPSAMPLE_ALGORITHM: &str = "upsample-v1: chacha8(seed_from_u64) draws with replacement, fisher-yates shuffle";

/// Grows `examples` to exactly `target` items by random replication.
///
/// Every input appears at least once; the `target - len` extra copies are
/// drawn uniformly with replacement and the result is shuffled. Copies keep
/// the original id. The same `(examples, target, seed)` always produces the
/// same sequence.
pub fn upsample(examples: &[LabeledExample], target: usize, seed: u64) -> Result<Vec<LabeledExample>, CorpusError> {
    if examples.is_empty() {
        return Err(CorpusError::EmptyUpsample);
    }
    if target < examples.len() {
        return Err(CorpusError::UpsampleBelowInput {
            target,
            len: examples.len(),
        });
    }
    let mut rng = PortableRng::new(seed);
    let mut out = examples.to_vec();
    out.reserve(target - examples.len());
    for _ in examples.len()..target {
        out.push(examples[rng.below(examples.len())].clone());
    }
    rng.shuffle(&mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{example, Figure, Label, Language};
    use proptest::prelude::*;
    use std::collections::HashMap;

    fn corpus(n: usize) -> Vec<LabeledExample> {
        (0..n)
            .map(|i| {
                example(
                    &format!("e{i}"),
                    &format!("text {i}"),
                    Figure::Hyperbole,
                    Language::En,
                    Label::Literal,
                )
            })
            .collect()
    }

    fn multiset(xs: &[LabeledExample]) -> HashMap<&str, usize> {
        let mut m = HashMap::new();
        for x in xs {
            *m.entry(x.id.as_str()).or_insert(0) += 1;
        }
        m
    }

    #[test]
    fn three_to_seven() {
        let xs = corpus(3);
        let a = upsample(&xs, 7, 42).unwrap();
        assert_eq!(a.len(), 7);
        for x in &xs {
            assert!(a.contains(x));
        }
        assert_eq!(a, upsample(&xs, 7, 42).unwrap());
    }

    #[test]
    fn exact_fit_is_permutation() {
        let xs = corpus(25);
        let out = upsample(&xs, 25, 9).unwrap();
        assert_eq!(multiset(&out), multiset(&xs));
    }

    #[test]
    fn errors() {
        assert!(matches!(upsample(&[], 10, 0), Err(CorpusError::EmptyUpsample)));
        assert!(matches!(
            upsample(&corpus(5), 4, 0),
            Err(CorpusError::UpsampleBelowInput { target: 4, len: 5 })
        ));
    }

    #[test]
    fn ten_thousand() {
        let xs = corpus(3352);
        let out = upsample(&xs, 10_000, 1).unwrap();
        assert_eq!(out.len(), 10_000);
        assert_eq!(multiset(&out).len(), 3352);
    }

    proptest! {
        #[test]
        fn size_coverage_determinism(n in 1usize..40, extra in 0usize..60, seed in any::<u64>()) {
            let xs = corpus(n);
            let a = upsample(&xs, n + extra, seed).unwrap();
            prop_assert_eq!(a.len(), n + extra);
            prop_assert_eq!(multiset(&a).len(), n);
            prop_assert_eq!(a, upsample(&xs, n + extra, seed).unwrap());
        }
    }
}
