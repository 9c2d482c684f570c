use std::collections::HashMap;

use rand::seq::IndexedRandom;
use rand::Rng;

/// Up to `topk` distinct clips sharing `action`, drawn uniformly without
/// replacement. `query_id` is never returned. Sampling runs over the
/// id-sorted pool so the result depends only on the rng state.
pub fn oracle_candidates<R: Rng + ?Sized>(
    actions: &HashMap<String, String>,
    query_id: &str,
    action: &str,
    topk: usize,
    rng: &mut R,
) -> Vec<String> {
    let mut pool: Vec<&String> = actions
        .iter()
        .filter(|(id, a)| a.as_str() == action && id.as_str() != query_id)
        .map(|(id, _)| id)
        .collect();
    pool.sort();
    pool.choose_multiple(rng, topk.min(pool.len()))
        .map(|s| (*s).clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn actions() -> HashMap<String, String> {
        [
            ("q", "run"),
            ("a", "run"),
            ("b", "run"),
            ("c", "run"),
            ("d", "jump"),
            ("e", "swim"),
        ]
        .into_iter()
        .map(|(i, a)| (i.to_string(), a.to_string()))
        .collect()
    }

    #[test]
    fn whole_class_when_it_fits() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut got = oracle_candidates(&actions(), "q", "run", 3, &mut rng);
        got.sort();
        assert_eq!(got, ["a", "b", "c"]);
        let got = oracle_candidates(&actions(), "q", "run", 10, &mut rng);
        assert_eq!(got.len(), 3);
    }

    #[test]
    fn singleton_and_absent_classes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(oracle_candidates(&actions(), "e", "swim", 5, &mut rng).is_empty());
        assert!(oracle_candidates(&actions(), "q", "fly", 5, &mut rng).is_empty());
    }

    #[test]
    fn seeded_runs_repeat() {
        let run = |seed| {
            oracle_candidates(
                &actions(),
                "q",
                "run",
                2,
                &mut ChaCha8Rng::seed_from_u64(seed),
            )
        };
        assert_eq!(run(5), run(5));
        assert_eq!(run(5).len(), 2);
    }
}
