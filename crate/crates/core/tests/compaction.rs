mod common;

use colleagues::compactor::{render_context, SummaryCache};
use colleagues::{Catalog, CompactionPolicy, Compactor};
use common::criteria::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn invariants_hold_over_random_transcripts() {
    compression_invariants(1000).unwrap();
}

#[test]
fn invariants_hold_for_tighter_policies() {
    let catalog = Catalog::builtin();
    let gateway = hashing_summarizer();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (threshold, window, cap) in [(4, 1, 5), (10, 3, 20), (30, 12, 50)] {
        let policy = CompactionPolicy { threshold, recent_window: window, summary_token_cap: cap };
        let compactor = Compactor::new(policy, &gateway, &catalog);
        for _ in 0..100 {
            let len = rng.gen_range(1..=60);
            compaction_invariants(&compactor, &random_transcript(&mut rng, len)).unwrap();
        }
    }
}

#[test]
fn rendered_context_ends_with_recent_messages_in_order() {
    let catalog = Catalog::builtin();
    let gateway = hashing_summarizer();
    let compactor = Compactor::new(CompactionPolicy::default(), &gateway, &catalog);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let len = rng.gen_range(1..=60);
        let t = random_transcript(&mut rng, len);
        let ctx = render_context(&catalog, &compactor.compact(&t));
        let mut from = 0;
        for m in &t[len.saturating_sub(8)..] {
            let at = ctx[from..].find(&m.text).expect("recent text present") + from;
            from = at + m.text.len();
        }
    }
}

#[test]
fn incremental_compaction_equals_from_scratch() {
    let catalog = Catalog::builtin();
    let gateway = hashing_summarizer();
    let compactor = Compactor::new(CompactionPolicy::default(), &gateway, &catalog);
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for _ in 0..50 {
        let t = random_transcript(&mut rng, 45);
        let mut cache = SummaryCache::new();
        for n in 1..=t.len() {
            let inc = compactor.compact_cached(&t[..n], &cache);
            assert_eq!(inc.history, compactor.compact(&t[..n]), "length {n}");
            for s in inc.fresh {
                cache.insert(s.key.clone(), s);
            }
        }
    }
}
