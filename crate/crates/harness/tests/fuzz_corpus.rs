//! Replays every checked-in fuzz seed through its target's invariants.

#[path = "../../../fuzz/src/checks.rs"]
mod checks;

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn every_target_has_seeds_and_they_pass() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus");
    for (target, check) in checks::TARGETS {
        let dir = root.join(target);
        let mut seeds: Vec<_> = std::fs::read_dir(&dir)
            .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
            .map(|e| e.unwrap().path())
            .collect();
        seeds.sort();
        assert!(!seeds.is_empty(), "no seeds for {target}");
        for seed in seeds {
            let data = std::fs::read(&seed).unwrap();
            check(&data);
            // Every prefix as well: truncation is the commonest malformed input.
            for end in 0..data.len() {
                check(&data[..end]);
            }
            mutate(&data, *check);
        }
    }
}

/// Byte flips, inserts and deletes seeded per input, so failures replay.
fn mutate(seed: &[u8], check: fn(&[u8])) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.len() as u64);
    for _ in 0..500 {
        let mut data = seed.to_vec();
        for _ in 0..rng.gen_range(1..=4) {
            let pos = rng.gen_range(0..=data.len());
            match rng.gen_range(0..3) {
                0 if pos < data.len() => data[pos] ^= 1 << rng.gen_range(0..8),
                1 => data.insert(pos, rng.gen()),
                _ if pos < data.len() => {
                    data.remove(pos);
                }
                _ => {}
            }
        }
        check(&data);
    }
}
