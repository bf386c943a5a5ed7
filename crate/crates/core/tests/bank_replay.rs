//! The bank must always hold the last `N` accepted records of the enqueue
//! stream, checked against a plain list that is never truncated.

use fsood_core::membank::{EnqueuePolicy, MemoryBank, ProposalRecord};
use fsood_core::rng;

fn record(g: &mut rng::Generator, serial: u64) -> ProposalRecord {
    // Serial number in the label makes every record distinguishable.
    let c = rng::unit(g);
    ProposalRecord::new(vec![1.0, 0.0, 0.0], serial as u32, c, 0)
}

fn replay(seed: u64, policy: EnqueuePolicy, ops: usize) {
    let mut g = rng::generator(seed, 5);
    let capacity = 1 + rng::below(&mut g, 64) as usize;
    let mut bank = MemoryBank::with_policy(capacity, policy).unwrap();
    let mut stream: Vec<(u32, u64)> = Vec::new();
    let mut step = 0u64;
    let mut serial = 0u64;
    for _ in 0..ops {
        step += rng::below(&mut g, 3);
        let k = rng::below(&mut g, 13) as usize;
        let batch: Vec<ProposalRecord> = (0..k)
            .map(|_| {
                serial += 1;
                record(&mut g, serial)
            })
            .collect();
        for r in &batch {
            let accepted = match policy {
                EnqueuePolicy::All => true,
                EnqueuePolicy::AboveThreshold(t) => r.consistency > t,
            };
            if accepted {
                stream.push((r.label, step));
            }
        }
        let added = bank.enqueue_batch(batch, step).unwrap();
        let tail_start = stream.len().saturating_sub(capacity);
        let expected = &stream[tail_start..];
        let actual: Vec<(u32, u64)> = bank.records().map(|r| (r.label, r.step)).collect();
        assert_eq!(actual, expected);
        assert!(added <= k);

        let current = step + rng::below(&mut g, 50);
        let offsets = bank.backward_offsets(current).unwrap();
        for (o, (_, s)) in offsets.iter().zip(expected) {
            assert_eq!(*o, current - s);
        }
    }
}

#[test]
fn fifo_matches_replay_for_ten_thousand_operations() {
    replay(1, EnqueuePolicy::All, 10_000);
}

#[test]
fn threshold_policy_matches_replay() {
    replay(2, EnqueuePolicy::AboveThreshold(0.5), 10_000);
}

#[test]
fn many_small_banks() {
    for seed in 10..40 {
        replay(seed, EnqueuePolicy::All, 300);
    }
}

#[test]
fn rejected_batch_leaves_bank_untouched() {
    let mut bank = MemoryBank::new(4).unwrap();
    bank.enqueue_batch([ProposalRecord::new(vec![1.0, 0.0], 0, 0.9, 0)], 3).unwrap();
    let before = bank.clone();
    let bad = [
        ProposalRecord::new(vec![0.0, 1.0], 1, 0.9, 0),
        ProposalRecord::new(vec![0.5, 0.5], 1, 0.9, 0),
    ];
    assert!(bank.enqueue_batch(bad, 4).is_err());
    assert_eq!(bank, before);
    assert!(bank.enqueue_batch([ProposalRecord::new(vec![0.0, 1.0], 1, 0.9, 0)], 2).is_err());
    assert_eq!(bank, before);
}
