//! Fixed-capacity FIFO memory bank of proposal records.
//!
//! Each record keeps a unit-norm embedding, its class label, the IoU between
//! the proposal and its matched ground truth, and the training step at which
//! it was enqueued. Eviction is per record, oldest first. Bank contents are
//! constants for the loss: they never receive gradient.

use alloc::collections::VecDeque;
use alloc::vec::Vec;
use core::fmt;

use crate::math;

/// Tolerance on `‖embedding‖₂ = 1`.
pub const UNIT_NORM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub enum BankError {
    ZeroCapacity,
    NotUnitNorm { index: usize, norm: f64 },
    ConsistencyOutOfRange { index: usize, value: f64 },
    DimensionMismatch { expected: usize, found: usize },
    StepRegression { current: u64, requested: u64 },
}

impl fmt::Display for BankError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BankError::ZeroCapacity => f.write_str("memory bank capacity must be positive"),
            BankError::NotUnitNorm { index, norm } => {
                write!(f, "record {index}: embedding norm {norm} is not 1")
            }
            BankError::ConsistencyOutOfRange { index, value } => {
                write!(f, "record {index}: consistency {value} outside [0, 1]")
            }
            BankError::DimensionMismatch { expected, found } => {
                write!(f, "embedding dimension {found}, bank holds dimension {expected}")
            }
            BankError::StepRegression { current, requested } => {
                write!(f, "step {requested} precedes bank step {current}")
            }
        }
    }
}

impl core::error::Error for BankError {}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProposalRecord {
    pub embedding: Vec<f64>,
    pub label: u32,
    pub consistency: f64,
    pub step: u64,
}

impl ProposalRecord {
    pub fn new(embedding: Vec<f64>, label: u32, consistency: f64, step: u64) -> Self {
        Self {
            embedding,
            label,
            consistency,
            step,
        }
    }

    fn validate(&self, index: usize) -> Result<(), BankError> {
        let norm = math::norm(&self.embedding);
        if !((norm - 1.0).abs() <= UNIT_NORM_TOL) {
            return Err(BankError::NotUnitNorm { index, norm });
        }
        if !(0.0..=1.0).contains(&self.consistency) {
            return Err(BankError::ConsistencyOutOfRange {
                index,
                value: self.consistency,
            });
        }
        Ok(())
    }
}

/// Which batch proposals enter the bank.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case", tag = "kind", content = "theta"))]
pub enum EnqueuePolicy {
    #[default]
    All,
    /// Only proposals whose consistency strictly exceeds the threshold.
    AboveThreshold(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBank {
    capacity: usize,
    dim: Option<usize>,
    policy: EnqueuePolicy,
    current_step: u64,
    records: VecDeque<ProposalRecord>,
}

impl MemoryBank {
    pub fn new(capacity: usize) -> Result<Self, BankError> {
        Self::with_policy(capacity, EnqueuePolicy::All)
    }

    pub fn with_policy(capacity: usize, policy: EnqueuePolicy) -> Result<Self, BankError> {
        if capacity == 0 {
            return Err(BankError::ZeroCapacity);
        }
        Ok(Self {
            capacity,
            dim: None,
            policy,
            current_step: 0,
            records: VecDeque::with_capacity(capacity.min(1 << 16)),
        })
    }

    /// Rebuilds a bank from checkpointed parts, re-validating every record.
    pub fn from_parts(
        capacity: usize,
        policy: EnqueuePolicy,
        current_step: u64,
        records: Vec<ProposalRecord>,
    ) -> Result<Self, BankError> {
        let mut bank = Self::with_policy(capacity, policy)?;
        let mut last = 0;
        for (i, r) in records.iter().enumerate() {
            r.validate(i)?;
            bank.check_dim(r.embedding.len())?;
            if r.step < last || r.step > current_step {
                return Err(BankError::StepRegression {
                    current: last.max(current_step),
                    requested: r.step,
                });
            }
            last = r.step;
        }
        bank.current_step = current_step;
        bank.records = records.into();
        while bank.records.len() > capacity {
            bank.records.pop_front();
        }
        Ok(bank)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn policy(&self) -> EnqueuePolicy {
        self.policy
    }

    pub fn current_step(&self) -> u64 {
        self.current_step
    }

    pub fn records(&self) -> impl ExactSizeIterator<Item = &ProposalRecord> + '_ {
        self.records.iter()
    }

    fn check_dim(&mut self, found: usize) -> Result<(), BankError> {
        match self.dim {
            Some(expected) if expected != found => {
                Err(BankError::DimensionMismatch { expected, found })
            }
            _ => {
                self.dim = Some(found);
                Ok(())
            }
        }
    }

    /// Appends a batch stamped with `step`, evicting the oldest records until
    /// the bank fits its capacity. The batch is validated as a whole before
    /// the bank is touched. Returns the number of records actually enqueued.
    pub fn enqueue_batch<I>(&mut self, records: I, step: u64) -> Result<usize, BankError>
    where
        I: IntoIterator<Item = ProposalRecord>,
    {
        if step < self.current_step {
            return Err(BankError::StepRegression {
                current: self.current_step,
                requested: step,
            });
        }
        let batch: Vec<ProposalRecord> = records.into_iter().collect();
        let mut dim = self.dim;
        for (i, r) in batch.iter().enumerate() {
            r.validate(i)?;
            match dim {
                Some(expected) if expected != r.embedding.len() => {
                    return Err(BankError::DimensionMismatch {
                        expected,
                        found: r.embedding.len(),
                    })
                }
                _ => dim = Some(r.embedding.len()),
            }
        }
        self.dim = dim;
        self.current_step = step;
        let mut added = 0;
        for mut r in batch {
            if let EnqueuePolicy::AboveThreshold(theta) = self.policy {
                if r.consistency <= theta {
                    continue;
                }
            }
            r.step = step;
            if self.records.len() == self.capacity {
                self.records.pop_front();
            }
            self.records.push_back(r);
            added += 1;
        }
        Ok(added)
    }

    /// `current_step − record.step` for every record, in bank order.
    pub fn backward_offsets(&self, current_step: u64) -> Result<Vec<u64>, BankError> {
        if current_step < self.current_step {
            return Err(BankError::StepRegression {
                current: self.current_step,
                requested: current_step,
            });
        }
        Ok(self.records.iter().map(|r| current_step - r.step).collect())
    }

    /// Point-in-time copy; later enqueues do not affect it.
    pub fn snapshot(&self) -> BankSnapshot {
        BankSnapshot {
            dim: self.dim,
            records: self.records.iter().cloned().collect(),
        }
    }
}

/// Immutable copy of the bank contents, oldest first.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BankSnapshot {
    dim: Option<usize>,
    records: Vec<ProposalRecord>,
}

impl BankSnapshot {
    pub fn records(&self) -> &[ProposalRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    /// Offsets counted back from `current_step`; records newer than
    /// `current_step` get offset 0.
    pub fn backward_offsets(&self, current_step: u64) -> Vec<u64> {
        self.records
            .iter()
            .map(|r| current_step.saturating_sub(r.step))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn rec(label: u32, step: u64) -> ProposalRecord {
        ProposalRecord::new(vec![1.0, 0.0], label, 0.9, step)
    }

    fn steps(bank: &MemoryBank) -> Vec<u64> {
        bank.records().map(|r| r.step).collect()
    }

    #[test]
    fn fifo_eviction_keeps_newest() {
        let mut bank = MemoryBank::new(3).unwrap();
        for s in 0..4 {
            bank.enqueue_batch([rec(0, 0)], s).unwrap();
        }
        assert_eq!(steps(&bank), [1, 2, 3]);
    }

    #[test]
    fn batch_into_empty_bank() {
        let mut bank = MemoryBank::new(10).unwrap();
        assert_eq!(bank.enqueue_batch([rec(0, 0), rec(1, 0)], 0).unwrap(), 2);
        assert_eq!(bank.len(), 2);
    }

    #[test]
    fn full_size_bank_overflow_boundary() {
        let mut bank = MemoryBank::new(8192).unwrap();
        for s in 0..700u64 {
            bank.enqueue_batch((0..12).map(|_| rec(0, 0)), s).unwrap();
        }
        // 8400 records in, 208 evicted: batches 0..17 and the first 4 of batch 17.
        assert_eq!(bank.len(), 8192);
        assert_eq!(bank.records().next().unwrap().step, 17);
        assert_eq!(bank.records().filter(|r| r.step == 17).count(), 8);
    }

    #[test]
    fn offsets() {
        let mut bank = MemoryBank::new(8).unwrap();
        bank.enqueue_batch([rec(0, 0)], 10).unwrap();
        assert_eq!(bank.backward_offsets(10).unwrap(), [0]);

        let mut bank = MemoryBank::new(8).unwrap();
        bank.enqueue_batch([rec(0, 0)], 5).unwrap();
        assert_eq!(bank.backward_offsets(10).unwrap(), [5]);

        let mut bank = MemoryBank::new(8).unwrap();
        for s in [3, 7, 9] {
            bank.enqueue_batch([rec(0, 0)], s).unwrap();
        }
        assert_eq!(bank.backward_offsets(9).unwrap(), [6, 2, 0]);
        assert!(bank.backward_offsets(8).is_err());
    }

    #[test]
    fn snapshot_is_detached() {
        let mut bank = MemoryBank::new(8).unwrap();
        assert!(bank.snapshot().is_empty());
        for s in 0..5 {
            bank.enqueue_batch([rec(s as u32, 0)], s).unwrap();
        }
        let snap = bank.snapshot();
        bank.enqueue_batch([rec(9, 0)], 5).unwrap();
        assert_eq!(snap.len(), 5);
        let labels: Vec<u32> = snap.records().iter().map(|r| r.label).collect();
        assert_eq!(labels, [0, 1, 2, 3, 4]);
    }

    #[test]
    fn rejects_bad_records_without_mutating() {
        let mut bank = MemoryBank::new(4).unwrap();
        bank.enqueue_batch([rec(0, 0)], 2).unwrap();
        let before = bank.clone();
        let bad = ProposalRecord::new(vec![1.0, 1.0], 0, 0.5, 0);
        assert!(matches!(
            bank.enqueue_batch([rec(0, 0), bad], 3),
            Err(BankError::NotUnitNorm { index: 1, .. })
        ));
        assert!(matches!(
            bank.enqueue_batch([rec(0, 0)], 1),
            Err(BankError::StepRegression { current: 2, requested: 1 })
        ));
        let wide = ProposalRecord::new(vec![1.0, 0.0, 0.0], 0, 0.5, 0);
        assert!(matches!(
            bank.enqueue_batch([wide], 3),
            Err(BankError::DimensionMismatch { expected: 2, found: 3 })
        ));
        let bad_c = ProposalRecord::new(vec![0.0, 1.0], 0, 1.5, 0);
        assert!(bank.enqueue_batch([bad_c], 3).is_err());
        assert_eq!(bank, before);
        assert_eq!(MemoryBank::new(0), Err(BankError::ZeroCapacity));
    }

    #[test]
    fn threshold_policy_filters_low_consistency() {
        let mut bank = MemoryBank::with_policy(8, EnqueuePolicy::AboveThreshold(0.5)).unwrap();
        let mut low = rec(0, 0);
        low.consistency = 0.5;
        assert_eq!(bank.enqueue_batch([low, rec(1, 0)], 0).unwrap(), 1);
        assert_eq!(bank.records().next().unwrap().label, 1);
    }

    #[test]
    fn from_parts_round_trip() {
        let mut bank = MemoryBank::new(4).unwrap();
        for s in 0..6 {
            bank.enqueue_batch([rec(s as u32, 0)], s).unwrap();
        }
        let rebuilt = MemoryBank::from_parts(
            bank.capacity(),
            bank.policy(),
            bank.current_step(),
            bank.records().cloned().collect(),
        )
        .unwrap();
        assert_eq!(rebuilt, bank);
        let unordered = vec![rec(0, 3), rec(0, 1)];
        assert!(MemoryBank::from_parts(4, EnqueuePolicy::All, 5, unordered).is_err());
    }
}
