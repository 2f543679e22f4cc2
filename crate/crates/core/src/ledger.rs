//! Token settlement with strict conservation.
//!
//! Consumers lock a job's reward and gas budget at registration. Processors
//! are paid per fulfilled slot out of the lock, and whatever is left when a
//! job terminates goes back to the consumer. The sum of all balances and all
//! locked amounts never changes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{AccountId, JobId, Tokens};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LedgerError {
    #[error("insufficient balance: {account} holds {available}, needs {required}")]
    InsufficientBalance {
        account: AccountId,
        available: Tokens,
        required: Tokens,
    },
    #[error("{0} already has locked funds")]
    DuplicateLock(JobId),
    #[error("{job}: locked funds ({reward} reward, {gas} gas) cannot cover the payment")]
    InsufficientLocked { job: JobId, reward: Tokens, gas: Tokens },
    #[error("{0} has no locked funds")]
    UnknownJob(JobId),
}

/// Funds held against one job.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Locked {
    pub reward: Tokens,
    pub gas: Tokens,
}

impl Locked {
    pub fn total(&self) -> Tokens {
        self.reward + self.gas
    }
}

/// Mismatch found by [`Ledger::audit`].
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("conservation violated: balances {balances} + locked {locked} != supply {supply}")]
pub struct AuditViolation {
    pub balances: u128,
    pub locked: u128,
    pub supply: u128,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ledger {
    balances: BTreeMap<AccountId, Tokens>,
    locked: BTreeMap<JobId, Locked>,
    total_supply: u128,
}

impl Ledger {
    /// Ledger whose supply is exactly the given opening balances.
    pub fn new<I>(opening: I) -> Self
    where
        I: IntoIterator<Item = (AccountId, Tokens)>,
    {
        let mut balances = BTreeMap::new();
        for (account, amount) in opening {
            *balances.entry(account).or_insert(0) += amount;
        }
        let total_supply = balances.values().map(|&v| v as u128).sum();
        Self {
            balances,
            locked: BTreeMap::new(),
            total_supply,
        }
    }

    /// Rebuild a ledger from exported parts; fails unless the parts conserve
    /// `total_supply`.
    pub fn from_parts(
        balances: BTreeMap<AccountId, Tokens>,
        locked: BTreeMap<JobId, Locked>,
        total_supply: u128,
    ) -> Result<Self, AuditViolation> {
        let ledger = Self {
            balances,
            locked,
            total_supply,
        };
        ledger.audit().map(|()| ledger)
    }

    pub fn balance(&self, account: &AccountId) -> Tokens {
        self.balances.get(account).copied().unwrap_or(0)
    }

    pub fn locked(&self, job: JobId) -> Option<Locked> {
        self.locked.get(&job).copied()
    }

    pub fn balances(&self) -> &BTreeMap<AccountId, Tokens> {
        &self.balances
    }

    pub fn locked_entries(&self) -> &BTreeMap<JobId, Locked> {
        &self.locked
    }

    pub fn total_supply(&self) -> u128 {
        self.total_supply
    }

    pub fn lock(
        &mut self,
        consumer: &AccountId,
        job: JobId,
        reward: Tokens,
        gas: Tokens,
    ) -> Result<(), LedgerError> {
        if self.locked.contains_key(&job) {
            return Err(LedgerError::DuplicateLock(job));
        }
        let available = self.balance(consumer);
        let required = reward
            .checked_add(gas)
            .ok_or_else(|| LedgerError::InsufficientBalance {
                account: consumer.clone(),
                available,
                required: Tokens::MAX,
            })?;
        if available < required {
            return Err(LedgerError::InsufficientBalance {
                account: consumer.clone(),
                available,
                required,
            });
        }
        self.balances.insert(consumer.clone(), available - required);
        self.locked.insert(job, Locked { reward, gas });
        Ok(())
    }

    /// Move one slot's reward share and gas reimbursement from the job's lock
    /// to the processor.
    pub fn pay_slot(
        &mut self,
        job: JobId,
        processor: &AccountId,
        reward_share: Tokens,
        gas_fee: Tokens,
    ) -> Result<(), LedgerError> {
        let entry = self.locked.get_mut(&job).ok_or(LedgerError::UnknownJob(job))?;
        if entry.reward < reward_share || entry.gas < gas_fee {
            return Err(LedgerError::InsufficientLocked {
                job,
                reward: entry.reward,
                gas: entry.gas,
            });
        }
        entry.reward -= reward_share;
        entry.gas -= gas_fee;
        *self.balances.entry(processor.clone()).or_insert(0) += reward_share + gas_fee;
        Ok(())
    }

    /// Release everything still locked for `job` back to `consumer`.
    pub fn refund(&mut self, job: JobId, consumer: &AccountId) -> Result<Tokens, LedgerError> {
        let entry = self.locked.remove(&job).ok_or(LedgerError::UnknownJob(job))?;
        let amount = entry.total();
        *self.balances.entry(consumer.clone()).or_insert(0) += amount;
        Ok(amount)
    }

    pub fn audit(&self) -> Result<(), AuditViolation> {
        let balances: u128 = self.balances.values().map(|&v| v as u128).sum();
        let locked: u128 = self.locked.values().map(|l| l.total() as u128).sum();
        if balances + locked == self.total_supply {
            Ok(())
        } else {
            Err(AuditViolation {
                balances,
                locked,
                supply: self.total_supply,
            })
        }
    }

    #[cfg(test)]
    pub(crate) fn corrupt_balance(&mut self, account: &AccountId, amount: Tokens) {
        self.balances.insert(account.clone(), amount);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn acct(s: &str) -> AccountId {
        s.into()
    }

    fn funded(amount: Tokens) -> Ledger {
        Ledger::new([(acct("alice"), amount)])
    }

    #[test]
    fn lock_moves_funds_out_of_balance() {
        let mut l = funded(100);
        l.lock(&acct("alice"), JobId(1), 10, 2).unwrap();
        assert_eq!(l.balance(&acct("alice")), 88);
        assert_eq!(l.locked(JobId(1)), Some(Locked { reward: 10, gas: 2 }));
        l.audit().unwrap();
    }

    #[test]
    fn lock_rejects_underfunded_consumer() {
        let mut l = funded(5);
        let before = l.clone();
        assert!(matches!(
            l.lock(&acct("alice"), JobId(1), 10, 2),
            Err(LedgerError::InsufficientBalance { available: 5, required: 12, .. })
        ));
        assert_eq!(l, before);
    }

    #[test]
    fn lock_twice_is_rejected() {
        let mut l = funded(100);
        l.lock(&acct("alice"), JobId(1), 1, 1).unwrap();
        assert_eq!(
            l.lock(&acct("alice"), JobId(1), 1, 1),
            Err(LedgerError::DuplicateLock(JobId(1)))
        );
    }

    #[test]
    fn pay_slot_examples() {
        let mut l = funded(100);
        l.lock(&acct("alice"), JobId(1), 10, 2).unwrap();
        l.pay_slot(JobId(1), &acct("p"), 5, 1).unwrap();
        assert_eq!(l.locked(JobId(1)), Some(Locked { reward: 5, gas: 1 }));
        assert_eq!(l.balance(&acct("p")), 6);

        let mut l = funded(100);
        l.lock(&acct("alice"), JobId(1), 10, 2).unwrap();
        assert!(matches!(
            l.pay_slot(JobId(1), &acct("p"), 11, 0),
            Err(LedgerError::InsufficientLocked { .. })
        ));

        let before = l.clone();
        l.pay_slot(JobId(1), &acct("p"), 0, 0).unwrap();
        assert_eq!(l.locked(JobId(1)), before.locked(JobId(1)));
        l.audit().unwrap();
    }

    #[test]
    fn refund_examples() {
        let mut l = funded(100);
        l.lock(&acct("alice"), JobId(1), 10, 2).unwrap();
        l.pay_slot(JobId(1), &acct("p"), 5, 1).unwrap();
        assert_eq!(l.refund(JobId(1), &acct("alice")), Ok(6));
        assert_eq!(l.balance(&acct("alice")), 94);
        assert_eq!(l.locked(JobId(1)), None);

        l.lock(&acct("alice"), JobId(2), 0, 0).unwrap();
        assert_eq!(l.refund(JobId(2), &acct("alice")), Ok(0));

        assert_eq!(
            l.refund(JobId(9), &acct("alice")),
            Err(LedgerError::UnknownJob(JobId(9)))
        );
        l.audit().unwrap();
    }

    #[test]
    fn from_parts_checks_conservation() {
        let mut l = funded(100);
        l.lock(&acct("alice"), JobId(1), 10, 2).unwrap();
        let back = Ledger::from_parts(l.balances().clone(), l.locked_entries().clone(), l.total_supply()).unwrap();
        assert_eq!(back, l);
        assert!(Ledger::from_parts(l.balances().clone(), BTreeMap::new(), 100).is_err());
    }

    #[test]
    fn audit_catches_corruption() {
        assert!(Ledger::default().audit().is_ok());
        let mut l = funded(100);
        l.corrupt_balance(&acct("alice"), 101);
        assert_eq!(
            l.audit(),
            Err(AuditViolation {
                balances: 101,
                locked: 0,
                supply: 100
            })
        );
    }

    #[derive(Debug, Clone)]
    enum Op {
        Lock { who: usize, job: u64, reward: u64, gas: u64 },
        Pay { job: u64, to: usize, reward: u64, gas: u64 },
        Refund { job: u64, who: usize },
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            (0..3usize, 0..8u64, 0..60u64, 0..20u64)
                .prop_map(|(who, job, reward, gas)| Op::Lock { who, job, reward, gas }),
            (0..8u64, 0..3usize, 0..30u64, 0..10u64)
                .prop_map(|(job, to, reward, gas)| Op::Pay { job, to, reward, gas }),
            (0..8u64, 0..3usize).prop_map(|(job, who)| Op::Refund { job, who }),
        ]
    }

    proptest! {
        #[test]
        fn conservation_under_any_operation_sequence(ops in proptest::collection::vec(op(), 0..60)) {
            let names = ["a", "b", "c"];
            let mut l = Ledger::new(names.iter().map(|n| (acct(n), 100)));
            let mut paid: BTreeMap<u64, (u64, u64)> = BTreeMap::new();
            let mut original: BTreeMap<u64, (u64, u64)> = BTreeMap::new();
            for op in ops {
                match op {
                    Op::Lock { who, job, reward, gas } => {
                        if l.lock(&acct(names[who]), JobId(job), reward, gas).is_ok() {
                            original.insert(job, (reward, gas));
                            paid.insert(job, (0, 0));
                        }
                    }
                    Op::Pay { job, to, reward, gas } => {
                        if l.pay_slot(JobId(job), &acct(names[to]), reward, gas).is_ok() {
                            let p = paid.get_mut(&job).unwrap();
                            p.0 += reward;
                            p.1 += gas;
                        }
                    }
                    Op::Refund { job, who } => {
                        let _ = l.refund(JobId(job), &acct(names[who]));
                    }
                }
                prop_assert!(l.audit().is_ok());
                for (job, (r, g)) in &paid {
                    let (or, og) = original[job];
                    prop_assert!(*r <= or && *g <= og);
                }
            }
        }
    }
}
