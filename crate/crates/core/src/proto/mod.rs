//! Per-process state machines of the three coloring protocols.

pub mod arbitrary;
pub mod par;
pub mod seq;

use std::collections::VecDeque;

use rand::seq::IteratorRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::topology::Identity;

/// How a process picks the next uncolored neighbor to visit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ChildOrder {
    #[default]
    Smallest,
    Seeded {
        seed: u64,
    },
}

/// Next-child selection with an optional pinned prefix. Pinned entries that
/// are no longer candidates are skipped.
#[derive(Debug, Clone)]
pub(crate) struct ChildChooser {
    pinned: VecDeque<Identity>,
    rng: Option<ChaCha8Rng>,
}

impl ChildChooser {
    pub(crate) fn new(order: ChildOrder, own: Identity, pinned: Vec<Identity>) -> Self {
        let rng = match order {
            ChildOrder::Smallest => None,
            ChildOrder::Seeded { seed } => Some(ChaCha8Rng::seed_from_u64(
                seed ^ own.0.wrapping_mul(0x2545_f491_4f6c_dd1d),
            )),
        };
        ChildChooser {
            pinned: pinned.into(),
            rng,
        }
    }

    pub(crate) fn pick<'a, I>(&mut self, candidates: I) -> Option<Identity>
    where
        I: IntoIterator<Item = &'a Identity> + Clone,
    {
        while let Some(id) = self.pinned.pop_front() {
            if candidates.clone().into_iter().any(|c| *c == id) {
                return Some(id);
            }
        }
        match &mut self.rng {
            None => candidates.into_iter().min().copied(),
            Some(rng) => candidates.into_iter().choose(rng).copied(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn pinned_choices_come_first() {
        let set: BTreeSet<Identity> = [2, 5, 9].into_iter().map(Identity).collect();
        let mut c = ChildChooser::new(ChildOrder::Smallest, Identity(1), vec![Identity(7), Identity(9)]);
        assert_eq!(c.pick(&set), Some(Identity(9)));
        assert_eq!(c.pick(&set), Some(Identity(2)));
    }

    #[test]
    fn seeded_choice_is_a_candidate_and_repeatable() {
        let set: BTreeSet<Identity> = (1..=20).map(Identity).collect();
        let mut a = ChildChooser::new(ChildOrder::Seeded { seed: 3 }, Identity(4), vec![]);
        let mut b = ChildChooser::new(ChildOrder::Seeded { seed: 3 }, Identity(4), vec![]);
        for _ in 0..10 {
            let x = a.pick(&set).unwrap();
            assert!(set.contains(&x));
            assert_eq!(Some(x), b.pick(&set));
        }
        let empty: BTreeSet<Identity> = BTreeSet::new();
        assert_eq!(a.pick(&empty), None);
    }
}
