use serde::{Deserialize, Serialize};

use crate::data::{Record, Subgroup};
use crate::error::{Error, Result};
use crate::stats::GroupCounts;

/// Why greedy pruning stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneStop {
    /// `|SPD| <= epsilon`.
    Satisfied,
    /// Every remaining removal would empty a group.
    WouldEmptyGroup,
    /// The best removal would raise `|SPD|`.
    NoImprovement,
}

/// Result of [`fair_spd_prune`].
#[derive(Clone, Debug, PartialEq)]
pub struct Pruned {
    /// Surviving pool indices, ascending.
    pub kept: Vec<usize>,
    /// Removed pool indices in removal order.
    pub removed: Vec<usize>,
    /// `|SPD|` before the first step and after each removal.
    pub trace: Vec<f64>,
    pub stop: PruneStop,
}

impl Pruned {
    pub fn degenerate(&self) -> bool {
        self.stop != PruneStop::Satisfied
    }

    pub fn final_abs_spd(&self) -> f64 {
        *self.trace.last().expect("trace starts with the initial value")
    }
}

// (unprivileged, favorable) slot of a record
fn kind(r: &Record, sub: &Subgroup) -> usize {
    (sub.is_unprivileged(r) as usize) * 2 + sub.is_favorable(r.label) as usize
}

fn without(c: GroupCounts, k: usize) -> Option<GroupCounts> {
    let mut c = c;
    let (total, fav) = if k >= 2 {
        (&mut c.unpriv_total, &mut c.unpriv_favorable)
    } else {
        (&mut c.priv_total, &mut c.priv_favorable)
    };
    if *total <= 1 {
        return None;
    }
    *total -= 1;
    if k % 2 == 1 {
        *fav -= 1;
    }
    Some(c)
}

/// Greedily drop the example whose removal minimizes `|SPD|` until
/// `|SPD| <= epsilon`. Ties go to the lowest index. A group is never
/// emptied and no step may raise `|SPD|`; either case stops the loop with
/// a degenerate outcome.
pub fn fair_spd_prune(pool: &[Record], sub: &Subgroup, epsilon: f64) -> Result<Pruned> {
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be >= 0, got {epsilon}")));
    }
    let mut counts = GroupCounts::tally(pool, sub);
    let mut current = counts.spd()?.abs();
    let kinds: Vec<usize> = pool.iter().map(|r| kind(r, sub)).collect();
    let mut alive = vec![true; pool.len()];
    let mut trace = vec![current];
    let mut removed = Vec::new();

    let stop = loop {
        if current <= epsilon {
            break PruneStop::Satisfied;
        }
        // the candidate value only depends on the record's slot, so the
        // lowest live index of each slot is its representative
        let mut first = [usize::MAX; 4];
        for (i, &k) in kinds.iter().enumerate() {
            if alive[i] && first[k] == usize::MAX {
                first[k] = i;
            }
        }
        let mut best: Option<(f64, usize, GroupCounts)> = None;
        for k in 0..4 {
            let idx = first[k];
            if idx == usize::MAX {
                continue;
            }
            let Some(next) = without(counts, k) else { continue };
            let v = next.spd()?.abs();
            let better = match best {
                None => true,
                Some((bv, bi, _)) => v < bv || (v == bv && idx < bi),
            };
            if better {
                best = Some((v, idx, next));
            }
        }
        let Some((v, idx, next)) = best else {
            break PruneStop::WouldEmptyGroup;
        };
        if v > current {
            break PruneStop::NoImprovement;
        }
        alive[idx] = false;
        removed.push(idx);
        counts = next;
        current = v;
        trace.push(v);
    };

    Ok(Pruned {
        kept: (0..pool.len()).filter(|&i| alive[i]).collect(),
        removed,
        trace,
        stop,
    })
}
