use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Record, Subgroup};
use crate::error::{Error, Result};

/// Output of [`group_balance`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Balanced {
    /// Selected pool indices, ascending.
    pub kept: Vec<usize>,
    pub unprivileged: usize,
    pub privileged: usize,
    /// A group had fewer members than its quota.
    pub shortfall: bool,
}

fn sample_sorted(items: &[usize], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    index::sample(rng, items.len(), k).into_iter().map(|i| items[i]).collect()
}

/// Keep `floor(k*/2)` unprivileged and `ceil(k*/2)` privileged examples,
/// sampled without replacement. A group short of its quota is kept whole
/// and the other group fills the gap.
pub fn group_balance(pool: &[Record], sub: &Subgroup, k_star: usize, seed: u64) -> Result<Balanced> {
    if k_star < 2 {
        return Err(Error::InvalidArgument(format!("k* must be at least 2, got {k_star}")));
    }
    let (unpriv, privd): (Vec<usize>, Vec<usize>) = (0..pool.len()).partition(|&i| sub.is_unprivileged(&pool[i]));
    if unpriv.is_empty() || privd.is_empty() {
        return Err(Error::Degenerate("group balancing needs both groups in the pool".into()));
    }
    let mut qu = k_star / 2;
    let mut qp = k_star - qu;
    let shortfall = qu > unpriv.len() || qp > privd.len();
    if qu > unpriv.len() {
        qp += qu - unpriv.len();
        qu = unpriv.len();
    }
    if qp > privd.len() {
        qu = (qu + qp - privd.len()).min(unpriv.len());
        qp = privd.len();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kept = sample_sorted(&unpriv, qu, &mut rng);
    kept.extend(sample_sorted(&privd, qp, &mut rng));
    kept.sort_unstable();
    Ok(Balanced {
        kept,
        unprivileged: qu,
        privileged: qp,
        shortfall,
    })
}

/// `k_star` pool indices drawn uniformly without replacement, ascending.
pub fn random_subset(n: usize, k_star: usize, seed: u64) -> Result<Vec<usize>> {
    if k_star > n {
        return Err(Error::InvalidArgument(format!("k* = {k_star} exceeds pool size {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kept = index::sample(&mut rng, n, k_star).into_vec();
    kept.sort_unstable();
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Conjunct, FeatureSpec, Protected, Schema, SubgroupSpec};

    fn pool(n_a: usize, n_b: usize) -> (Vec<Record>, Subgroup) {
        let s = Schema::new(
            vec![FeatureSpec::categorical("g", ["a", "b"])],
            FeatureSpec::categorical("y", ["0", "1"]),
            Protected {
                name: "g".into(),
                features: vec!["g".into()],
            },
        )
        .unwrap();
        let sub = SubgroupSpec::new(vec![Conjunct::equals("g", "a")], "1")
            .compile(&s)
            .unwrap();
        let mut p = vec![Record::from_strs(&s, &["a", "1"]); n_a];
        p.extend(vec![Record::from_strs(&s, &["b", "0"]); n_b]);
        (p, sub)
    }

    #[test]
    fn forced_counts() {
        let (p, sub) = pool(60, 20);
        let b = group_balance(&p, &sub, 40, 1).unwrap();
        assert_eq!((b.unprivileged, b.privileged, b.shortfall), (20, 20, false));
        assert_eq!(b.kept.len(), 40);
    }

    #[test]
    fn minority_shortfall() {
        let (p, sub) = pool(5, 60);
        let b = group_balance(&p, &sub, 40, 1).unwrap();
        assert_eq!((b.unprivileged, b.privileged, b.shortfall), (5, 35, true));
    }

    #[test]
    fn balanced_pool_of_size_k_is_itself() {
        let (p, sub) = pool(10, 10);
        let b = group_balance(&p, &sub, 20, 9).unwrap();
        assert_eq!(b.kept, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn subset_edges() {
        assert_eq!(random_subset(5, 5, 0).unwrap(), vec![0, 1, 2, 3, 4]);
        assert!(random_subset(5, 0, 0).unwrap().is_empty());
        assert!(random_subset(5, 6, 0).is_err());
        assert_ne!(random_subset(100, 10, 1).unwrap(), random_subset(100, 10, 2).unwrap());
    }
}
