use crate::data::{Dataset, Record, Schema, Subgroup};
use crate::error::{Error, Result};

/// Statistical parity difference
/// `P(y = fav | unprivileged) − P(y = fav | privileged)`.
///
/// Errors when either side is empty.
pub fn spd(ds: &Dataset, sub: &Subgroup) -> Result<f64> {
    spd_records(ds.records(), sub)
}

pub fn spd_records(records: &[Record], sub: &Subgroup) -> Result<f64> {
    let c = GroupCounts::tally(records, sub);
    c.spd()
}

/// Favorable-label counts on each side of a subgroup split.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GroupCounts {
    pub unpriv_favorable: usize,
    pub unpriv_total: usize,
    pub priv_favorable: usize,
    pub priv_total: usize,
}

impl GroupCounts {
    pub fn tally(records: &[Record], sub: &Subgroup) -> Self {
        let mut c = GroupCounts::default();
        for r in records {
            let fav = sub.is_favorable(r.label) as usize;
            if sub.is_unprivileged(r) {
                c.unpriv_total += 1;
                c.unpriv_favorable += fav;
            } else {
                c.priv_total += 1;
                c.priv_favorable += fav;
            }
        }
        c
    }

    pub fn spd(&self) -> Result<f64> {
        if self.unpriv_total == 0 {
            return Err(Error::Degenerate("SPD undefined: unprivileged group is empty".into()));
        }
        if self.priv_total == 0 {
            return Err(Error::Degenerate("SPD undefined: privileged group is empty".into()));
        }
        Ok(self.unpriv_favorable as f64 / self.unpriv_total as f64
            - self.priv_favorable as f64 / self.priv_total as f64)
    }
}

struct Rates {
    tpr: [f64; 2],
    fpr: [f64; 2],
}

/// Per-group true/false positive rates; index 0 is unprivileged.
fn rates(preds: &[bool], truth: &[bool], unprivileged: &[bool]) -> Result<Rates> {
    if preds.len() != truth.len() || preds.len() != unprivileged.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} predictions, {} labels, {} group flags",
            preds.len(),
            truth.len(),
            unprivileged.len()
        )));
    }
    // [group][truth][pred]
    let mut cm = [[[0usize; 2]; 2]; 2];
    for ((&p, &t), &u) in preds.iter().zip(truth).zip(unprivileged) {
        let g = if u { 0 } else { 1 };
        cm[g][t as usize][p as usize] += 1;
    }
    let mut tpr = [0.0; 2];
    let mut fpr = [0.0; 2];
    for g in 0..2 {
        let name = if g == 0 { "unprivileged" } else { "privileged" };
        let pos = cm[g][1][0] + cm[g][1][1];
        let neg = cm[g][0][0] + cm[g][0][1];
        if pos == 0 {
            return Err(Error::Degenerate(format!(
                "TPR undefined: {name} group has no favorable ground-truth instances"
            )));
        }
        if neg == 0 {
            return Err(Error::Degenerate(format!(
                "FPR undefined: {name} group has no unfavorable ground-truth instances"
            )));
        }
        tpr[g] = cm[g][1][1] as f64 / pos as f64;
        fpr[g] = cm[g][0][1] as f64 / neg as f64;
    }
    Ok(Rates { tpr, fpr })
}

/// Equalized odds `½(|ΔTPR| + |ΔFPR|)`. Inputs are favorable-label
/// indicators and an unprivileged-membership mask.
pub fn eod(preds: &[bool], truth: &[bool], unprivileged: &[bool]) -> Result<f64> {
    let r = rates(preds, truth, unprivileged)?;
    Ok(0.5 * ((r.tpr[0] - r.tpr[1]).abs() + (r.fpr[0] - r.fpr[1]).abs()))
}

/// Equal opportunity `|ΔTPR|`.
pub fn eo(preds: &[bool], truth: &[bool], unprivileged: &[bool]) -> Result<f64> {
    let r = rates(preds, truth, unprivileged)?;
    Ok((r.tpr[0] - r.tpr[1]).abs())
}

/// A bounded per-record statistic with values in `[-1, 1]`.
pub trait BiasStatistic {
    fn name(&self) -> &str;
    fn evaluate(&self, schema: &Schema, record: &Record) -> f64;
}

/// A [`BiasStatistic`] backed by a closure.
pub struct FnStatistic<F> {
    name: String,
    f: F,
}

impl<F: Fn(&Schema, &Record) -> f64> FnStatistic<F> {
    pub fn new(name: &str, f: F) -> Self {
        FnStatistic {
            name: name.to_string(),
            f,
        }
    }
}

impl<F: Fn(&Schema, &Record) -> f64> BiasStatistic for FnStatistic<F> {
    fn name(&self) -> &str {
        &self.name
    }

    fn evaluate(&self, schema: &Schema, record: &Record) -> f64 {
        (self.f)(schema, record)
    }
}

/// Sample mean of `phi` over the dataset.
pub fn expected_statistic(ds: &Dataset, phi: &dyn BiasStatistic) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::Empty("expected statistic over an empty dataset".into()));
    }
    let mut sum = 0.0;
    for r in ds.records() {
        let v = phi.evaluate(ds.schema(), r);
        if !(v.abs() <= 1.0) {
            return Err(Error::StatisticOutOfBounds {
                name: phi.name().to_string(),
                value: v,
            });
        }
        sum += v;
    }
    Ok(sum / ds.len() as f64)
}
