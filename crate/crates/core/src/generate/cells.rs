use crate::data::{Condition, Conjunct, Record, Schema, Value};

/// Default number of equal-width bins for a numerical protected feature.
pub const PROTECTED_BINS: usize = 10;

#[derive(Clone, Debug, PartialEq)]
enum Axis {
    Categorical { feature: usize, card: usize },
    /// Bin `j` covers `[cuts[j-1], cuts[j])`, with the range ends outside.
    Numeric {
        feature: usize,
        cuts: Vec<f64>,
        lo: f64,
        hi: f64,
        integer: bool,
    },
}

impl Axis {
    fn size(&self) -> usize {
        match self {
            Axis::Categorical { card, .. } => *card,
            Axis::Numeric { cuts, .. } => cuts.len() + 1,
        }
    }

    fn bin(&self, v: Value) -> usize {
        match (self, v) {
            (Axis::Categorical { .. }, Value::Category(c)) => c as usize,
            (Axis::Numeric { cuts, .. }, Value::Number(x)) => cuts.partition_point(|c| *c <= x),
            _ => 0,
        }
    }
}

/// Joint index over the protected features: one cell per combination of
/// categories and numerical bins.
#[derive(Clone, Debug, PartialEq)]
pub struct CellIndex {
    axes: Vec<Axis>,
    n_cells: usize,
}

impl CellIndex {
    /// Numerical protected features are cut at the bounds of any interval
    /// conjunct on them in `split`, otherwise into equal-width bins.
    pub fn new(schema: &Schema, split: &[Conjunct]) -> CellIndex {
        let mut axes = Vec::new();
        for &idx in schema.protected_indices() {
            let spec = schema.feature(idx);
            let axis = match spec.range() {
                None => Axis::Categorical {
                    feature: idx,
                    card: spec.cardinality(),
                },
                Some((lo, hi)) => {
                    let integer = spec.is_integer();
                    let interval = split.iter().find_map(|c| match c.condition {
                        Condition::Interval(iv) if c.feature == spec.name => Some(iv),
                        _ => None,
                    });
                    let cuts = match interval {
                        Some([a, b]) => {
                            let above = if integer { b.floor() + 1.0 } else { next_up(b) };
                            [a, above].into_iter().filter(|c| *c > lo && *c <= hi).collect()
                        }
                        None => {
                            let w = (hi - lo) / PROTECTED_BINS as f64;
                            (1..PROTECTED_BINS).map(|i| lo + w * i as f64).collect()
                        }
                    };
                    Axis::Numeric {
                        feature: idx,
                        cuts,
                        lo,
                        hi,
                        integer,
                    }
                }
            };
            axes.push(axis);
        }
        let n_cells = axes.iter().map(Axis::size).product();
        CellIndex { axes, n_cells }
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn cell_of(&self, r: &Record) -> usize {
        self.axes.iter().fold(0, |acc, a| {
            let feature = match a {
                Axis::Categorical { feature, .. } | Axis::Numeric { feature, .. } => *feature,
            };
            acc * a.size() + a.bin(r.values[feature])
        })
    }

    fn decode(&self, mut cell: usize) -> Vec<usize> {
        let mut bins = vec![0; self.axes.len()];
        for (i, a) in self.axes.iter().enumerate().rev() {
            bins[i] = cell % a.size();
            cell /= a.size();
        }
        bins
    }

    /// Write the protected values of `cell` into `r`. Categorical values are
    /// set directly; numerical ones are kept if already in the bin, else
    /// redrawn with `redraw(lo, hi, integer)`.
    pub(crate) fn imprint(&self, cell: usize, r: &mut Record, mut redraw: impl FnMut(f64, f64, bool) -> f64) {
        for (a, bin) in self.axes.iter().zip(self.decode(cell)) {
            match a {
                Axis::Categorical { feature, .. } => r.values[*feature] = Value::Category(bin as u32),
                Axis::Numeric {
                    feature,
                    cuts,
                    lo,
                    hi,
                    integer,
                } => {
                    if a.bin(r.values[*feature]) == bin {
                        continue;
                    }
                    let b_lo = if bin == 0 { *lo } else { cuts[bin - 1] };
                    let b_hi = if bin == cuts.len() { *hi } else { cuts[bin] };
                    // bins are half-open; keep draws strictly below the next cut
                    let b_hi = if bin == cuts.len() {
                        b_hi
                    } else if *integer {
                        b_hi - 1.0
                    } else {
                        f64::max(b_lo, b_hi - (b_hi - b_lo) * 1e-9)
                    };
                    r.values[*feature] = Value::Number(redraw(b_lo, b_hi, *integer));
                }
            }
        }
    }
}

fn next_up(x: f64) -> f64 {
    x + f64::max(x.abs() * 1e-12, 1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FeatureSpec, Protected};

    #[test]
    fn intersection_and_interval_cells() {
        let s = Schema::new(
            vec![
                FeatureSpec::integer("age", 21.0, 81.0),
                FeatureSpec::categorical("gender", ["F", "M"]),
            ],
            FeatureSpec::categorical("y", ["0", "1"]),
            Protected {
                name: "age×gender".into(),
                features: vec!["age".into(), "gender".into()],
            },
        )
        .unwrap();
        let idx = CellIndex::new(&s, &[Conjunct::interval("age", 21.0, 30.0)]);
        // age: [21,31) and [31,81]; gender: 2
        assert_eq!(idx.n_cells(), 4);
        let r = |a: &str, g: &str| Record::from_strs(&s, &[a, g, "0"]);
        assert_eq!(idx.cell_of(&r("21", "F")), 0);
        assert_eq!(idx.cell_of(&r("30", "M")), 1);
        assert_eq!(idx.cell_of(&r("31", "F")), 2);
        let mut x = r("60", "M");
        idx.imprint(0, &mut x, |lo, hi, _| (lo + hi) / 2.0);
        assert_eq!(idx.cell_of(&x), 0);
        let default = CellIndex::new(&s, &[]);
        assert_eq!(default.n_cells(), 20);
    }
}
