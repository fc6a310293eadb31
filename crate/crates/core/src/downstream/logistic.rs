use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticParams {
    #[serde(default = "default_l2")]
    pub l2: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_l2() -> f64 {
    1e-3
}
fn default_step() -> f64 {
    0.1
}
fn default_tol() -> f64 {
    1e-6
}
fn default_max_iter() -> usize {
    5000
}

impl Default for LogisticParams {
    fn default() -> Self {
        LogisticParams {
            l2: default_l2(),
            step: default_step(),
            tol: default_tol(),
            max_iter: default_max_iter(),
        }
    }
}

/// Binary logistic model; the bias is unpenalized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryLogistic {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    /// Loss before the first step and after every accepted step.
    #[serde(skip)]
    pub losses: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

// log(1 + exp(z)) without overflow
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl BinaryLogistic {
    pub fn score(&self, row: &[f64]) -> f64 {
        self.bias + row.iter().zip(&self.weights).map(|(x, w)| x * w).sum::<f64>()
    }
}

/// Mean log-loss plus `l2/2 * |w|^2`.
pub fn logistic_loss(x: &[f64], y: &[f64], d: usize, w: &[f64], b: f64, l2: f64) -> f64 {
    let n = y.len();
    let mut loss = 0.0;
    for i in 0..n {
        let z = b + x[i * d..(i + 1) * d].iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
        // -[y log s(z) + (1-y) log(1 - s(z))]
        loss += softplus(z) - y[i] * z;
    }
    loss / n as f64 + 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>()
}

/// Gradient of [`logistic_loss`]: weights first, bias last.
pub fn logistic_gradient(x: &[f64], y: &[f64], d: usize, w: &[f64], b: f64, l2: f64) -> Vec<f64> {
    let n = y.len();
    let mut g = vec![0.0; d + 1];
    for i in 0..n {
        let row = &x[i * d..(i + 1) * d];
        let z = b + row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
        let r = sigmoid(z) - y[i];
        for (gj, xj) in g.iter_mut().zip(row) {
            *gj += r * xj;
        }
        g[d] += r;
    }
    for v in g.iter_mut() {
        *v /= n as f64;
    }
    for j in 0..d {
        g[j] += l2 * w[j];
    }
    g
}

/// Loss and gradient from one pass over the rows.
fn loss_and_gradient(x: &[f64], y: &[f64], d: usize, w: &[f64], b: f64, l2: f64) -> (f64, Vec<f64>) {
    let n = y.len();
    let mut loss = 0.0;
    let mut g = vec![0.0; d + 1];
    for i in 0..n {
        let row = &x[i * d..(i + 1) * d];
        let z = b + row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
        loss += softplus(z) - y[i] * z;
        let r = sigmoid(z) - y[i];
        if r != 0.0 {
            for (gj, xj) in g.iter_mut().zip(row) {
                *gj += r * xj;
            }
            g[d] += r;
        }
    }
    let inv = 1.0 / n as f64;
    for v in g.iter_mut() {
        *v *= inv;
    }
    for j in 0..d {
        g[j] += l2 * w[j];
    }
    (loss * inv + 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>(), g)
}

/// Full-batch gradient descent. A step that raises the loss is rejected
/// and the step size halved.
pub fn fit_binary(x: &[f64], y: &[f64], d: usize, p: &LogisticParams) -> BinaryLogistic {
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut step = p.step;
    let (mut loss, mut g) = loss_and_gradient(x, y, d, &w, b, p.l2);
    let mut losses = vec![loss];
    let mut gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut it = 0;
    while it < p.max_iter && gnorm >= p.tol {
        it += 1;
        let w_new: Vec<f64> = w.iter().zip(&g).map(|(wj, gj)| wj - step * gj).collect();
        let b_new = b - step * g[d];
        let (l_new, g_new) = loss_and_gradient(x, y, d, &w_new, b_new, p.l2);
        if l_new > loss {
            step /= 2.0;
            if step < 1e-12 {
                break;
            }
            continue;
        }
        w = w_new;
        b = b_new;
        loss = l_new;
        losses.push(loss);
        g = g_new;
        gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    }
    BinaryLogistic {
        weights: w,
        bias: b,
        iterations: it,
        grad_norm: gnorm,
        losses,
    }
}

/// One model for two classes (positive = class 1); one-vs-rest otherwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    /// Label index each model scores, in ascending order.
    pub classes: Vec<u32>,
    pub models: Vec<BinaryLogistic>,
}

impl LogisticModel {
    pub fn fit(x: &[f64], labels: &[u32], d: usize, classes: &[u32], p: &LogisticParams) -> LogisticModel {
        let targets: Vec<u32> = if classes.len() == 2 {
            vec![classes[1]]
        } else {
            classes.to_vec()
        };
        let models = targets
            .iter()
            .map(|&c| {
                let y: Vec<f64> = labels.iter().map(|&l| (l == c) as u8 as f64).collect();
                fit_binary(x, &y, d, p)
            })
            .collect();
        LogisticModel {
            classes: classes.to_vec(),
            models,
        }
    }

    /// Predicted label index; ties go to the earlier class.
    pub fn predict_row(&self, row: &[f64]) -> u32 {
        if self.classes.len() == 2 {
            return if self.models[0].score(row) > 0.0 {
                self.classes[1]
            } else {
                self.classes[0]
            };
        }
        let mut best = (f64::NEG_INFINITY, self.classes[0]);
        for (m, &c) in self.models.iter().zip(&self.classes) {
            let s = m.score(row);
            if s > best.0 {
                best = (s, c);
            }
        }
        best.1
    }
}
