//! Multinomial logistic regression fitted by full-batch gradient descent,
//! deterministic and dependency-free. Features are standardized internally.

pub struct SoftmaxModel {
    dim: usize,
    classes: usize,
    w: Vec<f64>, // dim x classes
    b: Vec<f64>,
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl SoftmaxModel {
    /// Fit on row-major features (n x dim) and integer labels.
    pub fn fit(features: &[f64], n: usize, dim: usize, labels: &[usize], classes: usize) -> Self {
        assert_eq!(features.len(), n * dim);
        assert_eq!(labels.len(), n);

        let mut mean = vec![0.0; dim];
        for row in features.chunks(dim) {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut scale = vec![0.0; dim];
        for row in features.chunks(dim) {
            for (s, (&v, &m)) in scale.iter_mut().zip(row.iter().zip(&mean)) {
                *s += (v - m) * (v - m);
            }
        }
        for s in &mut scale {
            *s = (*s / n as f64).sqrt().max(1e-12);
        }

        let std_feat: Vec<f64> = features
            .chunks(dim)
            .flat_map(|row| {
                row.iter()
                    .zip(mean.iter().zip(&scale))
                    .map(|(&v, (&m, &s))| (v - m) / s)
                    .collect::<Vec<f64>>()
            })
            .collect();

        let mut model = SoftmaxModel {
            dim,
            classes,
            w: vec![0.0; dim * classes],
            b: vec![0.0; classes],
            mean,
            scale,
        };

        // plain GD with a fixed schedule is plenty for a convex objective
        let lr = 0.5;
        let mut probs = vec![0.0; classes];
        for _ in 0..400 {
            let mut gw = vec![0.0; dim * classes];
            let mut gb = vec![0.0; classes];
            for (row, &label) in std_feat.chunks(dim).zip(labels) {
                model.logits_std(row, &mut probs);
                softmax_inplace(&mut probs);
                probs[label] -= 1.0;
                for (j, &x) in row.iter().enumerate() {
                    for (c, &p) in probs.iter().enumerate() {
                        gw[j * classes + c] += p * x;
                    }
                }
                for (g, &p) in gb.iter_mut().zip(&probs) {
                    *g += p;
                }
            }
            let step = lr / n as f64;
            for (w, g) in model.w.iter_mut().zip(&gw) {
                *w -= step * g;
            }
            for (b, g) in model.b.iter_mut().zip(&gb) {
                *b -= step * g;
            }
        }
        model
    }

    fn logits_std(&self, row: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.b);
        for (j, &x) in row.iter().enumerate() {
            for (c, o) in out.iter_mut().enumerate() {
                *o += self.w[j * self.classes + c] * x;
            }
        }
    }

    pub fn predict(&self, feature: &[f64]) -> usize {
        assert_eq!(feature.len(), self.dim);
        let std_row: Vec<f64> = feature
            .iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(&v, (&m, &s))| (v - m) / s)
            .collect();
        let mut logits = vec![0.0; self.classes];
        self.logits_std(&std_row, &mut logits);
        let mut best = 0;
        for c in 1..self.classes {
            if logits[c] > logits[best] {
                best = c;
            }
        }
        best
    }

    pub fn accuracy(&self, features: &[f64], labels: &[usize]) -> f64 {
        let n = labels.len();
        let hits = features
            .chunks(self.dim)
            .zip(labels)
            .filter(|(row, &l)| self.predict(row) == l)
            .count();
        hits as f64 / n as f64
    }
}

fn softmax_inplace(logits: &mut [f64]) {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for l in logits.iter_mut() {
        *l = (*l - m).exp();
        z += *l;
    }
    for l in logits.iter_mut() {
        *l /= z;
    }
}
