use super::{sigmoid, BlackBoxModel};
use crate::error::{GpecError, Result};

/// A classifier producing one real score per class.
pub trait MulticlassModel: Send + Sync {
    fn dim(&self) -> usize;
    fn num_classes(&self) -> usize;
    fn predict_all(&self, x: &[f64]) -> Vec<f64>;

    /// `seed^T d(scores)/dx`, when the scores are differentiable.
    fn logit_vjp(&self, _x: &[f64], _seed: &[f64]) -> Option<Vec<f64>> {
        None
    }

    fn label(&self) -> String;

    /// Highest-scoring class; ties go to the lowest index.
    fn argmax(&self, x: &[f64]) -> usize {
        let scores = self.predict_all(x);
        let mut best = 0;
        for (i, s) in scores.iter().enumerate().skip(1) {
            if *s > scores[best] {
                best = i;
            }
        }
        best
    }
}

impl<T: MulticlassModel + ?Sized> MulticlassModel for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn num_classes(&self) -> usize {
        (**self).num_classes()
    }
    fn predict_all(&self, x: &[f64]) -> Vec<f64> {
        (**self).predict_all(x)
    }
    fn logit_vjp(&self, x: &[f64], seed: &[f64]) -> Option<Vec<f64>> {
        (**self).logit_vjp(x, seed)
    }
    fn label(&self) -> String {
        (**self).label()
    }
}

/// Binary view of class `class` against the strongest competitor:
/// `predict(x) = sigmoid(F_y(x) - max_{j != y} F_j(x))`.
pub struct OneVsAll<M> {
    inner: M,
    class: usize,
}

pub fn one_vs_all<M: MulticlassModel>(model: M, class: usize) -> Result<OneVsAll<M>> {
    let c = model.num_classes();
    if c < 2 {
        return Err(GpecError::Parameter(format!(
            "one-vs-all needs at least 2 classes, model has {c}"
        )));
    }
    if class >= c {
        return Err(GpecError::Parameter(format!(
            "class {class} out of range for {c} classes"
        )));
    }
    Ok(OneVsAll { inner: model, class })
}

impl<M: MulticlassModel> OneVsAll<M> {
    pub fn class(&self) -> usize {
        self.class
    }

    pub fn inner(&self) -> &M {
        &self.inner
    }

    /// `(margin, strongest competitor)`.
    pub fn margin(&self, x: &[f64]) -> (f64, usize) {
        let scores = self.inner.predict_all(x);
        let mut rival = usize::MAX;
        for (j, s) in scores.iter().enumerate() {
            if j != self.class && (rival == usize::MAX || *s > scores[rival]) {
                rival = j;
            }
        }
        (scores[self.class] - scores[rival], rival)
    }
}

impl<M: MulticlassModel> BlackBoxModel for OneVsAll<M> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn predict(&self, x: &[f64]) -> f64 {
        sigmoid(self.margin(x).0)
    }

    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        let (margin, rival) = self.margin(x);
        let mut seed = vec![0.0; self.inner.num_classes()];
        seed[self.class] = 1.0;
        seed[rival] = -1.0;
        let p = sigmoid(margin);
        let scale = p * (1.0 - p);
        self.inner
            .logit_vjp(x, &seed)
            .map(|g| g.into_iter().map(|v| v * scale).collect())
    }

    fn label(&self) -> String {
        format!("{} [class {} vs rest]", self.inner.label(), self.class)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(Vec<f64>);

    impl MulticlassModel for Fixed {
        fn dim(&self) -> usize {
            1
        }
        fn num_classes(&self) -> usize {
            self.0.len()
        }
        fn predict_all(&self, _x: &[f64]) -> Vec<f64> {
            self.0.clone()
        }
        fn label(&self) -> String {
            "fixed".into()
        }
    }

    struct Symmetric;

    impl MulticlassModel for Symmetric {
        fn dim(&self) -> usize {
            1
        }
        fn num_classes(&self) -> usize {
            2
        }
        fn predict_all(&self, x: &[f64]) -> Vec<f64> {
            vec![x[0], -x[0]]
        }
        fn label(&self) -> String {
            "sym".into()
        }
    }

    #[test]
    fn two_class_tie_is_half() {
        let m = one_vs_all(Symmetric, 0).unwrap();
        assert_eq!(m.predict(&[0.0]), 0.5);
    }

    #[test]
    fn three_class_margin() {
        let m = one_vs_all(Fixed(vec![2.0, 1.0, 0.0]), 0).unwrap();
        assert!((m.predict(&[0.0]) - 0.731_058_578_630_004_9).abs() < 1e-15);
    }

    #[test]
    fn half_iff_tied_with_best_rival() {
        for (scores, class, tied) in [
            (vec![1.0, 1.0, 0.0], 0, true),
            (vec![0.3, 1.0, 1.0], 2, true),
            (vec![0.3, 1.0, 0.9], 2, false),
            (vec![0.5, 0.2, 0.5], 1, false),
        ] {
            let m = one_vs_all(Fixed(scores), class).unwrap();
            assert_eq!((m.predict(&[0.0]) - 0.5).abs() < 1e-12, tied);
        }
    }

    #[test]
    fn class_out_of_range() {
        assert!(one_vs_all(Fixed(vec![0.0, 1.0]), 2).is_err());
    }

    #[test]
    fn argmax_ties_lowest() {
        assert_eq!(Fixed(vec![1.0, 3.0, 3.0]).argmax(&[0.0]), 1);
    }
}
