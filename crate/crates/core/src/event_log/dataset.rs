use crate::scalar::Scalar;

/// Finite multiset of numeric values collected from traces.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset<T> {
    values: Vec<T>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(values: Vec<T>) -> Self {
        Dataset { values }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> Option<T> {
        self.values.iter().copied().reduce(T::min)
    }

    pub fn max(&self) -> Option<T> {
        self.values.iter().copied().reduce(T::max)
    }

    pub fn sum(&self) -> T {
        self.values.iter().copied().fold(T::zero(), |a, b| a + b)
    }

    /// Ascending values with duplicates removed.
    pub fn sorted_distinct(&self) -> Vec<T> {
        let mut sorted = self.values.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("dataset values are comparable"));
        sorted.dedup();
        sorted
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> Dataset<U> {
        Dataset::new(self.values.iter().copied().map(f).collect())
    }
}

impl<T: Scalar> From<Vec<T>> for Dataset<T> {
    fn from(values: Vec<T>) -> Self {
        Dataset::new(values)
    }
}

impl<T: Scalar> FromIterator<T> for Dataset<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        Dataset::new(iter.into_iter().collect())
    }
}
