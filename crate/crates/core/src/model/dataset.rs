use rand::seq::SliceRandom;

use super::ModelError;
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Classes { labels: Vec<usize>, class_count: usize },
    Real(Vec<f64>),
}

/// Row-major feature matrix plus class labels or real targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    n_features: usize,
    features: Vec<f64>,
    targets: Targets,
}

impl Dataset {
    pub fn classification(
        name: impl Into<String>,
        n_features: usize,
        features: Vec<f64>,
        labels: Vec<usize>,
        class_count: usize,
    ) -> Result<Self, ModelError> {
        if class_count < 2 {
            return Err(ModelError::InvalidDataset(format!(
                "classification needs at least 2 classes, got {class_count}"
            )));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= class_count) {
            return Err(ModelError::InvalidDataset(format!(
                "label {l} at row {i} is not below class count {class_count}"
            )));
        }
        Self::build(
            name.into(),
            n_features,
            features,
            labels.len(),
            Targets::Classes { labels, class_count },
        )
    }

    pub fn regression(
        name: impl Into<String>,
        n_features: usize,
        features: Vec<f64>,
        targets: Vec<f64>,
    ) -> Result<Self, ModelError> {
        if targets.iter().any(|t| !t.is_finite()) {
            return Err(ModelError::InvalidDataset("non-finite regression target".into()));
        }
        Self::build(name.into(), n_features, features, targets.len(), Targets::Real(targets))
    }

    fn build(
        name: String,
        n_features: usize,
        features: Vec<f64>,
        n: usize,
        targets: Targets,
    ) -> Result<Self, ModelError> {
        if n == 0 {
            return Err(ModelError::InvalidDataset("dataset has no rows".into()));
        }
        if n_features == 0 {
            return Err(ModelError::InvalidDataset("dataset has no features".into()));
        }
        if features.len() != n * n_features {
            return Err(ModelError::InvalidDataset(format!(
                "feature buffer has {} values, expected {n} rows x {n_features} features",
                features.len()
            )));
        }
        if let Some(pos) = features.iter().position(|x| !x.is_finite()) {
            return Err(ModelError::InvalidDataset(format!(
                "non-finite feature at row {}",
                pos / n_features
            )));
        }
        Ok(Self {
            name,
            n_features,
            features,
            targets,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.features.len() / self.n_features
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn targets(&self) -> &Targets {
        &self.targets
    }

    /// Number of classes; 1 for regression data.
    pub fn class_count(&self) -> usize {
        match &self.targets {
            Targets::Classes { class_count, .. } => *class_count,
            Targets::Real(_) => 1,
        }
    }

    pub fn labels(&self) -> Option<&[usize]> {
        match &self.targets {
            Targets::Classes { labels, .. } => Some(labels),
            Targets::Real(_) => None,
        }
    }

    pub fn all_indices(&self) -> Vec<usize> {
        (0..self.len()).collect()
    }

    pub fn indices_of_class(&self, class: usize) -> Vec<usize> {
        match self.labels() {
            Some(labels) => labels
                .iter()
                .enumerate()
                .filter(|(_, &l)| l == class)
                .map(|(i, _)| i)
                .collect(),
            None => Vec::new(),
        }
    }

    /// Copies the listed rows into a new dataset, keeping the class count.
    pub fn select(&self, indices: &[usize], name: impl Into<String>) -> Result<Self, ModelError> {
        check_indices(indices, self.len())?;
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        let targets = match &self.targets {
            Targets::Classes { labels, class_count } => Targets::Classes {
                labels: indices.iter().map(|&i| labels[i]).collect(),
                class_count: *class_count,
            },
            Targets::Real(t) => Targets::Real(indices.iter().map(|&i| t[i]).collect()),
        };
        Self::build(name.into(), self.n_features, features, indices.len(), targets)
    }

    /// Same data with some labels replaced.
    pub fn with_relabeled(&self, relabel: &[(usize, usize)]) -> Result<Self, ModelError> {
        let Targets::Classes { labels, class_count } = &self.targets else {
            return Err(ModelError::WrongTargetKind("relabeling needs class labels"));
        };
        let mut labels = labels.clone();
        for &(i, l) in relabel {
            if i >= labels.len() || l >= *class_count {
                return Err(ModelError::InvalidIndex { index: i, len: labels.len() });
            }
            labels[i] = l;
        }
        Ok(Self {
            name: self.name.clone(),
            n_features: self.n_features,
            features: self.features.clone(),
            targets: Targets::Classes {
                labels,
                class_count: *class_count,
            },
        })
    }

    /// Deterministic stratified holdout: returns `(train, test)`.
    pub fn train_test_split(&self, test_fraction: f64, seed: u64) -> Result<(Self, Self), ModelError> {
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(ModelError::InvalidDataset(format!(
                "test fraction {test_fraction} outside [0, 1)"
            )));
        }
        let mut rng = seed::rng(seed::derive(seed, "train-test-split"));
        let groups: Vec<Vec<usize>> = match self.labels() {
            Some(_) => (0..self.class_count()).map(|c| self.indices_of_class(c)).collect(),
            None => vec![self.all_indices()],
        };
        let mut train = Vec::new();
        let mut test = Vec::new();
        for mut g in groups {
            g.shuffle(&mut rng);
            let n_test = (g.len() as f64 * test_fraction).round() as usize;
            test.extend_from_slice(&g[..n_test]);
            train.extend_from_slice(&g[n_test..]);
        }
        train.sort_unstable();
        test.sort_unstable();
        if test.is_empty() || train.is_empty() {
            return Err(ModelError::InvalidDataset("train/test split left an empty side".into()));
        }
        Ok((
            self.select(&train, format!("{}-train", self.name))?,
            self.select(&test, format!("{}-test", self.name))?,
        ))
    }
}

pub(crate) fn check_indices(indices: &[usize], len: usize) -> Result<(), ModelError> {
    if let Some(&bad) = indices.iter().find(|&&i| i >= len) {
        return Err(ModelError::InvalidIndex { index: bad, len });
    }
    Ok(())
}

/// Disjoint partition of a dataset into erased and retained rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    erased: Vec<usize>,
    retained: Vec<usize>,
}

impl DatasetSplit {
    pub fn erased(&self) -> &[usize] {
        &self.erased
    }

    pub fn retained(&self) -> &[usize] {
        &self.retained
    }

    pub fn n(&self) -> usize {
        self.erased.len() + self.retained.len()
    }

    pub fn n_erased(&self) -> usize {
        self.erased.len()
    }

    pub fn n_retained(&self) -> usize {
        self.retained.len()
    }
}

/// Partitions `data` so that `erased_indices` form the erased set.
pub fn split(data: &Dataset, erased_indices: &[usize]) -> Result<DatasetSplit, ModelError> {
    let n = data.len();
    check_indices(erased_indices, n)?;
    let mut erased = erased_indices.to_vec();
    erased.sort_unstable();
    if let Some(w) = erased.windows(2).find(|w| w[0] == w[1]) {
        return Err(ModelError::DuplicateIndex(w[0]));
    }
    let mut is_erased = vec![false; n];
    for &i in &erased {
        is_erased[i] = true;
    }
    let retained = (0..n).filter(|&i| !is_erased[i]).collect();
    Ok(DatasetSplit { erased, retained })
}

/// Erases every sample of `class`.
pub fn split_class(data: &Dataset, class: usize) -> Result<DatasetSplit, ModelError> {
    if data.labels().is_none() {
        return Err(ModelError::WrongTargetKind("class erasure needs class labels"));
    }
    if class >= data.class_count() {
        return Err(ModelError::InvalidIndex {
            index: class,
            len: data.class_count(),
        });
    }
    split(data, &data.indices_of_class(class))
}

/// Erases `⌊fraction · n⌋` rows chosen uniformly at random.
pub fn split_fraction(data: &Dataset, fraction: f64, seed: u64) -> Result<DatasetSplit, ModelError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(ModelError::InvalidDataset(format!(
            "erase fraction {fraction} outside (0, 1]"
        )));
    }
    let n = data.len();
    let n_e = (fraction * n as f64).floor() as usize;
    let mut idx = data.all_indices();
    idx.shuffle(&mut seed::rng(seed::derive(seed, "erase-fraction")));
    split(data, &idx[..n_e])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n_per_class: usize, classes: usize) -> Dataset {
        let n = n_per_class * classes;
        let features = (0..n).map(|i| i as f64).collect();
        let labels = (0..n).map(|i| i % classes).collect();
        Dataset::classification("toy", 1, features, labels, classes).unwrap()
    }

    #[test]
    fn rejects_bad_datasets() {
        assert!(Dataset::classification("x", 1, vec![1.0], vec![3], 3).is_err());
        assert!(Dataset::classification("x", 1, vec![f64::NAN], vec![0], 2).is_err());
        assert!(Dataset::classification("x", 2, vec![1.0], vec![0], 2).is_err());
        assert!(Dataset::classification("x", 1, vec![], vec![], 2).is_err());
        assert!(Dataset::regression("x", 1, vec![1.0], vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn empty_erasure() {
        let data = toy(5, 2);
        let s = split(&data, &[]).unwrap();
        assert_eq!(s.n_erased(), 0);
        assert_eq!(s.retained(), data.all_indices().as_slice());
        assert_eq!(s.n(), 10);
    }

    #[test]
    fn class_erasure_scans_labels() {
        let data = toy(7, 3);
        let s = split_class(&data, 0).unwrap();
        let labels = data.labels().unwrap();
        assert!(s.erased().iter().all(|&i| labels[i] == 0));
        assert!(s.retained().iter().all(|&i| labels[i] != 0));
        assert_eq!(s.n_erased(), 7);
    }

    #[test]
    fn fraction_erasure_size() {
        let data = toy(25, 2);
        let s = split_fraction(&data, 0.8, 1).unwrap();
        assert_eq!(s.n_erased(), 40);
        assert_eq!(s.n_retained(), 10);
        let data = toy(11, 3);
        assert_eq!(split_fraction(&data, 0.8, 1).unwrap().n_erased(), (0.8 * 33.0f64).floor() as usize);
        assert!(split_fraction(&data, 0.0, 1).is_err());
    }

    #[test]
    fn split_rejects_bad_indices() {
        let data = toy(2, 2);
        assert!(matches!(split(&data, &[4]), Err(ModelError::InvalidIndex { index: 4, len: 4 })));
        assert!(matches!(split(&data, &[1, 1]), Err(ModelError::DuplicateIndex(1))));
    }

    #[test]
    fn split_is_partition() {
        let data = toy(10, 2);
        let s = split(&data, &[7, 3, 11]).unwrap();
        assert_eq!(s.erased(), &[3, 7, 11]);
        let mut all: Vec<usize> = s.erased().iter().chain(s.retained()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, data.all_indices());
    }

    #[test]
    fn holdout_is_stratified_and_deterministic() {
        let data = toy(10, 3);
        let (tr, te) = data.train_test_split(0.2, 4).unwrap();
        assert_eq!(te.len(), 6);
        assert_eq!(tr.len(), 24);
        for c in 0..3 {
            assert_eq!(te.indices_of_class(c).len(), 2);
        }
        assert_eq!(data.train_test_split(0.2, 4).unwrap().1, te);
    }
}
