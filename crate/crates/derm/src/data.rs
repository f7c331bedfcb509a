//! Dataset ingestion, preprocessing, splitting, and synthetic generators.
//!
//! CSV schema: UTF-8, comma separated, optional header row, numeric cells
//! with a `.` decimal point, and an optional 0/1 label column (named
//! `label` by convention, or selected by index). Labels are only ever used
//! for evaluation and weight tracing, never for training.

use std::path::Path;

use crate::aggregation::LossVector;
use crate::error::{Error, Result};
use crate::numeric::{Matrix, Rng};

/// A feature matrix with optional binary labels (0 = normal, 1 = anomaly).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Option<Vec<u8>>,
    pub name: String,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Option<Vec<u8>>, name: impl Into<String>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != features.rows() {
                return Err(Error::Shape(format!(
                    "{} labels for {} rows",
                    l.len(),
                    features.rows()
                )));
            }
            if l.iter().any(|&x| x > 1) {
                return Err(Error::Param("labels must be 0 or 1".into()));
            }
        }
        Ok(Dataset {
            features,
            labels,
            name: name.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn n_anomalies(&self) -> usize {
        self.labels
            .as_ref()
            .map_or(0, |l| l.iter().filter(|&&x| x == 1).count())
    }

    fn take_rows(&self, idx: &[usize]) -> Result<Dataset> {
        let features = self.features.select_rows(idx)?;
        let labels = self
            .labels
            .as_ref()
            .map(|l| idx.iter().map(|&i| l[i]).collect());
        Dataset::new(features, labels, self.name.clone())
    }
}

/// How to find the label column in a CSV file.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum LabelColumn {
    /// Use a column literally named `label` if the header has one.
    #[default]
    Auto,
    /// Treat every column as a feature.
    None,
    /// Column with this header name (requires a header row).
    Name(String),
    /// Zero-based column index.
    Index(usize),
}

/// Load a rectangular numeric CSV. Parse failures report 1-based line
/// numbers (the header counts as line 1).
pub fn load_csv(path: &Path, has_header: bool, label: &LabelColumn) -> Result<Dataset> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)?;

    let mut records = reader.records();
    let mut first_data_line = 1usize;
    let header: Option<Vec<String>> = if has_header {
        first_data_line = 2;
        match records.next() {
            Some(rec) => Some(rec?.iter().map(|s| s.trim().to_string()).collect()),
            None => None,
        }
    } else {
        None
    };

    let label_idx: Option<usize> = match label {
        LabelColumn::None => None,
        LabelColumn::Index(i) => Some(*i),
        LabelColumn::Name(name) => {
            let header = header.as_ref().ok_or_else(|| {
                Error::Param(format!("label column '{name}' needs a header row"))
            })?;
            Some(header.iter().position(|h| h == name).ok_or_else(|| {
                Error::Param(format!("no column named '{name}' in {display}"))
            })?)
        }
        LabelColumn::Auto => header
            .as_ref()
            .and_then(|h| h.iter().position(|c| c == "label")),
    };

    let mut width: Option<usize> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<u8> = Vec::new();
    for (i, rec) in records.enumerate() {
        let rec = rec?;
        let line = first_data_line + i;
        let w = *width.get_or_insert(rec.len());
        if rec.len() != w {
            return Err(Error::Parse {
                path: display,
                line,
                msg: format!("ragged row: {} cells, expected {w}", rec.len()),
            });
        }
        if let Some(li) = label_idx {
            if li >= w {
                return Err(Error::Param(format!(
                    "label column index {li} out of range for {w} columns"
                )));
            }
        }
        let mut feats = Vec::with_capacity(w);
        for (c, cell) in rec.iter().enumerate() {
            let value: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                path: display.clone(),
                line,
                msg: format!("non-numeric cell '{}' in column {c}", cell.trim()),
            })?;
            if Some(c) == label_idx {
                if value == 0.0 {
                    labels.push(0);
                } else if value == 1.0 {
                    labels.push(1);
                } else {
                    return Err(Error::Parse {
                        path: display.clone(),
                        line,
                        msg: format!("label '{value}' is not 0 or 1"),
                    });
                }
            } else {
                if !value.is_finite() {
                    return Err(Error::Parse {
                        path: display.clone(),
                        line,
                        msg: format!("non-finite cell in column {c}"),
                    });
                }
                feats.push(value);
            }
        }
        rows.push(feats);
    }

    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| display.clone());
    let features = Matrix::from_rows(&rows)?;
    Dataset::new(features, label_idx.map(|_| labels), name)
}

/// Write a dataset back out with a `f0..f{d-1}[,label]` header.
pub fn write_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..ds.dim()).map(|c| format!("f{c}")).collect();
    if ds.labels.is_some() {
        header.push("label".into());
    }
    w.write_record(&header)?;
    for r in 0..ds.len() {
        let mut rec: Vec<String> = ds.features.row(r).iter().map(|v| v.to_string()).collect();
        if let Some(l) = &ds.labels {
            rec.push(l[r].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Random disjoint, exhaustive split; labels travel with their rows.
pub fn split(ds: &Dataset, train_fraction: f64, rng: &mut Rng) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Param(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let n = ds.len();
    let mut idx: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut idx);
    let n_train = ((n as f64) * train_fraction).round() as usize;
    let n_train = n_train.min(n);
    let train = ds.take_rows(&idx[..n_train])?;
    let test = ds.take_rows(&idx[n_train..])?;
    Ok((train, test))
}

/// Per-feature z-score parameters fitted on training data. Features that
/// are constant on the training split keep `std = 1`, so they transform
/// to plain mean subtraction (zero on the training data itself).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn fit(train: &Dataset) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Shape("cannot fit scaler on empty dataset".into()));
        }
        let mean = train.features.column_mean()?;
        let std = train
            .features
            .column_std()?
            .into_iter()
            .map(|s| if s > 0.0 { s } else { 1.0 })
            .collect();
        Ok(Scaler { mean, std })
    }

    pub fn transform(&self, ds: &Dataset) -> Result<Dataset> {
        if ds.dim() != self.mean.len() {
            return Err(Error::Shape(format!(
                "scaler fitted on {} features, dataset has {}",
                self.mean.len(),
                ds.dim()
            )));
        }
        let mut data = Vec::with_capacity(ds.len() * ds.dim());
        for r in 0..ds.len() {
            for (c, &x) in ds.features.row(r).iter().enumerate() {
                data.push((x - self.mean[c]) / self.std[c]);
            }
        }
        Dataset::new(
            Matrix::from_vec(ds.len(), ds.dim(), data)?,
            ds.labels.clone(),
            ds.name.clone(),
        )
    }
}

/// Fit on `train`, transform `train` and every dataset in `others`.
pub fn standardize(train: &Dataset, others: &[&Dataset]) -> Result<(Scaler, Dataset, Vec<Dataset>)> {
    let scaler = Scaler::fit(train)?;
    let train_t = scaler.transform(train)?;
    let others_t = others
        .iter()
        .map(|ds| scaler.transform(ds))
        .collect::<Result<Vec<_>>>()?;
    Ok((scaler, train_t, others_t))
}

/// The synthetic reconstruction-loss set used for weight comparisons:
/// 200 normal losses from N(0.03, 0.002^2) followed by 10 anomalous
/// losses from N(0.06, 0.005^2), floored at 1e-6 so every entry is
/// strictly positive. The second Gaussian parameter is a standard
/// deviation; reading it as a variance would put most draws below zero.
pub fn synth_loss_set(rng: &mut Rng) -> (LossVector, Vec<u8>) {
    let mut values = Vec::with_capacity(210);
    let mut labels = Vec::with_capacity(210);
    for _ in 0..200 {
        values.push(rng.normal(0.03, 0.002).expect("valid std").max(1e-6));
        labels.push(0u8);
    }
    for _ in 0..10 {
        values.push(rng.normal(0.06, 0.005).expect("valid std").max(1e-6));
        labels.push(1u8);
    }
    let losses = LossVector::new(values).expect("floored losses are positive");
    (losses, labels)
}

/// Labeled synthetic anomaly-detection dataset: normal rows come from two
/// Gaussian clusters, anomalies are sampled uniformly from a hyper-box
/// that encloses the clusters, inflated by `separation`.
pub fn synth_anomaly_dataset(
    n_normal: usize,
    n_anomaly: usize,
    d: usize,
    separation: f64,
    rng: &mut Rng,
) -> Result<Dataset> {
    if d == 0 {
        return Err(Error::Param("need at least one feature".into()));
    }
    if !separation.is_finite() || separation <= 0.0 {
        return Err(Error::Param(format!(
            "separation must be > 0, got {separation}"
        )));
    }
    const CENTER: f64 = 1.5;
    const CLUSTER_STD: f64 = 0.5;
    // Clusters live within roughly |x| <= CENTER + 3*std per coordinate.
    let half_box = (CENTER + 3.0 * CLUSTER_STD) * separation;

    let n = n_normal + n_anomaly;
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n_normal {
        let sign = if rng.below(2) == 0 { -1.0 } else { 1.0 };
        for _ in 0..d {
            data.push(rng.normal(sign * CENTER, CLUSTER_STD)?);
        }
        labels.push(0u8);
    }
    for _ in 0..n_anomaly {
        for _ in 0..d {
            data.push(rng.range(-half_box, half_box));
        }
        labels.push(1u8);
    }
    Dataset::new(Matrix::from_vec(n, d, data)?, Some(labels), "synthetic")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn load_csv_with_header_and_labels() {
        let f = write_tmp("a,b,label\n1.0,2.0,0\n3.0,4.0,1\n5.5,6.5,0\n");
        let ds = load_csv(f.path(), true, &LabelColumn::Auto).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.labels, Some(vec![0, 1, 0]));
        assert_eq!(ds.features.row(1), &[3.0, 4.0]);
    }

    #[test]
    fn load_csv_without_label_column() {
        let f = write_tmp("x,y\n1,2\n3,4\n");
        let ds = load_csv(f.path(), true, &LabelColumn::Auto).unwrap();
        assert_eq!(ds.labels, None);
        assert_eq!(ds.len(), 2);
    }

    #[test]
    fn load_csv_label_by_index_without_header() {
        let f = write_tmp("1,2,1\n3,4,0\n");
        let ds = load_csv(f.path(), false, &LabelColumn::Index(2)).unwrap();
        assert_eq!(ds.labels, Some(vec![1, 0]));
        assert_eq!(ds.dim(), 2);
    }

    #[test]
    fn load_csv_errors_carry_line_numbers() {
        let f = write_tmp("a,b\n1,2\n3\n");
        match load_csv(f.path(), true, &LabelColumn::Auto) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected ragged-row parse error, got {other:?}"),
        }

        let f = write_tmp("a,b\n1,oops\n");
        match load_csv(f.path(), true, &LabelColumn::Auto) {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("oops"));
            }
            other => panic!("expected numeric parse error, got {other:?}"),
        }

        let f = write_tmp("a,label\n1,2\n");
        match load_csv(f.path(), true, &LabelColumn::Auto) {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("not 0 or 1"));
            }
            other => panic!("expected label parse error, got {other:?}"),
        }
    }

    #[test]
    fn csv_round_trip_preserves_values() {
        let mut rng = Rng::new(50);
        let ds = synth_anomaly_dataset(20, 5, 4, 2.0, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.csv");
        write_csv(&ds, &path).unwrap();
        let back = load_csv(&path, true, &LabelColumn::Auto).unwrap();
        assert_eq!(back.features, ds.features);
        assert_eq!(back.labels, ds.labels);
    }

    #[test]
    fn split_sizes_and_partition() {
        let ds = Dataset::new(
            Matrix::from_vec(10, 1, (0..10).map(|i| i as f64).collect()).unwrap(),
            Some(vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1]),
            "ten",
        )
        .unwrap();
        let mut rng = Rng::new(3);
        let (train, test) = split(&ds, 0.8, &mut rng).unwrap();
        assert_eq!(train.len(), 8);
        assert_eq!(test.len(), 2);

        let mut all: Vec<i64> = train
            .features
            .data()
            .iter()
            .chain(test.features.data())
            .map(|&v| v as i64)
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<i64>>());

        assert!(matches!(split(&ds, 0.0, &mut rng), Err(Error::Param(_))));
        assert!(matches!(split(&ds, 1.0, &mut rng), Err(Error::Param(_))));
    }

    #[test]
    fn split_keeps_label_proportions_roughly() {
        // chi-square over the 2x2 split-by-class table; df=1, and 15.1
        // is far beyond the 99.99% quantile.
        let mut rng = Rng::new(8);
        let ds = synth_anomaly_dataset(9000, 1000, 2, 2.0, &mut rng).unwrap();
        let (train, test) = split(&ds, 0.8, &mut rng).unwrap();
        let observed = [
            (train.len() - train.n_anomalies()) as f64,
            train.n_anomalies() as f64,
            (test.len() - test.n_anomalies()) as f64,
            test.n_anomalies() as f64,
        ];
        let n = ds.len() as f64;
        let anom = ds.n_anomalies() as f64;
        let expected = [
            train.len() as f64 * (n - anom) / n,
            train.len() as f64 * anom / n,
            test.len() as f64 * (n - anom) / n,
            test.len() as f64 * anom / n,
        ];
        let chi2: f64 = observed
            .iter()
            .zip(&expected)
            .map(|(o, e)| (o - e) * (o - e) / e)
            .sum();
        assert!(chi2 < 15.1, "chi-square {chi2}");
    }

    #[test]
    fn standardize_gives_zero_mean_unit_std() {
        let mut rng = Rng::new(4);
        let ds = synth_anomaly_dataset(500, 0, 3, 2.0, &mut rng).unwrap();
        let (_, train_t, _) = standardize(&ds, &[]).unwrap();
        for (m, s) in train_t
            .features
            .column_mean()
            .unwrap()
            .iter()
            .zip(train_t.features.column_std().unwrap().iter())
        {
            assert!(m.abs() < 1e-9);
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn standardize_handles_constant_feature() {
        let ds = Dataset::new(
            Matrix::from_rows(&[vec![5.0, 1.0], vec![5.0, 3.0]]).unwrap(),
            None,
            "const",
        )
        .unwrap();
        let (scaler, train_t, _) = standardize(&ds, &[]).unwrap();
        assert_eq!(train_t.features.get(0, 0), 0.0);
        assert_eq!(train_t.features.get(1, 0), 0.0);
        assert_eq!(scaler.std[0], 1.0);
    }

    #[test]
    fn test_set_uses_train_statistics() {
        // train: feature means [2, 10], population stds [1, 2]
        let train = Dataset::new(
            Matrix::from_rows(&[vec![1.0, 8.0], vec![3.0, 12.0]]).unwrap(),
            None,
            "train",
        )
        .unwrap();
        let test = Dataset::new(
            Matrix::from_rows(&[vec![2.0, 14.0]]).unwrap(),
            None,
            "test",
        )
        .unwrap();
        let (_, _, others) = standardize(&train, &[&test]).unwrap();
        // hand-computed: (2-2)/1 = 0, (14-10)/2 = 2
        assert_eq!(others[0].features.row(0), &[0.0, 2.0]);
    }

    #[test]
    fn loss_set_shape_and_positivity() {
        let mut rng = Rng::new(12);
        let (losses, labels) = synth_loss_set(&mut rng);
        assert_eq!(losses.len(), 210);
        assert_eq!(labels.len(), 210);
        assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 10);
        assert!(labels[..200].iter().all(|&l| l == 0));
        assert!(losses.values().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn loss_set_means_within_three_standard_errors() {
        let mut rng = Rng::new(99);
        let (losses, labels) = synth_loss_set(&mut rng);
        let normal_mean: f64 = losses.values()[..200].iter().sum::<f64>() / 200.0;
        let anom_mean: f64 = losses.values()[200..].iter().sum::<f64>() / 10.0;
        assert_eq!(labels[200], 1);
        assert!((normal_mean - 0.03).abs() < 3.0 * 0.002 / (200f64).sqrt());
        assert!((anom_mean - 0.06).abs() < 3.0 * 0.005 / (10f64).sqrt());
    }

    #[test]
    fn loss_set_anomaly_mean_exceeds_normal_mean_across_seeds() {
        for seed in 0..100 {
            let mut rng = Rng::new(seed);
            let (losses, _) = synth_loss_set(&mut rng);
            let normal: f64 = losses.values()[..200].iter().sum::<f64>() / 200.0;
            let anom: f64 = losses.values()[200..].iter().sum::<f64>() / 10.0;
            assert!(anom > normal, "seed {seed}: {anom} <= {normal}");
        }
    }

    #[test]
    fn synth_dataset_labels_and_determinism() {
        let mut a = Rng::new(7);
        let mut b = Rng::new(7);
        let da = synth_anomaly_dataset(30, 10, 5, 3.0, &mut a).unwrap();
        let db = synth_anomaly_dataset(30, 10, 5, 3.0, &mut b).unwrap();
        assert_eq!(da, db);
        assert_eq!(da.len(), 40);
        assert_eq!(da.n_anomalies(), 10);

        let none = synth_anomaly_dataset(10, 0, 2, 2.0, &mut a).unwrap();
        assert_eq!(none.n_anomalies(), 0);
    }

    #[test]
    fn nearest_centroid_oracle_separates_wide_boxes() {
        // With a wide enclosing box, distance-to-nearest-cluster-center
        // is already a strong anomaly score.
        let mut rng = Rng::new(15);
        let d = 8;
        let ds = synth_anomaly_dataset(400, 40, d, 5.0, &mut rng).unwrap();
        let centers = [vec![-1.5; 8], vec![1.5; 8]];
        let scores: Vec<f64> = (0..ds.len())
            .map(|r| {
                centers
                    .iter()
                    .map(|c| {
                        ds.features
                            .row(r)
                            .iter()
                            .zip(c)
                            .map(|(x, m)| (x - m) * (x - m))
                            .sum::<f64>()
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let auc = crate::metrics::auc(&scores, ds.labels.as_ref().unwrap()).unwrap();
        assert!(auc > 0.95, "nearest-centroid auc {auc}");
    }
}
