//! Repeatable experiment pipelines: split → standardize → train → score
//! → AUC, fanned out over seeds and tilt grids.

use rayon::prelude::*;
use serde::Serialize;

use crate::aggregation::{AggKind, Aggregator, LossVector};
use crate::checkpoint::Checkpoint;
use crate::collaborative::{score, train, TrainConfig, WeightTrace};
use crate::data::{split, standardize, Dataset};
use crate::error::{Error, Result};
use crate::metrics::{auc, summarize_runs, EvalReport};
use crate::numeric::{derive_seed, Rng};

/// Seed streams, so the same user seed drives unrelated generators.
pub const STREAM_SPLIT: u64 = 1;
pub const STREAM_DATASET: u64 = 2;

/// Whether every repeat re-randomizes the train/test split or all
/// repeats share one split and differ only in initialization/shuffling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    PerSeed,
    Fixed,
}

#[derive(Debug, Clone)]
pub struct ExperimentOpts {
    pub aggregator: Aggregator,
    pub k: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub repeat: usize,
    pub seed: u64,
    pub split_fraction: f64,
    pub standardize: bool,
    pub split_mode: SplitMode,
    pub hidden: Option<Vec<usize>>,
}

impl ExperimentOpts {
    pub fn new(aggregator: Aggregator) -> Self {
        ExperimentOpts {
            aggregator,
            k: 2,
            lr: 0.001,
            epochs: 100,
            batch: 128,
            repeat: 1,
            seed: 0,
            split_fraction: 0.8,
            standardize: true,
            split_mode: SplitMode::PerSeed,
            hidden: None,
        }
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.repeat as u64)
            .map(|i| self.seed.wrapping_add(i))
            .collect()
    }

    fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            aggregator: self.aggregator,
            lr: self.lr,
            max_epochs: self.epochs,
            batch_size: self.batch,
            k: self.k,
            seed,
            trace_weights: false,
            hidden: self.hidden.clone(),
        }
    }
}

/// Result of a repeated run: the AUC summary plus the first run's trained
/// model (for optional persistence).
pub struct RunOutcome {
    pub report: EvalReport,
    pub first_checkpoint: Option<Checkpoint>,
}

/// Execute `repeat` independent runs and summarize their AUCs. Labels are
/// required (AUC is label-based); training itself never sees them.
pub fn run_experiment(dataset: &Dataset, opts: &ExperimentOpts) -> Result<RunOutcome> {
    if opts.repeat == 0 {
        return Err(Error::Param("repeat must be >= 1".into()));
    }
    if dataset.labels.is_none() {
        return Err(Error::UndefinedMetric(
            "AUC evaluation needs a labeled dataset".into(),
        ));
    }

    let fixed_split = match opts.split_mode {
        SplitMode::Fixed => {
            let mut rng = Rng::new(derive_seed(opts.seed, STREAM_SPLIT));
            Some(split(dataset, opts.split_fraction, &mut rng)?)
        }
        SplitMode::PerSeed => None,
    };

    let seeds = opts.seed_list();
    let runs: Vec<(f64, usize, usize, Option<Checkpoint>)> = seeds
        .par_iter()
        .enumerate()
        .map(|(i, &run_seed)| -> Result<_> {
            let (train_set, test_set) = match &fixed_split {
                Some((tr, te)) => (tr.clone(), te.clone()),
                None => {
                    let mut rng = Rng::new(derive_seed(run_seed, STREAM_SPLIT));
                    split(dataset, opts.split_fraction, &mut rng)?
                }
            };
            let (scaler, train_set, test_set) = if opts.standardize {
                let (s, tr, mut te) = standardize(&train_set, &[&test_set])?;
                (Some(s), tr, te.pop().expect("one transformed test set"))
            } else {
                (None, train_set, test_set)
            };
            let cfg = opts.train_config(run_seed);
            let (model, _) = train(&train_set, &cfg)?;
            let scores = score(&model, &test_set)?;
            let labels = test_set.labels.as_ref().expect("labels checked above");
            let run_auc = auc(&scores, labels)?;
            let checkpoint = (i == 0).then(|| Checkpoint {
                model,
                config: cfg,
                scaler,
            });
            Ok((run_auc, test_set.len(), test_set.n_anomalies(), checkpoint))
        })
        .collect::<Result<Vec<_>>>()?;

    let aucs: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let mut report = summarize_runs(&aucs)?;
    report.n_test = runs[0].1;
    report.n_anomalies = runs[0].2;
    let first_checkpoint = runs.into_iter().next().and_then(|r| r.3);
    Ok(RunOutcome {
        report,
        first_checkpoint,
    })
}

/// One grid point of a tilt sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub t: f64,
    pub auc_mean: f64,
    pub auc_std: f64,
}

/// Log-spaced grid between `t_min` and `t_max` with exact endpoints.
/// Both must be non-zero and share a sign (the grid never crosses 0).
pub fn tilt_grid(t_min: f64, t_max: f64, steps: usize) -> Result<Vec<f64>> {
    if steps < 2 {
        return Err(Error::Param("sweep needs at least 2 grid points".into()));
    }
    if !(t_min.is_finite() && t_max.is_finite()) || t_min == 0.0 || t_max == 0.0 {
        return Err(Error::Param("sweep endpoints must be finite and non-zero".into()));
    }
    if t_min.signum() != t_max.signum() {
        return Err(Error::Param(format!(
            "sweep range [{t_min}, {t_max}] crosses zero"
        )));
    }
    if t_min >= t_max {
        return Err(Error::Param(format!(
            "sweep range [{t_min}, {t_max}] is not increasing"
        )));
    }
    let sign = t_min.signum();
    let (lo, hi) = (t_min.abs().ln(), t_max.abs().ln());
    let mut grid: Vec<f64> = (0..steps)
        .map(|i| {
            let frac = i as f64 / (steps - 1) as f64;
            sign * (lo + frac * (hi - lo)).exp()
        })
        .collect();
    grid[0] = t_min;
    grid[steps - 1] = t_max;
    Ok(grid)
}

/// Run the whole experiment once per grid point. ERM has no tilt and is
/// rejected.
pub fn sweep_t(
    dataset: &Dataset,
    opts: &ExperimentOpts,
    t_min: f64,
    t_max: f64,
    steps: usize,
) -> Result<Vec<SweepPoint>> {
    let kind = opts.aggregator.kind();
    if kind == AggKind::Erm {
        return Err(Error::Param("erm has no tilt to sweep".into()));
    }
    let grid = tilt_grid(t_min, t_max, steps)?;
    grid.into_iter()
        .map(|t| {
            let mut point_opts = opts.clone();
            point_opts.aggregator = Aggregator::new(kind, t)?;
            let outcome = run_experiment(dataset, &point_opts)?;
            Ok(SweepPoint {
                t,
                auc_mean: outcome.report.auc_mean,
                auc_std: outcome.report.auc_std,
            })
        })
        .collect()
}

/// One row of the gradient-weight comparison table: a loss, its label if
/// known, and the N-normalized weights `N * w_i` each scheme assigns.
#[derive(Debug, Clone, Serialize)]
pub struct WeightRow {
    pub index: usize,
    pub loss: f64,
    pub label: Option<u8>,
    pub w_derm_n: f64,
    pub w_term_n: f64,
}

/// Evaluate DERM and TERM gradient weights side by side on one loss set.
pub fn weight_table(
    losses: &LossVector,
    labels: Option<&[u8]>,
    t_derm: f64,
    t_term: f64,
) -> Result<Vec<WeightRow>> {
    if let Some(l) = labels {
        if l.len() != losses.len() {
            return Err(Error::Shape(format!(
                "{} labels for {} losses",
                l.len(),
                losses.len()
            )));
        }
    }
    let derm = Aggregator::derm(t_derm)?;
    let term = Aggregator::term(t_term)?;
    let w_derm = derm.gradient_weights(losses)?;
    let w_term = term.gradient_weights(losses)?;
    let n = losses.len() as f64;
    Ok(losses
        .values()
        .iter()
        .enumerate()
        .map(|(i, &loss)| WeightRow {
            index: i,
            loss,
            label: labels.map(|l| l[i]),
            w_derm_n: n * w_derm.values()[i],
            w_term_n: n * w_term.values()[i],
        })
        .collect())
}

/// Train once with weight tracing on the full (labeled) dataset.
pub fn trace_experiment(dataset: &Dataset, opts: &ExperimentOpts) -> Result<WeightTrace> {
    if dataset.labels.is_none() {
        return Err(Error::UndefinedMetric(
            "weight tracing needs a labeled dataset".into(),
        ));
    }
    let train_set = if opts.standardize {
        let (_, t, _) = standardize(dataset, &[])?;
        t
    } else {
        dataset.clone()
    };
    let mut cfg = opts.train_config(opts.seed);
    cfg.trace_weights = true;
    let (_, trace) = train(&train_set, &cfg)?;
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_anomaly_dataset;

    fn dataset() -> Dataset {
        let mut rng = Rng::new(derive_seed(3, STREAM_DATASET));
        synth_anomaly_dataset(80, 8, 4, 3.0, &mut rng).unwrap()
    }

    fn quick_opts() -> ExperimentOpts {
        let mut opts = ExperimentOpts::new(Aggregator::derm(0.01).unwrap());
        opts.epochs = 3;
        opts.batch = 32;
        opts.repeat = 2;
        opts.seed = 5;
        opts
    }

    #[test]
    fn run_experiment_reports_per_seed_aucs() {
        let ds = dataset();
        let outcome = run_experiment(&ds, &quick_opts()).unwrap();
        assert_eq!(outcome.report.per_run_auc.len(), 2);
        assert!(outcome.report.auc_mean >= 0.0 && outcome.report.auc_mean <= 1.0);
        assert!(outcome.report.n_test > 0);
        assert!(outcome.first_checkpoint.is_some());
        let ckpt = outcome.first_checkpoint.unwrap();
        assert!(ckpt.scaler.is_some());
        assert_eq!(ckpt.config.seed, 5);
    }

    #[test]
    fn run_experiment_is_deterministic() {
        let ds = dataset();
        let opts = quick_opts();
        let a = run_experiment(&ds, &opts).unwrap().report;
        let b = run_experiment(&ds, &opts).unwrap().report;
        assert_eq!(a, b);
    }

    #[test]
    fn fixed_split_mode_shares_the_split() {
        let ds = dataset();
        let mut opts = quick_opts();
        opts.split_mode = SplitMode::Fixed;
        let outcome = run_experiment(&ds, &opts).unwrap();
        assert_eq!(outcome.report.per_run_auc.len(), 2);
    }

    #[test]
    fn unlabeled_dataset_is_rejected() {
        let mut ds = dataset();
        ds.labels = None;
        assert!(matches!(
            run_experiment(&ds, &quick_opts()),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn tilt_grid_endpoints_exact_and_validated() {
        let g = tilt_grid(0.001, 10.0, 10).unwrap();
        assert_eq!(g.len(), 10);
        assert_eq!(g[0], 0.001);
        assert_eq!(g[9], 10.0);
        assert!(g.windows(2).all(|w| w[0] < w[1]));

        let neg = tilt_grid(-1.0, -0.01, 5).unwrap();
        assert_eq!(neg[0], -1.0);
        assert_eq!(neg[4], -0.01);
        assert!(neg.iter().all(|&t| t < 0.0));

        assert!(matches!(tilt_grid(-1.0, 1.0, 5), Err(Error::Param(_))));
        assert!(matches!(tilt_grid(0.0, 1.0, 5), Err(Error::Param(_))));
        assert!(matches!(tilt_grid(2.0, 1.0, 5), Err(Error::Param(_))));
        assert!(matches!(tilt_grid(1.0, 2.0, 1), Err(Error::Param(_))));
    }

    #[test]
    fn sweep_rejects_erm() {
        let ds = dataset();
        let mut opts = quick_opts();
        opts.aggregator = Aggregator::erm();
        assert!(matches!(
            sweep_t(&ds, &opts, 0.01, 1.0, 3),
            Err(Error::Param(_))
        ));
    }

    #[test]
    fn weight_table_normalizes_by_n() {
        let losses = LossVector::new(vec![0.5; 4]).unwrap();
        let rows = weight_table(&losses, None, 0.7, -1.0).unwrap();
        // constant losses: N*w = t for DERM, 1 for TERM
        for row in &rows {
            assert!((row.w_derm_n - 0.7).abs() < 1e-12);
            assert!((row.w_term_n - 1.0).abs() < 1e-12);
            assert_eq!(row.label, None);
        }
    }

    #[test]
    fn trace_experiment_runs_on_labeled_data() {
        let ds = dataset();
        let mut opts = quick_opts();
        opts.epochs = 2;
        let trace = trace_experiment(&ds, &opts).unwrap();
        assert_eq!(trace.records.len(), 2);
    }
}
