//! Timed training runs and the cross-validation / split protocols.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use trm_core::data::EegSegmentSet;
use trm_core::fit::{fit, DataView, EpochRecord, TrainConfig};
use trm_core::hostnet::{build_model, ClassifierModel, HostNetConfig};
use trm_core::split::{make_splits, Split, SplitPlan};
use trm_core::{Montage, Real};

use crate::checkpoint::save_checkpoint;
use crate::error::{Error, Result};
use crate::report::{write_aggregate_csv, write_csv_file, write_summary_csv, SummaryRow, TrainReport};

/// Trains `model` for every configured epoch and times the whole run,
/// including the final test evaluation.
pub fn train_run<T: Real>(
    model: ClassifierModel<T>,
    train: DataView<'_>,
    val: DataView<'_>,
    test: Option<DataView<'_>>,
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<(TrainReport, ClassifierModel<T>)> {
    let start = Instant::now();
    let outcome = fit(model, train, val, test, cfg, on_epoch)?;
    let report = TrainReport {
        epochs: outcome.epochs,
        best_epoch: outcome.best_epoch,
        test_accuracy: outcome.test.map(|e| e.accuracy),
        wall_time_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((report, outcome.best_model))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    /// Four stratified folds rotated as 2 train / 1 validation / 1 test.
    FourFold,
    /// 80/20 train/validation split of the training data; the test set is
    /// a separate file or, without one, a stratified 20% hold-out.
    Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub host: HostNetConfig,
    /// TRM base kernel; `None` feeds raw EEG straight to the host.
    pub trm_k: Option<usize>,
    pub protocol: Protocol,
    pub train: TrainConfig,
}

/// Rotation `r` of a protocol: indices into the training set, plus test
/// indices into either the training set or the external test set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rotation {
    pub name: String,
    pub split: Split,
    pub external_test: bool,
}

/// Index partitions for a protocol. Deterministic in `seed`.
pub fn plan_rotations(
    set: &EegSegmentSet,
    protocol: Protocol,
    external_test: bool,
    seed: u64,
) -> Result<Vec<Rotation>> {
    let labels = set.labels();
    match protocol {
        Protocol::FourFold => {
            if external_test {
                return Err(Error::Invalid(
                    "a separate test file only applies to the split protocol".into(),
                ));
            }
            Ok(make_splits(&labels, set.n_classes(), &SplitPlan::four_fold(seed))?
                .into_iter()
                .enumerate()
                .map(|(r, split)| Rotation {
                    name: format!("fold{r}"),
                    split,
                    external_test: false,
                })
                .collect())
        }
        Protocol::Split if external_test => {
            let split = make_splits(&labels, set.n_classes(), &SplitPlan::train_validation(seed))?.remove(0);
            Ok(vec![Rotation {
                name: "split".into(),
                split,
                external_test: true,
            }])
        }
        Protocol::Split => {
            // carve the test hold-out first, then split the rest 80/20
            let outer = make_splits(&labels, set.n_classes(), &SplitPlan::train_validation(seed))?.remove(0);
            let pool = outer.train;
            let pool_labels: Vec<usize> = pool.iter().map(|&i| labels[i]).collect();
            let inner = make_splits(
                &pool_labels,
                set.n_classes(),
                &SplitPlan::train_validation(seed.wrapping_add(1)),
            )?
            .remove(0);
            let map = |v: Vec<usize>| v.into_iter().map(|i| pool[i]).collect();
            Ok(vec![Rotation {
                name: "split".into(),
                split: Split {
                    train: map(inner.train),
                    val: map(inner.val),
                    test: outer.val,
                },
                external_test: false,
            }])
        }
    }
}

/// Binds a montage to a segment set's channel order: by name when the set
/// names its channels, by position otherwise.
pub fn bind_montage(montage: &Montage, set: &EegSegmentSet) -> Result<Montage> {
    let names = set.channel_names();
    if names.iter().all(|n| n.is_empty()) {
        if montage.channel_count() != set.channels() {
            return Err(trm_core::Error::ChannelMismatch {
                expected: montage.channel_count(),
                found: set.channels(),
            }
            .into());
        }
        return Ok(montage.clone());
    }
    Ok(montage.aligned_to(names)?)
}

/// Per-run results and the files written for them.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub reports: Vec<(String, TrainReport)>,
    pub summary: Vec<SummaryRow>,
    pub artifacts: Vec<PathBuf>,
}

/// Runs every rotation of the protocol and writes, under `out_dir`:
/// `<run>/report.csv`, `<run>/best.trmc`, `summary.csv` and `aggregate.csv`.
///
/// Rotation `r` initialises and shuffles with `seed + r`.
pub fn run_experiment<T: Real>(
    exp: &Experiment,
    set: &EegSegmentSet,
    montage: Option<&Montage>,
    test_set: Option<&EegSegmentSet>,
    out_dir: &Path,
    mut progress: impl FnMut(&str, &EpochRecord),
) -> Result<ExperimentOutcome> {
    let montage = match (exp.trm_k, montage) {
        (Some(_), None) => return Err(Error::Invalid("a TRM needs a montage".into())),
        (Some(_), Some(m)) => Some(bind_montage(m, set)?),
        (None, _) => None,
    };
    if let Some(test) = test_set {
        if test.channel_names() != set.channel_names() || test.time_points() != set.time_points() {
            return Err(Error::Invalid(
                "test data must have the same channels and time points as the training data".into(),
            ));
        }
        if test.n_classes() != set.n_classes() {
            return Err(Error::Invalid("test data has a different class count".into()));
        }
    }
    let seed = exp.train.seed;
    let rotations = plan_rotations(set, exp.protocol, test_set.is_some(), seed)?;
    fs::create_dir_all(out_dir).map_err(Error::io(out_dir))?;
    let mut outcome = ExperimentOutcome {
        reports: Vec::new(),
        summary: Vec::new(),
        artifacts: Vec::new(),
    };
    let all_test: Vec<usize> = test_set.map(|t| (0..t.len()).collect()).unwrap_or_default();
    for (r, rot) in rotations.iter().enumerate() {
        let run_seed = seed.wrapping_add(r as u64);
        let cfg = TrainConfig {
            seed: run_seed,
            ..exp.train.clone()
        };
        let model = build_model::<T>(
            &exp.host,
            set.channels(),
            set.time_points(),
            montage.as_ref(),
            exp.trm_k,
            run_seed,
        )?;
        let test = match test_set {
            Some(t) if rot.external_test => Some(DataView::new(t, &all_test)),
            _ if rot.split.test.is_empty() => None,
            _ => Some(DataView::new(set, &rot.split.test)),
        };
        let (report, mut best) = train_run(
            model,
            DataView::new(set, &rot.split.train),
            DataView::new(set, &rot.split.val),
            test,
            &cfg,
            |rec| progress(&rot.name, rec),
        )?;
        let dir = out_dir.join(&rot.name);
        fs::create_dir_all(&dir).map_err(Error::io(&dir))?;
        let report_path = dir.join("report.csv");
        write_csv_file(&report_path, |f| report.write_epochs_csv(f))?;
        let ckpt_path = dir.join("best.trmc");
        save_checkpoint(&mut best, &ckpt_path)?;
        outcome.artifacts.extend([report_path, ckpt_path]);
        outcome.summary.push(report.summary_row(rot.name.clone()));
        outcome.reports.push((rot.name.clone(), report));
    }
    let summary_path = out_dir.join("summary.csv");
    write_csv_file(&summary_path, |f| write_summary_csv(&outcome.summary, f))?;
    let aggregate_path = out_dir.join("aggregate.csv");
    write_csv_file(&aggregate_path, |f| write_aggregate_csv(&outcome.summary, f))?;
    outcome.artifacts.extend([summary_path, aggregate_path]);
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use trm_core::data::{filled_montage, generate_synthetic, SynthSpec};

    fn set(per_class: usize) -> EegSegmentSet {
        let m = filled_montage("m", 2, 2, 4, &[]).unwrap();
        let mut s = SynthSpec::localized(&m, 2, 1).unwrap();
        s.time_points = 16;
        s.segments_per_class = per_class;
        generate_synthetic(&s).unwrap()
    }

    fn assert_partition(split: &Split, n: usize) {
        let mut all: Vec<usize> = split
            .train
            .iter()
            .chain(&split.val)
            .chain(&split.test)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn four_fold_rotations_partition_the_set() {
        let rots = plan_rotations(&set(50), Protocol::FourFold, false, 3).unwrap();
        assert_eq!(rots.len(), 4);
        for r in &rots {
            assert_eq!(
                (r.split.train.len(), r.split.val.len(), r.split.test.len()),
                (50, 25, 25)
            );
            assert_partition(&r.split, 100);
        }
        assert!(plan_rotations(&set(50), Protocol::FourFold, true, 3).is_err());
    }

    #[test]
    fn split_protocol_holds_out_a_test_set_without_a_test_file() {
        let rots = plan_rotations(&set(50), Protocol::Split, false, 3).unwrap();
        let s = &rots[0].split;
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (64, 16, 20));
        assert_partition(s, 100);
        let ext = plan_rotations(&set(5), Protocol::Split, true, 3).unwrap();
        assert_eq!((ext[0].split.train.len(), ext[0].split.val.len()), (8, 2));
        assert!(ext[0].external_test);
    }

    #[test]
    fn unnamed_channels_bind_by_position() {
        let s = set(2);
        let m = filled_montage("m", 2, 2, 4, &[]).unwrap();
        let unnamed = EegSegmentSet::new(vec![String::new(); 4], 200.0, 2, 16, s.segments().to_vec()).unwrap();
        assert_eq!(bind_montage(&m, &unnamed).unwrap(), m);
        let three = filled_montage("m", 2, 2, 3, &[]).unwrap();
        assert!(bind_montage(&three, &unnamed).is_err());
    }

    #[test]
    fn named_channels_bind_by_name() {
        let s = set(2);
        let m = filled_montage("m", 2, 2, 4, &[]).unwrap();
        let mut reversed: Vec<String> = s.channel_names().to_vec();
        reversed.reverse();
        let r = EegSegmentSet::new(reversed.clone(), 200.0, 2, 16, s.segments().to_vec()).unwrap();
        let bound = bind_montage(&m, &r).unwrap();
        assert!(bound.channel_names().eq(reversed.iter().map(String::as_str)));
        let renamed = EegSegmentSet::new(
            (0..4).map(|i| format!("X{i}")).collect(),
            200.0,
            2,
            16,
            s.segments().to_vec(),
        )
        .unwrap();
        assert!(bind_montage(&m, &renamed).is_err());
    }
}
