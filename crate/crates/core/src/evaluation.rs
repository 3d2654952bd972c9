//! Confusion metrics, ROC discriminability scores, channel ranking, and
//! dataset-level benchmark reports. Cloud is the positive class throughout.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::colorspace::{extract_channel, ChannelId};
use crate::dataset::keyed_files;
use crate::error::{Error, Result};
use crate::imaging::{load_mask, ChannelMap, CloudMask, RgbImage};

/// Number of uniform threshold steps across a channel's value range.
pub const ROC_STEPS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Confusion {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

impl std::ops::Add for Confusion {
    type Output = Confusion;
    fn add(self, o: Confusion) -> Confusion {
        Confusion {
            tp: self.tp + o.tp,
            tn: self.tn + o.tn,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsReport {
    pub confusion: Confusion,
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
    pub error_rate: f64,
}

pub fn confusion(pred: &CloudMask, gt: &CloudMask) -> Result<Confusion> {
    if pred.dims() != gt.dims() {
        return Err(Error::DimensionMismatch {
            left: pred.dims(),
            right: gt.dims(),
        });
    }
    // index by (pred << 1 | gt): 0 tn, 1 fn, 2 fp, 3 tp
    let mut counts = [0u64; 4];
    for (&p, &g) in pred.labels().iter().zip(gt.labels()) {
        counts[usize::from(p << 1 | g)] += 1;
    }
    Ok(Confusion {
        tp: counts[3],
        tn: counts[0],
        fp: counts[2],
        fn_: counts[1],
    })
}

/// Precision with no predicted positives is 1; recall with no actual
/// positives is 1; F-score with `precision + recall == 0` is 0.
pub fn metrics(conf: &Confusion) -> Result<MetricsReport> {
    let total = conf.total();
    if total == 0 {
        return Err(Error::EmptyMask);
    }
    let ratio = |num: u64, den: u64| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    let precision = ratio(conf.tp, conf.tp + conf.fp);
    let recall = ratio(conf.tp, conf.tp + conf.fn_);
    let fscore = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(MetricsReport {
        confusion: *conf,
        precision,
        recall,
        fscore,
        error_rate: (conf.fp + conf.fn_) as f64 / total as f64,
    })
}

pub fn evaluate_masks(pred: &CloudMask, gt: &CloudMask) -> Result<MetricsReport> {
    metrics(&confusion(pred, gt)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`, fpr non-decreasing.
    pub points: Vec<(f64, f64)>,
    /// Signed area between the curve and the chance diagonal.
    pub area_above_diagonal: f64,
}

/// Trapezoidal integral of `tpr - fpr` over fpr.
pub fn area_above_diagonal(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|s| {
            let ((f0, t0), (f1, t1)) = (s[0], s[1]);
            (f1 - f0) * ((t0 + t1) / 2.0 - (f0 + f1) / 2.0)
        })
        .sum()
}

/// ROC of the rule `value >= t => cloud` for `t` swept over `ROC_STEPS + 1`
/// uniform cuts spanning `[min, max]` of the map, plus the empty cut.
pub fn roc_area(cmap: &ChannelMap, gt: &CloudMask) -> Result<RocCurve> {
    if cmap.dims() != gt.dims() {
        return Err(Error::DimensionMismatch {
            left: cmap.dims(),
            right: gt.dims(),
        });
    }
    let positives = gt.cloud_count() as u64;
    let negatives = gt.len() as u64 - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClassGroundTruth);
    }
    let (lo, hi) = cmap.range();
    // hist[k] counts pixels whose highest passed cut is k (cut k sits at lo + k*step)
    let mut pos_hist = vec![0u64; ROC_STEPS + 1];
    let mut neg_hist = vec![0u64; ROC_STEPS + 1];
    for (&v, &g) in cmap.values().iter().zip(gt.labels()) {
        let k = if hi > lo {
            (((v - lo) / (hi - lo) * ROC_STEPS as f64) as usize).min(ROC_STEPS)
        } else {
            0
        };
        if g == CloudMask::CLOUD {
            pos_hist[k] += 1;
        } else {
            neg_hist[k] += 1;
        }
    }
    let mut points = Vec::with_capacity(ROC_STEPS + 2);
    points.push((0.0, 0.0));
    let (mut tp, mut fp) = (0u64, 0u64);
    for k in (0..=ROC_STEPS).rev() {
        tp += pos_hist[k];
        fp += neg_hist[k];
        points.push((fp as f64 / negatives as f64, tp as f64 / positives as f64));
    }
    let area = area_above_diagonal(&points);
    Ok(RocCurve {
        points,
        area_above_diagonal: area,
    })
}

/// Mean ROC area of each candidate channel over the images with two-class
/// ground truth, best first. Ties keep channel order.
pub fn rank_channels(dataset: &[(RgbImage, CloudMask)]) -> Result<Vec<(ChannelId, f64)>> {
    if dataset.is_empty() {
        return Err(Error::NoValidImages);
    }
    let per_image: Vec<Option<Vec<f64>>> = dataset
        .par_iter()
        .map(|(img, gt)| {
            ChannelId::candidates()
                .iter()
                .map(|&c| roc_area(&extract_channel(img, c), gt).map(|r| r.area_above_diagonal))
                .collect::<Result<Vec<f64>>>()
                .ok()
        })
        .collect();
    let valid: Vec<&Vec<f64>> = per_image.iter().flatten().collect();
    if valid.is_empty() {
        return Err(Error::NoValidImages);
    }
    let skipped = per_image.len() - valid.len();
    if skipped > 0 {
        log::warn!("skipped {skipped} image(s) without two-class ground truth or with mismatched size");
    }
    let mut ranking: Vec<(ChannelId, f64)> = ChannelId::candidates()
        .iter()
        .enumerate()
        .map(|(i, &c)| (c, valid.iter().map(|a| a[i]).sum::<f64>() / valid.len() as f64))
        .collect();
    ranking.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(ranking)
}

/// Unweighted per-image means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AggregateScores {
    pub images: usize,
    pub confusion: Confusion,
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
    pub error_rate: f64,
}

pub fn aggregate(reports: &[MetricsReport]) -> Option<AggregateScores> {
    if reports.is_empty() {
        return None;
    }
    let n = reports.len() as f64;
    let mean = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    Some(AggregateScores {
        images: reports.len(),
        confusion: reports.iter().fold(Confusion::default(), |acc, r| acc + r.confusion),
        precision: mean(|r| r.precision),
        recall: mean(|r| r.recall),
        fscore: mean(|r| r.fscore),
        error_rate: mean(|r| r.error_rate),
    })
}

#[derive(Debug, Clone)]
pub struct DatasetEvaluation {
    pub rows: Vec<(String, MetricsReport)>,
    pub aggregate: AggregateScores,
    /// Files without a counterpart, or pairs that failed to load or compare.
    pub problems: Vec<(String, String)>,
}

/// Compares every prediction with the ground truth of the same pairing key
/// (file stem, ignoring a `_GT` suffix).
pub fn evaluate_dataset(pred_dir: &Path, gt_dir: &Path) -> Result<DatasetEvaluation> {
    let preds = keyed_files(pred_dir)?;
    let gts = keyed_files(gt_dir)?;
    let mut problems: Vec<(String, String)> = Vec::new();
    for stem in gts.keys().filter(|s| !preds.contains_key(*s)) {
        problems.push((stem.clone(), "no prediction".into()));
    }
    let pairs: Vec<(&String, &PathBuf, &PathBuf)> = preds
        .iter()
        .filter_map(|(stem, p)| match gts.get(stem) {
            Some(g) => Some((stem, p, g)),
            None => {
                problems.push((stem.clone(), "no ground truth".into()));
                None
            }
        })
        .collect();
    if pairs.is_empty() {
        return Err(Error::MissingPair(format!(
            "{} vs {}",
            pred_dir.display(),
            gt_dir.display()
        )));
    }
    let results: Vec<(String, Result<MetricsReport>)> = pairs
        .par_iter()
        .map(|(stem, p, g)| {
            let r = load_mask(p).and_then(|pm| evaluate_masks(&pm, &load_mask(g)?));
            ((*stem).clone(), r)
        })
        .collect();
    let mut rows = Vec::new();
    for (stem, r) in results {
        match r {
            Ok(m) => rows.push((stem, m)),
            Err(e) => problems.push((stem, e.to_string())),
        }
    }
    problems.sort();
    let reports: Vec<MetricsReport> = rows.iter().map(|(_, m)| *m).collect();
    let aggregate = aggregate(&reports).ok_or(Error::NoValidImages)?;
    Ok(DatasetEvaluation {
        rows,
        aggregate,
        problems,
    })
}

fn csv_err(e: csv::Error) -> Error {
    Error::io(PathBuf::from("<csv>"), std::io::Error::other(e.to_string()))
}

fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

/// CSV with columns `image,tp,tn,fp,fn,precision,recall,fscore,error` and a
/// final `AGGREGATE` row.
pub fn write_metrics_csv<W: Write>(out: W, eval: &DatasetEvaluation) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "image",
        "tp",
        "tn",
        "fp",
        "fn",
        "precision",
        "recall",
        "fscore",
        "error",
    ])
    .map_err(csv_err)?;
    let row = |name: &str, c: &Confusion, p: f64, r: f64, f: f64, e: f64| {
        vec![
            name.to_string(),
            c.tp.to_string(),
            c.tn.to_string(),
            c.fp.to_string(),
            c.fn_.to_string(),
            fmt6(p),
            fmt6(r),
            fmt6(f),
            fmt6(e),
        ]
    };
    for (name, m) in &eval.rows {
        w.write_record(row(name, &m.confusion, m.precision, m.recall, m.fscore, m.error_rate))
            .map_err(csv_err)?;
    }
    let a = &eval.aggregate;
    w.write_record(row(
        "AGGREGATE",
        &a.confusion,
        a.precision,
        a.recall,
        a.fscore,
        a.error_rate,
    ))
    .map_err(csv_err)?;
    w.flush().map_err(|e| Error::io("<csv>", e))
}

/// CSV with columns `channel,mean_area,rank` (rank starts at 1).
pub fn write_ranking_csv<W: Write>(out: W, ranking: &[(ChannelId, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["channel", "mean_area", "rank"]).map_err(csv_err)?;
    for (i, (c, area)) in ranking.iter().enumerate() {
        w.write_record([c.token().to_string(), fmt6(*area), (i + 1).to_string()])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::save_mask;

    fn mask(w: usize, h: usize, cloud: &[usize]) -> CloudMask {
        let mut labels = vec![0u8; w * h];
        for &i in cloud {
            labels[i] = 1;
        }
        CloudMask::new(w, h, labels).unwrap()
    }

    #[test]
    fn confusion_examples() {
        let gt = mask(10, 10, &[0, 1, 2, 3, 4, 5, 6, 7, 8, 9]);
        assert_eq!(
            confusion(&gt, &gt).unwrap(),
            Confusion {
                tp: 10,
                tn: 90,
                fp: 0,
                fn_: 0
            }
        );
        assert_eq!(
            confusion(&gt.complement(), &gt).unwrap(),
            Confusion {
                tp: 0,
                tn: 0,
                fp: 90,
                fn_: 10
            }
        );
        // overlap 8 of the 10 and add 2 elsewhere
        let pred = mask(10, 10, &[0, 1, 2, 3, 4, 5, 6, 7, 50, 51]);
        assert_eq!(
            confusion(&pred, &gt).unwrap(),
            Confusion {
                tp: 8,
                tn: 88,
                fp: 2,
                fn_: 2
            }
        );
        assert!(matches!(
            confusion(&mask(2, 2, &[]), &mask(4, 1, &[])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn metrics_examples() {
        let m = metrics(&Confusion {
            tp: 8,
            tn: 88,
            fp: 2,
            fn_: 2,
        })
        .unwrap();
        assert!((m.precision - 0.8).abs() < 1e-15);
        assert!((m.recall - 0.8).abs() < 1e-15);
        assert!((m.fscore - 0.8).abs() < 1e-15);
        assert!((m.error_rate - 0.04).abs() < 1e-15);

        let m = metrics(&Confusion {
            tp: 5,
            tn: 5,
            fp: 0,
            fn_: 0,
        })
        .unwrap();
        assert_eq!((m.precision, m.recall, m.fscore, m.error_rate), (1.0, 1.0, 1.0, 0.0));

        let m = metrics(&Confusion {
            tp: 0,
            tn: 95,
            fp: 0,
            fn_: 5,
        })
        .unwrap();
        assert_eq!((m.precision, m.recall, m.fscore), (1.0, 0.0, 0.0));
        assert!((m.error_rate - 0.05).abs() < 1e-15);

        assert!(matches!(metrics(&Confusion::default()), Err(Error::EmptyMask)));
    }

    fn split_map(gt: &CloudMask, cloud: f64, sky: f64) -> ChannelMap {
        let vals = gt.labels().iter().map(|&l| if l == 1 { cloud } else { sky }).collect();
        ChannelMap::new(gt.width(), gt.height(), vals, None).unwrap()
    }

    #[test]
    fn roc_reference_cases() {
        let gt = CloudMask::from_fn(8, 8, |x, y| (x + y) % 3 == 0).unwrap();
        let perfect = roc_area(&split_map(&gt, 1.0, 0.0), &gt).unwrap();
        assert!((perfect.area_above_diagonal - 0.5).abs() < 1e-12);
        let anti = roc_area(&split_map(&gt, 0.0, 1.0), &gt).unwrap();
        assert!((anti.area_above_diagonal + 0.5).abs() < 1e-12);
        let flat = roc_area(&split_map(&gt, 7.0, 7.0), &gt).unwrap();
        assert_eq!(flat.area_above_diagonal, 0.0);
        assert_eq!(flat.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(flat.points.last(), Some(&(1.0, 1.0)));
        assert!(perfect.points.windows(2).all(|w| w[0].0 <= w[1].0));
        assert_eq!(perfect.points.len(), ROC_STEPS + 2);
    }

    #[test]
    fn roc_single_class_rejected() {
        let gt = CloudMask::filled(4, 4, 1).unwrap();
        let cmap = ChannelMap::from_fn(4, 4, |x, _| x as f64).unwrap();
        assert!(matches!(roc_area(&cmap, &gt), Err(Error::SingleClassGroundTruth)));
    }

    /// Exact ROC over every distinct value as a threshold.
    fn exact_area(values: &[f64], gt: &[u8]) -> f64 {
        let mut cuts: Vec<f64> = values.to_vec();
        cuts.sort_by(|a, b| b.total_cmp(a));
        cuts.dedup();
        let pos = gt.iter().filter(|&&g| g == 1).count() as f64;
        let neg = gt.len() as f64 - pos;
        let mut pts = vec![(0.0, 0.0)];
        for t in cuts {
            let tp = values.iter().zip(gt).filter(|(v, g)| **v >= t && **g == 1).count() as f64;
            let fp = values.iter().zip(gt).filter(|(v, g)| **v >= t && **g == 0).count() as f64;
            pts.push((fp / neg, tp / pos));
        }
        area_above_diagonal(&pts)
    }

    #[test]
    fn uniform_sweep_close_to_exact_sweep() {
        let (w, h) = (30, 20);
        let gt = CloudMask::from_fn(w, h, |x, y| x + 2 * y > 35).unwrap();
        let cmap = ChannelMap::from_fn(w, h, |x, y| {
            let base = (x + 2 * y) as f64;
            base + 9.0 * ((x * 7 + y * 13) as f64).sin()
        })
        .unwrap();
        let approx = roc_area(&cmap, &gt).unwrap().area_above_diagonal;
        let exact = exact_area(cmap.values(), gt.labels());
        assert!((approx - exact).abs() <= 0.004, "{approx} vs {exact}");
    }

    #[test]
    fn ranking_puts_red_minus_blue_first() {
        // cloud pixels have the larger R-B, but neither R, B, nor R/B alone separates them
        let cloud = [[200, 60, 150], [100, 60, 20]];
        let sky = [[20, 60, 2], [10, 60, 30], [220, 60, 210]];
        let gt = CloudMask::from_fn(20, 20, |x, _| x >= 10).unwrap();
        let img = RgbImage::from_fn(
            20,
            20,
            |x, y| {
                if x >= 10 {
                    cloud[(x + y) % 2]
                } else {
                    sky[(x + y) % 3]
                }
            },
        )
        .unwrap();
        let ranking = rank_channels(&[(img.clone(), gt.clone())]).unwrap();
        assert_eq!(ranking.len(), 16);
        assert!(ranking.windows(2).all(|w| w[0].1 >= w[1].1));
        // one image: ranking is exactly that image's per-channel areas
        for (c, area) in &ranking {
            let direct = roc_area(&extract_channel(&img, *c), &gt).unwrap().area_above_diagonal;
            assert_eq!(*area, direct);
        }
        assert_eq!(ranking[0].0, ChannelId::RMinusB, "{ranking:?}");
        assert!((ranking[0].1 - 0.5).abs() < 1e-12);
        assert!(ranking[1].1 < 0.5);
    }

    #[test]
    fn ranking_without_valid_images() {
        assert!(matches!(rank_channels(&[]), Err(Error::NoValidImages)));
        let img = RgbImage::new(2, 2, vec![[1, 2, 3]; 4]).unwrap();
        let gt = CloudMask::filled(2, 2, 0).unwrap();
        assert!(matches!(rank_channels(&[(img, gt)]), Err(Error::NoValidImages)));
    }

    #[test]
    fn dataset_against_itself_is_perfect() {
        let dir = tempfile::tempdir().unwrap();
        for (i, n) in [3usize, 7, 11].iter().enumerate() {
            let m = CloudMask::from_fn(5, 4, |x, y| (x * y) % n == 1).unwrap();
            save_mask(&m, dir.path().join(format!("img{i}.png"))).unwrap();
        }
        let eval = evaluate_dataset(dir.path(), dir.path()).unwrap();
        assert_eq!(eval.rows.len(), 3);
        let a = eval.aggregate;
        assert_eq!((a.precision, a.recall, a.fscore, a.error_rate), (1.0, 1.0, 1.0, 0.0));
        assert!(eval.problems.is_empty());
    }

    #[test]
    fn dataset_averages_per_image_errors() {
        let pred = tempfile::tempdir().unwrap();
        let gt = tempfile::tempdir().unwrap();
        let truth = CloudMask::from_fn(10, 1, |x, _| x < 5).unwrap();
        // one wrong pixel, then three wrong pixels
        let p1 = CloudMask::from_fn(10, 1, |x, _| x < 6).unwrap();
        let p2 = CloudMask::from_fn(10, 1, |x, _| x < 8).unwrap();
        save_mask(&truth, gt.path().join("a.png")).unwrap();
        save_mask(&truth, gt.path().join("b.png")).unwrap();
        save_mask(&truth, gt.path().join("c.png")).unwrap();
        save_mask(&p1, pred.path().join("a.png")).unwrap();
        save_mask(&p2, pred.path().join("b.png")).unwrap();
        save_mask(&p2, pred.path().join("orphan.png")).unwrap();
        let eval = evaluate_dataset(pred.path(), gt.path()).unwrap();
        assert!((eval.aggregate.error_rate - 0.2).abs() < 1e-12);
        assert_eq!(eval.problems.len(), 2);

        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &eval).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "image,tp,tn,fp,fn,precision,recall,fscore,error");
        assert!(lines[1].starts_with("a,5,4,1,0,0.833333,1.000000,"));
        assert!(lines.last().unwrap().starts_with("AGGREGATE,10,"));
        assert!(lines.last().unwrap().ends_with(",0.200000"));
    }

    #[test]
    fn dataset_with_no_pairs() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        save_mask(&CloudMask::filled(2, 2, 1).unwrap(), a.path().join("x.png")).unwrap();
        save_mask(&CloudMask::filled(2, 2, 1).unwrap(), b.path().join("y.png")).unwrap();
        assert!(matches!(
            evaluate_dataset(a.path(), b.path()),
            Err(Error::MissingPair(_))
        ));
    }

    #[test]
    fn ranking_csv_layout() {
        let mut buf = Vec::new();
        write_ranking_csv(&mut buf, &[(ChannelId::RMinusB, 0.31), (ChannelId::BStar, 0.3)]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "channel,mean_area,rank\nr-minus-b,0.310000,1\nbstar,0.300000,2\n"
        );
    }
}
