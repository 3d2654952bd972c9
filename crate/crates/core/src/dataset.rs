//! Image/ground-truth pairing and cloud-coverage statistics.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::imaging::load_mask;

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];
pub const COVERAGE_BINS: usize = 10;

/// PNG/JPEG files directly inside `dir`, sorted by path.
pub fn image_files(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::FileNotFound(dir.to_path_buf()));
    }
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        if is_image && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Key used to pair an image with its mask: the file stem with a trailing
/// `_GT` (any case) removed.
pub fn pairing_key(path: &Path) -> Option<String> {
    let stem = path.file_stem()?.to_str()?;
    let lower = stem.to_ascii_lowercase();
    Some(match lower.strip_suffix("_gt") {
        Some(_) => stem[..stem.len() - 3].to_string(),
        None => stem.to_string(),
    })
}

/// Files of `dir` keyed by [`pairing_key`]. Duplicate keys keep the first path.
pub fn keyed_files(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for p in image_files(dir)? {
        if let Some(k) = pairing_key(&p) {
            out.entry(k).or_insert(p);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetEntry {
    pub key: String,
    pub image_path: PathBuf,
    pub mask_path: PathBuf,
    pub width: usize,
    pub height: usize,
    pub cloud_pixels: usize,
    /// Fraction of ground-truth pixels labeled cloud.
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationIssue {
    pub key: String,
    pub problem: String,
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub entries: Vec<DatasetEntry>,
    pub issues: Vec<ValidationIssue>,
}

fn load_entry(key: &str, image_path: &Path, mask_path: &Path) -> Result<DatasetEntry> {
    let (iw, ih) = image::image_dimensions(image_path).map_err(|e| Error::CorruptImage {
        path: image_path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let mask = load_mask(mask_path)?;
    let (iw, ih) = (iw as usize, ih as usize);
    if mask.dims() != (iw, ih) {
        return Err(Error::DimensionMismatch {
            left: (iw, ih),
            right: mask.dims(),
        });
    }
    let cloud = mask.cloud_count();
    Ok(DatasetEntry {
        key: key.to_string(),
        image_path: image_path.to_path_buf(),
        mask_path: mask_path.to_path_buf(),
        width: iw,
        height: ih,
        cloud_pixels: cloud,
        coverage: cloud as f64 / mask.len() as f64,
    })
}

/// Pairs images with masks by [`pairing_key`]. Unpaired files and pairs that
/// fail to load or disagree in size are reported in `issues`.
pub fn load_dataset(images_dir: &Path, masks_dir: &Path) -> Result<Dataset> {
    let images = keyed_files(images_dir)?;
    let masks = keyed_files(masks_dir)?;
    let mut issues = Vec::new();
    for key in masks.keys().filter(|k| !images.contains_key(*k)) {
        issues.push(ValidationIssue {
            key: key.clone(),
            problem: "mask without image".into(),
        });
    }
    let mut pairs = Vec::new();
    for (key, img) in &images {
        match masks.get(key) {
            Some(mask) => pairs.push((key, img, mask)),
            None => issues.push(ValidationIssue {
                key: key.clone(),
                problem: "image without mask".into(),
            }),
        }
    }
    let loaded: Vec<(String, Result<DatasetEntry>)> = pairs
        .par_iter()
        .map(|(k, i, m)| ((*k).clone(), load_entry(k, i, m)))
        .collect();
    let mut entries = Vec::new();
    for (key, r) in loaded {
        match r {
            Ok(e) => entries.push(e),
            Err(e) => issues.push(ValidationIssue {
                key,
                problem: e.to_string(),
            }),
        }
    }
    if entries.is_empty() {
        return Err(Error::EmptyDataset);
    }
    issues.sort_by(|a, b| a.key.cmp(&b.key).then(a.problem.cmp(&b.problem)));
    Ok(Dataset { entries, issues })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CoverageHistogram {
    /// Bin `i` spans `[10 i, 10 (i + 1))` percent; the last bin includes 100%.
    pub counts: [usize; COVERAGE_BINS],
    pub total: usize,
}

impl CoverageHistogram {
    pub fn edges_percent(i: usize) -> (u32, u32) {
        (10 * i as u32, 10 * (i as u32 + 1))
    }
}

fn coverage_bin(coverage: f64) -> usize {
    // tolerate representation error at exact decile edges (0.7 * 10 < 7 in binary)
    ((coverage * COVERAGE_BINS as f64 + 1e-9).floor().max(0.0) as usize).min(COVERAGE_BINS - 1)
}

pub fn coverage_histogram(coverages: &[f64]) -> Result<CoverageHistogram> {
    if coverages.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut counts = [0usize; COVERAGE_BINS];
    for &c in coverages {
        counts[coverage_bin(c)] += 1;
    }
    Ok(CoverageHistogram {
        counts,
        total: coverages.len(),
    })
}

pub fn entry_histogram(entries: &[DatasetEntry]) -> Result<CoverageHistogram> {
    coverage_histogram(&entries.iter().map(|e| e.coverage).collect::<Vec<_>>())
}

fn csv_err(e: csv::Error) -> Error {
    Error::io("<csv>", std::io::Error::other(e.to_string()))
}

/// CSV with columns `bin,lower_pct,upper_pct,count`.
pub fn write_histogram_csv<W: Write>(out: W, hist: &CoverageHistogram) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["bin", "lower_pct", "upper_pct", "count"])
        .map_err(csv_err)?;
    for (i, c) in hist.counts.iter().enumerate() {
        let (lo, hi) = CoverageHistogram::edges_percent(i);
        w.write_record([i.to_string(), lo.to_string(), hi.to_string(), c.to_string()])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

/// CSV with columns `key,image,mask,width,height,coverage`.
pub fn write_entries_csv<W: Write>(out: W, entries: &[DatasetEntry]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["key", "image", "mask", "width", "height", "coverage"])
        .map_err(csv_err)?;
    for e in entries {
        w.write_record([
            e.key.clone(),
            e.image_path.display().to_string(),
            e.mask_path.display().to_string(),
            e.width.to_string(),
            e.height.to_string(),
            format!("{:.6}", e.coverage),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{save_mask, CloudMask, RgbImage};
    use proptest::prelude::*;

    fn write_pair(images: &Path, masks: &Path, key: &str, mask: &CloudMask) {
        let img = RgbImage::new(mask.width(), mask.height(), vec![[5, 6, 7]; mask.len()]).unwrap();
        img.save_png(&images.join(format!("{key}.png"))).unwrap();
        save_mask(mask, masks.join(format!("{key}_GT.png"))).unwrap();
    }

    #[test]
    fn pairing_keys() {
        assert_eq!(pairing_key(Path::new("a/0001_GT.png")).unwrap(), "0001");
        assert_eq!(pairing_key(Path::new("0001_gt.PNG")).unwrap(), "0001");
        assert_eq!(pairing_key(Path::new("0001.jpg")).unwrap(), "0001");
        assert_eq!(pairing_key(Path::new("sky_gtx.png")).unwrap(), "sky_gtx");
    }

    #[test]
    fn loads_matching_pairs_and_reports_the_rest() {
        let images = tempfile::tempdir().unwrap();
        let masks = tempfile::tempdir().unwrap();
        let sixty = CloudMask::from_fn(10, 10, |x, _| x < 6).unwrap();
        write_pair(images.path(), masks.path(), "a", &sixty);
        write_pair(images.path(), masks.path(), "b", &CloudMask::filled(10, 10, 0).unwrap());
        RgbImage::new(2, 2, vec![[0; 3]; 4])
            .unwrap()
            .save_png(&images.path().join("lonely.png"))
            .unwrap();
        // size mismatch
        RgbImage::new(3, 3, vec![[0; 3]; 9])
            .unwrap()
            .save_png(&images.path().join("c.png"))
            .unwrap();
        save_mask(&CloudMask::filled(4, 4, 1).unwrap(), masks.path().join("c.png")).unwrap();
        std::fs::write(images.path().join("notes.txt"), "ignored").unwrap();

        let ds = load_dataset(images.path(), masks.path()).unwrap();
        assert_eq!(ds.entries.len(), 2);
        assert_eq!(ds.entries[0].key, "a");
        assert!((ds.entries[0].coverage - 0.6).abs() < 1e-15);
        assert_eq!(ds.entries[1].coverage, 0.0);
        let keys: Vec<&str> = ds.issues.iter().map(|i| i.key.as_str()).collect();
        assert_eq!(keys, vec!["c", "lonely"]);
        assert!(ds.issues[0].problem.contains("dimension mismatch"));
    }

    #[test]
    fn empty_directories() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        assert!(matches!(load_dataset(a.path(), b.path()), Err(Error::EmptyDataset)));
        assert!(matches!(
            load_dataset(&a.path().join("missing"), b.path()),
            Err(Error::FileNotFound(_))
        ));
    }

    #[test]
    fn histogram_examples() {
        let h = coverage_histogram(&[0.02, 0.18, 0.60, 0.79]).unwrap();
        assert_eq!(h.counts, [1, 1, 0, 0, 0, 0, 1, 1, 0, 0]);
        assert_eq!(h.total, 4);
        let full = coverage_histogram(&[1.0]).unwrap();
        assert_eq!(full.counts[9], 1);
        let edges = coverage_histogram(&[0.0, 0.1, 0.7, 0.3]).unwrap();
        assert_eq!(edges.counts, [1, 1, 0, 1, 0, 0, 0, 1, 0, 0]);
        assert!(matches!(coverage_histogram(&[]), Err(Error::EmptyDataset)));
    }

    #[test]
    fn histogram_csv() {
        let h = coverage_histogram(&[0.05, 0.95, 1.0]).unwrap();
        let mut buf = Vec::new();
        write_histogram_csv(&mut buf, &h).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("bin,lower_pct,upper_pct,count\n0,0,10,1\n"));
        assert!(text.ends_with("9,90,100,2\n"));
    }

    proptest! {
        #[test]
        fn histogram_counts_sum_to_total(cov in proptest::collection::vec(0.0f64..=1.0, 1..200)) {
            let h = coverage_histogram(&cov).unwrap();
            prop_assert_eq!(h.counts.iter().sum::<usize>(), cov.len());
        }
    }
}
