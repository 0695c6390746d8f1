use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Labeled feature vectors. An empty dataset keeps its feature width.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    feature_dim: usize,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let feature_dim = features.cols();
        Self::from_flat(features.into_data(), feature_dim, labels, num_classes)
    }

    pub fn empty(feature_dim: usize, num_classes: usize) -> Self {
        Self {
            features: Vec::new(),
            feature_dim,
            labels: Vec::new(),
            num_classes,
        }
    }

    fn from_flat(
        features: Vec<f64>,
        feature_dim: usize,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        if feature_dim == 0 || features.len() != labels.len() * feature_dim {
            return Err(Error::InvalidArgument(format!(
                "{} labels do not match {} feature values of width {feature_dim}",
                labels.len(),
                features.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Dataset"));
        }
        Ok(Self {
            features,
            feature_dim,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    pub fn features(&self) -> Result<Matrix> {
        Matrix::new(self.len(), self.feature_dim, self.features.clone())
    }

    /// Same samples, declared over a larger label space.
    pub fn with_num_classes(mut self, num_classes: usize) -> Result<Self> {
        if self.labels.iter().any(|&y| y >= num_classes) {
            return Err(Error::InvalidArgument(format!(
                "dataset labels exceed {num_classes} classes"
            )));
        }
        self.num_classes = num_classes;
        Ok(self)
    }

    /// Concatenation in argument order.
    pub fn concat(parts: &[Dataset]) -> Result<Dataset> {
        let Some(first) = parts.first() else {
            return Err(Error::EmptyDataset);
        };
        let mut out = Dataset::empty(first.feature_dim, first.num_classes);
        for p in parts {
            if p.feature_dim != out.feature_dim || p.num_classes != out.num_classes {
                return Err(Error::SpecMismatch("datasets differ in shape".into()));
            }
            out.features.extend_from_slice(&p.features);
            out.labels.extend_from_slice(&p.labels);
        }
        Ok(out)
    }

    /// Reads `f0,f1,...,label` rows. The class count is `max(label) + 1`.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Dataset> {
        let path = path.as_ref();
        let mut reader = csv::Reader::from_path(path)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let headers = reader
            .headers()
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
            .clone();
        let width = headers.len();
        if width < 2 || headers.get(width - 1) != Some("label") {
            return Err(Error::Parse(format!(
                "{}: header must be f0,...,label",
                path.display()
            )));
        }
        for (i, h) in headers.iter().take(width - 1).enumerate() {
            if h != format!("f{i}") {
                return Err(Error::Parse(format!(
                    "{}: header column {i} is {h:?}, expected \"f{i}\"",
                    path.display()
                )));
            }
        }
        let feature_dim = width - 1;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
            let bad = |what: &str| {
                Error::Parse(format!("{}: row {}: bad {what}", path.display(), line + 2))
            };
            for field in rec.iter().take(feature_dim) {
                features.push(field.trim().parse::<f64>().map_err(|_| bad("feature"))?);
            }
            let label = rec.get(feature_dim).ok_or_else(|| bad("label"))?;
            labels.push(label.trim().parse::<usize>().map_err(|_| bad("label"))?);
        }
        let num_classes = labels.iter().max().map_or(0, |m| m + 1);
        Self::from_flat(features, feature_dim, labels, num_classes)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        let mut header: Vec<String> = (0..self.feature_dim).map(|i| format!("f{i}")).collect();
        header.push("label".into());
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(&header).map_err(io)?;
        for i in 0..self.len() {
            let mut row: Vec<String> = self.sample(i).iter().map(|v| format!("{v:?}")).collect();
            row.push(self.labels[i].to_string());
            w.write_record(&row).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One data domain; its class-mode means are the shared base means moved
/// by `shift` along a domain-specific random unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainConfig {
    pub shift: f64,
    pub train_samples: usize,
    pub heldout_samples: usize,
}

/// Gaussian-mixture classification task over one or more domains.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub feature_dim: usize,
    pub num_classes: usize,
    /// Gaussian modes per class; more than one makes the task nonlinear.
    pub modes_per_class: usize,
    /// Standard deviation of the base mode means around the origin.
    pub class_spread: f64,
    /// Within-mode standard deviation.
    pub noise_std: f64,
    pub domains: Vec<DomainConfig>,
}

impl SyntheticConfig {
    /// Two domains: A unshifted, B moved by `shift`.
    pub fn two_domain(shift: f64) -> Self {
        Self {
            feature_dim: 8,
            num_classes: 4,
            modes_per_class: 3,
            class_spread: 2.0,
            noise_std: 0.8,
            domains: vec![
                DomainConfig {
                    shift: 0.0,
                    train_samples: 400,
                    heldout_samples: 400,
                },
                DomainConfig {
                    shift,
                    train_samples: 400,
                    heldout_samples: 400,
                },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    /// One training set per domain.
    pub train: Vec<Dataset>,
    /// One held-out set per domain.
    pub heldout: Vec<Dataset>,
    /// `mode_means[d][c * modes_per_class + k]`.
    pub mode_means: Vec<Vec<Vec<f64>>>,
}

impl SyntheticData {
    pub fn train_union(&self) -> Dataset {
        Dataset::concat(&self.train).expect("domains share a shape")
    }

    pub fn heldout_union(&self) -> Dataset {
        Dataset::concat(&self.heldout).expect("domains share a shape")
    }
}

/// Deterministic in `(cfg, seed)`. Labels cycle through the classes so every
/// split is balanced; the mode within a class is drawn uniformly.
pub fn gen_synthetic(cfg: &SyntheticConfig, seed: u64) -> Result<SyntheticData> {
    if cfg.num_classes < 2 {
        return Err(Error::InvalidArgument("need at least two classes".into()));
    }
    if cfg.domains.is_empty() {
        return Err(Error::InvalidArgument("need at least one domain".into()));
    }
    if cfg.feature_dim == 0 || cfg.modes_per_class == 0 {
        return Err(Error::InvalidArgument("feature_dim and modes_per_class must be positive".into()));
    }
    if !(cfg.noise_std > 0.0) || !(cfg.class_spread > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "degenerate scale: noise_std {} class_spread {}",
            cfg.noise_std, cfg.class_spread
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };
    let n_modes = cfg.num_classes * cfg.modes_per_class;
    let base: Vec<Vec<f64>> = (0..n_modes)
        .map(|_| (0..cfg.feature_dim).map(|_| cfg.class_spread * gauss(&mut rng)).collect())
        .collect();

    let mut mode_means = Vec::with_capacity(cfg.domains.len());
    for d in &cfg.domains {
        let mut dir: Vec<f64> = (0..cfg.feature_dim).map(|_| gauss(&mut rng)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        dir.iter_mut().for_each(|v| *v /= norm);
        mode_means.push(
            base.iter()
                .map(|m| m.iter().zip(&dir).map(|(b, u)| b + d.shift * u).collect())
                .collect::<Vec<Vec<f64>>>(),
        );
    }

    let draw = |rng: &mut ChaCha8Rng, means: &[Vec<f64>], count: usize| -> Result<Dataset> {
        let mut features = Vec::with_capacity(count * cfg.feature_dim);
        let mut labels = Vec::with_capacity(count);
        for i in 0..count {
            let class = i % cfg.num_classes;
            let mode = rng.random_range(0..cfg.modes_per_class);
            let mean = &means[class * cfg.modes_per_class + mode];
            for &mu in mean {
                features.push(mu + cfg.noise_std * gauss(rng));
            }
            labels.push(class);
        }
        Dataset::from_flat(features, cfg.feature_dim, labels, cfg.num_classes)
    };

    let mut train = Vec::with_capacity(cfg.domains.len());
    let mut heldout = Vec::with_capacity(cfg.domains.len());
    for (d, means) in cfg.domains.iter().zip(&mode_means) {
        train.push(draw(&mut rng, means, d.train_samples)?);
        heldout.push(draw(&mut rng, means, d.heldout_samples)?);
    }
    Ok(SyntheticData {
        train,
        heldout,
        mode_means,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(shift: f64) -> SyntheticConfig {
        let mut c = SyntheticConfig::two_domain(shift);
        c.domains.iter_mut().for_each(|d| {
            d.train_samples = 120;
            d.heldout_samples = 80;
        });
        c
    }

    #[test]
    fn same_seed_same_data() {
        assert_eq!(gen_synthetic(&cfg(3.0), 5).unwrap(), gen_synthetic(&cfg(3.0), 5).unwrap());
        assert_ne!(gen_synthetic(&cfg(3.0), 5).unwrap(), gen_synthetic(&cfg(3.0), 6).unwrap());
    }

    #[test]
    fn zero_shift_keeps_means() {
        let d = gen_synthetic(&cfg(0.0), 1).unwrap();
        assert_eq!(d.mode_means[0], d.mode_means[1]);
        let d = gen_synthetic(&cfg(2.0), 1).unwrap();
        assert_ne!(d.mode_means[0], d.mode_means[1]);
    }

    #[test]
    fn sample_counts_follow_config() {
        let d = gen_synthetic(&cfg(1.0), 2).unwrap();
        assert_eq!(d.train[0].len(), 120);
        assert_eq!(d.heldout[1].len(), 80);
        assert_eq!(d.train_union().len(), 240);
    }

    #[test]
    fn nearest_centroid_beats_chance() {
        let d = gen_synthetic(&cfg(0.0), 3).unwrap();
        let train = d.train_union();
        let test = d.heldout_union();
        let c = train.num_classes();
        let dim = train.feature_dim();
        let mut centroids = vec![vec![0.0; dim]; c];
        let mut counts = vec![0usize; c];
        for i in 0..train.len() {
            let y = train.labels()[i];
            counts[y] += 1;
            for (m, x) in centroids[y].iter_mut().zip(train.sample(i)) {
                *m += x;
            }
        }
        for (m, n) in centroids.iter_mut().zip(&counts) {
            m.iter_mut().for_each(|v| *v /= *n as f64);
        }
        let correct = (0..test.len())
            .filter(|&i| {
                let x = test.sample(i);
                let dist = |m: &Vec<f64>| m.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
                let best = (0..c)
                    .min_by(|&a, &b| dist(&centroids[a]).total_cmp(&dist(&centroids[b])))
                    .unwrap();
                best == test.labels()[i]
            })
            .count();
        assert!(correct as f64 / test.len() as f64 > 1.0 / c as f64);
    }

    #[test]
    fn rejects_degenerate_config() {
        let mut c = cfg(0.0);
        c.noise_std = 0.0;
        assert!(gen_synthetic(&c, 0).is_err());
        let mut c = cfg(0.0);
        c.num_classes = 1;
        assert!(gen_synthetic(&c, 0).is_err());
        let mut c = cfg(0.0);
        c.domains.clear();
        assert!(gen_synthetic(&c, 0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let d = gen_synthetic(&cfg(1.0), 9).unwrap().heldout_union();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        d.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("f0,f1,f2,f3,f4,f5,f6,f7,label\n"));
        assert_eq!(Dataset::read_csv(&path).unwrap(), d);
    }

    #[test]
    fn csv_rejects_bad_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "x,y,label\n1,2,0\n").unwrap();
        assert!(matches!(Dataset::read_csv(&path), Err(Error::Parse(_))));
        std::fs::write(&path, "f0,label\nabc,0\n").unwrap();
        assert!(matches!(Dataset::read_csv(&path), Err(Error::Parse(_))));
        std::fs::write(&path, "f0,label\n1.0,-1\n").unwrap();
        assert!(Dataset::read_csv(&path).is_err());
    }
}
