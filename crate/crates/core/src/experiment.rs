//! Ablation runner on the two-domain synthetic task.
//!
//! For every seed, two constituents share one architecture:
//!
//! * the in-domain model, trained on domain A only;
//! * the broad-data model, trained on the union of domains A and B and then
//!   adapted to domain A for a few epochs. It stands in for a
//!   self-supervised-then-fine-tuned network, which cannot be built at this
//!   scale; what it preserves is the contrast between broad generalization
//!   and in-domain fit.
//!
//! Both are then combined by direct averaging and by aligned averaging,
//! each with and without moderate fine-tuning on the union training set,
//! and every variant is scored on the held-out sets of each domain.

use std::fmt;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::eval::ensemble_logits;
use crate::fusion::{align, direct_average, fuse, AlignmentOptions, Scaling};
use crate::model::{
    evaluate, finetune, gen_synthetic, mlp_specs, train, Activation, Checkpoint, Dataset,
    SyntheticConfig, SyntheticData, TrainConfig, DEFAULT_FINETUNE_EPOCHS, DEFAULT_TRAIN_EPOCHS,
};
use crate::ot::OtMethod;
use crate::report::{fmt_sig, render_table, OutputFormat};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub domain_shift: f64,
    pub train_epochs: usize,
    pub finetune_epochs: usize,
    /// Epochs on domain A that follow the broad model's union-data training.
    pub broad_adapt_epochs: usize,
    pub lambda: f64,
    pub solver: OtMethod,
    pub scaling: Scaling,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seeds: (0..10).collect(),
            domain_shift: 4.0,
            train_epochs: DEFAULT_TRAIN_EPOCHS,
            finetune_epochs: DEFAULT_FINETUNE_EPOCHS,
            broad_adapt_epochs: DEFAULT_FINETUNE_EPOCHS,
            lambda: 0.5,
            solver: OtMethod::Exact,
            scaling: Scaling::Normalized,
            hidden: vec![32, 32],
            learning_rate: 0.05,
            batch_size: 32,
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument("experiment needs at least one seed".into()));
        }
        if !(self.domain_shift >= 0.0) {
            return Err(Error::InvalidArgument("domain shift must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidArgument("lambda must lie in [0, 1]".into()));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::InvalidArgument("hidden widths must be positive".into()));
        }
        Ok(())
    }

    pub fn data_config(&self) -> SyntheticConfig {
        SyntheticConfig::two_domain(self.domain_shift)
    }

    fn train_config(&self, epochs: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed,
            shuffle: true,
        }
    }

    fn alignment(&self) -> AlignmentOptions {
        AlignmentOptions {
            solver: self.solver,
            scaling: self.scaling,
            lambda: self.lambda,
            ..AlignmentOptions::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    InDomain,
    InDomainMft,
    Broad,
    BroadMft,
    DirectAvg,
    DirectAvgMft,
    AlignedAvg,
    Otf,
    Ensemble,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::InDomain,
        Method::InDomainMft,
        Method::Broad,
        Method::BroadMft,
        Method::DirectAvg,
        Method::DirectAvgMft,
        Method::AlignedAvg,
        Method::Otf,
        Method::Ensemble,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::InDomain => "In-domain (SL analog)",
            Method::InDomainMft => "  + MFT",
            Method::Broad => "Broad-data (SSL analog)",
            Method::BroadMft => "  + MFT",
            Method::DirectAvg => "Direct Avg.",
            Method::DirectAvgMft => "  + MFT",
            Method::AlignedAvg => "Aligned Avg.",
            Method::Otf => "  + MFT (OTF)",
            Method::Ensemble => "Logit ensemble (EBF analog)",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Method::InDomain => "in_domain",
            Method::InDomainMft => "in_domain_mft",
            Method::Broad => "broad",
            Method::BroadMft => "broad_mft",
            Method::DirectAvg => "direct_avg",
            Method::DirectAvgMft => "direct_avg_mft",
            Method::AlignedAvg => "aligned_avg",
            Method::Otf => "otf",
            Method::Ensemble => "ensemble",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// Held-out scores of one model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub acc_a: f64,
    pub acc_b: f64,
    pub acc_union: f64,
    pub loss_union: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub metrics: Vec<(Method, Metrics)>,
}

impl SeedRun {
    pub fn get(&self, method: Method) -> Metrics {
        self.metrics
            .iter()
            .find(|(m, _)| *m == method)
            .map(|(_, v)| *v)
            .expect("every method is scored")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub runs: Vec<SeedRun>,
}

/// Seeds for the constituents and fine-tuning, derived from the run seed.
fn sub_seed(seed: u64, stream: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(stream)
}

fn score(model: &Checkpoint, data: &SyntheticData, union: &Dataset) -> Result<Metrics> {
    let u = evaluate(model, union)?;
    Ok(Metrics {
        acc_a: evaluate(model, &data.heldout[0])?.accuracy,
        acc_b: evaluate(model, &data.heldout[1])?.accuracy,
        acc_union: u.accuracy,
        loss_union: u.loss,
    })
}

/// Runs every method for one seed.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    let data = gen_synthetic(&cfg.data_config(), seed)?;
    let train_a = &data.train[0];
    let train_union = data.train_union();
    let heldout_union = data.heldout_union();

    let mut widths = vec![train_a.feature_dim()];
    widths.extend(&cfg.hidden);
    widths.push(train_a.num_classes());
    let specs = mlp_specs(&widths, Activation::Relu);

    let mut in_domain = train(&specs, train_a, &cfg.train_config(cfg.train_epochs, sub_seed(seed, 1)))?;
    in_domain.meta.tag = "in-domain".into();
    let pretrained = train(&specs, &train_union, &cfg.train_config(cfg.train_epochs, sub_seed(seed, 2)))?;
    let mut broad = finetune(&pretrained, train_a, &cfg.train_config(cfg.broad_adapt_epochs, sub_seed(seed, 4)))?;
    broad.meta.tag = "broad".into();

    let mft = cfg.train_config(cfg.finetune_epochs, sub_seed(seed, 3));
    let direct = direct_average(&in_domain, &broad, cfg.lambda)?;
    let aligned = align(&in_domain, &broad, &cfg.alignment())?;
    let fused = fuse(&aligned.aligned, &broad, cfg.lambda)?;

    let mut metrics = Vec::with_capacity(Method::ALL.len());
    for method in Method::ALL {
        let m = match method {
            Method::InDomain => score(&in_domain, &data, &heldout_union)?,
            Method::InDomainMft => score(&finetune(&in_domain, &train_union, &mft)?, &data, &heldout_union)?,
            Method::Broad => score(&broad, &data, &heldout_union)?,
            Method::BroadMft => score(&finetune(&broad, &train_union, &mft)?, &data, &heldout_union)?,
            Method::DirectAvg => score(&direct, &data, &heldout_union)?,
            Method::DirectAvgMft => score(&finetune(&direct, &train_union, &mft)?, &data, &heldout_union)?,
            Method::AlignedAvg => score(&fused, &data, &heldout_union)?,
            Method::Otf => score(&finetune(&fused, &train_union, &mft)?, &data, &heldout_union)?,
            Method::Ensemble => {
                let members = [in_domain.clone(), broad.clone()];
                let u = ensemble_logits(&members, &heldout_union)?;
                Metrics {
                    acc_a: ensemble_logits(&members, &data.heldout[0])?.accuracy,
                    acc_b: ensemble_logits(&members, &data.heldout[1])?.accuracy,
                    acc_union: u.accuracy,
                    loss_union: u.loss,
                }
            }
        };
        metrics.push((method, m));
    }
    Ok(SeedRun { seed, metrics })
}

/// Runs all seeds in order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let runs = cfg
        .seeds
        .iter()
        .map(|&s| run_seed(cfg, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport { runs })
}

/// Mean and range of one metric across seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Aggregate {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().collect();
        Self {
            mean: v.iter().sum::<f64>() / v.len() as f64,
            min: v.iter().copied().fold(f64::INFINITY, f64::min),
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

impl ExperimentReport {
    pub fn aggregate(&self, method: Method, metric: impl Fn(&Metrics) -> f64) -> Aggregate {
        Aggregate::of(self.runs.iter().map(|r| metric(&r.get(method))))
    }

    /// One row per method; columns are held-out accuracy per domain, on the
    /// union, and union loss, each as `mean [min, max]` over seeds.
    pub fn render(&self, format: OutputFormat) -> String {
        let getters: [(&str, fn(&Metrics) -> f64); 4] = [
            ("acc_A", |m| m.acc_a),
            ("acc_B", |m| m.acc_b),
            ("acc_union", |m| m.acc_union),
            ("loss_union", |m| m.loss_union),
        ];
        match format {
            OutputFormat::Text => {
                let mut header = vec!["method"];
                header.extend(getters.iter().map(|(n, _)| *n));
                let rows: Vec<Vec<String>> = Method::ALL
                    .iter()
                    .map(|&m| {
                        let mut row = vec![m.label().to_string()];
                        for (_, g) in &getters {
                            let a = self.aggregate(m, g);
                            row.push(format!("{} [{}, {}]", fmt_sig(a.mean), fmt_sig(a.min), fmt_sig(a.max)));
                        }
                        row
                    })
                    .collect();
                let seeds: Vec<String> = self.runs.iter().map(|r| r.seed.to_string()).collect();
                format!("seeds: {}\n{}", seeds.join(" "), render_table(&header, &rows, format))
            }
            OutputFormat::Csv => {
                let mut header = vec!["method".to_string()];
                for (n, _) in &getters {
                    for s in ["mean", "min", "max"] {
                        header.push(format!("{n}_{s}"));
                    }
                }
                let header: Vec<&str> = header.iter().map(String::as_str).collect();
                let rows: Vec<Vec<String>> = Method::ALL
                    .iter()
                    .map(|&m| {
                        let mut row = vec![m.key().to_string()];
                        for (_, g) in &getters {
                            let a = self.aggregate(m, g);
                            row.extend([fmt_sig(a.mean), fmt_sig(a.min), fmt_sig(a.max)]);
                        }
                        row
                    })
                    .collect();
                render_table(&header, &rows, format)
            }
        }
    }

    /// Per-seed metrics, one line per (seed, method).
    pub fn per_seed_csv(&self) -> String {
        let mut s = String::from("seed,method,acc_A,acc_B,acc_union,loss_union\n");
        for r in &self.runs {
            for (m, v) in &r.metrics {
                s.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    r.seed,
                    m.key(),
                    fmt_sig(v.acc_a),
                    fmt_sig(v.acc_b),
                    fmt_sig(v.acc_union),
                    fmt_sig(v.loss_union)
                ));
            }
        }
        s
    }
}
