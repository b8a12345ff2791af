use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::rc::Rc;

use fpnet_core::adblock::{
    decoder_outputs, misrouting_report, rates_at, sweep_threshold, train_on_reconstructions, AdConfig, AdblockModel,
};
use fpnet_core::channel::CsiBatch;
use fpnet_core::codec::{
    dequantize_angles, extract_bfm, givens_decompose, givens_reconstruct, quantize_angles, BfmMatrix, FeedbackKind,
};
use fpnet_core::fpnet::{
    build_model, fine_tune, load_model, save_model, train_sequential_baseline, train_stage1, train_stage2,
    EncoderConfig, EpochLog, FpnetModel, Manifest, SequentialBaseline, Stateful, TrainConfig,
};
use fpnet_core::metrics::{
    gamma_from_evm, gross_throughput, net_throughput, sgcs, simulate_link_evm, MetricsReport,
};
use fpnet_core::rng::mix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{prepare, DatasetKey, Prepared};
use crate::knn::knn_baseline;
use crate::{ExperimentConfig, HarnessError};

/// A run directory: resolved config, checkpoints, logs and reports.
pub struct Workspace {
    pub root: PathBuf,
    pub cfg: ExperimentConfig,
    data: RefCell<HashMap<String, Rc<Prepared>>>,
    /// Print progress lines to stderr.
    pub verbose: bool,
}

pub const CONFIG_FILE: &str = "config.toml";

impl Workspace {
    /// Writes the resolved config and its hash into `root`.
    pub fn create(root: impl Into<PathBuf>, cfg: ExperimentConfig) -> Result<Self, HarnessError> {
        let root = root.into();
        for sub in ["runs", "reports", "curves", "data"] {
            std::fs::create_dir_all(root.join(sub))?;
        }
        std::fs::write(root.join(CONFIG_FILE), cfg.to_toml())?;
        std::fs::write(root.join("config.sha256"), format!("{}\n", cfg.hash()))?;
        Ok(Self { root, cfg, data: RefCell::default(), verbose: false })
    }

    /// Opens a directory previously set up by [`Workspace::create`].
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, HarnessError> {
        let root = root.into();
        let path = root.join(CONFIG_FILE);
        if !path.exists() {
            return Err(HarnessError::Missing(format!("{} (run a command with --config or --profile first)", path.display())));
        }
        let cfg = ExperimentConfig::load(Some(&path), crate::config::Profile::Default, None)?;
        Ok(Self { root, cfg, data: RefCell::default(), verbose: false })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub(crate) fn log(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }

    /// Regenerates (once per process) the dataset behind `key`.
    pub fn data(&self, key: DatasetKey) -> Result<Rc<Prepared>, HarnessError> {
        let id = serde_json::to_string(&key)?;
        if let Some(p) = self.data.borrow().get(&id) {
            return Ok(p.clone());
        }
        let p = Rc::new(prepare(&self.cfg, key)?);
        self.data.borrow_mut().insert(id, p.clone());
        Ok(p)
    }
}

/// Everything that determines one trained joint model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FpnetRun {
    pub dataset: DatasetKey,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
}

impl FpnetRun {
    pub fn base(cfg: &ExperimentConfig) -> Self {
        Self { dataset: DatasetKey::Base, encoder: cfg.encoder.clone(), train: cfg.train.clone() }
    }

    fn dataset_tag(&self) -> String {
        match self.dataset {
            DatasetKey::Base => "base".to_string(),
            DatasetKey::Zones { zones } => format!("z{zones}"),
            DatasetKey::Drift { intensity } => format!("drift{intensity}"),
        }
    }

    pub fn name(&self) -> String {
        let set = self.dataset_tag();
        format!("fpnet-n{}-b{}-a{}-{set}", self.encoder.codeword_len, self.encoder.quant_bits, self.train.alpha)
    }

    pub fn config_hash(&self) -> String {
        short_hash(&serde_json::to_vec(self).expect("run spec serializes"))
    }

    /// The same run with every stage-2-only setting cleared. Runs that agree
    /// on it share one stage-1 checkpoint.
    fn stage1_view(&self) -> Self {
        let train = TrainConfig { alpha: 0.0, lr_stage2: 0.0, epochs_stage2: 0, epochs_sequential: 0, ..self.train.clone() };
        Self { train, ..self.clone() }
    }

    fn stage1_name(&self) -> String {
        format!("fpnet-n{}-b{}-{}.stage1", self.encoder.codeword_len, self.encoder.quant_bits, self.dataset_tag())
    }
}

fn short_hash(bytes: &[u8]) -> String {
    hex::encode(&Sha256::digest(bytes)[..16])
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in rows {
        serde_json::to_writer(&mut f, r)?;
        f.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, HarnessError> {
    std::fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

/// Loads `path` if its manifest matches `config_hash` and `data_hash`.
fn load_matching<M: Stateful>(path: &Path, config_hash: &str, data_hash: &str) -> Option<M> {
    let (m, manifest): (M, Manifest) = load_model(path).ok()?;
    (manifest.config_hash == config_hash && manifest.data_hash == data_hash).then_some(m)
}

impl Workspace {
    pub fn checkpoint_path(&self, name: &str) -> PathBuf {
        self.root.join("runs").join(format!("{name}.fpck"))
    }

    /// Trained joint model for `run`, from its checkpoint when one with the
    /// same settings and data exists. Parameters are rounded to checkpoint
    /// precision so later evaluations match a reload exactly.
    pub fn fpnet(&self, run: &FpnetRun) -> Result<FpnetModel, HarnessError> {
        let data = self.data(run.dataset)?;
        let name = run.name();
        let path = self.checkpoint_path(&name);
        let (ch, dh) = (run.config_hash(), data.hash());
        if let Some(m) = load_matching(&path, &ch, &dh) {
            return Ok(m);
        }
        let (mut model, mut logs) = self.stage1(run)?;
        self.log(format!("training {name}"));
        logs.extend(train_stage2(&mut model, &data.train, &data.val, &run.train)?);
        model.round_to_f32();
        let manifest = Manifest {
            stage: "stage2".into(),
            alpha: run.train.alpha,
            epochs_completed: run.train.epochs_stage2,
            data_hash: dh,
            config_hash: ch,
            seed: run.train.seed,
        };
        write_jsonl(&self.root.join("runs").join(format!("{name}.jsonl")), &logs)?;
        save_model(&path, &model, &manifest)?;
        Ok(model)
    }

    /// Positioning-only pre-training for `run`, shared by runs that differ
    /// only in stage-2 settings.
    fn stage1(&self, run: &FpnetRun) -> Result<(FpnetModel, Vec<EpochLog>), HarnessError> {
        let data = self.data(run.dataset)?;
        let name = run.stage1_name();
        let path = self.checkpoint_path(&name);
        let log_path = self.root.join("runs").join(format!("{name}.jsonl"));
        let (ch, dh) = (run.stage1_view().config_hash(), data.hash());
        if let Some(m) = load_matching(&path, &ch, &dh) {
            if let Ok(logs) = read_jsonl(&log_path) {
                return Ok((m, logs));
            }
        }
        self.log(format!("pre-training {name}"));
        let mut model = build_model(&self.cfg.system, &run.encoder, data.n_classes, run.train.seed)?;
        let logs = train_stage1(&mut model, &data.train, &data.val, &run.train)?;
        model.round_to_f32();
        let manifest = Manifest {
            stage: "stage1".into(),
            alpha: 0.0,
            epochs_completed: run.train.epochs_stage1,
            data_hash: dh,
            config_hash: ch,
            seed: run.train.seed,
        };
        write_jsonl(&log_path, &logs)?;
        save_model(&path, &model, &manifest)?;
        Ok((model, logs))
    }

    /// The feedback-then-classify baseline trained with the same budget.
    pub fn sequential(&self, run: &FpnetRun) -> Result<SequentialBaseline, HarnessError> {
        let data = self.data(run.dataset)?;
        let name = run.name().replacen("fpnet", "sfpnet", 1);
        let path = self.checkpoint_path(&name);
        let (ch, dh) = (run.config_hash(), data.hash());
        if let Some(m) = load_matching(&path, &ch, &dh) {
            return Ok(m);
        }
        self.log(format!("training {name}"));
        let (mut base, logs) =
            train_sequential_baseline(&self.cfg.system, &run.encoder, data.n_classes, &data.train, &data.val, &run.train)?;
        base.autoencoder.round_to_f32();
        base.classifier.round_to_f32();
        let manifest = Manifest {
            stage: "sequential".into(),
            alpha: 0.0,
            epochs_completed: run.train.epochs_sequential,
            data_hash: dh,
            config_hash: ch,
            seed: run.train.seed,
        };
        write_jsonl(&self.root.join("runs").join(format!("{name}.jsonl")), &logs)?;
        save_model(&path, &base, &manifest)?;
        Ok(base)
    }

    /// Detector trained on the reconstructions of `run`'s normal training
    /// data.
    pub fn adblock(&self, run: &FpnetRun, ad: &AdConfig) -> Result<AdblockModel, HarnessError> {
        let fpnet = self.fpnet(run)?;
        let data = self.data(run.dataset)?;
        let name = format!("adblock-k{}-{}", ad.kernel, run.name());
        let path = self.checkpoint_path(&name);
        let ch = short_hash(&serde_json::to_vec(&(run, ad))?);
        let dh = data.hash();
        if let Some(m) = load_matching(&path, &ch, &dh) {
            return Ok(m);
        }
        self.log(format!("training {name}"));
        let inputs = decoder_outputs(&fpnet, &data.train)?;
        let (mut model, logs) = train_on_reconstructions(&inputs, ad)?;
        model.round_to_f32();
        let manifest = Manifest {
            stage: "adblock".into(),
            alpha: 0.0,
            epochs_completed: ad.epochs,
            data_hash: dh,
            config_hash: ch,
            seed: ad.seed,
        };
        write_jsonl(&self.root.join("runs").join(format!("{name}.jsonl")), &logs)?;
        save_model(&path, &model, &manifest)?;
        Ok(model)
    }

    /// `base` fine-tuned on `samples` training entries of `dataset`, with the
    /// per-epoch curves measured on that dataset's test split.
    pub fn fine_tuned(
        &self,
        base: &FpnetRun,
        dataset: DatasetKey,
        samples: usize,
        epochs: usize,
    ) -> Result<(FpnetModel, Vec<EpochLog>), HarnessError> {
        let mut model = self.fpnet(base)?;
        let data = self.data(dataset)?;
        let name = format!("ft{samples}-e{epochs}-{}", base.name());
        let path = self.checkpoint_path(&name);
        let log_path = self.root.join("runs").join(format!("{name}.jsonl"));
        let ch = short_hash(&serde_json::to_vec(&(base, dataset, samples, epochs))?);
        let dh = data.hash();
        if let Some(m) = load_matching(&path, &ch, &dh) {
            if let Ok(logs) = read_jsonl(&log_path) {
                return Ok((m, logs));
            }
        }
        self.log(format!("fine-tuning {name}"));
        let cfg = TrainConfig { seed: mix(base.train.seed, samples as u64), ..base.train.clone() };
        let logs = fine_tune(&mut model, &data.train, samples, epochs, &data.test, &cfg)?;
        model.round_to_f32();
        let manifest = Manifest {
            stage: "fine_tune".into(),
            alpha: cfg.alpha,
            epochs_completed: epochs,
            data_hash: dh,
            config_hash: ch,
            seed: cfg.seed,
        };
        write_jsonl(&log_path, &logs)?;
        save_model(&path, &model, &manifest)?;
        Ok((model, logs))
    }
}

/// How a report row was produced; enough to recompute it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    /// A trained joint model evaluated on `eval`'s test split.
    Fpnet { run: FpnetRun, eval: DatasetKey },
    FineTuned { run: FpnetRun, eval: DatasetKey, samples: usize, epochs: usize },
    Sequential { run: FpnetRun },
    Codec { feedback: FeedbackKind, eval: DatasetKey },
    Knn { eval: DatasetKey, grid: Vec<usize> },
    Adblock { run: FpnetRun, ad: AdConfig },
}

/// One result line: standard metrics plus method-specific extras.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub id: String,
    pub source: Source,
    pub report: MetricsReport,
    #[serde(default)]
    pub extra: BTreeMap<String, f64>,
}

impl Row {
    /// Every number in the row under a stable key.
    pub fn numbers(&self) -> BTreeMap<String, f64> {
        let r = &self.report;
        let mut out = BTreeMap::new();
        let mut put = |k: &str, v: Option<f64>| {
            if let Some(v) = v {
                out.insert(k.to_string(), v);
            }
        };
        put("feedback_bits", r.feedback_bits.map(|b| b as f64));
        put("sgcs", r.sgcs);
        put("accuracy", r.accuracy);
        put("evm_db", r.evm_db);
        put("r_gross", r.r_gross);
        put("r_net", r.r_net);
        if let Some(d) = &r.detection {
            put("tpr", d.tpr);
            put("fpr", d.fpr);
            put("precision", d.precision);
            put("f1", d.f1);
        }
        for (k, v) in &self.extra {
            out.insert(k.clone(), *v);
        }
        out
    }
}

/// Mean EVM over samples, averaged as linear power ratios.
fn link_metrics(
    ws: &Workspace,
    raw: &CsiBatch,
    recon: &[BfmMatrix],
    bits: usize,
    report: &mut MetricsReport,
) -> Result<(), HarnessError> {
    let link = &ws.cfg.link;
    let mut lin = 0.0;
    for (i, (s, v)) in raw.samples.iter().zip(recon).enumerate() {
        let e = simulate_link_evm(s, v, link.eval_snr_db, link.n_symbols, mix(ws.cfg.seed, i as u64))?;
        lin += 10f64.powf(e / 10.0);
    }
    let evm = 10.0 * (lin / recon.len().max(1) as f64).log10();
    let r_gross = gross_throughput(gamma_from_evm(evm, &link.mcs), &ws.cfg.system);
    report.feedback_bits = Some(bits);
    report.evm_db = Some(evm);
    report.r_gross = Some(r_gross);
    report.r_net = Some(net_throughput(r_gross, bits, &link.timing));
    Ok(())
}

fn fpnet_row(ws: &Workspace, id: String, source: Source, model: &FpnetModel, eval: DatasetKey) -> Result<Row, HarnessError> {
    let data = ws.data(eval)?;
    let ev = model.evaluate(&data.test)?;
    let n = data.test.sample_len();
    let recon: Vec<BfmMatrix> = (0..data.test.len())
        .map(|i| BfmMatrix::from_real(&ev.reconstructions[i * n..(i + 1) * n], data.test.n_tx, data.test.n_streams))
        .collect();
    let mut report = MetricsReport {
        method: "FPNet".into(),
        sgcs: Some(ev.sgcs),
        accuracy: Some(ev.accuracy),
        ..Default::default()
    };
    link_metrics(ws, &data.raw_test, &recon, model.feedback_bits(), &mut report)?;
    Ok(Row { id, source, report, extra: BTreeMap::new() })
}

/// Computes the row described by `source`, training whatever it needs.
pub fn compute_row(ws: &Workspace, id: &str, source: &Source) -> Result<Row, HarnessError> {
    let id = id.to_string();
    match source {
        Source::Fpnet { run, eval } => {
            let model = ws.fpnet(run)?;
            fpnet_row(ws, id, source.clone(), &model, *eval)
        }
        Source::FineTuned { run, eval, samples, epochs } => {
            let (model, _) = ws.fine_tuned(run, *eval, *samples, *epochs)?;
            let mut row = fpnet_row(ws, id, source.clone(), &model, *eval)?;
            row.report.method = "FPNet (fine-tuned)".into();
            row.extra.insert("samples".into(), *samples as f64);
            Ok(row)
        }
        Source::Sequential { run } => {
            let base = ws.sequential(run)?;
            let data = ws.data(run.dataset)?;
            let recon = base.reconstruct(&data.test)?;
            let (s, acc) = base.evaluate(&data.test)?;
            let mats: Vec<BfmMatrix> = (0..recon.len()).map(|i| recon.matrix(i)).collect();
            let mut report = MetricsReport { method: "S-FPNet".into(), sgcs: Some(s), accuracy: Some(acc), ..Default::default() };
            link_metrics(ws, &data.raw_test, &mats, run.encoder.feedback_bits(), &mut report)?;
            Ok(Row { id, source: source.clone(), report, extra: BTreeMap::new() })
        }
        Source::Codec { feedback, eval } => {
            let data = ws.data(*eval)?;
            let ns = ws.cfg.system.n_streams;
            let mut recon = Vec::with_capacity(data.raw_test.len());
            let mut scores = Vec::with_capacity(data.raw_test.len());
            let mut bits = 0;
            for s in &data.raw_test.samples {
                let v = extract_bfm(s, ns)?;
                let frame = quantize_angles(&givens_decompose(&v)?, *feedback)?;
                bits = frame.payload_bits();
                let r = givens_reconstruct(&dequantize_angles(&frame)?, v.n_tx, v.n_streams)?;
                scores.push(sgcs(&r, &v)?);
                recon.push(r);
            }
            let method = match feedback {
                FeedbackKind::Type0 => "Type 0",
                FeedbackKind::Type1 => "Type 1",
            };
            let mean = scores.iter().sum::<f64>() / scores.len().max(1) as f64;
            let mut report = MetricsReport { method: method.into(), sgcs: Some(mean), ..Default::default() };
            link_metrics(ws, &data.raw_test, &recon, bits, &mut report)?;
            Ok(Row { id, source: source.clone(), report, extra: BTreeMap::new() })
        }
        Source::Knn { eval, grid } => {
            let data = ws.data(*eval)?;
            let (k, acc) = knn_baseline(&data.train, &data.val, &data.test, grid)?;
            let report = MetricsReport { method: "KNN".into(), accuracy: Some(acc), ..Default::default() };
            Ok(Row { id, source: source.clone(), report, extra: BTreeMap::from([("k".to_string(), k as f64)]) })
        }
        Source::Adblock { run, ad } => adblock_row(ws, id, source, run, ad),
    }
}

fn quantile(v: &[f64], q: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s[((s.len() - 1) as f64 * q).round() as usize]
}

fn adblock_row(ws: &Workspace, id: String, source: &Source, run: &FpnetRun, ad: &AdConfig) -> Result<Row, HarnessError> {
    let fpnet = ws.fpnet(run)?;
    let model = ws.adblock(run, ad)?;
    let data = ws.data(run.dataset)?;
    if data.ood_cal.is_empty() || data.ood_test.is_empty() {
        return Err(HarnessError::Missing("out-of-region packets (set data.ood_packets >= 2)".into()));
    }
    let score = |d| -> Result<Vec<f64>, HarnessError> { Ok(model.scores(&decoder_outputs(&fpnet, d)?)?) };
    let (val_n, cal_a) = (score(&data.val)?, score(&data.ood_cal)?);
    let curve = match ad.threshold {
        Some(_) => None,
        None => Some(sweep_threshold(&val_n, &cal_a, ad.sweep_points)?),
    };
    let lambda = ad.threshold.unwrap_or_else(|| curve.as_ref().expect("calibrated").lambda());
    let (test_n, test_a) = (score(&data.test)?, score(&data.ood_test)?);
    let op = rates_at(&test_n, &test_a, lambda);
    let hist = misrouting_report(&fpnet, &data.ood_test)?;
    let mut extra = BTreeMap::new();
    extra.insert("lambda".into(), lambda);
    extra.insert("normal_p95".into(), quantile(&test_n, 0.95));
    extra.insert("ood_median".into(), quantile(&test_a, 0.5));
    extra.insert("misrouted_classes".into(), hist.iter().filter(|&&h| h > 0.0).count() as f64);
    extra.insert("misrouted_max_fraction".into(), hist.iter().copied().fold(0.0, f64::max));
    if let Some(c) = &curve {
        extra.insert("calibration_f1".into(), c.best_point().f1);
        std::fs::write(ws.root.join("curves").join(format!("{id}-sweep.csv")), c.to_csv())?;
    }
    let mut csv = String::from("class,fraction\n");
    for (c, h) in hist.iter().enumerate() {
        csv.push_str(&format!("{c},{h}\n"));
    }
    std::fs::write(ws.root.join("curves").join(format!("{id}-misrouting.csv")), csv)?;
    let report = MetricsReport { method: "ADBlock".into(), detection: Some(op.metrics), ..Default::default() };
    Ok(Row { id, source: source.clone(), report, extra })
}
