use fpnet_core::channel::write_dataset;
use fpnet_core::codec::FeedbackKind;
use fpnet_core::fpnet::{EncoderConfig, TrainConfig};

use crate::data::DatasetKey;
use crate::runs::{compute_row, FpnetRun, Row, Source, Workspace};
use crate::HarnessError;

/// Writes `rows` to `reports/<name>.json`.
pub fn save_rows(ws: &Workspace, name: &str, rows: &[Row]) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(rows)?;
    std::fs::write(ws.path("reports").join(format!("{name}.json")), text + "\n")?;
    Ok(())
}

pub fn load_rows(ws: &Workspace, name: &str) -> Result<Vec<Row>, HarnessError> {
    let path = ws.path("reports").join(format!("{name}.json"));
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

fn rows(ws: &Workspace, specs: Vec<(String, Source)>) -> Result<Vec<Row>, HarnessError> {
    specs.iter().map(|(id, s)| compute_row(ws, id, s)).collect()
}

fn codec_specs(eval: DatasetKey) -> Vec<(String, Source)> {
    [FeedbackKind::Type0, FeedbackKind::Type1]
        .into_iter()
        .map(|k| (format!("{k:?}").to_lowercase(), Source::Codec { feedback: k, eval }))
        .collect()
}

/// Writes the raw splits of the base dataset.
pub fn gen_data(ws: &Workspace) -> Result<Vec<std::path::PathBuf>, HarnessError> {
    let data = ws.data(DatasetKey::Base)?;
    let mut out = Vec::new();
    for (name, batch) in [("train", &data.raw_train), ("val", &data.raw_val), ("test", &data.raw_test), ("ood", &data.raw_ood)] {
        let path = ws.path("data").join(format!("{name}.fpcsi"));
        write_dataset(batch, &path)?;
        out.push(path);
    }
    Ok(out)
}

/// Trains (or reloads) the configured joint model.
pub fn train(ws: &Workspace) -> Result<std::path::PathBuf, HarnessError> {
    let run = FpnetRun::base(&ws.cfg);
    ws.fpnet(&run)?;
    Ok(ws.checkpoint_path(&run.name()))
}

/// Main results table for an existing checkpoint.
pub fn eval(ws: &Workspace) -> Result<Vec<Row>, HarnessError> {
    let run = FpnetRun::base(&ws.cfg);
    let path = ws.checkpoint_path(&run.name());
    if !path.exists() {
        return Err(HarnessError::Missing(format!("checkpoint {} (run `fpnet train` first)", path.display())));
    }
    let mut specs = vec![("fpnet".to_string(), Source::Fpnet { run: run.clone(), eval: DatasetKey::Base })];
    specs.extend(codec_specs(DatasetKey::Base));
    let out = rows(ws, specs)?;
    save_rows(ws, "eval", &out)?;
    Ok(out)
}

/// Sequential network, KNN and standard codec rows.
pub fn baseline(ws: &Workspace) -> Result<Vec<Row>, HarnessError> {
    let run = FpnetRun::base(&ws.cfg);
    let mut specs = vec![
        ("sfpnet".to_string(), Source::Sequential { run }),
        ("knn".to_string(), Source::Knn { eval: DatasetKey::Base, grid: ws.cfg.sweeps.knn_k.clone() }),
    ];
    specs.extend(codec_specs(DatasetKey::Base));
    let out = rows(ws, specs)?;
    save_rows(ws, "baseline", &out)?;
    Ok(out)
}

fn curve_csv(ws: &Workspace, name: &str, header: &str, lines: impl Iterator<Item = String>) -> Result<(), HarnessError> {
    let mut s = format!("{header}\n");
    for l in lines {
        s.push_str(&l);
        s.push('\n');
    }
    std::fs::write(ws.path("curves").join(format!("{name}.csv")), s)?;
    Ok(())
}

pub fn sweep_alpha(ws: &Workspace, alphas: &[f64]) -> Result<Vec<Row>, HarnessError> {
    let specs = alphas
        .iter()
        .map(|&a| {
            let run = FpnetRun { train: TrainConfig { alpha: a, ..ws.cfg.train.clone() }, ..FpnetRun::base(&ws.cfg) };
            (format!("alpha-{a}"), Source::Fpnet { run, eval: DatasetKey::Base })
        })
        .collect();
    let out = rows(ws, specs)?;
    let lines = alphas.iter().zip(&out).map(|(a, r)| format!("{a},{},{}", opt(r.report.sgcs), opt(r.report.accuracy)));
    curve_csv(ws, "sweep-alpha", "alpha,sgcs,accuracy", lines)?;
    save_rows(ws, "sweep-alpha", &out)?;
    Ok(out)
}

pub fn sweep_bits(ws: &Workspace, codeword_lens: &[usize]) -> Result<Vec<Row>, HarnessError> {
    let mut specs: Vec<(String, Source)> = codeword_lens
        .iter()
        .map(|&n| {
            let run = FpnetRun { encoder: EncoderConfig { codeword_len: n, ..ws.cfg.encoder.clone() }, ..FpnetRun::base(&ws.cfg) };
            (format!("n-{n}"), Source::Fpnet { run, eval: DatasetKey::Base })
        })
        .collect();
    specs.extend(codec_specs(DatasetKey::Base));
    let out = rows(ws, specs)?;
    let lines = out.iter().map(|r| {
        format!("{},{},{},{}", r.id, r.report.feedback_bits.unwrap_or(0), opt(r.report.sgcs), opt(r.report.accuracy))
    });
    curve_csv(ws, "sweep-bits", "id,feedback_bits,sgcs,accuracy", lines)?;
    save_rows(ws, "sweep-bits", &out)?;
    Ok(out)
}

pub fn sweep_zones(ws: &Workspace, zone_counts: &[usize]) -> Result<Vec<Row>, HarnessError> {
    let specs = zone_counts
        .iter()
        .map(|&z| {
            // The base layout is the base run; no need to train it twice.
            let key = if z == ws.cfg.environment.n_zones { DatasetKey::Base } else { DatasetKey::Zones { zones: z } };
            (format!("zones-{z}"), Source::Fpnet { run: FpnetRun { dataset: key, ..FpnetRun::base(&ws.cfg) }, eval: key })
        })
        .collect();
    let out = rows(ws, specs)?;
    let lines = zone_counts.iter().zip(&out).map(|(z, r)| format!("{z},{},{}", opt(r.report.sgcs), opt(r.report.accuracy)));
    curve_csv(ws, "sweep-zones", "zones,sgcs,accuracy", lines)?;
    save_rows(ws, "sweep-zones", &out)?;
    Ok(out)
}

/// Base model on its own environment, on the perturbed one, and after
/// fine-tuning on the perturbed one at each sample budget.
pub fn drift(ws: &Workspace, intensity: f64, sizes: &[usize], epochs: usize) -> Result<Vec<Row>, HarnessError> {
    let run = FpnetRun::base(&ws.cfg);
    let moved = DatasetKey::Drift { intensity };
    let mut specs = vec![
        ("in-env".to_string(), Source::Fpnet { run: run.clone(), eval: DatasetKey::Base }),
        ("drifted".to_string(), Source::Fpnet { run: run.clone(), eval: moved }),
    ];
    for &n in sizes {
        specs.push((format!("ft-{n}"), Source::FineTuned { run: run.clone(), eval: moved, samples: n, epochs }));
    }
    let out = rows(ws, specs)?;
    let mut lines = Vec::new();
    for &n in sizes {
        let (_, logs) = ws.fine_tuned(&run, moved, n, epochs)?;
        lines.extend(logs.iter().map(|l| format!("{n},{},{},{}", l.epoch, opt(l.val_sgcs), opt(l.val_accuracy))));
    }
    curve_csv(ws, "drift", "samples,epoch,sgcs,accuracy", lines.into_iter())?;
    save_rows(ws, "drift", &out)?;
    Ok(out)
}

pub fn ad_eval(ws: &Workspace) -> Result<Vec<Row>, HarnessError> {
    let source = Source::Adblock { run: FpnetRun::base(&ws.cfg), ad: ws.cfg.adblock.clone() };
    let out = vec![compute_row(ws, "adblock", &source)?];
    save_rows(ws, "ad-eval", &out)?;
    Ok(out)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
