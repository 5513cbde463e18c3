//! The pipeline steps behind each subcommand.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use dsp_core::{
    build_layout, class_average_precisions, dsp_encode, gmm_fit_traced, gmm_priors_report, load_grid,
    merge_scales, pca_apply, pca_fit, per_class_accuracy, predict, evaluate_accuracy, svm_train, ClassId,
    DescriptorGrid, GmmDocument, GmmModel, LinearModel, PcaModel,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::features::{FeatureFile, FeatureRecord};
use crate::manifest::{Manifest, ManifestEntry};
use crate::output::write_atomic;

/// Two scales closer than this are the same scale.
pub const SCALE_MATCH_TOLERANCE: f64 = 1e-6;

fn same_scale(a: f64, b: f64) -> bool {
    (a - b).abs() <= SCALE_MATCH_TOLERANCE
}

fn load_manifest(path: &Path) -> Result<Manifest> {
    let manifest = Manifest::load(path)?;
    ensure!(!manifest.entries.is_empty(), "manifest {} lists no grids", path.display());
    manifest.check_files()?;
    Ok(manifest)
}

fn load_entry(entry: &ManifestEntry) -> Result<(f64, DescriptorGrid)> {
    let grid = load_grid(&entry.path).with_context(|| format!("manifest line {}", entry.line))?;
    Ok((entry.scale.unwrap_or(grid.scale_tag()), grid))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

fn load_gmm(path: &Path) -> Result<(GmmDocument, GmmModel)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading GMM {}", path.display()))?;
    let doc = GmmDocument::from_json(&text).with_context(|| format!("parsing GMM {}", path.display()))?;
    let model = doc.model().with_context(|| format!("invalid GMM {}", path.display()))?;
    Ok((doc, model))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainGmmSummary {
    pub grids: usize,
    pub descriptors: usize,
    pub iterations: usize,
    pub converged: bool,
}

/// Fits the descriptor dictionary on the manifest's grids and writes it as JSON.
pub fn train_gmm(manifest: &Path, config: &PipelineConfig, output: &Path) -> Result<TrainGmmSummary> {
    config.validate()?;
    let manifest = load_manifest(manifest)?;
    let loaded: Vec<(f64, DescriptorGrid)> = manifest.entries.par_iter().map(load_entry).collect::<Result<_>>()?;
    let grids: Vec<&DescriptorGrid> = loaded
        .iter()
        .filter(|(s, _)| config.gmm_all_scales || same_scale(*s, 1.0))
        .map(|(_, g)| g)
        .collect();
    ensure!(
        !grids.is_empty(),
        "no scale-1.0 grids in the manifest; tag them or train on all scales"
    );
    let d = grids[0].d();
    ensure!(
        grids.iter().all(|g| g.d() == d),
        "grids disagree on descriptor dimension"
    );

    // Cells each grid contributes, drawn once so PCA and GMM see the same sample.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let picks: Vec<Vec<usize>> = grids
        .iter()
        .map(|g| {
            let t = g.h() * g.w();
            match config.max_descriptors_per_image {
                Some(cap) if cap < t => {
                    let mut idx = rand::seq::index::sample(&mut rng, t, cap).into_vec();
                    idx.sort_unstable();
                    idx
                }
                _ => (0..t).collect(),
            }
        })
        .collect();

    let pca = match config.pca_q {
        Some(q) => {
            ensure!(q <= d, "pca_q = {q} exceeds descriptor dimension {d}");
            let raw: Vec<&[f64]> = grids
                .iter()
                .zip(&picks)
                .flat_map(|(g, idx)| idx.iter().map(|&i| &g.values()[i * d..(i + 1) * d]))
                .collect();
            Some(pca_fit(&raw, q).context("fitting PCA")?)
        }
        None => None,
    };

    let mut pooled: Vec<Vec<f64>> = Vec::new();
    for (g, idx) in grids.iter().zip(&picks) {
        let prepared = prepare(g, pca.as_ref(), config)?;
        let dd = prepared.d();
        pooled.extend(idx.iter().map(|&i| prepared.values()[i * dd..(i + 1) * dd].to_vec()));
    }

    let fit = config.gmm_fit_config();
    let report = gmm_fit_traced(&pooled, &fit, |_, _| {}).context("fitting GMM")?;
    let mut doc = GmmDocument::from_model(&report.model, Some(fit));
    doc.pca = pca;
    doc.provenance = Some(serde_json::json!({
        "config": config.to_value(),
        "grids": grids.len(),
        "descriptors": pooled.len(),
    }));
    write_json(output, &doc)?;
    Ok(TrainGmmSummary {
        grids: grids.len(),
        descriptors: pooled.len(),
        iterations: report.log_likelihoods.len(),
        converged: report.converged,
    })
}

/// Optional PCA projection, then the configured normalization.
fn prepare(grid: &DescriptorGrid, pca: Option<&PcaModel>, config: &PipelineConfig) -> Result<DescriptorGrid> {
    let projected;
    let grid = match pca {
        Some(p) => {
            projected = pca_apply(p, grid)?;
            &projected
        }
        None => grid,
    };
    Ok(grid.normalize(config.normalization)?)
}

fn encode_image(
    image: &str,
    entries: &[&ManifestEntry],
    model: &GmmModel,
    pca: Option<&PcaModel>,
    config: &PipelineConfig,
) -> Result<FeatureRecord> {
    let loaded: Vec<(f64, DescriptorGrid)> = entries.iter().map(|e| load_entry(e)).collect::<Result<_>>()?;
    let mut per_scale = Vec::with_capacity(config.scales.len());
    for &s in config.scales.scales() {
        let matches: Vec<&DescriptorGrid> = loaded.iter().filter(|(t, _)| same_scale(*t, s)).map(|(_, g)| g).collect();
        let grid = match matches.as_slice() {
            [g] => *g,
            [] => bail!("image {image:?}: no grid for scale {s}"),
            _ => bail!("image {image:?}: {} grids for scale {s}", matches.len()),
        };
        let layout = build_layout(grid.h(), grid.w(), config.levels)
            .with_context(|| format!("image {image:?} at scale {s}"))?;
        let grid = match pca {
            Some(p) => pca_apply(p, grid).with_context(|| format!("image {image:?} at scale {s}"))?,
            None => grid.clone(),
        };
        let v = dsp_encode(&grid, model, &layout, config.normalization)
            .with_context(|| format!("image {image:?} at scale {s}"))?;
        per_scale.push(v);
    }
    Ok(FeatureRecord {
        id: image.to_string(),
        labels: entries[0].labels.clone(),
        values: merge_scales(&per_scale)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodeSummary {
    pub images: usize,
    pub dim: usize,
}

/// Encodes every image of the manifest at every configured scale and writes
/// one merged record per image, in manifest order.
pub fn encode(manifest: &Path, gmm: &Path, config: &PipelineConfig, output: &Path) -> Result<EncodeSummary> {
    let (doc, model) = load_gmm(gmm)?;
    // The dictionary decides K and the projection; record what was used.
    let mut config = config.clone();
    config.k = model.components();
    config.pca_q = doc.pca.as_ref().map(PcaModel::q);
    config.validate()?;

    let manifest = load_manifest(manifest)?;
    let images = manifest.images()?;
    let records: Vec<FeatureRecord> = images
        .par_iter()
        .map(|(id, entries)| encode_image(id, entries, &model, doc.pca.as_ref(), &config))
        .collect::<Result<_>>()?;

    let m = if config.levels == 2 { 6 } else { 1 };
    let dim = 2 * m * model.dim() * model.components();
    let meta = serde_json::json!({
        "config": config.to_value(),
        "gmm": {"K": model.components(), "d": model.dim()},
    });
    let file = FeatureFile::new(dim, meta, records)?;
    file.save(output)?;
    Ok(EncodeSummary {
        images: file.records.len(),
        dim,
    })
}

/// Trained classifier plus the configuration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(flatten)]
    pub model: LinearModel,
    pub config: PipelineConfig,
}

impl ModelFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading model {}", path.display()))?;
        let file: Self = serde_json::from_str(&text).with_context(|| format!("parsing model {}", path.display()))?;
        file.model.validate()?;
        Ok(file)
    }
}

pub fn train_svm(features: &Path, config: &PipelineConfig, output: &Path) -> Result<LinearModel> {
    config.validate()?;
    let data = FeatureFile::load(features)?.dataset()?;
    let model = svm_train(&data, &config.svm_config())?;
    write_json(
        output,
        &ModelFile {
            model: model.clone(),
            config: config.clone(),
        },
    )?;
    Ok(model)
}

fn check_dim(model: &LinearModel, file: &FeatureFile) -> Result<()> {
    ensure!(
        model.dim() == file.dim,
        "model expects {}-dimensional features but the file holds {}",
        model.dim(),
        file.dim
    );
    Ok(())
}

/// Tab-separated predictions: id, predicted class, then one score per class.
pub fn predict_table(features: &Path, model: &Path) -> Result<String> {
    let model = ModelFile::load(model)?.model;
    let file = FeatureFile::load(features)?;
    check_dim(&model, &file)?;
    let mut out = String::from("id\tpredicted");
    for c in &model.classes {
        write!(out, "\tscore_{c}")?;
    }
    out.push('\n');
    for r in &file.records {
        let (class, scores) = predict(&model, &r.values)?;
        write!(out, "{}\t{class}", r.id)?;
        for s in scores {
            write!(out, "\t{s:.6}")?;
        }
        out.push('\n');
    }
    Ok(out)
}

/// Accuracy report; per-class average precision and mAP are added when any
/// sample carries several labels, or when `with_map` is set.
pub fn eval_report(features: &Path, model: &Path, with_map: bool) -> Result<String> {
    let model = ModelFile::load(model)?.model;
    let file = FeatureFile::load(features)?;
    check_dim(&model, &file)?;
    let data = file.dataset()?;

    let mut counts: BTreeMap<ClassId, usize> = BTreeMap::new();
    for labels in data.labels() {
        for &l in labels {
            *counts.entry(l).or_default() += 1;
        }
    }
    let accuracy = evaluate_accuracy(&model, &data)?;
    let per_class = per_class_accuracy(&model, &data)?;

    let mut out = String::new();
    writeln!(out, "samples\t{}", data.len())?;
    writeln!(out, "accuracy\t{accuracy:.6}")?;
    writeln!(out, "class\tsamples\taccuracy")?;
    for (class, acc) in &per_class {
        writeln!(out, "{class}\t{}\t{acc:.6}", counts[class])?;
    }
    if with_map || data.is_multi_label() {
        let aps = class_average_precisions(&model, &data)?;
        writeln!(out, "class\taverage_precision")?;
        let mut defined = Vec::new();
        for (class, ap) in aps {
            match ap {
                Some(ap) => {
                    defined.push(ap);
                    writeln!(out, "{class}\t{ap:.6}")?;
                }
                None => writeln!(out, "{class}\tundefined")?,
            }
        }
        ensure!(!defined.is_empty(), "no class has a positive sample, mAP is undefined");
        let map = defined.iter().sum::<f64>() / defined.len() as f64;
        writeln!(out, "mAP\t{map:.6}")?;
    }
    Ok(out)
}

/// Mixture weights sorted descending with running totals, as TSV.
pub fn gmm_stats_table(gmm: &Path) -> Result<String> {
    let (_, model) = load_gmm(gmm)?;
    let mut out = String::from("rank\tcomponent\tweight\tcumulative\n");
    let mut cumulative = 0.0;
    for (rank, (component, weight)) in gmm_priors_report(&model).into_iter().enumerate() {
        cumulative += weight;
        writeln!(out, "{}\t{component}\t{weight:.6}\t{cumulative:.6}", rank + 1)?;
    }
    Ok(out)
}
