use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use serde_json::{json, Value};

use hepacut_core::cnn::{read_weights, write_weights, Network};
use hepacut_core::metrics::{evaluate, format_report_table, format_stats_block, mask_volume_ml, volume_stats, MetricReport};
use hepacut_core::pipeline::{preprocess, refine, Refinement};
use hepacut_core::volume::{
    load_label_mask, load_probability_map, load_volume, make_phantom, pad_crop_axis, resample, save_grid, save_volume,
    ElementType, PhantomSpec,
};
use hepacut_core::{Error as CoreError, ProbabilityMap, Volume};

use crate::config::{NetworkKind, PipelineConfig, ProbabilitySource, WeightInit};
use crate::error::{CliError, CliResult, Context};
use crate::provenance::Provenance;

fn out_path(cfg: &PipelineConfig, name: &str) -> CliResult<PathBuf> {
    fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", cfg.out_dir.display())))?;
    Ok(cfg.out_dir.join(name))
}

fn load_input_volume(cfg: &PipelineConfig, prov: &mut Provenance) -> CliResult<Volume> {
    let path = cfg.require_volume()?;
    let vol = load_volume(path).ctx(format!("loading volume {}", path.display()))?;
    prov.input("volume", path, Some(vol.dims()))?;
    Ok(vol)
}

/// Pad/crop, resample, window, diffuse.
pub fn cmd_preprocess(cfg: &PipelineConfig) -> CliResult<PathBuf> {
    let mut prov = Provenance::start("preprocess", cfg);
    let mut vol = load_input_volume(cfg, &mut prov)?;
    let t = Instant::now();
    if let Some(n) = cfg.slices {
        let fill = vol.min_max().0;
        vol = pad_crop_axis(&vol, 2, n, fill)?;
    }
    let out = preprocess(&vol, &cfg.preprocess)?;
    info!("preprocessing: {:.3} s", t.elapsed().as_secs_f64());
    let path = out_path(cfg, "preprocessed.mha")?;
    save_volume(&out, &path).ctx("writing preprocessed volume")?;
    prov.note("seconds", json!(t.elapsed().as_secs_f64()));
    prov.write(&path, Some(out.dims()), Some(out.spacing()))?;
    Ok(path)
}

fn run_network(cfg: &PipelineConfig, weights: &Path, vol: &Volume, prov: &mut Provenance) -> CliResult<ProbabilityMap> {
    let spec = cfg.network.spec();
    if vol.dims() != spec.input.dims {
        return Err(CliError::data(format!(
            "volume is {:?} but the {:?} network expects {:?}; resample first",
            vol.dims(),
            cfg.network,
            spec.input.dims
        )));
    }
    if cfg.network == NetworkKind::Full {
        warn!("the full network needs on the order of 10^12 multiply-adds per pass");
    }
    let net = read_weights::<f32>(spec, weights).ctx(format!("loading weights {}", weights.display()))?;
    prov.input("weights", weights, None)?;
    let t = Instant::now();
    let prob = net.predict(vol)?;
    info!("inference: {:.3} s", t.elapsed().as_secs_f64());
    prov.note("inference_seconds", json!(t.elapsed().as_secs_f64()));
    Ok(prob)
}

/// Run the configured network on the input volume.
pub fn cmd_infer(cfg: &PipelineConfig) -> CliResult<PathBuf> {
    let mut prov = Provenance::start("infer", cfg);
    let weights = cfg
        .weights
        .as_deref()
        .ok_or_else(|| CliError::config("infer needs `weights`"))?;
    let vol = load_input_volume(cfg, &mut prov)?;
    let prob = run_network(cfg, weights, &vol, &mut prov)?;
    let path = out_path(cfg, "probability.mha")?;
    save_volume(&prob, &path).ctx("writing probability map")?;
    prov.write(&path, Some(prob.dims()), Some(prob.spacing()))?;
    Ok(path)
}

/// What `refine` produced.
#[derive(Debug)]
pub struct RefineOutput {
    pub mask_path: PathBuf,
    pub refinement: Refinement,
}

fn refine_details(r: &Refinement) -> Value {
    let timings: serde_json::Map<String, Value> = r
        .timings
        .0
        .iter()
        .map(|(n, d)| (n.to_string(), json!(d.as_secs_f64())))
        .collect();
    json!({
        "gamma": r.field.gamma,
        "intensity_range": [r.range.zeta, r.range.eta],
        "initial_region_voxels": r.l0.count(),
        "mask_voxels": r.mask.count(),
        "mask_volume_ml": mask_volume_ml(&r.mask),
        "initial_energy": r.initial_energy,
        "final_energy": r.final_energy,
        "max_flow": r.flow,
        "timings_seconds": timings,
        "total_seconds": r.timings.total().as_secs_f64(),
    })
}

/// Graph-cut refinement of a likelihood map.
pub fn cmd_refine(cfg: &PipelineConfig) -> CliResult<RefineOutput> {
    let mut prov = Provenance::start("refine", cfg);
    let source = cfg.probability_source()?;
    let vol = load_input_volume(cfg, &mut prov)?;
    let prob = match source {
        ProbabilitySource::File(p) => {
            let m = load_probability_map(&p).ctx(format!("loading probability map {}", p.display()))?;
            prov.input("probability", &p, Some(m.dims()))?;
            m
        }
        ProbabilitySource::Weights(w) => {
            let m = run_network(cfg, &w, &vol, &mut prov)?;
            if m.dims() == vol.dims() {
                m
            } else {
                info!("resampling likelihood {:?} onto volume {:?}", m.dims(), vol.dims());
                let r = resample(&m, vol.dims())?;
                ProbabilityMap::new(vol.with_data(r.into_data())?)?
            }
        }
    };
    let r = match refine(&vol, &prob, &cfg.energy) {
        Err(CoreError::EmptyRegion(msg)) => {
            return Err(CliError::data(format!("empty initial region: {msg}")));
        }
        other => other?,
    };
    let tol = 1e-9 * r.initial_energy.abs().max(1.0);
    if r.final_energy > r.initial_energy + tol {
        return Err(CliError::numerical(format!(
            "refined energy {} exceeds the initial energy {}",
            r.final_energy, r.initial_energy
        )));
    }
    let path = out_path(cfg, "mask.mha")?;
    save_grid(&r.mask, &path, ElementType::UChar).ctx("writing mask")?;
    if cfg.export_fields {
        for (name, grid) in [("threshold_map.mha", &r.field.threshold), ("region_score.mha", &r.field.region)] {
            let p = out_path(cfg, name)?;
            save_grid(grid, &p, ElementType::Float).ctx(format!("writing {name}"))?;
        }
    }
    prov.note("refinement", refine_details(&r));
    prov.write(&path, Some(r.mask.dims()), Some(r.mask.spacing()))?;
    Ok(RefineOutput {
        mask_path: path,
        refinement: r,
    })
}

fn case_name(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| p.display().to_string())
}

/// Evaluate each result mask against its reference and write a report table.
pub fn cmd_evaluate(cfg: &PipelineConfig) -> CliResult<PathBuf> {
    let mut prov = Provenance::start("evaluate", cfg);
    if cfg.result.is_empty() {
        return Err(CliError::config("evaluate needs at least one `result` mask"));
    }
    if cfg.result.len() != cfg.truth.len() {
        return Err(CliError::config(format!(
            "{} result masks but {} reference masks",
            cfg.result.len(),
            cfg.truth.len()
        )));
    }
    let mut rows: Vec<(String, MetricReport)> = Vec::new();
    let mut volumes = Vec::new();
    let mut cases = Vec::new();
    for (res, truth) in cfg.result.iter().zip(&cfg.truth) {
        let a = load_label_mask(res).ctx(format!("loading mask {}", res.display()))?;
        let b = load_label_mask(truth).ctx(format!("loading reference {}", truth.display()))?;
        for (file, other) in [(res, b.dims()), (truth, a.dims())] {
            if let Some(d) = crate::provenance::recorded_dims(file)? {
                if d != other {
                    return Err(CliError::data(format!(
                        "{} was produced with dims {d:?}, which do not match {other:?}",
                        file.display()
                    )));
                }
            }
        }
        if a.dims() != b.dims() {
            return Err(CliError::data(format!(
                "{} is {:?} but {} is {:?}",
                res.display(),
                a.dims(),
                truth.display(),
                b.dims()
            )));
        }
        prov.input("result", res, Some(a.dims()))?;
        prov.input("truth", truth, Some(b.dims()))?;
        let m = evaluate(&a, &b).ctx(format!("evaluating {}", res.display()))?;
        let name = case_name(res);
        let (va, vm) = (mask_volume_ml(&a), mask_volume_ml(&b));
        cases.push(json!({
            "case": name,
            "metrics": m.values(),
            "scores": m.scores,
            "total": m.total,
            "volume_ml": [va, vm],
        }));
        volumes.push((va, vm));
        rows.push((name, m));
    }
    let mut text = format_report_table(&rows);
    if volumes.len() >= 3 {
        match volume_stats(&volumes) {
            Ok(s) => {
                text.push('\n');
                text.push_str(&format_stats_block(&s));
            }
            Err(e) => warn!("volume statistics skipped: {e}"),
        }
    }
    let path = out_path(cfg, "report.tsv")?;
    fs::write(&path, &text).map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
    prov.note("cases", Value::Array(cases));
    prov.write(&path, None, None)?;
    Ok(path)
}

/// Paths written by `phantom`.
#[derive(Clone, Debug)]
pub struct PhantomOutput {
    pub volume: PathBuf,
    pub truth: PathBuf,
    pub probability: PathBuf,
}

/// Synthesise a phantom case.
pub fn cmd_phantom(cfg: &PipelineConfig) -> CliResult<PhantomOutput> {
    let mut prov = Provenance::start("phantom", cfg);
    let spec = match &cfg.phantom_spec {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::config(format!("cannot read phantom spec {}: {e}", p.display())))?;
            prov.input("phantom_spec", p, None)?;
            PhantomSpec::parse(&text)?
        }
        None => PhantomSpec::default(),
    };
    let ph = make_phantom(&spec)?;
    prov.note("phantom", json!(spec.to_text()));
    let out = PhantomOutput {
        volume: out_path(cfg, "volume.mha")?,
        truth: out_path(cfg, "truth.mha")?,
        probability: out_path(cfg, "probability.mha")?,
    };
    save_volume(&ph.volume, &out.volume).ctx("writing phantom volume")?;
    save_grid(&ph.truth, &out.truth, ElementType::UChar).ctx("writing phantom truth")?;
    save_volume(&ph.probability, &out.probability).ctx("writing phantom probability map")?;
    let (d, s) = (ph.volume.dims(), ph.volume.spacing());
    for p in [&out.volume, &out.truth, &out.probability] {
        prov.write(p, Some(d), Some(s))?;
    }
    Ok(out)
}

/// Write random or zero weights for the configured network.
pub fn cmd_init_weights(cfg: &PipelineConfig) -> CliResult<PathBuf> {
    let mut prov = Provenance::start("init-weights", cfg);
    let spec = cfg.network.spec();
    let net = match cfg.weight_init {
        WeightInit::He => Network::<f32>::random(spec, cfg.seed)?,
        WeightInit::Zeros => Network::<f32>::zeros(spec)?,
    };
    let path = out_path(cfg, "weights.bin")?;
    write_weights(&net, &path).ctx("writing weights")?;
    prov.note("parameters", json!(net.spec.parameter_count()?));
    prov.write(&path, None, None)?;
    Ok(path)
}
