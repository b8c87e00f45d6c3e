//! File-producing entry points behind the command-line tool. Each command
//! writes its outputs plus a `manifest.json` with a digest of every file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::{
    analyze_sets, calibrate_pair, sweep, synthesize, tomography_set, Analysis, PipelineConfig,
    SegmentFormat, StateReport,
};
use crate::acf::{eigendecompose, estimate_acf_with, AcfOptions};
use crate::error::{Error, Result};
use crate::exec::ExecPolicy;
use crate::io;
use crate::signal::{SegmentSet, TemporalMode};
use crate::tomography::DensityMatrix;

/// Environment variable holding the default output directory.
pub const OUTPUT_DIR_ENV: &str = "TEMPMODE_OUT";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Record of one command run: what was asked for and what was written.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub config: PipelineConfig,
    pub files: Vec<FileEntry>,
}

struct OutDir {
    root: PathBuf,
    files: Vec<FileEntry>,
}

impl OutDir {
    fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(OutDir {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn record(&mut self, name: &str) -> Result<PathBuf> {
        let path = self.root.join(name);
        let bytes = fs::read(&path)?;
        self.files.push(FileEntry {
            path: name.to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
            bytes: bytes.len() as u64,
        });
        Ok(path)
    }

    fn json(&mut self, name: &str, value: &Value) -> Result<PathBuf> {
        fs::write(self.root.join(name), serde_json::to_vec_pretty(value)?)?;
        self.record(name)
    }

    fn segments(&mut self, stem: &str, set: &SegmentSet, format: SegmentFormat) -> Result<PathBuf> {
        let name = match format {
            SegmentFormat::Binary => format!("{stem}.seg"),
            SegmentFormat::Csv => format!("{stem}.csv"),
        };
        let path = self.root.join(&name);
        match format {
            SegmentFormat::Binary => io::save_segments(set, &path)?,
            SegmentFormat::Csv => io::write_segments_csv(set, fs::File::create(&path)?)?,
        }
        self.record(&name)
    }

    fn csv(&mut self, name: &str, header: &[String], rows: &[Vec<f64>]) -> Result<PathBuf> {
        let path = self.root.join(name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r.iter().map(|x| x.to_string()))?;
        }
        w.flush()?;
        self.record(name)
    }

    fn finish(mut self, command: &str, config: &PipelineConfig) -> Result<Manifest> {
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = Manifest {
            command: command.to_string(),
            seed: config.seed,
            config: config.clone(),
            files: self.files,
        };
        fs::write(
            self.root.join("manifest.json"),
            serde_json::to_vec_pretty(&manifest)?,
        )?;
        Ok(manifest)
    }
}

/// Reads a segment file, picking the format from the extension.
pub fn load_segment_file(path: &Path) -> Result<SegmentSet> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => io::read_segments_csv(fs::File::open(path)?),
        _ => io::load_segments(path),
    }
}

/// File stem for the state ensemble at one delay of a sweep list.
pub fn delay_stem(delta_t: f64) -> String {
    format!("state_{}ns", delta_t * 1e9)
}

/// Synthesizes the state and vacuum ensembles and writes them uncalibrated.
/// With a sweep list in the config, writes one state file per delay and a
/// single shared vacuum file.
pub fn cmd_simulate(config: &PipelineConfig) -> Result<Manifest> {
    let mut out = OutDir::create(&config.output.directory)?;
    let format = config.output.segment_format;
    let delays = &config.scenario.delta_t_sweep_s;
    if delays.is_empty() {
        let sim = synthesize(config, config.scenario.delta_t_s)?;
        out.segments("state", &sim.state, format)?;
        out.segments("vacuum", &sim.vacuum, format)?;
    } else {
        for (i, &d) in delays.iter().enumerate() {
            let sim = synthesize(config, d)?;
            out.segments(&delay_stem(d), &sim.state, format)?;
            if i == 0 {
                out.segments("vacuum", &sim.vacuum, format)?;
            }
        }
    }
    fs::write(out.root.join("config.toml"), config.to_toml_string()?)?;
    out.record("config.toml")?;
    out.finish("simulate", config)
}

fn load_calibrated(state: &Path, vacuum: &Path) -> Result<(SegmentSet, SegmentSet)> {
    let state = load_segment_file(state)?;
    let vacuum = load_segment_file(vacuum)?;
    state
        .grid()
        .ensure_matches(vacuum.grid(), "vacuum reference")?;
    let state = if state.is_calibrated() {
        state
    } else {
        calibrate_pair(state, vacuum.clone())?.0
    };
    let vacuum = if vacuum.is_calibrated() {
        vacuum
    } else {
        calibrate_pair(vacuum.clone(), vacuum)?.1
    };
    Ok((state, vacuum))
}

fn mode_rows(modes: &[&TemporalMode]) -> Vec<Vec<f64>> {
    let Some(first) = modes.first() else {
        return vec![];
    };
    let grid = *first.grid();
    let profiles: Vec<Vec<f64>> = modes.iter().map(|m| m.profile()).collect();
    grid.times()
        .enumerate()
        .map(|(i, t)| {
            std::iter::once(t)
                .chain(profiles.iter().map(|p| p[i]))
                .collect()
        })
        .collect()
}

fn analysis_json(config: &PipelineConfig, a: &Analysis) -> Value {
    json!({
        "config": config,
        "n_segments": a.state.n_segments_used(),
        "vacuum_segments": a.vacuum.n_segments_used(),
        "significance": a.significance,
        "significant_modes": a.significance.significant_indices(),
        "reference_overlaps": a.references,
        "degenerate": a.state.degeneracy_flags(),
    })
}

/// Calibrates against the vacuum file, extracts the mode basis and writes the
/// spectrum, mode profiles and significance table.
pub fn cmd_analyze(config: &PipelineConfig, state: &Path, vacuum: &Path) -> Result<Manifest> {
    config.validate()?;
    let (state, vacuum) = load_calibrated(state, vacuum)?;
    let delta_t = config.scenario.delta_t_s;
    let a = analyze_sets(config, &state, &vacuum, delta_t)?;
    let mut out = OutDir::create(&config.output.directory)?;

    let n_export = config.analysis.export_modes.min(a.state.len());
    out.json(
        "spectrum.json",
        &json!({
            "config": config,
            "state": a.state.eigenvalues(),
            "vacuum": a.vacuum.eigenvalues(),
            "z_scores": a.significance.z_scores,
        }),
    )?;
    let times: Vec<f64> = a.grid.times().collect();
    let exported: Vec<Vec<f64>> = (0..n_export).map(|k| a.state.mode(k).profile()).collect();
    let references: Vec<Value> = a
        .reference_modes
        .iter()
        .map(|(name, m)| json!({ "name": name, "profile": m.profile() }))
        .collect();
    out.json(
        "modes.json",
        &json!({
            "config": config,
            "time_s": times,
            "modes": exported,
            "references": references,
        }),
    )?;
    out.json("analysis.json", &analysis_json(config, &a))?;

    if config.output.csv {
        let rows: Vec<Vec<f64>> = a
            .state
            .eigenvalues()
            .iter()
            .zip(a.vacuum.eigenvalues())
            .zip(&a.significance.z_scores)
            .enumerate()
            .map(|(k, ((s, v), z))| vec![k as f64, *s, *v, *z])
            .collect();
        let header = ["index", "state", "vacuum", "z"].map(String::from);
        out.csv("spectrum.csv", &header, &rows)?;
        let modes: Vec<&TemporalMode> = (0..n_export).map(|k| a.state.mode(k)).collect();
        let header: Vec<String> = std::iter::once("time_s".to_string())
            .chain((0..n_export).map(|k| format!("mode{k}")))
            .collect();
        out.csv("modes.csv", &header, &mode_rows(&modes))?;
    }
    if config.output.save_kernels {
        let opts = AcfOptions {
            subtract_mean: config.analysis.subtract_mean,
        };
        let kernel = estimate_acf_with(&state, opts, ExecPolicy::default())?;
        io::save_kernel(&kernel, &out.root.join("kernel.ker"))?;
        out.record("kernel.ker")?;
        io::save_basis(&eigendecompose(&kernel)?, &out.root.join("basis.bas"))?;
        out.record("basis.bas")?;
    }
    out.finish("analyze", config)
}

fn density_json(rho: &DensityMatrix) -> Value {
    let e = rho.entries();
    let part = |f: fn(&num_complex::Complex64) -> f64| -> Vec<Vec<f64>> {
        (0..rho.dim())
            .map(|m| (0..rho.dim()).map(|n| f(&e[(m, n)])).collect())
            .collect()
    };
    json!({
        "dim": rho.dim(),
        "re": part(|z| z.re),
        "im": part(|z| z.im),
        "purity": rho.purity(),
        "mean_photon_number": rho.mean_photon_number(),
        "min_eigenvalue": rho.min_eigenvalue(),
    })
}

fn state_json(config: &PipelineConfig, r: &StateReport) -> Value {
    json!({
        "config": config,
        "mode_source": r.mode_source,
        "reference_overlap": r.reference_overlap,
        "iterations": r.maxlik.iterations,
        "converged": r.maxlik.converged,
        "monotone": r.maxlik.monotone,
        "diagonal_only": r.maxlik.diagonal_only,
        "physical_iterates": r.maxlik.physical_iterates,
        "log_likelihood": r.maxlik.log_likelihood,
        "photon_distribution": r.photon_distribution,
        "loss_corrected": r.loss_corrected,
        "density": density_json(&r.maxlik.rho),
    })
}

/// Projects onto the chosen mode and writes the reconstructed state.
pub fn cmd_tomography(config: &PipelineConfig, state: &Path, vacuum: &Path) -> Result<Manifest> {
    config.validate()?;
    let (state, _) = load_calibrated(state, vacuum)?;
    let r = tomography_set(config, &state, config.scenario.delta_t_s)?;
    if !r.maxlik.converged {
        log::warn!(
            "reconstruction stopped at the iteration cap ({})",
            r.maxlik.iterations
        );
    }
    let mut out = OutDir::create(&config.output.directory)?;
    out.json("density.json", &state_json(config, &r))?;
    let w = &r.wigner;
    let values: Vec<Vec<f64>> = (0..w.x_axis.len())
        .map(|i| (0..w.p_axis.len()).map(|j| w.values[(i, j)]).collect())
        .collect();
    out.json(
        "wigner.json",
        &json!({
            "config": config,
            "x": w.x_axis,
            "p": w.p_axis,
            "values": values,
            "at_origin": w.at_origin(),
            "min": w.min(),
            "integral": w.integral(),
        }),
    )?;
    if config.output.csv {
        let rows: Vec<Vec<f64>> = r
            .photon_distribution
            .iter()
            .enumerate()
            .map(|(n, p)| vec![n as f64, *p])
            .collect();
        out.csv("photons.csv", &["n", "p"].map(String::from), &rows)?;
    }
    out.finish("tomography", config)
}

/// Runs the full pipeline at every configured delay.
pub fn cmd_sweep(config: &PipelineConfig) -> Result<Manifest> {
    config.validate()?;
    let table = sweep(config)?;
    let mut out = OutDir::create(&config.output.directory)?;
    out.json(
        "sweep.json",
        &json!({ "config": config, "measured": table.measured, "analytic": table.analytic }),
    )?;
    if config.output.csv {
        let rows: Vec<Vec<f64>> = table
            .measured
            .iter()
            .zip(&table.analytic)
            .map(|(m, a)| {
                vec![
                    m.delta_t_s,
                    m.kappa0,
                    m.kappa1,
                    a.kappa0,
                    a.kappa1,
                    m.predicted_plus,
                    m.predicted_minus,
                ]
            })
            .collect();
        let header = [
            "delta_t_s",
            "kappa0",
            "kappa1",
            "kernel_kappa0",
            "kernel_kappa1",
            "predicted_plus",
            "predicted_minus",
        ]
        .map(String::from);
        out.csv("sweep.csv", &header, &rows)?;
    }
    out.finish("sweep", config)
}

/// Checks a manifest's digests against the files on disk.
pub fn verify_manifest(dir: &Path) -> Result<bool> {
    let text = fs::read_to_string(dir.join("manifest.json"))?;
    let v: Value = serde_json::from_str(&text)?;
    let files = v["files"]
        .as_array()
        .ok_or_else(|| Error::Format("manifest without file list".into()))?;
    for f in files {
        let (Some(path), Some(digest)) = (f["path"].as_str(), f["sha256"].as_str()) else {
            return Err(Error::Format(
                "manifest entry without path or digest".into(),
            ));
        };
        let bytes = fs::read(dir.join(path))?;
        if hex::encode(Sha256::digest(&bytes)) != digest {
            return Ok(false);
        }
    }
    Ok(true)
}
