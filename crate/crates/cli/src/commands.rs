use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::Path;

use dcom_core::dcomsim::{self, simulate_lanczos, BaselineConfig, HardwareConfig};
use dcom_core::decomp::BatchActivations;
use dcom_core::harness::{
    estimate_plan, run_convergence_bench, sweep as run_sweep, write_sweep_csv, DecompPlan, MatrixSource, ModelPlan,
    OutlierSynthetic, SweepKey, SweepSpec,
};
use dcom_core::lanczos::{lanczos_svd, reconstruction_error, write_convergence_csv, LanczosOptions};
use dcom_core::linalg::io::{read_csv, read_dcm1, write_csv, write_dcm1};
use dcom_core::linalg::{relative_distance, DenseMatrix, LinalgError};
use dcom_core::outlier::{
    calibrate_thresholds, extract_outlier_channels, LayerSamples, MultiTrackDecomposition, ThresholdTable,
};
use dcom_core::synth::{planted_outliers, spectrum_matrix, ActivationProfile, Spectrum};
use serde::de::DeserializeOwned;
use serde_json::json;

use crate::error::CliError;
use crate::samples::load_samples;
use crate::{
    BenchArgs, CalibrateArgs, ConfigArgs, DecomposeArgs, EstimateArgs, LanczosArgs, SimulateArgs, SweepArgs, SynthArgs,
    SynthKind,
};

impl LanczosArgs {
    fn options(&self) -> LanczosOptions {
        LanczosOptions {
            eps: self.eps,
            seed: self.seed,
            oversample: self.oversample,
            ..LanczosOptions::default()
        }
    }
}

pub(crate) fn read_matrix(path: &Path) -> Result<DenseMatrix, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let parsed = if is_csv {
        read_csv(BufReader::new(file))
    } else {
        read_dcm1(BufReader::new(file))
    };
    parsed.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn write_matrix(path: &Path, m: &DenseMatrix) -> Result<(), CliError> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        Ok(write_csv(BufWriter::new(file), m)?)
    } else {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        write_dcm1(BufWriter::new(file), m).map_err(|e| match e {
            LinalgError::Io(source) => CliError::io(path, source),
            other => other.into(),
        })
    }
}

fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn load_or_default<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    path.map_or_else(|| Ok(T::default()), load_json)
}

/// Runs `f` against the file at `out`, or stdout when absent.
fn emit<F>(out: Option<&Path>, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> Result<(), CliError>,
{
    match out {
        Some(path) => {
            let file = File::create(path).map_err(|e| CliError::io(path, e))?;
            let mut w = BufWriter::new(file);
            f(&mut w)?;
            w.flush().map_err(|e| CliError::io(path, e))
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            f(&mut w)?;
            w.flush().map_err(|e| CliError::io(Path::new("<stdout>"), e))
        }
    }
}

fn write_line(w: &mut dyn Write, text: &str) -> Result<(), CliError> {
    writeln!(w, "{text}").map_err(|e| CliError::io(Path::new("<output>"), e))
}

fn parse_spectrum(s: &str) -> Result<Spectrum, CliError> {
    match s {
        "flat" => Ok(Spectrum::Flat),
        "geometric" => Ok(Spectrum::Geometric),
        _ => s
            .strip_prefix("rank:")
            .and_then(|r| r.parse().ok())
            .map(|rank| Spectrum::PlantedRank { rank })
            .ok_or_else(|| CliError::Usage(format!("unknown spectrum {s:?}; expected flat, geometric or rank:N"))),
    }
}

struct Configs {
    model: ModelPlan,
    hw: HardwareConfig,
    baseline: BaselineConfig,
}

impl ConfigArgs {
    fn load(&self) -> Result<Configs, CliError> {
        Ok(Configs {
            model: load_or_default(self.model.as_deref())?,
            hw: load_or_default(self.hw.as_deref())?,
            baseline: load_or_default(self.baseline.as_deref())?,
        })
    }
}

pub fn decompose(args: DecomposeArgs) -> Result<(), CliError> {
    let a = read_matrix(&args.matrix)?;
    let opts = args.lanczos.options();
    let (rows, cols) = a.shape();

    let (outliers, mt) = if args.outliers {
        let (t, c) = match &args.thresholds {
            Some(path) => {
                let table = ThresholdTable::load(path).map_err(|e| CliError::Config {
                    path: path.clone(),
                    message: e.to_string(),
                })?;
                let e = table
                    .get(args.layer)
                    .ok_or_else(|| CliError::Input(format!("{}: no entry for layer {}", path.display(), args.layer)))?;
                (e.threshold, e.count_fraction)
            }
            None => {
                let samples = [LayerSamples {
                    layer: args.layer,
                    batches: vec![BatchActivations::new(vec![a.clone()])?],
                }];
                let table = calibrate_thresholds(&samples, args.target_fraction, args.count_fraction)?;
                let e = table.get(args.layer).expect("calibrated layer present");
                (e.threshold, e.count_fraction)
            }
        };
        let split = extract_outlier_channels(&a, t, c)?;
        (Some((t, c)), Some(split))
    } else {
        (None, None)
    };

    let target = mt.as_ref().map_or(&a, |s| &s.residual);
    if args.rank == 0 || args.rank > target.rows().min(target.cols()) {
        return Err(CliError::Input(format!(
            "rank {} outside [1, {}] for a {}x{} matrix",
            args.rank,
            target.rows().min(target.cols()),
            target.rows(),
            target.cols()
        )));
    }
    let (d, trace) = lanczos_svd(target, args.rank, &opts)?;

    let (relative_error, outlier_json, split_parts) = match (mt, outliers) {
        (Some(split), Some((t, c))) => {
            let channels = split.outlier_idx.clone();
            let m = MultiTrackDecomposition::new(d.clone(), split.outlier_cols, split.outlier_idx, split.hidden)?;
            let err = relative_distance(&m.reconstruct(), &a)?;
            let meta = m.metadata();
            let j = json!({
                "threshold": t,
                "count_fraction": c,
                "extracted_channels": meta.extracted_channels,
                "fraction": meta.fraction,
                "channels": channels,
            });
            (err, j, Some(m))
        }
        _ => (reconstruction_error(&a, &d)?, serde_json::Value::Null, None),
    };

    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        write_matrix(&dir.join("u.dcm1"), d.u())?;
        write_matrix(&dir.join("sigma.dcm1"), d.sigma())?;
        write_matrix(&dir.join("v.dcm1"), d.v())?;
        if let Some(m) = &split_parts {
            write_matrix(&dir.join("outlier_cols.dcm1"), m.outlier_cols())?;
            let idx = dir.join("outlier_channels.json");
            fs::write(&idx, format!("{}\n", json!(m.outlier_idx()))).map_err(|e| CliError::io(&idx, e))?;
        }
    }

    let summary = json!({
        "rows": rows,
        "cols": cols,
        "rank": args.rank,
        "effective_rank": trace.effective_rank,
        "steps": trace.steps(),
        "relative_error": relative_error,
        "singular_values": d.singular_values(),
        "breakdown": trace.breakdown,
        "flops": trace.flops,
        "reorth_share": trace.flops.reorth_share(),
        "outliers": outlier_json,
    });
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    emit(None, |w| write_line(w, &text))
}

pub fn bench(args: BenchArgs) -> Result<(), CliError> {
    let source = match &args.matrix {
        Some(path) => MatrixSource::File { path: path.clone() },
        None => MatrixSource::Synthetic {
            rows: args.rows,
            cols: args.cols,
            spectrum: parse_spectrum(&args.spectrum)?,
            seed: args.lanczos.seed,
        },
    };
    let rows = run_convergence_bench(&source, &args.ranks, &args.lanczos.options(), &args.out)?;
    emit(None, |w| Ok(write_convergence_csv(&rows, w)?))
}

pub fn sweep(args: SweepArgs) -> Result<(), CliError> {
    let vary: SweepKey = args.vary.parse()?;
    let cfg = args.config.load()?;
    let plan = match &args.plan {
        Some(path) => load_json(path)?,
        None => DecompPlan {
            layers: (0..cfg.model.num_layers).collect(),
            ..DecompPlan::default()
        },
    };
    let spec = SweepSpec {
        vary,
        values: args.values,
    };
    let rows = run_sweep(
        &spec,
        &cfg.model,
        &plan,
        &cfg.hw,
        &cfg.baseline,
        &OutlierSynthetic::default(),
    )?;
    emit(args.out.as_deref(), |w| Ok(write_sweep_csv(&rows, w)?))
}

pub fn estimate(args: EstimateArgs) -> Result<(), CliError> {
    let plan: DecompPlan = load_json(&args.plan)?;
    let cfg = args.config.load()?;
    let report = estimate_plan(&cfg.model, &plan, &cfg.hw, &cfg.baseline)?;
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    emit(args.out.as_deref(), |w| write_line(w, &text))
}

pub fn calibrate(args: CalibrateArgs) -> Result<(), CliError> {
    let samples = load_samples(&args.samples)?;
    let table = calibrate_thresholds(&samples, args.target_fraction, args.count_fraction)?;
    let text = table.to_json();
    emit(args.out.as_deref(), |w| write_line(w, &text))
}

pub fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let hw: HardwareConfig = load_or_default(args.hw.as_deref())?;
    let rows = args
        .factors
        .iter()
        .map(|&f| Ok((f, simulate_lanczos(args.seq, args.hidden, args.rank, f, &hw)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    emit(args.out.as_deref(), |w| Ok(dcomsim::write_sweep_csv(&rows, w)?))
}

pub fn synth(args: SynthArgs) -> Result<(), CliError> {
    if args.rows == 0 || args.cols == 0 {
        return Err(CliError::Input(format!("empty shape {}x{}", args.rows, args.cols)));
    }
    let m = match args.kind {
        SynthKind::Spectrum => spectrum_matrix(args.rows, args.cols, parse_spectrum(&args.spectrum)?, args.seed)?,
        SynthKind::Planted => {
            if let Some(&j) = args.channels.iter().find(|&&j| j >= args.cols) {
                return Err(CliError::Input(format!("channel {j} outside 0..{}", args.cols)));
            }
            planted_outliers(args.rows, args.cols, &args.channels, args.magnitude as f32, args.seed)
        }
        SynthKind::Activations => {
            let count = args.channels.first().copied().unwrap_or(0);
            if count > args.cols {
                return Err(CliError::Input(format!(
                    "{count} outlier channels exceed {} columns",
                    args.cols
                )));
            }
            ActivationProfile::planted(args.rows, args.cols, count, args.magnitude).sample(args.seed)
        }
    };
    let m = if args.scale == 1.0 { m } else { m.scale(args.scale)? };
    write_matrix(&args.out, &m)
}
