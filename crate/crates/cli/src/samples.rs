//! Calibration sample directories.
//!
//! `DIR/<layer>/*.{dcm1,csv}` gives one layer per integer-named
//! sub-directory; matrix files placed directly in `DIR` form layer 0. Files
//! are read in name order and each becomes one prompt of the layer's batch.

use std::fs;
use std::path::{Path, PathBuf};

use dcom_core::decomp::BatchActivations;
use dcom_core::outlier::LayerSamples;

use crate::commands::read_matrix;
use crate::error::CliError;

fn is_matrix(path: &Path) -> bool {
    path.is_file()
        && path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("dcm1") || e.eq_ignore_ascii_case("csv"))
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut paths = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .map(|entry| entry.map(|e| e.path()).map_err(|e| CliError::io(dir, e)))
        .collect::<Result<Vec<_>, _>>()?;
    paths.sort();
    Ok(paths)
}

fn layer_batch(layer: usize, files: &[PathBuf]) -> Result<LayerSamples, CliError> {
    let prompts = files.iter().map(|p| read_matrix(p)).collect::<Result<Vec<_>, _>>()?;
    Ok(LayerSamples {
        layer,
        batches: vec![BatchActivations::new(prompts)?],
    })
}

pub fn load_samples(dir: &Path) -> Result<Vec<LayerSamples>, CliError> {
    let entries = sorted_entries(dir)?;
    let mut layers = Vec::new();

    let top: Vec<PathBuf> = entries.iter().filter(|p| is_matrix(p)).cloned().collect();
    if !top.is_empty() {
        layers.push(layer_batch(0, &top)?);
    }

    for sub in entries.iter().filter(|p| p.is_dir()) {
        let Some(layer) = sub
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.parse::<usize>().ok())
        else {
            continue;
        };
        let files: Vec<PathBuf> = sorted_entries(sub)?.into_iter().filter(|p| is_matrix(p)).collect();
        if files.is_empty() {
            return Err(CliError::Input(format!("{}: no matrix files", sub.display())));
        }
        layers.push(layer_batch(layer, &files)?);
    }

    if layers.is_empty() {
        return Err(CliError::Input(format!("{}: no sample matrices found", dir.display())));
    }
    layers.sort_by_key(|l| l.layer);
    Ok(layers)
}
