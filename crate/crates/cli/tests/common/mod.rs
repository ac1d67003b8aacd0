#![allow(dead_code)]

use std::path::{Path, PathBuf};

use stf_cli::commands::{ModelFile, MODEL_FORMAT};
use stf_cli::config::{ModelConfig, PenaltyKind, PenaltySpec};
use stf_cli::format::{write_matrix, write_tensor};
use stf_core::tensor::fold;
use stf_core::{DataMatrix, FactorModel};

pub fn write_data(dir: &Path, stem: &str, m: &DataMatrix, grid: (usize, usize)) -> PathBuf {
    write_tensor(dir, stem, &fold(m, grid.0, grid.1).unwrap(), false).unwrap()
}

/// A model directory for a ridge-free, penalty-free model.
pub fn write_model_dir(dir: &Path, model: &FactorModel, grid: (usize, usize), t_train: usize) {
    write_matrix(&dir.join("W.csv"), &model.w).unwrap();
    write_matrix(&dir.join("Wp.csv"), &model.wp).unwrap();
    write_matrix(&dir.join("H.csv"), &model.h).unwrap();
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        model: ModelConfig {
            rank: model.hyper.rank,
            xi: model.hyper.xi,
            lambda_w: 0.0,
            lambda_wp: 0.0,
            penalty: PenaltySpec { kind: PenaltyKind::Ridge, lambda: Some(0.0), r: None, mask: None },
        },
        grid,
        t_train,
        seed: 0,
    };
    std::fs::write(dir.join("model.json"), serde_json::to_string_pretty(&file).unwrap()).unwrap();
}

/// Every file under `dir` with its bytes, sorted by relative path.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}
