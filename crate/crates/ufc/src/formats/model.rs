//! Member model files and the ensemble manifest that lists them.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use ufc_core::data::Normalization;
use ufc_core::ensemble::Ensemble;
use ufc_core::nn::{LossBreakdown, MemberModel};

use super::{read_json, write_json};
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "ufc-model/1";
pub const ENSEMBLE_FORMAT: &str = "ufc-ensemble/1";

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    model: MemberModel,
}

pub fn write_member(path: &Path, model: &MemberModel) -> Result<()> {
    write_json(
        path,
        &ModelFile {
            format: MODEL_FORMAT.into(),
            model: model.clone(),
        },
    )
}

/// Reads and validates one member; a stale model version is refused here.
pub fn read_member(path: &Path) -> Result<MemberModel> {
    let file: ModelFile = read_json(path, MODEL_FORMAT)?;
    file.model
        .validate()
        .map_err(|e| Error::format(path, e.to_string()))?;
    Ok(file.model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberEntry {
    /// Relative to the manifest.
    pub file: String,
    pub seed: u64,
    /// Mean loss of the last training epoch.
    pub final_loss: Option<LossBreakdown>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub format: String,
    /// N
    pub count: usize,
    pub members: Vec<MemberEntry>,
    /// Shared by every member.
    pub normalization: Normalization,
    /// L
    pub window: usize,
    pub stride: usize,
}

/// Writes `models/member_XX.json` next to the manifest at `path`.
pub fn write_ensemble(
    path: &Path,
    members: &[(MemberModel, Option<LossBreakdown>)],
    window: usize,
    stride: usize,
) -> Result<EnsembleManifest> {
    let first = members
        .first()
        .ok_or_else(|| Error::Config("an ensemble needs at least one member".into()))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::with_capacity(members.len());
    for (k, (model, loss)) in members.iter().enumerate() {
        let file = format!("models/member_{k:02}.json");
        write_member(&dir.join(&file), model)?;
        entries.push(MemberEntry {
            file,
            seed: model.seed,
            final_loss: *loss,
        });
    }
    let manifest = EnsembleManifest {
        format: ENSEMBLE_FORMAT.into(),
        count: members.len(),
        members: entries,
        normalization: first.0.normalization.clone(),
        window,
        stride,
    };
    write_json(path, &manifest)?;
    Ok(manifest)
}

/// Loads every member and checks them against the manifest before any of
/// them is used.
pub fn read_ensemble(path: &Path) -> Result<(EnsembleManifest, Ensemble)> {
    let manifest: EnsembleManifest = read_json(path, ENSEMBLE_FORMAT)?;
    if manifest.count != manifest.members.len() || manifest.count == 0 {
        return Err(Error::format(
            path,
            format!(
                "count {} but {} member files",
                manifest.count,
                manifest.members.len()
            ),
        ));
    }
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut models = Vec::with_capacity(manifest.count);
    for entry in &manifest.members {
        let member_path: PathBuf = dir.join(&entry.file);
        let model = read_member(&member_path)?;
        if model.normalization != manifest.normalization {
            return Err(Error::format(
                &member_path,
                "normalization differs from the ensemble manifest",
            ));
        }
        if model.architecture.window != manifest.window + 1 {
            return Err(Error::format(
                &member_path,
                format!(
                    "model input has {} columns, the manifest window needs {}",
                    model.architecture.window,
                    manifest.window + 1
                ),
            ));
        }
        models.push(model);
    }
    let ensemble = Ensemble::new(models)?;
    Ok((manifest, ensemble))
}
