//! Saving and loading trained ensembles through the chunked container.
//!
//! Every numeric field travels as little-endian IEEE-754/fixed-width words,
//! so a load reproduces the saved model bit for bit. The ensemble is split
//! into one metadata chunk (mode table, landmark schemes), per-mode chunks
//! for the shape model, dense layout, exemplars and detectors, and a
//! snapshot of the configuration the model was trained with.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::appearance::ModeDetectors;
use crate::config::{BoostConfig, FitConfig, SearchConfig, ShapeTrainConfig};
use crate::error::{Error, Result};
use crate::io::container::{read_container, write_container, Chunk};
use crate::scheme::LandmarkScheme;
use crate::shape::{
    BoxCalibration, DenseGroup, DensePdm, ExemplarSet, ModeId, ModeModel, ModelEnsemble,
    PointDistributionModel,
};

/// The configuration a model was built and calibrated with, stored alongside
/// it so alignment defaults to the settings training assumed.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub shape: ShapeTrainConfig,
    pub boost: BoostConfig,
    pub search: SearchConfig,
    pub fit: FitConfig,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    pose_count: usize,
    mode_ids: Vec<ModeId>,
    schemes: Vec<LandmarkScheme>,
    correspondence: Vec<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct DenseLayout {
    groups: Vec<DenseGroup>,
    sparse_count: usize,
}

fn encode<T: Serialize>(name: &str, value: &T) -> Result<Chunk> {
    let payload = bincode::serialize(value).map_err(|e| Error::MalformedChunk {
        chunk: name.to_string(),
        message: e.to_string(),
    })?;
    Ok(Chunk {
        name: name.to_string(),
        payload,
    })
}

fn decode<T: DeserializeOwned>(chunks: &[Chunk], name: &str) -> Result<T> {
    let chunk = chunks
        .iter()
        .find(|c| c.name == name)
        .ok_or_else(|| Error::MissingChunk(name.to_string()))?;
    bincode::deserialize(&chunk.payload).map_err(|e| Error::MalformedChunk {
        chunk: name.to_string(),
        message: e.to_string(),
    })
}

pub fn save_model<W: Write>(
    w: &mut W,
    ensemble: &ModelEnsemble,
    config: &ConfigSnapshot,
) -> Result<()> {
    ensemble.validate()?;
    let meta = Meta {
        pose_count: ensemble.pose_count,
        mode_ids: ensemble.modes.iter().map(|m| m.id).collect(),
        schemes: ensemble.modes.iter().map(|m| m.scheme.clone()).collect(),
        correspondence: ensemble.correspondence.clone(),
    };
    let mut chunks = vec![encode("meta", &meta)?, encode("config", config)?];
    for (i, mode) in ensemble.modes.iter().enumerate() {
        chunks.push(encode(&format!("mode{i}.pdm"), &mode.dense.model)?);
        chunks.push(encode(
            &format!("mode{i}.dense"),
            &DenseLayout {
                groups: mode.dense.groups.clone(),
                sparse_count: mode.dense.sparse_count,
            },
        )?);
        chunks.push(encode(&format!("mode{i}.exemplars"), &mode.exemplars)?);
        if let Some(det) = &mode.detectors {
            chunks.push(encode(&format!("mode{i}.detect"), det)?);
        }
        if let Some(cal) = &mode.box_calibration {
            chunks.push(encode(&format!("mode{i}.boxcal"), cal)?);
        }
    }
    write_container(w, &chunks)
}

pub fn load_model<R: Read>(r: &mut R) -> Result<(ModelEnsemble, ConfigSnapshot)> {
    let chunks = read_container(r)?;
    let meta: Meta = decode(&chunks, "meta")?;
    let config: ConfigSnapshot = decode(&chunks, "config")?;
    if meta.mode_ids.len() != meta.schemes.len() {
        return Err(Error::MalformedChunk {
            chunk: "meta".into(),
            message: format!(
                "{} mode ids but {} schemes",
                meta.mode_ids.len(),
                meta.schemes.len()
            ),
        });
    }
    let mut modes = Vec::with_capacity(meta.mode_ids.len());
    for (i, (id, scheme)) in meta
        .mode_ids
        .into_iter()
        .zip(meta.schemes.into_iter())
        .enumerate()
    {
        let model: PointDistributionModel = decode(&chunks, &format!("mode{i}.pdm"))?;
        let layout: DenseLayout = decode(&chunks, &format!("mode{i}.dense"))?;
        let exemplars: ExemplarSet = decode(&chunks, &format!("mode{i}.exemplars"))?;
        let detect_name = format!("mode{i}.detect");
        let detectors: Option<ModeDetectors> = if chunks.iter().any(|c| c.name == detect_name) {
            Some(decode(&chunks, &detect_name)?)
        } else {
            None
        };
        let cal_name = format!("mode{i}.boxcal");
        let box_calibration: Option<BoxCalibration> =
            if chunks.iter().any(|c| c.name == cal_name) {
                Some(decode(&chunks, &cal_name)?)
            } else {
                None
            };
        modes.push(ModeModel {
            id,
            scheme,
            dense: DensePdm {
                model,
                groups: layout.groups,
                sparse_count: layout.sparse_count,
            },
            exemplars,
            detectors,
            box_calibration,
        });
    }
    let ensemble = ModelEnsemble {
        pose_count: meta.pose_count,
        modes,
        correspondence: meta.correspondence,
    };
    ensemble.validate()?;
    Ok((ensemble, config))
}

pub fn save_model_file<P: AsRef<Path>>(
    path: P,
    ensemble: &ModelEnsemble,
    config: &ConfigSnapshot,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    save_model(&mut w, ensemble, config)?;
    w.flush()?;
    Ok(())
}

pub fn load_model_file<P: AsRef<Path>>(path: P) -> Result<(ModelEnsemble, ConfigSnapshot)> {
    load_model(&mut BufReader::new(File::open(path)?))
}
