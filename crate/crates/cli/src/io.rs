//! File helpers shared by the commands.

use std::fs;
use std::path::{Path, PathBuf};

use egoflow_core::codec::{read_flo, read_kitti_flow_png, write_flo, write_kitti_flow_png};
use egoflow_core::FlowImage;

use crate::{usage, CliError, CliResult};

/// `0000000042`, the KITTI frame file stem.
pub(crate) fn frame_stem(t: usize) -> String {
    format!("{t:010}")
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, bytes)
}

pub(crate) fn require_dir(path: &Path, what: &str) -> CliResult<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(usage(format!("{what} directory {} does not exist", path.display())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum FlowFormat {
    Flo,
    KittiPng,
}

impl FlowFormat {
    pub(crate) fn of(path: &Path) -> CliResult<Self> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("flo") => Ok(FlowFormat::Flo),
            Some("png") => Ok(FlowFormat::KittiPng),
            _ => Err(usage(format!("{}: flow files must end in .flo or .png", path.display()))),
        }
    }
}

pub(crate) fn read_flow(path: &Path) -> CliResult<FlowImage> {
    let format = FlowFormat::of(path)?;
    let bytes = fs::read(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let flow = match format {
        FlowFormat::Flo => read_flo(&bytes),
        FlowFormat::KittiPng => read_kitti_flow_png(&bytes),
    };
    flow.map_err(|e| usage(format!("{}: {e}", path.display())))
}

pub(crate) fn encode_flow(flow: &FlowImage, format: FlowFormat) -> CliResult<Vec<u8>> {
    match format {
        FlowFormat::Flo => write_flo(flow),
        FlowFormat::KittiPng => write_kitti_flow_png(flow),
    }
    .map_err(|e| CliError::Failed(e.to_string()))
}

/// Frame-numbered files in `dir` with one of `extensions`, sorted by frame.
pub(crate) fn list_frames(dir: &Path, extensions: &[&str]) -> CliResult<Vec<(usize, PathBuf)>> {
    let entries = fs::read_dir(dir).map_err(|e| usage(format!("cannot list {}: {e}", dir.display())))?;
    let mut frames = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| usage(e.to_string()))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if !extensions.contains(&ext) {
            continue;
        }
        let Some(t) = path.file_stem().and_then(|s| s.to_str()).and_then(|s| s.parse::<usize>().ok()) else {
            log::warn!("skipping {}: name is not a frame number", path.display());
            continue;
        };
        frames.push((t, path));
    }
    frames.sort();
    if let Some(w) = frames.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(usage(format!("frame {} appears twice in {}", w[0].0, dir.display())));
    }
    Ok(frames)
}
