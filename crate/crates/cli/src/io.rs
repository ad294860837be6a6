use anyhow::{bail, Context, Result};
use sdcs_core::annotation::AnnotationSet;
use sdcs_core::detector::{read_detections_csv, Detection};
use sdcs_core::pipeline::{BenchmarkConfig, LabelledTile};
use sdcs_core::raster::RasterImage;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "tif", "tiff"];

/// Reads a TOML configuration; missing sections take their defaults and
/// unknown keys are rejected.
pub fn load_config(path: Option<&Path>) -> Result<BenchmarkConfig> {
    let Some(path) = path else {
        return Ok(BenchmarkConfig::default());
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let config: BenchmarkConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    Ok(config)
}

pub fn config_hash(config: &BenchmarkConfig) -> Result<String> {
    let canonical = serde_json::to_string(config)?;
    let digest = Sha256::digest(canonical.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Output directory that refuses to replace files unless forced.
pub struct Outputs {
    root: PathBuf,
    force: bool,
    written: Vec<PathBuf>,
}

impl Outputs {
    pub fn new(root: &Path, force: bool) -> Self {
        Outputs {
            root: root.to_path_buf(),
            force,
            written: Vec::new(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Path of an output, checked against existing files.
    pub fn check(&self, rel: impl AsRef<Path>) -> Result<PathBuf> {
        let path = self.root.join(rel);
        if path.exists() && !self.force {
            bail!("{} already exists; pass --force to replace it", path.display());
        }
        Ok(path)
    }

    /// Like [`Outputs::check`], also creating parent directories and
    /// recording the file for the provenance record.
    pub fn claim(&mut self, rel: impl AsRef<Path>) -> Result<PathBuf> {
        let path = self.check(rel.as_ref())?;
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        self.written.push(rel.as_ref().to_path_buf());
        Ok(path)
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}

#[derive(Serialize)]
pub struct Provenance<'a> {
    pub command: &'a str,
    pub version: &'a str,
    pub config_sha256: String,
    pub seed: u64,
    pub threshold: Option<f32>,
    pub tile_size: usize,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub config: &'a BenchmarkConfig,
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    sdcs_core::pipeline::write_json(path, value)?;
    Ok(())
}

fn has_image_extension(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

fn sorted_entries(dir: &Path, keep: impl Fn(&Path) -> bool) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.is_file() && keep(&path) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

pub fn stem(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .with_context(|| format!("{} has no usable file name", path.display()))
}

/// A single image or every image in a directory, sorted by name.
pub fn image_paths(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_dir() {
        let paths = sorted_entries(input, has_image_extension)?;
        if paths.is_empty() {
            bail!("no PNG or TIFF images in {}", input.display());
        }
        Ok(paths)
    } else if input.is_file() {
        Ok(vec![input.to_path_buf()])
    } else {
        bail!("input {} does not exist", input.display())
    }
}

pub fn load_image(path: &Path) -> Result<RasterImage> {
    RasterImage::load(path).with_context(|| format!("reading image {}", path.display()))
}

/// Images of a split directory paired with their `<id>.json` annotations.
pub fn load_split(dir: &Path) -> Result<Vec<LabelledTile>> {
    let mut out = Vec::new();
    for path in image_paths(dir)? {
        let ann_path = path.with_extension("json");
        let set = AnnotationSet::load(&ann_path)
            .with_context(|| format!("reading annotations {} for {}", ann_path.display(), path.display()))?;
        out.push(LabelledTile::from_annotations(load_image(&path)?, set)?);
    }
    Ok(out)
}

/// Detection CSVs of a directory keyed by file stem, or a single file.
pub fn detection_files(path: &Path) -> Result<Vec<(String, PathBuf)>> {
    let files = if path.is_dir() {
        sorted_entries(path, |p| p.extension().is_some_and(|e| e == "csv"))?
    } else if path.is_file() {
        vec![path.to_path_buf()]
    } else {
        bail!("detections {} do not exist", path.display())
    };
    files.into_iter().map(|p| Ok((stem(&p)?, p))).collect()
}

pub fn read_detections(path: &Path) -> Result<Vec<Detection>> {
    read_detections_csv(path).with_context(|| format!("reading detections {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refuses_to_overwrite() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.txt"), "x").unwrap();
        let mut out = Outputs::new(dir.path(), false);
        assert!(out.claim("a.txt").is_err());
        assert!(out.claim("sub/b.txt").is_ok());
        assert!(dir.path().join("sub").is_dir());
        let mut forced = Outputs::new(dir.path(), true);
        assert!(forced.claim("a.txt").is_ok());
    }

    #[test]
    fn hash_tracks_config() {
        let a = BenchmarkConfig::default();
        let b = BenchmarkConfig { seed: 1, ..a.clone() };
        assert_eq!(config_hash(&a).unwrap(), config_hash(&a.clone()).unwrap());
        assert_ne!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
        assert_eq!(config_hash(&a).unwrap().len(), 64);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "seed = 3\n[scene]\ntile_size = 128\n").unwrap();
        let c = load_config(Some(&p)).unwrap();
        assert_eq!((c.seed, c.scene.tile_size), (3, 128));
        std::fs::write(&p, "seed = 3\nbogus = 1\n").unwrap();
        assert!(load_config(Some(&p)).is_err());
    }
}
