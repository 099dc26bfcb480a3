//! The scene-bundle disk format: the exchange package between the synthetic
//! generator, real ingestion, and the pipeline.
//!
//! Layout of a bundle directory:
//!
//! * `manifest.json` — views (id, size, `K` as `[fx, fy, cx, cy]`,
//!   `T_world_to_cam` as a row-major 4x4) and the object name list.
//! * `depth/<view_id>.adpt` — magic `ADPT`, u32-le width, u32-le height,
//!   then `width * height` f32-le meters, row-major; 0.0 marks invalid.
//! * `masks.json` — per view/object RLE masks; `size` is `[h, w]`, runs are
//!   `[start, len, ...]` with row-major flattened starts.
//! * `ground_truth.json` — synthetic scenes only: true centers, shapes,
//!   facing directions, and the cameras echoed.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consensus::Mask;
use crate::geometry::{CameraIntrinsics, CameraView, Pose, Vec3};
use crate::synth::{Shape, SyntheticObject};

pub const DEPTH_MAGIC: &[u8; 4] = b"ADPT";

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {file}: {detail}")]
    MalformedJson { file: PathBuf, detail: String },
    #[error("bad magic in depth file {path:?} (expected ADPT)")]
    MagicMismatch { path: PathBuf },
    #[error("depth file for view {view} is {actual_w}x{actual_h}, manifest says {expected_w}x{expected_h}")]
    DimensionMismatch {
        view: String,
        expected_w: u32,
        expected_h: u32,
        actual_w: u32,
        actual_h: u32,
    },
    #[error("depth file for view {view} is truncated")]
    Truncated { view: String },
    #[error("mask for view {view} object {object} exceeds image bounds")]
    MaskOutOfBounds { view: String, object: String },
    #[error("manifest lists no view named {view}")]
    UnknownView { view: String },
    #[error("output directory {path:?} is not empty (pass --force to overwrite)")]
    NonEmptyOutput { path: PathBuf },
}

/// One object's mask in one view.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BundleMask {
    pub view: String,
    pub object: String,
    pub mask: Mask,
}

/// A bundle held in memory: calibrated views with depth, object names,
/// per-view masks, and ground truth when the scene is synthetic.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneBundle {
    pub views: Vec<CameraView>,
    pub object_names: Vec<String>,
    pub masks: Vec<BundleMask>,
    pub ground_truth: Option<GroundTruth>,
}

impl SceneBundle {
    pub fn view(&self, view_id: &str) -> Option<&CameraView> {
        self.views.iter().find(|v| v.view_id == view_id)
    }

    pub fn mask(&self, view_id: &str, object: &str) -> Option<&Mask> {
        self.masks
            .iter()
            .find(|m| m.view == view_id && m.object == object)
            .map(|m| &m.mask)
    }

    /// Masks of one object across views, in view order.
    pub fn masks_for(&self, object: &str) -> Vec<&BundleMask> {
        self.views
            .iter()
            .filter_map(|v| {
                self.masks
                    .iter()
                    .find(|m| m.view == v.view_id && m.object == object)
            })
            .collect()
    }
}

/// Ground truth of a synthetic scene.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub objects: Vec<SyntheticObject>,
    pub cameras: Vec<ManifestView>,
}

impl GroundTruth {
    pub fn object(&self, name: &str) -> Option<&SyntheticObject> {
        self.objects.iter().find(|o| o.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestView {
    pub id: String,
    pub width: u32,
    pub height: u32,
    #[serde(rename = "K")]
    pub k: [f64; 4],
    #[serde(rename = "T_world_to_cam")]
    pub t_world_to_cam: Vec<f64>,
}

impl ManifestView {
    pub fn from_view(view: &CameraView) -> Self {
        Self {
            id: view.view_id.clone(),
            width: view.width,
            height: view.height,
            k: [
                view.intrinsics.fx,
                view.intrinsics.fy,
                view.intrinsics.cx,
                view.intrinsics.cy,
            ],
            t_world_to_cam: view.pose.to_matrix4_row_major().to_vec(),
        }
    }

    pub fn intrinsics(&self) -> CameraIntrinsics {
        CameraIntrinsics::new(self.k[0], self.k[1], self.k[2], self.k[3])
    }

    pub fn pose(&self) -> Result<Pose, BundleError> {
        let m: [f64; 16] = self.t_world_to_cam.as_slice().try_into().map_err(|_| {
            BundleError::MalformedJson {
                file: PathBuf::from("manifest.json"),
                detail: format!(
                    "view {} has a {}-element pose, expected 16",
                    self.id,
                    self.t_world_to_cam.len()
                ),
            }
        })?;
        Ok(Pose::from_matrix4_row_major(&m))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    views: Vec<ManifestView>,
    objects: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MasksFile {
    masks: Vec<MaskEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MaskEntry {
    view: String,
    object: String,
    /// `[h, w]`
    size: [u32; 2],
    /// `[start, len, start, len, ...]`
    runs: Vec<u32>,
}

#[derive(Debug, Serialize, Deserialize)]
struct GroundTruthFile {
    objects: Vec<GtObjectEntry>,
    cameras: Vec<ManifestView>,
}

#[derive(Debug, Serialize, Deserialize)]
struct GtObjectEntry {
    name: String,
    shape: String,
    center: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    half_sizes: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    radius: Option<f64>,
    front_dir: [f64; 3],
}

impl GtObjectEntry {
    fn from_object(o: &SyntheticObject) -> Self {
        let (shape, half_sizes, radius) = match o.shape {
            Shape::Box { half_sizes } => ("box".to_string(), Some(half_sizes.to_array()), None),
            Shape::Sphere { radius } => ("sphere".to_string(), None, Some(radius)),
        };
        Self {
            name: o.name.clone(),
            shape,
            center: o.center.to_array(),
            half_sizes,
            radius,
            front_dir: o.front_dir.to_array(),
        }
    }

    fn to_object(&self) -> Result<SyntheticObject, BundleError> {
        let shape = match (self.shape.as_str(), self.half_sizes, self.radius) {
            ("box", Some(hs), _) => Shape::Box { half_sizes: Vec3::from_array(hs) },
            ("sphere", _, Some(r)) => Shape::Sphere { radius: r },
            _ => {
                return Err(BundleError::MalformedJson {
                    file: PathBuf::from("ground_truth.json"),
                    detail: format!("object {} has inconsistent shape fields", self.name),
                })
            }
        };
        Ok(SyntheticObject {
            name: self.name.clone(),
            shape,
            center: Vec3::from_array(self.center),
            front_dir: Vec3::from_array(self.front_dir),
        })
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BundleError + '_ {
    move |source| BundleError::Io { path: path.to_path_buf(), source }
}

/// Serializes a depth map into the `ADPT` container.
pub fn encode_depth(width: u32, height: u32, depth: &[f32]) -> Vec<u8> {
    assert_eq!(depth.len(), (width as usize) * (height as usize));
    let mut out = Vec::with_capacity(12 + depth.len() * 4);
    out.extend_from_slice(DEPTH_MAGIC);
    out.extend_from_slice(&width.to_le_bytes());
    out.extend_from_slice(&height.to_le_bytes());
    for d in depth {
        out.extend_from_slice(&d.to_le_bytes());
    }
    out
}

/// Parses an `ADPT` container, checking magic and completeness.
pub fn decode_depth(bytes: &[u8], view: &str, path: &Path) -> Result<(u32, u32, Vec<f32>), BundleError> {
    if bytes.len() < 12 || &bytes[0..4] != DEPTH_MAGIC {
        return Err(BundleError::MagicMismatch { path: path.to_path_buf() });
    }
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let expected = 12 + (width as usize) * (height as usize) * 4;
    if bytes.len() != expected {
        return Err(BundleError::Truncated { view: view.to_string() });
    }
    let depth = bytes[12..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((width, height, depth))
}

/// Writes a bundle to `dir`, creating it if needed. A non-empty existing
/// directory is refused unless `force` is set.
pub fn write_bundle(bundle: &SceneBundle, dir: &Path, force: bool) -> Result<(), BundleError> {
    if dir.exists() {
        let non_empty = fs::read_dir(dir).map_err(io_err(dir))?.next().is_some();
        if non_empty && !force {
            return Err(BundleError::NonEmptyOutput { path: dir.to_path_buf() });
        }
    }
    fs::create_dir_all(dir.join("depth")).map_err(io_err(dir))?;

    let manifest = Manifest {
        views: bundle.views.iter().map(ManifestView::from_view).collect(),
        objects: bundle.object_names.clone(),
    };
    let manifest_path = dir.join("manifest.json");
    fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )
    .map_err(io_err(&manifest_path))?;

    for view in &bundle.views {
        let path = dir.join("depth").join(format!("{}.adpt", view.view_id));
        let mut file = fs::File::create(&path).map_err(io_err(&path))?;
        file.write_all(&encode_depth(view.width, view.height, &view.depth))
            .map_err(io_err(&path))?;
    }

    let masks = MasksFile {
        masks: bundle
            .masks
            .iter()
            .map(|m| {
                let mut runs = Vec::with_capacity(m.mask.runs.len() * 2);
                for &(start, len) in &m.mask.runs {
                    runs.push(start);
                    runs.push(len);
                }
                MaskEntry {
                    view: m.view.clone(),
                    object: m.object.clone(),
                    size: [m.mask.height, m.mask.width],
                    runs,
                }
            })
            .collect(),
    };
    let masks_path = dir.join("masks.json");
    fs::write(
        &masks_path,
        serde_json::to_string_pretty(&masks).expect("masks serialize"),
    )
    .map_err(io_err(&masks_path))?;

    if let Some(gt) = &bundle.ground_truth {
        let file = GroundTruthFile {
            objects: gt.objects.iter().map(GtObjectEntry::from_object).collect(),
            cameras: gt.cameras.clone(),
        };
        let gt_path = dir.join("ground_truth.json");
        fs::write(
            &gt_path,
            serde_json::to_string_pretty(&file).expect("ground truth serializes"),
        )
        .map_err(io_err(&gt_path))?;
    }
    Ok(())
}

/// Reads a bundle from `dir`, validating magic numbers, dimensions, and mask
/// bounds against the manifest.
pub fn read_bundle(dir: &Path) -> Result<SceneBundle, BundleError> {
    let manifest_path = dir.join("manifest.json");
    let manifest_text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest: Manifest =
        serde_json::from_str(&manifest_text).map_err(|e| BundleError::MalformedJson {
            file: manifest_path.clone(),
            detail: e.to_string(),
        })?;

    let mut views = Vec::with_capacity(manifest.views.len());
    for mv in &manifest.views {
        let path = dir.join("depth").join(format!("{}.adpt", mv.id));
        let mut bytes = Vec::new();
        fs::File::open(&path)
            .map_err(io_err(&path))?
            .read_to_end(&mut bytes)
            .map_err(io_err(&path))?;
        let (width, height, depth) = decode_depth(&bytes, &mv.id, &path)?;
        if width != mv.width || height != mv.height {
            return Err(BundleError::DimensionMismatch {
                view: mv.id.clone(),
                expected_w: mv.width,
                expected_h: mv.height,
                actual_w: width,
                actual_h: height,
            });
        }
        views.push(CameraView {
            view_id: mv.id.clone(),
            width,
            height,
            intrinsics: mv.intrinsics(),
            pose: mv.pose()?,
            depth,
        });
    }

    let masks_path = dir.join("masks.json");
    let masks_text = fs::read_to_string(&masks_path).map_err(io_err(&masks_path))?;
    let masks_file: MasksFile =
        serde_json::from_str(&masks_text).map_err(|e| BundleError::MalformedJson {
            file: masks_path.clone(),
            detail: e.to_string(),
        })?;
    let mut masks = Vec::with_capacity(masks_file.masks.len());
    for entry in masks_file.masks {
        let view = views
            .iter()
            .find(|v| v.view_id == entry.view)
            .ok_or_else(|| BundleError::UnknownView { view: entry.view.clone() })?;
        let (h, w) = (entry.size[0], entry.size[1]);
        let pixels = w as u64 * h as u64;
        let mut runs = Vec::with_capacity(entry.runs.len() / 2);
        let mut prev_end = 0u64;
        let mut in_bounds = entry.runs.len() % 2 == 0 && w == view.width && h == view.height;
        for pair in entry.runs.chunks_exact(2) {
            let end = pair[0] as u64 + pair[1] as u64;
            in_bounds &= pair[0] as u64 >= prev_end && end <= pixels;
            prev_end = end;
            runs.push((pair[0], pair[1]));
        }
        if !in_bounds {
            return Err(BundleError::MaskOutOfBounds {
                view: entry.view,
                object: entry.object,
            });
        }
        masks.push(BundleMask {
            view: entry.view,
            object: entry.object,
            mask: Mask::from_runs(w, h, runs),
        });
    }

    let gt_path = dir.join("ground_truth.json");
    let ground_truth = if gt_path.exists() {
        let text = fs::read_to_string(&gt_path).map_err(io_err(&gt_path))?;
        let file: GroundTruthFile =
            serde_json::from_str(&text).map_err(|e| BundleError::MalformedJson {
                file: gt_path.clone(),
                detail: e.to_string(),
            })?;
        let objects = file
            .objects
            .iter()
            .map(GtObjectEntry::to_object)
            .collect::<Result<Vec<_>, _>>()?;
        Some(GroundTruth { objects, cameras: file.cameras })
    } else {
        None
    };

    Ok(SceneBundle {
        views,
        object_names: manifest.objects,
        masks,
        ground_truth,
    })
}
