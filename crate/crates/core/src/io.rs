//! On-disk formats: per-view binary maps, `cameras.json` and the dataset manifest.
//!
//! All binary maps are little-endian, row-major, preceded by a four-byte magic
//! and the image size:
//!
//! | file    | magic  | header after magic        | payload                         |
//! |---------|--------|---------------------------|---------------------------------|
//! | azimuth | `AZMP` | u32 version (1), u32 w, h | w·h f32 radians, NaN = invalid  |
//! | mask    | `MSK1` | u32 w, h                  | w·h bytes, 0 or 1               |
//! | normals | `NRM3` | u32 w, h                  | 3·w·h f32, NaN triplet = none   |
//! | depth   | `DPT1` | u32 w, h                  | w·h f32 ray parameter, NaN = miss |

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::AnalyticShape;
use crate::geom::{
    normalize_cameras, Camera, CameraIntrinsics, CameraPose, Mat3, NormalizationRecord, Vec3,
};
use crate::maps::{AzimuthMap, DepthMap, Grid, NormalMap, SilhouetteMask};
use crate::synth::{AmbiguityMode, DatasetInfo, RenderSettings, RigSpec};

pub const AZIMUTH_MAGIC: &[u8; 4] = b"AZMP";
pub const AZIMUTH_VERSION: u32 = 1;
pub const MASK_MAGIC: &[u8; 4] = b"MSK1";
pub const NORMAL_MAGIC: &[u8; 4] = b"NRM3";
pub const DEPTH_MAGIC: &[u8; 4] = b"DPT1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CAMERAS_FILE: &str = "cameras.json";
pub const MANIFEST_VERSION: u32 = 1;

/// Little-endian cursor over a byte buffer; errors are plain messages.
pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.bytes.len())
            .ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f32(&mut self) -> std::result::Result<f32, String> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> std::result::Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn expect_magic(&mut self, magic: &[u8]) -> std::result::Result<(), String> {
        if self.take(magic.len())? != magic {
            return Err(format!(
                "expected magic {:?}",
                String::from_utf8_lossy(magic)
            ));
        }
        Ok(())
    }

    pub(crate) fn finish(&self) -> std::result::Result<(), String> {
        if self.pos != self.bytes.len() {
            return Err(format!("{} trailing bytes", self.bytes.len() - self.pos));
        }
        Ok(())
    }

    fn dims(&mut self) -> std::result::Result<(u32, u32), String> {
        let (w, h) = (self.u32()?, self.u32()?);
        if w == 0 || h == 0 {
            return Err(format!("empty image {w}x{h}"));
        }
        Ok((w, h))
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn header(magic: &[u8; 4], version: Option<u32>, w: u32, h: u32, payload: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + payload);
    out.extend_from_slice(magic);
    if let Some(v) = version {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&w.to_le_bytes());
    out.extend_from_slice(&h.to_le_bytes());
    out
}

/// Nearest f32 to an azimuth that still lies in `[0, 2π)` once widened back.
fn azimuth_to_f32(phi: f64) -> f32 {
    if phi.is_nan() {
        return f32::NAN;
    }
    let mut v = phi as f32;
    while v as f64 >= TAU {
        v = f32::from_bits(v.to_bits() - 1);
    }
    v
}

pub fn encode_azimuth(map: &AzimuthMap) -> Vec<u8> {
    let (w, h) = map.dims();
    let mut out = header(
        AZIMUTH_MAGIC,
        Some(AZIMUTH_VERSION),
        w,
        h,
        4 * map.values().len(),
    );
    for v in map.values() {
        out.extend_from_slice(&azimuth_to_f32(*v).to_le_bytes());
    }
    out
}

pub fn decode_azimuth(bytes: &[u8]) -> std::result::Result<AzimuthMap, String> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(AZIMUTH_MAGIC)?;
    let version = r.u32()?;
    if version != AZIMUTH_VERSION {
        return Err(format!("unsupported azimuth map version {version}"));
    }
    let (w, h) = r.dims()?;
    let values = (0..w as usize * h as usize)
        .map(|_| r.f32().map(f64::from))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    r.finish()?;
    AzimuthMap::from_values(w, h, values).map_err(|e| e.to_string())
}

pub fn encode_mask(mask: &SilhouetteMask) -> Vec<u8> {
    let (w, h) = mask.dims();
    let mut out = header(MASK_MAGIC, None, w, h, mask.data().len());
    out.extend(mask.data().iter().map(|&b| b as u8));
    out
}

pub fn decode_mask(bytes: &[u8]) -> std::result::Result<SilhouetteMask, String> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(MASK_MAGIC)?;
    let (w, h) = r.dims()?;
    let data = r
        .take(w as usize * h as usize)?
        .iter()
        .map(|&b| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(format!("mask byte {other} is not 0 or 1")),
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    r.finish()?;
    Grid::from_vec(w, h, data).map_err(|e| e.to_string())
}

pub fn encode_normals(normals: &NormalMap) -> Vec<u8> {
    let (w, h) = normals.dims();
    let mut out = header(NORMAL_MAGIC, None, w, h, 12 * normals.data().len());
    for n in normals.data() {
        let v = n.map_or([f32::NAN; 3], |n| [n.x as f32, n.y as f32, n.z as f32]);
        for c in v {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    out
}

pub fn decode_normals(bytes: &[u8]) -> std::result::Result<NormalMap, String> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(NORMAL_MAGIC)?;
    let (w, h) = r.dims()?;
    let mut data = Vec::with_capacity(w as usize * h as usize);
    for _ in 0..w as usize * h as usize {
        let v = [r.f32()?, r.f32()?, r.f32()?];
        data.push(if v.iter().any(|c| c.is_nan()) {
            None
        } else {
            Some(Vec3::new(v[0] as f64, v[1] as f64, v[2] as f64))
        });
    }
    r.finish()?;
    Grid::from_vec(w, h, data).map_err(|e| e.to_string())
}

pub fn encode_depth(depth: &DepthMap) -> Vec<u8> {
    let (w, h) = depth.dims();
    let mut out = header(DEPTH_MAGIC, None, w, h, 4 * depth.data().len());
    for d in depth.data() {
        out.extend_from_slice(&d.map_or(f32::NAN, |d| d as f32).to_le_bytes());
    }
    out
}

pub fn decode_depth(bytes: &[u8]) -> std::result::Result<DepthMap, String> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(DEPTH_MAGIC)?;
    let (w, h) = r.dims()?;
    let data = (0..w as usize * h as usize)
        .map(|_| r.f32().map(|v| (!v.is_nan()).then_some(v as f64)))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    r.finish()?;
    Grid::from_vec(w, h, data).map_err(|e| e.to_string())
}

macro_rules! file_pair {
    ($read:ident, $write:ident, $ty:ty, $encode:ident, $decode:ident) => {
        pub fn $write(path: &Path, value: &$ty) -> Result<()> {
            write_file(path, &$encode(value))
        }

        pub fn $read(path: &Path) -> Result<$ty> {
            $decode(&read_file(path)?).map_err(|m| Error::format(path, m))
        }
    };
}

file_pair!(
    read_azimuth,
    write_azimuth,
    AzimuthMap,
    encode_azimuth,
    decode_azimuth
);
file_pair!(
    read_mask,
    write_mask,
    SilhouetteMask,
    encode_mask,
    decode_mask
);
file_pair!(
    read_normals,
    write_normals,
    NormalMap,
    encode_normals,
    decode_normals
);
file_pair!(
    read_depth,
    write_depth,
    DepthMap,
    encode_depth,
    decode_depth
);

/// One entry of `cameras.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// Row-major world-to-camera rotation.
    #[serde(rename = "R")]
    pub rotation: [f64; 9],
    #[serde(rename = "t")]
    pub translation: [f64; 3],
}

impl From<&Camera> for CameraRecord {
    fn from(c: &Camera) -> Self {
        let r = c.pose.rotation();
        let k = &c.intrinsics;
        Self {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            width: k.width,
            height: k.height,
            rotation: std::array::from_fn(|i| r[(i / 3, i % 3)]),
            translation: (*c.pose.translation()).into(),
        }
    }
}

impl CameraRecord {
    pub fn to_camera(&self) -> Result<Camera> {
        let intrinsics =
            CameraIntrinsics::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height)?;
        let rotation = Mat3::from_row_slice(&self.rotation);
        let pose = CameraPose::new(rotation, Vec3::from(self.translation))?;
        Ok(Camera::new(intrinsics, pose))
    }
}

pub fn write_cameras(path: &Path, cameras: &[Camera]) -> Result<()> {
    let records: Vec<CameraRecord> = cameras.iter().map(CameraRecord::from).collect();
    let text = serde_json::to_string_pretty(&records).expect("camera records serialize");
    write_file(path, text.as_bytes())
}

pub fn read_cameras(path: &Path) -> Result<Vec<Camera>> {
    let bytes = read_file(path)?;
    let records: Vec<CameraRecord> =
        serde_json::from_slice(&bytes).map_err(|e| Error::format(path, e.to_string()))?;
    if records.is_empty() {
        return Err(Error::format(path, "no cameras"));
    }
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.to_camera()
                .map_err(|e| Error::format(path, format!("camera {i}: {e}")))
        })
        .collect()
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_file(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    write_file(path, text.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewFiles {
    pub azimuth: String,
    pub mask: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normals: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<String>,
}

impl ViewFiles {
    pub fn standard(index: usize, ground_truth: bool) -> Self {
        Self {
            azimuth: format!("view_{index:03}.azm"),
            mask: format!("view_{index:03}.msk"),
            normals: ground_truth.then(|| format!("view_{index:03}.nrm")),
            depth: ground_truth.then(|| format!("view_{index:03}.dpt")),
        }
    }
}

/// How azimuths were corrupted during synthesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityRecord {
    pub mode: AmbiguityMode,
    pub noise_sigma: f64,
    /// Describes the statistical model behind `mode`.
    pub model: String,
}

impl AmbiguityRecord {
    pub fn from_settings(settings: &RenderSettings) -> Self {
        let model = match settings.ambiguity {
            AmbiguityMode::Exact => "exact azimuths",
            AmbiguityMode::PiRandom | AmbiguityMode::HalfPiRandom { .. } => {
                "per-pixel Bernoulli simplification (real ambiguity is spatially structured)"
            }
        };
        Self {
            mode: settings.ambiguity,
            noise_sigma: settings.noise_sigma,
            model: model.to_string(),
        }
    }
}

/// Describes a dataset directory. Paths are relative to the manifest's
/// directory unless absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub cameras: String,
    pub views: Vec<ViewFiles>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<AnalyticShape>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rig: Option<RigSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ambiguity: Option<AmbiguityRecord>,
    /// Present iff the cameras in `cameras` are normalized.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<NormalizationRecord>,
}

impl Manifest {
    pub fn synthetic(view_count: usize, info: &DatasetInfo) -> Self {
        Self {
            format_version: MANIFEST_VERSION,
            cameras: CAMERAS_FILE.to_string(),
            views: (0..view_count)
                .map(|i| ViewFiles::standard(i, true))
                .collect(),
            seed: info.seed,
            shape: info.shape,
            rig: info.rig.clone(),
            ambiguity: info.render.as_ref().map(AmbiguityRecord::from_settings),
            normalization: None,
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let manifest: Manifest = read_json(path)?;
        if manifest.format_version != MANIFEST_VERSION {
            return Err(Error::format(
                path,
                format!("unsupported manifest version {}", manifest.format_version),
            ));
        }
        if manifest.views.is_empty() {
            return Err(Error::format(path, "manifest lists no views"));
        }
        Ok(manifest)
    }
}

/// A dataset loaded into memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Directory the dataset was loaded from.
    pub root: PathBuf,
    pub manifest: Manifest,
    pub cameras: Vec<Camera>,
    pub azimuths: Vec<AzimuthMap>,
    pub masks: Vec<SilhouetteMask>,
    pub gt_normals: Option<Vec<NormalMap>>,
    pub gt_depths: Option<Vec<DepthMap>>,
}

impl Dataset {
    pub fn view_count(&self) -> usize {
        self.cameras.len()
    }

    /// Loads `dir/manifest.json` and every file it references.
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = Manifest::read(&dir.join(MANIFEST_FILE))?;
        let resolve = |p: &str| dir.join(p);
        let cameras_path = resolve(&manifest.cameras);
        let cameras = read_cameras(&cameras_path)?;
        if cameras.len() != manifest.views.len() {
            return Err(Error::format(
                &cameras_path,
                format!(
                    "{} cameras for {} views",
                    cameras.len(),
                    manifest.views.len()
                ),
            ));
        }
        let mut azimuths = Vec::new();
        let mut masks = Vec::new();
        let mut normals = Vec::new();
        let mut depths = Vec::new();
        for (view, camera) in manifest.views.iter().zip(&cameras) {
            let dims = (camera.width(), camera.height());
            let check = |path: PathBuf, got: (u32, u32)| -> Result<()> {
                if got != dims {
                    return Err(Error::format(
                        path,
                        format!(
                            "map is {}x{}, camera is {}x{}",
                            got.0, got.1, dims.0, dims.1
                        ),
                    ));
                }
                Ok(())
            };
            let azimuth = read_azimuth(&resolve(&view.azimuth))?;
            check(resolve(&view.azimuth), azimuth.dims())?;
            let mask = read_mask(&resolve(&view.mask))?;
            check(resolve(&view.mask), mask.dims())?;
            azimuths.push(azimuth);
            masks.push(mask);
            if let Some(p) = &view.normals {
                let n = read_normals(&resolve(p))?;
                check(resolve(p), n.dims())?;
                normals.push(n);
            }
            if let Some(p) = &view.depth {
                let d = read_depth(&resolve(p))?;
                check(resolve(p), d.dims())?;
                depths.push(d);
            }
        }
        let complete = |n: usize| n == manifest.views.len();
        Ok(Self {
            root: dir.to_path_buf(),
            gt_normals: complete(normals.len()).then_some(normals),
            gt_depths: complete(depths.len()).then_some(depths),
            manifest,
            cameras,
            azimuths,
            masks,
        })
    }

    /// Writes every map under standard names plus `cameras.json` and
    /// `manifest.json` into `dir`, returning the manifest written.
    pub fn write(&self, dir: &Path) -> Result<Manifest> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let n = self.view_count();
        if self.azimuths.len() != n || self.masks.len() != n {
            return Err(Error::ShapeMismatch(
                "view arrays disagree with camera count".into(),
            ));
        }
        let ground_truth = self.gt_normals.is_some() && self.gt_depths.is_some();
        let mut manifest = self.manifest.clone();
        manifest.cameras = CAMERAS_FILE.to_string();
        manifest.views = (0..n)
            .map(|i| ViewFiles::standard(i, ground_truth))
            .collect();
        write_cameras(&dir.join(CAMERAS_FILE), &self.cameras)?;
        for (i, files) in manifest.views.iter().enumerate() {
            write_azimuth(&dir.join(&files.azimuth), &self.azimuths[i])?;
            write_mask(&dir.join(&files.mask), &self.masks[i])?;
            if let (Some(p), Some(normals)) = (&files.normals, &self.gt_normals) {
                write_normals(&dir.join(p), &normals[i])?;
            }
            if let (Some(p), Some(depths)) = (&files.depth, &self.gt_depths) {
                write_depth(&dir.join(p), &depths[i])?;
            }
        }
        write_json(&dir.join(MANIFEST_FILE), &manifest)?;
        Ok(manifest)
    }

    /// Copy of the dataset with cameras normalized; ground-truth depths are
    /// rescaled into the normalized frame and the record is stored in the manifest.
    pub fn normalized(&self, scale_ratio: f64) -> Result<Self> {
        if self.manifest.normalization.is_some() {
            return Err(Error::Dataset("cameras are already normalized".into()));
        }
        let norm = normalize_cameras(&self.cameras, scale_ratio)?;
        let mut out = self.clone();
        out.cameras = norm.cameras;
        out.manifest.normalization = Some(norm.record);
        if let Some(depths) = &mut out.gt_depths {
            for d in depths.iter_mut() {
                let scaled: Vec<Option<f64>> = d
                    .data()
                    .iter()
                    .map(|v| v.map(|t| t / norm.record.scale))
                    .collect();
                *d = Grid::from_vec(d.width(), d.height(), scaled)?;
            }
        }
        Ok(out)
    }

    /// Manifest whose paths point at this dataset's files from anywhere.
    pub fn absolute_manifest(&self) -> Result<Manifest> {
        let root = fs::canonicalize(&self.root).map_err(|e| Error::io(&self.root, e))?;
        let abs = |p: &str| root.join(p).to_string_lossy().into_owned();
        let mut m = self.manifest.clone();
        m.cameras = abs(&m.cameras);
        for v in &mut m.views {
            v.azimuth = abs(&v.azimuth);
            v.mask = abs(&v.mask);
            v.normals = v.normals.as_deref().map(abs);
            v.depth = v.depth.as_deref().map(abs);
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn azimuth_quantization_stays_below_two_pi() {
        let just_below = TAU - 1e-12;
        let v = azimuth_to_f32(just_below);
        assert!((v as f64) < TAU);
        assert!((v as f64 - just_below).abs() < 1e-6);
    }

    #[test]
    fn azimuth_round_trip() {
        let map = AzimuthMap::from_values(3, 1, vec![0.0, f64::NAN, TAU - 1e-12]).unwrap();
        let bytes = encode_azimuth(&map);
        assert_eq!(&bytes[..4], b"AZMP");
        assert_eq!(bytes.len(), 16 + 12);
        let back = decode_azimuth(&bytes).unwrap();
        assert_eq!(encode_azimuth(&back), bytes);
        assert_eq!(back.get(1, 0), None);
    }

    #[test]
    fn mask_and_normals_round_trip() {
        let mask = SilhouetteMask::from_vec(2, 2, vec![true, false, false, true]).unwrap();
        let bytes = encode_mask(&mask);
        assert_eq!(decode_mask(&bytes).unwrap(), mask);
        let normals =
            NormalMap::from_vec(2, 1, vec![Some(Vec3::new(0.0, 0.6, 0.8)), None]).unwrap();
        let bytes = encode_normals(&normals);
        assert_eq!(bytes.len(), 12 + 24);
        let back = decode_normals(&bytes).unwrap();
        assert_eq!(encode_normals(&back), bytes);
        assert_eq!(*back.get(1, 0), None);
    }

    #[test]
    fn rejects_malformed_maps() {
        assert!(decode_mask(b"MSK1\x01\0\0\0\x01\0\0\0\x02").is_err());
        assert!(decode_mask(b"MSK1\x01\0\0\0\x01\0\0\0").is_err());
        assert!(decode_azimuth(b"AZMP\x02\0\0\0\x01\0\0\0\x01\0\0\0\0\0\0\0").is_err());
        assert!(decode_depth(b"XXXX").is_err());
    }

    #[test]
    fn camera_record_uses_documented_keys() {
        let cam = Camera::new(
            CameraIntrinsics::centered(50.0, 64, 48).unwrap(),
            CameraPose::look_at(Vec3::new(2.0, 0.0, 0.0), Vec3::zeros(), Vec3::z()).unwrap(),
        );
        let json = serde_json::to_value(CameraRecord::from(&cam)).unwrap();
        for key in ["fx", "fy", "cx", "cy", "width", "height", "R", "t"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        let back: CameraRecord = serde_json::from_value(json).unwrap();
        let back = back.to_camera().unwrap();
        assert!((back.center() - cam.center()).norm() < 1e-12);
    }
}
