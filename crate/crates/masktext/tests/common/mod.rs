//! Synthetic scenes and helpers shared by the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use masktext::core::{CameraIntrinsics, CameraPose, Mask2D, PointCloud};
use masktext::depth::RawDepth;
use masktext::json::{canonical_document, canonical_lines};
use masktext::records::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DEPTH_SCALE: f32 = 0.001;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_masktext"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn masktext")
}

pub fn exit_code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// World-to-camera pose looking from `eye` at `target` with +z up.
/// Camera axes: x right, y down, z forward.
pub fn look_at(eye: [f64; 3], target: [f64; 3]) -> CameraPose {
    let sub = |a: [f64; 3], b: [f64; 3]| [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    let cross = |a: [f64; 3], b: [f64; 3]| [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
    let unit = |a: [f64; 3]| {
        let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
        [a[0] / n, a[1] / n, a[2] / n]
    };
    let f = unit(sub(target, eye));
    let r = unit(cross(f, [0.0, 0.0, 1.0]));
    let d = cross(f, r);
    let rot = [r, d, f];
    let t = [0, 1, 2].map(|i| -(rot[i][0] * eye[0] + rot[i][1] * eye[1] + rot[i][2] * eye[2]));
    CameraPose::from_rotation_translation(rot, t).unwrap()
}

/// Projection written out independently of the library: nearest pixel and
/// camera depth, or `None` when behind the camera or off the image.
pub fn oracle_project(p: [f64; 3], k: &CameraIntrinsics, pose: &CameraPose) -> Option<(u32, u32, f64)> {
    let m = pose.matrix();
    let cam: Vec<f64> = (0..3).map(|r| m[r * 4] * p[0] + m[r * 4 + 1] * p[1] + m[r * 4 + 2] * p[2] + m[r * 4 + 3]).collect();
    if cam[2] <= 0.0 {
        return None;
    }
    let u = (k.fx * cam[0] / cam[2] + k.cx).round();
    let v = (k.fy * cam[1] / cam[2] + k.cy).round();
    if u < 0.0 || v < 0.0 || u >= k.width as f64 || v >= k.height as f64 {
        return None;
    }
    Some((u as u32, v as u32, cam[2]))
}

/// Brute-force region of one mask: every point that projects onto a set
/// mask pixel with valid depth within `eps`.
pub fn oracle_region(points: &[[f64; 3]], k: &CameraIntrinsics, pose: &CameraPose, depth: &[f64], grid: &[bool], eps: f64) -> Vec<u32> {
    let mut out = Vec::new();
    for (i, &p) in points.iter().enumerate() {
        if let Some((u, v, z)) = oracle_project(p, k, pose) {
            let px = (v * k.width + u) as usize;
            if grid[px] && depth[px] > 0.0 && (z - depth[px]).abs() < eps {
                out.push(i as u32);
            }
        }
    }
    out
}

/// Z-buffer of the cloud: nearest camera depth per pixel, 0 where empty.
/// Also returns the index of the winning point per pixel.
pub fn render(points: &[[f64; 3]], k: &CameraIntrinsics, pose: &CameraPose) -> (Vec<f64>, Vec<Option<u32>>) {
    let n = (k.width * k.height) as usize;
    let mut depth = vec![0.0; n];
    let mut owner = vec![None; n];
    for (i, &p) in points.iter().enumerate() {
        if let Some((u, v, z)) = oracle_project(p, k, pose) {
            let px = (v * k.width + u) as usize;
            if owner[px].is_none() || z < depth[px] {
                depth[px] = z;
                owner[px] = Some(i as u32);
            }
        }
    }
    (depth, owner)
}

pub struct View {
    pub frame_id: String,
    pub k: CameraIntrinsics,
    pub pose: CameraPose,
}

/// A floor with three axis-aligned boxes; `object[i]` is the box of point
/// `i` (0..3) or -1 for the floor. Coordinates are f32-representable.
pub struct CubeRoom {
    pub points: Vec<[f64; 3]>,
    pub object: Vec<i32>,
    pub views: Vec<View>,
}

pub const BOXES: [([f64; 3], [f64; 3]); 3] = [
    ([-1.1, -0.8, 0.0], [-0.5, -0.2, 0.6]),
    ([0.3, -0.6, 0.0], [0.9, -0.1, 0.8]),
    ([-0.2, 0.5, 0.0], [0.3, 1.0, 0.35]),
];

pub const CAPTIONS: [&str; 3] = ["A tall wooden cabinet.", "a grey metal locker", "small red boxes"];

pub fn cube_room(seed: u64, per_box: usize, floor: usize) -> CubeRoom {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::new();
    let mut object = Vec::new();
    let f32r = |x: f64| x as f32 as f64;
    for _ in 0..floor {
        points.push([f32r(rng.gen_range(-2.0..2.0)), f32r(rng.gen_range(-2.0..2.0)), 0.0]);
        object.push(-1);
    }
    for (b, (lo, hi)) in BOXES.iter().enumerate() {
        for _ in 0..per_box {
            // five faces: the bottom rests on the floor
            let face = rng.gen_range(0..5);
            let mut p = [0.0; 3];
            for a in 0..3 {
                p[a] = rng.gen_range(lo[a]..hi[a]);
            }
            match face {
                0 => p[0] = lo[0],
                1 => p[0] = hi[0],
                2 => p[1] = lo[1],
                3 => p[1] = hi[1],
                _ => p[2] = hi[2],
            }
            points.push(p.map(f32r));
            object.push(b as i32);
        }
    }
    let k = CameraIntrinsics::new(128, 96, 110.0, 110.0, 63.5, 47.5).unwrap();
    let views = vec![
        View { frame_id: "view-a".into(), k, pose: look_at([0.3, -3.6, 2.4], [0.0, 0.0, 0.3]) },
        View { frame_id: "view-b".into(), k, pose: look_at([3.2, 1.4, 2.1], [0.0, 0.0, 0.3]) },
    ];
    CubeRoom { points, object, views }
}

impl CubeRoom {
    /// Per-object pixel masks: pixels whose nearest point belongs to it.
    pub fn object_grids(&self, owner: &[Option<u32>]) -> Vec<Vec<bool>> {
        (0..BOXES.len())
            .map(|b| owner.iter().map(|o| o.is_some_and(|i| self.object[i as usize] == b as i32)).collect())
            .collect()
    }

    pub fn cloud(&self) -> PointCloud {
        PointCloud::new(self.points.clone(), Some(self.object.clone()), Some(self.object.iter().map(|&o| o + 1).collect())).unwrap()
    }
}

pub fn quantize(depth: &[f64]) -> Vec<u16> {
    depth.iter().map(|&d| (d / DEPTH_SCALE as f64).round().clamp(0.0, 65535.0) as u16).collect()
}

pub fn write_camera(path: &Path, frame_id: &str, k: &CameraIntrinsics, pose: &CameraPose) {
    let rec = CameraRecord {
        frame_id: frame_id.into(),
        width: k.width,
        height: k.height,
        fx: k.fx,
        fy: k.fy,
        cx: k.cx,
        cy: k.cy,
        world_to_camera: pose.matrix().to_vec(),
    };
    // full precision: the canonical writer keeps only 6 digits
    std::fs::write(path, serde_json::to_vec(&rec).unwrap()).unwrap();
}

/// One frame's files as named in a manifest.
pub struct FrameFiles {
    pub frame_id: String,
    pub k: CameraIntrinsics,
    pub pose: CameraPose,
    pub raw_depth: Vec<u16>,
    pub masks: Vec<Mask2D>,
    pub captions: Vec<(String, String)>,
}

pub fn write_scene(dir: &Path, scene_id: &str, cloud: &PointCloud, frames: &[FrameFiles]) -> PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    masktext::ply::write_ply(&dir.join("cloud.ply"), cloud, masktext::ply::PlyFormat::BinaryLittleEndian).unwrap();
    let mut entries = Vec::new();
    for f in frames {
        let id = &f.frame_id;
        write_camera(&dir.join(format!("{id}.camera.json")), id, &f.k, &f.pose);
        let raw = RawDepth { height: f.k.height, width: f.k.width, scale: DEPTH_SCALE, raw: f.raw_depth.clone() };
        masktext::depth::write_depth(&dir.join(format!("{id}.depth")), &raw).unwrap();
        let masks = MasksFile { frame_id: id.clone(), masks: f.masks.iter().map(MaskRecord::from_core).collect() };
        std::fs::write(dir.join(format!("{id}.masks.json")), canonical_document(&masks)).unwrap();
        let caps: Vec<CaptionRecord> = f
            .captions
            .iter()
            .map(|(m, t)| CaptionRecord { frame_id: id.clone(), mask_id: m.clone(), text: t.clone() })
            .collect();
        std::fs::write(dir.join(format!("{id}.captions.jsonl")), canonical_lines(&caps)).unwrap();
        entries.push(ManifestFrame {
            frame_id: id.clone(),
            camera_json_path: format!("{id}.camera.json"),
            depth_path: format!("{id}.depth"),
            masks_json_path: format!("{id}.masks.json"),
            captions_jsonl_path: format!("{id}.captions.jsonl"),
        });
    }
    let manifest = SceneManifest {
        scene_id: scene_id.into(),
        pointcloud_path: "cloud.ply".into(),
        n_points: cloud.len() as u64,
        frames: entries,
    };
    let path = dir.join("manifest.json");
    std::fs::write(&path, canonical_document(&manifest)).unwrap();
    path
}

/// Writes the cube room with quantized depth and one mask per visible box.
pub fn write_cube_room(dir: &Path, room: &CubeRoom) -> PathBuf {
    let frames: Vec<FrameFiles> = room
        .views
        .iter()
        .map(|v| {
            let (depth, owner) = render(&room.points, &v.k, &v.pose);
            let grids = room.object_grids(&owner);
            let mut masks = Vec::new();
            let mut captions = Vec::new();
            for (b, g) in grids.iter().enumerate() {
                let id = format!("box{b}");
                masks.push(Mask2D::encode(v.k.height, v.k.width, g, id.clone(), "synthetic".into()).unwrap());
                captions.push((id, CAPTIONS[b].to_string()));
            }
            FrameFiles { frame_id: v.frame_id.clone(), k: v.k, pose: v.pose, raw_depth: quantize(&depth), masks, captions }
        })
        .collect();
    write_scene(dir, "cube-room", &room.cloud(), &frames)
}

pub fn sha256_file(path: &Path) -> String {
    use sha2::{Digest, Sha256};
    let bytes = std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
