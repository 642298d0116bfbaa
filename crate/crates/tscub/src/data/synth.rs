//! Deterministic synthetic two-domain skeleton benchmark.
//!
//! A rigid 25-joint stick figure is animated by per-class parametric joint
//! rotations (forward kinematics over the canonical joint tree), giving
//! eight distinct motions. The rest pose is deliberately left/right
//! asymmetric (left elbow bent, stance offset) so limb-swap pretext labels
//! are recoverable from any clip, and half the motions are left/right or
//! direction specific so both pretext tasks carry signal.
//!
//! The target domain renders the same underlying clip content and then
//! applies per-clip domain shift: a yaw rotation about the vertical axis,
//! a tempo factor scaling motion phase, a uniform limb rescale, and
//! coordinate jitter. With all shift ranges at zero, source and target
//! clips of the same class and index are identical.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skeleton::{JointSchema, SkeletonSequence};
use std::sync::Arc;

/// Motion classes, in canonical label order.
pub const MOTION_NAMES: [&str; 8] = [
    "raise_left_arm",
    "raise_right_arm",
    "kick",
    "jump",
    "bow",
    "wave",
    "sit",
    "walk",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Number of motion classes (1..=8).
    pub num_classes: usize,
    /// Clips per class per domain.
    pub clips_per_class: usize,
    /// Fraction of each class's clips assigned to the train split.
    pub train_fraction: f64,
    /// Native frame count range (inclusive).
    pub min_frames: usize,
    pub max_frames: usize,
    /// Target-domain view shift: yaw drawn from `[-view_yaw, view_yaw]`.
    pub view_yaw: f64,
    /// Target-domain tempo factor range.
    pub tempo_min: f64,
    pub tempo_max: f64,
    /// Target-domain uniform limb rescale range.
    pub limb_scale_min: f64,
    pub limb_scale_max: f64,
    /// Target-domain per-coordinate Gaussian jitter.
    pub jitter_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_classes: 8,
            clips_per_class: 200,
            train_fraction: 0.5,
            min_frames: 24,
            max_frames: 32,
            view_yaw: 2.6,
            tempo_min: 0.4,
            tempo_max: 1.8,
            limb_scale_min: 0.6,
            limb_scale_max: 1.5,
            jitter_sigma: 0.05,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 || self.num_classes > MOTION_NAMES.len() {
            return Err(Error::InvalidArgument(format!(
                "num_classes must be 1..={}, got {}",
                MOTION_NAMES.len(),
                self.num_classes
            )));
        }
        if self.clips_per_class == 0 {
            return Err(Error::InvalidArgument("clips_per_class must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.train_fraction) && self.train_fraction != 1.0 {
            return Err(Error::InvalidArgument(format!(
                "train_fraction must be in (0, 1], got {}",
                self.train_fraction
            )));
        }
        if self.min_frames < 4 || self.max_frames < self.min_frames {
            return Err(Error::InvalidArgument(format!(
                "bad frame range {}..={}",
                self.min_frames, self.max_frames
            )));
        }
        if self.view_yaw < 0.0
            || self.jitter_sigma < 0.0
            || self.tempo_min <= 0.0
            || self.tempo_max < self.tempo_min
            || self.limb_scale_min <= 0.0
            || self.limb_scale_max < self.limb_scale_min
        {
            return Err(Error::InvalidArgument("bad shift ranges".into()));
        }
        Ok(())
    }

    pub fn class_names(&self) -> Vec<String> {
        MOTION_NAMES[..self.num_classes]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    pub fn train_count(&self) -> usize {
        ((self.clips_per_class as f64) * self.train_fraction).round() as usize
    }
}

/// Canonical joint tree: parent index per joint (root = spine_base).
const PARENTS: [usize; 25] = [
    usize::MAX, // 0 spine_base
    0,          // 1 spine_mid
    20,         // 2 neck
    2,          // 3 head
    20,         // 4 left_shoulder
    4,          // 5 left_elbow
    5,          // 6 left_wrist
    6,          // 7 left_hand
    20,         // 8 right_shoulder
    8,          // 9 right_elbow
    9,          // 10 right_wrist
    10,         // 11 right_hand
    0,          // 12 left_hip
    12,         // 13 left_knee
    13,         // 14 left_ankle
    14,         // 15 left_foot
    0,          // 16 right_hip
    16,         // 17 right_knee
    17,         // 18 right_ankle
    18,         // 19 right_foot
    1,          // 20 spine (shoulder girdle)
    7,          // 21 left_hand_tip
    7,          // 22 left_thumb
    11,         // 23 right_hand_tip
    11,         // 24 right_thumb
];

/// Bone offsets in the parent frame at rest (z up, y forward, x to the
/// figure's left).
const OFFSETS: [[f64; 3]; 25] = [
    [0.0, 0.0, 0.95],      // spine_base (from world origin)
    [0.0, 0.0, 0.22],      // spine_mid
    [0.0, 0.0, 0.10],      // neck
    [0.0, 0.0, 0.14],      // head
    [0.19, 0.0, -0.02],    // left_shoulder
    [0.025, 0.0, -0.26],   // left_elbow
    [0.0, 0.0, -0.24],     // left_wrist
    [0.0, 0.0, -0.075],    // left_hand
    [-0.19, 0.0, -0.02],   // right_shoulder
    [-0.025, 0.0, -0.26],  // right_elbow
    [0.0, 0.0, -0.24],     // right_wrist
    [0.0, 0.0, -0.075],    // right_hand
    [0.095, 0.0, -0.055],  // left_hip
    [0.0, 0.0, -0.40],     // left_knee
    [0.0, 0.0, -0.39],     // left_ankle
    [0.0, 0.13, -0.05],    // left_foot
    [-0.095, 0.0, -0.055], // right_hip
    [0.0, 0.0, -0.40],     // right_knee
    [0.0, 0.0, -0.39],     // right_ankle
    [0.0, 0.13, -0.05],    // right_foot
    [0.0, 0.0, 0.22],      // spine
    [0.0, 0.0, -0.06],     // left_hand_tip
    [0.035, 0.025, -0.02], // left_thumb
    [0.0, 0.0, -0.06],     // right_hand_tip
    [-0.035, 0.025, -0.02],// right_thumb
];

/// Topological traversal order (parents before children).
const ORDER: [usize; 25] = [
    0, 1, 20, 2, 3, 4, 5, 6, 7, 21, 22, 8, 9, 10, 11, 23, 24, 12, 13, 14, 15, 16, 17, 18, 19,
];

type Mat3 = [[f64; 3]; 3];

const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

fn rot_x(t: f64) -> Mat3 {
    let (s, c) = t.sin_cos();
    [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
}

fn rot_y(t: f64) -> Mat3 {
    let (s, c) = t.sin_cos();
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}


fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn mat_vec(a: &Mat3, v: &[f64; 3]) -> [f64; 3] {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

/// Per-clip style drawn from the content stream (shared by both domains).
struct ClipStyle {
    amplitude: f64,
    phase: f64,
    idle_left_shoulder: f64,
    idle_right_shoulder: f64,
    idle_left_elbow: f64,
    idle_right_elbow: f64,
    idle_left_hip: f64,
    idle_right_hip: f64,
    frames: usize,
}

impl ClipStyle {
    fn draw(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> Self {
        ClipStyle {
            amplitude: rng.gen_range(0.85..1.15),
            phase: rng.gen_range(0.0..0.2),
            idle_left_shoulder: 0.14 + rng.gen_range(-0.03..0.03),
            idle_right_shoulder: 0.02 + rng.gen_range(-0.02..0.02),
            idle_left_elbow: 0.40 + rng.gen_range(-0.05..0.05),
            idle_right_elbow: 0.05 + rng.gen_range(-0.03..0.03),
            idle_left_hip: 0.10 + rng.gen_range(-0.03..0.03),
            idle_right_hip: 0.02 + rng.gen_range(-0.02..0.02),
            frames: rng.gen_range(cfg.min_frames..=cfg.max_frames),
        }
    }
}

fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * (3.0 - 2.0 * s)
}

fn pulse(s: f64) -> f64 {
    (std::f64::consts::PI * s.clamp(0.0, 1.0)).sin()
}

/// Joint-local rotations plus root translation for one frame.
struct Pose {
    local: [Mat3; 25],
    root_shift: [f64; 3],
}

impl Pose {
    fn rest(style: &ClipStyle) -> Self {
        let mut local = [IDENTITY; 25];
        local[4] = rot_y(-style.idle_left_shoulder);
        local[8] = rot_y(style.idle_right_shoulder);
        local[5] = rot_x(style.idle_left_elbow);
        local[9] = rot_x(style.idle_right_elbow);
        local[12] = rot_x(style.idle_left_hip);
        local[16] = rot_x(style.idle_right_hip);
        Pose {
            local,
            root_shift: [0.0; 3],
        }
    }

    fn apply(&mut self, joint: usize, m: Mat3) {
        self.local[joint] = mat_mul(&self.local[joint], &m);
    }
}

/// Class-specific pose at motion phase `s` (tempo-scaled, may exceed 1).
///
/// Every class completes its signature pose early (by phase ~0.5), so the
/// class stays recognizable from pose content under tempo warping and
/// segment permutation; the approach to that pose still carries the
/// temporal structure the ordering task depends on.
fn pose_at(class: usize, s: f64, style: &ClipStyle) -> Pose {
    let mut p = Pose::rest(style);
    let a = style.amplitude;
    match class {
        // raise_left_arm: left arm sweeps overhead early, then keeps
        // drifting slowly so no clip segment is ever static.
        0 => {
            let theta = 2.25 * a * smoothstep(2.0 * s) + 0.3 * a * s.min(1.3);
            p.apply(4, rot_y(-theta));
            p.apply(5, rot_x(-0.8 * style.idle_left_elbow * smoothstep(2.0 * s)));
        }
        // raise_right_arm: mirror image.
        1 => {
            let theta = 2.25 * a * smoothstep(2.0 * s) + 0.3 * a * s.min(1.3);
            p.apply(8, rot_y(theta));
            p.apply(9, rot_x(-0.8 * style.idle_right_elbow * smoothstep(2.0 * s)));
        }
        // kick: right leg swings high with the knee extending; arms stay
        // down, trunk leans back slightly.
        2 => {
            let swing = 1.3 * a * pulse(1.6 * s) + 0.5 * a * pulse(2.5 * (s - 0.6).max(0.0));
            p.apply(16, rot_x(swing));
            p.apply(17, rot_x(-0.35 * swing));
            p.apply(1, rot_x(-0.18 * swing));
        }
        // jump: both arms overhead (the class signature), an early crouch,
        // then the pelvis rises.
        3 => {
            let arms = 2.0 * a * smoothstep(2.0 * s) + 0.25 * a * s.min(1.3);
            p.apply(4, rot_y(-arms));
            p.apply(8, rot_y(arms));
            let crouch = 0.55 * a * pulse(2.0 * s.min(0.5));
            let rise = 0.35 * a * smoothstep(1.4 * s - 0.7);
            p.apply(12, rot_x(crouch));
            p.apply(16, rot_x(crouch));
            p.apply(13, rot_x(-1.4 * crouch));
            p.apply(17, rot_x(-1.4 * crouch));
            p.root_shift[2] += rise - 0.16 * crouch;
        }
        // bow: deep trunk pitch on straight legs, arms hanging.
        4 => {
            let bend = 1.0 * a * pulse(1.2 * s) + 0.35 * a * pulse(2.8 * (s - 0.62).max(0.0));
            p.apply(1, rot_x(bend));
            p.apply(2, rot_x(0.3 * bend));
        }
        // wave: left arm lifts to horizontal only, forearm oscillates.
        5 => {
            let lift = 1.25 * a * smoothstep(3.0 * s);
            p.apply(4, rot_y(-lift));
            let osc = 0.6 * a * (2.0 * std::f64::consts::TAU * (s + style.phase)).sin()
                * smoothstep(3.0 * s);
            p.apply(5, rot_y(osc));
        }
        // sit: hips and knees fold deep, pelvis drops, trunk stays upright.
        6 => {
            let fold = (smoothstep(1.6 * s) + 0.18 * s).min(1.25);
            p.apply(12, rot_x(1.5 * a * fold));
            p.apply(16, rot_x(1.5 * a * fold));
            p.apply(13, rot_x(-1.5 * a * fold));
            p.apply(17, rot_x(-1.5 * a * fold));
            p.root_shift[2] -= 0.34 * a * fold;
        }
        // walk: alternating legs, counter-swinging arms, forward drift.
        7 => {
            let t = std::f64::consts::TAU * (1.5 * s + style.phase);
            let gait = 0.5 * a * t.sin();
            p.apply(12, rot_x(gait));
            p.apply(16, rot_x(-gait));
            p.apply(13, rot_x(-0.4 * a * (1.0 + t.cos()) / 2.0));
            p.apply(17, rot_x(-0.4 * a * (1.0 - t.cos()) / 2.0));
            p.apply(4, rot_x(-0.35 * gait));
            p.apply(8, rot_x(0.35 * gait));
            p.root_shift[1] += 0.45 * s;
            p.root_shift[2] += 0.015 * (2.0 * t).sin();
        }
        _ => unreachable!("class out of range"),
    }
    // Universal breathing sway: low-amplitude, class-agnostic motion that
    // keeps every temporal segment distinct even when the class motion has
    // settled.
    let breathe = std::f64::consts::TAU * (1.3 * s + 0.7 * style.phase);
    p.apply(1, rot_x(0.15 * breathe.sin()));
    p.apply(2, rot_x(0.08 * (breathe + 1.1).sin()));
    p.root_shift[2] += 0.03 * (std::f64::consts::TAU * (1.7 * s + style.phase)).sin();
    p
}

/// Forward kinematics: world positions for all 25 joints.
fn fk(pose: &Pose, limb_scale: f64) -> [[f64; 3]; 25] {
    let mut pos = [[0.0; 3]; 25];
    let mut rot = [IDENTITY; 25];
    for &j in &ORDER {
        let off = [
            OFFSETS[j][0] * limb_scale,
            OFFSETS[j][1] * limb_scale,
            OFFSETS[j][2] * limb_scale,
        ];
        if PARENTS[j] == usize::MAX {
            pos[j] = [
                off[0] + pose.root_shift[0],
                off[1] + pose.root_shift[1],
                off[2] + pose.root_shift[2],
            ];
            rot[j] = pose.local[j];
        } else {
            let parent = PARENTS[j];
            let world_off = mat_vec(&rot[parent], &off);
            pos[j] = [
                pos[parent][0] + world_off[0],
                pos[parent][1] + world_off[1],
                pos[parent][2] + world_off[2],
            ];
            rot[j] = mat_mul(&rot[parent], &pose.local[j]);
        }
    }
    pos
}

/// Target-domain shift parameters for one clip.
#[derive(Debug, Clone, Copy)]
struct ClipShift {
    yaw: f64,
    tempo: f64,
    limb_scale: f64,
    jitter_sigma: f64,
}

impl ClipShift {
    fn none() -> Self {
        ClipShift {
            yaw: 0.0,
            tempo: 1.0,
            limb_scale: 1.0,
            jitter_sigma: 0.0,
        }
    }

    fn draw(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> Self {
        ClipShift {
            yaw: rng.gen_range(-cfg.view_yaw..=cfg.view_yaw),
            tempo: rng.gen_range(cfg.tempo_min..=cfg.tempo_max),
            limb_scale: rng.gen_range(cfg.limb_scale_min..=cfg.limb_scale_max),
            jitter_sigma: cfg.jitter_sigma,
        }
    }
}

/// splitmix64 mixing for derived seeds.
pub fn mix_seed(base: u64, parts: &[u64]) -> u64 {
    let mut x = base;
    for &p in parts {
        x = x.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(p);
        let mut z = x;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        x = z ^ (z >> 31);
    }
    x
}

/// Render one clip: class motion under a clip style and a domain shift.
fn render_clip(
    class: usize,
    style: &ClipStyle,
    shift: &ClipShift,
    jitter_seed: u64,
    schema: &Arc<JointSchema>,
) -> SkeletonSequence {
    let frames = style.frames;
    let mut seq = SkeletonSequence::zeros(1, frames, 3, Arc::clone(schema));
    let (yaw_s, yaw_c) = shift.yaw.sin_cos();
    let mut jitter_rng = ChaCha8Rng::seed_from_u64(jitter_seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    for f in 0..frames {
        let u = f as f64 / (frames - 1).max(1) as f64;
        let pose = pose_at(class, shift.tempo * u, style);
        let pos = fk(&pose, shift.limb_scale);
        for (j, p) in pos.iter().enumerate() {
            // Yaw about the vertical axis through the origin.
            let x = yaw_c * p[0] - yaw_s * p[1];
            let y = yaw_s * p[0] + yaw_c * p[1];
            let mut coords = [x, y, p[2]];
            if shift.jitter_sigma > 0.0 {
                for c in &mut coords {
                    *c += shift.jitter_sigma * normal.sample(&mut jitter_rng);
                }
            }
            for (d, &v) in coords.iter().enumerate() {
                seq.set(0, f, j, d, v);
            }
        }
    }
    seq
}

/// One generated clip with its metadata.
pub struct SynthClip {
    pub class: usize,
    pub index: usize,
    pub sequence: SkeletonSequence,
}

/// Generate all clips for one domain. `shifted = false` renders the source
/// domain (no shift); `true` renders the target domain.
pub fn generate_domain_clips(cfg: &SynthConfig, shifted: bool) -> Result<Vec<SynthClip>> {
    cfg.validate()?;
    let schema = Arc::new(JointSchema::canonical25());
    let mut clips = Vec::with_capacity(cfg.num_classes * cfg.clips_per_class);
    for class in 0..cfg.num_classes {
        for index in 0..cfg.clips_per_class {
            // Content stream is domain-independent.
            let mut content_rng = ChaCha8Rng::seed_from_u64(mix_seed(
                cfg.seed,
                &[1, class as u64, index as u64],
            ));
            let style = ClipStyle::draw(&mut content_rng, cfg);
            let shift = if shifted {
                let mut shift_rng = ChaCha8Rng::seed_from_u64(mix_seed(
                    cfg.seed,
                    &[2, class as u64, index as u64],
                ));
                ClipShift::draw(&mut shift_rng, cfg)
            } else {
                ClipShift::none()
            };
            let jitter_seed = mix_seed(cfg.seed, &[3, class as u64, index as u64]);
            let sequence = render_clip(class, &style, &shift, jitter_seed, &schema);
            clips.push(SynthClip {
                class,
                index,
                sequence,
            });
        }
    }
    Ok(clips)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        SynthConfig::default().validate().unwrap();
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SynthConfig {
            clips_per_class: 2,
            num_classes: 3,
            ..Default::default()
        };
        let a = generate_domain_clips(&cfg, true).unwrap();
        let b = generate_domain_clips(&cfg, true).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.sequence, y.sequence);
        }
    }

    #[test]
    fn zero_shift_makes_domains_identical() {
        let cfg = SynthConfig {
            clips_per_class: 2,
            num_classes: 4,
            view_yaw: 0.0,
            tempo_min: 1.0,
            tempo_max: 1.0,
            limb_scale_min: 1.0,
            limb_scale_max: 1.0,
            jitter_sigma: 0.0,
            ..Default::default()
        };
        let src = generate_domain_clips(&cfg, false).unwrap();
        let tgt = generate_domain_clips(&cfg, true).unwrap();
        for (s, t) in src.iter().zip(&tgt) {
            assert_eq!(s.sequence, t.sequence);
        }
    }

    #[test]
    fn domains_differ_under_default_shift() {
        let cfg = SynthConfig {
            clips_per_class: 1,
            ..Default::default()
        };
        let src = generate_domain_clips(&cfg, false).unwrap();
        let tgt = generate_domain_clips(&cfg, true).unwrap();
        let mut any_diff = false;
        for (s, t) in src.iter().zip(&tgt) {
            if s.sequence.frames() != t.sequence.frames()
                || s.sequence.max_abs_diff(&t.sequence) > 1e-6
            {
                any_diff = true;
            }
        }
        assert!(any_diff);
    }

    #[test]
    fn left_arm_raise_matches_closed_form() {
        let cfg = SynthConfig {
            clips_per_class: 3,
            ..Default::default()
        };
        let src = generate_domain_clips(&cfg, false).unwrap();
        let schema = JointSchema::canonical25();
        let lw = schema.index_of("left_wrist").unwrap();
        let ls = schema.index_of("left_shoulder").unwrap();
        let rw = schema.index_of("right_wrist").unwrap();
        let rs = schema.index_of("right_shoulder").unwrap();
        for clip in src.iter().filter(|c| c.class == 0) {
            let mid = clip.sequence.frames() / 2;
            let wrist_z = clip.sequence.get(0, mid, lw, 2);
            let shoulder_z = clip.sequence.get(0, mid, ls, 2);
            assert!(
                wrist_z > shoulder_z,
                "left wrist should be above the shoulder by mid-clip ({wrist_z} vs {shoulder_z})"
            );
            let r_wrist_z = clip.sequence.get(0, mid, rw, 2);
            let r_shoulder_z = clip.sequence.get(0, mid, rs, 2);
            assert!(r_wrist_z < r_shoulder_z, "right arm must stay down");
        }
    }

    #[test]
    fn bones_are_rigid_without_jitter() {
        let cfg = SynthConfig {
            clips_per_class: 1,
            jitter_sigma: 0.0,
            ..Default::default()
        };
        for domain in [false, true] {
            let clips = generate_domain_clips(&cfg, domain).unwrap();
            for clip in &clips {
                let seq = &clip.sequence;
                for (j, &parent) in PARENTS.iter().enumerate() {
                    if parent == usize::MAX {
                        continue;
                    }
                    let mut first = None;
                    for f in 0..seq.frames() {
                        let d: f64 = (0..3)
                            .map(|c| (seq.get(0, f, j, c) - seq.get(0, f, parent, c)).powi(2))
                            .sum::<f64>()
                            .sqrt();
                        match first {
                            None => first = Some(d),
                            Some(d0) => assert!(
                                (d - d0).abs() < 1e-9,
                                "bone {j} length drifts: {d0} vs {d} (class {})",
                                clip.class
                            ),
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn rest_pose_is_left_right_asymmetric() {
        // Arm-swap labels must be recoverable from any clip, so the rest
        // pose itself has to break mirror symmetry.
        let cfg = SynthConfig {
            clips_per_class: 1,
            num_classes: 8,
            ..Default::default()
        };
        let src = generate_domain_clips(&cfg, false).unwrap();
        let schema = JointSchema::canonical25();
        let lw = schema.index_of("left_wrist").unwrap();
        let rw = schema.index_of("right_wrist").unwrap();
        for clip in &src {
            let seq = &clip.sequence;
            // Compare the mirrored left wrist against the right wrist in
            // frame 0; they must differ beyond jitter scale.
            let l = [seq.get(0, 0, lw, 0), seq.get(0, 0, lw, 1), seq.get(0, 0, lw, 2)];
            let r = [seq.get(0, 0, rw, 0), seq.get(0, 0, rw, 1), seq.get(0, 0, rw, 2)];
            let mirror_gap =
                ((l[0] + r[0]).powi(2) + (l[1] - r[1]).powi(2) + (l[2] - r[2]).powi(2)).sqrt();
            assert!(
                mirror_gap > 0.03,
                "class {}: mirror gap only {mirror_gap}",
                clip.class
            );
        }
    }
}
