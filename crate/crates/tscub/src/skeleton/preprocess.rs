//! Raw-data preprocessing: rotation normalization, frame resampling,
//! joint subsetting, and Gaussian-noise perturbation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::skeleton::schema;
use crate::skeleton::SkeletonSequence;

/// Outcome of [`rotate_normalize`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationReport {
    /// Rotation applied around the z axis, radians.
    pub angle: f64,
    /// Angle between the rotated spine-base→spine direction and the +y axis
    /// (xy projection), radians. A single z rotation cannot zero both the
    /// shoulder line and the spine, so this residual is reported rather than
    /// corrected.
    pub residual_spine_angle: f64,
    /// True when the reference shoulders were absent or coincident and the
    /// sequence was returned unmodified.
    pub degenerate: bool,
}

const COINCIDENT_EPS: f64 = 1e-12;

/// Rotate the clip around the z axis so the right-shoulder→left-shoulder
/// vector of the reference pose has zero y component and positive x
/// component.
///
/// The angle is computed once, from frame 0 of person 0, and applied to all
/// frames and persons; interacting persons share one world frame, so a
/// per-person angle would distort their relative geometry. Degenerate
/// reference joints (absent or coincident shoulders) skip normalization and
/// set the `degenerate` flag instead of erroring.
pub fn rotate_normalize(seq: &SkeletonSequence) -> Result<(SkeletonSequence, RotationReport)> {
    if seq.dims() != 3 {
        return Err(Error::InvalidArgument(format!(
            "rotate_normalize requires 3-d coordinates, got {}",
            seq.dims()
        )));
    }
    let schema = seq.schema();
    let rs = schema.require(schema::RIGHT_SHOULDER)?;
    let ls = schema.require(schema::LEFT_SHOULDER)?;

    let degenerate_report = RotationReport {
        angle: 0.0,
        residual_spine_angle: 0.0,
        degenerate: true,
    };
    if !seq.is_present(0, rs) || !seq.is_present(0, ls) {
        return Ok((seq.clone(), degenerate_report));
    }
    let r = seq.joint(0, 0, rs);
    let l = seq.joint(0, 0, ls);
    let (vx, vy) = (l[0] - r[0], l[1] - r[1]);
    if vx * vx + vy * vy < COINCIDENT_EPS * COINCIDENT_EPS {
        return Ok((seq.clone(), degenerate_report));
    }

    let angle = vy.atan2(vx);
    let (sin, cos) = angle.sin_cos();
    let mut out = seq.clone();
    for p in 0..seq.persons() {
        for f in 0..seq.frames() {
            for j in 0..seq.joints() {
                if !seq.is_present(p, j) {
                    continue;
                }
                let x = seq.get(p, f, j, 0);
                let y = seq.get(p, f, j, 1);
                out.set(p, f, j, 0, cos * x + sin * y);
                out.set(p, f, j, 1, -sin * x + cos * y);
            }
        }
    }

    let residual = spine_residual(&out);
    Ok((
        out,
        RotationReport {
            angle,
            residual_spine_angle: residual,
            degenerate: false,
        },
    ))
}

fn spine_residual(seq: &SkeletonSequence) -> f64 {
    let schema = seq.schema();
    let (Some(base), Some(spine)) = (
        schema.index_of(schema::SPINE_BASE),
        schema.index_of(schema::SPINE),
    ) else {
        return 0.0;
    };
    if !seq.is_present(0, base) || !seq.is_present(0, spine) {
        return 0.0;
    }
    let b = seq.joint(0, 0, base);
    let s = seq.joint(0, 0, spine);
    let (sx, sy) = (s[0] - b[0], s[1] - b[1]);
    if sx == 0.0 && sy == 0.0 {
        return 0.0;
    }
    sx.atan2(sy)
}

/// Resample to exactly `target_frames` frames by nearest-index selection
/// (`src = i * frames / target_frames`); no coordinate blending, ordering
/// preserved.
pub fn resample_frames(seq: &SkeletonSequence, target_frames: usize) -> Result<SkeletonSequence> {
    if target_frames == 0 {
        return Err(Error::InvalidArgument(
            "target frame count must be at least 1".into(),
        ));
    }
    if target_frames == seq.frames() {
        return Ok(seq.clone());
    }
    let mut out = SkeletonSequence::zeros(seq.persons(), target_frames, seq.dims(), seq.schema_arc());
    for p in 0..seq.persons() {
        for j in 0..seq.joints() {
            out.set_present(p, j, seq.is_present(p, j));
        }
        for t in 0..target_frames {
            let src = t * seq.frames() / target_frames;
            for j in 0..seq.joints() {
                for d in 0..seq.dims() {
                    out.set(p, t, j, d, seq.get(p, src, j, d));
                }
            }
        }
    }
    Ok(out)
}

/// Restrict the clip to a named joint subset. Canonical joint order is
/// preserved and every body-part group must stay nonempty.
pub fn select_joints(seq: &SkeletonSequence, subset: &[&str]) -> Result<SkeletonSequence> {
    let (schema, keep) = seq.schema().subset(subset)?;
    let schema = std::sync::Arc::new(schema);
    let mut out = SkeletonSequence::zeros(seq.persons(), seq.frames(), seq.dims(), schema);
    for p in 0..seq.persons() {
        for (new_j, &old_j) in keep.iter().enumerate() {
            out.set_present(p, new_j, seq.is_present(p, old_j));
        }
        for f in 0..seq.frames() {
            for (new_j, &old_j) in keep.iter().enumerate() {
                for d in 0..seq.dims() {
                    out.set(p, f, new_j, d, seq.get(p, f, old_j, d));
                }
            }
        }
    }
    Ok(out)
}

/// Perturb coordinates with zero-mean Gaussian noise of std `sigma` in a
/// per-clip per-axis `[-1, 1]` normalized scale, then map back. Axes with
/// zero coordinate range pass through unnoised; absent joints stay zero.
/// Deterministic given `seed`.
pub fn add_gaussian_noise(seq: &SkeletonSequence, sigma: f64, seed: u64) -> Result<SkeletonSequence> {
    if sigma < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "noise sigma must be nonnegative, got {sigma}"
        )));
    }
    let dims = seq.dims();
    // Per-axis range over present joints only.
    let mut lo = vec![f64::INFINITY; dims];
    let mut hi = vec![f64::NEG_INFINITY; dims];
    for p in 0..seq.persons() {
        for f in 0..seq.frames() {
            for j in 0..seq.joints() {
                if !seq.is_present(p, j) {
                    continue;
                }
                for d in 0..dims {
                    let v = seq.get(p, f, j, d);
                    lo[d] = lo[d].min(v);
                    hi[d] = hi[d].max(v);
                }
            }
        }
    }
    if lo.iter().any(|v| !v.is_finite()) {
        // Fully padded clip: nothing to perturb.
        return Ok(seq.clone());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut out = seq.clone();
    for p in 0..seq.persons() {
        for f in 0..seq.frames() {
            for j in 0..seq.joints() {
                if !seq.is_present(p, j) {
                    continue;
                }
                for d in 0..dims {
                    let range = hi[d] - lo[d];
                    if range == 0.0 {
                        continue;
                    }
                    let v = seq.get(p, f, j, d);
                    let normalized = 2.0 * (v - lo[d]) / range - 1.0;
                    let noised = normalized + sigma * normal.sample(&mut rng);
                    out.set(p, f, j, d, (noised + 1.0) / 2.0 * range + lo[d]);
                }
            }
        }
    }
    Ok(out)
}

/// Joint subset presets addressable from configuration files.
pub fn subset_by_name(name: &str) -> Result<Option<Vec<&'static str>>> {
    match name {
        "full" | "nj25" => Ok(None),
        "nj22" => Ok(Some(schema::subset_nj22())),
        "nj18" => Ok(Some(schema::subset_nj18())),
        "nj12" => Ok(Some(schema::subset_nj12())),
        other => Err(Error::InvalidArgument(format!(
            "unknown joint subset {other} (expected full, nj22, nj18 or nj12)"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::{BodyPart, JointSchema};
    use rand::Rng;
    use std::sync::Arc;

    fn schema() -> Arc<JointSchema> {
        Arc::new(JointSchema::canonical25())
    }

    /// Upright articulated test pose: shoulders on the x axis, spine up the
    /// z axis, remaining joints pseudo-random but fixed.
    fn aligned_pose(frames: usize) -> SkeletonSequence {
        let schema = schema();
        let mut seq = SkeletonSequence::zeros(1, frames, 3, Arc::clone(&schema));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for f in 0..frames {
            let sway = 0.02 * f as f64;
            for j in 0..seq.joints() {
                let base = [
                    0.3 * rng.gen::<f64>() - 0.15,
                    0.3 * rng.gen::<f64>() - 0.15,
                    rng.gen::<f64>(),
                ];
                for d in 0..3 {
                    seq.set(0, f, j, d, base[d] + sway);
                }
            }
            let rs = seq.schema().index_of(schema::RIGHT_SHOULDER).unwrap();
            let ls = seq.schema().index_of(schema::LEFT_SHOULDER).unwrap();
            let sb = seq.schema().index_of(schema::SPINE_BASE).unwrap();
            let sp = seq.schema().index_of(schema::SPINE).unwrap();
            for (j, pos) in [
                (rs, [-0.2, 0.0, 1.4]),
                (ls, [0.2, 0.0, 1.4]),
                (sb, [0.0, 0.0, 0.9]),
                (sp, [0.0, 0.0, 1.35]),
            ] {
                for d in 0..3 {
                    seq.set(0, f, j, d, pos[d] + sway);
                }
            }
        }
        seq
    }

    fn rotate_z(seq: &SkeletonSequence, angle: f64) -> SkeletonSequence {
        let (sin, cos) = angle.sin_cos();
        let mut out = seq.clone();
        for p in 0..seq.persons() {
            for f in 0..seq.frames() {
                for j in 0..seq.joints() {
                    let x = seq.get(p, f, j, 0);
                    let y = seq.get(p, f, j, 1);
                    out.set(p, f, j, 0, cos * x - sin * y);
                    out.set(p, f, j, 1, sin * x + cos * y);
                }
            }
        }
        out
    }

    #[test]
    fn rotate_aligned_is_identity() {
        let seq = aligned_pose(4);
        let (out, report) = rotate_normalize(&seq).unwrap();
        assert!(!report.degenerate);
        assert!(out.max_abs_diff(&seq) < 1e-9);
    }

    #[test]
    fn rotate_undoes_known_rotation() {
        let seq = aligned_pose(4);
        let rotated = rotate_z(&seq, std::f64::consts::FRAC_PI_2);
        let (out, report) = rotate_normalize(&rotated).unwrap();
        assert!(!report.degenerate);
        assert!(
            out.max_abs_diff(&seq) < 1e-6,
            "max diff {}",
            out.max_abs_diff(&seq)
        );
    }

    #[test]
    fn rotate_post_condition_and_idempotence() {
        let seq = rotate_z(&aligned_pose(3), 1.1);
        let (once, _) = rotate_normalize(&seq).unwrap();
        let rs = once.schema().index_of(schema::RIGHT_SHOULDER).unwrap();
        let ls = once.schema().index_of(schema::LEFT_SHOULDER).unwrap();
        let r = once.joint(0, 0, rs).to_vec();
        let l = once.joint(0, 0, ls).to_vec();
        assert!((l[1] - r[1]).abs() < 1e-9, "shoulder y component remains");
        assert!(l[0] - r[0] > 0.0, "shoulder x component must be positive");
        let (twice, _) = rotate_normalize(&once).unwrap();
        assert!(twice.max_abs_diff(&once) < 1e-9);
    }

    #[test]
    fn rotate_preserves_pairwise_distances() {
        let seq = rotate_z(&aligned_pose(3), -2.4);
        let (out, _) = rotate_normalize(&seq).unwrap();
        for f in 0..seq.frames() {
            for a in 0..seq.joints() {
                for b in (a + 1)..seq.joints() {
                    let da: f64 = (0..3)
                        .map(|d| (seq.get(0, f, a, d) - seq.get(0, f, b, d)).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    let db: f64 = (0..3)
                        .map(|d| (out.get(0, f, a, d) - out.get(0, f, b, d)).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    assert!((da - db).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn rotate_degenerate_returns_unmodified() {
        let seq = SkeletonSequence::zeros(1, 4, 3, schema());
        let (out, report) = rotate_normalize(&seq).unwrap();
        assert!(report.degenerate);
        assert_eq!(out, seq);

        let mut absent = aligned_pose(2);
        let rs = absent.schema().index_of(schema::RIGHT_SHOULDER).unwrap();
        absent.set_present(0, rs, false);
        let (_, report) = rotate_normalize(&absent).unwrap();
        assert!(report.degenerate);
    }

    #[test]
    fn rotate_keeps_padded_joints_zero() {
        let mut seq = rotate_z(&aligned_pose(3), 0.8);
        seq.set_present(0, 7, false);
        for f in 0..seq.frames() {
            for d in 0..3 {
                seq.set(0, f, 7, d, 0.0);
            }
        }
        let (out, _) = rotate_normalize(&seq).unwrap();
        for f in 0..out.frames() {
            for d in 0..3 {
                assert_eq!(out.get(0, f, 7, d), 0.0);
            }
        }
    }

    #[test]
    fn rotate_rejects_2d() {
        let seq = SkeletonSequence::zeros(1, 2, 2, schema());
        assert!(rotate_normalize(&seq).is_err());
    }

    #[test]
    fn resample_identity() {
        let seq = aligned_pose(32);
        let out = resample_frames(&seq, 32).unwrap();
        assert_eq!(out, seq);
    }

    #[test]
    fn resample_downsamples_by_stride() {
        // Frames A,B,C,D marked by unique coordinates; 4 -> 2 keeps (A, C).
        let mut seq = SkeletonSequence::zeros(1, 4, 3, schema());
        for f in 0..4 {
            seq.set(0, f, 0, 0, f as f64);
        }
        let out = resample_frames(&seq, 2).unwrap();
        assert_eq!(out.frames(), 2);
        assert_eq!(out.get(0, 0, 0, 0), 0.0);
        assert_eq!(out.get(0, 1, 0, 0), 2.0);
    }

    #[test]
    fn resample_upsamples_by_repeat() {
        let mut seq = SkeletonSequence::zeros(1, 2, 3, schema());
        seq.set(0, 0, 0, 0, 10.0);
        seq.set(0, 1, 0, 0, 20.0);
        let out = resample_frames(&seq, 4).unwrap();
        let got: Vec<f64> = (0..4).map(|f| out.get(0, f, 0, 0)).collect();
        assert_eq!(got, vec![10.0, 10.0, 20.0, 20.0]);
    }

    #[test]
    fn resample_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let frames = rng.gen_range(1..40);
            let target = rng.gen_range(1..40);
            let mut seq = SkeletonSequence::zeros(1, frames, 3, schema());
            for f in 0..frames {
                seq.set(0, f, 0, 0, rng.gen());
            }
            let once = resample_frames(&seq, target).unwrap();
            let twice = resample_frames(&once, target).unwrap();
            assert_eq!(once, twice);
        }
    }

    #[test]
    fn select_identity_subset() {
        let seq = aligned_pose(3);
        let names: Vec<&str> = (0..25).map(|i| seq.schema().name(i)).collect();
        let names: Vec<&str> = names.clone();
        let out = select_joints(&seq, &names).unwrap();
        assert_eq!(out, seq);
    }

    #[test]
    fn select_paper_subsets() {
        let seq = aligned_pose(3);
        let out = select_joints(&seq, &schema::subset_nj22()).unwrap();
        assert_eq!(out.joints(), 22);
        let out = select_joints(&seq, &schema::subset_nj12()).unwrap();
        assert_eq!(out.joints(), 12);
        for part in BodyPart::ALL {
            assert!(!out.schema().part_indices(part).is_empty());
        }
        // Coordinates copied unchanged.
        let old = seq.schema().index_of("left_shoulder").unwrap();
        let new = out.schema().index_of("left_shoulder").unwrap();
        assert_eq!(seq.get(0, 1, old, 2), out.get(0, 1, new, 2));
    }

    #[test]
    fn select_unknown_rejected() {
        let seq = aligned_pose(1);
        assert!(select_joints(&seq, &["left_shoulder", "antenna"]).is_err());
    }

    #[test]
    fn noise_sigma_zero_is_identity() {
        let seq = aligned_pose(6);
        let out = add_gaussian_noise(&seq, 0.0, 42).unwrap();
        assert!(out.max_abs_diff(&seq) < 1e-9);
    }

    #[test]
    fn noise_is_deterministic() {
        let seq = aligned_pose(6);
        let a = add_gaussian_noise(&seq, 0.01, 7).unwrap();
        let b = add_gaussian_noise(&seq, 0.01, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noise_keeps_padded_joints_zero() {
        let mut seq = aligned_pose(6);
        seq.set_present(0, 3, false);
        for f in 0..seq.frames() {
            for d in 0..3 {
                seq.set(0, f, 3, d, 0.0);
            }
        }
        let out = add_gaussian_noise(&seq, 0.1, 9).unwrap();
        for f in 0..out.frames() {
            for d in 0..3 {
                assert_eq!(out.get(0, f, 3, d), 0.0);
            }
        }
    }

    #[test]
    fn noise_zero_range_axis_passes_through() {
        let mut seq = SkeletonSequence::zeros(1, 4, 3, schema());
        // x varies, y is constant, z varies.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for f in 0..4 {
            for j in 0..25 {
                seq.set(0, f, j, 0, rng.gen());
                seq.set(0, f, j, 1, 0.25);
                seq.set(0, f, j, 2, rng.gen());
            }
        }
        let out = add_gaussian_noise(&seq, 0.5, 1).unwrap();
        for f in 0..4 {
            for j in 0..25 {
                assert_eq!(out.get(0, f, j, 1), 0.25);
            }
        }
    }

    #[test]
    fn noise_std_matches_sigma() {
        // Unit-box clip with >= 1e4 present coordinate entries; perturbation
        // std per axis should be close to sigma * half-range.
        let schema = schema();
        let frames = 140;
        let mut seq = SkeletonSequence::zeros(1, frames, 3, Arc::clone(&schema));
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for f in 0..frames {
            for j in 0..25 {
                for d in 0..3 {
                    seq.set(0, f, j, d, rng.gen::<f64>());
                }
            }
        }
        // Pin the exact range to [0, 1] on every axis.
        for d in 0..3 {
            seq.set(0, 0, 0, d, 0.0);
            seq.set(0, 0, 1, d, 1.0);
        }
        let sigma = 0.1;
        let out = add_gaussian_noise(&seq, sigma, 23).unwrap();
        let n = frames * 25;
        for d in 0..3 {
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for f in 0..frames {
                for j in 0..25 {
                    let delta = out.get(0, f, j, d) - seq.get(0, f, j, d);
                    sum += delta;
                    sumsq += delta * delta;
                }
            }
            let mean = sum / n as f64;
            let std = (sumsq / n as f64 - mean * mean).sqrt();
            let expected = sigma * 0.5;
            assert!(
                (std - expected).abs() < 0.2 * expected,
                "axis {d}: std {std} vs expected {expected}"
            );
        }
    }
}
