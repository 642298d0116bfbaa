//! Built-in verification suite: finite-difference gradient checks for every
//! layer plus the end-to-end tiny backbone, and the permutation-algebra
//! property suite over every transform family.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{check_gradients, he_normal, uniform_init, Graph, ParamStore, Tensor};
use crate::backbone::{self, BackboneConfig, BatchInput, PersonInput};
use crate::cubism::{self, PermutationSpec, TransformKind};
use crate::error::Result;
use crate::skeleton::{JointSchema, SkeletonSequence};

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        CheckResult {
            name: name.to_string(),
            pass,
            detail,
        }
    }
}

pub const GRAD_EPS: f64 = 1e-4;
pub const GRAD_TOL: f64 = 1e-3;

fn random_tensor(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = rng.gen_range(lo..hi);
    }
    t
}

fn grad_result(name: &str, report: crate::autodiff::GradCheckReport) -> CheckResult {
    CheckResult::new(
        name,
        report.pass,
        format!(
            "max rel err {:.3e} over {} probes ({} kink-straddling skipped)",
            report.max_rel_err, report.probes, report.skipped
        ),
    )
}

/// Finite-difference checks for each differentiable layer.
pub fn gradient_checks() -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();

    // conv2d with bias.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let mut store = ParamStore::new();
        store.register("w", he_normal(&[3, 2, 3, 3], 18, &mut rng))?;
        store.register("b", uniform_init(&[3], 0.2, &mut rng))?;
        let x = random_tensor(&[2, 2, 5, 4], -1.0, 1.0, &mut rng);
        let report = check_gradients(&mut store, GRAD_EPS, GRAD_TOL, |s| {
            let mut g = Graph::new();
            let xi = g.input(x.clone());
            let w = g.param(s, "w")?;
            let b = g.param(s, "b")?;
            let c = g.conv2d(xi, w, Some(b), 1, 1)?;
            let flat = g.reshape(c, &[2, 3 * 5 * 4])?;
            let (loss, _) = g.softmax_cross_entropy(flat, &[5, 17], &[true, true])?;
            Ok((g, loss))
        })?;
        out.push(grad_result("grad conv2d", report));
    }

    // dense with bias.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(102);
        let mut store = ParamStore::new();
        store.register("w", he_normal(&[6, 4], 6, &mut rng))?;
        store.register("b", uniform_init(&[4], 0.2, &mut rng))?;
        let x = random_tensor(&[3, 6], -1.0, 1.0, &mut rng);
        let report = check_gradients(&mut store, GRAD_EPS, GRAD_TOL, |s| {
            let mut g = Graph::new();
            let xi = g.input(x.clone());
            let w = g.param(s, "w")?;
            let b = g.param(s, "b")?;
            let d = g.dense(xi, w, Some(b))?;
            let (loss, _) = g.softmax_cross_entropy(d, &[0, 3, 1], &[true; 3])?;
            Ok((g, loss))
        })?;
        out.push(grad_result("grad dense", report));
    }

    // prelu over mixed-sign input (both input and slope gradients).
    {
        let mut rng = ChaCha8Rng::seed_from_u64(103);
        let mut store = ParamStore::new();
        store.register("pre", he_normal(&[4, 4], 4, &mut rng))?;
        store.register("a", Tensor::filled(&[4], 0.25))?;
        let x = random_tensor(&[2, 4], -1.0, 1.0, &mut rng);
        let report = check_gradients(&mut store, GRAD_EPS, GRAD_TOL, |s| {
            let mut g = Graph::new();
            let xi = g.input(x.clone());
            let w = g.param(s, "pre")?;
            let a = g.param(s, "a")?;
            let lin = g.dense(xi, w, None)?;
            let act = g.prelu(lin, a)?;
            let (loss, _) = g.softmax_cross_entropy(act, &[2, 0], &[true, true])?;
            Ok((g, loss))
        })?;
        out.push(grad_result("grad prelu", report));
    }

    // maxpool at (almost surely) unique maxima.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(104);
        let mut store = ParamStore::new();
        store.register("w", he_normal(&[2, 1, 3, 3], 9, &mut rng))?;
        let x = random_tensor(&[2, 1, 6, 6], -1.0, 1.0, &mut rng);
        let report = check_gradients(&mut store, GRAD_EPS, GRAD_TOL, |s| {
            let mut g = Graph::new();
            let xi = g.input(x.clone());
            let w = g.param(s, "w")?;
            let c = g.conv2d(xi, w, None, 1, 1)?;
            let p = g.maxpool2d(c, (2, 2), (2, 2))?;
            let flat = g.reshape(p, &[2, 2 * 3 * 3])?;
            let (loss, _) = g.softmax_cross_entropy(flat, &[4, 9], &[true, true])?;
            Ok((g, loss))
        })?;
        out.push(grad_result("grad maxpool2d", report));
    }

    // softmax cross-entropy on raw parameters.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(105);
        let mut store = ParamStore::new();
        store.register("z", random_tensor(&[4, 6], -1.5, 1.5, &mut rng))?;
        let report = check_gradients(&mut store, GRAD_EPS, GRAD_TOL, |s| {
            let mut g = Graph::new();
            let z = g.param(s, "z")?;
            let (loss, _) =
                g.softmax_cross_entropy(z, &[1, 5, 0, 3], &[true, true, false, true])?;
            Ok((g, loss))
        })?;
        out.push(grad_result("grad softmax_cross_entropy", report));
    }

    // End-to-end tiny backbone, two persons, both heads.
    {
        let cfg = BackboneConfig {
            frames: 8,
            joints: 6,
            coord_dim: 2,
            conv1_width: 4,
            conv2_width: 4,
            conv3_width: 4,
            feature_dim: 8,
            num_action_classes: 3,
            num_perm_classes: 6,
            dropout: 0.0,
        };
        let mut store = backbone::init_params(&cfg, 106)?;
        let mut rng = ChaCha8Rng::seed_from_u64(107);
        let persons = (0..2)
            .map(|_| PersonInput {
                position: random_tensor(&[2, 2, 8, 6], -1.0, 1.0, &mut rng),
                motion: random_tensor(&[2, 2, 8, 6], -0.2, 0.2, &mut rng),
            })
            .collect();
        let input = BatchInput { persons, batch: 2 };
        let report = check_gradients(&mut store, GRAD_EPS, GRAD_TOL, |s| {
            let mut g = Graph::new();
            let nodes = backbone::forward(&mut g, s, &input, &cfg, None)?;
            let (jc, _) = g.softmax_cross_entropy(nodes.action_logits, &[1, 2], &[true, true])?;
            let (ja, _) = g.softmax_cross_entropy(nodes.perm_logits, &[0, 4], &[true, true])?;
            let ja_s = g.scale(ja, 0.1)?;
            let total = g.add(jc, ja_s)?;
            Ok((g, total))
        })?;
        out.push(grad_result("grad backbone end-to-end", report));
    }

    Ok(out)
}

fn tagged_clip(frames: usize) -> SkeletonSequence {
    let schema = std::sync::Arc::new(JointSchema::canonical25());
    let mut seq = SkeletonSequence::zeros(1, frames, 3, schema);
    for f in 0..frames {
        for j in 0..25 {
            seq.set(0, f, j, 0, f as f64);
            seq.set(0, f, j, 1, j as f64);
            seq.set(0, f, j, 2, (f * 100 + j) as f64 * 0.01);
        }
    }
    seq
}

/// Bijectivity, inverse-restores-input, identity-label, and
/// temporal/spatial commutation over every transform family.
///
/// Inverse restoration needs uniform blocks: the temporal checks run on 12
/// frames (divisible by N = 3) and the joint-jigsaw check on the 12-joint
/// subset (divisible by its 3 joint segments); the full 25-joint clip
/// is still covered by the bijectivity check.
pub fn permutation_checks() -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    let seq = tagged_clip(12);
    let seq12 = crate::skeleton::select_joints(&seq, &crate::skeleton::schema::subset_nj12())?;

    let families: [(&str, TransformKind, usize); 5] = [
        ("temporal", TransformKind::Temporal, 3),
        ("spatial", TransformKind::Spatial, 0),
        ("tem_flip", TransformKind::TemFlip, 0),
        ("spa_jigsaw", TransformKind::SpaJigsaw, 0),
        ("coupled", TransformKind::Coupled, 3),
    ];

    for (name, kind, segments) in families {
        let invert_on = if kind == TransformKind::SpaJigsaw {
            &seq12
        } else {
            &seq
        };
        let specs = PermutationSpec::all(kind, segments);
        let mut pass = true;
        let mut detail = format!("{} specs", specs.len());
        for spec in &specs {
            let transformed = cubism::apply_transform(&seq, spec)?;
            // Identity label is the identity transform.
            if spec.is_identity() && transformed != seq {
                pass = false;
                detail = format!("label 0 of {name} is not the identity");
                break;
            }
            // Bijectivity: coordinates are a permutation of the input's.
            let mut a: Vec<u64> = seq.data().iter().map(|v| v.to_bits()).collect();
            let mut b: Vec<u64> = transformed.data().iter().map(|v| v.to_bits()).collect();
            a.sort_unstable();
            b.sort_unstable();
            if a != b {
                pass = false;
                detail = format!("{name} label {} is not a bijection", spec.label());
                break;
            }
            // Inverse restores the input bit-exactly (uniform blocks).
            let inv = spec.inverse().expect("permutation families invert");
            let forward = cubism::apply_transform(invert_on, spec)?;
            let restored = cubism::apply_transform(&forward, &inv)?;
            if &restored != invert_on {
                pass = false;
                detail = format!("{name} label {} inverse fails", spec.label());
                break;
            }
        }
        out.push(CheckResult::new(
            &format!("permutation algebra {name}"),
            pass,
            detail,
        ));
    }

    // Temporal and spatial transforms commute.
    let mut commute = true;
    for t in PermutationSpec::all(TransformKind::Temporal, 3) {
        for s in PermutationSpec::all(TransformKind::Spatial, 0) {
            let ts = cubism::spatial_permute(&cubism::temporal_permute(&seq, &t)?, &s)?;
            let st = cubism::temporal_permute(&cubism::spatial_permute(&seq, &s)?, &t)?;
            if ts != st {
                commute = false;
            }
        }
    }
    out.push(CheckResult::new(
        "temporal/spatial commutation",
        commute,
        "18 ordered pairs".into(),
    ));

    // Freeze identity label only (label 1 is deliberately lossy).
    let freeze_id = cubism::alt_transform(&seq, &PermutationSpec::freeze(0)?)?;
    out.push(CheckResult::new(
        "freeze identity label",
        freeze_id == seq,
        "label 0".into(),
    ));

    Ok(out)
}

/// Full self-test: gradient checks plus the permutation property suite.
pub fn run_selftest() -> Result<Vec<CheckResult>> {
    let mut results = permutation_checks()?;
    results.extend(gradient_checks()?);
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selftest_passes() {
        let results = run_selftest().unwrap();
        assert!(!results.is_empty());
        for r in &results {
            assert!(r.pass, "{}: {}", r.name, r.detail);
        }
    }
}
