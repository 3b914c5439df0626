//! Robot model files and the built-in models.
//!
//! # File format
//!
//! UTF-8 text, one directive per line, whitespace-separated tokens, `#`
//! starts a comment. Floats are written with 17 significant digits so a
//! serialize/parse round trip is bit-exact.
//!
//! ```text
//! name <identifier>
//! joints <n>
//! joint <index> <name> <revolute|prismatic> <wx> <wy> <wz> <vx> <vy> <vz>
//! home_rotation <r11> <r12> <r13> <r21> <r22> <r23> <r31> <r32> <r33>
//! home_translation <x> <y> <z>
//! task <row indices, 0-based, ascending, into the 6 twist components>
//! singularity <name>
//! q <n numbers>               # the singular configuration
//! s <n numbers>               # one line per singular-motion basis column
//! component <name>            # optional tangent-cone component spaces
//! k <n numbers>               # one line per component basis vector
//! end                         # closes the singularity block
//! ```
//!
//! Joint screws are given in the reference configuration (`q = 0`), base
//! frame, ordered (angular; linear). `joint` indices are 1-based and must
//! appear in order. Twist components are indexed 0..5 with the angular part
//! first, so a position-only task reads `task 3 4 5`.

use crate::kinematics::{JointConfig, KinematicsError, RobotModel, DEFAULT_RANK_TOL};
use crate::liegroup::{Pose, Twist};
use crate::tangent::{verify_singular_direction, SingularBasis, TangentError};
use crate::{fmt_f64, real, Real};
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use num_traits::ToPrimitive;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("model is incomplete: missing {0}")]
    Missing(&'static str),
    #[error("model validation failed: {0}")]
    Kinematics(#[from] KinematicsError),
    #[error("singular basis validation failed: {0}")]
    Tangent(#[from] TangentError),
}

/// A robot model together with its catalogued singular-motion bases.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedModel<T: Real> {
    pub model: RobotModel<T>,
    pub singular_bases: Vec<SingularBasis<T>>,
}

impl<T: Real> LoadedModel<T> {
    /// Looks up a catalogued singularity by name.
    pub fn singular_basis(&self, name: &str) -> Option<&SingularBasis<T>> {
        self.singular_bases.iter().find(|b| b.name() == name)
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> ModelFileError {
    ModelFileError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_floats<T: Real>(
    tokens: &[&str],
    expected: usize,
    line: usize,
) -> Result<Vec<T>, ModelFileError> {
    if tokens.len() != expected {
        return Err(parse_err(
            line,
            format!("expected {expected} numbers, found {}", tokens.len()),
        ));
    }
    tokens
        .iter()
        .map(|t| {
            t.parse::<f64>()
                .map(real::<T>)
                .map_err(|_| parse_err(line, format!("invalid number `{t}`")))
        })
        .collect()
}

struct SingularityBlock<T: Real> {
    name: String,
    q: Option<DVector<T>>,
    basis_columns: Vec<DVector<T>>,
    components: Vec<(String, Vec<DVector<T>>)>,
}

/// Parses a robot model file.
pub fn parse_model<T: Real>(text: &str) -> Result<LoadedModel<T>, ModelFileError> {
    let mut name: Option<String> = None;
    let mut joints: Option<usize> = None;
    let mut screws: Vec<Twist<T>> = Vec::new();
    let mut joint_names: Vec<String> = Vec::new();
    let mut home_rotation: Option<Matrix3<T>> = None;
    let mut home_translation: Option<Vector3<T>> = None;
    let mut task: Option<Vec<usize>> = None;
    let mut blocks: Vec<SingularityBlock<T>> = Vec::new();
    let mut open_block: Option<SingularityBlock<T>> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        let tokens: Vec<&str> = content.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        let (head, rest) = (tokens[0], &tokens[1..]);
        match head {
            "name" => {
                let [n] = rest else {
                    return Err(parse_err(line, "name takes exactly one token"));
                };
                name = Some((*n).to_string());
            }
            "joints" => {
                let [n] = rest else {
                    return Err(parse_err(line, "joints takes exactly one count"));
                };
                joints = Some(
                    n.parse()
                        .map_err(|_| parse_err(line, format!("invalid joint count `{n}`")))?,
                );
            }
            "joint" => {
                if rest.len() != 9 {
                    return Err(parse_err(
                        line,
                        "joint takes: index, name, kind, and 6 screw numbers",
                    ));
                }
                let index: usize = rest[0]
                    .parse()
                    .map_err(|_| parse_err(line, format!("invalid joint index `{}`", rest[0])))?;
                if index != screws.len() + 1 {
                    return Err(parse_err(
                        line,
                        format!(
                            "joint index {index} out of order, expected {}",
                            screws.len() + 1
                        ),
                    ));
                }
                let kind = rest[2];
                let nums = parse_floats::<T>(&rest[3..], 6, line)?;
                let angular = Vector3::new(nums[0], nums[1], nums[2]);
                let linear = Vector3::new(nums[3], nums[4], nums[5]);
                let is_revolute = angular.norm() > real(0.5);
                match (kind, is_revolute) {
                    ("revolute", true) | ("prismatic", false) => {}
                    ("revolute", false) | ("prismatic", true) => {
                        return Err(parse_err(
                            line,
                            format!("joint kind `{kind}` does not match its screw"),
                        ))
                    }
                    _ => {
                        return Err(parse_err(
                            line,
                            format!("unknown joint kind `{kind}` (revolute or prismatic)"),
                        ))
                    }
                }
                joint_names.push(rest[1].to_string());
                screws.push(Twist::new(angular, linear));
            }
            "home_rotation" => {
                let nums = parse_floats::<T>(rest, 9, line)?;
                home_rotation = Some(Matrix3::from_row_slice(&nums));
            }
            "home_translation" => {
                let nums = parse_floats::<T>(rest, 3, line)?;
                home_translation = Some(Vector3::new(nums[0], nums[1], nums[2]));
            }
            "task" => {
                let indices = rest
                    .iter()
                    .map(|t| {
                        t.parse::<usize>()
                            .map_err(|_| parse_err(line, format!("invalid task index `{t}`")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                task = Some(indices);
            }
            "singularity" => {
                if open_block.is_some() {
                    return Err(parse_err(line, "previous singularity block not closed"));
                }
                let [n] = rest else {
                    return Err(parse_err(line, "singularity takes exactly one name"));
                };
                open_block = Some(SingularityBlock {
                    name: (*n).to_string(),
                    q: None,
                    basis_columns: Vec::new(),
                    components: Vec::new(),
                });
            }
            "q" | "s" | "k" | "component" | "end" => {
                let block = open_block.as_mut().ok_or_else(|| {
                    parse_err(line, format!("`{head}` outside a singularity block"))
                })?;
                let n = joints.ok_or_else(|| parse_err(line, "`joints` must come first"))?;
                match head {
                    "q" => {
                        let nums = parse_floats::<T>(rest, n, line)?;
                        block.q = Some(DVector::from_vec(nums));
                    }
                    "s" => {
                        let nums = parse_floats::<T>(rest, n, line)?;
                        block.basis_columns.push(DVector::from_vec(nums));
                    }
                    "component" => {
                        let [cn] = rest else {
                            return Err(parse_err(line, "component takes exactly one name"));
                        };
                        block.components.push(((*cn).to_string(), Vec::new()));
                    }
                    "k" => {
                        let nums = parse_floats::<T>(rest, n, line)?;
                        let (_, vectors) = block
                            .components
                            .last_mut()
                            .ok_or_else(|| parse_err(line, "`k` before any `component`"))?;
                        vectors.push(DVector::from_vec(nums));
                    }
                    "end" => {
                        let finished = open_block.take().expect("checked above");
                        blocks.push(finished);
                    }
                    _ => unreachable!(),
                }
            }
            other => return Err(parse_err(line, format!("unknown directive `{other}`"))),
        }
    }
    if open_block.is_some() {
        return Err(ModelFileError::Missing(
            "`end` of the last singularity block",
        ));
    }

    let name = name.ok_or(ModelFileError::Missing("`name`"))?;
    let n = joints.ok_or(ModelFileError::Missing("`joints`"))?;
    if screws.len() != n {
        return Err(ModelFileError::Missing("one `joint` line per joint"));
    }
    let rotation = home_rotation.ok_or(ModelFileError::Missing("`home_rotation`"))?;
    let translation = home_translation.ok_or(ModelFileError::Missing("`home_translation`"))?;
    let task = task.ok_or(ModelFileError::Missing("`task`"))?;
    let home =
        Pose::new(rotation, translation).map_err(|e| parse_err(0, format!("home pose: {e}")))?;
    let model = RobotModel::new(name, screws, home, task, joint_names)?;

    let mut singular_bases = Vec::with_capacity(blocks.len());
    for block in blocks {
        let q = block
            .q
            .ok_or(ModelFileError::Missing("`q` inside a singularity block"))?;
        let basis = columns_to_matrix(n, &block.basis_columns);
        let components = block
            .components
            .iter()
            .map(|(_, vs)| columns_to_matrix(n, vs))
            .collect();
        singular_bases.push(SingularBasis::new(
            block.name,
            JointConfig::new(q),
            basis,
            components,
        )?);
    }
    Ok(LoadedModel {
        model,
        singular_bases,
    })
}

fn columns_to_matrix<T: Real>(n: usize, cols: &[DVector<T>]) -> DMatrix<T> {
    let mut m = DMatrix::zeros(n, cols.len());
    for (i, c) in cols.iter().enumerate() {
        m.column_mut(i).copy_from(c);
    }
    m
}

/// Serializes a loaded model to the file format.
pub fn write_model<T: Real>(loaded: &LoadedModel<T>) -> String {
    let to64 = |x: T| ToPrimitive::to_f64(&x).expect("scalar convertible to f64");
    let model = &loaded.model;
    let mut out = String::new();
    out.push_str(&format!("name {}\n", model.name()));
    out.push_str(&format!("joints {}\n", model.dof()));
    for (i, (screw, jn)) in model
        .joint_screws_ref()
        .iter()
        .zip(model.joint_names())
        .enumerate()
    {
        let kind = if screw.angular().norm() > real(0.5) {
            "revolute"
        } else {
            "prismatic"
        };
        let v = screw.as_vector();
        out.push_str(&format!(
            "joint {} {} {} {}\n",
            i + 1,
            jn,
            kind,
            v.iter()
                .map(|x| fmt_f64(to64(*x)))
                .collect::<Vec<_>>()
                .join(" ")
        ));
    }
    let r = loaded.model.home_pose().rotation();
    let rot_tokens: Vec<String> = (0..3)
        .flat_map(|i| (0..3).map(move |j| (i, j)))
        .map(|(i, j)| fmt_f64(to64(r[(i, j)])))
        .collect();
    out.push_str(&format!("home_rotation {}\n", rot_tokens.join(" ")));
    let t = loaded.model.home_pose().translation();
    out.push_str(&format!(
        "home_translation {} {} {}\n",
        fmt_f64(to64(t.x)),
        fmt_f64(to64(t.y)),
        fmt_f64(to64(t.z))
    ));
    out.push_str(&format!(
        "task {}\n",
        model
            .task_selector()
            .iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    ));
    for basis in &loaded.singular_bases {
        out.push_str(&format!("singularity {}\n", basis.name()));
        out.push_str(&format!(
            "q {}\n",
            basis
                .config()
                .as_vector()
                .iter()
                .map(|x| fmt_f64(to64(*x)))
                .collect::<Vec<_>>()
                .join(" ")
        ));
        for col in basis.basis().column_iter() {
            out.push_str(&format!(
                "s {}\n",
                col.iter()
                    .map(|x| fmt_f64(to64(*x)))
                    .collect::<Vec<_>>()
                    .join(" ")
            ));
        }
        for (ci, comp) in basis.component_spaces().iter().enumerate() {
            out.push_str(&format!("component k{}\n", ci + 1));
            for col in comp.column_iter() {
                out.push_str(&format!(
                    "k {}\n",
                    col.iter()
                        .map(|x| fmt_f64(to64(*x)))
                        .collect::<Vec<_>>()
                        .join(" ")
                ));
            }
        }
        out.push_str("end\n");
    }
    out
}

/// One line of a model verification report.
#[derive(Debug, Clone)]
pub struct VerifyCheck {
    pub description: String,
    pub passed: bool,
}

/// Verifies every catalogued singular basis of a loaded model numerically:
/// the configuration must be rank-deficient, rays along the basis columns
/// (and along the component basis vectors) must stay rank-deficient over
/// the given step lengths.
///
/// Orthonormality, component membership, and the intersection dimension are
/// already enforced when a [`SingularBasis`] is constructed; this adds the
/// finite-motion checks. The built-in models carry component spaces that
/// are flat subsets of the singular set, so the ray checks apply to them
/// verbatim.
pub fn verify_model<T: Real>(loaded: &LoadedModel<T>, steps: &[T]) -> Vec<VerifyCheck> {
    let mut checks = Vec::new();
    let model = &loaded.model;
    let tol = real::<T>(DEFAULT_RANK_TOL);
    for basis in &loaded.singular_bases {
        let q0 = basis.config();
        let rank = crate::kinematics::rank_at(model, q0, tol).unwrap_or(usize::MAX);
        checks.push(VerifyCheck {
            description: format!(
                "singularity `{}`: rank {} < task dimension {}",
                basis.name(),
                rank,
                model.task_dim()
            ),
            passed: rank < model.task_dim(),
        });
        for (j, col) in basis.basis().column_iter().enumerate() {
            let dir = col.into_owned();
            let ok = ray_stays_singular(model, q0, &dir, steps, tol);
            checks.push(VerifyCheck {
                description: format!(
                    "singularity `{}`: motions along basis column {} stay singular",
                    basis.name(),
                    j + 1
                ),
                passed: ok,
            });
        }
        for (ci, comp) in basis.component_spaces().iter().enumerate() {
            for (j, col) in comp.column_iter().enumerate() {
                let dir = col.into_owned();
                let ok = ray_stays_singular(model, q0, &dir, steps, tol);
                checks.push(VerifyCheck {
                    description: format!(
                        "singularity `{}`: component {} vector {} stays singular",
                        basis.name(),
                        ci + 1,
                        j + 1
                    ),
                    passed: ok,
                });
            }
        }
    }
    checks
}

fn ray_stays_singular<T: Real>(
    model: &RobotModel<T>,
    q0: &JointConfig<T>,
    dir: &DVector<T>,
    steps: &[T],
    tol: T,
) -> bool {
    if dir.norm() == T::zero() {
        return false;
    }
    let neg = -dir.clone();
    verify_singular_direction(model, q0, dir, steps, tol).unwrap_or(false)
        && verify_singular_direction(model, q0, &neg, steps, tol).unwrap_or(false)
}

/// Built-in robot models.
pub mod builtin {
    use super::*;

    /// Shoulder-to-elbow length of the 7R arm (m).
    pub const IIWA_SHOULDER_TO_ELBOW: f64 = 0.42;
    /// Elbow-to-wrist length (m).
    pub const IIWA_ELBOW_TO_WRIST: f64 = 0.40;
    /// Wrist-to-flange length (m).
    pub const IIWA_WRIST_TO_FLANGE: f64 = 0.126;
    /// Base-to-shoulder height (m).
    pub const IIWA_BASE_TO_SHOULDER: f64 = 0.36;

    /// Link lengths of the 3R regional arm (m).
    pub const PLANAR3R_L1: f64 = 1.0;
    pub const PLANAR3R_L2: f64 = 1.0;
    pub const PLANAR3R_L3: f64 = 1.0;

    fn revolute<T: Real>(axis: [f64; 3], point: [f64; 3]) -> Twist<T> {
        let w = Vector3::new(real(axis[0]), real(axis[1]), real(axis[2]));
        let p = Vector3::new(real(point[0]), real(point[1]), real(point[2]));
        Twist::new(w, p.cross(&w))
    }

    fn unit_columns<T: Real>(n: usize, indices: &[usize]) -> DMatrix<T> {
        let mut m = DMatrix::zeros(n, indices.len());
        for (c, &i) in indices.iter().enumerate() {
            m[(i, c)] = T::one();
        }
        m
    }

    /// 7R arm in its straight-up reference configuration.
    ///
    /// Joint axes alternate z, y, z, y, z, y, z in the base frame; the
    /// end-effector frame is rotated 90° about the base z-axis so that in
    /// the reference configuration the y-axis joints read as x-axis screws
    /// in the end-effector frame. The reference configuration is singular:
    /// the catalogued basis spans the motions of joints 1, 3, 5, 7, which
    /// keep the arm stretched. The two component spaces are the joint
    /// directions with joint 4 locked, and with joints 2 and 6 locked.
    pub fn iiwa14<T: Real>() -> LoadedModel<T> {
        let h = IIWA_BASE_TO_SHOULDER;
        let a = IIWA_SHOULDER_TO_ELBOW;
        let b = IIWA_ELBOW_TO_WRIST;
        let c = IIWA_WRIST_TO_FLANGE;
        let screws = vec![
            revolute([0.0, 0.0, 1.0], [0.0, 0.0, 0.0]),
            revolute([0.0, 1.0, 0.0], [0.0, 0.0, h]),
            revolute([0.0, 0.0, 1.0], [0.0, 0.0, 0.0]),
            revolute([0.0, 1.0, 0.0], [0.0, 0.0, h + a]),
            revolute([0.0, 0.0, 1.0], [0.0, 0.0, 0.0]),
            revolute([0.0, 1.0, 0.0], [0.0, 0.0, h + a + b]),
            revolute([0.0, 0.0, 1.0], [0.0, 0.0, 0.0]),
        ];
        // EE x-axis along base y, EE z along base z
        let rotation = Matrix3::new(
            T::zero(),
            -T::one(),
            T::zero(),
            T::one(),
            T::zero(),
            T::zero(),
            T::zero(),
            T::zero(),
            T::one(),
        );
        let translation = Vector3::new(T::zero(), T::zero(), real(h + a + b + c));
        let model = RobotModel::new(
            "iiwa14",
            screws,
            Pose::from_parts_unchecked(rotation, translation),
            vec![0, 1, 2, 3, 4, 5],
            (1..=7).map(|i| format!("A{i}")).collect(),
        )
        .expect("built-in model is valid");
        let basis = SingularBasis::new(
            "stretch",
            JointConfig::zeros(7),
            unit_columns(7, &[0, 2, 4, 6]),
            vec![
                unit_columns(7, &[0, 1, 2, 4, 5, 6]), // joint 4 locked
                unit_columns(7, &[0, 2, 3, 4, 6]),    // joints 2 and 6 locked
            ],
        )
        .expect("built-in basis is valid");
        LoadedModel {
            model,
            singular_bases: vec![basis],
        }
    }

    /// 3R regional arm: vertical base joint, two parallel horizontal
    /// joints, position-only task.
    ///
    /// The reference configuration is the stretched-up pose with the
    /// end-effector on the base axis, where the arm loses both the radial
    /// and the vertical motion directions. Component spaces: elbow locked
    /// (`x₃ = 0`) and end-effector staying on the base axis
    /// (`(L₂+L₃)x₂ + L₃x₃ = 0`); their intersection is the base-joint
    /// direction.
    pub fn planar3r<T: Real>() -> LoadedModel<T> {
        let (l1, l2, l3) = (PLANAR3R_L1, PLANAR3R_L2, PLANAR3R_L3);
        let screws = vec![
            revolute([0.0, 0.0, 1.0], [0.0, 0.0, 0.0]),
            revolute([0.0, 1.0, 0.0], [0.0, 0.0, l1]),
            revolute([0.0, 1.0, 0.0], [0.0, 0.0, l1 + l2]),
        ];
        let model = RobotModel::new(
            "planar3r",
            screws,
            Pose::from_parts_unchecked(
                Matrix3::identity(),
                Vector3::new(T::zero(), T::zero(), real(l1 + l2 + l3)),
            ),
            vec![3, 4, 5],
            (1..=3).map(|i| format!("q{i}")).collect(),
        )
        .expect("built-in model is valid");

        let mut on_axis = DMatrix::zeros(3, 2);
        on_axis[(0, 0)] = T::one();
        let scale = T::one() / real::<T>((l3 * l3 + (l2 + l3) * (l2 + l3)).sqrt());
        on_axis[(1, 1)] = real::<T>(l3) * scale;
        on_axis[(2, 1)] = real::<T>(-(l2 + l3)) * scale;
        let basis = SingularBasis::new(
            "stretch",
            JointConfig::zeros(3),
            unit_columns(3, &[0]),
            vec![unit_columns(3, &[0, 1]), on_axis],
        )
        .expect("built-in basis is valid");
        LoadedModel {
            model,
            singular_bases: vec![basis],
        }
    }

    /// Built-in model by name.
    pub fn by_name<T: Real>(name: &str) -> Option<LoadedModel<T>> {
        match name {
            "iiwa14" => Some(iiwa14()),
            "planar3r" => Some(planar3r()),
            _ => None,
        }
    }

    /// Names of all built-in models.
    pub fn names() -> &'static [&'static str] {
        &["planar3r", "iiwa14"]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_models_round_trip_through_the_file_format() {
        for name in builtin::names() {
            let loaded = builtin::by_name::<f64>(name).unwrap();
            let text = write_model(&loaded);
            let reparsed = parse_model::<f64>(&text).unwrap();
            assert_eq!(loaded.model, reparsed.model, "{name}");
            assert_eq!(loaded.singular_bases.len(), reparsed.singular_bases.len());
            for (a, b) in loaded
                .singular_bases
                .iter()
                .zip(reparsed.singular_bases.iter())
            {
                assert_eq!(a.config(), b.config());
                assert_eq!(a.basis(), b.basis());
                assert_eq!(a.component_spaces(), b.component_spaces());
            }
        }
    }

    #[test]
    fn builtin_models_pass_verification() {
        for name in builtin::names() {
            let loaded = builtin::by_name::<f64>(name).unwrap();
            for check in verify_model(&loaded, &[0.05, 0.1, 0.2]) {
                assert!(check.passed, "{name}: {}", check.description);
            }
        }
    }

    #[test]
    fn parse_reports_line_numbers() {
        let text = "name m\njoints 1\njoint 1 j1 revolute 0 0 1 0 0 zero\n";
        let err = parse_model::<f64>(text).unwrap_err();
        match err {
            ModelFileError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_rejects_mislabelled_joint_kind() {
        let text = "name m\njoints 1\njoint 1 j1 prismatic 0 0 1 0 0 0\n";
        assert!(parse_model::<f64>(text).is_err());
    }

    #[test]
    fn parse_rejects_unclosed_singularity_block() {
        let loaded = builtin::planar3r::<f64>();
        let mut text = write_model(&loaded);
        text = text.replace("end\n", "");
        assert!(parse_model::<f64>(&text).is_err());
    }

    #[test]
    fn parse_rejects_unknown_directive() {
        assert!(parse_model::<f64>("name m\nflux 3\n").is_err());
    }

    #[test]
    fn missing_sections_are_reported() {
        assert!(matches!(
            parse_model::<f64>("name m\n"),
            Err(ModelFileError::Missing(_))
        ));
    }

    #[test]
    fn singularity_blocks_are_optional() {
        let text = "name m\njoints 1\njoint 1 j1 revolute 0 0 1 0 0 0\n\
                    home_rotation 1 0 0 0 1 0 0 0 1\nhome_translation 0 0 1\ntask 0 1 2 3 4 5\n";
        let loaded = parse_model::<f64>(text).unwrap();
        assert!(loaded.singular_bases.is_empty());
        assert_eq!(loaded.model.dof(), 1);
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let loaded = builtin::planar3r::<f64>();
        let text = format!("# header\n\n{}# trailer\n", write_model(&loaded));
        assert!(parse_model::<f64>(&text).is_ok());
    }
}
