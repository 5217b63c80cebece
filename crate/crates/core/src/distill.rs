//! Teacher/student distillation stages and the de-biasing pipelines.
//!
//! All three pipelines share the same two building blocks. A teacher is
//! trained with plain softmax cross-entropy on samples from the
//! better-performing attribute category. A student then trains with
//!
//! ```text
//! L_br = L_class + lambda * L_dis,    L_dis = 1 - cos(f_student, f_teacher)
//! ```
//!
//! against a frozen teacher. The pipelines differ only in which data the
//! student sees, how it is initialized, and who teaches the second stage:
//!
//! * two-step (`Method::Dnd`): teacher on the high category, student on the
//!   low category, initialized from the teacher, weight `lambda1`;
//! * two-step with refinement (`Method::DndPlusPlus`): as above, then a
//!   final student on the full dataset taught by the step-two student,
//!   initialized from it, weight `lambda2`;
//! * one-step (`Method::Osd`): teacher on the high category, student on the
//!   full dataset taught by the teacher, initialized from it, weight
//!   `lambda_osd`. Equivalent to the refinement pipeline with a zero-epoch
//!   middle stage.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{
    backward, BatchLossSpec, DistillTarget, EmbeddingNet, NetArch, TrainSpec,
};

/// Which side of a binarized attribute a raw category maps to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    High,
    Low,
}

/// A two-sided attribute over raw categories.
///
/// `high` names the better-performing category (the teacher's training
/// data); `low` names the other side. `mapping` sends every raw category to
/// one side, covering cases like collapsing four ancestry labels into two
/// skintone groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryAttribute {
    pub name: String,
    pub high: String,
    pub low: String,
    mapping: BTreeMap<String, Side>,
}

impl BinaryAttribute {
    pub fn new(
        name: &str,
        high: &str,
        low: &str,
        mapping: BTreeMap<String, Side>,
    ) -> Result<Self> {
        if high == low {
            return Err(Error::Invalid {
                what: "binary attribute",
                reason: format!("high and low are both {high:?}"),
            });
        }
        if mapping.is_empty() {
            return Err(Error::Invalid {
                what: "binary attribute",
                reason: "empty category mapping".into(),
            });
        }
        Ok(BinaryAttribute {
            name: name.to_string(),
            high: high.to_string(),
            low: low.to_string(),
            mapping,
        })
    }

    /// An attribute whose raw categories already are the two sides.
    pub fn identity(name: &str, high: &str, low: &str) -> Result<Self> {
        let mapping = BTreeMap::from([
            (high.to_string(), Side::High),
            (low.to_string(), Side::Low),
        ]);
        BinaryAttribute::new(name, high, low, mapping)
    }

    pub fn side_of(&self, raw: &str) -> Result<Side> {
        self.mapping
            .get(raw)
            .copied()
            .ok_or_else(|| Error::UnmappedCategory {
                category: raw.to_string(),
            })
    }

    pub fn label_for(&self, side: Side) -> &str {
        match side {
            Side::High => &self.high,
            Side::Low => &self.low,
        }
    }

    pub fn mapping(&self) -> &BTreeMap<String, Side> {
        &self.mapping
    }
}

/// Relabels every sample through the attribute's category mapping.
///
/// The output holds exactly the input samples with a two-entry label table
/// `[high, low]`; features and identities are untouched. Any raw category
/// without a mapping fails, naming the category.
pub fn binarize_attribute(ds: &Dataset, attr: &BinaryAttribute) -> Result<Dataset> {
    let labels = vec![attr.high.clone(), attr.low.clone()];
    let samples = ds
        .samples
        .iter()
        .map(|s| {
            let side = attr.side_of(ds.attr_label(s))?;
            let mut out = s.clone();
            out.attribute = match side {
                Side::High => 0,
                Side::Low => 1,
            };
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        samples,
        num_identities: ds.num_identities,
        attribute_labels: labels,
    })
}

/// Orders two measured TPRs into `(a_high, a_low)`.
///
/// The category with the strictly larger TPR becomes `a_high`. Exact ties
/// fall back to lexicographic label order and log a warning, since the
/// designation is then arbitrary.
pub fn assign_high_low(tpr_per_category: &BTreeMap<String, f64>) -> Result<(String, String)> {
    if tpr_per_category.len() != 2 {
        return Err(Error::GroupArity {
            got: tpr_per_category.len(),
        });
    }
    let mut it = tpr_per_category.iter();
    let (label_a, &tpr_a) = it.next().unwrap();
    let (label_b, &tpr_b) = it.next().unwrap();
    if !tpr_a.is_finite() || !tpr_b.is_finite() {
        return Err(Error::NonFinite { what: "TPR" });
    }
    if tpr_a == tpr_b {
        log::warn!(
            "categories {label_a:?} and {label_b:?} have equal TPR {tpr_a}; \
             breaking the tie lexicographically"
        );
        // BTreeMap iterates in sorted order, so label_a is the smaller one.
        return Ok((label_a.clone(), label_b.clone()));
    }
    if tpr_a > tpr_b {
        Ok((label_a.clone(), label_b.clone()))
    } else {
        Ok((label_b.clone(), label_a.clone()))
    }
}

/// Cosine-distance distillation loss `1 - cos(f_s, f_t)`.
///
/// Embeddings whose norm is at or below 1e-12 are degenerate and fail; the
/// value is never clamped.
pub fn distill_loss(f_student: &[f64], f_teacher: &[f64]) -> Result<f64> {
    if f_student.len() != f_teacher.len() {
        return Err(Error::Shape {
            context: "distillation embeddings",
            expected: f_teacher.len(),
            actual: f_student.len(),
        });
    }
    match linalg::cosine_similarity(f_student, f_teacher) {
        Some(cos) => Ok(1.0 - cos),
        None => Err(Error::DegenerateEmbedding {
            norm: linalg::norm(f_student).min(linalg::norm(f_teacher)),
        }),
    }
}

/// Mean losses for one training epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub class: f64,
    pub dis: f64,
}

/// Default distillation weights per debiased attribute, for the margin-loss
/// configuration this artifact mirrors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lambdas {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda_osd: f64,
}

/// Attribute families with tuned default weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttributeKind {
    Gender,
    Skintone,
}

/// Tuned defaults: both families use 1.0 everywhere except one-step
/// distillation on skintone, which uses 0.5.
pub fn default_lambdas(kind: AttributeKind) -> Lambdas {
    match kind {
        AttributeKind::Gender => Lambdas {
            lambda1: 1.0,
            lambda2: 1.0,
            lambda_osd: 1.0,
        },
        AttributeKind::Skintone => Lambdas {
            lambda1: 1.0,
            lambda2: 1.0,
            lambda_osd: 0.5,
        },
    }
}

/// Trains a network on classification alone over `data`.
///
/// `data` must contain only samples of the attribute's high category; any
/// other label is contamination and fails before training starts. The
/// network is initialized from `spec.seed` and sees one fresh index
/// permutation per epoch from the same stream.
pub fn train_teacher(
    data: &Dataset,
    attr: &BinaryAttribute,
    arch: &NetArch,
    spec: &TrainSpec,
) -> Result<(EmbeddingNet, Vec<EpochLoss>)> {
    spec.validate()?;
    check_category_purity(data, attr)?;
    let distinct = data.identities_present().len();
    if distinct < 2 {
        return Err(Error::Invalid {
            what: "teacher data",
            reason: format!("need at least 2 identities, got {distinct}"),
        });
    }
    if arch.num_identities != data.num_identities {
        return Err(Error::ArchMismatch(format!(
            "head has {} identities but the dataset universe has {}",
            arch.num_identities, data.num_identities
        )));
    }
    let net = EmbeddingNet::seeded(arch, spec.seed)?;
    train_loop(net, data, None, spec)
}

fn check_category_purity(data: &Dataset, attr: &BinaryAttribute) -> Result<()> {
    let mut off_category: BTreeMap<&str, usize> = BTreeMap::new();
    for s in &data.samples {
        let label = data.attr_label(s);
        if attr.side_of(label)? != Side::High {
            *off_category.entry(label).or_default() += 1;
        }
    }
    if let Some((found, count)) = off_category.into_iter().next() {
        return Err(Error::Contamination {
            expected: attr.high.clone(),
            found: found.to_string(),
            count,
        });
    }
    if data.is_empty() {
        return Err(Error::MissingCategory {
            category: attr.high.clone(),
        });
    }
    Ok(())
}

/// Trains a student against a frozen teacher.
///
/// The student starts from `init` (taken by value; epoch zero is exactly
/// `init`) and minimizes `L_class + lambda * L_dis` where teacher
/// embeddings are recomputed per batch from the immutable teacher. Teacher
/// and init must share the student architecture.
pub fn train_student(
    teacher: &EmbeddingNet,
    data: &Dataset,
    lambda: f64,
    spec: &TrainSpec,
    init: EmbeddingNet,
) -> Result<(EmbeddingNet, Vec<EpochLoss>)> {
    spec.validate()?;
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::Invalid {
            what: "lambda",
            reason: format!("must be finite and nonnegative, got {lambda}"),
        });
    }
    if !teacher.same_arch(&init) {
        return Err(Error::ArchMismatch(
            "teacher and student init have different layer shapes".into(),
        ));
    }
    if data.is_empty() {
        return Err(Error::Invalid {
            what: "student data",
            reason: "no samples".into(),
        });
    }
    if data.input_dim() != init.input_dim() {
        return Err(Error::Shape {
            context: "student data input dim",
            expected: init.input_dim(),
            actual: data.input_dim(),
        });
    }
    let teacher_ref = if lambda > 0.0 { Some((teacher, lambda)) } else { None };
    train_loop(init, data, teacher_ref, spec)
}

/// Shared SGD loop. Each call reseeds its own ChaCha20 stream from
/// `spec.seed`, so a stage's result depends only on its inputs and the spec,
/// never on how many stages ran before it.
fn train_loop(
    mut net: EmbeddingNet,
    data: &Dataset,
    teacher: Option<(&EmbeddingNet, f64)>,
    spec: &TrainSpec,
) -> Result<(EmbeddingNet, Vec<EpochLoss>)> {
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = Vec::with_capacity(spec.epochs as usize);
    for epoch in 0..spec.epochs {
        let lr = spec.learning_rate(epoch);
        order.shuffle(&mut rng);
        let mut class_sum = 0.0;
        let mut dis_sum = 0.0;
        for batch in order.chunks(spec.batch_size as usize) {
            let inputs: Vec<&[f64]> = batch
                .iter()
                .map(|&i| data.samples[i].features.as_slice())
                .collect();
            let targets: Vec<u32> = batch.iter().map(|&i| data.samples[i].identity).collect();
            let teacher_embeddings: Option<Vec<Vec<f64>>> = match teacher {
                Some((t, _)) => Some(
                    inputs
                        .iter()
                        .map(|x| t.embed(x))
                        .collect::<Result<Vec<_>>>()?,
                ),
                None => None,
            };
            let distill = match (&teacher_embeddings, teacher) {
                (Some(embeds), Some((_, lambda))) => Some(DistillTarget {
                    teacher_embeddings: embeds,
                    lambda,
                }),
                _ => None,
            };
            let (grads, components) = backward(
                &net,
                &inputs,
                &BatchLossSpec {
                    targets: &targets,
                    distill,
                },
            )?;
            net.sgd_step(&grads, lr)?;
            class_sum += components.class_mean * batch.len() as f64;
            dis_sum += components.dis_mean * batch.len() as f64;
        }
        trace.push(EpochLoss {
            class: class_sum / n as f64,
            dis: dis_sum / n as f64,
        });
    }
    Ok((net, trace))
}

/// The three pipeline variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Dnd,
    DndPlusPlus,
    Osd,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Dnd => "dnd",
            Method::DndPlusPlus => "dndpp",
            Method::Osd => "osd",
        }
    }
}

/// Per-stage epoch overrides; `None` uses `spec.epochs`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StagePlan {
    pub teacher_epochs: Option<u32>,
    pub student_epochs: Option<u32>,
    pub final_epochs: Option<u32>,
}

/// Names of pipeline stages, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Teacher,
    Student,
    FinalStudent,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Teacher => "teacher",
            Stage::Student => "student",
            Stage::FinalStudent => "final_student",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageTrace {
    pub stage: Stage,
    pub epochs: Vec<EpochLoss>,
}

/// Networks and loss traces produced by [`run_pipeline`].
#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub teacher: EmbeddingNet,
    pub student: EmbeddingNet,
    /// Present only for the refinement pipeline.
    pub final_student: Option<EmbeddingNet>,
    pub traces: Vec<StageTrace>,
}

impl PipelineResult {
    /// Epoch losses across all stages, in execution order.
    pub fn loss_trace(&self) -> Vec<EpochLoss> {
        self.traces
            .iter()
            .flat_map(|t| t.epochs.iter().copied())
            .collect()
    }
}

/// Runs one full pipeline on a dataset whose labels are the attribute's two
/// categories (binarize first if they are not).
///
/// Both categories must be present with at least two identities each. Every
/// stage reuses `spec` with its own epoch count from `plan`.
pub fn run_pipeline(
    method: Method,
    ds: &Dataset,
    attr: &BinaryAttribute,
    arch: &NetArch,
    spec: &TrainSpec,
    plan: &StagePlan,
) -> Result<PipelineResult> {
    spec.validate()?;
    let data_high = ds.filter_by_attribute(&attr.high)?;
    let data_low = ds.filter_by_attribute(&attr.low)?;
    for (label, part) in [(&attr.high, &data_high), (&attr.low, &data_low)] {
        let distinct = part.identities_present().len();
        if distinct < 2 {
            return Err(Error::Invalid {
                what: "pipeline data",
                reason: format!("category {label:?} has {distinct} identities, need at least 2"),
            });
        }
    }

    let teacher_spec = spec.with_epochs(plan.teacher_epochs.unwrap_or(spec.epochs));
    let (teacher, teacher_trace) = train_teacher(&data_high, attr, arch, &teacher_spec)?;
    let mut traces = vec![StageTrace {
        stage: Stage::Teacher,
        epochs: teacher_trace,
    }];

    let student_spec = spec.with_epochs(plan.student_epochs.unwrap_or(spec.epochs));
    match method {
        Method::Dnd => {
            let (student, t) =
                train_student(&teacher, &data_low, spec.lambda1, &student_spec, teacher.clone())?;
            traces.push(StageTrace {
                stage: Stage::Student,
                epochs: t,
            });
            Ok(PipelineResult {
                teacher,
                student,
                final_student: None,
                traces,
            })
        }
        Method::DndPlusPlus => {
            let (student, t) =
                train_student(&teacher, &data_low, spec.lambda1, &student_spec, teacher.clone())?;
            traces.push(StageTrace {
                stage: Stage::Student,
                epochs: t,
            });
            let final_spec = spec.with_epochs(plan.final_epochs.unwrap_or(spec.epochs));
            let (final_student, t) =
                train_student(&student, ds, spec.lambda2, &final_spec, student.clone())?;
            traces.push(StageTrace {
                stage: Stage::FinalStudent,
                epochs: t,
            });
            Ok(PipelineResult {
                teacher,
                student,
                final_student: Some(final_student),
                traces,
            })
        }
        Method::Osd => {
            let (student, t) =
                train_student(&teacher, ds, spec.lambda_osd, &student_spec, teacher.clone())?;
            traces.push(StageTrace {
                stage: Stage::Student,
                epochs: t,
            });
            Ok(PipelineResult {
                teacher,
                student,
                final_student: None,
                traces,
            })
        }
    }
}

/// Manifest describing a training run: the resolved configuration, which
/// stages ran, where their checkpoints were written, and the per-epoch
/// losses. The fields are a pure function of the run configuration and
/// the input data, so a rerun writes identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineManifest {
    /// Command or pipeline that produced the run.
    pub command: String,
    pub attribute: BinaryAttribute,
    pub arch: NetArch,
    pub spec: TrainSpec,
    /// Input feature file as given by the caller.
    pub data: String,
    pub stages: Vec<ManifestStage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestStage {
    pub name: String,
    pub checkpoint: String,
    pub loss_trace: Vec<EpochLoss>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_synthetic, SynthSpec};

    fn tiny_dataset(seed: u64) -> Dataset {
        generate_synthetic(&SynthSpec {
            ids_per_group: BTreeMap::from([("e".to_string(), 3), ("h".to_string(), 3)]),
            samples_per_id: 6,
            input_dim: 8,
            center_scale: 1.0,
            noise_sigma_per_group: BTreeMap::from([
                ("e".to_string(), 0.2),
                ("h".to_string(), 0.6),
            ]),
            seed,
        })
        .unwrap()
    }

    fn tiny_arch(ds: &Dataset) -> NetArch {
        NetArch {
            input_dim: ds.input_dim(),
            hidden: vec![8],
            embed_dim: 4,
            num_identities: ds.num_identities,
        }
    }

    fn quick_spec(epochs: u32, seed: u64) -> TrainSpec {
        TrainSpec {
            epochs,
            batch_size: 8,
            seed,
            ..TrainSpec::default()
        }
    }

    fn attr() -> BinaryAttribute {
        BinaryAttribute::identity("noise", "e", "h").unwrap()
    }

    #[test]
    fn binarize_collapses_categories_and_counts_sides() {
        let ds = tiny_dataset(1);
        let mapping = BTreeMap::from([
            ("e".to_string(), Side::High),
            ("h".to_string(), Side::Low),
        ]);
        let attr = BinaryAttribute::new("noise", "quiet", "loud", mapping).unwrap();
        let out = binarize_attribute(&ds, &attr).unwrap();
        assert_eq!(out.len(), ds.len());
        assert_eq!(out.attribute_labels, vec!["quiet".to_string(), "loud".to_string()]);
        let high = out.samples.iter().filter(|s| s.attribute == 0).count();
        let low = out.samples.iter().filter(|s| s.attribute == 1).count();
        assert_eq!(high, 18);
        assert_eq!(low, 18);
        for (a, b) in ds.samples.iter().zip(&out.samples) {
            assert_eq!(a.features, b.features);
            assert_eq!(a.identity, b.identity);
        }
    }

    #[test]
    fn binarize_four_categories_into_two_groups() {
        let mut ds = tiny_dataset(2);
        ds.attribute_labels = vec!["cauc".into(), "asian".into(), "afr".into(), "indian".into()];
        for (i, s) in ds.samples.iter_mut().enumerate() {
            s.attribute = (i % 4) as u16;
        }
        let mapping = BTreeMap::from([
            ("cauc".to_string(), Side::High),
            ("asian".to_string(), Side::High),
            ("afr".to_string(), Side::Low),
            ("indian".to_string(), Side::Low),
        ]);
        let attr = BinaryAttribute::new("skintone", "light", "dark", mapping).unwrap();
        let out = binarize_attribute(&ds, &attr).unwrap();
        let high = out.samples.iter().filter(|s| s.attribute == 0).count();
        assert_eq!(high, 18, "two of four categories fold into the high side");
        assert_eq!(out.len(), 36);
    }

    #[test]
    fn binarize_rejects_unmapped_category() {
        let ds = tiny_dataset(3);
        let mapping = BTreeMap::from([("e".to_string(), Side::High)]);
        let attr = BinaryAttribute::new("noise", "quiet", "loud", mapping).unwrap();
        let err = binarize_attribute(&ds, &attr).unwrap_err();
        match err {
            Error::UnmappedCategory { category } => assert_eq!(category, "h"),
            other => panic!("expected unmapped category, got {other:?}"),
        }
    }

    #[test]
    fn assign_high_low_orders_by_tpr() {
        let tprs = BTreeMap::from([("male".to_string(), 0.922), ("female".to_string(), 0.890)]);
        let (high, low) = assign_high_low(&tprs).unwrap();
        assert_eq!((high.as_str(), low.as_str()), ("male", "female"));

        let tprs = BTreeMap::from([("light".to_string(), 0.912), ("dark".to_string(), 0.883)]);
        let (high, low) = assign_high_low(&tprs).unwrap();
        assert_eq!((high.as_str(), low.as_str()), ("light", "dark"));
    }

    #[test]
    fn assign_high_low_breaks_ties_lexicographically() {
        let tprs = BTreeMap::from([("b".to_string(), 0.9), ("a".to_string(), 0.9)]);
        let (high, low) = assign_high_low(&tprs).unwrap();
        assert_eq!((high.as_str(), low.as_str()), ("a", "b"));
    }

    #[test]
    fn assign_high_low_requires_exactly_two() {
        let tprs = BTreeMap::from([("a".to_string(), 0.9)]);
        assert!(matches!(
            assign_high_low(&tprs).unwrap_err(),
            Error::GroupArity { got: 1 }
        ));
    }

    #[test]
    fn distill_loss_reference_points() {
        assert!(distill_loss(&[1.0, 0.0], &[2.0, 0.0]).unwrap().abs() < 1e-15);
        assert!((distill_loss(&[1.0, 0.0], &[-1.0, 0.0]).unwrap() - 2.0).abs() < 1e-15);
        assert!((distill_loss(&[1.0, 0.0], &[0.0, 5.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            distill_loss(&[0.0, 0.0], &[1.0, 0.0]).unwrap_err(),
            Error::DegenerateEmbedding { .. }
        ));
    }

    #[test]
    fn distill_loss_is_scale_invariant() {
        let f = [0.3, -0.7, 0.2, 0.9];
        let t = [-0.1, 0.4, 0.8, 0.5];
        let base = distill_loss(&f, &t).unwrap();
        for alpha in [0.5, 3.0] {
            for beta in [0.5, 3.0] {
                let fs: Vec<f64> = f.iter().map(|v| alpha * v).collect();
                let ts: Vec<f64> = t.iter().map(|v| beta * v).collect();
                let scaled = distill_loss(&fs, &ts).unwrap();
                assert!(
                    (scaled - base).abs() < 1e-12,
                    "scale ({alpha}, {beta}): {scaled} vs {base}"
                );
            }
        }
    }

    #[test]
    fn teacher_with_zero_epochs_returns_seeded_init() {
        let ds = tiny_dataset(5);
        let high = ds.filter_by_attribute("e").unwrap();
        let arch = tiny_arch(&ds);
        let spec = quick_spec(0, 40);
        let (net, trace) = train_teacher(&high, &attr(), &arch, &spec).unwrap();
        assert!(trace.is_empty());
        let init = EmbeddingNet::seeded(&arch, 40).unwrap();
        assert!(net.params_bitwise_eq(&init));
    }

    #[test]
    fn teacher_training_is_deterministic() {
        let ds = tiny_dataset(6);
        let high = ds.filter_by_attribute("e").unwrap();
        let arch = tiny_arch(&ds);
        let spec = quick_spec(5, 41);
        let (a, ta) = train_teacher(&high, &attr(), &arch, &spec).unwrap();
        let (b, tb) = train_teacher(&high, &attr(), &arch, &spec).unwrap();
        assert!(a.params_bitwise_eq(&b));
        assert_eq!(ta, tb);
    }

    #[test]
    fn teacher_rejects_contaminated_data() {
        let ds = tiny_dataset(7);
        let arch = tiny_arch(&ds);
        let err = train_teacher(&ds, &attr(), &arch, &quick_spec(1, 1)).unwrap_err();
        match err {
            Error::Contamination { expected, found, count } => {
                assert_eq!(expected, "e");
                assert_eq!(found, "h");
                assert_eq!(count, 18);
            }
            other => panic!("expected contamination, got {other:?}"),
        }
    }

    #[test]
    fn teacher_fits_its_category() {
        let ds = tiny_dataset(8);
        let high = ds.filter_by_attribute("e").unwrap();
        let arch = tiny_arch(&ds);
        let spec = quick_spec(60, 42);
        let (net, trace) = train_teacher(&high, &attr(), &arch, &spec).unwrap();
        let correct = high
            .samples
            .iter()
            .filter(|s| {
                let (_, logits) = net.forward(&s.features).unwrap();
                let argmax = logits
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap()
                    .0;
                argmax == s.identity as usize
            })
            .count();
        let acc = correct as f64 / high.len() as f64;
        assert!(acc >= 0.95, "teacher accuracy {acc}");
        assert_eq!(trace.len(), 60);
        assert!(trace.iter().all(|e| e.dis == 0.0));
    }

    #[test]
    fn student_with_lambda_zero_is_plain_fine_tuning() {
        let ds = tiny_dataset(9);
        let high = ds.filter_by_attribute("e").unwrap();
        let low = ds.filter_by_attribute("h").unwrap();
        let arch = tiny_arch(&ds);
        let (teacher, _) = train_teacher(&high, &attr(), &arch, &quick_spec(10, 43)).unwrap();
        let spec = quick_spec(8, 44);
        let (a, _) = train_student(&teacher, &low, 0.0, &spec, teacher.clone()).unwrap();
        // The same loop without any teacher reference.
        let (b, _) = train_loop(teacher.clone(), &low, None, &spec).unwrap();
        assert!(a.params_bitwise_eq(&b));
    }

    #[test]
    fn student_leaves_teacher_frozen() {
        let ds = tiny_dataset(10);
        let high = ds.filter_by_attribute("e").unwrap();
        let low = ds.filter_by_attribute("h").unwrap();
        let arch = tiny_arch(&ds);
        let (teacher, _) = train_teacher(&high, &attr(), &arch, &quick_spec(10, 45)).unwrap();
        let before = teacher.to_bytes();
        let (student, _) =
            train_student(&teacher, &low, 1.0, &quick_spec(6, 46), teacher.clone()).unwrap();
        assert_eq!(teacher.to_bytes(), before, "teacher must not move");
        assert!(!student.params_bitwise_eq(&teacher), "student should move");
    }

    #[test]
    fn student_distillation_loss_decreases() {
        let ds = tiny_dataset(12);
        let high = ds.filter_by_attribute("e").unwrap();
        let low = ds.filter_by_attribute("h").unwrap();
        let arch = tiny_arch(&ds);
        let (teacher, _) = train_teacher(&high, &attr(), &arch, &quick_spec(30, 47)).unwrap();
        // Start the student from a different seed so there is distillation
        // distance to close.
        let init = EmbeddingNet::seeded(&arch, 999).unwrap();
        let (_, trace) =
            train_student(&teacher, &low, 1.0, &quick_spec(40, 48), init).unwrap();
        let first = trace.first().unwrap().dis;
        let last = trace.last().unwrap().dis;
        assert!(
            last < first,
            "distillation loss should fall: {first} -> {last}"
        );
    }

    #[test]
    fn student_rejects_mismatched_architectures() {
        let ds = tiny_dataset(13);
        let low = ds.filter_by_attribute("h").unwrap();
        let arch = tiny_arch(&ds);
        let teacher = EmbeddingNet::seeded(&arch, 1).unwrap();
        let other = NetArch {
            hidden: vec![12],
            ..arch.clone()
        };
        let init = EmbeddingNet::seeded(&other, 1).unwrap();
        let err = train_student(&teacher, &low, 1.0, &quick_spec(1, 1), init).unwrap_err();
        assert!(matches!(err, Error::ArchMismatch(_)));
    }

    #[test]
    fn lambda_continuity_near_zero() {
        let ds = tiny_dataset(14);
        let high = ds.filter_by_attribute("e").unwrap();
        let low = ds.filter_by_attribute("h").unwrap();
        let arch = tiny_arch(&ds);
        let (teacher, _) = train_teacher(&high, &attr(), &arch, &quick_spec(10, 49)).unwrap();
        let spec = quick_spec(10, 50);
        let (zero, _) = train_student(&teacher, &low, 0.0, &spec, teacher.clone()).unwrap();
        let (tiny, _) = train_student(&teacher, &low, 1e-8, &spec, teacher.clone()).unwrap();
        let max_diff = zero
            .flat_params()
            .iter()
            .zip(tiny.flat_params())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(
            max_diff < 1e-6,
            "lambda 1e-8 should stay within 1e-6 of lambda 0, got {max_diff}"
        );
    }

    #[test]
    fn pipelines_produce_expected_stage_structure() {
        let ds = tiny_dataset(15);
        let arch = tiny_arch(&ds);
        let spec = quick_spec(3, 51);
        let plan = StagePlan::default();
        let dnd = run_pipeline(Method::Dnd, &ds, &attr(), &arch, &spec, &plan).unwrap();
        assert!(dnd.final_student.is_none());
        assert_eq!(dnd.loss_trace().len(), 6);
        assert_eq!(dnd.traces.len(), 2);

        let dndpp = run_pipeline(Method::DndPlusPlus, &ds, &attr(), &arch, &spec, &plan).unwrap();
        assert!(dndpp.final_student.is_some());
        assert_eq!(dndpp.loss_trace().len(), 9);

        let osd = run_pipeline(Method::Osd, &ds, &attr(), &arch, &spec, &plan).unwrap();
        assert!(osd.final_student.is_none());
        assert_eq!(osd.loss_trace().len(), 6);
    }

    #[test]
    fn pipeline_teacher_matches_standalone_teacher_bitwise() {
        let ds = tiny_dataset(16);
        let arch = tiny_arch(&ds);
        let spec = quick_spec(4, 52);
        let dnd = run_pipeline(
            Method::Dnd,
            &ds,
            &attr(),
            &arch,
            &spec,
            &StagePlan::default(),
        )
        .unwrap();
        let high = ds.filter_by_attribute("e").unwrap();
        let (teacher, _) = train_teacher(&high, &attr(), &arch, &spec).unwrap();
        assert!(dnd.teacher.params_bitwise_eq(&teacher));
    }

    #[test]
    fn osd_equals_refinement_pipeline_with_zero_epoch_middle_stage() {
        let ds = tiny_dataset(17);
        let arch = tiny_arch(&ds);
        let mut spec = quick_spec(4, 53);
        spec.lambda2 = 0.7;
        spec.lambda_osd = 0.7;
        let osd = run_pipeline(
            Method::Osd,
            &ds,
            &attr(),
            &arch,
            &spec,
            &StagePlan::default(),
        )
        .unwrap();
        let dndpp = run_pipeline(
            Method::DndPlusPlus,
            &ds,
            &attr(),
            &arch,
            &spec,
            &StagePlan {
                student_epochs: Some(0),
                ..StagePlan::default()
            },
        )
        .unwrap();
        let final_student = dndpp.final_student.as_ref().unwrap();
        assert!(
            osd.student.params_bitwise_eq(final_student),
            "one-step distillation must equal the refinement pipeline with a skipped middle stage"
        );
    }

    #[test]
    fn student_zero_epochs_preserves_init_forward() {
        let ds = tiny_dataset(18);
        let low = ds.filter_by_attribute("h").unwrap();
        let arch = tiny_arch(&ds);
        let teacher = EmbeddingNet::seeded(&arch, 3).unwrap();
        let init = EmbeddingNet::seeded(&arch, 4).unwrap();
        let (student, _) =
            train_student(&teacher, &low, 1.0, &quick_spec(0, 54), init.clone()).unwrap();
        assert!(student.params_bitwise_eq(&init));
        let probe = &low.samples[0].features;
        assert_eq!(
            student.forward(probe).unwrap(),
            init.forward(probe).unwrap()
        );
    }

    #[test]
    fn default_lambda_presets() {
        let g = default_lambdas(AttributeKind::Gender);
        assert_eq!((g.lambda1, g.lambda2, g.lambda_osd), (1.0, 1.0, 1.0));
        let s = default_lambdas(AttributeKind::Skintone);
        assert_eq!((s.lambda1, s.lambda2, s.lambda_osd), (1.0, 1.0, 0.5));
        let spec = TrainSpec::default();
        assert_eq!(
            (spec.lambda1, spec.lambda2, spec.lambda_osd),
            (1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn manifest_round_trips_through_json() {
        let manifest = PipelineManifest {
            command: "train-dndpp".into(),
            attribute: attr(),
            arch: NetArch {
                input_dim: 8,
                hidden: vec![8],
                embed_dim: 4,
                num_identities: 6,
            },
            spec: TrainSpec::default(),
            data: "d.feat".into(),
            stages: vec![ManifestStage {
                name: "teacher".into(),
                checkpoint: "teacher.net".into(),
                loss_trace: vec![EpochLoss {
                    class: 1.25,
                    dis: 0.0,
                }],
            }],
        };
        let json = serde_json::to_string_pretty(&manifest).unwrap();
        let back: PipelineManifest = serde_json::from_str(&json).unwrap();
        assert_eq!(back, manifest);
    }
}
