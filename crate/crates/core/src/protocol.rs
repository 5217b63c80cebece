//! Templates and 1:1 verification pair protocols.
//!
//! A template aggregates the feature vectors of one subject into a single
//! unit vector: members are L2-normalized, averaged, and the mean is
//! renormalized. Pairs of templates are scored by cosine similarity, which
//! for unit aggregates is their dot product. A pair protocol fixes the exact
//! pair list; genuine pairs share a subject, impostor pairs do not. Pairs
//! whose templates carry the same group label count toward that group's
//! protocol as well as the overall one; mixed-group pairs count only
//! overall.

use std::collections::BTreeMap;
use std::path::Path;

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::linalg;

/// An aggregated subject template.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    /// Protocol-level name, unique within a template set.
    pub id: String,
    pub subject_id: u32,
    /// Attribute group of the member samples, when uniform.
    pub group: Option<String>,
    pub members: Vec<Vec<f64>>,
    /// Unit-norm aggregate of the members.
    pub aggregated: Vec<f64>,
}

impl Template {
    pub fn new(
        id: String,
        subject_id: u32,
        group: Option<String>,
        members: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let aggregated = aggregate_template(&members)?;
        Ok(Template {
            id,
            subject_id,
            group,
            members,
            aggregated,
        })
    }
}

/// Aggregates member features: each member is L2-normalized, the mean is
/// taken, and the mean is renormalized to unit norm.
///
/// Fails on an empty member list, on any member with norm at or below
/// 1e-12, and on a zero-norm mean (exactly antipodal members).
pub fn aggregate_template(members: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = members.first().ok_or_else(|| Error::DegenerateTemplate {
        reason: "no member features".into(),
    })?;
    let dim = first.len();
    let mut mean = vec![0.0; dim];
    for (i, m) in members.iter().enumerate() {
        if m.len() != dim {
            return Err(Error::Shape {
                context: "template member",
                expected: dim,
                actual: m.len(),
            });
        }
        let n = linalg::norm(m);
        if n <= linalg::NORM_FLOOR {
            return Err(Error::DegenerateTemplate {
                reason: format!("member {i} has norm {n:e}"),
            });
        }
        for (acc, v) in mean.iter_mut().zip(m) {
            *acc += v / n;
        }
    }
    let count = members.len() as f64;
    for v in &mut mean {
        *v /= count;
    }
    let n = linalg::norm(&mean);
    if n <= linalg::NORM_FLOOR {
        return Err(Error::DegenerateTemplate {
            reason: format!("aggregate norm {n:e} (members cancel out)"),
        });
    }
    for v in &mut mean {
        *v /= n;
    }
    Ok(mean)
}

/// Cosine similarity of two template aggregates. Aggregates are unit norm
/// by construction, so this is their dot product.
pub fn cosine_score(a: &Template, b: &Template) -> f64 {
    linalg::dot(&a.aggregated, &b.aggregated)
}

/// One scored comparison, indexing into the protocol's template list.
#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub a: usize,
    pub b: usize,
    pub genuine: bool,
    /// Set when both templates carry the same group label.
    pub group: Option<String>,
}

/// A fixed list of template comparisons.
#[derive(Debug, Clone, PartialEq)]
pub struct PairProtocol {
    pub templates: Vec<Template>,
    pub pairs: Vec<Pair>,
}

impl PairProtocol {
    /// Validates indices, the genuine flag against subject ids, and group
    /// tags against template labels.
    pub fn new(templates: Vec<Template>, pairs: Vec<Pair>) -> Result<Self> {
        let protocol = PairProtocol { templates, pairs };
        protocol.validate()?;
        Ok(protocol)
    }

    fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::Invalid {
            what: "pair protocol",
            reason,
        };
        let mut seen = std::collections::BTreeSet::new();
        for t in &self.templates {
            if !seen.insert(&t.id) {
                return Err(bad(format!("duplicate template id {:?}", t.id)));
            }
        }
        for (i, p) in self.pairs.iter().enumerate() {
            if p.a >= self.templates.len() || p.b >= self.templates.len() {
                return Err(bad(format!("pair {i} references a missing template")));
            }
            if p.a == p.b {
                return Err(bad(format!("pair {i} compares a template with itself")));
            }
            let (ta, tb) = (&self.templates[p.a], &self.templates[p.b]);
            let same_subject = ta.subject_id == tb.subject_id;
            if p.genuine != same_subject {
                return Err(bad(format!(
                    "pair {i} marked genuine={} but subjects are {} and {}",
                    p.genuine, ta.subject_id, tb.subject_id
                )));
            }
            let shared = match (&ta.group, &tb.group) {
                (Some(x), Some(y)) if x == y => Some(x.clone()),
                _ => None,
            };
            if p.group != shared {
                return Err(bad(format!(
                    "pair {i} has group tag {:?} but templates share {:?}",
                    p.group, shared
                )));
            }
        }
        Ok(())
    }

    /// Every unordered template pair: genuine when subjects match, group
    /// tag when labels match.
    pub fn all_pairs(templates: Vec<Template>) -> Result<Self> {
        let mut pairs = Vec::new();
        for a in 0..templates.len() {
            for b in (a + 1)..templates.len() {
                let (ta, tb) = (&templates[a], &templates[b]);
                let group = match (&ta.group, &tb.group) {
                    (Some(x), Some(y)) if x == y => Some(x.clone()),
                    _ => None,
                };
                pairs.push(Pair {
                    a,
                    b,
                    genuine: ta.subject_id == tb.subject_id,
                    group,
                });
            }
        }
        PairProtocol::new(templates, pairs)
    }

    /// Scores every pair in protocol order.
    pub fn score(&self) -> Vec<f64> {
        self.pairs
            .iter()
            .map(|p| cosine_score(&self.templates[p.a], &self.templates[p.b]))
            .collect()
    }

    pub fn template_index(&self, id: &str) -> Option<usize> {
        self.templates.iter().position(|t| t.id == id)
    }
}

/// Splits a protocol by group tag. Each group keeps the full template list
/// and exactly its same-group pairs, in protocol order; mixed pairs appear
/// in no group. Labels without pairs map to empty protocols.
pub fn split_pairs_by_group(
    protocol: &PairProtocol,
    labels: &[String],
) -> BTreeMap<String, PairProtocol> {
    let mut out = BTreeMap::new();
    for label in labels {
        let pairs: Vec<Pair> = protocol
            .pairs
            .iter()
            .filter(|p| p.group.as_deref() == Some(label.as_str()))
            .cloned()
            .collect();
        out.insert(
            label.clone(),
            PairProtocol {
                templates: protocol.templates.clone(),
                pairs,
            },
        );
    }
    out
}

/// Replaces every sample's features with the network's embedding of them.
/// Identity and attribute bookkeeping carries over unchanged, so the
/// result feeds straight into [`build_templates`].
pub fn embed_dataset(
    net: &crate::model::EmbeddingNet,
    data: &Dataset,
) -> Result<Dataset> {
    let mut samples = Vec::with_capacity(data.len());
    for s in &data.samples {
        samples.push(crate::datagen::Sample {
            features: net.embed(&s.features)?,
            identity: s.identity,
            attribute: s.attribute,
        });
    }
    Ok(Dataset {
        samples,
        num_identities: data.num_identities,
        attribute_labels: data.attribute_labels.clone(),
    })
}

/// Builds templates from a dataset of per-sample embeddings by chunking
/// each identity's samples, in dataset order, into groups of
/// `samples_per_template` (the final chunk may be smaller). Template ids
/// are `"<identity>_<chunk>"`.
pub fn build_templates(embeddings: &Dataset, samples_per_template: usize) -> Result<Vec<Template>> {
    if samples_per_template == 0 {
        return Err(Error::Invalid {
            what: "template size",
            reason: "samples_per_template must be positive".into(),
        });
    }
    let mut by_identity: BTreeMap<u32, Vec<&crate::datagen::Sample>> = BTreeMap::new();
    for s in &embeddings.samples {
        by_identity.entry(s.identity).or_default().push(s);
    }
    let mut templates = Vec::new();
    for (identity, samples) in by_identity {
        for (chunk_idx, chunk) in samples.chunks(samples_per_template).enumerate() {
            let group_idx = chunk[0].attribute;
            if chunk.iter().any(|s| s.attribute != group_idx) {
                return Err(Error::Invalid {
                    what: "template members",
                    reason: format!(
                        "identity {identity} mixes attribute labels within one template"
                    ),
                });
            }
            let members: Vec<Vec<f64>> = chunk.iter().map(|s| s.features.clone()).collect();
            templates.push(Template::new(
                format!("{identity}_{chunk_idx}"),
                identity,
                Some(embeddings.attribute_labels[group_idx as usize].clone()),
                members,
            )?);
        }
    }
    Ok(templates)
}

/// Reads a pair list CSV with header `template_a_id,template_b_id,genuine`
/// where genuine is 0 or 1, and resolves it against the template set.
pub fn read_pairs_csv(path: &Path, templates: Vec<Template>) -> Result<PairProtocol> {
    let display = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|source| Error::Csv {
        path: display.clone(),
        source,
    })?;
    let bad = |reason: String| Error::Invalid {
        what: "pair csv",
        reason,
    };
    let headers = reader
        .headers()
        .map_err(|source| Error::Csv {
            path: display.clone(),
            source,
        })?
        .clone();
    if headers.len() != 3
        || &headers[0] != "template_a_id"
        || &headers[1] != "template_b_id"
        || &headers[2] != "genuine"
    {
        return Err(bad(
            "header must be template_a_id,template_b_id,genuine".into(),
        ));
    }
    let index: BTreeMap<&str, usize> = templates
        .iter()
        .enumerate()
        .map(|(i, t)| (t.id.as_str(), i))
        .collect();
    let mut pairs = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|source| Error::Csv {
            path: display.clone(),
            source,
        })?;
        if record.len() != 3 {
            return Err(bad(format!("row {line} has {} fields", record.len())));
        }
        let a = *index
            .get(&record[0])
            .ok_or_else(|| bad(format!("row {line}: unknown template {:?}", &record[0])))?;
        let b = *index
            .get(&record[1])
            .ok_or_else(|| bad(format!("row {line}: unknown template {:?}", &record[1])))?;
        let genuine = match &record[2] {
            "0" => false,
            "1" => true,
            other => return Err(bad(format!("row {line}: genuine must be 0 or 1, got {other:?}"))),
        };
        let (ta, tb) = (&templates[a], &templates[b]);
        let group = match (&ta.group, &tb.group) {
            (Some(x), Some(y)) if x == y => Some(x.clone()),
            _ => None,
        };
        pairs.push(Pair { a, b, genuine, group });
    }
    PairProtocol::new(templates, pairs)
}

/// Reads a template membership CSV with header `sample_id,template_id` and
/// builds templates from the referenced dataset rows. Every template's
/// members must share one subject and one attribute label.
pub fn read_membership_csv(path: &Path, embeddings: &Dataset) -> Result<Vec<Template>> {
    let display = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|source| Error::Csv {
        path: display.clone(),
        source,
    })?;
    let bad = |reason: String| Error::Invalid {
        what: "membership csv",
        reason,
    };
    let headers = reader
        .headers()
        .map_err(|source| Error::Csv {
            path: display.clone(),
            source,
        })?
        .clone();
    if headers.len() != 2 || &headers[0] != "sample_id" || &headers[1] != "template_id" {
        return Err(bad("header must be sample_id,template_id".into()));
    }
    // Preserve first-appearance order of template ids.
    let mut order: Vec<String> = Vec::new();
    let mut members: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|source| Error::Csv {
            path: display.clone(),
            source,
        })?;
        if record.len() != 2 {
            return Err(bad(format!("row {line} has {} fields", record.len())));
        }
        let sample_id: usize = record[0]
            .parse()
            .map_err(|e| bad(format!("row {line}: bad sample_id: {e}")))?;
        if sample_id >= embeddings.len() {
            return Err(bad(format!(
                "row {line}: sample_id {sample_id} outside dataset of {} rows",
                embeddings.len()
            )));
        }
        let template_id = record[1].to_string();
        if !members.contains_key(&template_id) {
            order.push(template_id.clone());
        }
        members.entry(template_id).or_default().push(sample_id);
    }
    let mut templates = Vec::with_capacity(order.len());
    for id in order {
        let rows = &members[&id];
        let subject = embeddings.samples[rows[0]].identity;
        let attr = embeddings.samples[rows[0]].attribute;
        for &r in rows {
            if embeddings.samples[r].identity != subject {
                return Err(bad(format!("template {id:?} mixes subjects")));
            }
            if embeddings.samples[r].attribute != attr {
                return Err(bad(format!("template {id:?} mixes attribute labels")));
            }
        }
        let feats: Vec<Vec<f64>> = rows
            .iter()
            .map(|&r| embeddings.samples[r].features.clone())
            .collect();
        templates.push(Template::new(
            id,
            subject,
            Some(embeddings.attribute_labels[attr as usize].clone()),
            feats,
        )?);
    }
    Ok(templates)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn template(id: &str, subject: u32, group: &str, members: Vec<Vec<f64>>) -> Template {
        Template::new(id.to_string(), subject, Some(group.to_string()), members).unwrap()
    }

    #[test]
    fn single_member_aggregation_is_normalization() {
        let agg = aggregate_template(&[vec![3.0, 4.0]]).unwrap();
        assert!((agg[0] - 0.6).abs() < 1e-15);
        assert!((agg[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn duplicate_members_do_not_move_the_aggregate() {
        let one = aggregate_template(&[vec![1.0, 2.0, -0.5]]).unwrap();
        let two = aggregate_template(&[vec![1.0, 2.0, -0.5], vec![1.0, 2.0, -0.5]]).unwrap();
        for (a, b) in one.iter().zip(&two) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn orthogonal_members_average_to_the_diagonal() {
        let agg = aggregate_template(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let expect = 1.0 / 2.0f64.sqrt();
        assert!((agg[0] - expect).abs() < 1e-12);
        assert!((agg[1] - expect).abs() < 1e-12);
    }

    #[test]
    fn aggregate_rejects_degenerate_members() {
        assert!(matches!(
            aggregate_template(&[]).unwrap_err(),
            Error::DegenerateTemplate { .. }
        ));
        assert!(matches!(
            aggregate_template(&[vec![0.0, 0.0]]).unwrap_err(),
            Error::DegenerateTemplate { .. }
        ));
        // Antipodal members cancel exactly.
        assert!(matches!(
            aggregate_template(&[vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap_err(),
            Error::DegenerateTemplate { .. }
        ));
    }

    #[test]
    fn aggregate_is_unit_norm() {
        let agg = aggregate_template(&[
            vec![1.0, 2.0, 3.0],
            vec![-1.0, 0.5, 0.25],
            vec![4.0, -2.0, 1.0],
        ])
        .unwrap();
        assert!((linalg::norm(&agg) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cosine_score_reference_points() {
        let a = template("a", 0, "g", vec![vec![1.0, 0.0]]);
        let b = template("b", 0, "g", vec![vec![2.0, 0.0]]);
        let c = template("c", 1, "g", vec![vec![0.0, 1.0]]);
        assert!((cosine_score(&a, &b) - 1.0).abs() < 1e-12);
        assert!(cosine_score(&a, &c).abs() < 1e-12);
        // Exact symmetry, not approximate.
        assert_eq!(cosine_score(&a, &c), cosine_score(&c, &a));
    }

    #[test]
    fn cosine_score_matches_direct_cosine_of_aggregates() {
        let a = template("a", 0, "g", vec![vec![0.3, -0.2, 0.9], vec![0.1, 0.4, 0.5]]);
        let b = template("b", 1, "g", vec![vec![-0.6, 0.8, 0.1]]);
        let direct = linalg::cosine_similarity(&a.aggregated, &b.aggregated).unwrap();
        assert!((cosine_score(&a, &b) - direct).abs() < 1e-12);
    }

    #[test]
    fn scores_are_invariant_to_member_scaling() {
        let members = vec![vec![0.3, -0.2, 0.9], vec![0.1, 0.4, 0.5]];
        let scaled: Vec<Vec<f64>> = members
            .iter()
            .map(|m| m.iter().map(|v| v * 37.5).collect())
            .collect();
        let other = template("o", 1, "g", vec![vec![-0.6, 0.8, 0.1]]);
        let t1 = template("a", 0, "g", members);
        let t2 = template("a2", 0, "g", scaled);
        let s1 = cosine_score(&t1, &other);
        let s2 = cosine_score(&t2, &other);
        assert!((s1 - s2).abs() < 1e-12, "{s1} vs {s2}");
    }

    fn four_template_protocol() -> PairProtocol {
        let t = vec![
            template("m0a", 0, "m", vec![vec![1.0, 0.1, 0.0]]),
            template("m0b", 0, "m", vec![vec![0.9, 0.2, 0.0]]),
            template("f1a", 1, "f", vec![vec![0.0, 1.0, 0.3]]),
            template("f1b", 1, "f", vec![vec![0.1, 1.0, 0.2]]),
        ];
        PairProtocol::all_pairs(t).unwrap()
    }

    #[test]
    fn all_pairs_builds_expected_counts_and_tags() {
        let p = four_template_protocol();
        assert_eq!(p.pairs.len(), 6);
        let genuine = p.pairs.iter().filter(|x| x.genuine).count();
        assert_eq!(genuine, 2);
        let mixed = p.pairs.iter().filter(|x| x.group.is_none()).count();
        assert_eq!(mixed, 4, "cross-group comparisons carry no tag");
    }

    #[test]
    fn split_by_group_partitions_non_mixed_pairs() {
        let p = four_template_protocol();
        let labels = vec!["m".to_string(), "f".to_string()];
        let split = split_pairs_by_group(&p, &labels);
        let m = &split["m"];
        let f = &split["f"];
        assert_eq!(m.pairs.len(), 1);
        assert_eq!(f.pairs.len(), 1);
        assert!(m.pairs.iter().all(|x| x.group.as_deref() == Some("m")));
        let mixed = p.pairs.iter().filter(|x| x.group.is_none()).count();
        assert_eq!(m.pairs.len() + f.pairs.len() + mixed, p.pairs.len());
    }

    #[test]
    fn all_male_protocol_splits_entirely_into_one_group() {
        let t = vec![
            template("a", 0, "m", vec![vec![1.0, 0.0]]),
            template("b", 1, "m", vec![vec![0.5, 0.5]]),
            template("c", 2, "m", vec![vec![0.0, 1.0]]),
        ];
        let p = PairProtocol::all_pairs(t).unwrap();
        let split = split_pairs_by_group(&p, &["m".to_string(), "f".to_string()]);
        assert_eq!(split["m"].pairs.len(), p.pairs.len());
        assert!(split["f"].pairs.is_empty());
    }

    #[test]
    fn protocol_validation_catches_label_errors() {
        let t = vec![
            template("a", 0, "m", vec![vec![1.0, 0.0]]),
            template("b", 1, "m", vec![vec![0.0, 1.0]]),
        ];
        let err = PairProtocol::new(
            t,
            vec![Pair {
                a: 0,
                b: 1,
                genuine: true,
                group: Some("m".to_string()),
            }],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Invalid { .. }), "{err:?}");
    }

    #[test]
    fn score_order_matches_pair_order() {
        let p = four_template_protocol();
        let scores = p.score();
        assert_eq!(scores.len(), p.pairs.len());
        for (s, pair) in scores.iter().zip(&p.pairs) {
            let direct = cosine_score(&p.templates[pair.a], &p.templates[pair.b]);
            assert_eq!(*s, direct);
        }
    }

    #[test]
    fn build_templates_chunks_identities_in_order() {
        use crate::datagen::Sample;
        let ds = Dataset {
            samples: (0..10)
                .map(|i| Sample {
                    features: vec![1.0 + i as f64, 0.5],
                    identity: (i / 5) as u32,
                    attribute: (i / 5) as u16,
                })
                .collect(),
            num_identities: 2,
            attribute_labels: vec!["g0".into(), "g1".into()],
        };
        let templates = build_templates(&ds, 2).unwrap();
        assert_eq!(templates.len(), 6);
        assert_eq!(templates[0].id, "0_0");
        assert_eq!(templates[0].members.len(), 2);
        assert_eq!(templates[2].id, "0_2");
        assert_eq!(templates[2].members.len(), 1, "final chunk keeps the remainder");
        assert_eq!(templates[3].subject_id, 1);
        assert_eq!(templates[3].group.as_deref(), Some("g1"));
    }

    #[test]
    fn embed_dataset_keeps_bookkeeping_and_swaps_features() {
        use crate::datagen::Sample;
        use crate::model::NetArch;
        let arch = NetArch {
            input_dim: 3,
            hidden: vec![4],
            embed_dim: 2,
            num_identities: 2,
        };
        let net = crate::model::EmbeddingNet::seeded(&arch, 7).unwrap();
        let ds = Dataset {
            samples: vec![
                Sample { features: vec![0.1, 0.2, 0.3], identity: 0, attribute: 1 },
                Sample { features: vec![-0.5, 0.0, 0.9], identity: 1, attribute: 0 },
            ],
            num_identities: 2,
            attribute_labels: vec!["x".into(), "y".into()],
        };
        let embedded = embed_dataset(&net, &ds).unwrap();
        assert_eq!(embedded.input_dim(), 2);
        assert_eq!(embedded.samples[1].identity, 1);
        assert_eq!(embedded.samples[0].attribute, 1);
        assert_eq!(embedded.attribute_labels, ds.attribute_labels);
        let direct = net.embed(&ds.samples[0].features).unwrap();
        assert_eq!(embedded.samples[0].features, direct);
    }

    #[test]
    fn csv_round_trip_for_pairs_and_membership() {
        use crate::datagen::Sample;
        let dir = tempfile::tempdir().unwrap();
        let ds = Dataset {
            samples: vec![
                Sample { features: vec![1.0, 0.0], identity: 0, attribute: 0 },
                Sample { features: vec![0.9, 0.1], identity: 0, attribute: 0 },
                Sample { features: vec![0.0, 1.0], identity: 1, attribute: 1 },
                Sample { features: vec![0.1, 1.0], identity: 1, attribute: 1 },
            ],
            num_identities: 2,
            attribute_labels: vec!["m".into(), "f".into()],
        };
        let membership = dir.path().join("members.csv");
        std::fs::write(
            &membership,
            "sample_id,template_id\n0,t_a\n1,t_a\n2,t_b\n3,t_c\n",
        )
        .unwrap();
        let templates = read_membership_csv(&membership, &ds).unwrap();
        assert_eq!(templates.len(), 3);
        assert_eq!(templates[0].id, "t_a");
        assert_eq!(templates[0].members.len(), 2);

        let pairs = dir.path().join("pairs.csv");
        std::fs::write(
            &pairs,
            "template_a_id,template_b_id,genuine\nt_b,t_c,1\nt_a,t_b,0\n",
        )
        .unwrap();
        let protocol = read_pairs_csv(&pairs, templates).unwrap();
        assert_eq!(protocol.pairs.len(), 2);
        assert!(protocol.pairs[0].genuine);
        assert_eq!(protocol.pairs[0].group.as_deref(), Some("f"));
        assert_eq!(protocol.pairs[1].group, None);
    }

    #[test]
    fn membership_csv_rejects_mixed_subjects() {
        use crate::datagen::Sample;
        let dir = tempfile::tempdir().unwrap();
        let ds = Dataset {
            samples: vec![
                Sample { features: vec![1.0, 0.0], identity: 0, attribute: 0 },
                Sample { features: vec![0.0, 1.0], identity: 1, attribute: 0 },
            ],
            num_identities: 2,
            attribute_labels: vec!["m".into()],
        };
        let membership = dir.path().join("members.csv");
        std::fs::write(&membership, "sample_id,template_id\n0,t\n1,t\n").unwrap();
        assert!(read_membership_csv(&membership, &ds).is_err());
    }
}
