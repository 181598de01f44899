//! Multi-scale opinion subsets.
//!
//! One subset is drawn per requested size, independently of the others, from
//! the question's opinion pool. The pool is ordered by opinion id before
//! drawing so the result does not depend on file order. The summarizer then
//! resamples *generations* over each fixed subset; subsets themselves are not
//! redrawn per resample.

use crate::corpus::Opinion;
use crate::rng::PortableRng;
use serde::{Deserialize, Serialize};

/// Subset sizes of the benchmark protocol.
pub const DEFAULT_SIZES: [usize; 11] = [10, 20, 30, 50, 70, 90, 120, 160, 200, 240, 300];

/// Independent summary generations per subset.
pub const DEFAULT_RESAMPLES: u32 = 3;

/// How resamples relate to subsets, recorded in run metadata.
pub const RESAMPLE_READING: &str = "fixed subset per size; generation resampled";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SamplerError {
    #[error("size exceeds pool: size {size} requested but question `{question_id}` has {available} opinions")]
    SizeExceedsPool {
        question_id: String,
        size: usize,
        available: usize,
    },
    #[error("duplicate size {0} in plan")]
    DuplicateSize(usize),
    #[error("sizes must be strictly increasing ({prev} then {next})")]
    NotIncreasing { prev: usize, next: usize },
    #[error("subset sizes must be positive")]
    ZeroSize,
    #[error("plan has no sizes")]
    NoSizes,
    #[error("resamples_per_size must be positive")]
    ZeroResamples,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetPlan {
    pub question_id: String,
    pub sizes: Vec<usize>,
    pub resamples_per_size: u32,
    pub seed: u64,
}

impl SubsetPlan {
    pub fn with_defaults(question_id: impl Into<String>, seed: u64) -> Self {
        Self {
            question_id: question_id.into(),
            sizes: DEFAULT_SIZES.to_vec(),
            resamples_per_size: DEFAULT_RESAMPLES,
            seed,
        }
    }

    /// Checks the plan against a pool of `available` opinions.
    pub fn validate(&self, available: usize) -> Result<(), SamplerError> {
        if self.sizes.is_empty() {
            return Err(SamplerError::NoSizes);
        }
        if self.resamples_per_size == 0 {
            return Err(SamplerError::ZeroResamples);
        }
        for pair in self.sizes.windows(2) {
            if pair[0] == pair[1] {
                return Err(SamplerError::DuplicateSize(pair[0]));
            }
            if pair[0] > pair[1] {
                return Err(SamplerError::NotIncreasing {
                    prev: pair[0],
                    next: pair[1],
                });
            }
        }
        if self.sizes[0] == 0 {
            return Err(SamplerError::ZeroSize);
        }
        let largest = *self.sizes.last().expect("nonempty");
        if largest > available {
            return Err(SamplerError::SizeExceedsPool {
                question_id: self.question_id.clone(),
                size: largest,
                available,
            });
        }
        Ok(())
    }
}

/// A drawn subset, also the line format of subset manifests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpinionSubset {
    pub subset_id: String,
    pub question_id: String,
    pub size: usize,
    /// Members in draw order.
    pub member_opinion_ids: Vec<String>,
    pub seed: u64,
}

impl OpinionSubset {
    /// Structural checks that need no pool.
    pub fn check(&self) -> Result<(), String> {
        if self.member_opinion_ids.len() != self.size {
            return Err(format!(
                "subset `{}` lists {} members but size is {}",
                self.subset_id,
                self.member_opinion_ids.len(),
                self.size
            ));
        }
        let mut ids: Vec<&str> = self.member_opinion_ids.iter().map(String::as_str).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(format!("subset `{}` repeats a member", self.subset_id));
        }
        Ok(())
    }
}

/// Identifier of the subset of `question_id` with `size` members.
pub fn subset_id(question_id: &str, size: usize) -> String {
    format!("{question_id}:n{size}")
}

/// Draws one subset per planned size from the opinions of `plan.question_id` in `pool`.
pub fn build_subsets(pool: &[Opinion], plan: &SubsetPlan) -> Result<Vec<OpinionSubset>, SamplerError> {
    let mut ids: Vec<&str> = pool
        .iter()
        .filter(|o| o.question_id == plan.question_id)
        .map(|o| o.id.as_str())
        .collect();
    ids.sort_unstable();
    ids.dedup();
    plan.validate(ids.len())?;

    Ok(plan
        .sizes
        .iter()
        .map(|&size| {
            let size_label = size.to_string();
            let mut rng = PortableRng::for_stream(plan.seed, &["subset", &plan.question_id, &size_label]);
            let members = rng.sample(&ids, size);
            OpinionSubset {
                subset_id: subset_id(&plan.question_id, size),
                question_id: plan.question_id.clone(),
                size,
                member_opinion_ids: members.into_iter().map(str::to_string).collect(),
                seed: plan.seed,
            }
        })
        .collect())
}

/// Reorders a subset's members for presentation; deterministic in `seed`.
pub fn permute_for_presentation(subset: &OpinionSubset, seed: u64) -> Vec<String> {
    let mut members = subset.member_opinion_ids.clone();
    let mut rng = PortableRng::for_stream(seed, &["presentation", &subset.subset_id]);
    rng.shuffle(&mut members);
    members
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::MinorityFlag;

    fn pool(question: &str, n: usize) -> Vec<Opinion> {
        (0..n)
            .map(|i| Opinion {
                id: format!("{question}-o{i:03}"),
                question_id: question.into(),
                text: format!("opinion {i}"),
                minority_flag: MinorityFlag::Unasked,
                completion_seconds: None,
                position_seed: None,
            })
            .collect()
    }

    fn plan(sizes: &[usize], seed: u64) -> SubsetPlan {
        SubsetPlan {
            question_id: "q".into(),
            sizes: sizes.to_vec(),
            resamples_per_size: 3,
            seed,
        }
    }

    #[test]
    fn exhaustive_subset_is_full_pool() {
        let p = pool("q", 300);
        let subsets = build_subsets(&p, &plan(&[300], 1)).unwrap();
        assert_eq!(subsets.len(), 1);
        let mut members = subsets[0].member_opinion_ids.clone();
        members.sort();
        let mut all: Vec<_> = p.iter().map(|o| o.id.clone()).collect();
        all.sort();
        assert_eq!(members, all);
    }

    #[test]
    fn deterministic_for_same_seed() {
        let p = pool("q", 300);
        let a = serde_json::to_vec(&build_subsets(&p, &plan(&[10, 20], 7)).unwrap()).unwrap();
        let b = serde_json::to_vec(&build_subsets(&p, &plan(&[10, 20], 7)).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn input_order_does_not_matter() {
        let p = pool("q", 40);
        let mut rev = p.clone();
        rev.reverse();
        assert_eq!(
            build_subsets(&p, &plan(&[10], 3)).unwrap(),
            build_subsets(&rev, &plan(&[10], 3)).unwrap()
        );
    }

    #[test]
    fn oversize_rejected() {
        let err = build_subsets(&pool("q", 50), &plan(&[70], 1)).unwrap_err();
        assert!(err.to_string().contains("size exceeds pool"));
    }

    #[test]
    fn plan_shape_errors() {
        let p = pool("q", 50);
        assert_eq!(
            build_subsets(&p, &plan(&[10, 10], 1)).unwrap_err(),
            SamplerError::DuplicateSize(10)
        );
        assert!(matches!(
            build_subsets(&p, &plan(&[20, 10], 1)).unwrap_err(),
            SamplerError::NotIncreasing { .. }
        ));
        assert_eq!(build_subsets(&p, &plan(&[0, 5], 1)).unwrap_err(), SamplerError::ZeroSize);
        assert_eq!(build_subsets(&p, &plan(&[], 1)).unwrap_err(), SamplerError::NoSizes);
    }

    #[test]
    fn other_questions_excluded_from_pool() {
        let mut p = pool("q", 12);
        p.extend(pool("other", 100));
        let subsets = build_subsets(&p, &plan(&[12], 1)).unwrap();
        assert!(subsets[0].member_opinion_ids.iter().all(|id| id.starts_with("q-")));
        assert!(build_subsets(&p, &plan(&[13], 1)).is_err());
    }

    #[test]
    fn subset_id_encodes_question_and_size() {
        let subsets = build_subsets(&pool("q", 30), &plan(&[10, 20], 1)).unwrap();
        assert_eq!(subsets[0].subset_id, "q:n10");
        assert_eq!(subsets[1].subset_id, "q:n20");
        for s in &subsets {
            s.check().unwrap();
        }
    }

    #[test]
    fn presentation_order_singleton_and_determinism() {
        let single = OpinionSubset {
            subset_id: "q:n1".into(),
            question_id: "q".into(),
            size: 1,
            member_opinion_ids: vec!["a".into()],
            seed: 0,
        };
        assert_eq!(permute_for_presentation(&single, 5), vec!["a".to_string()]);

        let subsets = build_subsets(&pool("q", 30), &plan(&[20], 1)).unwrap();
        let a = permute_for_presentation(&subsets[0], 11);
        let b = permute_for_presentation(&subsets[0], 11);
        assert_eq!(a, b);
        let mut sorted_a = a.clone();
        sorted_a.sort();
        let mut sorted_in = subsets[0].member_opinion_ids.clone();
        sorted_in.sort();
        assert_eq!(sorted_a, sorted_in);
    }
}
