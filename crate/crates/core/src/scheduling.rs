//! Image ordering, class scoping, and batching.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::seed::{rng_for, shuffle};

/// Role string for the shuffle sub-seed.
pub const SHUFFLE_ROLE: &str = "order";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OrderingStrategy {
    Shuffled { seed: u64 },
    SortedByObjectCount,
    Original,
}

impl OrderingStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            OrderingStrategy::Shuffled { .. } => "shuffled",
            OrderingStrategy::SortedByObjectCount => "sorted",
            OrderingStrategy::Original => "original",
        }
    }
}

impl fmt::Display for OrderingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Strategy name without parameters, as used on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StrategyKind {
    Shuffled,
    Sorted,
    Original,
}

impl StrategyKind {
    pub fn with_seed(self, seed: u64) -> OrderingStrategy {
        match self {
            StrategyKind::Shuffled => OrderingStrategy::Shuffled { seed },
            StrategyKind::Sorted => OrderingStrategy::SortedByObjectCount,
            StrategyKind::Original => OrderingStrategy::Original,
        }
    }
}

impl FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "shuffled" => Ok(StrategyKind::Shuffled),
            "sorted" => Ok(StrategyKind::Sorted),
            "original" => Ok(StrategyKind::Original),
            other => Err(format!(
                "unknown ordering {other:?} (expected shuffled, sorted or original)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    pub index: usize,
    pub image_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScheduleError {
    #[error("unknown class {0:?}")]
    UnknownClass(String),
}

/// Orders the dataset's image ids.
///
/// * shuffled: Fisher-Yates over the images in dataset (id) order, driven
///   by the `"order"` sub-seed of `seed`.
/// * sorted: descending object count, ties by ascending `image_id`.
/// * original: ascending `sequence_index` when every image has one,
///   otherwise ascending `source_name` (then `image_id`).
pub fn order_images(d: &Dataset, s: &OrderingStrategy) -> Vec<String> {
    let mut ids: Vec<&crate::dataset::ImageRecord> = d.images.iter().collect();
    match s {
        OrderingStrategy::Shuffled { seed } => {
            ids.sort_by(|a, b| a.image_id.cmp(&b.image_id));
            shuffle(&mut ids, &mut rng_for(*seed, SHUFFLE_ROLE));
        }
        OrderingStrategy::SortedByObjectCount => {
            ids.sort_by(|a, b| {
                b.objects
                    .len()
                    .cmp(&a.objects.len())
                    .then_with(|| a.image_id.cmp(&b.image_id))
            });
        }
        OrderingStrategy::Original => {
            if ids.iter().all(|im| im.sequence_index.is_some()) {
                ids.sort_by_key(|im| im.sequence_index);
            } else {
                ids.sort_by(|a, b| {
                    a.source_name
                        .cmp(&b.source_name)
                        .then_with(|| a.image_id.cmp(&b.image_id))
                });
            }
        }
    }
    ids.into_iter().map(|im| im.image_id.clone()).collect()
}

/// Splits an ordering into consecutive batches of `batch_size` (last one
/// possibly shorter).
pub fn make_batches(order: &[String], batch_size: usize) -> Vec<Batch> {
    assert!(batch_size >= 1, "batch size must be positive");
    order
        .chunks(batch_size)
        .enumerate()
        .map(|(index, c)| Batch {
            index,
            image_ids: c.to_vec(),
        })
        .collect()
}

/// Restricts a dataset to one class.
///
/// Keeps only images with at least one object of `class_label`. When
/// `keep_other_classes` is false (the usual per-class campaign) the other
/// classes' boxes are removed and the vocabulary becomes `[class_label]`;
/// otherwise they stay as distractors and the vocabulary is unchanged.
pub fn class_scope_with(
    d: &Dataset,
    class_label: &str,
    keep_other_classes: bool,
) -> Result<Dataset, ScheduleError> {
    if d.classes.binary_search_by(|c| c.as_str().cmp(class_label)).is_err() {
        return Err(ScheduleError::UnknownClass(class_label.to_string()));
    }
    let images = d
        .images
        .iter()
        .filter(|im| im.objects.iter().any(|o| o.class_label == class_label))
        .map(|im| {
            let mut im = im.clone();
            if !keep_other_classes {
                im.objects.retain(|o| o.class_label == class_label);
            }
            im
        })
        .collect();
    Ok(Dataset {
        images,
        classes: if keep_other_classes {
            d.classes.clone()
        } else {
            vec![class_label.to_string()]
        },
        provenance: d.provenance,
    })
}

pub fn class_scope(d: &Dataset, class_label: &str) -> Result<Dataset, ScheduleError> {
    class_scope_with(d, class_label, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synthetic::{generate, SyntheticDatasetConfig};
    use crate::dataset::{GroundTruthObject, ImageRecord, Provenance};
    use crate::geometry::BoundingBox;
    use proptest::prelude::*;

    fn image(id: &str, classes: &[&str]) -> ImageRecord {
        let mut im = ImageRecord::new(id, 100, 100);
        for c in classes {
            im.objects.push(GroundTruthObject::new(
                *c,
                BoundingBox::new(1.0, 1.0, 9.0, 9.0).unwrap(),
            ));
        }
        im
    }

    #[test]
    fn sorted_by_count() {
        let d = Dataset::from_images(
            vec![image("a", &["x"]), image("b", &["x"; 5]), image("c", &["x"; 3])],
            Provenance::Synthetic,
        )
        .unwrap();
        assert_eq!(order_images(&d, &OrderingStrategy::SortedByObjectCount), ["b", "c", "a"]);
    }

    #[test]
    fn sorted_ties_by_id() {
        let d = Dataset::from_images(
            vec![image("z", &["x"]), image("m", &["x", "x"]), image("a", &["x"])],
            Provenance::Synthetic,
        )
        .unwrap();
        assert_eq!(order_images(&d, &OrderingStrategy::SortedByObjectCount), ["m", "a", "z"]);
    }

    #[test]
    fn original_prefers_sequence_index() {
        let mut ims = vec![image("a", &[]), image("b", &[]), image("c", &[])];
        for (im, s) in ims.iter_mut().zip([2, 0, 1]) {
            im.sequence_index = Some(s);
        }
        ims[0].source_name = "0.jpg".into();
        let d = Dataset::from_images(ims.clone(), Provenance::Synthetic).unwrap();
        assert_eq!(order_images(&d, &OrderingStrategy::Original), ["b", "c", "a"]);

        ims[1].sequence_index = None;
        let d = Dataset::from_images(ims, Provenance::Synthetic).unwrap();
        assert_eq!(order_images(&d, &OrderingStrategy::Original), ["a", "b", "c"]);
    }

    #[test]
    fn shuffled_is_reproducible() {
        let d = generate(&SyntheticDatasetConfig::with_images(60, 2));
        let s = OrderingStrategy::Shuffled { seed: 11 };
        assert_eq!(order_images(&d, &s), order_images(&d, &s));
        assert_ne!(
            order_images(&d, &s),
            order_images(&d, &OrderingStrategy::Shuffled { seed: 12 })
        );
    }

    #[test]
    fn batch_sizes() {
        let ids = |n: usize| (0..n).map(|i| i.to_string()).collect::<Vec<_>>();
        let sizes = |n, b| make_batches(&ids(n), b).iter().map(|x| x.image_ids.len()).collect::<Vec<_>>();
        assert_eq!(sizes(120, 50), [50, 50, 20]);
        assert_eq!(sizes(50, 50), [50]);
        assert_eq!(sizes(101, 50), [50, 50, 1]);
        assert!(make_batches(&[], 5).is_empty());
    }

    #[test]
    fn scoping() {
        let d = Dataset::from_images(
            vec![
                image("1", &["airplane", "person"]),
                image("2", &["person"]),
                image("3", &["airplane"]),
                image("4", &["dog"]),
            ],
            Provenance::Voc,
        )
        .unwrap();
        let s = class_scope(&d, "airplane").unwrap();
        assert_eq!(s.images.len(), 2);
        assert_eq!(s.classes, vec!["airplane"]);
        assert!(s.images.iter().all(|im| im.objects.iter().all(|o| o.class_label == "airplane")));
        s.validate().unwrap();
        assert_eq!(class_scope(&s, "airplane").unwrap(), s);

        let kept = class_scope_with(&d, "airplane", true).unwrap();
        assert_eq!(kept.num_objects(), 3);
        assert_eq!(kept.classes, d.classes);

        assert_eq!(
            class_scope(&d, "cow"),
            Err(ScheduleError::UnknownClass("cow".into()))
        );
    }

    #[test]
    fn scope_on_ubiquitous_class_keeps_all_images() {
        let d = Dataset::from_images(
            vec![image("1", &["a", "b"]), image("2", &["a"])],
            Provenance::Voc,
        )
        .unwrap();
        assert_eq!(class_scope(&d, "a").unwrap().images.len(), 2);
    }

    fn random_dataset() -> impl Strategy<Value = Dataset> {
        (1usize..80, any::<u64>(), any::<bool>()).prop_map(|(n, seed, video)| {
            generate(&SyntheticDatasetConfig {
                video,
                ..SyntheticDatasetConfig::with_images(n, seed)
            })
        })
    }

    fn strategy() -> impl Strategy<Value = OrderingStrategy> {
        prop_oneof![
            any::<u64>().prop_map(|seed| OrderingStrategy::Shuffled { seed }),
            Just(OrderingStrategy::SortedByObjectCount),
            Just(OrderingStrategy::Original),
        ]
    }

    proptest! {
        #[test]
        fn ordering_is_permutation(d in random_dataset(), s in strategy()) {
            let mut order = order_images(&d, &s);
            order.sort();
            let ids: Vec<_> = d.images.iter().map(|im| im.image_id.clone()).collect();
            prop_assert_eq!(order, ids);
        }

        #[test]
        fn sorted_counts_nonincreasing(d in random_dataset()) {
            let order = order_images(&d, &OrderingStrategy::SortedByObjectCount);
            let counts: Vec<_> = order.iter().map(|id| d.image(id).unwrap().objects.len()).collect();
            prop_assert!(counts.windows(2).all(|w| w[0] >= w[1]));
        }

        #[test]
        fn batches_partition_order(d in random_dataset(), s in strategy(), size in 1usize..30) {
            let order = order_images(&d, &s);
            let batches = make_batches(&order, size);
            prop_assert_eq!(batches.len(), order.len().div_ceil(size));
            for (i, b) in batches.iter().enumerate() {
                prop_assert_eq!(b.index, i);
                if i + 1 < batches.len() {
                    prop_assert_eq!(b.image_ids.len(), size);
                }
            }
            let joined: Vec<String> = batches.into_iter().flat_map(|b| b.image_ids).collect();
            prop_assert_eq!(joined, order);
        }

        #[test]
        fn scope_idempotent(d in random_dataset()) {
            let s = class_scope(&d, "person").unwrap();
            prop_assert_eq!(class_scope(&s, "person").unwrap(), s.clone());
            prop_assert!(s.images.iter().all(|im| !im.objects.is_empty()));
        }
    }
}
