//! Landmark scheme definitions.
//!
//! A scheme fixes how many landmarks a model uses, which of them sit on
//! well-localized features versus sliding object contours, which index runs
//! form those contours, which landmark groups act as normalization anchors,
//! and which indices feed the evaluation metrics. Schemes are carried inside
//! the model container so a loaded model is self-describing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;

/// How a landmark can be localized by its detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LandmarkKind {
    /// Sits on a distinctive feature (eye corner, mouth corner); detections
    /// pin it down in both directions.
    Feature,
    /// Sits on an object contour (chin line, brow); detections only constrain
    /// it across the contour, so it is expanded into a dense sample group.
    Contour,
}

/// A maximal ordered run of landmark indices along one continuous contour.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContourRun {
    pub indices: Vec<usize>,
    /// Closed runs wrap around (lip outlines); open runs end at their first
    /// and last index (jawline).
    pub closed: bool,
}

/// One normalization anchor: the centroid of a group of landmark indices.
///
/// Single-element groups anchor directly on a landmark; multi-element groups
/// express derived points such as an eye center.
pub type AnchorGroup = Vec<usize>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkScheme {
    pub name: String,
    pub kinds: Vec<LandmarkKind>,
    pub contours: Vec<ContourRun>,
    pub anchors: Vec<AnchorGroup>,
    /// Landmark indices of the outer eye corners, used for error
    /// normalization.
    pub outer_eyes: (usize, usize),
    /// Indices dropped by the inner-subset metric (the face outline).
    pub outline: Vec<usize>,
}

impl LandmarkScheme {
    pub fn count(&self) -> usize {
        self.kinds.len()
    }

    pub fn kind(&self, i: usize) -> LandmarkKind {
        self.kinds[i]
    }

    /// Contour run containing landmark `i` together with its position in the
    /// run, if `i` is a contour landmark.
    pub fn contour_position(&self, i: usize) -> Option<(&ContourRun, usize)> {
        self.contours.iter().find_map(|run| {
            run.indices
                .iter()
                .position(|&j| j == i)
                .map(|pos| (run, pos))
        })
    }

    /// Anchor point coordinates for a shape laid out per this scheme.
    pub fn anchor_points(&self, points: &[Vec2]) -> Vec<Vec2> {
        self.anchors
            .iter()
            .map(|group| {
                let mut c = Vec2::zeros();
                for &i in group {
                    c += points[i];
                }
                c / group.len() as f64
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.count();
        if n == 0 {
            return Err(Error::EmptyInput("landmark scheme has no landmarks"));
        }
        if self.anchors.len() < 3 {
            return Err(Error::InvalidParameter(format!(
                "scheme '{}' needs at least 3 anchors, has {}",
                self.name,
                self.anchors.len()
            )));
        }
        for group in &self.anchors {
            if group.is_empty() {
                return Err(Error::EmptyInput("anchor group is empty"));
            }
            if group.iter().any(|&i| i >= n) {
                return Err(Error::InvalidParameter(format!(
                    "anchor index out of range in scheme '{}'",
                    self.name
                )));
            }
        }
        let mut seen = vec![false; n];
        for run in &self.contours {
            if run.indices.len() < 2 {
                return Err(Error::InvalidParameter(
                    "contour run needs at least 2 landmarks".into(),
                ));
            }
            for &i in &run.indices {
                if i >= n {
                    return Err(Error::InvalidParameter(
                        "contour index out of range".into(),
                    ));
                }
                if seen[i] {
                    return Err(Error::InvalidParameter(format!(
                        "landmark {i} appears in more than one contour run"
                    )));
                }
                seen[i] = true;
            }
        }
        for (i, &kind) in self.kinds.iter().enumerate() {
            if kind == LandmarkKind::Contour && !seen[i] {
                return Err(Error::InvalidParameter(format!(
                    "contour landmark {i} belongs to no contour run"
                )));
            }
        }
        if self.outer_eyes.0 >= n || self.outer_eyes.1 >= n || self.outer_eyes.0 == self.outer_eyes.1
        {
            return Err(Error::InvalidParameter(
                "outer eye corner indices invalid".into(),
            ));
        }
        if self.outline.iter().any(|&i| i >= n) {
            return Err(Error::InvalidParameter("outline index out of range".into()));
        }
        Ok(())
    }

    /// The 68-landmark frontal markup: jawline 0-16, brows 17-26, nose
    /// 27-35, eyes 36-47, mouth 48-67. Anchors are the two eye centers and
    /// the center of the nostril base.
    pub fn frontal_68() -> Self {
        let mut kinds = vec![LandmarkKind::Feature; 68];
        let mut contour_ranges: Vec<(Vec<usize>, bool)> = Vec::new();
        // Jawline and brows slide along edges.
        for i in 0..=16 {
            kinds[i] = LandmarkKind::Contour;
        }
        contour_ranges.push(((0..=16).collect(), false));
        for i in 17..=26 {
            kinds[i] = LandmarkKind::Contour;
        }
        contour_ranges.push(((17..=21).collect(), false));
        contour_ranges.push(((22..=26).collect(), false));
        // Lip outlines slide too, except the corners which are distinctive.
        for i in 48..=67 {
            kinds[i] = LandmarkKind::Contour;
        }
        kinds[48] = LandmarkKind::Feature;
        kinds[54] = LandmarkKind::Feature;
        kinds[60] = LandmarkKind::Feature;
        kinds[64] = LandmarkKind::Feature;
        contour_ranges.push(((49..=53).collect(), false));
        contour_ranges.push(((55..=59).collect(), false));
        contour_ranges.push(((61..=63).collect(), false));
        contour_ranges.push(((65..=67).collect(), false));
        let contours = contour_ranges
            .into_iter()
            .map(|(indices, closed)| ContourRun { indices, closed })
            .collect();
        LandmarkScheme {
            name: "frontal-68".into(),
            kinds,
            contours,
            anchors: vec![
                (36..=41).collect(), // left eye center
                (42..=47).collect(), // right eye center
                (31..=35).collect(), // nostril base center
            ],
            outer_eyes: (36, 45),
            outline: (0..=16).collect(),
        }
    }

    /// A 40-landmark near-profile markup: visible jaw/forehead outline 0-10,
    /// visible brow 11-15, nose ridge and nostril 16-23, visible eye 24-31,
    /// lips 32-39. Anchors are the visible eye center, the nostril center,
    /// and the lip tip.
    pub fn profile_40() -> Self {
        let mut kinds = vec![LandmarkKind::Feature; 40];
        for i in 0..=10 {
            kinds[i] = LandmarkKind::Contour;
        }
        for i in 11..=15 {
            kinds[i] = LandmarkKind::Contour;
        }
        for i in 16..=19 {
            kinds[i] = LandmarkKind::Contour;
        }
        for i in 33..=35 {
            kinds[i] = LandmarkKind::Contour;
        }
        for i in 37..=39 {
            kinds[i] = LandmarkKind::Contour;
        }
        let contours = vec![
            ContourRun {
                indices: (0..=10).collect(),
                closed: false,
            },
            ContourRun {
                indices: (11..=15).collect(),
                closed: false,
            },
            ContourRun {
                indices: (16..=19).collect(),
                closed: false,
            },
            ContourRun {
                indices: (33..=35).collect(),
                closed: false,
            },
            ContourRun {
                indices: (37..=39).collect(),
                closed: false,
            },
        ];
        LandmarkScheme {
            name: "profile-40".into(),
            kinds,
            contours,
            anchors: vec![
                (24..=31).collect(), // visible eye center
                (20..=23).collect(), // nostril center
                vec![32],            // lip tip
            ],
            // Only one eye is visible in profile; pair the eye corner with
            // the lip tip so the normalization span stays usable.
            outer_eyes: (24, 32),
            outline: (0..=10).collect(),
        }
    }

    /// Small synthetic scheme used by the generators and the test corpus:
    /// `n_feature` distinctive landmarks first (the first two act as the
    /// outer eye corners), then one open contour of `n_contour` landmarks
    /// which also serves as the removable outline.
    pub fn synthetic(n_feature: usize, n_contour: usize) -> Self {
        assert!(n_feature >= 4, "synthetic scheme needs at least 4 feature landmarks");
        let n = n_feature + n_contour;
        let mut kinds = vec![LandmarkKind::Feature; n];
        let mut contours = Vec::new();
        if n_contour > 0 {
            assert!(n_contour >= 2, "a contour needs at least 2 landmarks");
            for i in n_feature..n {
                kinds[i] = LandmarkKind::Contour;
            }
            contours.push(ContourRun {
                indices: (n_feature..n).collect(),
                closed: false,
            });
        }
        LandmarkScheme {
            name: format!("synthetic-{n}"),
            kinds,
            contours,
            anchors: vec![vec![0], vec![1], vec![2], vec![3]],
            outer_eyes: (0, 1),
            outline: (n_feature..n).collect(),
        }
    }
}
