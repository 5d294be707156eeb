//! Dense expansion of contour landmarks.
//!
//! A detector on a contour landmark only localizes across the contour, not
//! along it, so a detection may legitimately correspond to a point a little
//! to either side of the annotated landmark. To absorb that slack each
//! contour landmark is expanded into a group: the landmark itself plus
//! `samples_per_contour` extra points spread at uniform arc length along the
//! local contour curve between its two neighbors. Feature landmarks stay
//! singleton groups. Matching and reconstruction later pick whichever group
//! element explains a detection best.
//!
//! The local curve is a centripetal Catmull-Rom spline through the
//! neighboring landmarks; missing neighbors at open contour ends are
//! mirrored phantoms.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Mat2, Vec2};
use crate::scheme::{ContourRun, LandmarkKind, LandmarkScheme};
use crate::shape::pdm::fit_linear_model;
use crate::shape::{PointDistributionModel, Shape};

/// Subdivision count per spline segment when measuring arc length.
const ARC_STEPS: usize = 64;
/// Minimum knot spacing; coincident control points degrade to this instead
/// of dividing by zero, which makes the spline collapse towards linear.
const MIN_KNOT_STEP: f64 = 1e-6;

/// Dense elements belonging to one original landmark.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenseGroup {
    /// Index of the original landmark.
    pub parent: usize,
    /// Dense index of the original landmark itself.
    pub representative: usize,
    /// All dense indices of the group, representative first, then the arc
    /// samples in order along the contour.
    pub elements: Vec<usize>,
}

/// A point distribution model over the dense point set, with the bookkeeping
/// linking dense elements back to the original landmarks.
#[derive(Debug, Clone, PartialEq)]
pub struct DensePdm {
    pub model: PointDistributionModel,
    pub groups: Vec<DenseGroup>,
    pub sparse_count: usize,
}

impl DensePdm {
    pub fn dense_count(&self) -> usize {
        self.model.point_count()
    }

    /// Original landmark owning each dense element.
    pub fn parent_of(&self, dense_index: usize) -> usize {
        debug_assert!(dense_index < self.dense_count());
        // Groups are laid out in parent order with contiguous elements.
        self.groups
            .iter()
            .find(|g| g.elements.contains(&dense_index))
            .map(|g| g.parent)
            .expect("dense index outside every group")
    }

    /// Covariance used for match errors against landmark `i`: the spread of
    /// its representative element, shared by the whole group so all elements
    /// are judged in one metric.
    pub fn metric_cov(&self, sparse_index: usize) -> Mat2 {
        self.model.landmark_cov[self.groups[sparse_index].representative]
    }

    /// Extracts the original landmarks from a dense shape.
    pub fn sparse_from_dense(&self, dense: &Shape) -> Shape {
        Shape::new(
            self.groups
                .iter()
                .map(|g| dense.point(g.representative))
                .collect(),
        )
        .expect("representative extraction cannot fail on a valid dense shape")
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups.len() != self.sparse_count {
            return Err(Error::dim(
                self.sparse_count,
                self.groups.len(),
                "dense groups",
            ));
        }
        let mut seen = vec![false; self.dense_count()];
        for (i, g) in self.groups.iter().enumerate() {
            if g.parent != i {
                return Err(Error::InvalidParameter(
                    "dense groups must be in landmark order".into(),
                ));
            }
            if g.elements.is_empty() || g.elements[0] != g.representative {
                return Err(Error::InvalidParameter(
                    "group must list its representative first".into(),
                ));
            }
            for &e in &g.elements {
                if e >= self.dense_count() || seen[e] {
                    return Err(Error::InvalidParameter(
                        "dense element missing or claimed twice".into(),
                    ));
                }
                seen[e] = true;
            }
        }
        if seen.iter().any(|&s| !s) {
            return Err(Error::InvalidParameter(
                "dense element belongs to no group".into(),
            ));
        }
        Ok(())
    }
}

/// One dense sample as an affine combination of original landmarks.
type SampleWeights = Vec<(usize, f64)>;

fn neighbor(run: &ContourRun, pos: usize, offset: isize) -> Option<usize> {
    let len = run.indices.len() as isize;
    let target = pos as isize + offset;
    if run.closed {
        Some(run.indices[target.rem_euclid(len) as usize])
    } else if (0..len).contains(&target) {
        Some(run.indices[target as usize])
    } else {
        None
    }
}

/// Barry-Goldman evaluation of a Catmull-Rom segment between knots
/// `ts[1]..ts[2]`, applied to scalars so the same code yields both
/// coordinates and affine weights.
fn spline_scalar(ts: [f64; 4], vals: [f64; 4], t: f64) -> f64 {
    let lerp = |a: f64, b: f64, ta: f64, tb: f64| {
        ((tb - t) * a + (t - ta) * b) / (tb - ta)
    };
    let a1 = lerp(vals[0], vals[1], ts[0], ts[1]);
    let a2 = lerp(vals[1], vals[2], ts[1], ts[2]);
    let a3 = lerp(vals[2], vals[3], ts[2], ts[3]);
    let b1 = ((ts[2] - t) * a1 + (t - ts[0]) * a2) / (ts[2] - ts[0]);
    let b2 = ((ts[3] - t) * a2 + (t - ts[1]) * a3) / (ts[3] - ts[1]);
    ((ts[2] - t) * b1 + (t - ts[1]) * b2) / (ts[2] - ts[1])
}

fn centripetal_knots(p: [Vec2; 4]) -> [f64; 4] {
    let mut ts = [0.0; 4];
    for i in 1..4 {
        let step = (p[i] - p[i - 1]).norm().sqrt().max(MIN_KNOT_STEP);
        ts[i] = ts[i - 1] + step;
    }
    ts
}

/// Affine combinations (over original landmark indices) expressing the arc
/// samples of contour landmark `i`, evaluated for the given landmark
/// positions. Applying the weights to those same positions yields the
/// samples themselves.
fn contour_sample_weights(
    points: &[Vec2],
    scheme: &LandmarkScheme,
    i: usize,
    n_samples: usize,
) -> Result<Vec<SampleWeights>> {
    let (run, pos) = scheme
        .contour_position(i)
        .ok_or(Error::InvalidParameter(format!(
            "landmark {i} is not on any contour"
        )))?;

    // Five control slots around the landmark; each is an affine combination
    // of real landmarks so phantom mirrors fold back into real indices.
    let mut combos: Vec<SampleWeights> = Vec::with_capacity(5);
    let idx = |o: isize| neighbor(run, pos, o);
    let me = i;
    let prev = idx(-1);
    let next = idx(1);
    let (prev_c, next_c): (SampleWeights, SampleWeights) = match (prev, next) {
        (Some(p), Some(n)) => (vec![(p, 1.0)], vec![(n, 1.0)]),
        (None, Some(n)) => (vec![(me, 2.0), (n, -1.0)], vec![(n, 1.0)]),
        (Some(p), None) => (vec![(p, 1.0)], vec![(me, 2.0), (p, -1.0)]),
        (None, None) => {
            return Err(Error::InvalidParameter(
                "contour run too short to sample".into(),
            ))
        }
    };
    let outer = |two: Option<usize>, inner: &SampleWeights| -> SampleWeights {
        match two {
            Some(j) => vec![(j, 1.0)],
            // Mirror the landmark about the inner neighbor.
            None => {
                let mut w: SampleWeights = inner.iter().map(|&(j, v)| (j, 2.0 * v)).collect();
                w.push((me, -1.0));
                w
            }
        }
    };
    combos.push(outer(idx(-2), &prev_c));
    combos.push(prev_c);
    combos.push(vec![(me, 1.0)]);
    combos.push(next_c);
    combos.push(outer(idx(2), &combos[3].clone()));

    let resolve = |w: &SampleWeights| -> Vec2 {
        let mut p = Vec2::zeros();
        for &(j, v) in w {
            p += points[j] * v;
        }
        p
    };
    let ctrl: Vec<Vec2> = combos.iter().map(|w| resolve(w)).collect();

    // Two spline segments spanning prev -> me -> next, flattened to a
    // polyline for arc length. Each polyline vertex keeps its segment and
    // parameter so weights can be reconstructed exactly.
    struct Vertex {
        seg: usize,
        t: f64,
        point: Vec2,
        arc: f64,
    }
    let seg_controls = [
        [ctrl[0], ctrl[1], ctrl[2], ctrl[3]],
        [ctrl[1], ctrl[2], ctrl[3], ctrl[4]],
    ];
    let seg_knots = [
        centripetal_knots(seg_controls[0]),
        centripetal_knots(seg_controls[1]),
    ];
    let eval_seg = |seg: usize, t: f64| -> Vec2 {
        let ts = seg_knots[seg];
        let c = seg_controls[seg];
        Vec2::new(
            spline_scalar(ts, [c[0].x, c[1].x, c[2].x, c[3].x], t),
            spline_scalar(ts, [c[0].y, c[1].y, c[2].y, c[3].y], t),
        )
    };

    let mut verts: Vec<Vertex> = Vec::with_capacity(ARC_STEPS * 2 + 1);
    let mut arc = 0.0;
    for seg in 0..2 {
        let (t1, t2) = (seg_knots[seg][1], seg_knots[seg][2]);
        let start = if seg == 0 { 0 } else { 1 };
        for k in start..=ARC_STEPS {
            let t = t1 + (t2 - t1) * k as f64 / ARC_STEPS as f64;
            let point = eval_seg(seg, t);
            if let Some(last) = verts.last() {
                arc += (point - last.point).norm();
            }
            verts.push(Vertex { seg, t, point, arc });
        }
    }
    let total = verts.last().map(|v| v.arc).unwrap_or(0.0);

    // Weights of a spline point = spline applied to indicator scalars, then
    // pushed through the control-point combinations.
    let weights_at = |seg: usize, t: f64| -> SampleWeights {
        let ts = seg_knots[seg];
        let mut acc: Vec<(usize, f64)> = Vec::new();
        for slot in 0..4 {
            let mut ind = [0.0; 4];
            ind[slot] = 1.0;
            let w = spline_scalar(ts, ind, t);
            let combo_idx = if seg == 0 { slot } else { slot + 1 };
            for &(j, v) in &combos[combo_idx] {
                match acc.iter_mut().find(|(jj, _)| *jj == j) {
                    Some(entry) => entry.1 += w * v,
                    None => acc.push((j, w * v)),
                }
            }
        }
        acc
    };

    let mut out = Vec::with_capacity(n_samples);
    for k in 1..=n_samples {
        let target = total * k as f64 / (n_samples + 1) as f64;
        let hi = verts
            .iter()
            .position(|v| v.arc >= target)
            .unwrap_or(verts.len() - 1)
            .max(1);
        let (a, b) = (&verts[hi - 1], &verts[hi]);
        let span = b.arc - a.arc;
        let u = if span > 1e-12 {
            (target - a.arc) / span
        } else {
            0.0
        };
        let mut w: SampleWeights = Vec::new();
        let mut push = |list: SampleWeights, factor: f64| {
            for (j, v) in list {
                match w.iter_mut().find(|(jj, _)| *jj == j) {
                    Some(entry) => entry.1 += v * factor,
                    None => w.push((j, v * factor)),
                }
            }
        };
        push(weights_at(a.seg, a.t), 1.0 - u);
        push(weights_at(b.seg, b.t), u);
        out.push(w);
    }
    Ok(out)
}

/// Dense point layout for a scheme: group structure plus, for every dense
/// element, its affine weights over the original landmarks (evaluated at
/// `points`).
fn dense_layout(
    points: &[Vec2],
    scheme: &LandmarkScheme,
    n_samples: usize,
) -> Result<(Vec<DenseGroup>, Vec<SampleWeights>)> {
    let mut groups = Vec::with_capacity(scheme.count());
    let mut rows: Vec<SampleWeights> = Vec::new();
    for i in 0..scheme.count() {
        let rep = rows.len();
        rows.push(vec![(i, 1.0)]);
        let mut elements = vec![rep];
        if scheme.kind(i) == LandmarkKind::Contour && n_samples > 0 {
            for w in contour_sample_weights(points, scheme, i, n_samples)? {
                elements.push(rows.len());
                rows.push(w);
            }
        }
        groups.push(DenseGroup {
            parent: i,
            representative: rep,
            elements,
        });
    }
    Ok((groups, rows))
}

fn apply_weights(points: &[Vec2], rows: &[SampleWeights]) -> Vec<Vec2> {
    rows.iter()
        .map(|row| {
            let mut p = Vec2::zeros();
            for &(j, w) in row {
                p += points[j] * w;
            }
            p
        })
        .collect()
}

/// Densifies an already trained sparse model by freezing the arc sampling at
/// its mean shape. The dense basis is the linear push-forward of the sparse
/// basis, so deformation coefficients keep their meaning and dimension;
/// group elements inherit their parent landmark's covariance.
pub fn densify(
    model: &PointDistributionModel,
    scheme: &LandmarkScheme,
    n_samples: usize,
) -> Result<DensePdm> {
    if scheme.count() != model.point_count() {
        return Err(Error::dim(
            model.point_count(),
            scheme.count(),
            "scheme vs model size",
        ));
    }
    let (groups, rows) = dense_layout(model.mean.points(), scheme, n_samples)?;
    let nd = rows.len();

    let mean = Shape::new(apply_weights(model.mean.points(), &rows))?;

    let d = model.dims();
    let mut basis = DMatrix::zeros(nd * 2, d);
    for c in 0..d {
        for (k, row) in rows.iter().enumerate() {
            let mut bx = 0.0;
            let mut by = 0.0;
            for &(j, w) in row {
                bx += w * model.basis[(j * 2, c)];
                by += w * model.basis[(j * 2 + 1, c)];
            }
            basis[(k * 2, c)] = bx;
            basis[(k * 2 + 1, c)] = by;
        }
    }

    let mut landmark_cov = vec![Mat2::zeros(); nd];
    for g in &groups {
        for &e in &g.elements {
            landmark_cov[e] = model.landmark_cov[g.parent];
        }
    }

    let dense = DensePdm {
        model: PointDistributionModel {
            mean,
            basis,
            eigenvalues: model.eigenvalues.clone(),
            landmark_cov,
        },
        groups,
        sparse_count: model.point_count(),
    };
    dense.validate()?;
    Ok(dense)
}

/// Trains a dense model directly: every aligned training shape is expanded
/// with its own arc sampling, then the linear model is learned over the
/// dense points. Contour samples interpolate their neighborhood, so the
/// dense corpus is smoother than the sparse one and typically compresses
/// into fewer basis columns at the same variance fraction.
pub fn train_dense_pdm(
    aligned_shapes: &[Shape],
    scheme: &LandmarkScheme,
    n_samples: usize,
    variance_fraction: f64,
) -> Result<DensePdm> {
    if aligned_shapes.is_empty() {
        return Err(Error::EmptyInput("no shapes to densify"));
    }
    let n = scheme.count();
    let mut dense_shapes = Vec::with_capacity(aligned_shapes.len());
    let mut groups_out = None;
    for s in aligned_shapes {
        if s.len() != n {
            return Err(Error::dim(n, s.len(), "shape vs scheme size"));
        }
        let (groups, rows) = dense_layout(s.points(), scheme, n_samples)?;
        dense_shapes.push(Shape::new(apply_weights(s.points(), &rows))?);
        groups_out.get_or_insert(groups);
    }
    let groups = groups_out.expect("at least one shape");

    let nd = dense_shapes[0].len();
    let mut mean_flat = vec![0.0; nd * 2];
    for s in &dense_shapes {
        for (acc, v) in mean_flat.iter_mut().zip(s.to_flat()) {
            *acc += v;
        }
    }
    for v in &mut mean_flat {
        *v /= dense_shapes.len() as f64;
    }
    let mean = Shape::from_flat(&mean_flat)?;

    let model = fit_linear_model(&dense_shapes, &mean, variance_fraction)?;
    let dense = DensePdm {
        model,
        groups,
        sparse_count: n,
    };
    dense.validate()?;
    Ok(dense)
}
