//! The geometric cone over a finite metric space: truncated cone distances,
//! geodesics through all four structural cases, the minimal radius along a
//! geodesic, and the discretized action of a sampled cone curve.
//!
//! A cone point `[x, r]` pairs a base point with a radius `r >= 0`; under
//! the 2-homogeneous marginal map the radius `r` corresponds to the Dirac
//! mass `r^2`. All radius-zero points are identified with a single vertex.
//!
//! Distances, minimal radii and actions are pure functions of immutable
//! values. Evaluating a rotational geodesic may materialize interpolated
//! base points, so it borrows the space exclusively.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::space::FiniteMetricSpace;
use crate::VERTEX_EPS;

/// Sentinel base index carried by the vertex.
const VERTEX_X: usize = usize::MAX;

/// A point `[x, r]` of the geometric cone. Radii below `1e-15` are
/// canonicalized to the vertex, whose equality ignores the base point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConePoint {
    x: usize,
    r: f64,
}

impl ConePoint {
    /// Builds `[x, r]`, canonicalizing tiny radii to the vertex.
    pub fn new(x: usize, r: f64) -> Self {
        assert!(r >= 0.0 && r.is_finite(), "cone radius must be nonnegative");
        if r < VERTEX_EPS {
            ConePoint { x: VERTEX_X, r: 0.0 }
        } else {
            ConePoint { x, r }
        }
    }

    /// The cone vertex (all radius-zero points identified).
    pub fn vertex() -> Self {
        ConePoint { x: VERTEX_X, r: 0.0 }
    }

    pub fn is_vertex(&self) -> bool {
        self.r == 0.0
    }

    /// Base-point index; `None` for the vertex.
    pub fn x(&self) -> Option<usize> {
        if self.is_vertex() {
            None
        } else {
            Some(self.x)
        }
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    /// The Dirac mass `r^2` associated with this cone point.
    pub fn mass(&self) -> f64 {
        self.r * self.r
    }
}

/// Base distance between the underlying points, zero when either is the
/// vertex (the radius factor kills the angular term there anyway).
fn base_distance(space: &FiniteMetricSpace, y0: &ConePoint, y1: &ConePoint) -> f64 {
    match (y0.x(), y1.x()) {
        (Some(x0), Some(x1)) => space.dist(x0, x1),
        _ => 0.0,
    }
}

/// Truncated cone distance, sine form:
/// `(|r-s|^2 + 4 r s sin^2((d ∧ a)/2))^(1/2)`.
///
/// `cutoff` must lie in `(0, pi]`; the canonical cone distance uses `pi`,
/// the Hellinger-Kantorovich cost uses `pi/2`.
pub fn cone_distance(
    space: &FiniteMetricSpace,
    y0: &ConePoint,
    y1: &ConePoint,
    cutoff: f64,
) -> f64 {
    assert!(
        cutoff > 0.0 && cutoff <= PI,
        "cone distance cutoff must lie in (0, pi]"
    );
    let (r, s) = (y0.r(), y1.r());
    let d = base_distance(space, y0, y1).min(cutoff);
    let half = (d / 2.0).sin();
    ((r - s) * (r - s) + 4.0 * r * s * half * half).sqrt()
}

/// Truncated cone distance, cosine form:
/// `(r^2 + s^2 - 2 r s cos(d ∧ a))^(1/2)`.
///
/// Algebraically identical to [`cone_distance`]; kept as an independent
/// code path so the two routes can be checked against each other.
pub fn cone_distance_cosine_form(
    space: &FiniteMetricSpace,
    y0: &ConePoint,
    y1: &ConePoint,
    cutoff: f64,
) -> f64 {
    assert!(
        cutoff > 0.0 && cutoff <= PI,
        "cone distance cutoff must lie in (0, pi]"
    );
    let (r, s) = (y0.r(), y1.r());
    let d = base_distance(space, y0, y1).min(cutoff);
    (r * r + s * s - 2.0 * r * s * d.cos()).max(0.0).sqrt()
}

/// A constant-speed geodesic of the cone under the canonical cutoff `pi`.
#[derive(Debug, Clone)]
pub enum ConeGeodesic {
    /// Equal endpoints.
    Constant { point: ConePoint },
    /// One endpoint is the vertex: the radius moves linearly at a fixed
    /// base point.
    Radial { x: usize, r0: f64, r1: f64 },
    /// Base points at distance `>= pi`: shrink to the vertex at `x0`, then
    /// grow at `x1`; the switch happens at `t = r0 / (r0 + r1)`.
    ThroughVertex {
        x0: usize,
        x1: usize,
        r0: f64,
        r1: f64,
        switch_time: f64,
    },
    /// Base points at distance `d < pi`, both radii positive: the radius
    /// and the angle along the underlying geodesic follow the rotational
    /// closed form.
    Rotational {
        x0: usize,
        x1: usize,
        r0: f64,
        r1: f64,
        d: f64,
    },
}

impl ConeGeodesic {
    pub fn endpoints(&self) -> (ConePoint, ConePoint) {
        match *self {
            ConeGeodesic::Constant { point } => (point, point),
            ConeGeodesic::Radial { x, r0, r1 } => {
                (ConePoint::new(x, r0), ConePoint::new(x, r1))
            }
            ConeGeodesic::ThroughVertex { x0, x1, r0, r1, .. } => {
                (ConePoint::new(x0, r0), ConePoint::new(x1, r1))
            }
            ConeGeodesic::Rotational { x0, x1, r0, r1, .. } => {
                (ConePoint::new(x0, r0), ConePoint::new(x1, r1))
            }
        }
    }

    /// The switch time of the two-phase case, if any.
    pub fn switch_time(&self) -> Option<f64> {
        match *self {
            ConeGeodesic::ThroughVertex { switch_time, .. } => Some(switch_time),
            _ => None,
        }
    }

    /// Radius at time `t`, computed without touching the space; cheap
    /// enough for dense scans.
    pub fn radius_at(&self, t: f64) -> f64 {
        match *self {
            ConeGeodesic::Constant { point } => point.r(),
            ConeGeodesic::Radial { r0, r1, .. } => (1.0 - t) * r0 + t * r1,
            ConeGeodesic::ThroughVertex {
                r0, r1, switch_time, ..
            } => {
                if t <= switch_time {
                    r0 - (r0 + r1) * t
                } else {
                    (r0 + r1) * t - r0
                }
            }
            ConeGeodesic::Rotational { r0, r1, d, .. } => {
                let r2 = (1.0 - t) * (1.0 - t) * r0 * r0
                    + t * t * r1 * r1
                    + 2.0 * t * (1.0 - t) * r0 * r1 * d.cos();
                r2.max(0.0).sqrt()
            }
        }
    }

    /// Evaluates the geodesic at `t` in `[0, 1]`. The rotational case may
    /// append interpolated base points to the space.
    pub fn eval(&self, space: &mut FiniteMetricSpace, t: f64) -> Result<ConePoint> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidParameter(format!(
                "curve parameter {t} outside [0, 1]"
            )));
        }
        let r = self.radius_at(t);
        match *self {
            ConeGeodesic::Constant { point } => Ok(point),
            ConeGeodesic::Radial { x, .. } => Ok(ConePoint::new(x, r)),
            ConeGeodesic::ThroughVertex {
                x0, x1, switch_time, ..
            } => {
                if t <= switch_time {
                    Ok(ConePoint::new(x0, r))
                } else {
                    Ok(ConePoint::new(x1, r))
                }
            }
            ConeGeodesic::Rotational { x0, x1, r0, r1, d } => {
                if r < VERTEX_EPS {
                    return Ok(ConePoint::vertex());
                }
                if d == 0.0 {
                    return Ok(ConePoint::new(x0, r));
                }
                // Clamp the ratio before acos: floating-point drift pushes
                // it past +/-1 near the endpoints.
                let ratio = (((1.0 - t) * r0 + t * r1 * d.cos()) / r).clamp(-1.0, 1.0);
                let theta = ratio.acos();
                let x = space.geodesic_point(x0, x1, (theta / d).clamp(0.0, 1.0))?;
                Ok(ConePoint::new(x, r))
            }
        }
    }

    /// Samples the geodesic at times `0, 1/n, ..., 1`.
    pub fn sample(&self, space: &mut FiniteMetricSpace, n: usize) -> Result<Vec<ConePoint>> {
        (0..=n)
            .map(|i| self.eval(space, i as f64 / n as f64))
            .collect()
    }
}

/// The constant-speed geodesic between two cone points for the canonical
/// cutoff `pi`. Case selection: equal endpoints are constant; one vertex
/// endpoint gives a radial segment; base distance `>= pi` passes through
/// the vertex with switch time `r0 / (r0 + r1)`; otherwise the rotational
/// closed form applies.
pub fn cone_geodesic(
    space: &FiniteMetricSpace,
    y0: &ConePoint,
    y1: &ConePoint,
) -> Result<ConeGeodesic> {
    if y0 == y1 {
        return Ok(ConeGeodesic::Constant { point: *y0 });
    }
    match (y0.x(), y1.x()) {
        (None, None) => Ok(ConeGeodesic::Constant {
            point: ConePoint::vertex(),
        }),
        (None, Some(x1)) => Ok(ConeGeodesic::Radial {
            x: x1,
            r0: 0.0,
            r1: y1.r(),
        }),
        (Some(x0), None) => Ok(ConeGeodesic::Radial {
            x: x0,
            r0: y0.r(),
            r1: 0.0,
        }),
        (Some(x0), Some(x1)) => {
            let d = space.dist(x0, x1);
            let (r0, r1) = (y0.r(), y1.r());
            if d >= PI {
                Ok(ConeGeodesic::ThroughVertex {
                    x0,
                    x1,
                    r0,
                    r1,
                    switch_time: r0 / (r0 + r1),
                })
            } else {
                // The rotational case needs spatial interpolation, which
                // the graph backend provides only between base points.
                if space.backend() == crate::space::Backend::Graph
                    && (x0 >= space.base_len() || x1 >= space.base_len())
                    && x0 != x1
                {
                    return Err(Error::BackendMissing(
                        "graph interpolation requires base (non-virtual) endpoints".into(),
                    ));
                }
                Ok(ConeGeodesic::Rotational { x0, x1, r0, r1, d })
            }
        }
    }
}

/// Where the radius of the geodesic joining `y0` to `y1` attains its
/// minimum, and the minimal value, in closed form.
///
/// Requires both radii positive and base distance `d < pi`. The constant
/// case `y0 == y1` reports `(0, r0)` by convention.
pub fn min_radius(
    space: &FiniteMetricSpace,
    y0: &ConePoint,
    y1: &ConePoint,
) -> Result<(f64, f64)> {
    let (r0, r1) = (y0.r(), y1.r());
    if r0 * r1 <= 0.0 {
        return Err(Error::Domain(
            "minimal radius requires both radii positive".into(),
        ));
    }
    if y0 == y1 {
        return Ok((0.0, r0));
    }
    let d = base_distance(space, y0, y1);
    if d >= PI {
        return Err(Error::Domain(format!(
            "minimal radius requires base distance < pi, got {d}"
        )));
    }
    let c = d.cos();
    if c < (r0 / r1).min(r1 / r0) {
        let dc2 = r0 * r0 + r1 * r1 - 2.0 * r0 * r1 * c;
        let t_min = (r0 * r0 - r0 * r1 * c) / dc2;
        let r_min = r0 * r1 * d.sin() / dc2.sqrt();
        Ok((t_min, r_min))
    } else if r0 <= r1 {
        Ok((0.0, r0))
    } else {
        Ok((1.0, r1))
    }
}

/// The piecewise-geodesic discretization of the 2-action of a cone curve
/// sampled at times `0, 1/N, ..., 1`: returns `N * sum_i d_C^2(y_{i-1}, y_i)`
/// under the canonical cutoff. For samples of an exact geodesic this equals
/// the squared cone distance of the endpoints at every `N`.
pub fn discrete_action(space: &FiniteMetricSpace, curve: &[ConePoint]) -> Result<f64> {
    if curve.is_empty() {
        return Err(Error::EmptySequence);
    }
    if curve.len() < 2 {
        return Err(Error::InvalidParameter(
            "discrete action needs at least two samples".into(),
        ));
    }
    let n = curve.len() - 1;
    let sum: f64 = curve
        .windows(2)
        .map(|w| {
            let d = cone_distance(space, &w[0], &w[1], PI);
            d * d
        })
        .sum();
    Ok(n as f64 * sum)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn segment(d: f64) -> FiniteMetricSpace {
        FiniteMetricSpace::build_euclidean(vec![vec![0.0], vec![d]]).unwrap()
    }

    const FRAC_PI_2: f64 = std::f64::consts::FRAC_PI_2;

    #[test]
    fn distance_right_angle_unit_radii() {
        // d = pi/2 at cutoff pi/2: sqrt(1 + 1 - 0) = sqrt(2).
        let s = segment(FRAC_PI_2);
        let y0 = ConePoint::new(0, 1.0);
        let y1 = ConePoint::new(1, 1.0);
        let d = cone_distance(&s, &y0, &y1, FRAC_PI_2);
        assert!((d - 2.0_f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn distance_identity() {
        let s = segment(1.0);
        let y = ConePoint::new(0, 0.7);
        assert_eq!(cone_distance(&s, &y, &y, PI), 0.0);
    }

    #[test]
    fn distance_from_vertex_is_radius() {
        let s = segment(1.0);
        let y = ConePoint::new(1, 0.3);
        for cutoff in [0.1, FRAC_PI_2, PI] {
            assert_eq!(cone_distance(&s, &ConePoint::vertex(), &y, cutoff), 0.3);
        }
    }

    #[test]
    fn cosine_and_sine_forms_agree() {
        let s = segment(2.0);
        let y0 = ConePoint::new(0, 1.3);
        let y1 = ConePoint::new(1, 0.4);
        for cutoff in [0.5, 1.0, FRAC_PI_2, 3.0, PI] {
            let a = cone_distance(&s, &y0, &y1, cutoff);
            let b = cone_distance_cosine_form(&s, &y0, &y1, cutoff);
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn truncation_is_monotone_in_cutoff() {
        let s = segment(2.5);
        let y0 = ConePoint::new(0, 1.0);
        let y1 = ConePoint::new(1, 2.0);
        assert!(
            cone_distance(&s, &y0, &y1, FRAC_PI_2) <= cone_distance(&s, &y0, &y1, PI)
        );
    }

    #[test]
    fn radial_geodesic_from_vertex() {
        let mut s = segment(1.0);
        let y1 = ConePoint::new(1, 1.0);
        let geo = cone_geodesic(&s, &ConePoint::vertex(), &y1).unwrap();
        for t in [0.0, 0.25, 0.5, 1.0] {
            let p = geo.eval(&mut s, t).unwrap();
            assert!((p.r() - t).abs() < 1e-15);
        }
        assert_eq!(geo.eval(&mut s, 1.0).unwrap(), y1);
    }

    #[test]
    fn rotational_midpoint_radius() {
        // r0 = r1 = 1 at base distance pi/2: radius 1/sqrt(2) at t = 1/2.
        let mut s = segment(FRAC_PI_2);
        let geo =
            cone_geodesic(&s, &ConePoint::new(0, 1.0), &ConePoint::new(1, 1.0)).unwrap();
        let mid = geo.eval(&mut s, 0.5).unwrap();
        assert!((mid.r() - 1.0 / 2.0_f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn far_apart_passes_through_vertex() {
        let mut s = segment(PI + 0.5);
        let geo =
            cone_geodesic(&s, &ConePoint::new(0, 1.0), &ConePoint::new(1, 1.0)).unwrap();
        assert_eq!(geo.switch_time(), Some(0.5));
        assert!(geo.eval(&mut s, 0.5).unwrap().is_vertex());
    }

    #[test]
    fn constant_speed_on_a_grid() {
        let cases = [
            (0.4, 1.0, 1.0),
            (FRAC_PI_2, 1.0, 0.3),
            (3.0, 0.5, 2.0),
            (PI + 1.0, 1.0, 1.0),
        ];
        for &(d, r0, r1) in &cases {
            let mut s = segment(d);
            let y0 = ConePoint::new(0, r0);
            let y1 = ConePoint::new(1, r1);
            let geo = cone_geodesic(&s, &y0, &y1).unwrap();
            let total = cone_distance(&s, &y0, &y1, PI);
            let grid: Vec<f64> = (0..=8).map(|k| k as f64 / 8.0).collect();
            for &a in &grid {
                for &b in &grid {
                    let pa = geo.eval(&mut s, a).unwrap();
                    let pb = geo.eval(&mut s, b).unwrap();
                    let seg = cone_distance(&s, &pa, &pb, PI);
                    assert!(
                        (seg - (a - b).abs() * total).abs() <= 1e-9,
                        "constant speed fails at d={d}, ({a}, {b}): {seg} vs {}",
                        (a - b).abs() * total
                    );
                }
            }
        }
    }

    #[test]
    fn endpoints_are_reproduced() {
        let mut s = segment(1.2);
        let y0 = ConePoint::new(0, 0.8);
        let y1 = ConePoint::new(1, 1.7);
        let geo = cone_geodesic(&s, &y0, &y1).unwrap();
        assert_eq!(geo.eval(&mut s, 0.0).unwrap(), y0);
        assert_eq!(geo.eval(&mut s, 1.0).unwrap(), y1);
    }

    #[test]
    fn min_radius_symmetric_right_angle() {
        let s = segment(FRAC_PI_2);
        let (t, r) =
            min_radius(&s, &ConePoint::new(0, 1.0), &ConePoint::new(1, 1.0)).unwrap();
        assert!((t - 0.5).abs() < 1e-15);
        assert!((r - 1.0 / 2.0_f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn min_radius_boundary_branch() {
        // cos(d) >= r1/r0 puts the minimum at t = 1 with value r1.
        let s = segment(0.1);
        let (t, r) =
            min_radius(&s, &ConePoint::new(0, 2.0), &ConePoint::new(1, 1.0)).unwrap();
        assert_eq!(t, 1.0);
        assert_eq!(r, 1.0);
    }

    #[test]
    fn min_radius_constant_convention() {
        let s = segment(1.0);
        let y = ConePoint::new(0, 0.4);
        assert_eq!(min_radius(&s, &y, &y).unwrap(), (0.0, 0.4));
    }

    #[test]
    fn min_radius_domain_errors() {
        let s = segment(PI + 0.1);
        let y0 = ConePoint::new(0, 1.0);
        let y1 = ConePoint::new(1, 1.0);
        assert!(min_radius(&s, &y0, &y1).is_err());
        assert!(min_radius(&s, &ConePoint::vertex(), &y1).is_err());
    }

    #[test]
    fn min_radius_matches_dense_scan() {
        let cases = [(1.0, 1.0, 1.0), (0.3, 2.0, 0.5), (2.8, 0.7, 1.5)];
        for &(d, r0, r1) in &cases {
            let s = segment(d);
            let y0 = ConePoint::new(0, r0);
            let y1 = ConePoint::new(1, r1);
            let (_, r_min) = min_radius(&s, &y0, &y1).unwrap();
            let geo = cone_geodesic(&s, &y0, &y1).unwrap();
            let mut scan = f64::INFINITY;
            for k in 0..=100_000 {
                scan = scan.min(geo.radius_at(k as f64 / 100_000.0));
            }
            assert!((scan - r_min).abs() < 1e-8, "scan {scan} vs closed form {r_min}");
        }
    }

    #[test]
    fn action_of_constant_curve_is_zero() {
        let s = segment(1.0);
        let y = ConePoint::new(0, 1.0);
        assert_eq!(discrete_action(&s, &[y, y, y]).unwrap(), 0.0);
    }

    #[test]
    fn action_of_geodesic_samples_is_squared_distance() {
        for &(d, r0, r1) in &[(1.0, 1.0, 1.0), (2.0, 0.5, 1.5), (PI + 0.3, 1.0, 2.0)] {
            let mut s = segment(d);
            let y0 = ConePoint::new(0, r0);
            let y1 = ConePoint::new(1, r1);
            let geo = cone_geodesic(&s, &y0, &y1).unwrap();
            let dc = cone_distance(&s, &y0, &y1, PI);
            for n in [1, 2, 5, 16] {
                let samples = geo.sample(&mut s, n).unwrap();
                let action = discrete_action(&s, &samples).unwrap();
                assert!(
                    (action - dc * dc).abs() <= 1e-12 * (1.0 + dc * dc),
                    "n={n}: {action} vs {}",
                    dc * dc
                );
            }
        }
    }

    #[test]
    fn radial_curve_action_two_steps() {
        let s = segment(1.0);
        let curve = [
            ConePoint::vertex(),
            ConePoint::new(1, 0.5),
            ConePoint::new(1, 1.0),
        ];
        assert!((discrete_action(&s, &curve).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rotational_geodesic_needs_interpolable_endpoints() {
        let mut s =
            FiniteMetricSpace::build_graph_metric(&[(0, 1, 1.0), (1, 2, 1.0)], 3).unwrap();
        let virt = s.geodesic_point(0, 2, 0.25).unwrap();
        let y0 = ConePoint::new(virt, 1.0);
        let y1 = ConePoint::new(2, 1.0);
        assert!(matches!(
            cone_geodesic(&s, &y0, &y1),
            Err(Error::BackendMissing(_))
        ));
        // Base endpoints interpolate fine.
        assert!(cone_geodesic(&s, &ConePoint::new(0, 1.0), &y1).is_ok());
    }

    #[test]
    fn action_of_empty_curve_is_an_error() {
        let s = segment(1.0);
        assert!(matches!(
            discrete_action(&s, &[]).unwrap_err(),
            Error::EmptySequence
        ));
    }
}
