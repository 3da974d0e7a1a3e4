//! Parametric tubular phantoms.
//!
//! A phantom centreline is a chain of straight and circular pieces built by a
//! turtle that starts at the origin heading along +z. The lumen is the set of
//! points within `radius` of the centreline, so the signed distance is exact:
//! distance to the nearest centreline piece minus the radius.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{Rotation3, Unit};

use super::{resample_points, ArcShape, DEFAULT_SPACING};
use crate::math;
use crate::{Error, Result, Vec3};

/// Shape family of a phantom.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum PhantomKind {
    Straight,
    /// Planar S: two bends of opposite sign.
    SCurve,
    /// Three bends in different planes.
    MultiBend,
}

/// Descriptor from which [`Lumen`]s are built.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PhantomSpec {
    pub kind: PhantomKind,
    /// Total centreline length in mm.
    pub length: f64,
    /// Lumen radius in mm.
    pub radius: f64,
    /// Radius of curvature of every bend in mm.
    pub bend_radius: f64,
    /// Largest curvature jump allowed along the centreline (1/mm).
    pub max_curvature: f64,
    /// Sample spacing of the stored centreline.
    pub spacing: f64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            kind: PhantomKind::Straight,
            length: 1000.0,
            radius: 25.0,
            bend_radius: 250.0,
            max_curvature: 0.01,
            spacing: DEFAULT_SPACING,
        }
    }
}

impl PhantomSpec {
    pub fn new(kind: PhantomKind) -> Self {
        Self { kind, ..Self::default() }
    }
}

/// One centreline primitive.
#[derive(Debug, Clone, PartialEq)]
pub enum Piece {
    Line {
        start: Vec3,
        dir: Vec3,
        length: f64,
    },
    /// `center + r (cos φ u + sin φ v)` for `φ ∈ [0, angle]`.
    Arc {
        center: Vec3,
        u: Vec3,
        v: Vec3,
        radius: f64,
        angle: f64,
    },
}

impl Piece {
    pub fn length(&self) -> f64 {
        match self {
            Piece::Line { length, .. } => *length,
            Piece::Arc { radius, angle, .. } => radius * angle,
        }
    }

    /// Point at arc length `s` from the start of the piece.
    pub fn point(&self, s: f64) -> Vec3 {
        match self {
            Piece::Line { start, dir, .. } => start + dir * s,
            Piece::Arc { center, u, v, radius, .. } => {
                let phi = s / radius;
                center + (u * math::cos(phi) + v * math::sin(phi)) * *radius
            }
        }
    }

    /// Unit tangent at arc length `s`.
    pub fn tangent(&self, s: f64) -> Vec3 {
        match self {
            Piece::Line { dir, .. } => *dir,
            Piece::Arc { u, v, radius, .. } => {
                let phi = s / radius;
                v * math::cos(phi) - u * math::sin(phi)
            }
        }
    }

    /// Unsigned distance from `p` to the piece and the closest point.
    pub fn closest(&self, p: &Vec3) -> (f64, Vec3) {
        match self {
            Piece::Line { start, dir, length } => {
                let h = (p - start).dot(dir).clamp(0.0, *length);
                let c = start + dir * h;
                ((p - c).norm(), c)
            }
            Piece::Arc { center, u, v, radius, angle } => {
                let q = p - center;
                let (x, y) = (q.dot(u), q.dot(v));
                let mut phi = math::atan2(y, x);
                if phi < -0.5 * (2.0 * PI - angle) {
                    phi += 2.0 * PI;
                }
                if (0.0..=*angle).contains(&phi) {
                    let rho = math::sqrt(x * x + y * y);
                    let c = if rho > 0.0 {
                        center + (u * x + v * y) * (*radius / rho)
                    } else {
                        center + u * *radius
                    };
                    ((p - c).norm(), c)
                } else {
                    let a = center + u * *radius;
                    let b = center + (u * math::cos(*angle) + v * math::sin(*angle)) * *radius;
                    let (da, db) = ((p - a).norm(), (p - b).norm());
                    if da <= db { (da, a) } else { (db, b) }
                }
            }
        }
    }

    /// Exit distance along a ray whose origin is inside the capsule of radius
    /// `r` around a line piece.
    fn capsule_exit(start: &Vec3, dir: &Vec3, length: f64, r: f64, o: &Vec3, d: &Vec3) -> f64 {
        let m = o - start;
        let dd = d.dot(dir);
        let md = m.dot(dir);
        let a = 1.0 - dd * dd;
        let b = m.dot(d) - md * dd;
        let c = m.norm_squared() - md * md - r * r;
        let t_cyl = if a > 1e-14 {
            let disc = (b * b - a * c).max(0.0);
            (-b + math::sqrt(disc)) / a
        } else {
            f64::INFINITY
        };
        let h = md + t_cyl * dd;
        if t_cyl.is_finite() && (0.0..=length).contains(&h) {
            return t_cyl;
        }
        let cap = if h < 0.0 { *start } else { start + dir * length };
        let m = o - cap;
        let b = m.dot(d);
        let c = m.norm_squared() - r * r;
        let disc = (b * b - c).max(0.0);
        -b + math::sqrt(disc)
    }
}

/// A tubular lumen of constant radius.
#[derive(Debug, Clone, PartialEq)]
pub struct Lumen {
    pieces: Vec<Piece>,
    starts: Vec<f64>,
    radius: f64,
    centerline: ArcShape,
    max_curvature_jump: f64,
}

enum Move {
    Straight(f64),
    /// Bend of `angle` rad, bending direction rolled by `roll` rad about the tangent.
    Turn { angle: f64, roll: f64 },
}

/// Creates the lumen described by `spec`.
pub fn make_phantom(spec: &PhantomSpec) -> Result<Lumen> {
    Lumen::from_spec(spec)
}

impl Lumen {
    pub fn from_spec(spec: &PhantomSpec) -> Result<Self> {
        if !(spec.radius > 0.0) {
            return Err(Error::Config(format!("phantom radius must be positive, got {}", spec.radius)));
        }
        if !(spec.length > 0.0) {
            return Err(Error::Config(format!("phantom length must be positive, got {}", spec.length)));
        }
        if !(spec.spacing > 0.0) {
            return Err(Error::Config(format!("phantom spacing must be positive, got {}", spec.spacing)));
        }
        let bend = spec.bend_radius;
        let deg = PI / 180.0;
        let fixed: Vec<Move> = match spec.kind {
            PhantomKind::Straight => Vec::new(),
            PhantomKind::SCurve => alloc::vec![
                Move::Straight(200.0),
                Move::Turn { angle: 60.0 * deg, roll: 0.0 },
                Move::Straight(100.0),
                Move::Turn { angle: 60.0 * deg, roll: PI },
            ],
            PhantomKind::MultiBend => alloc::vec![
                Move::Straight(120.0),
                Move::Turn { angle: 45.0 * deg, roll: 0.0 },
                Move::Straight(60.0),
                Move::Turn { angle: 50.0 * deg, roll: 90.0 * deg },
                Move::Straight(60.0),
                Move::Turn { angle: 40.0 * deg, roll: 210.0 * deg },
            ],
        };
        if spec.kind != PhantomKind::Straight {
            if !(bend > 0.0) {
                return Err(Error::Config(format!("bend radius must be positive, got {bend}")));
            }
            if 1.0 / bend > spec.max_curvature {
                return Err(Error::Config(format!(
                    "bend curvature {} exceeds the bound {}",
                    1.0 / bend,
                    spec.max_curvature
                )));
            }
            if bend <= spec.radius {
                return Err(Error::Config("bend radius must exceed the lumen radius".into()));
            }
        }
        let used: f64 = fixed
            .iter()
            .map(|m| match m {
                Move::Straight(l) => *l,
                Move::Turn { angle, .. } => angle * bend,
            })
            .sum();
        let tail = spec.length - used;
        if tail < 2.0 * spec.radius {
            return Err(Error::Config(format!(
                "phantom length {} is too short for its bends ({used} mm)",
                spec.length
            )));
        }
        let mut moves = fixed;
        moves.push(Move::Straight(tail));

        let mut pos = Vec3::zeros();
        let mut frame = Rotation3::identity();
        let mut pieces = Vec::with_capacity(moves.len());
        for m in &moves {
            let t = frame * Vec3::z();
            match *m {
                Move::Straight(length) => {
                    pieces.push(Piece::Line { start: pos, dir: t, length });
                    pos += t * length;
                }
                Move::Turn { angle, roll } => {
                    let d = frame * Vec3::new(math::cos(roll), math::sin(roll), 0.0);
                    let center = pos + d * bend;
                    pieces.push(Piece::Arc { center, u: -d, v: t, radius: bend, angle });
                    let axis = Unit::new_normalize(t.cross(&d));
                    frame = Rotation3::from_axis_angle(&axis, angle) * frame;
                    pos = center + (-d * math::cos(angle) + t * math::sin(angle)) * bend;
                }
            }
        }
        Self::from_pieces(pieces, spec.radius, spec.spacing)
    }

    /// Builds a lumen from explicit pieces.
    pub fn from_pieces(pieces: Vec<Piece>, radius: f64, spacing: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Config(format!("lumen radius must be positive, got {radius}")));
        }
        if pieces.is_empty() || pieces.iter().map(Piece::length).sum::<f64>() <= 0.0 {
            return Err(Error::Config("centreline length must be positive".into()));
        }
        let mut starts = Vec::with_capacity(pieces.len());
        let mut acc = 0.0;
        let mut fine = Vec::new();
        let step = 0.25;
        let mut jump: f64 = 0.0;
        let mut prev_k = 0.0;
        for p in &pieces {
            starts.push(acc);
            let len = p.length();
            let n = math::ceil(len / step).max(1.0) as usize;
            let first = if fine.is_empty() { 0 } else { 1 };
            for i in first..=n {
                fine.push(p.point(len * i as f64 / n as f64));
            }
            let k = match p {
                Piece::Line { .. } => 0.0,
                Piece::Arc { radius, .. } => 1.0 / radius,
            };
            jump = jump.max((k - prev_k).abs());
            prev_k = k;
            acc += len;
        }
        let centerline = resample_points(&fine, spacing)?;
        Ok(Self { pieces, starts, radius, centerline, max_curvature_jump: jump })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn centerline(&self) -> &ArcShape {
        &self.centerline
    }

    /// Centreline length in mm.
    pub fn length(&self) -> f64 {
        self.starts.last().copied().unwrap_or(0.0) + self.pieces.last().map_or(0.0, Piece::length)
    }

    /// Largest curvature discontinuity along the centreline.
    pub fn max_curvature_jump(&self) -> f64 {
        self.max_curvature_jump
    }

    /// Signed distance to the wall: negative inside, zero on the wall.
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.closest_centerline(p).0 - self.radius
    }

    /// Distance to the centreline and the closest centreline point.
    pub fn closest_centerline(&self, p: &Vec3) -> (f64, Vec3) {
        let mut best = (f64::INFINITY, Vec3::zeros());
        for piece in &self.pieces {
            let c = piece.closest(p);
            if c.0 < best.0 {
                best = c;
            }
        }
        best
    }

    /// Moves `p` radially so that it lies at least `margin` inside the wall.
    pub fn project_inside(&self, p: &Vec3, margin: f64) -> Vec3 {
        let (d, c) = self.closest_centerline(p);
        let limit = (self.radius - margin).max(0.0);
        if d <= limit || d == 0.0 {
            *p
        } else {
            c + (p - c) * (limit / d)
        }
    }

    /// Centreline point and frame at arc length `s` (clamped to the lumen).
    ///
    /// The frame's z column is the tangent; x and y are carried along by the
    /// bends so the frame is continuous.
    pub fn frame_at(&self, s: f64) -> (Vec3, Rotation3<f64>) {
        let s = s.clamp(0.0, self.length());
        let mut frame = Rotation3::identity();
        for (piece, &start) in self.pieces.iter().zip(&self.starts) {
            let len = piece.length();
            let local = (s - start).min(len);
            let t0 = piece.tangent(0.0);
            let t1 = piece.tangent(local);
            let turn = super::align_rotation(&t0, &t1);
            if s <= start + len {
                return (piece.point(local), turn * frame);
            }
            frame = turn * frame;
        }
        let last = self.pieces.last().expect("non-empty");
        (last.point(last.length()), frame)
    }

    /// Wall point at arc length `s`, angle `theta` around the tangent.
    pub fn wall_point(&self, s: f64, theta: f64) -> Vec3 {
        let (c, r) = self.frame_at(s);
        c + r * Vec3::new(math::cos(theta), math::sin(theta), 0.0) * self.radius
    }

    /// Distance along the unit ray `(origin, dir)` to the first wall hit.
    ///
    /// Inside a straight piece the capsule exit is solved in closed form; in
    /// bends the ray is sphere-marched on the exact signed distance.
    pub fn cast_ray(&self, origin: &Vec3, dir: &Vec3) -> Result<f64> {
        const HIT: f64 = 1e-7;
        if self.signed_distance(origin) >= 0.0 {
            return Err(Error::Render("ray origin is outside the lumen".into()));
        }
        let r = self.radius;
        let mut t = 0.0;
        for _ in 0..4096 {
            let p = origin + dir * t;
            let mut jump: f64 = -1.0;
            let mut sdf = f64::INFINITY;
            for piece in &self.pieces {
                let (d, _) = piece.closest(&p);
                sdf = sdf.min(d - r);
                if let Piece::Line { start, dir: axis, length } = piece {
                    if d < r - HIT {
                        jump = jump.max(Piece::capsule_exit(start, axis, *length, r, &p, dir));
                    }
                }
            }
            if sdf >= -HIT {
                return Ok(t);
            }
            if jump > 0.0 {
                t += jump;
                let q = origin + dir * t;
                if self.signed_distance(&q) >= -HIT {
                    return Ok(t);
                }
            } else {
                t += -sdf;
            }
        }
        Ok(t)
    }
}
