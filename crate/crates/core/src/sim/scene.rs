use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::Point3;
use crate::{Error, Result};

/// Rays closer than this to their origin do not count as hits.
const MIN_HIT: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Primitive {
    /// Axis-aligned box. Hit from outside by its faces and from inside by
    /// its walls, so a large box doubles as a room.
    Box { min: Point3, max: Point3 },
    /// `normal . x = offset`; the normal need not be unit.
    Plane { normal: Vector3<f64>, offset: f64 },
    /// Lateral surface of a finite cylinder standing on `base` along `axis`.
    Cylinder {
        base: Point3,
        axis: Vector3<f64>,
        radius: f64,
        height: f64,
    },
}

impl Primitive {
    fn validate(&self) -> Result<()> {
        let ok = match self {
            Primitive::Box { min, max } => {
                min.iter().chain(max.iter()).all(|v| v.is_finite())
                    && (max - min).iter().all(|&d| d > 0.0)
            }
            Primitive::Plane { normal, offset } => {
                normal.norm() > 0.0 && normal.iter().all(|v| v.is_finite()) && offset.is_finite()
            }
            Primitive::Cylinder {
                base,
                axis,
                radius,
                height,
            } => {
                base.iter().all(|v| v.is_finite())
                    && axis.norm() > 0.0
                    && axis.iter().all(|v| v.is_finite())
                    && *radius > 0.0
                    && height.is_finite()
                    && *height > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "degenerate scene primitive {self:?}"
            )))
        }
    }

    /// Smallest positive ray parameter at which `o + t d` meets the surface.
    pub fn intersect(&self, o: &Point3, d: &Vector3<f64>) -> Option<f64> {
        match self {
            Primitive::Box { min, max } => {
                let (mut near, mut far) = (f64::NEG_INFINITY, f64::INFINITY);
                for k in 0..3 {
                    if d[k] == 0.0 {
                        if o[k] < min[k] || o[k] > max[k] {
                            return None;
                        }
                        continue;
                    }
                    let (a, b) = ((min[k] - o[k]) / d[k], (max[k] - o[k]) / d[k]);
                    near = near.max(a.min(b));
                    far = far.min(a.max(b));
                }
                if near > far {
                    None
                } else if near > MIN_HIT {
                    Some(near)
                } else if far > MIN_HIT {
                    Some(far)
                } else {
                    None
                }
            }
            Primitive::Plane { normal, offset } => {
                let denom = normal.dot(d);
                if denom == 0.0 {
                    return None;
                }
                let t = (offset - normal.dot(o)) / denom;
                (t > MIN_HIT).then_some(t)
            }
            Primitive::Cylinder {
                base,
                axis,
                radius,
                height,
            } => {
                let a = axis.normalize();
                let w = o - base;
                let dp = d - a * d.dot(&a);
                let wp = w - a * w.dot(&a);
                let qa = dp.norm_squared();
                if qa == 0.0 {
                    return None;
                }
                let qb = 2.0 * dp.dot(&wp);
                let qc = wp.norm_squared() - radius * radius;
                let disc = qb * qb - 4.0 * qa * qc;
                if disc < 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                // Numerically stable pair of roots.
                let q = -0.5 * (qb + qb.signum() * s);
                let (mut t0, mut t1) = (q / qa, if q != 0.0 { qc / q } else { -q / qa });
                if t0 > t1 {
                    std::mem::swap(&mut t0, &mut t1);
                }
                [t0, t1].into_iter().find(|&t| {
                    let h = (w + d * t).dot(&a);
                    t > MIN_HIT && (0.0..=*height).contains(&h)
                })
            }
        }
    }
}

/// A static world made of analytic primitives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub primitives: Vec<Primitive>,
}

/// Parameters of the ring corridor used by the loop trajectory: a rounded
/// rectangle with straight sides `length` and `width` and corner radius
/// `corner_radius`, walled off `half_width` to either side of the centerline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopCourse {
    pub length: f64,
    pub width: f64,
    pub corner_radius: f64,
    pub half_width: f64,
}

impl Default for LoopCourse {
    fn default() -> Self {
        Self {
            length: 60.0,
            width: 20.0,
            corner_radius: 4.0,
            half_width: 2.0,
        }
    }
}

impl LoopCourse {
    pub fn perimeter(&self) -> f64 {
        2.0 * (self.length + self.width) + 2.0 * std::f64::consts::PI * self.corner_radius
    }
}

const CEILING: f64 = 3.0;

impl SceneSpec {
    pub fn new(primitives: Vec<Primitive>) -> Result<Self> {
        if primitives.is_empty() {
            return Err(Error::invalid("scene has no primitives"));
        }
        for p in &primitives {
            p.validate()?;
        }
        Ok(Self { primitives })
    }

    /// Distance along the unit ray `d` to the first surface.
    pub fn cast(&self, o: &Point3, d: &Vector3<f64>) -> Option<f64> {
        self.primitives
            .iter()
            .filter_map(|p| p.intersect(o, d))
            .min_by(f64::total_cmp)
    }

    /// Furnished room `[-5, 5] x [-4, 4] x [0, 3]`.
    pub fn room() -> Self {
        let mut p = vec![Primitive::Box {
            min: Point3::new(-5.0, -4.0, 0.0),
            max: Point3::new(5.0, 4.0, CEILING),
        }];
        p.push(Primitive::Box {
            min: Point3::new(1.5, 1.0, 0.0),
            max: Point3::new(3.0, 2.2, 1.1),
        });
        p.push(Primitive::Box {
            min: Point3::new(-4.0, -3.5, 0.0),
            max: Point3::new(-2.8, -1.5, 1.8),
        });
        p.push(Primitive::Box {
            min: Point3::new(-1.0, 2.8, 0.0),
            max: Point3::new(0.5, 4.0, 2.2),
        });
        p.push(cylinder(3.5, -2.5, 0.3));
        p.push(cylinder(-2.0, 1.5, 0.2));
        Self::new(p).expect("room preset is valid")
    }

    /// Straight corridor along +x from `x = -5` to `x = length + 5`, 4 m
    /// wide, with seeded clutter along both walls so no direction is
    /// degenerate.
    pub fn corridor(length: f64, seed: u64) -> Self {
        let (x0, x1) = (-5.0, length + 5.0);
        let mut p = vec![Primitive::Box {
            min: Point3::new(x0, -2.0, 0.0),
            max: Point3::new(x1, 2.0, CEILING),
        }];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = x0 + 1.0;
        while x < x1 - 1.0 {
            p.push(clutter(&mut rng, x, -2.0, 1.0));
            let x2 = x + rng.random_range(0.5..1.5);
            p.push(clutter(&mut rng, x2, 2.0, -1.0));
            x += rng.random_range(1.5..3.0);
        }
        Self::new(p).expect("corridor preset is valid")
    }

    /// Ring corridor around the loop course centerline, with clutter along
    /// both walls.
    pub fn loop_corridor(course: &LoopCourse, seed: u64) -> Self {
        let (r, hw) = (course.corner_radius, course.half_width);
        let outer_min = Point3::new(-r - hw, -r - hw, 0.0);
        let outer_max = Point3::new(course.length + r + hw, course.width + r + hw, CEILING);
        let inner_min = Point3::new(-r + hw, -r + hw, 0.0);
        let inner_max = Point3::new(course.length + r - hw, course.width + r - hw, CEILING);
        let mut p = vec![
            Primitive::Box {
                min: outer_min,
                max: outer_max,
            },
            Primitive::Box {
                min: inner_min,
                max: inner_max,
            },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Clutter on every wall: outer walls face inward, inner walls outward.
        let walls_along_x = [
            (outer_min.y, 1.0, outer_min.x, outer_max.x),
            (outer_max.y, -1.0, outer_min.x, outer_max.x),
            (inner_min.y, -1.0, inner_min.x, inner_max.x),
            (inner_max.y, 1.0, inner_min.x, inner_max.x),
        ];
        for (wall, side, lo, hi) in walls_along_x {
            let mut x = lo + 1.5;
            while x < hi - 1.5 {
                p.push(clutter(&mut rng, x, wall, side));
                x += rng.random_range(1.5..3.0);
            }
        }
        let walls_along_y = [
            (outer_min.x, 1.0, outer_min.y, outer_max.y),
            (outer_max.x, -1.0, outer_min.y, outer_max.y),
            (inner_min.x, -1.0, inner_min.y, inner_max.y),
            (inner_max.x, 1.0, inner_min.y, inner_max.y),
        ];
        for (wall, side, lo, hi) in walls_along_y {
            let mut y = lo + 1.5;
            while y < hi - 1.5 {
                p.push(clutter_x(&mut rng, wall, y, side));
                y += rng.random_range(1.5..3.0);
            }
        }
        Self::new(p).expect("loop preset is valid")
    }

    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        match name {
            "room" => Ok(Self::room()),
            "corridor" => Ok(Self::corridor(10.0, seed)),
            "loop" => Ok(Self::loop_corridor(&LoopCourse::default(), seed)),
            other => Err(Error::Config(format!("unknown scene preset {other:?}"))),
        }
    }
}

fn cylinder(x: f64, y: f64, radius: f64) -> Primitive {
    Primitive::Cylinder {
        base: Point3::new(x, y, 0.0),
        axis: Vector3::z(),
        radius,
        height: CEILING,
    }
}

/// A box or pillar against the wall `y = wall`; `side` points into the corridor.
fn clutter(rng: &mut ChaCha8Rng, x: f64, wall: f64, side: f64) -> Primitive {
    if rng.random_bool(0.3) {
        let r = rng.random_range(0.15..0.3);
        return cylinder(x, wall + side * (r + 0.05), r);
    }
    let depth = rng.random_range(0.2..0.7);
    let len = rng.random_range(0.4..1.2);
    let h = rng.random_range(0.5..2.5);
    let (y0, y1) = if side > 0.0 {
        (wall, wall + depth)
    } else {
        (wall - depth, wall)
    };
    Primitive::Box {
        min: Point3::new(x, y0, 0.0),
        max: Point3::new(x + len, y1, h),
    }
}

/// Same as [`clutter`] for a wall `x = wall`.
fn clutter_x(rng: &mut ChaCha8Rng, wall: f64, y: f64, side: f64) -> Primitive {
    match clutter(rng, y, wall, side) {
        Primitive::Box { min, max } => Primitive::Box {
            min: Point3::new(min.y, min.x, min.z),
            max: Point3::new(max.y, max.x, max.z),
        },
        Primitive::Cylinder {
            base,
            axis,
            radius,
            height,
        } => Primitive::Cylinder {
            base: Point3::new(base.y, base.x, base.z),
            axis,
            radius,
            height,
        },
        plane => plane,
    }
}
