use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{normal, SynthError};
use crate::imagecore::{canonicalize_labels, LabelMap, Raster8};

const PLACEMENT_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Disk,
    Ellipse,
    Polygon,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Texture {
    Flat,
    Noisy { sigma: f64 },
    Shaded,
}

/// Lognormal over the equivalent diameter in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormal {
    pub mu: f64,
    pub sigma: f64,
}

impl LogNormal {
    /// Median of the distribution, `exp(mu)`.
    pub fn median(&self) -> f64 {
        libm::exp(self.mu)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub particle_count: usize,
    pub shape: Shape,
    pub size_distribution: LogNormal,
    /// Truncation bounds for sampled diameters; default 4 and half the
    /// smaller canvas side.
    #[serde(default)]
    pub min_diameter: Option<f64>,
    #[serde(default)]
    pub max_diameter: Option<f64>,
    #[serde(default)]
    pub max_pairwise_iou: f64,
    #[serde(default = "default_texture")]
    pub texture: Texture,
    #[serde(default = "default_gray")]
    pub background_gray: u8,
    #[serde(default)]
    pub seed: u64,
}

fn default_texture() -> Texture {
    Texture::Flat
}

fn default_gray() -> u8 {
    90
}

impl SceneSpec {
    pub fn new(width: usize, height: usize, particle_count: usize, shape: Shape, mu: f64, sigma: f64, seed: u64) -> Self {
        Self {
            width,
            height,
            particle_count,
            shape,
            size_distribution: LogNormal { mu, sigma },
            min_diameter: None,
            max_diameter: None,
            max_pairwise_iou: 0.0,
            texture: Texture::Flat,
            background_gray: default_gray(),
            seed,
        }
    }

    fn diameter_bounds(&self) -> (f64, f64) {
        let cap = self.width.min(self.height) as f64 / 2.0;
        let lo = self.min_diameter.unwrap_or(4.0).max(4.0);
        let hi = self.max_diameter.unwrap_or(cap).min(cap);
        (lo, hi)
    }

    fn validate(&self) -> Result<(), SynthError> {
        let (lo, hi) = self.diameter_bounds();
        if self.width == 0 || self.height == 0 || lo > hi {
            return Err(SynthError::CanvasTooSmall);
        }
        if !(0.0..1.0).contains(&self.max_pairwise_iou) {
            return Err(SynthError::InvalidSpec("max_pairwise_iou must lie in [0, 1)"));
        }
        if !(self.size_distribution.sigma >= 0.0) {
            return Err(SynthError::InvalidSpec("size sigma must be non-negative"));
        }
        Ok(())
    }
}

/// Ground truth for one visible instance, indexed like the canonical ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleTruth {
    pub id: u32,
    /// Placement order of the particle that produced this region.
    pub source: usize,
    pub center_x: f64,
    pub center_y: f64,
    pub nominal_diameter: f64,
    pub touches_edge: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneTruth {
    #[serde(skip)]
    pub label_map: LabelMap,
    pub particles: Vec<ParticleTruth>,
    pub requested: usize,
    pub placed: usize,
}

#[derive(Debug, Clone)]
enum Geometry {
    Disk { diameter: u32 },
    Ellipse { semi_major: f64, semi_minor: f64, cos: f64, sin: f64 },
    Polygon { vertices: Vec<(f64, f64)> },
}

struct Particle {
    cx: i64,
    cy: i64,
    geometry: Geometry,
    nominal: f64,
}

impl Particle {
    fn extent(&self) -> i64 {
        match &self.geometry {
            Geometry::Disk { diameter } => *diameter as i64 / 2 + 1,
            Geometry::Ellipse { semi_major, .. } => semi_major.ceil() as i64 + 1,
            Geometry::Polygon { vertices } => {
                vertices.iter().map(|&(x, y)| x.abs().max(y.abs())).fold(0.0, f64::max).ceil() as i64 + 1
            }
        }
    }

    #[inline]
    fn contains(&self, dx: i64, dy: i64) -> bool {
        match &self.geometry {
            Geometry::Disk { diameter } => {
                let d = *diameter as i64;
                // centre sits on a pixel for odd diameters, between pixels for even
                let (ox, oy) = if d % 2 == 0 { (2 * dx + 1, 2 * dy + 1) } else { (2 * dx, 2 * dy) };
                ox * ox + oy * oy <= d * d
            }
            Geometry::Ellipse { semi_major, semi_minor, cos, sin } => {
                let (x, y) = (dx as f64, dy as f64);
                let u = (x * cos + y * sin) / semi_major;
                let v = (-x * sin + y * cos) / semi_minor;
                u * u + v * v <= 1.0
            }
            Geometry::Polygon { vertices } => {
                let (x, y) = (dx as f64, dy as f64);
                let n = vertices.len();
                (0..n).all(|i| {
                    let (ax, ay) = vertices[i];
                    let (bx, by) = vertices[(i + 1) % n];
                    (bx - ax) * (y - ay) - (by - ay) * (x - ax) >= 0.0
                })
            }
        }
    }

    /// Canvas pixels covered by the particle.
    fn pixels(&self, w: usize, h: usize) -> Vec<usize> {
        let e = self.extent();
        let mut out = Vec::new();
        for y in (self.cy - e).max(0)..=(self.cy + e).min(h as i64 - 1) {
            for x in (self.cx - e).max(0)..=(self.cx + e).min(w as i64 - 1) {
                if self.contains(x - self.cx, y - self.cy) {
                    out.push(y as usize * w + x as usize);
                }
            }
        }
        out
    }
}

fn convex_hull(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> = if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

fn polygon_area(v: &[(f64, f64)]) -> f64 {
    let n = v.len();
    (0..n).map(|i| v[i].0 * v[(i + 1) % n].1 - v[(i + 1) % n].0 * v[i].1).sum::<f64>().abs() / 2.0
}

fn sample_diameter(rng: &mut ChaCha8Rng, spec: &SceneSpec) -> f64 {
    let (lo, hi) = spec.diameter_bounds();
    let LogNormal { mu, sigma } = spec.size_distribution;
    for _ in 0..1000 {
        let d = libm::exp(mu + sigma * normal(rng));
        if d >= lo && d <= hi {
            return d;
        }
    }
    libm::exp(mu).clamp(lo, hi)
}

fn sample_particle(rng: &mut ChaCha8Rng, spec: &SceneSpec) -> Particle {
    let d = sample_diameter(rng, spec);
    let cx = rng.gen_range(0..spec.width as i64);
    let cy = rng.gen_range(0..spec.height as i64);
    let (geometry, nominal) = match spec.shape {
        Shape::Disk => {
            let diameter = (d.round() as u32).max(4);
            (Geometry::Disk { diameter }, diameter as f64)
        }
        Shape::Ellipse => {
            let aspect: f64 = rng.gen_range(1.0..2.0);
            let r = d / 2.0;
            let theta: f64 = rng.gen_range(0.0..std::f64::consts::PI);
            let g = Geometry::Ellipse {
                semi_major: r * libm::sqrt(aspect),
                semi_minor: r / libm::sqrt(aspect),
                cos: libm::cos(theta),
                sin: libm::sin(theta),
            };
            (g, d)
        }
        Shape::Polygon => {
            let n = rng.gen_range(5..=9);
            let mut pts: Vec<(f64, f64)> = (0..n)
                .map(|_| {
                    let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                    let r: f64 = rng.gen_range(0.7..1.0);
                    (r * libm::cos(a), r * libm::sin(a))
                })
                .collect();
            pts = convex_hull(pts);
            if pts.len() < 3 {
                pts = vec![(1.0, 0.0), (-0.5, 0.866), (-0.5, -0.866)];
            }
            let target = std::f64::consts::PI * d * d / 4.0;
            let s = libm::sqrt(target / polygon_area(&pts));
            (Geometry::Polygon { vertices: pts.into_iter().map(|(x, y)| (x * s, y * s)).collect() }, d)
        }
    };
    Particle { cx, cy, geometry, nominal }
}

fn particle_gray(rng: &mut ChaCha8Rng, bg: u8) -> u8 {
    let m: i32 = rng.gen_range(30..=80);
    let bg = bg as i32;
    let up = bg + m <= 255;
    let down = bg - m >= 0;
    let sign = match (up, down) {
        (true, true) => {
            if rng.gen_bool(0.5) {
                1
            } else {
                -1
            }
        }
        (true, false) => 1,
        _ => -1,
    };
    (bg + sign * m).clamp(0, 255) as u8
}

/// Renders a seeded particle scene and its ground truth.
///
/// Particles are placed by rejection sampling under the pairwise IoU cap;
/// one that finds no valid spot in 100 attempts is dropped and the scene
/// underfills (`placed < requested`). Later particles occlude earlier ones.
pub fn gen_scene(spec: &SceneSpec) -> Result<(Raster8, SceneTruth), SynthError> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut owner = vec![0u32; w * h];
    let mut areas: Vec<usize> = Vec::new();
    let mut particles: Vec<(Particle, u8)> = Vec::new();

    for _ in 0..spec.particle_count {
        let mut accepted = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let p = sample_particle(&mut rng, spec);
            let px = p.pixels(w, h);
            if px.is_empty() {
                continue;
            }
            if fits(&px, &owner, &areas, spec.max_pairwise_iou) {
                accepted = Some((p, px));
                break;
            }
        }
        let Some((p, px)) = accepted else { continue };
        let gray = particle_gray(&mut rng, spec.background_gray);
        let id = particles.len() as u32 + 1;
        for &i in &px {
            let prev = owner[i];
            if prev != 0 {
                areas[prev as usize - 1] -= 1;
            }
            owner[i] = id;
        }
        areas.push(px.len());
        particles.push((p, gray));
    }

    let mut img = Raster8::filled(w, h, 1, spec.background_gray);
    for (i, &o) in owner.iter().enumerate() {
        if o == 0 {
            continue;
        }
        let (p, gray) = &particles[o as usize - 1];
        let v = match spec.texture {
            Texture::Shaded => {
                let (x, y) = ((i % w) as i64 - p.cx, (i / w) as i64 - p.cy);
                let e = p.extent().max(1);
                let falloff = (20 * (e * e - (x * x + y * y)).max(0) / (e * e)) as i32;
                let dir = if *gray >= spec.background_gray { 1 } else { -1 };
                (*gray as i32 + dir * falloff).clamp(0, 255) as u8
            }
            _ => *gray,
        };
        img.data_mut()[i] = v;
    }
    if let Texture::Noisy { sigma } = spec.texture {
        for v in img.data_mut() {
            let n = libm::round(sigma * normal(&mut rng)) as i32;
            *v = (*v as i32 + n).clamp(0, 255) as u8;
        }
    }

    let raw = LabelMap::from_vec(w, h, owner).expect("dims");
    let label_map = canonicalize_labels(&raw);
    let mut truths: Vec<ParticleTruth> = Vec::new();
    let mut edge = vec![false; label_map.max_id() as usize + 1];
    for (i, &l) in label_map.labels().iter().enumerate() {
        if l == 0 {
            continue;
        }
        let (x, y) = (i % w, i / w);
        if x == 0 || y == 0 || x + 1 == w || y + 1 == h {
            edge[l as usize] = true;
        }
        if l as usize > truths.len() {
            let source = raw.labels()[i] as usize - 1;
            let p = &particles[source].0;
            truths.push(ParticleTruth {
                id: l,
                source,
                center_x: p.cx as f64 + if matches!(p.geometry, Geometry::Disk { diameter } if diameter % 2 == 0) { 0.5 } else { 0.0 },
                center_y: p.cy as f64 + if matches!(p.geometry, Geometry::Disk { diameter } if diameter % 2 == 0) { 0.5 } else { 0.0 },
                nominal_diameter: p.nominal,
                touches_edge: false,
            });
        }
    }
    for t in truths.iter_mut() {
        t.touches_edge = edge[t.id as usize];
    }
    let truth = SceneTruth { label_map, particles: truths, requested: spec.particle_count, placed: particles.len() };
    Ok((img, truth))
}

fn fits(px: &[usize], owner: &[u32], areas: &[usize], cap: f64) -> bool {
    if cap <= 0.0 {
        return px.iter().all(|&i| owner[i] == 0);
    }
    let mut overlap: Vec<(u32, usize)> = Vec::new();
    for &i in px {
        let o = owner[i];
        if o == 0 {
            continue;
        }
        match overlap.iter_mut().find(|(id, _)| *id == o) {
            Some((_, n)) => *n += 1,
            None => overlap.push((o, 1)),
        }
    }
    overlap.iter().all(|&(o, inter)| {
        let union = px.len() + areas[o as usize - 1] - inter;
        (inter as f64) / (union as f64) <= cap
    })
}
