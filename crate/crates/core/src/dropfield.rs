//! Stochastic droplet population on the virtual pane.
//!
//! Three independent ChaCha streams drive the field: `spawn` (how many
//! droplets appear and where), `scale` (diameter and anisotropic scale) and
//! `slip` (per-step motion). Every stream is derived from the configured seed
//! alone, so a field is fully determined by its seed, its config and the
//! sequence of operations applied to it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Droplets at or below this diameter never move.
pub const SLIP_DIAMETER_MM: f64 = 4.0;
/// Vertical displacement of one slip event, in pixels.
pub const SLIP_STEP_PX: f64 = 5.0;
/// Standard deviation of the horizontal slip deviation, in pixels.
pub const SLIP_SIGMA_PX: f64 = 3.0;
/// Metaball kernel support as a multiple of the footprint radius.
pub const KERNEL_REACH: f64 = 1.5;
/// Threshold at which an isolated droplet's superlevel set is exactly its
/// footprint: `k(1 / KERNEL_REACH) = (1 - 1/1.5^2)^2 = 25/81`.
pub const FOOTPRINT_THRESHOLD: f64 = 25.0 / 81.0;

const SPAWN_STREAM: u64 = 1;
const SCALE_STREAM: u64 = 2;
const SLIP_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldConfig {
    /// Per-pixel, per-spawn probability of a droplet center.
    pub p_r: f64,
    /// Probability that a large droplet slips down during one step.
    pub p_d: f64,
    /// Range shared by the horizontal and vertical scale factors.
    pub scale_range: [f64; 2],
    pub diameter_range_mm: [f64; 2],
    pub pixels_per_mm: f64,
    pub metaball_threshold: f64,
    pub seed: u64,
    pub max_drops: usize,
    pub spawn_every_frame: bool,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig {
            p_r: 1e-3,
            p_d: 0.3,
            scale_range: [0.8, 1.25],
            diameter_range_mm: [1.0, 8.0],
            pixels_per_mm: 8.0,
            metaball_threshold: FOOTPRINT_THRESHOLD,
            seed: 0,
            max_drops: 200,
            spawn_every_frame: false,
        }
    }
}

impl FieldConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_r", self.p_r), ("p_d", self.p_d)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::param(name, format!("probability {p} outside [0, 1]")));
            }
        }
        for (name, [lo, hi]) in [("scale_range", self.scale_range), ("diameter_range_mm", self.diameter_range_mm)] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::param(name, format!("[{lo}, {hi}] is not a positive nonempty range")));
            }
        }
        if !(self.pixels_per_mm > 0.0 && self.pixels_per_mm.is_finite()) {
            return Err(Error::param("pixels_per_mm", "must be positive"));
        }
        if !(self.metaball_threshold > 0.0 && self.metaball_threshold <= 1.0) {
            return Err(Error::param("metaball_threshold", "must lie in (0, 1]"));
        }
        // Config files are TOML, whose integers are signed 64-bit.
        if self.seed > i64::MAX as u64 {
            return Err(Error::param("seed", format!("{} does not fit in a signed 64-bit integer", self.seed)));
        }
        Ok(())
    }
}

/// One droplet. Positions are in image pixels with pixel centers at integer
/// coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Droplet {
    pub id: u64,
    pub u: f64,
    pub v: f64,
    pub diameter_mm: f64,
    pub sx: f64,
    pub sy: f64,
    #[serde(default)]
    pub age: u64,
}

impl Droplet {
    /// Footprint half-axes in pixels.
    pub fn footprint(&self, pixels_per_mm: f64) -> (f64, f64) {
        let r = self.diameter_mm * pixels_per_mm / 2.0;
        (r * self.sx, r * self.sy)
    }

    /// Metaball contribution at `(x, y)`.
    #[inline]
    pub fn kernel_at(&self, x: f64, y: f64, pixels_per_mm: f64) -> f64 {
        let (rx, ry) = self.footprint(pixels_per_mm);
        let qx = (x - self.u) / (KERNEL_REACH * rx);
        let qy = (y - self.v) / (KERNEL_REACH * ry);
        metaball_kernel(qx * qx + qy * qy)
    }

    pub fn can_slip(&self) -> bool {
        self.diameter_mm > SLIP_DIAMETER_MM
    }
}

/// `(1 - q^2)^2` inside the unit support, zero outside. Takes `q^2`.
#[inline]
pub fn metaball_kernel(q2: f64) -> f64 {
    if q2 < 1.0 {
        let t = 1.0 - q2;
        t * t
    } else {
        0.0
    }
}

/// The droplet state of one frame, as recorded in manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSnapshot {
    pub frame: u64,
    pub seed: u64,
    pub droplets: Vec<Droplet>,
}

#[derive(Debug, Clone)]
pub struct DropField {
    droplets: Vec<Droplet>,
    spawn_rng: ChaCha8Rng,
    scale_rng: ChaCha8Rng,
    slip_rng: ChaCha8Rng,
    config: FieldConfig,
    frame: u64,
    next_id: u64,
    dims: Option<(usize, usize)>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

impl DropField {
    pub fn new(config: FieldConfig) -> Result<Self> {
        config.validate()?;
        let seed = config.seed;
        Ok(DropField {
            droplets: Vec::new(),
            spawn_rng: stream(seed, SPAWN_STREAM),
            scale_rng: stream(seed, SCALE_STREAM),
            slip_rng: stream(seed, SLIP_STREAM),
            config,
            frame: 0,
            next_id: 0,
            dims: None,
        })
    }

    /// Rebuilds a field from a recorded snapshot. Random streams restart from
    /// the seed, so only rendering of the snapshot is guaranteed to match the
    /// original run, not further evolution.
    pub fn from_snapshot(config: FieldConfig, snapshot: &FieldSnapshot) -> Result<Self> {
        let mut field = DropField::new(config)?;
        field.frame = snapshot.frame;
        field.droplets = snapshot.droplets.clone();
        field.next_id = field.droplets.iter().map(|d| d.id + 1).max().unwrap_or(0);
        Ok(field)
    }

    pub fn droplets(&self) -> &[Droplet] {
        &self.droplets
    }

    pub fn config(&self) -> &FieldConfig {
        &self.config
    }

    pub fn frame(&self) -> u64 {
        self.frame
    }

    pub fn len(&self) -> usize {
        self.droplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.droplets.is_empty()
    }

    /// Inserts a droplet directly, bypassing the spawn streams. Its id is
    /// reassigned.
    pub fn push(&mut self, mut droplet: Droplet) -> u64 {
        droplet.id = self.next_id;
        self.next_id += 1;
        self.droplets.push(droplet);
        self.next_id - 1
    }

    pub fn snapshot(&self) -> FieldSnapshot {
        FieldSnapshot { frame: self.frame, seed: self.config.seed, droplets: self.droplets.clone() }
    }

    /// Spawns new droplets over a `width x height` image.
    ///
    /// Every pixel independently becomes a droplet center with probability
    /// `p_r`; this is drawn as one binomial count followed by uniform
    /// placement, which has the same distribution. The total population
    /// saturates at `max_drops`.
    pub fn spawn(&mut self, width: usize, height: usize) -> Result<()> {
        if width == 0 || height == 0 {
            return Err(Error::param("dims", format!("{width}x{height} image is empty")));
        }
        self.dims = Some((width, height));
        let pixels = (width * height) as u64;
        let drawn = Binomial::new(pixels, self.config.p_r)
            .expect("p_r validated")
            .sample(&mut self.spawn_rng);
        let room = self.config.max_drops.saturating_sub(self.droplets.len()) as u64;
        let count = drawn.min(room);

        let c = &self.config;
        let (w, h) = (width as f64, height as f64);
        for _ in 0..count {
            let u = self.spawn_rng.random::<f64>() * w - 0.5;
            let v = self.spawn_rng.random::<f64>() * h - 0.5;
            let diameter_mm = lerp(c.diameter_range_mm, self.scale_rng.random());
            let sx = lerp(c.scale_range, self.scale_rng.random());
            let sy = lerp(c.scale_range, self.scale_rng.random());
            self.droplets.push(Droplet { id: self.next_id, u, v, diameter_mm, sx, sy, age: 0 });
            self.next_id += 1;
        }
        Ok(())
    }

    /// Advances one timestep.
    ///
    /// Droplets of at most 4 mm stay put. Larger droplets draw a horizontal
    /// deviation from `N(0, 3^2)` pixels and, with probability `p_d`, slip
    /// 5 pixels down. Droplets whose footprint has left through the bottom
    /// edge are dropped. With `spawn_every_frame` a spawn follows the motion.
    pub fn step(&mut self) {
        let normal = Normal::new(0.0, SLIP_SIGMA_PX).expect("positive sigma");
        let p_d = self.config.p_d;
        for d in &mut self.droplets {
            if d.can_slip() {
                d.u += normal.sample(&mut self.slip_rng);
                if self.slip_rng.random_bool(p_d) {
                    d.v += SLIP_STEP_PX;
                }
            }
            d.age += 1;
        }
        if let Some((w, h)) = self.dims {
            let ppm = self.config.pixels_per_mm;
            let bottom = h as f64 - 0.5;
            self.droplets.retain(|d| d.v - d.footprint(ppm).1 < bottom);
            if self.config.spawn_every_frame {
                self.spawn(w, h).expect("dims validated when recorded");
            }
        }
        self.frame += 1;
    }

    /// Summed metaball field at a point.
    pub fn field_function(&self, x: f64, y: f64) -> f64 {
        let ppm = self.config.pixels_per_mm;
        self.droplets.iter().map(|d| d.kernel_at(x, y, ppm)).sum()
    }
}

fn lerp([lo, hi]: [f64; 2], t: f64) -> f64 {
    lo + (hi - lo) * t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> FieldConfig {
        FieldConfig { seed: 7, ..FieldConfig::default() }
    }

    fn drop_at(u: f64, v: f64, diameter_mm: f64) -> Droplet {
        Droplet { id: 0, u, v, diameter_mm, sx: 1.0, sy: 1.0, age: 0 }
    }

    #[test]
    fn validation_catches_bad_ranges() {
        let bad = [
            FieldConfig { p_r: -0.1, ..cfg() },
            FieldConfig { p_d: 1.5, ..cfg() },
            FieldConfig { scale_range: [2.0, 1.0], ..cfg() },
            FieldConfig { diameter_range_mm: [0.0, 1.0], ..cfg() },
            FieldConfig { pixels_per_mm: 0.0, ..cfg() },
            FieldConfig { metaball_threshold: 0.0, ..cfg() },
        ];
        for c in bad {
            assert!(DropField::new(c).is_err());
        }
    }

    #[test]
    fn zero_probability_spawns_nothing() {
        let mut f = DropField::new(FieldConfig { p_r: 0.0, ..cfg() }).unwrap();
        f.spawn(640, 480).unwrap();
        assert!(f.is_empty());
    }

    #[test]
    fn spawn_saturates_at_max_drops() {
        let mut f = DropField::new(FieldConfig { p_r: 1.0, max_drops: 5, ..cfg() }).unwrap();
        f.spawn(37, 11).unwrap();
        assert_eq!(f.len(), 5);
        f.spawn(37, 11).unwrap();
        assert_eq!(f.len(), 5);
    }

    #[test]
    fn spawned_droplets_respect_ranges() {
        let mut f = DropField::new(FieldConfig { p_r: 0.01, max_drops: 10_000, ..cfg() }).unwrap();
        f.spawn(200, 100).unwrap();
        assert!(!f.is_empty());
        for d in f.droplets() {
            assert!((1.0..=8.0).contains(&d.diameter_mm));
            assert!((0.8..=1.25).contains(&d.sx) && (0.8..=1.25).contains(&d.sy));
            assert!((-0.5..199.5).contains(&d.u) && (-0.5..99.5).contains(&d.v));
        }
        let ids: Vec<u64> = f.droplets().iter().map(|d| d.id).collect();
        assert_eq!(ids, (0..f.len() as u64).collect::<Vec<_>>());
    }

    #[test]
    fn empty_dims_are_rejected() {
        let mut f = DropField::new(cfg()).unwrap();
        assert!(f.spawn(0, 10).is_err());
    }

    #[test]
    fn small_droplets_never_move() {
        let mut f = DropField::new(FieldConfig { p_d: 1.0, ..cfg() }).unwrap();
        f.push(drop_at(10.0, 20.0, 4.0));
        f.push(drop_at(30.5, 2.25, 1.0));
        for _ in 0..1000 {
            f.step();
        }
        assert_eq!((f.droplets()[0].u, f.droplets()[0].v), (10.0, 20.0));
        assert_eq!((f.droplets()[1].u, f.droplets()[1].v), (30.5, 2.25));
        assert_eq!(f.frame(), 1000);
    }

    #[test]
    fn certain_slip_moves_five_pixels() {
        let mut f = DropField::new(FieldConfig { p_d: 1.0, ..cfg() }).unwrap();
        f.push(drop_at(10.0, 20.0, 5.0));
        for i in 1..=20 {
            f.step();
            assert_eq!(f.droplets()[0].v, 20.0 + 5.0 * i as f64);
        }
    }

    #[test]
    fn droplets_leave_through_the_bottom() {
        let mut f = DropField::new(FieldConfig { p_r: 0.0, p_d: 1.0, pixels_per_mm: 5.0, ..cfg() }).unwrap();
        f.spawn(50, 50).unwrap();
        // 6 mm at 5 px/mm: vertical footprint radius 15 px.
        f.push(drop_at(25.0, 30.0, 6.0));
        let mut steps = 0;
        while !f.is_empty() {
            f.step();
            steps += 1;
        }
        // Leaves once v - 15 >= 49.5, i.e. v >= 64.5 -> 7 steps from 30.
        assert_eq!(steps, 7);
    }

    #[test]
    fn field_peaks_at_one_on_a_center() {
        let mut f = DropField::new(cfg()).unwrap();
        assert_eq!(f.field_function(3.0, 4.0), 0.0);
        f.push(drop_at(3.0, 4.0, 2.0));
        assert_eq!(f.field_function(3.0, 4.0), 1.0);
        assert!(f.field_function(3.0, 4.0) >= f.config().metaball_threshold);
    }

    #[test]
    fn footprint_boundary_sits_on_threshold() {
        let d = drop_at(0.0, 0.0, 4.0);
        let (rx, _) = d.footprint(5.0);
        let k = d.kernel_at(rx, 0.0, 5.0);
        assert!((k - FOOTPRINT_THRESHOLD).abs() < 1e-12);
    }

    #[test]
    fn snapshot_restores_droplets() {
        let mut f = DropField::new(FieldConfig { p_r: 1e-3, ..cfg() }).unwrap();
        f.spawn(100, 100).unwrap();
        f.step();
        let snap = f.snapshot();
        let g = DropField::from_snapshot(f.config().clone(), &snap).unwrap();
        assert_eq!(g.droplets(), f.droplets());
        assert_eq!(g.frame(), 1);
    }
}
