use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Pattern {
    /// Bands of `duty · period` width every `period` units; rings around
    /// the axis on a tube, concentric circles on a plane.
    Rings { period: f64, duty: f64 },
    Checker { size: f64 },
    /// Noise only.
    Plain,
}

/// Procedural albedo `colour · (1 − contrast·pattern) · (1 + noise)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TextureSpec {
    pub pattern: Pattern,
    pub contrast: f64,
    pub colour: [f64; 3],
    /// Peak relative amplitude of the value noise.
    pub noise_amplitude: f64,
    /// Lattice spacing of the value noise in surface units.
    pub noise_cell: f64,
    pub seed: u64,
}

impl Default for TextureSpec {
    fn default() -> Self {
        Self {
            pattern: Pattern::Rings { period: 0.8, duty: 0.3 },
            contrast: 0.6,
            colour: [1.0, 0.65, 0.55],
            noise_amplitude: 0.35,
            noise_cell: 0.15,
            seed: 0,
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn lattice(seed: u64, i: i64, j: i64) -> f64 {
    let h = splitmix(seed ^ splitmix((i as u64).wrapping_mul(0x1656_67B1) ^ (j as u64).rotate_left(32)));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Smooth value noise in `[0, 1]`; `period_j` wraps the second axis.
fn value_noise(seed: u64, u: f64, v: f64, period_j: Option<i64>) -> f64 {
    let (i0, j0) = (u.floor(), v.floor());
    let (fu, fv) = (u - i0, v - j0);
    let s = |t: f64| t * t * (3.0 - 2.0 * t);
    let (su, sv) = (s(fu), s(fv));
    let wrap = |j: i64| match period_j {
        Some(p) => j.rem_euclid(p),
        None => j,
    };
    let (i0, j0) = (i0 as i64, j0 as i64);
    let at = |di: i64, dj: i64| lattice(seed, i0 + di, wrap(j0 + dj));
    let top = at(0, 0) * (1.0 - su) + at(1, 0) * su;
    let bot = at(0, 1) * (1.0 - su) + at(1, 1) * su;
    top * (1.0 - sv) + bot * sv
}

/// Surface point in texture coordinates.
#[derive(Clone, Copy, Debug)]
pub enum SurfacePoint {
    /// Plane or end cap coordinates.
    Planar { x: f64, y: f64 },
    /// Axial position and arc length, with the circumference for wrapping.
    Tube { axial: f64, arc: f64, circumference: f64 },
}

impl TextureSpec {
    /// Pattern membership in `{0, 1}`.
    pub fn pattern(&self, p: SurfacePoint) -> f64 {
        let frac = |v: f64| v - v.floor();
        match (self.pattern, p) {
            (Pattern::Plain, _) => 0.0,
            (Pattern::Rings { period, duty }, SurfacePoint::Tube { axial, .. }) => (frac(axial / period) < duty) as u8 as f64,
            (Pattern::Rings { period, duty }, SurfacePoint::Planar { x, y }) => {
                (frac((x * x + y * y).sqrt() / period) < duty) as u8 as f64
            }
            (Pattern::Checker { size }, SurfacePoint::Planar { x, y }) => {
                (((x / size).floor() + (y / size).floor()) as i64).rem_euclid(2) as f64
            }
            (Pattern::Checker { size }, SurfacePoint::Tube { axial, arc, circumference }) => {
                let n = (circumference / size).round().max(2.0);
                let n = n + (n as i64 % 2) as f64; // even count keeps the seam consistent
                let cell = circumference / n;
                (((axial / size).floor() + (arc / cell).floor()) as i64).rem_euclid(2) as f64
            }
        }
    }

    pub fn noise(&self, p: SurfacePoint) -> f64 {
        match p {
            SurfacePoint::Planar { x, y } => value_noise(self.seed, x / self.noise_cell, y / self.noise_cell, None),
            SurfacePoint::Tube { axial, arc, circumference } => {
                let period = (circumference / self.noise_cell).round().max(1.0);
                let cell = circumference / period;
                value_noise(self.seed, axial / self.noise_cell, arc / cell, Some(period as i64))
            }
        }
    }

    pub fn albedo(&self, p: SurfacePoint) -> [f64; 3] {
        let m = (1.0 - self.contrast * self.pattern(p)) * (1.0 + self.noise_amplitude * (2.0 * self.noise(p) - 1.0));
        self.colour.map(|c| (c * m).max(0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_is_bounded_deterministic_and_wraps() {
        let t = TextureSpec::default();
        let c = 2.0 * std::f64::consts::PI;
        for i in 0..50 {
            let (a, s) = (i as f64 * 0.37, i as f64 * 0.11);
            let p = SurfacePoint::Tube { axial: a, arc: s, circumference: c };
            let n = t.noise(p);
            assert!((0.0..=1.0).contains(&n));
            assert_eq!(n, t.noise(p));
            let q = SurfacePoint::Tube { axial: a, arc: s + c, circumference: c };
            assert!((n - t.noise(q)).abs() < 1e-9);
        }
    }

    #[test]
    fn ring_duty_cycle() {
        let t = TextureSpec { pattern: Pattern::Rings { period: 1.0, duty: 0.25 }, ..Default::default() };
        let n = 10_000;
        let on: f64 = (0..n)
            .map(|i| t.pattern(SurfacePoint::Tube { axial: i as f64 / 1000.0, arc: 0.0, circumference: 1.0 }))
            .sum();
        assert!((on / n as f64 - 0.25).abs() < 1e-3);
    }
}
