use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChannelError, SystemConfig};
use crate::rng;

/// Axis-aligned rectangle on the floor plan. `extent` is the full width and
/// height in meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub id: usize,
    pub center: [f64; 2],
    pub extent: [f64; 2],
}

impl Zone {
    pub fn min(&self) -> [f64; 2] {
        [self.center[0] - self.extent[0] / 2.0, self.center[1] - self.extent[1] / 2.0]
    }

    pub fn max(&self) -> [f64; 2] {
        [self.center[0] + self.extent[0] / 2.0, self.center[1] + self.extent[1] / 2.0]
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        let (lo, hi) = (self.min(), self.max());
        (lo[0]..=hi[0]).contains(&p[0]) && (lo[1]..=hi[1]).contains(&p[1])
    }

    /// Interior overlap; shared edges do not count.
    pub fn overlaps(&self, other: &Zone) -> bool {
        let eps = 1e-9;
        let (a0, a1) = (self.min(), self.max());
        let (b0, b1) = (other.min(), other.max());
        a0[0] < b1[0] - eps && b0[0] < a1[0] - eps && a0[1] < b1[1] - eps && b0[1] < a1[1] - eps
    }

    pub fn area(&self) -> f64 {
        self.extent[0] * self.extent[1]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    pub position: [f64; 2],
    pub reflectivity: Complex64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvironmentTag {
    Static,
    Dynamic,
}

/// Geometry and propagation knobs of the synthetic office.
///
/// The room is the `base_grid` of `base_cell` tiles (defaults: 4 x 5 tiles of
/// 1.3 m). Zone layouts for any zone count are carved out of that same room.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvParams {
    pub base_cell_m: [f64; 2],
    pub base_grid: [usize; 2],
    /// Half-width of the uniform per-packet position jitter around a zone
    /// center, clipped to the zone extent.
    pub jitter_radius_m: f64,
    pub tx_spacing_wavelengths: f64,
    pub rx_spacing_wavelengths: f64,
    /// Amplitude of the combined scattered field relative to the direct path.
    pub scatter_gain: f64,
    /// Loss applied to every path segment that crosses the corridor wall.
    pub wall_loss_db: f64,
    pub corridor_gap_m: f64,
    pub corridor_depth_m: f64,
    /// Largest zone aspect ratio accepted when tiling the room.
    pub max_zone_aspect: f64,
    /// Position displacement (m) per unit of perturbation intensity.
    pub perturb_position_m: f64,
}

impl Default for EnvParams {
    fn default() -> Self {
        Self {
            base_cell_m: [1.3, 1.3],
            base_grid: [4, 5],
            jitter_radius_m: 0.02,
            tx_spacing_wavelengths: 0.5,
            rx_spacing_wavelengths: 0.5,
            scatter_gain: 1.5,
            wall_loss_db: 6.0,
            corridor_gap_m: 0.3,
            corridor_depth_m: 1.5,
            max_zone_aspect: 4.0,
            perturb_position_m: 0.02,
        }
    }
}

impl EnvParams {
    pub fn floor_m(&self) -> [f64; 2] {
        [
            self.base_cell_m[0] * self.base_grid[0] as f64,
            self.base_cell_m[1] * self.base_grid[1] as f64,
        ]
    }
}

/// A synthetic indoor deployment: zone tiling, point scatterers, the access
/// point and an out-of-distribution corridor outside the room.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentModel {
    pub floor_m: [f64; 2],
    /// Zone grid as `[columns, rows]`.
    pub grid: [usize; 2],
    pub zones: Vec<Zone>,
    pub scatterers: Vec<Scatterer>,
    pub ap_position: [f64; 2],
    pub ood_region: Zone,
    pub tag: EnvironmentTag,
    pub params: EnvParams,
    pub seed: u64,
}

impl EnvironmentModel {
    pub fn n_zones(&self) -> usize {
        self.zones.len()
    }

    /// SHA-256 over the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("environment serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// Zone id containing `p`, if any. Points on shared edges resolve to the
    /// lowest id.
    pub fn zone_of(&self, p: [f64; 2]) -> Option<usize> {
        self.zones.iter().find(|z| z.contains(p)).map(|z| z.id)
    }
}

/// Chooses the `[columns, rows]` grid for `n_zones` equal rectangles over the
/// room. Grids that nest with the base tiling (each axis divides or is a
/// multiple of the base count) are preferred, so layouts for different zone
/// counts refine one another; among those the squarest cells win.
pub fn zone_grid(params: &EnvParams, n_zones: usize) -> Result<[usize; 2], ChannelError> {
    let floor = params.floor_m();
    let nests = |n: usize, base: usize| n % base == 0 || base % n == 0;
    let mut best: Option<([usize; 2], bool, f64)> = None;
    for cols in (1..=n_zones).filter(|c| n_zones % c == 0) {
        let rows = n_zones / cols;
        let w = floor[0] / cols as f64;
        let h = floor[1] / rows as f64;
        let aspect = (w / h).max(h / w);
        if aspect > params.max_zone_aspect + 1e-9 {
            continue;
        }
        let nested = nests(cols, params.base_grid[0]) && nests(rows, params.base_grid[1]);
        let better = match best {
            None => true,
            Some((_, bn, ba)) => (nested && !bn) || (nested == bn && aspect < ba - 1e-12),
        };
        if better {
            best = Some(([cols, rows], nested, aspect));
        }
    }
    best.map(|(g, _, _)| g).ok_or(ChannelError::UntileableZones {
        n_zones,
        max_aspect: params.max_zone_aspect,
    })
}

/// For each zone of `fine`, the zone of `coarse` that contains it. Fails when
/// a fine zone straddles a coarse boundary.
pub fn zone_merge_map(fine: &EnvironmentModel, coarse: &EnvironmentModel) -> Result<Vec<usize>, ChannelError> {
    const TOL: f64 = 1e-9;
    fine.zones
        .iter()
        .map(|z| {
            let (lo, hi) = (z.min(), z.max());
            coarse
                .zones
                .iter()
                .find(|c| {
                    let (clo, chi) = (c.min(), c.max());
                    (0..2).all(|a| lo[a] >= clo[a] - TOL && hi[a] <= chi[a] + TOL)
                })
                .map(|c| c.id)
                .ok_or_else(|| {
                    ChannelError::InvalidConfig(format!(
                        "zone {} of the {}-zone layout straddles the {}-zone layout",
                        z.id,
                        fine.n_zones(),
                        coarse.n_zones()
                    ))
                })
        })
        .collect()
}

pub fn generate_environment(
    sys: &SystemConfig,
    n_zones: usize,
    n_scatterers: usize,
    seed: u64,
) -> Result<EnvironmentModel, ChannelError> {
    generate_environment_with(sys, &EnvParams::default(), n_zones, n_scatterers, seed)
}

/// Builds the room, its zone tiling and the scatterer field.
///
/// Scatterers and the access point are drawn before the zones, so two calls
/// that differ only in `n_zones` describe the same physical room.
pub fn generate_environment_with(
    sys: &SystemConfig,
    params: &EnvParams,
    n_zones: usize,
    n_scatterers: usize,
    seed: u64,
) -> Result<EnvironmentModel, ChannelError> {
    sys.validate()?;
    if n_zones < 2 {
        return Err(ChannelError::InvalidConfig("n_zones must be at least 2".into()));
    }
    if n_scatterers < 1 {
        return Err(ChannelError::InvalidConfig("n_scatterers must be at least 1".into()));
    }
    if !(params.jitter_radius_m >= 0.0) || params.base_grid.contains(&0) {
        return Err(ChannelError::InvalidConfig("invalid environment parameters".into()));
    }
    let floor = params.floor_m();
    let mut rng = rng::stream(seed, 0x656e_7669);

    // Access point just outside the upper-right corner of the room.
    let ap_position = [floor[0] + 0.25, floor[1] + 0.25];

    let corridor_top = -params.corridor_gap_m;
    let corridor_bottom = corridor_top - params.corridor_depth_m;
    let (sx0, sx1) = (-1.0, floor[0] + 1.0);
    let (sy0, sy1) = (corridor_bottom - 1.0, floor[1] + 1.0);
    let scatterers = (0..n_scatterers)
        .map(|_| {
            let position = [rng.gen_range(sx0..sx1), rng.gen_range(sy0..sy1)];
            Scatterer { position, reflectivity: complex_gaussian(&mut rng, 1.0) }
        })
        .collect();

    let grid = zone_grid(params, n_zones)?;
    let cell = [floor[0] / grid[0] as f64, floor[1] / grid[1] as f64];
    let mut zones = Vec::with_capacity(n_zones);
    for row in 0..grid[1] {
        for col in 0..grid[0] {
            zones.push(Zone {
                id: zones.len(),
                center: [(col as f64 + 0.5) * cell[0], (row as f64 + 0.5) * cell[1]],
                extent: cell,
            });
        }
    }

    let ood_region = Zone {
        id: usize::MAX,
        center: [floor[0] / 2.0, (corridor_top + corridor_bottom) / 2.0],
        extent: [floor[0], params.corridor_depth_m],
    };

    Ok(EnvironmentModel {
        floor_m: floor,
        grid,
        zones,
        scatterers,
        ap_position,
        ood_region,
        tag: EnvironmentTag::Static,
        params: params.clone(),
        seed,
    })
}

/// Simulates people and furniture moving: scatterer positions shift by
/// `intensity * perturb_position_m` (Gaussian) and reflectivities are
/// partially redrawn, `rho' = sqrt(1 - i^2) rho + i rho_new`, which keeps unit
/// mean power. Zones and the access point are untouched.
pub fn perturb_environment(
    env: &EnvironmentModel,
    intensity: f64,
    seed: u64,
) -> Result<EnvironmentModel, ChannelError> {
    if !(0.0..=1.0).contains(&intensity) {
        return Err(ChannelError::InvalidConfig(format!(
            "perturbation intensity {intensity} outside [0, 1]"
        )));
    }
    if intensity == 0.0 {
        return Ok(env.clone());
    }
    let mut rng = rng::stream(seed, 0x7065_7274);
    let keep = (1.0 - intensity * intensity).sqrt();
    let step = intensity * env.params.perturb_position_m;
    let mut out = env.clone();
    for s in &mut out.scatterers {
        let dx: f64 = rng.sample(StandardNormal);
        let dy: f64 = rng.sample(StandardNormal);
        s.position = [s.position[0] + step * dx, s.position[1] + step * dy];
        s.reflectivity = s.reflectivity * keep + complex_gaussian(&mut rng, 1.0) * intensity;
    }
    out.tag = EnvironmentTag::Dynamic;
    Ok(out)
}

/// Circularly-symmetric complex Gaussian with total variance `power`.
pub(crate) fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, power: f64) -> Complex64 {
    let s = (power / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * s, im * s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(n: usize) -> EnvironmentModel {
        generate_environment(&SystemConfig::default(), n, 30, 7).unwrap()
    }

    #[test]
    fn default_layout_has_twenty_disjoint_zones_and_a_corridor() {
        let e = env(20);
        assert_eq!(e.zones.len(), 20);
        assert_eq!(e.grid, [4, 5]);
        for (i, a) in e.zones.iter().enumerate() {
            assert!((a.extent[0] - 1.3).abs() < 1e-12 && (a.extent[1] - 1.3).abs() < 1e-12);
            for b in &e.zones[i + 1..] {
                assert!(!a.overlaps(b));
            }
            assert!(!a.overlaps(&e.ood_region));
        }
        let tiled: f64 = e.zones.iter().map(Zone::area).sum();
        assert!((tiled - e.floor_m[0] * e.floor_m[1]).abs() < 1e-9);
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(env(20), env(20));
        assert_eq!(env(20).hash(), env(20).hash());
    }

    #[test]
    fn zone_count_does_not_move_scatterers() {
        assert_eq!(env(5).scatterers, env(40).scatterers);
    }

    #[test]
    fn zone_sweep_layouts() {
        assert_eq!(env(5).grid, [1, 5]);
        assert_eq!(env(10).grid, [2, 5]);
        let map = zone_merge_map(&env(40), &env(20)).unwrap();
        assert_eq!(map.len(), 40);
        for c in 0..20 {
            assert_eq!(map.iter().filter(|&&m| m == c).count(), 2);
        }
        let map = zone_merge_map(&env(20), &env(5)).unwrap();
        assert!((0..5).all(|c| map.iter().filter(|&&m| m == c).count() == 4));
        assert!(zone_merge_map(&env(5), &env(20)).is_err());
    }

    #[test]
    fn rejects_untileable_counts() {
        let sys = SystemConfig::default();
        assert!(matches!(
            generate_environment(&sys, 7, 30, 1),
            Err(ChannelError::UntileableZones { n_zones: 7, .. })
        ));
        assert!(generate_environment(&sys, 1, 30, 1).is_err());
        assert!(generate_environment(&sys, 4, 0, 1).is_err());
    }

    #[test]
    fn zero_intensity_is_identity() {
        let e = env(20);
        assert_eq!(perturb_environment(&e, 0.0, 3).unwrap(), e);
    }

    #[test]
    fn perturbation_keeps_geometry_and_is_deterministic() {
        let e = env(20);
        let a = perturb_environment(&e, 0.3, 3).unwrap();
        let b = perturb_environment(&e, 0.3, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.zones, e.zones);
        assert_eq!(a.ap_position, e.ap_position);
        assert_ne!(a.scatterers, e.scatterers);
        assert_eq!(a.tag, EnvironmentTag::Dynamic);
        assert!(perturb_environment(&e, 1.5, 3).is_err());
    }

    #[test]
    fn reflectivities_have_unit_mean_power() {
        let e = generate_environment(&SystemConfig::default(), 20, 4000, 11).unwrap();
        let p: f64 = e.scatterers.iter().map(|s| s.reflectivity.norm_sqr()).sum::<f64>() / 4000.0;
        assert!((p - 1.0).abs() < 0.08, "mean power {p}");
    }
}
