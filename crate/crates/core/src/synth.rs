//! Synthetic F-formation scenes.
//!
//! Each group stands evenly spaced on a circle of radius `formation_radius`
//! around a shared center, everyone facing that center. Group centers and
//! lone individuals are placed by rejection sampling so no two anchors are
//! closer than `min_center_separation`.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::{Dataset, Individual, Scene, Units, ViewTag};
use crate::trainer::derive_seed;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
    #[error("could not place {what} after {attempts} attempts; the arena is too crowded")]
    PlacementFailure { what: String, attempts: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Anchors uniform over the arena.
    #[default]
    Scattered,
    /// Each new anchor sits exactly `min_center_separation` from an earlier
    /// one, so neighboring groups crowd each other. The arena is ignored.
    Packed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_scenes: usize,
    pub people_range: [usize; 2],
    pub group_size_range: [usize; 2],
    pub formation_radius: f64,
    pub min_center_separation: f64,
    pub position_jitter: f64,
    pub orientation_jitter: f64,
    pub singleton_fraction: f64,
    /// Side length of the square arena anchors are drawn from.
    pub arena_size: f64,
    pub layout: Layout,
    /// Rejection attempts per anchor before the scene is redrawn.
    pub max_attempts: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_scenes: 500,
            people_range: [10, 20],
            group_size_range: [2, 6],
            formation_radius: 0.6,
            min_center_separation: 1.8,
            position_jitter: 0.05,
            orientation_jitter: 0.1,
            singleton_fraction: 0.1,
            arena_size: 10.0,
            layout: Layout::Scattered,
            max_attempts: 2000,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Adjacent groups packed `2.2·r` apart with no lone individuals, where
    /// members of neighboring groups are only told apart by their facing.
    pub fn hard() -> Self {
        let r = 0.6;
        SynthConfig {
            n_scenes: 200,
            people_range: [6, 12],
            group_size_range: [3, 6],
            formation_radius: r,
            min_center_separation: 2.2 * r,
            singleton_fraction: 0.0,
            layout: Layout::Packed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        let [pmin, pmax] = self.people_range;
        let [gmin, gmax] = self.group_size_range;
        if pmin > pmax {
            return bad(format!("people_range min {pmin} exceeds max {pmax}"));
        }
        if gmin > gmax {
            return bad(format!("group_size_range min {gmin} exceeds max {gmax}"));
        }
        if gmin < 2 {
            return bad(format!("group_size_range min must be >= 2, got {gmin}"));
        }
        if !(self.formation_radius > 0.0) {
            return bad("formation_radius must be > 0".into());
        }
        if !(self.min_center_separation > 2.0 * self.formation_radius) {
            return bad(format!(
                "min_center_separation ({}) must exceed 2 * formation_radius ({})",
                self.min_center_separation,
                2.0 * self.formation_radius
            ));
        }
        if !(self.position_jitter >= 0.0) || !(self.orientation_jitter >= 0.0) {
            return bad("jitters must be >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.singleton_fraction) {
            return bad("singleton_fraction must lie in [0, 1]".into());
        }
        if self.layout == Layout::Scattered && !(self.arena_size > 2.0 * self.formation_radius) {
            return bad("arena_size must exceed 2 * formation_radius".into());
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be >= 1".into());
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, SynthError> {
        let cfg: SynthConfig =
            serde_json::from_str(text).map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Group sizes summing to at most `n`; anyone left over stands alone.
fn draw_group_sizes<R: Rng>(n_grouped: usize, [gmin, gmax]: [usize; 2], rng: &mut R) -> Vec<usize> {
    let mut sizes = Vec::new();
    let mut remaining = n_grouped;
    while remaining >= gmin {
        let mut size = rng.random_range(gmin..=gmax.min(remaining));
        let rest = remaining - size;
        if rest > 0 && rest < gmin {
            // absorb the remainder, or give some back so it can form a group
            if size + rest <= gmax {
                size += rest;
            } else if size - (gmin - rest) >= gmin {
                size -= gmin - rest;
            }
        }
        sizes.push(size);
        remaining -= size;
    }
    sizes
}

fn too_close(p: (f64, f64), anchors: &[(f64, f64)], min_sep: f64) -> bool {
    // small slack so packed anchors at exactly min_sep are accepted
    anchors
        .iter()
        .any(|a| (a.0 - p.0).hypot(a.1 - p.1) < min_sep - 1e-9)
}

fn place_anchors<R: Rng>(count: usize, cfg: &SynthConfig, rng: &mut R) -> Option<Vec<(f64, f64)>> {
    let mut anchors: Vec<(f64, f64)> = Vec::with_capacity(count);
    let margin = cfg.formation_radius;
    for _ in 0..count {
        let mut placed = false;
        for _ in 0..cfg.max_attempts {
            let p = match (cfg.layout, anchors.is_empty()) {
                (Layout::Packed, false) => {
                    let base = anchors[rng.random_range(0..anchors.len())];
                    let phi = rng.random_range(-PI..PI);
                    (
                        base.0 + cfg.min_center_separation * phi.cos(),
                        base.1 + cfg.min_center_separation * phi.sin(),
                    )
                }
                (Layout::Packed, true) => (0.0, 0.0),
                (Layout::Scattered, _) => (
                    rng.random_range(margin..=cfg.arena_size - margin),
                    rng.random_range(margin..=cfg.arena_size - margin),
                ),
            };
            if !too_close(p, &anchors, cfg.min_center_separation) {
                anchors.push(p);
                placed = true;
                break;
            }
        }
        if !placed {
            return None;
        }
    }
    Some(anchors)
}

const SCENE_RETRIES: usize = 20;

/// One scene with ground-truth groups.
pub fn generate_scene<R: Rng>(
    cfg: &SynthConfig,
    frame_id: &str,
    rng: &mut R,
) -> Result<Scene, SynthError> {
    cfg.validate()?;
    let n = rng.random_range(cfg.people_range[0]..=cfg.people_range[1]);
    let n_lone = (cfg.singleton_fraction * n as f64).round() as usize;
    let sizes = draw_group_sizes(n - n_lone, cfg.group_size_range, rng);
    let grouped: usize = sizes.iter().sum();
    let n_lone = n - grouped;
    let anchors = (0..SCENE_RETRIES)
        .find_map(|_| place_anchors(sizes.len() + n_lone, cfg, rng))
        .ok_or_else(|| SynthError::PlacementFailure {
            what: format!("{} groups and {} individuals", sizes.len(), n_lone),
            attempts: cfg.max_attempts * SCENE_RETRIES,
        })?;
    let pos_noise = Normal::new(0.0, cfg.position_jitter).expect("jitter validated");
    let rot_noise = Normal::new(0.0, cfg.orientation_jitter).expect("jitter validated");

    // (x, y, theta, group)
    let mut people: Vec<(f64, f64, f64, Option<usize>)> = Vec::with_capacity(n);
    for (gi, (&size, &(cx, cy))) in sizes.iter().zip(&anchors).enumerate() {
        let phase = rng.random_range(-PI..PI);
        for k in 0..size {
            let phi = phase + 2.0 * PI * k as f64 / size as f64;
            let x = cx + cfg.formation_radius * phi.cos() + pos_noise.sample(rng);
            let y = cy + cfg.formation_radius * phi.sin() + pos_noise.sample(rng);
            let facing = (cy - y).atan2(cx - x) + rot_noise.sample(rng);
            people.push((x, y, facing, Some(gi)));
        }
    }
    for &(x, y) in &anchors[sizes.len()..] {
        let theta = rng.random_range(-PI..PI);
        people.push((
            x + pos_noise.sample(rng),
            y + pos_noise.sample(rng),
            theta,
            None,
        ));
    }
    people.shuffle(rng);

    let mut groups: Vec<Vec<String>> = vec![Vec::new(); sizes.len()];
    let individuals = people
        .iter()
        .enumerate()
        .map(|(i, &(x, y, theta, g))| {
            let id = format!("p{i}");
            if let Some(g) = g {
                groups[g].push(id.clone());
            }
            Individual::new(id, x, y, theta)
        })
        .collect();
    let scene = Scene {
        frame_id: frame_id.to_string(),
        view_tag: ViewTag::Topdown,
        individuals,
        groups: Some(groups),
    };
    debug_assert!(scene.validate().is_ok());
    Ok(scene)
}

/// `n_scenes` scenes, each drawn from its own seed derived from `cfg.seed`.
pub fn generate_corpus(cfg: &SynthConfig) -> Result<Dataset, SynthError> {
    cfg.validate()?;
    let scenes = (0..cfg.n_scenes)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, i as u64));
            generate_scene(cfg, &format!("frame-{i:05}"), &mut rng)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Dataset::new(
        format!("synth-{}", cfg.seed),
        Units::Meters,
        scenes,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{effort_angle, pair_distance};

    fn jitter_free() -> SynthConfig {
        SynthConfig {
            position_jitter: 0.0,
            orientation_jitter: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn facing_pair() {
        let cfg = SynthConfig {
            people_range: [2, 2],
            group_size_range: [2, 2],
            formation_radius: 0.5,
            min_center_separation: 1.5,
            singleton_fraction: 0.0,
            ..jitter_free()
        };
        let s = generate_scene(&cfg, "f", &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let (a, b) = (&s.individuals[0], &s.individuals[1]);
        assert!((pair_distance(a, b) - 1.0).abs() < 1e-12);
        assert!(effort_angle(a, b).unwrap() < 1e-9);
    }

    #[test]
    fn square_formation() {
        let cfg = SynthConfig {
            people_range: [4, 4],
            group_size_range: [4, 4],
            singleton_fraction: 0.0,
            ..jitter_free()
        };
        let s = generate_scene(&cfg, "f", &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let cx = s.individuals.iter().map(|i| i.x).sum::<f64>() / 4.0;
        let cy = s.individuals.iter().map(|i| i.y).sum::<f64>() / 4.0;
        let mut bearings: Vec<f64> = s
            .individuals
            .iter()
            .map(|i| (i.y - cy).atan2(i.x - cx))
            .collect();
        bearings.sort_by(f64::total_cmp);
        for w in bearings.windows(2) {
            assert!((w[1] - w[0] - PI / 2.0).abs() < 1e-9);
        }
        for i in &s.individuals {
            let to_center = (cy - i.y).atan2(cx - i.x);
            assert!(crate::scene::wrap_angle(to_center - i.theta).abs() < 1e-9);
        }
    }

    #[test]
    fn people_count_within_range() {
        let cfg = SynthConfig {
            n_scenes: 40,
            seed: 5,
            ..Default::default()
        };
        let ds = generate_corpus(&cfg).unwrap();
        for s in &ds.scenes {
            assert!((10..=20).contains(&s.individuals.len()));
            for g in s.groups.as_ref().unwrap() {
                assert!((2..=6).contains(&g.len()), "{g:?}");
            }
        }
    }

    #[test]
    fn empty_corpus() {
        let ds = generate_corpus(&SynthConfig {
            n_scenes: 0,
            ..Default::default()
        })
        .unwrap();
        assert!(ds.is_empty());
    }

    #[test]
    fn deterministic() {
        let cfg = SynthConfig {
            n_scenes: 5,
            seed: 9,
            ..Default::default()
        };
        assert_eq!(
            generate_corpus(&cfg).unwrap(),
            generate_corpus(&cfg).unwrap()
        );
    }

    #[test]
    fn rejects_overlapping_formations() {
        let cfg = SynthConfig {
            min_center_separation: 1.2,
            ..Default::default()
        };
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("min_center_separation"), "{err}");
    }

    #[test]
    fn crowded_arena_fails() {
        let cfg = SynthConfig {
            people_range: [40, 40],
            group_size_range: [2, 2],
            arena_size: 3.0,
            max_attempts: 20,
            ..Default::default()
        };
        assert!(matches!(
            generate_scene(&cfg, "f", &mut ChaCha8Rng::seed_from_u64(0)),
            Err(SynthError::PlacementFailure { .. })
        ));
    }

    #[test]
    fn group_sizes_respect_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 0..40 {
            let sizes = draw_group_sizes(n, [2, 6], &mut rng);
            assert!(sizes.iter().all(|s| (2..=6).contains(s)));
            assert!(sizes.iter().sum::<usize>() <= n);
            assert!(n - sizes.iter().sum::<usize>() < 2);
        }
    }

    #[test]
    fn hard_preset_packs_groups() {
        let cfg = SynthConfig {
            n_scenes: 10,
            ..SynthConfig::hard()
        };
        let ds = generate_corpus(&cfg).unwrap();
        for s in &ds.scenes {
            let groups = s.groups.as_ref().unwrap();
            assert!(groups.iter().map(|g| g.len()).sum::<usize>() == s.individuals.len());
        }
    }
}
