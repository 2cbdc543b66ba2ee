use serde::{Deserialize, Serialize};

use crate::cells::TimeConvention;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::pipeline::Scene;

/// `n` chronologically ordered input scenes and the scene that follows them.
///
/// Both elapsed-time conventions are stored so any cell kind can consume
/// the same sequence:
///
/// * `dt_preceding[i] = t[i] - t[i-1]`, with `dt_preceding[0] = 0`;
/// * `dt_following[i] = t[i+1] - t[i]`, where `t[n]` is the target date.
///
/// Each per-pixel map adds the fill age of the earlier scene of the pair to
/// the scene gap (or is the uniform gap when built that way).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSequence {
    pub volcano_id: String,
    pub inputs: Vec<Scene>,
    pub target: Scene,
    pub dt_preceding: Vec<f64>,
    pub dt_following: Vec<f64>,
    pub dt_maps_preceding: Vec<Grid>,
    pub dt_maps_following: Vec<Grid>,
}

/// Day count between two dates.
pub fn gap_days(from: chrono::NaiveDate, to: chrono::NaiveDate) -> f64 {
    (to - from).num_days() as f64
}

impl SceneSequence {
    /// Builds a sequence from `n + 1` consecutive scenes, the last being the
    /// target. With `uniform_maps` the per-pixel maps ignore fill age.
    pub fn from_scenes(volcano_id: &str, scenes: &[Scene], uniform_maps: bool) -> Result<Self> {
        if scenes.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "a sequence needs at least 2 scenes, got {}",
                scenes.len()
            )));
        }
        let dims = scenes[0].grid.dims();
        for w in scenes.windows(2) {
            if w[1].date <= w[0].date {
                return Err(Error::Data(format!(
                    "{volcano_id}: scene dates not strictly increasing ({} then {})",
                    w[0].date, w[1].date
                )));
            }
            if w[1].grid.dims() != dims {
                return Err(Error::Data(format!(
                    "{volcano_id}: scene sizes differ within a sequence"
                )));
            }
        }
        let n = scenes.len() - 1;
        let (h, w) = dims;
        let map_for = |earlier: &Scene, gap: f64| {
            if uniform_maps {
                Grid::filled(h, w, gap)
            } else {
                earlier.fill_age.map(|a| a + gap)
            }
        };
        let mut dt_preceding = Vec::with_capacity(n);
        let mut dt_following = Vec::with_capacity(n);
        let mut dt_maps_preceding = Vec::with_capacity(n);
        let mut dt_maps_following = Vec::with_capacity(n);
        for i in 0..n {
            if i == 0 {
                dt_preceding.push(0.0);
                dt_maps_preceding.push(Grid::zeros(h, w));
            } else {
                let gap = gap_days(scenes[i - 1].date, scenes[i].date);
                dt_preceding.push(gap);
                dt_maps_preceding.push(map_for(&scenes[i - 1], gap));
            }
            let gap = gap_days(scenes[i].date, scenes[i + 1].date);
            dt_following.push(gap);
            dt_maps_following.push(map_for(&scenes[i], gap));
        }
        Ok(SceneSequence {
            volcano_id: volcano_id.to_string(),
            inputs: scenes[..n].to_vec(),
            target: scenes[n].clone(),
            dt_preceding,
            dt_following,
            dt_maps_preceding,
            dt_maps_following,
        })
    }

    /// Window length `n`.
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// `(height, width)` of every scene.
    pub fn dims(&self) -> (usize, usize) {
        self.target.grid.dims()
    }

    pub fn gaps(&self, convention: TimeConvention) -> &[f64] {
        match convention {
            TimeConvention::Preceding => &self.dt_preceding,
            TimeConvention::Following => &self.dt_following,
        }
    }

    pub fn dt_maps(&self, convention: TimeConvention) -> &[Grid] {
        match convention {
            TimeConvention::Preceding => &self.dt_maps_preceding,
            TimeConvention::Following => &self.dt_maps_following,
        }
    }

    /// Multiplies the scalar gap and the per-pixel map at each listed step
    /// of one convention by `factor`.
    pub fn scale_gaps(&mut self, convention: TimeConvention, steps: &[usize], factor: f64) {
        let (gaps, maps) = match convention {
            TimeConvention::Preceding => (&mut self.dt_preceding, &mut self.dt_maps_preceding),
            TimeConvention::Following => (&mut self.dt_following, &mut self.dt_maps_following),
        };
        for &i in steps {
            gaps[i] *= factor;
            maps[i] = maps[i].map(|v| v * factor);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn scenes(days: &[i64]) -> Vec<Scene> {
        let base = NaiveDate::from_ymd_opt(2001, 1, 1).unwrap();
        days.iter()
            .map(|&d| {
                let mut s = Scene::observed(base + chrono::Days::new(d as u64), Grid::zeros(2, 2));
                s.fill_age.set(0, 1, 5.0);
                s
            })
            .collect()
    }

    #[test]
    fn both_conventions_are_populated() {
        let s = scenes(&[0, 10, 30, 31]);
        let q = SceneSequence::from_scenes("v", &s, false).unwrap();
        assert_eq!(q.len(), 3);
        assert_eq!(q.dt_preceding, vec![0.0, 10.0, 20.0]);
        assert_eq!(q.dt_following, vec![10.0, 20.0, 1.0]);
        for i in 0..q.len() - 1 {
            assert_eq!(q.dt_following[i], q.dt_preceding[i + 1]);
        }
        assert_eq!(q.dt_maps_following[0].get(0, 1), 15.0);
        assert_eq!(q.dt_maps_following[0].get(0, 0), 10.0);
        assert_eq!(q.dt_maps_preceding[0].get(0, 1), 0.0);
        assert_eq!(q.dt_maps_preceding[2].get(0, 1), 25.0);

        let u = SceneSequence::from_scenes("v", &s, true).unwrap();
        assert_eq!(u.dt_maps_following[0].get(0, 1), 10.0);
    }

    #[test]
    fn unordered_dates_are_rejected() {
        let s = scenes(&[0, 10, 10]);
        assert!(SceneSequence::from_scenes("v", &s, false).is_err());
    }

    #[test]
    fn scaling_touches_only_listed_steps() {
        let s = scenes(&[0, 10, 30, 31]);
        let mut q = SceneSequence::from_scenes("v", &s, false).unwrap();
        q.scale_gaps(TimeConvention::Following, &[0], 10.0);
        assert_eq!(q.dt_following, vec![100.0, 20.0, 1.0]);
        assert_eq!(q.dt_maps_following[0].get(0, 1), 150.0);
        assert_eq!(q.dt_preceding, vec![0.0, 10.0, 20.0]);
    }
}
