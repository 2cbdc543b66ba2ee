use std::sync::atomic::{AtomicU64, Ordering};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::acf::{pooled_window_length, select_window_length, WindowSelection};
use super::sequence::SceneSequence;
use super::split::{chronological_split, Split, SplitMode, SplitParts};
use crate::error::{Error, Result};
use crate::pipeline::{ScalerParams, Scene};

/// One volcano's preprocessed scenes in °C, chronologically ordered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessedVolcano {
    pub volcano_id: String,
    pub scenes: Vec<Scene>,
}

/// Maximum excess temperature of each scene.
pub fn max_temperature_series(scenes: &[Scene]) -> Vec<f64> {
    scenes
        .iter()
        .map(|s| s.grid.max_valid().unwrap_or(0.0))
        .collect()
}

/// Every run of `n + 1` consecutive scenes as one sequence (stride 1).
pub fn build_sequences(
    volcano_id: &str,
    scenes: &[Scene],
    n: usize,
    uniform_maps: bool,
) -> Result<Vec<SceneSequence>> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "window length must be at least 1".into(),
        ));
    }
    if scenes.len() < n + 1 {
        log::warn!(
            "{volcano_id}: {} scenes cannot form a window of {n} plus a target",
            scenes.len()
        );
        return Ok(Vec::new());
    }
    scenes
        .windows(n + 1)
        .map(|w| SceneSequence::from_scenes(volcano_id, w, uniform_maps))
        .collect()
}

/// How the window length is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy", content = "n")]
pub enum WindowPolicy {
    Fixed(usize),
    /// Rounded mean of the per-volcano selections over the training split.
    Pooled,
    /// Selection from the training volcano's own series. Only meaningful
    /// with a single training volcano.
    PerVolcano,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetOptions {
    pub split_mode: SplitMode,
    pub window: WindowPolicy,
    /// Per-pixel time maps use only the scene gap, ignoring fill age.
    #[serde(default)]
    pub uniform_maps: bool,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        DatasetOptions {
            split_mode: SplitMode::Standard,
            window: WindowPolicy::Pooled,
            uniform_maps: false,
        }
    }
}

/// Which part of a run is reading data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Computing loss gradients: only training data may be read.
    Gradient,
    /// Scoring, model selection and reporting.
    Evaluation,
}

/// Pixel reads per phase and split, plus refused reads.
#[derive(Debug, Default)]
pub struct AccessAudit {
    gradient: [AtomicU64; 3],
    evaluation: [AtomicU64; 3],
    refused: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AccessReport {
    /// Pixels read per split, `[train, validation, test]`.
    pub gradient: [u64; 3],
    pub evaluation: [u64; 3],
    pub refused: u64,
}

impl AccessAudit {
    fn record(&self, phase: Phase, split: Split, pixels: u64) {
        let slot = match phase {
            Phase::Gradient => &self.gradient[split.index()],
            Phase::Evaluation => &self.evaluation[split.index()],
        };
        slot.fetch_add(pixels, Ordering::Relaxed);
    }

    pub fn report(&self) -> AccessReport {
        let load = |a: &[AtomicU64; 3]| [0, 1, 2].map(|i| a[i].load(Ordering::Relaxed));
        AccessReport {
            gradient: load(&self.gradient),
            evaluation: load(&self.evaluation),
            refused: self.refused.load(Ordering::Relaxed),
        }
    }

    pub fn reset(&self) {
        for a in self.gradient.iter().chain(&self.evaluation) {
            a.store(0, Ordering::Relaxed);
        }
        self.refused.store(0, Ordering::Relaxed);
    }
}

/// Scene-to-split assignment, written next to a dataset for auditing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub volcano_id: String,
    pub date: NaiveDate,
    pub split: Split,
}

/// Model-ready sequences for every split.
///
/// Sequences hold min-max scaled scenes; the scaler is fit on the training
/// scenes of the volcanoes being trained on. Reads go through
/// [`Dataset::read`], which refuses non-training data in the gradient phase
/// and counts every pixel handed out.
#[derive(Debug)]
pub struct Dataset {
    volcanoes: Vec<ProcessedVolcano>,
    options: DatasetOptions,
    training_filter: Option<String>,
    window: usize,
    selections: Vec<(String, WindowSelection)>,
    scaler: ScalerParams,
    sequences: SplitParts<SceneSequence>,
    audit: AccessAudit,
}

impl Dataset {
    /// Splits every volcano, chooses the window, fits the scaler on the
    /// training scenes and builds the sequences.
    pub fn build(volcanoes: Vec<ProcessedVolcano>, options: DatasetOptions) -> Result<Self> {
        Self::assemble(volcanoes, options, None)
    }

    fn assemble(
        volcanoes: Vec<ProcessedVolcano>,
        options: DatasetOptions,
        training_filter: Option<String>,
    ) -> Result<Self> {
        if volcanoes.is_empty() {
            return Err(Error::Data("no volcanoes to build a dataset from".into()));
        }
        let mut ids: Vec<&str> = volcanoes.iter().map(|v| v.volcano_id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Data("duplicate volcano id".into()));
        }
        let parts: Vec<SplitParts<Scene>> = volcanoes
            .iter()
            .map(|v| chronological_split(&v.scenes, options.split_mode))
            .collect();
        let trains = |v: &ProcessedVolcano| {
            training_filter
                .as_deref()
                .is_none_or(|id| id == v.volcano_id)
        };

        let mut selections = Vec::new();
        if !matches!(options.window, WindowPolicy::Fixed(_)) {
            for (v, p) in volcanoes.iter().zip(&parts).filter(|(v, _)| trains(v)) {
                match select_window_length(&max_temperature_series(&p.train)) {
                    Ok(s) => selections.push((v.volcano_id.clone(), s)),
                    Err(e) if options.window == WindowPolicy::Pooled => {
                        log::warn!("{}: skipped in window selection, {e}", v.volcano_id)
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        let window = match options.window {
            WindowPolicy::Fixed(n) => n,
            WindowPolicy::Pooled => {
                pooled_window_length(&selections.iter().map(|(_, s)| s.window).collect::<Vec<_>>())?
            }
            WindowPolicy::PerVolcano => {
                if selections.len() != 1 {
                    return Err(Error::InvalidArgument(
                        "per-volcano window selection needs exactly one training volcano".into(),
                    ));
                }
                selections[0].1.window
            }
        };
        if window == 0 {
            return Err(Error::InvalidArgument(
                "window length must be at least 1".into(),
            ));
        }

        let scaler = ScalerParams::fit(
            volcanoes
                .iter()
                .zip(&parts)
                .filter(|(v, _)| trains(v))
                .flat_map(|(_, p)| p.train.iter().map(|s| &s.grid)),
        )?;

        let mut sequences = SplitParts::default();
        for (v, p) in volcanoes.iter().zip(&parts) {
            for split in Split::ALL {
                if split == Split::Train && !trains(v) {
                    continue;
                }
                let scaled: Vec<Scene> = p
                    .get(split)
                    .iter()
                    .map(|s| Scene {
                        grid: scaler.scale_grid(&s.grid),
                        ..s.clone()
                    })
                    .collect();
                if scaled.is_empty() {
                    continue;
                }
                let seqs = build_sequences(&v.volcano_id, &scaled, window, options.uniform_maps)?;
                sequences.get_mut(split).extend(seqs);
            }
        }
        Ok(Dataset {
            volcanoes,
            options,
            training_filter,
            window,
            selections,
            scaler,
            sequences,
            audit: AccessAudit::default(),
        })
    }

    /// Restricts training to one volcano. Validation and test stay
    /// all-volcano; the window and scaler are re-derived from the chosen
    /// volcano's training scenes (the window as `policy` directs).
    pub fn filter_volcano(&self, volcano_id: &str, policy: WindowPolicy) -> Result<Dataset> {
        let options = DatasetOptions {
            window: policy,
            ..self.options
        };
        Self::build_for_volcano(self.volcanoes.clone(), options, volcano_id)
    }

    /// Like [`Dataset::build`], but training only on `volcano_id`.
    pub fn build_for_volcano(
        volcanoes: Vec<ProcessedVolcano>,
        options: DatasetOptions,
        volcano_id: &str,
    ) -> Result<Dataset> {
        if !volcanoes.iter().any(|v| v.volcano_id == volcano_id) {
            return Err(Error::InvalidArgument(format!(
                "unknown volcano {volcano_id:?}"
            )));
        }
        Self::assemble(volcanoes, options, Some(volcano_id.to_string()))
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn scaler(&self) -> ScalerParams {
        self.scaler
    }

    pub fn options(&self) -> DatasetOptions {
        self.options
    }

    pub fn training_filter(&self) -> Option<&str> {
        self.training_filter.as_deref()
    }

    pub fn window_selections(&self) -> &[(String, WindowSelection)] {
        &self.selections
    }

    pub fn volcano_ids(&self) -> Vec<&str> {
        self.volcanoes
            .iter()
            .map(|v| v.volcano_id.as_str())
            .collect()
    }

    pub fn volcanoes(&self) -> &[ProcessedVolcano] {
        &self.volcanoes
    }

    pub fn len(&self, split: Split) -> usize {
        self.sequences.get(split).len()
    }

    /// One sequence, recorded against `phase`. The gradient phase may only
    /// read training sequences.
    pub fn read(&self, split: Split, phase: Phase, index: usize) -> Result<&SceneSequence> {
        if phase == Phase::Gradient && split != Split::Train {
            self.audit.refused.fetch_add(1, Ordering::Relaxed);
            return Err(Error::SplitViolation(format!(
                "{split} data requested while computing gradients"
            )));
        }
        let seq = self.sequences.get(split).get(index).ok_or_else(|| {
            Error::InvalidArgument(format!("{split} sequence {index} out of range"))
        })?;
        let (h, w) = seq.dims();
        self.audit
            .record(phase, split, ((seq.len() + 1) * h * w) as u64);
        Ok(seq)
    }

    /// All sequences of a split, each recorded as a read.
    pub fn read_all(&self, split: Split, phase: Phase) -> Result<Vec<&SceneSequence>> {
        (0..self.len(split))
            .map(|i| self.read(split, phase, i))
            .collect()
    }

    pub fn audit(&self) -> &AccessAudit {
        &self.audit
    }

    /// Which split each scene of each volcano landed in.
    pub fn split_records(&self) -> Vec<SplitRecord> {
        let mut out = Vec::new();
        for v in &self.volcanoes {
            let parts = chronological_split(&v.scenes, self.options.split_mode);
            for split in Split::ALL {
                out.extend(parts.get(split).iter().map(|s| SplitRecord {
                    volcano_id: v.volcano_id.clone(),
                    date: s.date,
                    split,
                }));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use std::collections::BTreeSet;

    fn volcano(id: &str, count: usize, offset: f64) -> ProcessedVolcano {
        let base = NaiveDate::from_ymd_opt(2003, 5, 1).unwrap();
        let mut day = 0u64;
        let scenes = (0..count)
            .map(|k| {
                day += 20 + (k as u64 * 7) % 31;
                let grid = Grid::from_fn(4, 4, |r, c| offset + ((k * 5 + r * 3 + c) % 13) as f64);
                Scene::observed(base + chrono::Days::new(day), grid)
            })
            .collect();
        ProcessedVolcano {
            volcano_id: id.into(),
            scenes,
        }
    }

    fn fixed(n: usize) -> DatasetOptions {
        DatasetOptions {
            window: WindowPolicy::Fixed(n),
            ..DatasetOptions::default()
        }
    }

    #[test]
    fn sequence_counts() {
        let v = volcano("a", 10, 0.0);
        assert_eq!(
            build_sequences("a", &v.scenes[..7], 6, false)
                .unwrap()
                .len(),
            1
        );
        assert_eq!(build_sequences("a", &v.scenes, 6, false).unwrap().len(), 4);
        assert!(build_sequences("a", &v.scenes[..6], 6, false)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn preceding_gaps_match_an_independent_date_scan() {
        let v = volcano("a", 12, 0.0);
        let seqs = build_sequences("a", &v.scenes, 4, false).unwrap();
        for (i, s) in seqs.iter().enumerate() {
            let dates: Vec<NaiveDate> = v.scenes[i..i + 5].iter().map(|s| s.date).collect();
            let mut want = vec![0.0];
            for k in 1..4 {
                want.push(dates[k].signed_duration_since(dates[k - 1]).num_days() as f64);
            }
            assert_eq!(s.dt_preceding, want);
            for k in 0..3 {
                assert_eq!(s.dt_following[k], s.dt_preceding[k + 1]);
            }
        }
    }

    #[test]
    fn sequences_never_straddle_splits_or_volcanoes() {
        let d =
            Dataset::build(vec![volcano("a", 30, 0.0), volcano("b", 25, 5.0)], fixed(3)).unwrap();
        let records = d.split_records();
        for split in Split::ALL {
            for seq in &d.sequences.get(split)[..] {
                let scenes = seq.inputs.iter().chain([&seq.target]);
                for s in scenes {
                    let r = records
                        .iter()
                        .find(|r| r.volcano_id == seq.volcano_id && r.date == s.date)
                        .unwrap();
                    assert_eq!(r.split, split);
                }
            }
        }
        // 30 -> 21/4/5, 25 -> 17/4/4; window 3.
        assert_eq!(d.len(Split::Train), 18 + 14);
        assert_eq!(d.len(Split::Validation), 1 + 1);
        assert_eq!(d.len(Split::Test), 2 + 1);
    }

    #[test]
    fn scaler_uses_training_scenes_only() {
        let a = volcano("a", 20, 0.0);
        let d = Dataset::build(vec![a.clone()], fixed(3)).unwrap();
        let flat: Vec<f64> = a.scenes[..14]
            .iter()
            .flat_map(|s| s.grid.data().to_vec())
            .collect();
        let lo = flat.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = flat.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(d.scaler(), ScalerParams::new(lo, hi).unwrap());
    }

    #[test]
    fn gradient_phase_refuses_other_splits() {
        let d = Dataset::build(vec![volcano("a", 40, 0.0)], fixed(3)).unwrap();
        assert!(d.read(Split::Train, Phase::Gradient, 0).is_ok());
        assert!(matches!(
            d.read(Split::Validation, Phase::Gradient, 0),
            Err(Error::SplitViolation(_))
        ));
        d.read(Split::Test, Phase::Evaluation, 0).unwrap();
        let r = d.audit().report();
        assert_eq!(r.gradient, [4 * 16, 0, 0]);
        assert_eq!(r.evaluation, [0, 0, 4 * 16]);
        assert_eq!(r.refused, 1);
    }

    fn keys(d: &Dataset, split: Split) -> BTreeSet<(String, NaiveDate)> {
        d.sequences
            .get(split)
            .iter()
            .map(|s| (s.volcano_id.clone(), s.target.date))
            .collect()
    }

    #[test]
    fn filtering_matches_building_from_one_volcano() {
        let all = vec![volcano("a", 44, 0.0), volcano("b", 30, 9.0)];
        let d = Dataset::build(all.clone(), fixed(4)).unwrap();
        let f = d.filter_volcano("a", WindowPolicy::Fixed(4)).unwrap();
        let alone = Dataset::build(vec![all[0].clone()], fixed(4)).unwrap();
        assert_eq!(f.sequences.train, alone.sequences.train);
        assert_eq!(f.scaler(), alone.scaler());
        // Validation stays all-volcano.
        assert_eq!(keys(&f, Split::Validation), keys(&d, Split::Validation));

        let again = f.filter_volcano("a", WindowPolicy::Fixed(4)).unwrap();
        assert_eq!(again.sequences.train, f.sequences.train);

        let mut union = BTreeSet::new();
        for id in ["a", "b"] {
            union.extend(keys(
                &d.filter_volcano(id, WindowPolicy::Fixed(4)).unwrap(),
                Split::Train,
            ));
        }
        assert_eq!(union, keys(&d, Split::Train));
        assert!(d.filter_volcano("zzz", WindowPolicy::Fixed(4)).is_err());
    }

    #[test]
    fn pooled_window_is_within_bounds() {
        let mut vs = vec![volcano("a", 60, 0.0), volcano("b", 60, 2.0)];
        for v in &mut vs {
            for (k, s) in v.scenes.iter_mut().enumerate() {
                s.grid.set(0, 0, 20.0 + 10.0 * (k as f64 * 0.4).sin());
            }
        }
        let d = Dataset::build(vs, DatasetOptions::default()).unwrap();
        assert!((3..=10).contains(&d.window()));
        assert_eq!(d.window_selections().len(), 2);
    }
}
