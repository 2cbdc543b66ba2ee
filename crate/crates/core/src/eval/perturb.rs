use serde::{Deserialize, Serialize};

use crate::cells::{Forecaster, TimeConvention};
use crate::dataset::SceneSequence;
use crate::error::{Error, Result};
use crate::pipeline::ScalerParams;

/// Which elapsed times of the input window are adjusted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Position {
    First,
    Last,
    All,
}

impl Position {
    fn label(self) -> &'static str {
        match self {
            Position::First => "First",
            Position::Last => "Last",
            Position::All => "All",
        }
    }

    /// Steps of a window of length `n` whose time input is adjusted.
    ///
    /// Under the preceding-gap convention step 0 carries no interval, so
    /// the first real time difference is at step 1.
    fn steps(self, n: usize, convention: TimeConvention) -> Vec<usize> {
        let first = match convention {
            TimeConvention::Following => 0,
            TimeConvention::Preceding => 1.min(n - 1),
        };
        match self {
            Position::First => vec![first],
            Position::Last => vec![n - 1],
            Position::All => (first..n).collect(),
        }
    }
}

/// Change in forecasts when elapsed times are rescaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationResult {
    pub label: String,
    pub position: Position,
    pub factor: f64,
    /// Mean of adjusted minus original forecast, °C.
    pub mean_diff: f64,
    /// RMSE of the adjusted forecast against the original, °C.
    pub rmse_vs_original: f64,
}

/// The six adjustments, in reporting order.
pub fn perturbation_labels() -> Vec<(Position, f64, String)> {
    let mut out = Vec::new();
    for factor in [0.1, 10.0] {
        for p in [Position::First, Position::Last, Position::All] {
            out.push((p, factor, format!("{} ΔT * {}", p.label(), factor)));
        }
    }
    out
}

fn compare(
    model: &Forecaster,
    seqs: &[&SceneSequence],
    scaler: &ScalerParams,
    convention: TimeConvention,
    position: Position,
    factor: f64,
    originals: &[Vec<f64>],
) -> Result<(f64, f64)> {
    let mut sum = 0.0;
    let mut sq = 0.0;
    let mut count = 0usize;
    for (seq, orig) in seqs.iter().zip(originals) {
        let mut adjusted = (*seq).clone();
        adjusted.scale_gaps(convention, &position.steps(seq.len(), convention), factor);
        let f = model.predict(&adjusted)?;
        for (&a, &o) in f.data().iter().zip(orig) {
            let d = scaler.inverse(a) - o;
            sum += d;
            sq += d * d;
            count += 1;
        }
    }
    Ok((sum / count as f64, (sq / count as f64).sqrt()))
}

/// Reruns forecasts with the first, last or all elapsed times of each
/// input window multiplied by 0.1 and by 10, and reports the change in °C.
///
/// Returns the identity control (factor 1) followed by the six adjustment
/// rows. Models that ignore elapsed time are rejected.
pub fn perturb_time_experiment(
    model: &Forecaster,
    seqs: &[&SceneSequence],
    scaler: &ScalerParams,
) -> Result<(PerturbationResult, Vec<PerturbationResult>)> {
    let convention = model.spec().cell_kind.time_convention().ok_or_else(|| {
        Error::InvalidArgument(format!(
            "{} does not use elapsed time; perturbing it is meaningless",
            model.spec().cell_kind
        ))
    })?;
    perturb_unchecked(model, seqs, scaler, convention)
}

pub(crate) fn perturb_unchecked(
    model: &Forecaster,
    seqs: &[&SceneSequence],
    scaler: &ScalerParams,
    convention: TimeConvention,
) -> Result<(PerturbationResult, Vec<PerturbationResult>)> {
    if seqs.is_empty() {
        return Err(Error::InvalidArgument("no sequences to perturb".into()));
    }
    let originals: Vec<Vec<f64>> = seqs
        .iter()
        .map(|s| {
            Ok(model
                .predict(s)?
                .data()
                .iter()
                .map(|&v| scaler.inverse(v))
                .collect())
        })
        .collect::<Result<_>>()?;
    let row = |position, factor, label: String| -> Result<PerturbationResult> {
        let (mean_diff, rmse_vs_original) = compare(
            model, seqs, scaler, convention, position, factor, &originals,
        )?;
        Ok(PerturbationResult {
            label,
            position,
            factor,
            mean_diff,
            rmse_vs_original,
        })
    };
    let identity = row(Position::All, 1.0, "Identity ΔT * 1".to_string())?;
    let rows = perturbation_labels()
        .into_iter()
        .map(|(p, f, label)| row(p, f, label))
        .collect::<Result<Vec<_>>>()?;
    Ok((identity, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::{CellKind, ModelSpec};
    use crate::grid::Grid;
    use crate::pipeline::Scene;
    use chrono::NaiveDate;

    fn seqs() -> Vec<SceneSequence> {
        let base = NaiveDate::from_ymd_opt(2008, 8, 8).unwrap();
        (0..3)
            .map(|k| {
                let scenes: Vec<Scene> = (0..4)
                    .map(|t| {
                        Scene::observed(
                            base + chrono::Days::new((40 * k + 13 * t + t * t) as u64),
                            Grid::from_fn(4, 4, |r, c| 0.1 * ((r + c + t + k) % 4) as f64),
                        )
                    })
                    .collect();
                SceneSequence::from_scenes("v", &scenes, false).unwrap()
            })
            .collect()
    }

    #[test]
    fn labels_follow_table_order() {
        let labels: Vec<String> = perturbation_labels().into_iter().map(|x| x.2).collect();
        assert_eq!(
            labels,
            [
                "First ΔT * 0.1",
                "Last ΔT * 0.1",
                "All ΔT * 0.1",
                "First ΔT * 10",
                "Last ΔT * 10",
                "All ΔT * 10"
            ]
        );
    }

    #[test]
    fn identity_control_is_zero_and_rows_change() {
        let data = seqs();
        let refs: Vec<&SceneSequence> = data.iter().collect();
        let scaler = ScalerParams::new(-5.0, 60.0).unwrap();
        for kind in [
            CellKind::ConvTimeLstm,
            CellKind::ConvTimeAwareLstm,
            CellKind::TimeLstm,
        ] {
            let m = Forecaster::new(ModelSpec::new(kind, vec![3], 3), 4).unwrap();
            let (id, rows) = perturb_time_experiment(&m, &refs, &scaler).unwrap();
            assert_eq!((id.mean_diff, id.rmse_vs_original), (0.0, 0.0));
            assert_eq!(rows.len(), 6);
            assert!(rows.iter().all(|r| r.rmse_vs_original > 0.0), "{kind}");
        }
    }

    #[test]
    fn time_blind_models_are_unaffected_then_rejected() {
        let data = seqs();
        let refs: Vec<&SceneSequence> = data.iter().collect();
        let scaler = ScalerParams::new(0.0, 1.0).unwrap();
        let m = Forecaster::new(ModelSpec::new(CellKind::ConvLstm, vec![3], 3), 4).unwrap();
        for conv in [TimeConvention::Following, TimeConvention::Preceding] {
            let (_, rows) = perturb_unchecked(&m, &refs, &scaler, conv).unwrap();
            assert!(rows
                .iter()
                .all(|r| r.mean_diff == 0.0 && r.rmse_vs_original == 0.0));
        }
        assert!(matches!(
            perturb_time_experiment(&m, &refs, &scaler),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn preceding_convention_skips_the_placeholder_gap() {
        assert_eq!(Position::First.steps(6, TimeConvention::Preceding), vec![1]);
        assert_eq!(Position::First.steps(6, TimeConvention::Following), vec![0]);
        assert_eq!(
            Position::All.steps(6, TimeConvention::Preceding),
            vec![1, 2, 3, 4, 5]
        );
        assert_eq!(Position::Last.steps(6, TimeConvention::Preceding), vec![5]);
    }
}
