//! Skill, practice, quitting and persistence metrics over segmented
//! sessions. Every function is a pure function of the sessions it is given.

mod curves;
mod quitting;
mod skill;
mod spacing;
pub mod stats;

pub use curves::{learning_curves, shuffle_control, write_slopes_csv, CurvePoint, LearningCurveSet, SlopeRow};
pub use quitting::{
    default_index_ranges, persistence, quit_probability_curve, DeltaBins, IndexRange,
    PersistenceCell, PersistenceResult, QuitCell, QuitCurve,
};
pub use skill::{
    profiles, quartile_split, success, talent, talent_success_correlations, Basis,
    CorrelationReport, QuartileCorrelation, QuartileSplit, SkillProfile,
};
pub use spacing::{session_improvement, spacing_improvement, BreakBins, SpacingCurve, SpacingPoint};
pub use stats::{pearson, CorrelationResult, RunningStats, SlopeTest};
