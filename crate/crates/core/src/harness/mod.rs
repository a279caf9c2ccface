//! Video-level k-fold cross-validation and the command-line interface.

pub mod cli;
mod cv;
mod split;

pub use cv::{
    load_video, run_cv, CvConfig, CvReport, FoldReport, LabeledVideo, LeakageAudit, MemberLoss,
    MemberSummary, SkippedVideo,
};
pub use split::{kfold_split, FoldAssignment};
