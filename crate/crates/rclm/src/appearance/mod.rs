//! Local appearance modeling: census descriptors, boosted per-landmark
//! detectors, response-map evaluation, and candidate extraction.

pub mod boost;
pub mod candidates;
pub mod census;
pub mod response;
pub mod train;
pub mod window;

pub use boost::{train_detector, BoostedDetector, ModeDetectors, WeakClassifier};
pub use candidates::{extract_candidates, merge_candidates, Candidate};
pub use census::{census_code, DescriptorGeometry, CENSUS_CODES};
pub use response::{response_map, ResponseGrid, ScaleLevel, SearchSpace};
pub use train::{patch_descriptor, train_mode_detectors};
pub use window::{extract_reference_window, ReferenceWindow, WINDOW_SPAN};
