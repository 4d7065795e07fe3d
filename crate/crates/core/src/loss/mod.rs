//! CTC loss and decoding, edit-distance error rates, and Beta-posterior
//! credible intervals on those rates.

pub mod ctc;
pub mod edit;
pub mod interval;

pub use ctc::{ctc_greedy_decode, ctc_item, is_feasible, CtcItem, BLANK};
pub use edit::{edit_distance, ErrorRate};
pub use interval::{beta_quantile, credible_interval, ErrorRateReport, Prior};
