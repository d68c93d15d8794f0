pub mod econometrics;
pub mod panel_io;
pub mod preprocess;
pub mod beta_algebra;
pub mod market_curves;
pub mod parallel;
pub mod uncertainty;
pub mod pipeline;
pub mod simulator;
