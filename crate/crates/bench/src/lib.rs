//! Fixtures shared by the criterion benches.

use posedo::data::{ParamVector, TimeSeriesWindow};
use posedo::flow::FlowModel;
use posedo::seed;
use posedo::simulators::{simulate, SimulatorSpec};

/// Mid-box Brock–Hommes parameter.
pub fn bh_theta() -> ParamVector {
    SimulatorSpec::brock_hommes().param_space.midpoint()
}

/// Mid-box PGPS parameter.
pub fn pgps_theta() -> ParamVector {
    SimulatorSpec::pgps().param_space.midpoint()
}

/// `steps` observed Brock–Hommes windows.
pub fn bh_windows(steps: usize) -> Vec<TimeSeriesWindow> {
    simulate(&SimulatorSpec::brock_hommes(), &bh_theta(), 1, steps, 7).expect("mid-box parameter is stable")
}

/// A randomly initialized flow of the default size.
pub fn default_flow(d: usize) -> FlowModel {
    FlowModel::standard(d, posedo::stats::N_STATS, 1, &mut seed::rng(5))
}
