//! Receptive fields, cost accounting and branch contribution.

mod contribution;
mod cost;
mod rf;

pub use contribution::{
    contribution_report, contribution_score, contribution_score_geometric, shares,
    ClassContribution, ContributionReport, ContributionSummary, SampleContribution,
};
pub use cost::{
    count_params_flops, depthwise_param_ratio, depthwise_ratio_closed_form, CostReport, LayerCost,
    Ratio, C_FFT,
};
pub use rf::{
    empirical_rf, empirical_rf_of_nodes, mask_extent, receptive_field, stack_receptive_field,
    PoolRf, RfLayer, RfReport, RF_THRESHOLD,
};
