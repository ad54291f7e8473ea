//! Chi-squared and total variation distances, mixing times, the cutoff
//! window and the lower bounds.
mod bounds;
mod chi2;
mod mixing;
mod tv;

pub use bounds::{
    chi2_iid_closed_form, chi2_product_closed_form, contingency_constant, contingency_cutoff, contingency_law,
    critical_start_bound, cutoff_time, cutoff_window, definetti_floor, theta_lower_bound, wilson_lower_bound,
    wilson_moment_from_origin, CutoffEntry, CutoffReport, DeFinettiFloor, ThetaBound, WilsonBound,
};
pub use chi2::{
    chi2_bruteforce, chi2_full_pointwise, chi2_full_sup, chi2_hamming, full_curve, hamming_curve, pointwise_curve,
    subset_curve, SpectralChi2,
};
pub use mixing::{
    corner, corollary_pair, distance_at, distance_curve, mixing_time, search_first_below, CurveSample, DistanceCurve,
    Evaluator, Metric, Start, MIXING_CEILING,
};
pub use tv::{
    start_representatives, tv_full, tv_full_sup, tv_hamming, tv_upper_from_chi2, tv_upper_from_chi2_log, TvFull,
    TvHamming,
};

#[cfg(test)]
mod tests;
