#pragma once

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hazgam/common.hpp"
#include "hazgam/flatfile.hpp"

namespace hazgam {

// Nested grouping: every record has an event, every event one region.
struct Grouping {
    std::vector<int> region;          // per record, region flag
    std::vector<std::size_t> event;   // per record, dense event index
    std::vector<std::string> event_names;

    std::size_t size() const { return event.size(); }
    /// Throws DomainError if an event appears in more than one region.
    void validate() const;
};

Grouping make_grouping(const RecordSet& rs);

struct EmOptions {
    double tol = 1e-8;     // absolute change in log-likelihood
    int max_iter = 500;
};

// Two-level random-intercept fit for one channel.
struct ChannelFit {
    double mu = 0.0;
    double tau = 0.0;
    double phi_r = 0.0;
    double phi = 0.0;
    double sigma = 0.0;
    double log_likelihood = 0.0;
    int iterations = 0;
    bool converged = false;
    bool single_region = false;
    bool degenerate = false;  // zero total variance
    std::map<int, double> region_effect;   // delta BR
    std::vector<double> event_effect;      // delta BE, by event index
    std::vector<double> within;            // delta WER, per record
};

/// ML fit of y = mu + r_region + e_event + eps by EM.
ChannelFit fit_nested_random_intercepts(std::span<const double> y, const Grouping& g,
                                        const EmOptions& opts = {});

struct VarianceComponents {
    Spectrum mu{};
    Spectrum tau{};
    Spectrum phi_r{};
    Spectrum phi{};
    Spectrum sigma{};
    Spectrum log_likelihood{};
    bool single_region = false;
    std::vector<ChannelFit> channels;

    double total_log_likelihood() const;
};

/// Per-channel fits over an N x 27 residual matrix (rows are records).
VarianceComponents fit_variance_components(const Eigen::MatrixXd& residuals, const Grouping& g,
                                           const EmOptions& opts = {});

/// sqrt(tau^2 + phi_r^2 + phi^2); throws DomainError on negative input.
double total_sigma(double tau, double phi_r, double phi);
Spectrum total_sigma(const VarianceComponents& vc);

enum class UpdateRule { literal, event_centering };
std::string to_string(UpdateRule r);
UpdateRule update_rule_from_string(const std::string& s);

struct IterationLog {
    std::size_t iteration = 0;
    double log_likelihood = 0.0;
    double relative_change = 0.0;
    double mean_tau = 0.0;
    double mean_phi_r = 0.0;
    double mean_phi = 0.0;
    double mean_sigma = 0.0;
};

struct MixedEffectsOptions {
    UpdateRule rule = UpdateRule::literal;
    double epsilon = 0.05;  // relative change in total log-likelihood
    std::size_t max_iter = 5;
    EmOptions em;
};

// Retrains the fixed-effects model on modified targets (N x 27) and returns
// its predictions for the same records (N x 27). May throw to signal
// divergence.
using Refitter = std::function<Eigen::MatrixXd(const Eigen::MatrixXd& targets)>;

struct MixedEffectsResult {
    Eigen::MatrixXd predictions;   // from the last stable iteration
    Eigen::MatrixXd residuals;     // y0 - predictions
    VarianceComponents components;
    std::vector<IterationLog> log;
    bool converged = false;
    bool aborted = false;  // refit threw; last stable iteration returned
};

MixedEffectsResult iterate_mixed_effects(const Eigen::MatrixXd& y0, const Grouping& g,
                                         const Refitter& refit,
                                         const MixedEffectsOptions& opts = {});

struct ResidualDiagnostics {
    double mean = 0.0;
    double std = 0.0;
    double excess_kurtosis = 0.0;
    double outlier_pct = 0.0;  // percent beyond 3 std
    bool degenerate = false;   // zero variance; kurtosis undefined
    std::size_t n = 0;
};

/// Requires at least 8 values (DomainError otherwise).
ResidualDiagnostics residual_diagnostics(std::span<const double> residuals);
std::vector<ResidualDiagnostics> residual_diagnostics(const Eigen::MatrixXd& residuals);

struct ResidualBin {
    double lo = 0.0;
    double hi = 0.0;
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation, 0 for single values
    std::size_t count = 0;
};

/// Statistics of residuals grouped by covariate bins [lo, hi) (last bin
/// closed). Values outside the edges are ignored; empty bins are omitted.
std::vector<ResidualBin> binned_residual_summary(std::span<const double> residuals,
                                                 std::span<const double> covariate,
                                                 std::span<const double> edges);

}  // namespace hazgam
