#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "hazgam/flatfile.hpp"

namespace hazgam {

// ln(PGA) = c0 (M - c1) + c2 (M - c1)^2 + (c3 + c4 M) ln sqrt(R^2 + c5^2) + c6 R
struct HazardCoeffs {
    std::array<double, 7> c{};

    static HazardCoeffs reference();  // published global-crustal fit
    double operator[](std::size_t i) const { return c[i]; }
    double& operator[](std::size_t i) { return c[i]; }
    bool operator==(const HazardCoeffs&) const = default;
};

double eval_hazard(const HazardCoeffs& c, double mw, double rrup);

struct HazardFitOptions {
    std::vector<double> c1_starts{3.0, 4.0, 5.0};
    double c5_start = 5.0;
    double rel_tol = 1e-9;
    int max_iter = 500;
};

struct HazardFit {
    HazardCoeffs coeffs;
    double mse = 0.0;
    double mae = 0.0;
    double r2 = 0.0;  // fraction, not percent
    int iterations = 0;
    std::vector<std::string> warnings;  // e.g. positive c2 or c6
};

/// Least-squares fit of the hazard form to (mw, rrup, ln_pga) triples with a
/// damped Gauss-Newton (Levenberg-Marquardt) multi-start. Throws FitError for
/// fewer than 7 points or a rank-deficient design.
HazardFit fit_hazard_gmm(std::span<const double> mw, std::span<const double> rrup,
                         std::span<const double> ln_pga, const HazardFitOptions& opts = {});
HazardFit fit_hazard_gmm(const RecordSet& train, const HazardFitOptions& opts = {});

/// Hazard importance per bin: PGA at bin midpoints normalised by its maximum.
std::vector<double> hazard_component(const HazardCoeffs& c, const BinGrid& grid);

/// Batch-adaptive inverse-density component over the bins of one mini-batch.
/// Throws DomainError on an empty batch.
std::vector<double> bin_count_component(std::span<const BinIndex> batch_bins, const BinGrid& grid);

inline constexpr std::size_t kMinBinCount = 5;

double sigmoid_scale(double w_raw);

/// W = sigmoid(4 ((1 - alpha) B + alpha H - 0.5)), elementwise.
std::vector<double> combine_and_scale(std::span<const double> B, std::span<const double> H,
                                      double alpha);

struct BinWeights {
    BinGrid grid;
    std::vector<double> H;
    std::vector<double> B;
    double alpha = 0.0;
    std::vector<double> W_raw;
    std::vector<double> W;
};

BinWeights make_bin_weights(const BinGrid& grid, std::vector<double> H, std::vector<double> B,
                            double alpha);

/// Per-record weights for a mini-batch: bin counts from the batch itself,
/// hazard component supplied (frozen).
std::vector<double> batch_record_weights(std::span<const BinIndex> batch_bins, const BinGrid& grid,
                                         std::span<const double> H, double alpha);

/// (1/N) sum_k w_k mean_c (pred_kc - target_kc)^2 + l2 * params_sq_norm.
/// pred and target are row-major N x 27.
double hazbin_loss(std::span<const double> pred, std::span<const double> target,
                   std::span<const double> w, double l2, double params_sq_norm);

/// Fig.-2 style table: one row per bin.
std::string weights_csv(const BinWeights& bw);

}  // namespace hazgam
