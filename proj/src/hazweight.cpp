#include "hazgam/hazweight.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

namespace hazgam {

HazardCoeffs HazardCoeffs::reference() {
    return HazardCoeffs{{0.8959, 3.814, -0.17, 2.683, -0.263, 5.046, -0.006435}};
}

double eval_hazard(const HazardCoeffs& c, double mw, double rrup) {
    const double d = mw - c[1];
    const double geom = 0.5 * std::log(rrup * rrup + c[5] * c[5]);
    return c[0] * d + c[2] * d * d + (c[3] + c[4] * mw) * geom + c[6] * rrup;
}

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct FitData {
    std::span<const double> mw, rrup, y;
    std::size_t n() const { return y.size(); }
};

double sum_sq_residual(const FitData& d, const HazardCoeffs& c) {
    double s = 0.0;
    for (std::size_t k = 0; k < d.n(); ++k) {
        const double r = eval_hazard(c, d.mw[k], d.rrup[k]) - d.y[k];
        s += r * r;
    }
    return s;
}

void residual_and_jacobian(const FitData& d, const HazardCoeffs& c, VectorXd& res, MatrixXd& J) {
    const auto n = static_cast<Eigen::Index>(d.n());
    res.resize(n);
    J.resize(n, 7);
    for (Eigen::Index k = 0; k < n; ++k) {
        const double m = d.mw[k];
        const double r = d.rrup[k];
        const double dm = m - c[1];
        const double s2 = r * r + c[5] * c[5];
        const double geom = 0.5 * std::log(s2);
        res(k) = eval_hazard(c, m, r) - d.y[k];
        J(k, 0) = dm;
        J(k, 1) = -c[0] - 2.0 * c[2] * dm;
        J(k, 2) = dm * dm;
        J(k, 3) = geom;
        J(k, 4) = m * geom;
        J(k, 5) = (c[3] + c[4] * m) * c[5] / s2;
        J(k, 6) = r;
    }
}

// Linear least squares for (c0, c2, c3, c4, c6) with c1 and c5 held fixed.
HazardCoeffs linear_start(const FitData& d, double c1, double c5) {
    const auto n = static_cast<Eigen::Index>(d.n());
    MatrixXd A(n, 5);
    VectorXd b(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const double m = d.mw[k];
        const double r = d.rrup[k];
        const double dm = m - c1;
        const double geom = 0.5 * std::log(r * r + c5 * c5);
        A(k, 0) = dm;
        A(k, 1) = dm * dm;
        A(k, 2) = geom;
        A(k, 3) = m * geom;
        A(k, 4) = r;
        b(k) = d.y[k];
    }
    VectorXd x = A.colPivHouseholderQr().solve(b);
    return HazardCoeffs{{x(0), c1, x(1), x(2), x(3), c5, x(4)}};
}

struct LmResult {
    HazardCoeffs coeffs;
    double sse = 0.0;
    int iterations = 0;
};

LmResult levenberg_marquardt(const FitData& d, HazardCoeffs c, const HazardFitOptions& opts) {
    double sse = sum_sq_residual(d, c);
    double lambda = 1e-3;
    VectorXd res;
    MatrixXd J;
    int it = 0;
    for (; it < opts.max_iter; ++it) {
        if (sse < 1e-28) break;
        residual_and_jacobian(d, c, res, J);
        const MatrixXd JtJ = J.transpose() * J;
        const VectorXd g = J.transpose() * res;
        VectorXd diag = JtJ.diagonal().cwiseMax(1e-12);

        bool accepted = false;
        double new_sse = sse;
        HazardCoeffs trial = c;
        while (lambda < 1e16) {
            MatrixXd A = JtJ;
            A.diagonal() += lambda * diag;
            const VectorXd step = A.ldlt().solve(-g);
            for (int i = 0; i < 7; ++i) trial[i] = c[i] + step(i);
            new_sse = sum_sq_residual(d, trial);
            if (std::isfinite(new_sse) && new_sse < sse) {
                accepted = true;
                break;
            }
            lambda *= 4.0;
        }
        if (!accepted) break;
        const double rel = (sse - new_sse) / std::max(sse, std::numeric_limits<double>::min());
        c = trial;
        sse = new_sse;
        lambda = std::max(lambda / 3.0, 1e-12);
        if (rel < opts.rel_tol) {
            ++it;
            break;
        }
    }
    if (c[5] < 0) c[5] = -c[5];  // the form depends on c5^2 only
    return {c, sse, it};
}

}  // namespace

HazardFit fit_hazard_gmm(std::span<const double> mw, std::span<const double> rrup,
                         std::span<const double> ln_pga, const HazardFitOptions& opts) {
    if (mw.size() != rrup.size() || mw.size() != ln_pga.size()) {
        throw ShapeError("fit_hazard_gmm: input lengths differ");
    }
    if (mw.size() < 7) {
        throw FitError("fit_hazard_gmm: need at least 7 records, got " + std::to_string(mw.size()));
    }
    for (std::size_t k = 0; k < mw.size(); ++k) {
        if (!std::isfinite(mw[k]) || !(rrup[k] >= 0.0) || !std::isfinite(ln_pga[k])) {
            throw FitError("fit_hazard_gmm: non-finite or negative input at index " +
                           std::to_string(k));
        }
    }
    FitData d{mw, rrup, ln_pga};

    // The form spans {1, M, M^2, G, M G, R} with G = ln sqrt(R^2 + c5^2);
    // require that span to be full rank on the data.
    {
        const auto n = static_cast<Eigen::Index>(d.n());
        MatrixXd A(n, 6);
        for (Eigen::Index k = 0; k < n; ++k) {
            const double m = mw[k] - 6.0;
            const double geom = 0.5 * std::log(rrup[k] * rrup[k] + opts.c5_start * opts.c5_start);
            A.row(k) << 1.0, m, m * m, geom, m * geom, rrup[k] / 100.0;
        }
        for (Eigen::Index j = 0; j < 6; ++j) {
            const double nrm = A.col(j).norm();
            if (nrm > 0) A.col(j) /= nrm;
        }
        Eigen::ColPivHouseholderQR<MatrixXd> qr(A);
        qr.setThreshold(1e-10);
        if (qr.rank() < 6) {
            throw FitError("fit_hazard_gmm: rank-deficient data (need spread in magnitude and distance)");
        }
    }

    LmResult best;
    best.sse = std::numeric_limits<double>::infinity();
    for (double c1 : opts.c1_starts) {
        LmResult r = levenberg_marquardt(d, linear_start(d, c1, opts.c5_start), opts);
        if (r.sse < best.sse) best = r;
    }
    if (!std::isfinite(best.sse)) throw FitError("fit_hazard_gmm: no start converged");

    HazardFit fit;
    fit.coeffs = best.coeffs;
    fit.iterations = best.iterations;
    double sse = 0.0, sae = 0.0, mean = 0.0;
    for (double v : ln_pga) mean += v;
    mean /= static_cast<double>(d.n());
    double sst = 0.0;
    for (std::size_t k = 0; k < d.n(); ++k) {
        const double r = eval_hazard(fit.coeffs, mw[k], rrup[k]) - ln_pga[k];
        sse += r * r;
        sae += std::abs(r);
        sst += (ln_pga[k] - mean) * (ln_pga[k] - mean);
    }
    const double n = static_cast<double>(d.n());
    fit.mse = sse / n;
    fit.mae = sae / n;
    fit.r2 = sst > 0 ? 1.0 - sse / sst : std::numeric_limits<double>::quiet_NaN();
    if (fit.coeffs[2] > 0) fit.warnings.push_back("c2 > 0: convex magnitude scaling");
    if (fit.coeffs[6] > 0) fit.warnings.push_back("c6 > 0: anelastic term grows with distance");
    return fit;
}

HazardFit fit_hazard_gmm(const RecordSet& train, const HazardFitOptions& opts) {
    std::vector<double> mw, rrup, y;
    mw.reserve(train.size());
    rrup.reserve(train.size());
    y.reserve(train.size());
    for (const auto& r : train.records) {
        mw.push_back(r.mw);
        rrup.push_back(r.rrup);
        y.push_back(r.targets[kPgaChannel]);
    }
    return fit_hazard_gmm(mw, rrup, y, opts);
}

std::vector<double> hazard_component(const HazardCoeffs& c, const BinGrid& grid) {
    grid.validate();
    std::vector<double> ln_pga(grid.size());
    for (std::size_t i = 0; i < grid.mw_bins(); ++i) {
        for (std::size_t j = 0; j < grid.rrup_bins(); ++j) {
            ln_pga[grid.flat(i, j)] = eval_hazard(c, grid.mw_mid(i), grid.rrup_mid(j));
        }
    }
    // exp(ln - max ln) == PGA / max PGA, and is exactly 1 at the argmax.
    const double top = *std::max_element(ln_pga.begin(), ln_pga.end());
    std::vector<double> H(grid.size());
    for (std::size_t k = 0; k < H.size(); ++k) H[k] = std::exp(ln_pga[k] - top);
    return H;
}

std::vector<double> bin_count_component(std::span<const BinIndex> batch_bins, const BinGrid& grid) {
    if (batch_bins.empty()) throw DomainError("bin_count_component: empty batch");
    std::vector<std::size_t> counts(grid.size(), 0);
    for (const auto& b : batch_bins) {
        if (b.i >= grid.mw_bins() || b.j >= grid.rrup_bins()) {
            throw DomainError("bin_count_component: bin index outside grid");
        }
        ++counts[grid.flat(b.i, b.j)];
    }
    const double max_count =
        static_cast<double>(*std::max_element(counts.begin(), counts.end()));
    std::vector<double> C(grid.size());
    for (std::size_t k = 0; k < C.size(); ++k) {
        const double capped = static_cast<double>(std::max(counts[k], kMinBinCount));
        C[k] = 1.0 + std::log(max_count / capped);
    }
    const double top = *std::max_element(C.begin(), C.end());
    // When max_count < 5 every bin shares one (possibly negative) value.
    for (auto& v : C) v = (v == top) ? 1.0 : v / top;
    return C;
}

double sigmoid_scale(double w_raw) { return 1.0 / (1.0 + std::exp(-4.0 * (w_raw - 0.5))); }

std::vector<double> combine_and_scale(std::span<const double> B, std::span<const double> H,
                                      double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("alpha must lie in [0, 1]");
    if (B.size() != H.size()) throw ShapeError("combine_and_scale: B and H differ in length");
    std::vector<double> W(B.size());
    for (std::size_t k = 0; k < W.size(); ++k) {
        W[k] = sigmoid_scale((1.0 - alpha) * B[k] + alpha * H[k]);
    }
    return W;
}

BinWeights make_bin_weights(const BinGrid& grid, std::vector<double> H, std::vector<double> B,
                            double alpha) {
    if (H.size() != grid.size() || B.size() != grid.size()) {
        throw ShapeError("make_bin_weights: component length does not match grid");
    }
    BinWeights bw;
    bw.grid = grid;
    bw.alpha = alpha;
    bw.W = combine_and_scale(B, H, alpha);
    bw.W_raw.resize(grid.size());
    for (std::size_t k = 0; k < bw.W_raw.size(); ++k) {
        bw.W_raw[k] = (1.0 - alpha) * B[k] + alpha * H[k];
    }
    bw.H = std::move(H);
    bw.B = std::move(B);
    return bw;
}

std::vector<double> batch_record_weights(std::span<const BinIndex> batch_bins, const BinGrid& grid,
                                         std::span<const double> H, double alpha) {
    const auto B = bin_count_component(batch_bins, grid);
    const auto W = combine_and_scale(B, H, alpha);
    std::vector<double> w(batch_bins.size());
    for (std::size_t k = 0; k < w.size(); ++k) w[k] = W[grid.flat(batch_bins[k].i, batch_bins[k].j)];
    return w;
}

double hazbin_loss(std::span<const double> pred, std::span<const double> target,
                   std::span<const double> w, double l2, double params_sq_norm) {
    if (pred.size() != target.size() || pred.size() != w.size() * kNumChannels) {
        throw ShapeError("hazbin_loss: expected pred, target of N x 27 and w of N");
    }
    if (w.empty()) throw ShapeError("hazbin_loss: empty batch");
    if (l2 < 0) throw DomainError("hazbin_loss: l2 must be non-negative");
    double total = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
        double row = 0.0;
        for (std::size_t c = 0; c < kNumChannels; ++c) {
            const double r = pred[k * kNumChannels + c] - target[k * kNumChannels + c];
            row += r * r;
        }
        total += w[k] * (row / static_cast<double>(kNumChannels));
    }
    return total / static_cast<double>(w.size()) + l2 * params_sq_norm;
}

std::string weights_csv(const BinWeights& bw) {
    std::ostringstream out;
    out << "mw_lo,mw_hi,rrup_lo,rrup_hi,H,B,W_raw,W\n";
    const auto& g = bw.grid;
    for (std::size_t i = 0; i < g.mw_bins(); ++i) {
        for (std::size_t j = 0; j < g.rrup_bins(); ++j) {
            const std::size_t k = g.flat(i, j);
            out << format_double(g.mw_edges[i]) << ',' << format_double(g.mw_edges[i + 1]) << ','
                << format_double(g.rrup_edges[j]) << ',' << format_double(g.rrup_edges[j + 1])
                << ',' << format_double(bw.H[k]) << ',' << format_double(bw.B[k]) << ','
                << format_double(bw.W_raw[k]) << ',' << format_double(bw.W[k]) << '\n';
        }
    }
    return out.str();
}

}  // namespace hazgam
