#include <doctest.h>

#include <cmath>

#include "hazgam/evaluation.hpp"
#include "train_fixture.hpp"

using namespace hazgam;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index n, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd m(27, n);
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = standard_normal(rng);
    return m;
}

}  // namespace

TEST_CASE("metric identities") {
    const Eigen::MatrixXd t = random_matrix(30, 1);
    const auto perfect = metrics(t, t, "x");
    CHECK(perfect.mse == 0.0);
    CHECK(perfect.mae == 0.0);
    CHECK(perfect.r2 == 100.0);
    CHECK(perfect.n_records == 30);

    const Eigen::MatrixXd mean_pred = Eigen::MatrixXd::Constant(27, 30, t.mean());
    CHECK(metrics(mean_pred, t).r2 == doctest::Approx(0.0).epsilon(1e-12));

    const Eigen::MatrixXd p = random_matrix(30, 2);
    const auto m = metrics(p, t);
    double se = 0.0, ae = 0.0;
    for (Eigen::Index k = 0; k < p.size(); ++k) {
        se += (p.data()[k] - t.data()[k]) * (p.data()[k] - t.data()[k]);
        ae += std::abs(p.data()[k] - t.data()[k]);
    }
    CHECK(m.mse == doctest::Approx(se / 810.0).epsilon(1e-13));
    CHECK(m.mae == doctest::Approx(ae / 810.0).epsilon(1e-13));
    // MSE equals the weighted loss with unit weights.
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> pr = p.transpose(), tr = t.transpose();
    CHECK(hazbin_loss({pr.data(), static_cast<std::size_t>(pr.size())}, {tr.data(), static_cast<std::size_t>(tr.size())},
                      std::vector<double>(30, 1.0), 0.0, 0.0) == doctest::Approx(m.mse).epsilon(1e-12));

    const Eigen::MatrixXd flat = Eigen::MatrixXd::Constant(27, 5, 1.0);
    CHECK(metrics(p.leftCols(5), flat).r2_undefined);
    CHECK_THROWS_AS(metrics(t.leftCols(1), t.leftCols(1)), ShapeError);
    CHECK_THROWS_AS(metrics(t.topRows(5), t.topRows(5)), ShapeError);
    CHECK_THROWS_AS(metrics(t, p.leftCols(4)), ShapeError);
}

TEST_CASE("subset metrics select by magnitude and distance") {
    const Eigen::MatrixXd t = random_matrix(6, 3), p = random_matrix(6, 4);
    std::vector<ModelInput> xs(6);
    const double mw[] = {7.9, 7.0, 5.0, 7.8, 8.0, 6.0};
    const double rr[] = {10, 40, 5, 150, 100, 10};
    for (int k = 0; k < 6; ++k) {
        xs[k].mw = mw[k];
        xs[k].rrup = rr[k];
    }
    const auto f = canonical_filters();
    REQUIRE(f.size() == 3);
    const auto near = subset_metrics(p, t, xs, f[0]);
    CHECK(near.n_records == 2);
    const std::vector<Eigen::Index> keep{0, 1};
    CHECK(near.mse == metrics(p(Eigen::all, keep), t(Eigen::all, keep)).mse);
    const auto very = subset_metrics(p, t, xs, f[1]);
    CHECK(very.empty);
    CHECK(very.n_records == 1);
    CHECK(std::isnan(very.mse));
    CHECK(subset_metrics(p, t, xs, f[2]).n_records == 2);

    // Complementary subsets recombine into the full mse.
    const SubsetFilter a{"a", [](double m, double) { return m >= 7.0; }};
    const SubsetFilter b{"b", [](double m, double) { return m < 7.0; }};
    const auto ma = subset_metrics(p, t, xs, a), mb = subset_metrics(p, t, xs, b);
    CHECK((ma.mse * ma.n_records + mb.mse * mb.n_records) / 6.0 == doctest::Approx(metrics(p, t).mse).epsilon(1e-13));
}

TEST_CASE("evaluation table") {
    ModelEvaluation ev;
    ev.model = "mse";
    ev.test = {"test", 0.5, 0.25, 60.0, 10};
    ev.subsets.push_back({"mw>=7;rrup<=50", 1.0, 0.5, 10.0, 3});
    const std::vector<ModelEvaluation> rows{ev};
    CHECK(evaluation_table_csv(rows) ==
          "model,subset,mse,mae,r2_pct,n_records\nmse,test,0.5,0.25,60,10\nmse,mw>=7;rrup<=50,1,0.5,10,3\n");
}

TEST_CASE("record removal and hashing") {
    const auto p = hazgam::testing::small_problem();
    std::size_t removed = 0;
    const MwRrupFilter rm = [](double mw, double rrup) { return mw >= 6.0 && rrup <= 100.0; };
    const RecordSet kept = remove_records(p.full, rm, &removed);
    CHECK(kept.size() + removed == p.full.size());
    for (const auto& r : kept.records) CHECK_FALSE(rm(r.mw, r.rrup));
    CHECK(record_set_hash(p.full) == record_set_hash(p.full));
    CHECK(record_set_hash(p.full).size() == 16);
    if (removed > 0) CHECK(record_set_hash(kept) != record_set_hash(p.full));
}

TEST_CASE("ablation leaves the test split untouched") {
    const auto p = hazgam::testing::small_problem(2, 30);
    AblationConfig cfg;
    cfg.alphas = {0.25};
    cfg.base = hazgam::testing::quick_config(2);
    cfg.architecture = default_architecture(4, 1);
    const auto res = ablation_run(p.split, p.full, HazardCoeffs::reference(), cfg);
    CHECK(res.test_hash_before == res.test_hash_after);
    CHECK(res.test_hash_before == record_set_hash(p.split.test));
    REQUIRE(res.table.size() == 2);
    CHECK(res.table[0].model == "mse");
    CHECK(res.table[1].model == "hazbin_alpha=0.25");
    CHECK(res.table[0].test.n_records == p.split.test.size());
    CHECK(res.table[0].subsets.size() == 3);

    cfg.remove = [](double, double) { return true; };
    CHECK_THROWS_AS(ablation_run(p.split, p.full, HazardCoeffs::reference(), cfg), DomainError);
}
