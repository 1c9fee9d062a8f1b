#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "hazgam/common.hpp"

using namespace hazgam;

TEST_CASE("channel naming covers 27 channels") {
    CHECK(channel_name(0) == "pga");
    CHECK(channel_name(1) == "pgv");
    CHECK(channel_name(2) == "psa_0p01");
    CHECK(channel_name(7) == "psa_0p075");
    CHECK(channel_name(26) == "psa_5p0");
    std::set<std::string> names;
    for (std::size_t c = 0; c < kNumChannels; ++c) names.insert(channel_name(c));
    CHECK(names.size() == kNumChannels);
    CHECK_THROWS_AS(channel_name(27), DomainError);
}

TEST_CASE("psa channel lookup round-trips with channel_period") {
    for (std::size_t c = 2; c < kNumChannels; ++c) CHECK(psa_channel(channel_period(c)) == c);
    CHECK(channel_period(kPgaChannel) == 0.0);
    CHECK_THROWS_AS(psa_channel(0.33), DomainError);
    CHECK(std::is_sorted(kPsaPeriods.begin(), kPsaPeriods.end()));
}

TEST_CASE("seed derivation is deterministic and label sensitive") {
    CHECK(mix_seed(1, 2) == mix_seed(1, 2));
    CHECK(mix_seed(1, 2) != mix_seed(1, 3));
    CHECK(mix_seed(1, 2) != mix_seed(2, 2));
    CHECK(derive_seed(5, "train") == derive_seed(5, "train"));
    CHECK(derive_seed(5, "train") != derive_seed(5, "split"));
}

TEST_CASE("portable random helpers") {
    Rng rng(42);
    double sum = 0.0, sq = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = uniform01(rng);
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        const double z = standard_normal(rng);
        sum += z;
        sq += z * z;
    }
    // Standard error of the mean is 1/sqrt(n) ~ 0.0022.
    CHECK(std::abs(sum / n) < 0.012);
    CHECK(std::abs(sq / n - 1.0) < 0.02);

    std::vector<int> counts(7, 0);
    for (int i = 0; i < 70000; ++i) ++counts[uniform_index(rng, 7)];
    for (int c : counts) CHECK(std::abs(c - 10000) < 500);
    CHECK_THROWS_AS(uniform_index(rng, 0), DomainError);

    std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    shuffle_in_place(v, rng);
    std::vector<int> s = v;
    std::sort(s.begin(), s.end());
    CHECK(s == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
}

TEST_CASE("same seed gives the same stream") {
    Rng a(9), b(9);
    for (int i = 0; i < 100; ++i) CHECK(standard_normal(a) == standard_normal(b));
}

TEST_CASE("format_double round-trips") {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0}) {
        CHECK(std::stod(format_double(v)) == v);
    }
    CHECK(format_double(std::nan("")) == "nan");
    CHECK(format_double(-INFINITY) == "-inf");
}

TEST_CASE("atomic write creates directories and leaves no temporary") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "hazgam_common_test" / "nested";
    fs::remove_all(dir.parent_path());
    const std::string path = (dir / "x.txt").string();
    write_file_atomic(path, "hello\n");
    CHECK(read_file(path) == "hello\n");
    write_file_atomic(path, "again\n");
    CHECK(read_file(path) == "again\n");
    CHECK_FALSE(fs::exists(path + ".tmp"));
    CHECK_THROWS_AS(read_file((dir / "missing").string()), Error);
    fs::remove_all(dir.parent_path());
}
