#include <doctest.h>

#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "gvida/errors.hpp"
#include "gvida/robust_target.hpp"

using namespace gvida;
using ad::Mat;

namespace {

Mat rows_of(std::initializer_list<std::initializer_list<double>> data) {
    const int r = static_cast<int>(data.size());
    const int c = static_cast<int>(data.begin()->size());
    Mat m(r, c);
    int i = 0;
    for (const auto& row : data) {
        int j = 0;
        for (double v : row) m(i, j++) = v;
        ++i;
    }
    return m;
}

}  // namespace

TEST_CASE("one-hot rows carry zero entropy and pass any threshold") {
    const Mat p = rows_of({{1.0, 0.0, 0.0}, {0.0, 0.0, 1.0}});
    const auto pl = target::pseudo_label(p, 0.0);
    CHECK(pl.labels == std::vector<int>{0, 2});
    CHECK(pl.entropies == std::vector<double>{0.0, 0.0});
    CHECK(pl.accepted_count() == 2);
    CHECK(pl.accepted_fraction() == 1.0);
}

TEST_CASE("uniform rows sit at maximum entropy and fail the default threshold") {
    const int C = 10;
    const Mat p = Mat::Constant(3, C, 1.0 / C);
    const double threshold = target::default_entropy_threshold(C);
    CHECK(threshold == doctest::Approx(0.5 * std::log(10.0)).epsilon(1e-15));
    const auto pl = target::pseudo_label(p, threshold);
    for (int i = 0; i < 3; ++i) {
        CHECK(pl.entropies[static_cast<size_t>(i)] ==
              doctest::Approx(std::log(10.0)).epsilon(1e-12));
        CHECK(pl.labels[static_cast<size_t>(i)] == -1);
    }
    CHECK(pl.accepted_count() == 0);
    CHECK(pl.accepted_fraction() == 0.0);
}

TEST_CASE("a mildly confident three-class row still exceeds the default cut") {
    const Mat p = rows_of({{0.7, 0.2, 0.1}});
    const auto pl = target::pseudo_label(p, target::default_entropy_threshold(3));
    CHECK(pl.entropies[0] == doctest::Approx(0.8018).epsilon(1e-3));
    CHECK(pl.entropies[0] > 0.5 * std::log(3.0));  // 0.8018 > 0.5493, so rejected
    CHECK(pl.labels[0] == -1);
    const auto loose = target::pseudo_label(p, 0.9);
    CHECK(loose.labels[0] == 0);
}

TEST_CASE("argmax ties resolve to the lowest index") {
    const Mat p = rows_of({{0.4, 0.4, 0.2}});
    const auto pl = target::pseudo_label(p, 10.0);
    CHECK(pl.labels[0] == 0);
}

TEST_CASE("malformed probability rows are named in the error") {
    Mat p = rows_of({{0.5, 0.5}, {0.9, 0.3}});
    CHECK_THROWS_WITH_AS(target::pseudo_label(p, 1.0), doctest::Contains("row 2"),
                         ParameterError);
    p = rows_of({{-0.1, 1.1}});
    CHECK_THROWS_AS(target::pseudo_label(p, 1.0), ParameterError);
}

TEST_CASE("lowering the threshold never grows the accepted set") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    Mat p(200, 4);
    for (int i = 0; i < 200; ++i) {
        for (int j = 0; j < 4; ++j) p(i, j) = u(rng);
        p.row(i) /= p.row(i).sum();
    }
    double prev = 1.5;
    std::set<int> prev_set;
    {
        const auto rows = target::pseudo_label(p, prev).accepted_rows();
        prev_set.insert(rows.begin(), rows.end());
    }
    for (double threshold : {1.2, 0.9, 0.6, 0.3, 0.05}) {
        const auto rows = target::pseudo_label(p, threshold).accepted_rows();
        const std::set<int> cur(rows.begin(), rows.end());
        for (int r : cur) CHECK(prev_set.count(r) == 1);  // cur is a subset of prev
        prev_set = cur;
    }
}

TEST_CASE("zero-sigma perturbation is the identity with labels copied through") {
    const Mat x = rows_of({{1.0, 2.0}, {3.0, 4.0}});
    const auto out = target::perturb(x, {1, 0}, 0.0, 77);
    CHECK(out.features == x);
    CHECK(out.labels == std::vector<int>{1, 0});
    CHECK(out.provenance == target::Provenance::perturbed);
}

TEST_CASE("perturbation noise is unbiased within three standard errors") {
    const int n = 10000;
    const double sigma = 0.1;
    Mat x(n, 2);
    for (int i = 0; i < n; ++i) x.row(i) << 2.5, -1.0;
    const auto out = target::perturb(x, std::vector<int>(n, 0), sigma, 13);
    const double se = 3.0 * sigma / std::sqrt(static_cast<double>(n));
    CHECK(std::abs(out.features.col(0).mean() - 2.5) < se);
    CHECK(std::abs(out.features.col(1).mean() + 1.0) < se);
}

TEST_CASE("perturbation is seed-deterministic") {
    const Mat x = rows_of({{0.0, 0.0}, {1.0, 1.0}});
    const auto a = target::perturb(x, {0, 1}, 0.5, 3);
    const auto b = target::perturb(x, {0, 1}, 0.5, 3);
    const auto c = target::perturb(x, {0, 1}, 0.5, 4);
    CHECK(a.features == b.features);
    CHECK(a.features != c.features);
}

TEST_CASE("regenerating an empty accepted set yields an empty batch") {
    codebook::Codebook cb;
    cb.entries = Mat::Ones(1, 2);
    const auto out = target::regenerate(Mat(0, 2), {}, [](const Mat& m) { return m; },
                                        [](const Mat& m) { return m; }, cb, 1.0, 5);
    CHECK(out.rows() == 0);
    CHECK(out.labels.empty());
    CHECK(out.provenance == target::Provenance::regenerated);
}

TEST_CASE("a single-entry codebook regenerates the decoded entry for every row") {
    codebook::Codebook cb;
    cb.entries = rows_of({{0.25, -1.5}});
    const Mat feats = rows_of({{1.0, 2.0}, {-3.0, 0.5}, {0.0, 0.0}});
    const auto out = target::regenerate(
        feats, {0, 1, 2}, [](const Mat& m) { return m; },
        [](const Mat& m) { return Mat(2.0 * m); }, cb, 0.7, 11);
    REQUIRE(out.rows() == 3);
    CHECK(out.labels == std::vector<int>{0, 1, 2});
    for (int i = 0; i < 3; ++i) {
        CHECK(out.features(i, 0) == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(out.features(i, 1) == doctest::Approx(-3.0).epsilon(1e-12));
    }
}

TEST_CASE("accepted row bookkeeping is consistent") {
    const Mat p = rows_of({{0.98, 0.02}, {0.5, 0.5}, {0.02, 0.98}});
    const auto pl = target::pseudo_label(p, 0.2);
    CHECK(pl.labels == std::vector<int>{0, -1, 1});
    CHECK(pl.accepted_rows() == std::vector<int>{0, 2});
    CHECK(pl.accepted_count() == 2);
    CHECK(pl.accepted_fraction() == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
}
