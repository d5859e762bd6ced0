#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "gvida/errors.hpp"
#include "gvida/priors.hpp"

using namespace gvida;
using priors::Mat;
using priors::RowVec;

namespace {

RowVec rv(std::initializer_list<double> xs) {
    RowVec v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v(i++) = x;
    return v;
}

// Monte-Carlo KL(q || p) for diagonal Gaussians: average of log q(x) - log p(x)
// over draws from q. Slow but assumption-free, so it anchors the closed form.
double mc_kl(const RowVec& mq, const RowVec& vq, const RowVec& mp, const RowVec& vp, int n,
             std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> unit(0.0, 1.0);
    const Eigen::Index d = mq.size();
    double acc = 0.0;
    for (int k = 0; k < n; ++k) {
        double lq = 0.0, lp = 0.0;
        for (Eigen::Index j = 0; j < d; ++j) {
            const double x = mq(j) + std::sqrt(vq(j)) * unit(rng);
            lq += -0.5 * std::log(2.0 * M_PI * vq(j)) - (x - mq(j)) * (x - mq(j)) / (2.0 * vq(j));
            lp += -0.5 * std::log(2.0 * M_PI * vp(j)) - (x - mp(j)) * (x - mp(j)) / (2.0 * vp(j));
        }
        acc += lq - lp;
    }
    return acc / n;
}

}  // namespace

TEST_CASE("epoch priors carry the inverse class count as variance") {
    Mat z(10, 2);
    std::vector<int> labels(10);
    for (int i = 0; i < 10; ++i) {
        z.row(i) << i, -i;
        labels[static_cast<size_t>(i)] = i;
    }
    const auto ps = priors::estimate_epoch_priors(z, labels, 10);
    REQUIRE(ps.size() == 10);
    for (const auto& p : ps) CHECK(p.variance == 0.1);
}

TEST_CASE("epoch prior means are plain per-class averages") {
    Mat z(3, 2);
    z << 0, 0, 2, 2, 4, 4;
    const auto ps = priors::estimate_epoch_priors(z, {0, 0, 1}, 2);
    REQUIRE(ps.size() == 2);
    CHECK(ps[0].mean == rv({1, 1}));
    CHECK(ps[1].mean == rv({4, 4}));
    CHECK(ps[0].class_id == 0);
    CHECK(ps[1].class_id == 1);
}

TEST_CASE("degenerate single-class buffer returns that row as the mean") {
    Mat z(4, 3);
    for (int i = 0; i < 4; ++i) z.row(i) << 1.5, -2.0, 0.25;
    const auto ps = priors::estimate_epoch_priors(z, {0, 0, 0, 0}, 1);
    CHECK(ps[0].mean == rv({1.5, -2.0, 0.25}));
}

TEST_CASE("an empty class is reported by name") {
    Mat z(2, 2);
    z << 0, 0, 1, 1;
    CHECK_THROWS_WITH_AS(priors::estimate_epoch_priors(z, {0, 0}, 2),
                         doctest::Contains("class 1"), PriorEstimationError);
}

TEST_CASE("batch stats floor the variance of singleton classes") {
    Mat z(1, 3);
    z << 4, 5, 6;
    const auto st = priors::batch_class_stats(z, {2}, 5);
    REQUIRE(st.size() == 1);
    CHECK(st[0].class_id == 2);
    CHECK(st[0].count == 1);
    CHECK(st[0].mean == rv({4, 5, 6}));
    CHECK(st[0].variance == rv({1e-6, 1e-6, 1e-6}));
}

TEST_CASE("batch stats compute population moments per class") {
    Mat z(2, 1);
    z << 0, 2;
    const auto st = priors::batch_class_stats(z, {0, 0}, 1);
    REQUIRE(st.size() == 1);
    CHECK(st[0].mean(0) == 1.0);
    CHECK(st[0].variance(0) == 1.0);
}

TEST_CASE("sentinel labels are invisible to batch stats") {
    Mat z(3, 1);
    z << 0, 100, 2;
    const auto st = priors::batch_class_stats(z, {0, -1, 0}, 1);
    REQUIRE(st.size() == 1);
    CHECK(st[0].mean(0) == 1.0);
    CHECK(st[0].count == 2);
    CHECK(priors::batch_class_stats(z, {-1, -1, -1}, 1).empty());
}

TEST_CASE("KL of identical Gaussians is zero and positivity holds elsewhere") {
    const RowVec m = rv({0.3, -1.0}), v = rv({0.5, 2.0});
    CHECK(priors::gaussian_kl(m, v, m, v) == 0.0);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-2.0, 2.0), uv(0.01, 4.0);
    for (int k = 0; k < 200; ++k) {
        const RowVec mq = rv({u(rng), u(rng)}), mp = rv({u(rng), u(rng)});
        const RowVec vq = rv({uv(rng), uv(rng)}), vp = rv({uv(rng), uv(rng)});
        const double kl = priors::gaussian_kl(mq, vq, mp, vp);
        CHECK(kl >= 0.0);
        if ((mq - mp).cwiseAbs().maxCoeff() > 1e-12 || (vq - vp).cwiseAbs().maxCoeff() > 1e-12)
            CHECK(kl > 0.0);
    }
}

TEST_CASE("unit-variance mean-shift KL equals one half") {
    CHECK(priors::gaussian_kl(rv({1.0}), rv({1.0}), rv({0.0}), rv({1.0})) ==
          doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("variance-four KL reproduces the closed-form constant") {
    const double want = std::log(2.0) + 1.0 / 8.0 - 0.5;  // 0.31815...
    CHECK(priors::gaussian_kl(rv({0.0}), rv({1.0}), rv({0.0}), rv({4.0})) ==
          doctest::Approx(want).epsilon(1e-15));
    CHECK(priors::gaussian_kl(rv({0.0}), rv({1.0}), rv({0.0}), 4.0) ==
          doctest::Approx(want).epsilon(1e-15));
}

TEST_CASE("closed-form KL agrees with a million-sample Monte-Carlo estimate") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> um(-1.5, 1.5), uv(0.01, 4.0);
    for (int pair = 0; pair < 20; ++pair) {
        const int d = 1 + pair % 3;
        RowVec mq(d), vq(d), mp(d), vp(d);
        for (int j = 0; j < d; ++j) {
            mq(j) = um(rng);
            mp(j) = um(rng);
            vq(j) = uv(rng);
            vp(j) = uv(rng);
        }
        const double closed = priors::gaussian_kl(mq, vq, mp, vp);
        const double mc = mc_kl(mq, vq, mp, vp, 1000000, 1000 + static_cast<std::uint64_t>(pair));
        CHECK(std::abs(closed - mc) / std::max(std::abs(closed), 1e-12) < 0.01);
    }
}

TEST_CASE("gaussian_kl validates shapes and positivity") {
    CHECK_THROWS_AS(priors::gaussian_kl(rv({0, 0}), rv({1, 1}), rv({0}), rv({1})), ParameterError);
    CHECK_THROWS_AS(priors::gaussian_kl(rv({0}), rv({0.0}), rv({0}), rv({1})), ParameterError);
    CHECK_THROWS_AS(priors::gaussian_kl(rv({0}), rv({1}), rv({0}), rv({-1.0})), ParameterError);
}

TEST_CASE("alignment loss vanishes when batches sit exactly on their priors") {
    std::vector<priors::ClassStats> stats(2);
    std::vector<priors::ClassPrior> ps(2);
    for (int c = 0; c < 2; ++c) {
        stats[static_cast<size_t>(c)] = {c, rv({1.0 * c, -1.0}), rv({0.5, 0.5}), 3};
        ps[static_cast<size_t>(c)] = {c, rv({1.0 * c, -1.0}), 0.5};
    }
    CHECK(priors::global_alignment_loss(stats, ps) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(priors::global_alignment_loss({}, ps) == 0.0);
}

TEST_CASE("one off-mean class contributes the quadratic penalty scaled by class count") {
    const int C = 4;
    const double delta = 0.3;
    std::vector<priors::ClassStats> stats = {{0, rv({delta}), rv({1.0 / C}), 2}};
    std::vector<priors::ClassPrior> ps = {{0, rv({0.0}), 1.0 / C}};
    CHECK(priors::global_alignment_loss(stats, ps) ==
          doctest::Approx(delta * delta / (2.0 / C)).epsilon(1e-12));
}

TEST_CASE("a present class without a prior is rejected") {
    std::vector<priors::ClassStats> stats = {{3, rv({0.0}), rv({1.0}), 1}};
    std::vector<priors::ClassPrior> ps = {{0, rv({0.0}), 1.0}};
    CHECK_THROWS_WITH_AS(priors::global_alignment_loss(stats, ps),
                         doctest::Contains("class 3"), ParameterError);
}

TEST_CASE("mean class variance averages the per-dim spreads over classes") {
    std::vector<priors::ClassStats> stats = {{0, rv({0.0, 0.0}), rv({1.0, 3.0}), 2},
                                             {1, rv({0.0, 0.0}), rv({2.0, 2.0}), 2}};
    CHECK(priors::mean_class_variance(stats) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(priors::mean_class_variance({}) == 0.0);
}

TEST_CASE("identical joints have zero conditional and marginal divergence") {
    Mat j(2, 3);
    j << 0.2, 0.2, 0.1, 0.1, 0.2, 0.2;
    const auto [cond, marg] = priors::lemma1_check(j, j);
    CHECK(cond == 0.0);
    CHECK(marg == 0.0);
}

TEST_CASE("matching conditionals and label marginals force zero marginal divergence") {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(0.05, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const int C = 2 + trial % 4, m = 2 + trial % 5;
        Mat cond(C, m);
        for (int c = 0; c < C; ++c) {
            for (int k = 0; k < m; ++k) cond(c, k) = u(rng);
            cond.row(c) /= cond.row(c).sum();
        }
        RowVec marginal(C);
        for (int c = 0; c < C; ++c) marginal(c) = u(rng);
        marginal /= marginal.sum();
        // Same conditionals, same label marginal, different joint assembly order.
        Mat js(C, m), jt(C, m);
        for (int c = 0; c < C; ++c) {
            js.row(c) = marginal(c) * cond.row(c);
            jt.row(c) = marginal(c) * cond.row(c);
        }
        const auto [cd, md] = priors::lemma1_check(js, jt);
        CHECK(cd == 0.0);
        CHECK(md == 0.0);
    }
}

TEST_CASE("divergences match a brute-force histogram computation") {
    std::mt19937_64 rng(29);
    std::uniform_real_distribution<double> u(0.05, 1.0);
    const int C = 3, m = 4;
    Mat js(C, m), jt(C, m);
    for (int c = 0; c < C; ++c)
        for (int k = 0; k < m; ++k) {
            js(c, k) = u(rng);
            jt(c, k) = u(rng);
        }
    js /= js.sum();
    jt /= jt.sum();
    const auto [cond, marg] = priors::lemma1_check(js, jt);

    double want_cond = 0.0;
    for (int c = 0; c < C; ++c) {
        RowVec ps = js.row(c) / js.row(c).sum();
        RowVec pt = jt.row(c) / jt.row(c).sum();
        want_cond = std::max(want_cond, 0.5 * (ps - pt).cwiseAbs().sum());
    }
    RowVec ms = js.colwise().sum(), mt = jt.colwise().sum();
    CHECK(cond == doctest::Approx(want_cond).epsilon(1e-12));
    CHECK(marg == doctest::Approx(0.5 * (ms - mt).cwiseAbs().sum()).epsilon(1e-12));
}

TEST_CASE("non-normalized joints are rejected") {
    Mat ok(2, 2), bad(2, 2);
    ok << 0.25, 0.25, 0.25, 0.25;
    bad << 0.5, 0.5, 0.5, 0.5;
    CHECK_THROWS_AS(priors::lemma1_check(ok, bad), ParameterError);
    bad << -0.1, 0.6, 0.25, 0.25;
    CHECK_THROWS_AS(priors::lemma1_check(ok, bad), ParameterError);
}

TEST_CASE("tape alignment loss equals the pure computation and its gradient is sound") {
    Mat z(6, 2);
    z << 0.1, 0.2, -0.4, 1.0, 0.7, 0.3, 0.2, -0.8, 1.2, 0.5, -0.3, 0.1;
    const std::vector<int> labels = {0, 1, 0, -1, 1, 0};
    std::vector<priors::ClassPrior> ps = {{0, rv({0.0, 0.0}), 0.5}, {1, rv({0.5, 0.5}), 0.5}};

    ad::Tape t;
    ad::Var vz = t.leaf(z);
    ad::Var loss = priors::alignment_loss_on_tape(t, vz, labels, ps);
    const double pure =
        priors::global_alignment_loss(priors::batch_class_stats(z, labels, 2), ps);
    CHECK(t.scalar(loss) == doctest::Approx(pure).epsilon(1e-12));

    t.backward(loss);
    const Mat analytic = t.grad(vz);
    const double eps = 1e-6;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < z.rows(); ++i)
        for (Eigen::Index j = 0; j < z.cols(); ++j) {
            Mat zp = z, zm = z;
            zp(i, j) += eps;
            zm(i, j) -= eps;
            const double hi =
                priors::global_alignment_loss(priors::batch_class_stats(zp, labels, 2), ps);
            const double lo =
                priors::global_alignment_loss(priors::batch_class_stats(zm, labels, 2), ps);
            const double fd = (hi - lo) / (2.0 * eps);
            worst = std::max(worst, std::abs(fd - analytic(i, j)) /
                                        (std::abs(fd) + std::abs(analytic(i, j)) + 1e-12));
        }
    CHECK(worst < 1e-4);
}

TEST_CASE("prior sets survive a JSON round trip") {
    std::vector<priors::ClassPrior> ps = {{0, rv({0.25, -1.0 / 3.0}), 0.5},
                                          {1, rv({1e-17, 2.0}), 0.1}};
    const auto back = priors::priors_from_json(priors::priors_to_json(ps));
    REQUIRE(back.size() == 2);
    for (size_t i = 0; i < 2; ++i) {
        CHECK(back[i].class_id == ps[i].class_id);
        CHECK(back[i].mean == ps[i].mean);
        CHECK(back[i].variance == ps[i].variance);
    }
    CHECK_THROWS_AS(priors::priors_from_json("not json"), FormatError);
    CHECK_THROWS_AS(priors::priors_from_json("{\"a\":1}"), FormatError);
}
