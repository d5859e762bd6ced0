#include <doctest.h>

#include <cmath>
#include <vector>

#include "gvida/baselines.hpp"
#include "gvida/errors.hpp"

using namespace gvida;
using baselines::AnchorSet;
using baselines::VariantSpec;
using train::AlignKind;
using train::Mat;

namespace {

priors::ClassStats stats_at(int class_id, const priors::RowVec& mean, double var, int count) {
    priors::ClassStats s;
    s.class_id = class_id;
    s.mean = mean;
    s.variance = priors::RowVec::Constant(mean.size(), var);
    s.count = count;
    return s;
}

}  // namespace

TEST_CASE("anchor rows are block binary with the documented layout") {
    const AnchorSet a = baselines::build_anchors(10, 51);
    REQUIRE(a.rows.rows() == 10);
    REQUIRE(a.rows.cols() == 510);
    for (int j = 0; j < 510; ++j)
        CHECK(a.rows(2, j) == (j >= 102 && j < 153 ? 1.0 : 0.0));
    CHECK_NOTHROW(a.validate());
    CHECK(a.rows.sum() == 510.0);  // exactly one block of ones per row
}

TEST_CASE("noiseless anchors are pairwise orthogonal") {
    for (int c : {2, 4, 10}) {
        const AnchorSet a = baselines::build_anchors(c, 3);
        const Mat gram = a.rows * a.rows.transpose();
        for (int i = 0; i < c; ++i)
            for (int j = 0; j < c; ++j) CHECK(gram(i, j) == (i == j ? 3.0 : 0.0));
    }
}

TEST_CASE("anchor sampling is an identity at zero noise and unbiased at noise one") {
    const AnchorSet clean = baselines::build_anchors(4, 3);
    CHECK(baselines::sample_anchor_rows(clean, 99) == clean.rows);

    const AnchorSet noisy = baselines::build_anchors(4, 3, 1.0);
    const int draws = 10000;
    Mat mean = Mat::Zero(4, 12);
    for (int s = 0; s < draws; ++s)
        mean += baselines::sample_anchor_rows(noisy, static_cast<std::uint64_t>(s));
    mean /= static_cast<double>(draws);
    // Column means of N(anchor, 1) over 10^4 draws sit within 3 sigma / 100.
    CHECK(((mean - noisy.rows).array().abs() < 0.03).all());

    const Mat one_draw = baselines::sample_anchor_rows(noisy, 7);
    CHECK(one_draw == baselines::sample_anchor_rows(noisy, 7));
    CHECK(one_draw != baselines::sample_anchor_rows(noisy, 8));
}

TEST_CASE("anchor construction validates its arguments") {
    CHECK_THROWS_AS(baselines::build_anchors(1, 3), ParameterError);
    CHECK_THROWS_AS(baselines::build_anchors(3, 0), ParameterError);
    CHECK_THROWS_AS(baselines::build_anchors(3, 2, -0.5), ParameterError);

    AnchorSet broken = baselines::build_anchors(3, 2);
    broken.rows(0, 3) = 1.0;
    CHECK_THROWS_WITH_AS(broken.validate(), doctest::Contains("block binary"), ParameterError);
}

TEST_CASE("default block width covers the latent space") {
    CHECK(baselines::default_block_width(10, 510) == 51);
    CHECK(baselines::default_block_width(3, 16) == 6);
    CHECK(baselines::default_block_width(4, 4) == 1);
    CHECK(baselines::default_block_width(5, 2) == 1);
    CHECK_THROWS_AS(baselines::default_block_width(1, 16), ParameterError);
    CHECK_THROWS_AS(baselines::default_block_width(3, 0), ParameterError);
}

TEST_CASE("anchor matching loss on pinned cases") {
    const AnchorSet a = baselines::build_anchors(4, 2);

    Mat exact(4, 8);
    for (int c = 0; c < 4; ++c) exact.row(c) = a.rows.row(c);
    CHECK(baselines::npa_loss(exact, {0, 1, 2, 3}, a) == 0.0);

    const double delta = 0.7;
    Mat off = exact;
    off(1, 2) += delta;
    CHECK(baselines::npa_loss(off, {0, 1, 2, 3}, a) ==
          doctest::Approx(delta * delta / 4.0).epsilon(1e-12));

    CHECK(baselines::npa_loss(Mat(0, 8), {}, a) == 0.0);
}

TEST_CASE("anchor matching compares narrow encodings against leading anchor columns") {
    const AnchorSet a = baselines::build_anchors(2, 3);
    Mat enc(2, 2);
    enc << 1.0, 1.0, 1.0, 1.0;  // class-0 block head; class 1 absent
    CHECK(baselines::npa_loss(enc, {0, 0}, a) == 0.0);

    enc(1, 0) += 0.8;  // shifts the class-0 mean by 0.4 on dim 0
    CHECK(baselines::npa_loss(enc, {0, 0}, a) == doctest::Approx(0.16 / 2.0).epsilon(1e-12));
}

TEST_CASE("anchor matching validates labels and widths") {
    const AnchorSet a = baselines::build_anchors(3, 2);
    const Mat enc = Mat::Zero(2, 4);
    CHECK_THROWS_AS(baselines::npa_loss(enc, {0}, a), ParameterError);
    CHECK_THROWS_WITH_AS(baselines::npa_loss(enc, {0, 3}, a), doctest::Contains("no anchor"),
                         ConfigError);
    CHECK_THROWS_AS(baselines::npa_loss(Mat::Zero(2, 7), {0, 1}, a), ParameterError);
}

TEST_CASE("fixed prior ladder walks 1.5 down to -1.2 for ten classes") {
    const auto ps = baselines::vida_fixed_priors(10, 3, 0.01);
    REQUIRE(ps.size() == 10);
    for (int c = 0; c < 10; ++c) {
        CHECK(ps[static_cast<size_t>(c)].class_id == c);
        CHECK(ps[static_cast<size_t>(c)].variance == 0.01);
        const double want = 1.5 - 0.3 * c;
        for (int j = 0; j < 3; ++j)
            CHECK(ps[static_cast<size_t>(c)].mean(j) == doctest::Approx(want).epsilon(1e-12));
    }
    CHECK(ps.front().mean(0) == 1.5);
    CHECK(ps.back().mean(0) == doctest::Approx(-1.2).epsilon(1e-12));
}

TEST_CASE("many-class fixed priors stay distinct inside the same span") {
    const auto ps = baselines::vida_fixed_priors(50, 2, 1.0);
    REQUIRE(ps.size() == 50);
    for (size_t i = 0; i + 1 < ps.size(); ++i)
        CHECK(ps[i].mean(0) > ps[i + 1].mean(0));
    CHECK(ps.front().mean(0) == 1.5);
    CHECK(ps.back().mean(0) == doctest::Approx(-1.2).epsilon(1e-12));
    CHECK_THROWS_AS(baselines::vida_fixed_priors(10, 3, 0.0), ParameterError);
    CHECK_THROWS_AS(baselines::vida_fixed_priors(1, 3, 0.1), ParameterError);
}

TEST_CASE("fixed-prior divergence loss on pinned cases") {
    const auto fixed = baselines::vida_fixed_priors(2, 2, 0.01);

    std::vector<priors::ClassStats> matched = {
        stats_at(0, fixed[0].mean, 0.01, 5),
        stats_at(1, fixed[1].mean, 0.01, 5),
    };
    CHECK(baselines::vida_loss(matched, fixed) == 0.0);

    auto off = matched;
    off[1].mean(0) += 0.3;
    CHECK(baselines::vida_loss(off, fixed) == doctest::Approx(4.5).epsilon(1e-9));

    const auto wide = baselines::vida_fixed_priors(2, 2, 1.0);
    std::vector<priors::ClassStats> off_wide = {
        stats_at(0, wide[0].mean, 1.0, 5),
        stats_at(1, wide[1].mean, 1.0, 5),
    };
    off_wide[1].mean(0) += 0.3;
    CHECK(baselines::vida_loss(off_wide, wide) == doctest::Approx(0.045).epsilon(1e-9));

    std::vector<priors::ClassStats> orphan = {stats_at(2, fixed[0].mean, 0.01, 5)};
    CHECK_THROWS_WITH_AS(baselines::vida_loss(orphan, fixed),
                         doctest::Contains("no fixed prior"), ConfigError);
}

TEST_CASE("variant names parse to their canonical settings") {
    CHECK(baselines::parse_variant("source_only").kind == VariantSpec::Kind::source_only);
    CHECK(baselines::parse_variant("cdan").kind == VariantSpec::Kind::cdan);
    CHECK(baselines::parse_variant("gvida").kind == VariantSpec::Kind::gvida);

    const auto npa = baselines::parse_variant("npa+0.5");
    CHECK(npa.kind == VariantSpec::Kind::npa);
    CHECK(npa.npa_noise == 0.5);
    CHECK(npa.name == "npa+0.5");
    CHECK(baselines::parse_variant("npa+0").npa_noise == 0.0);
    CHECK(baselines::parse_variant("npa+2").npa_noise == 2.0);

    const auto vida = baselines::parse_variant("vida(0.01)");
    CHECK(vida.kind == VariantSpec::Kind::vida);
    CHECK(vida.vida_variance == 0.01);
    CHECK(baselines::parse_variant("vida(1)").vida_variance == 1.0);
}

TEST_CASE("malformed variant names are rejected") {
    CHECK_THROWS_WITH_AS(baselines::parse_variant("dann"), doctest::Contains("unknown variant"),
                         ConfigError);
    CHECK_THROWS_AS(baselines::parse_variant("npa+-1"), ConfigError);
    CHECK_THROWS_AS(baselines::parse_variant("npa+x"), ConfigError);
    CHECK_THROWS_WITH_AS(baselines::parse_variant("vida(0)"), doctest::Contains("> 0"),
                         ConfigError);
    CHECK_THROWS_AS(baselines::parse_variant("vida(1x)"), ConfigError);
    CHECK_THROWS_AS(baselines::parse_variant("vida("), ConfigError);
    CHECK_THROWS_AS(baselines::parse_variant(""), ConfigError);
}

TEST_CASE("variant configuration toggles exactly the documented losses") {
    const train::ModelSpec spec = train::ModelSpec::defaults_for(2, 3, 16, 32);
    train::TrainConfig base;
    base.lambdas = {1.0, 0.5, 0.03, 0.01, 0.05};

    train::AlignmentAux aux;
    const auto src_only =
        baselines::configure_variant(baselines::parse_variant("source_only"), base, spec, 3, &aux);
    CHECK_FALSE(src_only.adversarial);
    CHECK(src_only.align == AlignKind::none);
    CHECK_FALSE(src_only.use_codebook);
    CHECK_FALSE(src_only.reconstruction);
    CHECK_FALSE(src_only.augment);
    CHECK(src_only.lambdas.l1 == 1.0);
    CHECK(src_only.lambdas.l2 == 0.0);
    CHECK(src_only.lambdas.l3 == 0.0);
    CHECK(src_only.lambdas.l4 == 0.0);
    CHECK(src_only.lambdas.l5 == 0.0);

    const auto cdan =
        baselines::configure_variant(baselines::parse_variant("cdan"), base, spec, 3, &aux);
    CHECK(cdan.adversarial);
    CHECK(cdan.align == AlignKind::none);
    CHECK(cdan.lambdas.l2 == 0.5);
    CHECK(cdan.lambdas.l3 == 0.0);
    CHECK(cdan.lambdas.l4 == 0.0);
    CHECK(cdan.lambdas.l5 == 0.0);
    CHECK_FALSE(cdan.use_codebook);

    train::AlignmentAux npa_aux;
    const auto npa = baselines::configure_variant(baselines::parse_variant("npa+0.5"), base, spec,
                                                  3, &npa_aux);
    CHECK(npa.align == AlignKind::anchors);
    CHECK(npa.anchor_noise == 0.5);
    CHECK(npa.lambdas.l3 == 0.03);
    CHECK(npa.lambdas.l4 == 0.0);
    CHECK(npa.lambdas.l5 == 0.0);
    CHECK_FALSE(npa.use_codebook);
    CHECK_FALSE(npa.augment);
    CHECK(npa_aux.anchors == baselines::build_anchors(3, 6).rows);
    CHECK(npa_aux.anchors.cols() >= spec.latent_dim);

    train::AlignmentAux vida_aux;
    const auto vida = baselines::configure_variant(baselines::parse_variant("vida(0.01)"), base,
                                                   spec, 3, &vida_aux);
    CHECK(vida.align == AlignKind::fixed_priors);
    CHECK_FALSE(vida.use_codebook);
    CHECK(vida.reconstruction);
    CHECK_FALSE(vida.augment);
    CHECK(vida.lambdas.l4 == 0.0);
    CHECK(vida.lambdas.l5 == 0.05);
    REQUIRE(vida_aux.fixed_priors.size() == 3);
    CHECK(vida_aux.fixed_priors[0].variance == 0.01);
    CHECK(vida_aux.fixed_priors[0].mean == priors::RowVec::Constant(16, 1.5));
    CHECK(vida_aux.fixed_priors[2].mean(0) == doctest::Approx(0.9).epsilon(1e-12));

    const auto gvida =
        baselines::configure_variant(baselines::parse_variant("gvida"), base, spec, 3, &aux);
    CHECK(gvida.align == AlignKind::global_priors);
    CHECK(gvida.use_codebook);
    CHECK(gvida.reconstruction);
    CHECK(gvida.augment);
    CHECK(gvida.lambdas.l2 == 0.5);
    CHECK(gvida.lambdas.l5 == 0.05);
}

TEST_CASE("fixed priors never refresh across a training run") {
    const auto [src, tgt] =
        data::generate_pair(2, 10, 2, {data::ShiftKind::rotation, 0.4, 0.3, 0}, 6);
    const train::ModelSpec spec = train::ModelSpec::defaults_for(2, 2, 4, 6);
    const train::Model model = train::Model::init(spec, 2, 2, 3);

    train::TrainConfig base;
    base.epochs = 3;
    base.warmup_epochs = 1;

    const auto res = baselines::run_variant("vida(0.01)", model, src, tgt, base);
    const auto fixed = baselines::vida_fixed_priors(2, spec.latent_dim, 0.01);
    REQUIRE(res.metrics.size() == 3);
    REQUIRE(res.final_priors.size() == fixed.size());
    for (size_t c = 0; c < fixed.size(); ++c) {
        CHECK(res.final_priors[c].class_id == fixed[c].class_id);
        CHECK(res.final_priors[c].variance == fixed[c].variance);
        CHECK(res.final_priors[c].mean == fixed[c].mean);
    }
}

TEST_CASE("global priors are refreshed and carry the pooled variance") {
    const auto [src, tgt] =
        data::generate_pair(2, 10, 2, {data::ShiftKind::rotation, 0.4, 0.3, 0}, 7);
    const train::Model model =
        train::Model::init(train::ModelSpec::defaults_for(2, 2, 4, 6), 2, 2, 3);

    train::TrainConfig base;
    base.epochs = 2;
    base.warmup_epochs = 1;

    const auto res = baselines::run_variant("gvida", model, src, tgt, base);
    REQUIRE(res.final_priors.size() == 2);
    for (const auto& p : res.final_priors) CHECK(p.variance == 0.5);

    CHECK_THROWS_WITH_AS(baselines::run_variant("mystery", model, src, tgt, base),
                         doctest::Contains("unknown variant"), ConfigError);
}
