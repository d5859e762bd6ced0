#include "gvida/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "gvida/errors.hpp"

namespace gvida::train {

using json = nlohmann::json;

namespace {

// Salt constants keep every random stream in a run attributable to one draw site.
constexpr std::uint64_t kSaltSourceBatch = 2;
constexpr std::uint64_t kSaltTargetBatch = 3;
constexpr std::uint64_t kSaltGumbel = 4;
constexpr std::uint64_t kSaltPerturb = 5;
constexpr std::uint64_t kSaltRegen = 6;
constexpr std::uint64_t kSaltAnchor = 7;

constexpr std::uint64_t kDropG = 101, kDropE = 102, kDropDec = 103, kDropClf = 104, kDropDisc = 105;

struct StepGraph {
    ad::Tape tape;
    nets::BoundParams bound;
    ad::Var total;
    LossBreakdown bd;
    Mat source_z;
    Mat assign_probs;
};

StepGraph build_step_graph(const ModelSpec& spec, const nets::ParamStore& params, int class_count,
                           const StepInputs& in, const TrainConfig& cfg) {
    if (in.source.rows() < 1) throw ParameterError("train step needs a non-empty source batch");
    if (in.source.features.cols() != spec.generator.in_dim())
        throw ParameterError("source batch feature dim does not match the generator");
    for (size_t i = 0; i < in.source.labels.size(); ++i)
        if (in.source.labels[i] < 0 || in.source.labels[i] >= class_count)
            throw ParameterError("source batch row " + std::to_string(i + 1) + " has invalid label");

    const Lambdas& lam = cfg.lambdas;
    const bool has_target = in.target.rows() > 0;
    const bool has_aug = in.aug_features.rows() > 0;
    const bool want_adv = cfg.adversarial && lam.l2 > 0.0 && has_target;
    const bool want_align = cfg.align != AlignKind::none && lam.l3 > 0.0;
    const bool want_cb = cfg.use_codebook && (lam.l4 > 0.0 || lam.l5 > 0.0);
    const bool want_plain_recon = !cfg.use_codebook && cfg.reconstruction && lam.l5 > 0.0;
    const bool target_fwd = has_target && (want_adv || want_align || want_cb || want_plain_recon);
    const bool aug_fwd = has_aug && (want_adv || want_align);

    StepGraph g;
    ad::Tape& t = g.tape;
    g.bound = nets::bind(t, params);
    const auto fwd = [&](const nets::NetworkSpec& net, const char* prefix, ad::Var x,
                         std::uint64_t drop_salt) {
        return nets::forward_on_tape(t, net, g.bound, prefix, x, nets::Mode::train,
                                     nets::mix_seed(in.noise_seed, drop_salt));
    };

    ad::Var gs = fwd(spec.generator, "g", t.constant(in.source.features), kDropG);
    ad::Var zs = fwd(spec.encoder, "e", gs, kDropE);
    ad::Var ps = fwd(spec.classifier, "clf", zs, kDropClf);
    g.source_z = t.val(zs);

    ad::Var l1 =
        t.scale(t.mean_all(t.gather_cells(t.log(t.clamp_min(ps, 1e-12)), in.source.labels)), -1.0);

    ad::Var gt{}, zt{}, pt{};
    if (target_fwd) {
        gt = fwd(spec.generator, "g", t.constant(in.target.features), kDropG);
        zt = fwd(spec.encoder, "e", gt, kDropE);
        pt = fwd(spec.classifier, "clf", zt, kDropClf);
    }
    ad::Var za{}, pa{};
    if (aug_fwd) {
        if (in.aug_features.cols() != spec.encoder.in_dim())
            throw ParameterError("augmented rows must live in generator-output space");
        za = fwd(spec.encoder, "e", t.constant(in.aug_features), kDropE);
        pa = fwd(spec.classifier, "clf", za, kDropClf);
    }

    ad::Var l2{};
    if (want_adv) {
        ad::Var zt_adv = aug_fwd ? t.concat_rows(zt, za) : zt;
        ad::Var pt_adv = aug_fwd ? t.concat_rows(pt, pa) : pt;
        ad::Var hs = t.outer_flatten(zs, ps);
        ad::Var ht = t.outer_flatten(zt_adv, pt_adv);
        if (in.reversal) {
            hs = t.grl(hs, in.grl_lambda);
            ht = t.grl(ht, in.grl_lambda);
        }
        ad::Var ds = fwd(spec.discriminator, "disc", hs, kDropDisc);
        ad::Var dt = fwd(spec.discriminator, "disc", ht, kDropDisc);
        l2 = adv::adversarial_loss_on_tape(t, ds, dt);
    }

    ad::Var l3{};
    if (want_align) {
        if (cfg.align == AlignKind::anchors) {
            // Anchors attach to labeled source rows only. They stabilize the
            // class geometry against batch-to-batch drift; pulling
            // pseudo-labeled target rows to the same corners would freeze
            // early mislabels in place, so cross-domain transport is left to
            // the adversarial term.
            if (in.anchor_rows.rows() < class_count || in.anchor_rows.cols() < spec.latent_dim)
                throw ParameterError("anchor matrix must cover every class and the latent width");
            ad::Var acc = t.constant(Mat::Zero(1, 1));
            for (int c = 0; c < class_count; ++c) {
                std::vector<int> rows;
                for (size_t i = 0; i < in.source.labels.size(); ++i)
                    if (in.source.labels[i] == c) rows.push_back(static_cast<int>(i));
                if (rows.empty()) continue;  // absent classes contribute 0
                ad::Var mean_c = t.col_mean(t.gather_rows(zs, rows));
                Mat anchor = in.anchor_rows.row(c).head(spec.latent_dim);
                acc = t.add(acc, t.sum(t.square(t.sub(mean_c, t.constant(anchor)))));
            }
            l3 = t.scale(acc, 1.0 / class_count);
        } else {
            ad::Var pooled = zs;
            std::vector<int> pooled_labels = in.source.labels;
            if (target_fwd) {
                pooled = t.concat_rows(pooled, zt);
                pooled_labels.insert(pooled_labels.end(), in.target.labels.begin(),
                                     in.target.labels.end());
            }
            if (aug_fwd) {
                pooled = t.concat_rows(pooled, za);
                pooled_labels.insert(pooled_labels.end(), in.aug_labels.begin(),
                                     in.aug_labels.end());
            }
            l3 = priors::alignment_loss_on_tape(t, pooled, pooled_labels, in.priors);
        }
    }

    ad::Var l4{}, l5{};
    if (want_cb || want_plain_recon) {
        ad::Var z_cb = target_fwd ? t.concat_rows(zs, zt) : zs;
        ad::Var g_all = target_fwd ? t.concat_rows(gs, gt) : gs;
        const double rows = static_cast<double>(t.val(z_cb).rows());
        if (want_cb) {
            const Mat gumbel = codebook::gumbel_noise(static_cast<int>(rows), spec.codebook_size,
                                                      nets::mix_seed(in.noise_seed, kSaltGumbel));
            auto tq = codebook::forward_on_tape(t, z_cb, g.bound.at("cb.entries"), in.tau, gumbel);
            g.assign_probs = t.val(tq.assign_probs);
            if (lam.l4 > 0.0)
                l4 = t.scale(t.sum(t.mul(tq.assign_probs, t.log(tq.assign_probs))), 1.0 / rows);
            if (lam.l5 > 0.0) {
                ad::Var xhat = fwd(spec.decoder, "dec", tq.quantized, kDropDec);
                ad::Var recon = t.scale(t.sum(t.square(t.sub(g_all, xhat))), 1.0 / rows);
                ad::Var commit =
                    t.scale(t.sum(t.square(t.sub(z_cb, tq.quantized))), cfg.commitment_beta / rows);
                l5 = t.add(recon, commit);
            }
        } else {
            ad::Var xhat = fwd(spec.decoder, "dec", z_cb, kDropDec);
            l5 = t.scale(t.sum(t.square(t.sub(g_all, xhat))), 1.0 / rows);
        }
    }

    ad::Var total = t.scale(l1, lam.l1);
    if (l2.valid()) total = t.add(total, t.scale(l2, lam.l2));
    if (l3.valid()) total = t.add(total, t.scale(l3, lam.l3));
    if (l4.valid()) total = t.add(total, t.scale(l4, lam.l4));
    if (l5.valid()) total = t.add(total, t.scale(l5, lam.l5));
    g.total = total;

    g.bd.l1_srm = t.scalar(l1);
    g.bd.l2_adv = l2.valid() ? t.scalar(l2) : 0.0;
    g.bd.l3_align = l3.valid() ? t.scalar(l3) : 0.0;
    g.bd.l4_entropy = l4.valid() ? t.scalar(l4) : 0.0;
    g.bd.l5_recon = l5.valid() ? t.scalar(l5) : 0.0;
    g.bd.elbo_constant =
        cfg.use_codebook ? codebook::elbo_constant(spec.latent_dim, spec.codebook_size) : 0.0;
    g.bd.total = t.scalar(total);
    const double probe = g.bd.l1_srm + g.bd.l2_adv + g.bd.l3_align + g.bd.l4_entropy +
                         g.bd.l5_recon + g.bd.total;
    if (!std::isfinite(probe)) throw NumericError("non-finite loss in train step");
    return g;
}

Mat eval_forward(const Model& model, const nets::NetworkSpec& net, const char* prefix, const Mat& x) {
    return nets::forward(net, model.params, prefix, x, nets::Mode::eval);
}

Mat eval_probs(const Model& model, const Mat& x) {
    const Mat g = eval_forward(model, model.spec.generator, "g", x);
    const Mat z = eval_forward(model, model.spec.encoder, "e", g);
    return eval_forward(model, model.spec.classifier, "clf", z);
}

Mat eval_encodings(const Model& model, const Mat& x) {
    const Mat g = eval_forward(model, model.spec.generator, "g", x);
    return eval_forward(model, model.spec.encoder, "e", g);
}

void append_rows(Mat& dst, const Mat& src) {
    if (dst.size() == 0) {
        dst = src;
        return;
    }
    const auto old = dst.rows();
    dst.conservativeResize(old + src.rows(), Eigen::NoChange);
    dst.bottomRows(src.rows()) = src;
}

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (base_lr <= 0.0) throw ConfigError("base_lr must be > 0");
    if (lambdas.l1 <= 0.0) throw ConfigError("the supervised loss weight must stay > 0");
    if (lambdas.l2 < 0.0 || lambdas.l3 < 0.0 || lambdas.l4 < 0.0 || lambdas.l5 < 0.0)
        throw ConfigError("loss weights must be >= 0");
    if (warmup_epochs < 0) throw ConfigError("warmup_epochs must be >= 0");
    if (perturb_sigma_scale < 0.0) throw ConfigError("perturb_sigma_scale must be >= 0");
    if (commitment_beta < 0.0) throw ConfigError("commitment_beta must be >= 0");
    if (tau_start <= 0.0 || tau_end <= 0.0) throw ConfigError("tau must stay > 0");
    if (anchor_noise < 0.0) throw ConfigError("anchor_noise must be >= 0");
}

ModelSpec ModelSpec::defaults_for(int feature_dim, int class_count, int latent_dim,
                                  int codebook_size) {
    if (feature_dim < 1 || class_count < 2) throw ParameterError("bad feature_dim/class_count");
    using nets::Activation;
    ModelSpec s;
    s.codebook_size = codebook_size;
    if (feature_dim == 512) {
        s.latent_dim = 128;
        s.generator.layers = {{512, 512, Activation::rectifier, 0.0}};
        s.encoder.layers = {{512, 256, Activation::rectifier, 0.0}, {256, 128, Activation::identity, 0.0}};
        s.decoder.layers = {{128, 256, Activation::rectifier, 0.0}, {256, 512, Activation::identity, 0.0}};
        s.classifier.layers = {{128, class_count, Activation::softmax, 0.0}};
        s.discriminator.layers = {{128 * class_count, 256, Activation::rectifier, 0.5},
                                  {256, 256, Activation::rectifier, 0.5},
                                  {256, 1, Activation::sigmoid, 0.0}};
        return s;
    }
    s.latent_dim = latent_dim;
    s.generator.layers = {{feature_dim, 64, Activation::rectifier, 0.0}};
    s.encoder.layers = {{64, 32, Activation::rectifier, 0.0}, {32, latent_dim, Activation::identity, 0.0}};
    s.decoder.layers = {{latent_dim, 32, Activation::rectifier, 0.0}, {32, 64, Activation::identity, 0.0}};
    s.classifier.layers = {{latent_dim, class_count, Activation::softmax, 0.0}};
    s.discriminator.layers = {{latent_dim * class_count, 32, Activation::rectifier, 0.0},
                              {32, 1, Activation::sigmoid, 0.0}};
    return s;
}

void ModelSpec::validate(int feature_dim, int class_count) const {
    generator.validate();
    encoder.validate();
    decoder.validate();
    classifier.validate();
    discriminator.validate();
    if (latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
    if (codebook_size < 1) throw ConfigError("codebook_size must be >= 1");
    if (generator.in_dim() != feature_dim) throw ConfigError("generator input must match feature dim");
    if (encoder.in_dim() != generator.out_dim()) throw ConfigError("encoder must read generator output");
    if (encoder.out_dim() != latent_dim) throw ConfigError("encoder output must match latent_dim");
    if (decoder.in_dim() != latent_dim) throw ConfigError("decoder must read the latent space");
    if (decoder.out_dim() != generator.out_dim())
        throw ConfigError("decoder must reconstruct generator output");
    if (classifier.in_dim() != latent_dim) throw ConfigError("classifier must read the latent space");
    if (classifier.out_dim() != class_count) throw ConfigError("classifier width must match class count");
    if (classifier.layers.back().act != nets::Activation::softmax)
        throw ConfigError("classifier must end in softmax");
    if (discriminator.in_dim() != latent_dim * class_count)
        throw ConfigError("discriminator must read the conditioned feature (latent_dim * classes)");
    if (discriminator.out_dim() != 1 ||
        discriminator.layers.back().act != nets::Activation::sigmoid)
        throw ConfigError("discriminator must end in a single sigmoid unit");
}

Model Model::init(const ModelSpec& spec, int feature_dim, int class_count, std::uint64_t seed) {
    spec.validate(feature_dim, class_count);
    Model m;
    m.spec = spec;
    m.feature_dim = feature_dim;
    m.class_count = class_count;
    std::mt19937_64 rng(seed);
    nets::add_network_params(m.params, "g", spec.generator, rng);
    nets::add_network_params(m.params, "e", spec.encoder, rng);
    nets::add_network_params(m.params, "dec", spec.decoder, rng);
    nets::add_network_params(m.params, "clf", spec.classifier, rng);
    nets::add_network_params(m.params, "disc", spec.discriminator, rng);
    nets::add_tensor(m.params, "cb.entries", spec.codebook_size, spec.latent_dim,
                     1.0 / std::sqrt(static_cast<double>(spec.latent_dim)), rng);
    return m;
}

codebook::Codebook Model::cb() const {
    codebook::Codebook cb;
    cb.entries = params.at("cb.entries");
    return cb;
}

double srm_loss(const Mat& probs, const std::vector<int>& labels) {
    if (static_cast<Eigen::Index>(labels.size()) != probs.rows())
        throw ParameterError("srm_loss: rows and labels disagree");
    if (probs.rows() < 1) throw ParameterError("srm_loss: empty batch");
    double acc = 0.0;
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        const int y = labels[static_cast<size_t>(i)];
        if (y < 0 || y >= probs.cols())
            throw ParameterError("srm_loss: row " + std::to_string(i + 1) + " has invalid label");
        acc -= std::log(std::max(probs(i, y), 1e-12));
    }
    return acc / static_cast<double>(probs.rows());
}

double reconstruction_loss(const Mat& x, const Mat& xhat) {
    if (x.rows() != xhat.rows() || x.cols() != xhat.cols())
        throw ParameterError("reconstruction_loss: shape mismatch");
    if (x.rows() < 1) throw ParameterError("reconstruction_loss: empty batch");
    return (x - xhat).rowwise().squaredNorm().mean();
}

LossBreakdown train_step(Model& model, nets::SgdOptimizer& opt, const StepInputs& in,
                         const TrainConfig& cfg, double lr, Mat* source_encodings,
                         Mat* assign_probs) {
    StepGraph g = build_step_graph(model.spec, model.params, model.class_count, in, cfg);
    g.tape.backward(g.total);
    nets::ParamStore grads = model.params.zeros_like();
    for (size_t i = 0; i < grads.tensors.size(); ++i)
        grads.tensors[i].value = g.tape.grad(g.bound.vars[i]);
    opt.step(model.params, grads, lr);
    if (source_encodings) *source_encodings = std::move(g.source_z);
    if (assign_probs) *assign_probs = std::move(g.assign_probs);
    return g.bd;
}

nets::LossFn make_step_loss_fn(const ModelSpec& spec, int feature_dim, int class_count,
                               StepInputs in, TrainConfig cfg) {
    spec.validate(feature_dim, class_count);
    cfg.validate();
    in.reversal = false;
    return [spec, class_count, in = std::move(in), cfg](const nets::ParamStore& p,
                                                        nets::ParamStore* grads) -> double {
        StepGraph g = build_step_graph(spec, p, class_count, in, cfg);
        if (grads) {
            g.tape.backward(g.total);
            for (size_t i = 0; i < grads->tensors.size(); ++i)
                grads->tensors[i].value = g.tape.grad(g.bound.vars[i]);
        }
        return g.bd.total;
    };
}

double evaluate(const Model& model, const data::DomainDataset& ds) {
    ds.validate();
    if (ds.dims() != model.feature_dim || ds.class_count != model.class_count)
        throw ParameterError("evaluate: dataset does not match the model");
    const Mat probs = eval_probs(model, ds.features);
    int correct = 0;
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        int best = 0;
        for (Eigen::Index k = 1; k < probs.cols(); ++k)
            if (probs(i, k) > probs(i, best)) best = static_cast<int>(k);
        if (best == ds.labels[static_cast<size_t>(i)]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(probs.rows());
}

FitResult fit(Model model, const data::DomainDataset& source, const data::DomainDataset& target,
              const TrainConfig& cfg, const AlignmentAux& aux, const std::string& metrics_csv_path) {
    cfg.validate();
    source.validate();
    target.validate();
    if (source.dims() != target.dims()) throw ConfigError("source/target feature dims differ");
    if (source.class_count != target.class_count) throw ConfigError("source/target class counts differ");
    if (source.dims() != model.feature_dim || source.class_count != model.class_count)
        throw ConfigError("model was initialized for a different dataset shape");

    const int C = model.class_count;
    const int nt = target.rows();
    const double threshold = cfg.entropy_threshold < 0.0 ? target::default_entropy_threshold(C)
                                                         : cfg.entropy_threshold;

    if (cfg.align == AlignKind::fixed_priors) {
        if (aux.fixed_priors.size() != static_cast<size_t>(C))
            throw ConfigError("fixed-prior alignment needs one prior per class");
        for (const auto& p : aux.fixed_priors)
            if (p.mean.size() != model.spec.latent_dim || p.variance <= 0.0)
                throw ConfigError("fixed prior for class " + std::to_string(p.class_id) + " is malformed");
    }
    if (cfg.align == AlignKind::anchors &&
        (aux.anchors.rows() != C || aux.anchors.cols() < model.spec.latent_dim))
        throw ConfigError("anchor alignment needs a class_count x (>= latent_dim) anchor matrix");

    const int steps_per_epoch =
        std::max((source.rows() + cfg.batch_size - 1) / cfg.batch_size,
                 (nt + cfg.batch_size - 1) / cfg.batch_size);
    const long total_steps = static_cast<long>(steps_per_epoch) * cfg.epochs;
    const long warm_steps = static_cast<long>(steps_per_epoch) * cfg.warmup_epochs;

    std::vector<priors::ClassPrior> current_priors;
    if (cfg.align == AlignKind::global_priors)
        current_priors = priors::estimate_epoch_priors(eval_encodings(model, source.features),
                                                       source.labels, C);
    else if (cfg.align == AlignKind::fixed_priors)
        current_priors = aux.fixed_priors;

    nets::SgdOptimizer opt(model.params, cfg.sgd);
    std::vector<EpochMetrics> metrics;
    std::vector<int> target_labels(static_cast<size_t>(nt), -1);
    long global_step = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Warm-up epochs train the source objective alone so the classifier
        // settles before pseudo-labels, alignment, or adversarial pressure
        // can push the encoder toward a wrong class correspondence.
        TrainConfig step_cfg = cfg;
        if (epoch < cfg.warmup_epochs)
            step_cfg.lambdas.l2 = step_cfg.lambdas.l3 = step_cfg.lambdas.l4 =
                step_cfg.lambdas.l5 = 0.0;
        double accepted_frac = 0.0;
        std::fill(target_labels.begin(), target_labels.end(), -1);
        std::vector<int> aug_row_of(static_cast<size_t>(nt), -1);
        Mat aug_features(0, model.spec.generator.out_dim());
        std::vector<int> aug_labels;

        if (epoch >= cfg.warmup_epochs) {
            const auto pl = target::pseudo_label(eval_probs(model, target.features), threshold);
            target_labels = pl.labels;
            accepted_frac = pl.accepted_fraction();
            if (cfg.augment && cfg.use_codebook && pl.accepted_count() > 0) {
                const auto rows = pl.accepted_rows();
                Mat feats(static_cast<Eigen::Index>(rows.size()), target.dims());
                std::vector<int> labels(rows.size());
                for (size_t i = 0; i < rows.size(); ++i) {
                    feats.row(static_cast<Eigen::Index>(i)) = target.features.row(rows[i]);
                    labels[i] = pl.labels[static_cast<size_t>(rows[i])];
                }
                const Mat g_acc = eval_forward(model, model.spec.generator, "g", feats);
                const Mat centered = g_acc.rowwise() - g_acc.colwise().mean();
                const double sigma =
                    cfg.perturb_sigma_scale *
                    (centered.array().square().colwise().mean()).sqrt().mean();
                const auto pert = target::perturb(
                    g_acc, labels, sigma, nets::mix_seed(nets::mix_seed(cfg.seed, kSaltPerturb), epoch));
                const double tau_epoch =
                    cfg.tau_start + (cfg.tau_end - cfg.tau_start) *
                                        (total_steps > 0 ? static_cast<double>(global_step) / total_steps : 0.0);
                const auto regen = target::regenerate(
                    pert.features, pert.labels,
                    [&](const Mat& m) { return eval_forward(model, model.spec.encoder, "e", m); },
                    [&](const Mat& m) { return eval_forward(model, model.spec.decoder, "dec", m); },
                    model.cb(), tau_epoch,
                    nets::mix_seed(nets::mix_seed(cfg.seed, kSaltRegen), epoch));
                aug_features = regen.features;
                aug_labels = regen.labels;
                for (size_t i = 0; i < rows.size(); ++i)
                    aug_row_of[static_cast<size_t>(rows[i])] = static_cast<int>(i);
            }
        }

        const auto source_batches = data::batches(
            source, cfg.batch_size, nets::mix_seed(nets::mix_seed(cfg.seed, kSaltSourceBatch), epoch));
        const auto target_batches = data::batches(
            target, cfg.batch_size, nets::mix_seed(nets::mix_seed(cfg.seed, kSaltTargetBatch), epoch));

        double s1 = 0, s2 = 0, s3 = 0, s4 = 0, s5 = 0, stotal = 0;
        Mat usage_sum = Mat::Zero(1, model.spec.codebook_size);
        long usage_rows = 0;
        Mat zbuf(0, model.spec.latent_dim);
        std::vector<int> zbuf_labels;

        for (int k = 0; k < steps_per_epoch; ++k) {
            StepInputs in;
            in.source = source_batches[static_cast<size_t>(k) % source_batches.size()];
            in.target = target_batches[static_cast<size_t>(k) % target_batches.size()];
            for (size_t i = 0; i < in.target.labels.size(); ++i)
                in.target.labels[i] = target_labels[static_cast<size_t>(in.target.indices[i])];

            if (aug_features.rows() > 0) {
                std::vector<int> rows;
                for (size_t i = 0; i < in.target.indices.size(); ++i) {
                    const int r = aug_row_of[static_cast<size_t>(in.target.indices[i])];
                    if (r >= 0) rows.push_back(r);
                }
                in.aug_features.resize(static_cast<Eigen::Index>(rows.size()), aug_features.cols());
                in.aug_labels.resize(rows.size());
                for (size_t i = 0; i < rows.size(); ++i) {
                    in.aug_features.row(static_cast<Eigen::Index>(i)) = aug_features.row(rows[i]);
                    in.aug_labels[i] = aug_labels[static_cast<size_t>(rows[i])];
                }
            } else {
                in.aug_features.resize(0, model.spec.generator.out_dim());
            }

            in.priors = current_priors;
            if (cfg.align == AlignKind::anchors) {
                in.anchor_rows = aux.anchors;
                if (cfg.anchor_noise > 0.0) {
                    std::mt19937_64 rng(
                        nets::mix_seed(nets::mix_seed(cfg.seed, kSaltAnchor), static_cast<std::uint64_t>(global_step)));
                    std::normal_distribution<double> jitter(0.0, cfg.anchor_noise);
                    for (Eigen::Index i = 0; i < in.anchor_rows.rows(); ++i)
                        for (Eigen::Index j = 0; j < in.anchor_rows.cols(); ++j)
                            in.anchor_rows(i, j) += jitter(rng);
                }
            }

            const double progress =
                total_steps > 0 ? static_cast<double>(global_step) / static_cast<double>(total_steps) : 0.0;
            // Fixed alignment targets (anchors, fixed priors) sit far from
            // wherever the encoder starts, so their pull ramps in over the
            // post-warm-up phase (same sigmoid shape as the reversal weight)
            // instead of yanking the encoder at full strength from the first
            // adaptation step. Global priors are re-estimated from the
            // encodings themselves and never start distant, so they hold
            // full weight throughout.
            if (cfg.align != AlignKind::global_priors && epoch >= cfg.warmup_epochs &&
                total_steps > warm_steps) {
                const double p3 = static_cast<double>(global_step - warm_steps) /
                                  static_cast<double>(total_steps - warm_steps);
                step_cfg.lambdas.l3 = cfg.lambdas.l3 * nets::grl_lambda_schedule(p3);
            }
            in.tau = cfg.tau_start + (cfg.tau_end - cfg.tau_start) * progress;
            in.grl_lambda = nets::grl_lambda_schedule(progress);
            in.noise_seed = nets::mix_seed(nets::mix_seed(cfg.seed, kSaltGumbel),
                                           static_cast<std::uint64_t>(global_step));
            const double lr = nets::lr_schedule(cfg.base_lr, progress);

            Mat step_z, step_assign;
            LossBreakdown bd = train_step(model, opt, in, step_cfg, lr, &step_z, &step_assign);
            bd.epoch = epoch;
            bd.step = static_cast<int>(global_step);
            s1 += bd.l1_srm;
            s2 += bd.l2_adv;
            s3 += bd.l3_align;
            s4 += bd.l4_entropy;
            s5 += bd.l5_recon;
            stotal += bd.total;
            append_rows(zbuf, step_z);
            zbuf_labels.insert(zbuf_labels.end(), in.source.labels.begin(), in.source.labels.end());
            if (step_assign.size() > 0) {
                usage_sum += step_assign.colwise().sum();
                usage_rows += step_assign.rows();
            }
            ++global_step;
        }

        EpochMetrics em;
        em.epoch = epoch;
        em.step = static_cast<int>(global_step);
        const double denom = static_cast<double>(steps_per_epoch);
        em.l1 = s1 / denom;
        em.l2 = s2 / denom;
        em.l3 = s3 / denom;
        em.l4 = s4 / denom;
        em.l5 = s5 / denom;
        em.total = stotal / denom;
        em.acc_target = evaluate(model, target);
        em.perplexity =
            usage_rows > 0 ? codebook::usage_perplexity(usage_sum / static_cast<double>(usage_rows)) : 0.0;
        // Class variance tracks how tightly the encoder packs each labeled
        // class, so it is measured on dropout-free source encodings; the
        // train-mode buffer would fold regularization noise into the number,
        // and target rows would fold in alignment error.
        em.mean_class_var = priors::mean_class_variance(
            priors::batch_class_stats(eval_encodings(model, source.features), source.labels, C));
        em.accepted_frac = accepted_frac;
        metrics.push_back(em);

        if (cfg.align == AlignKind::global_priors)
            current_priors = priors::estimate_epoch_priors(zbuf, zbuf_labels, C);
    }

    if (!metrics_csv_path.empty()) write_metrics_csv(metrics, metrics_csv_path);

    FitResult res;
    res.metrics = std::move(metrics);
    res.final_priors = std::move(current_priors);
    res.final_target_accuracy = res.metrics.back().acc_target;
    res.model = std::move(model);
    return res;
}

namespace {

void format_cell(std::string& out, double v) {
    char buf[32];
    const int len = std::snprintf(buf, sizeof(buf), "%.17g", v);
    out.append(buf, static_cast<size_t>(len));
}

constexpr const char* kMetricsHeader =
    "epoch,step,l1,l2,l3,l4,l5,total,acc_target,perplexity,mean_class_var,accepted_frac";

}  // namespace

void write_metrics_csv(const std::vector<EpochMetrics>& rows, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open '" + path + "' for writing");
    std::string text(kMetricsHeader);
    text += '\n';
    for (const auto& r : rows) {
        text += std::to_string(r.epoch);
        text += ',';
        text += std::to_string(r.step);
        for (double v : {r.l1, r.l2, r.l3, r.l4, r.l5, r.total, r.acc_target, r.perplexity,
                         r.mean_class_var, r.accepted_frac}) {
            text += ',';
            format_cell(text, v);
        }
        text += '\n';
    }
    out << text;
    if (!out) throw FormatError("short write to '" + path + "'");
}

std::vector<EpochMetrics> read_metrics_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line != kMetricsHeader)
        throw FormatError("'" + path + "' is not a metrics log (bad header)");
    std::vector<EpochMetrics> rows;
    int rownum = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++rownum;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> vals;
        while (std::getline(ss, cell, ',')) {
            try {
                vals.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw FormatError("row " + std::to_string(rownum) + ": non-numeric cell '" + cell + "'");
            }
        }
        if (vals.size() != 12)
            throw FormatError("row " + std::to_string(rownum) + ": expected 12 cells");
        EpochMetrics em;
        em.epoch = static_cast<int>(vals[0]);
        em.step = static_cast<int>(vals[1]);
        em.l1 = vals[2];
        em.l2 = vals[3];
        em.l3 = vals[4];
        em.l4 = vals[5];
        em.l5 = vals[6];
        em.total = vals[7];
        em.acc_target = vals[8];
        em.perplexity = vals[9];
        em.mean_class_var = vals[10];
        em.accepted_frac = vals[11];
        rows.push_back(em);
    }
    return rows;
}

namespace {

json network_to_json(const nets::NetworkSpec& net) {
    json layers = json::array();
    for (const auto& l : net.layers)
        layers.push_back({{"in", l.in},
                          {"out", l.out},
                          {"act", nets::to_string(l.act)},
                          {"dropout", l.dropout}});
    return layers;
}

nets::NetworkSpec network_from_json(const json& j) {
    nets::NetworkSpec net;
    for (const auto& l : j)
        net.layers.push_back({l.at("in").get<int>(), l.at("out").get<int>(),
                              nets::activation_from_string(l.at("act").get<std::string>()),
                              l.at("dropout").get<double>()});
    return net;
}

}  // namespace

std::string model_spec_to_json(const ModelSpec& spec) {
    json j;
    j["generator"] = network_to_json(spec.generator);
    j["encoder"] = network_to_json(spec.encoder);
    j["decoder"] = network_to_json(spec.decoder);
    j["classifier"] = network_to_json(spec.classifier);
    j["discriminator"] = network_to_json(spec.discriminator);
    j["latent_dim"] = spec.latent_dim;
    j["codebook_size"] = spec.codebook_size;
    return j.dump();
}

ModelSpec model_spec_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad model spec JSON: ") + e.what());
    }
    ModelSpec spec;
    spec.generator = network_from_json(j.at("generator"));
    spec.encoder = network_from_json(j.at("encoder"));
    spec.decoder = network_from_json(j.at("decoder"));
    spec.classifier = network_from_json(j.at("classifier"));
    spec.discriminator = network_from_json(j.at("discriminator"));
    spec.latent_dim = j.at("latent_dim").get<int>();
    spec.codebook_size = j.at("codebook_size").get<int>();
    return spec;
}

void save_model(const Model& model, const std::string& path, const std::string& extra_meta_json) {
    json meta;
    meta["kind"] = "gvida_model";
    meta["feature_dim"] = model.feature_dim;
    meta["class_count"] = model.class_count;
    meta["spec"] = json::parse(model_spec_to_json(model.spec));
    meta["extra"] = json::parse(extra_meta_json);
    nets::save_checkpoint(model.params, path, meta.dump());
}

Model load_model(const std::string& path) {
    std::string meta_text;
    nets::ParamStore params = nets::load_checkpoint(path, &meta_text);
    json meta;
    try {
        meta = json::parse(meta_text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad model meta: ") + e.what());
    }
    if (meta.value("kind", "") != "gvida_model")
        throw FormatError("'" + path + "' is not a model checkpoint");
    Model m;
    m.feature_dim = meta.at("feature_dim").get<int>();
    m.class_count = meta.at("class_count").get<int>();
    m.spec = model_spec_from_json(meta.at("spec").dump());
    m.spec.validate(m.feature_dim, m.class_count);
    m.params = std::move(params);
    return m;
}

}  // namespace gvida::train
