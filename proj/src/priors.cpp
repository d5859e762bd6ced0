#include "gvida/priors.hpp"

#include <cmath>

#include <json.hpp>

#include "gvida/errors.hpp"

namespace gvida::priors {

namespace {

void check_inputs(const Mat& encoded, const std::vector<int>& labels, int class_count,
                  bool allow_sentinel) {
    if (class_count < 1) throw ParameterError("class_count must be >= 1");
    if (static_cast<Eigen::Index>(labels.size()) != encoded.rows())
        throw ParameterError("encoded rows and labels disagree");
    if (!encoded.allFinite()) throw NumericError("encodings contain non-finite values");
    for (size_t i = 0; i < labels.size(); ++i) {
        const int y = labels[i];
        if (y >= class_count || y < (allow_sentinel ? -1 : 0))
            throw ParameterError("row " + std::to_string(i + 1) + ": label " + std::to_string(y) +
                                 " invalid for class_count " + std::to_string(class_count));
    }
}

}  // namespace

std::vector<ClassPrior> estimate_epoch_priors(const Mat& encoded, const std::vector<int>& labels,
                                              int class_count) {
    check_inputs(encoded, labels, class_count, false);
    const Eigen::Index d = encoded.cols();
    std::vector<ClassPrior> priors(static_cast<size_t>(class_count));
    std::vector<int> counts(static_cast<size_t>(class_count), 0);
    for (int c = 0; c < class_count; ++c) {
        priors[static_cast<size_t>(c)].class_id = c;
        priors[static_cast<size_t>(c)].mean = RowVec::Zero(d);
        priors[static_cast<size_t>(c)].variance = 1.0 / static_cast<double>(class_count);
    }
    for (Eigen::Index i = 0; i < encoded.rows(); ++i) {
        const int y = labels[static_cast<size_t>(i)];
        priors[static_cast<size_t>(y)].mean += encoded.row(i);
        ++counts[static_cast<size_t>(y)];
    }
    for (int c = 0; c < class_count; ++c) {
        if (counts[static_cast<size_t>(c)] == 0)
            throw PriorEstimationError("class " + std::to_string(c) + " has no samples in the epoch buffer");
        priors[static_cast<size_t>(c)].mean /= static_cast<double>(counts[static_cast<size_t>(c)]);
    }
    return priors;
}

std::vector<ClassStats> batch_class_stats(const Mat& encoded, const std::vector<int>& labels,
                                          int class_count) {
    check_inputs(encoded, labels, class_count, true);
    const Eigen::Index d = encoded.cols();
    std::vector<ClassStats> out;
    for (int c = 0; c < class_count; ++c) {
        RowVec sum = RowVec::Zero(d);
        RowVec sum_sq = RowVec::Zero(d);
        int count = 0;
        for (Eigen::Index i = 0; i < encoded.rows(); ++i) {
            if (labels[static_cast<size_t>(i)] != c) continue;
            sum += encoded.row(i);
            sum_sq += encoded.row(i).cwiseProduct(encoded.row(i));
            ++count;
        }
        if (count == 0) continue;
        ClassStats s;
        s.class_id = c;
        s.count = count;
        s.mean = sum / static_cast<double>(count);
        s.variance =
            (sum_sq / static_cast<double>(count) - s.mean.cwiseProduct(s.mean)).cwiseMax(kVarianceFloor);
        out.push_back(std::move(s));
    }
    return out;
}

double gaussian_kl(const RowVec& mean_q, const RowVec& var_q, const RowVec& mean_p,
                   const RowVec& var_p) {
    const auto d = mean_q.size();
    if (var_q.size() != d || mean_p.size() != d || var_p.size() != d)
        throw ParameterError("gaussian_kl: dimension mismatch");
    if ((var_q.array() <= 0.0).any() || (var_p.array() <= 0.0).any())
        throw ParameterError("gaussian_kl: variances must be positive");
    double kl = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
        const double diff = mean_q(j) - mean_p(j);
        kl += 0.5 * std::log(var_p(j) / var_q(j)) + (var_q(j) + diff * diff) / (2.0 * var_p(j)) - 0.5;
    }
    return kl;
}

double gaussian_kl(const RowVec& mean_q, const RowVec& var_q, const RowVec& mean_p, double var_p) {
    return gaussian_kl(mean_q, var_q, mean_p, RowVec::Constant(mean_q.size(), var_p));
}

double global_alignment_loss(const std::vector<ClassStats>& stats,
                             const std::vector<ClassPrior>& priors) {
    double total = 0.0;
    for (const auto& s : stats) {
        const ClassPrior* prior = nullptr;
        for (const auto& p : priors)
            if (p.class_id == s.class_id) prior = &p;
        if (!prior) throw ParameterError("no prior for class " + std::to_string(s.class_id));
        total += gaussian_kl(s.mean, s.variance, prior->mean, prior->variance);
    }
    return total;
}

double mean_class_variance(const std::vector<ClassStats>& stats) {
    if (stats.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& s : stats) acc += s.variance.mean();
    return acc / static_cast<double>(stats.size());
}

std::pair<double, double> lemma1_check(const Mat& joint_s, const Mat& joint_t) {
    if (joint_s.rows() != joint_t.rows() || joint_s.cols() != joint_t.cols())
        throw ParameterError("lemma1_check: joint shapes differ");
    if ((joint_s.array() < 0.0).any() || (joint_t.array() < 0.0).any())
        throw ParameterError("lemma1_check: joints must be non-negative");
    if (std::abs(joint_s.sum() - 1.0) > 1e-9 || std::abs(joint_t.sum() - 1.0) > 1e-9)
        throw ParameterError("lemma1_check: each joint must sum to 1");

    double cond_div = 0.0;
    for (Eigen::Index c = 0; c < joint_s.rows(); ++c) {
        const double mass_s = joint_s.row(c).sum();
        const double mass_t = joint_t.row(c).sum();
        if (mass_s == 0.0 && mass_t == 0.0) continue;
        if (mass_s == 0.0 || mass_t == 0.0) {
            cond_div = 1.0;
            continue;
        }
        const double tv = 0.5 * (joint_s.row(c) / mass_s - joint_t.row(c) / mass_t).cwiseAbs().sum();
        cond_div = std::max(cond_div, tv);
    }
    const double marg_div = 0.5 * (joint_s.colwise().sum() - joint_t.colwise().sum()).cwiseAbs().sum();
    return {cond_div, marg_div};
}

ad::Var alignment_loss_on_tape(ad::Tape& t, ad::Var encoded, const std::vector<int>& labels,
                               const std::vector<ClassPrior>& priors) {
    const Mat& z = t.val(encoded);
    if (static_cast<Eigen::Index>(labels.size()) != z.rows())
        throw ParameterError("alignment_loss_on_tape: labels and rows disagree");

    ad::Var loss = t.constant(Mat::Zero(1, 1));
    double constant_part = 0.0;
    const Eigen::Index d = z.cols();

    for (const auto& prior : priors) {
        std::vector<int> rows;
        for (size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == prior.class_id) rows.push_back(static_cast<int>(i));
        if (rows.empty()) continue;
        if (prior.mean.size() != d) throw ParameterError("alignment_loss_on_tape: prior dim mismatch");
        if (prior.variance <= 0.0) throw ParameterError("alignment_loss_on_tape: prior variance <= 0");

        ad::Var zc = t.gather_rows(encoded, rows);
        ad::Var mean = t.col_mean(zc);
        ad::Var var = t.clamp_min(t.sub(t.col_mean(t.square(zc)), t.square(mean)), kVarianceFloor);
        ad::Var diff = t.sub(mean, t.constant(prior.mean));

        // sum_j [ -0.5*log(var_j) + (var_j + diff_j^2)/(2*vp) ] + d*(0.5*log(vp) - 0.5)
        ad::Var log_term = t.sum(t.scale(t.log(var), -0.5));
        ad::Var quad_term = t.sum(t.scale(t.add(var, t.square(diff)), 1.0 / (2.0 * prior.variance)));
        loss = t.add(loss, t.add(log_term, quad_term));
        constant_part += static_cast<double>(d) * (0.5 * std::log(prior.variance) - 0.5);
    }
    return t.add_scalar(loss, constant_part);
}

std::string priors_to_json(const std::vector<ClassPrior>& priors) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : priors) {
        nlohmann::json entry;
        entry["class_id"] = p.class_id;
        entry["variance"] = p.variance;
        entry["mean"] = std::vector<double>(p.mean.data(), p.mean.data() + p.mean.size());
        arr.push_back(std::move(entry));
    }
    return arr.dump(2);
}

std::vector<ClassPrior> priors_from_json(const std::string& text) {
    nlohmann::json arr;
    try {
        arr = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad priors JSON: ") + e.what());
    }
    if (!arr.is_array()) throw FormatError("priors JSON must be an array");
    std::vector<ClassPrior> out;
    for (const auto& entry : arr) {
        ClassPrior p;
        p.class_id = entry.at("class_id").get<int>();
        p.variance = entry.at("variance").get<double>();
        const auto mean = entry.at("mean").get<std::vector<double>>();
        p.mean = Eigen::Map<const RowVec>(mean.data(), static_cast<Eigen::Index>(mean.size()));
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace gvida::priors
