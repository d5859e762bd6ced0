#include "gvida/cli.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <set>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "gvida/baselines.hpp"
#include "gvida/dataset.hpp"
#include "gvida/errors.hpp"
#include "gvida/report.hpp"
#include "gvida/trainer.hpp"

#ifndef GVIDA_VERSION_STRING
#define GVIDA_VERSION_STRING "untracked"
#endif

namespace gvida::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct DataCfg {
    std::string name = "task";
    std::string source_path;
    std::string target_path;
    int classes = 0;  // required when loading from files
    int synth_classes = 3;
    int synth_per_class = 160;
    int synth_dims = 2;
    std::string synth_shift = "rotation";
    double synth_magnitude = 0.7853981633974483;  // pi/4
    double synth_noise_std = 0.55;
    std::uint64_t synth_seed = 7;

    bool from_files() const { return !source_path.empty() || !target_path.empty(); }
};

struct ModelCfg {
    int latent_dim = 16;
    int codebook_size = 32;
};

struct VariantCfg {
    std::string name = "gvida";
    std::uint64_t seed = 1;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    std::vector<std::string> list = {"source_only", "cdan", "gvida"};
};

struct OutputCfg {
    std::string dir;  // empty means: GVIDA_RUNS_DIR env, else "runs"
    bool save_model = true;
};

struct Config {
    DataCfg data;
    ModelCfg model;
    train::TrainConfig tcfg;
    VariantCfg variant;
    OutputCfg output;
};

void reject_unknown(const json& j, const std::string& where,
                    std::initializer_list<const char*> keys, const std::string& path) {
    if (!j.is_object()) throw ConfigError(path + ": section '" + where + "' must be an object");
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [key, value] : j.items())
        if (!allowed.count(key))
            throw ConfigError(path + ": unknown key '" + where + "." + key + "'");
}

template <typename T>
void take(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

Config parse_config(const json& j, const std::string& path) {
    Config cfg;
    reject_unknown(j, "(top level)", {"data", "model", "train", "variant", "output"}, path);
    if (j.contains("data")) {
        const json& d = j.at("data");
        reject_unknown(d, "data", {"name", "source", "target", "classes", "synthetic"}, path);
        take(d, "name", cfg.data.name);
        take(d, "source", cfg.data.source_path);
        take(d, "target", cfg.data.target_path);
        take(d, "classes", cfg.data.classes);
        if (d.contains("synthetic")) {
            const json& s = d.at("synthetic");
            reject_unknown(s, "data.synthetic",
                           {"classes", "per_class", "dims", "shift", "magnitude", "noise_std", "seed"},
                           path);
            take(s, "classes", cfg.data.synth_classes);
            take(s, "per_class", cfg.data.synth_per_class);
            take(s, "dims", cfg.data.synth_dims);
            take(s, "shift", cfg.data.synth_shift);
            take(s, "magnitude", cfg.data.synth_magnitude);
            take(s, "noise_std", cfg.data.synth_noise_std);
            take(s, "seed", cfg.data.synth_seed);
        }
    }
    if (j.contains("model")) {
        const json& m = j.at("model");
        reject_unknown(m, "model", {"latent_dim", "codebook_size"}, path);
        take(m, "latent_dim", cfg.model.latent_dim);
        take(m, "codebook_size", cfg.model.codebook_size);
    }
    if (j.contains("train")) {
        const json& t = j.at("train");
        reject_unknown(t, "train",
                       {"epochs", "batch_size", "base_lr", "momentum", "weight_decay", "grad_clip",
                        "lambda1", "lambda2", "lambda3", "lambda4", "lambda5", "entropy_threshold",
                        "warmup_epochs", "perturb_sigma_scale", "commitment_beta", "tau_start",
                        "tau_end"},
                       path);
        take(t, "epochs", cfg.tcfg.epochs);
        take(t, "batch_size", cfg.tcfg.batch_size);
        take(t, "base_lr", cfg.tcfg.base_lr);
        take(t, "momentum", cfg.tcfg.sgd.momentum);
        take(t, "weight_decay", cfg.tcfg.sgd.weight_decay);
        take(t, "grad_clip", cfg.tcfg.sgd.clip_norm);
        take(t, "lambda1", cfg.tcfg.lambdas.l1);
        take(t, "lambda2", cfg.tcfg.lambdas.l2);
        take(t, "lambda3", cfg.tcfg.lambdas.l3);
        take(t, "lambda4", cfg.tcfg.lambdas.l4);
        take(t, "lambda5", cfg.tcfg.lambdas.l5);
        take(t, "entropy_threshold", cfg.tcfg.entropy_threshold);
        take(t, "warmup_epochs", cfg.tcfg.warmup_epochs);
        take(t, "perturb_sigma_scale", cfg.tcfg.perturb_sigma_scale);
        take(t, "commitment_beta", cfg.tcfg.commitment_beta);
        take(t, "tau_start", cfg.tcfg.tau_start);
        take(t, "tau_end", cfg.tcfg.tau_end);
    }
    if (j.contains("variant")) {
        const json& v = j.at("variant");
        reject_unknown(v, "variant", {"name", "seed", "seeds", "list"}, path);
        take(v, "name", cfg.variant.name);
        take(v, "seed", cfg.variant.seed);
        take(v, "seeds", cfg.variant.seeds);
        take(v, "list", cfg.variant.list);
    }
    if (j.contains("output")) {
        const json& o = j.at("output");
        reject_unknown(o, "output", {"dir", "save_model"}, path);
        take(o, "dir", cfg.output.dir);
        take(o, "save_model", cfg.output.save_model);
    }
    return cfg;
}

Config load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    try {
        return parse_config(j, path);
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

void validate_config(const Config& cfg) {
    cfg.tcfg.validate();
    if (cfg.model.latent_dim < 1) throw ConfigError("model.latent_dim must be >= 1");
    if (cfg.model.codebook_size < 1) throw ConfigError("model.codebook_size must be >= 1");
    if (cfg.data.from_files()) {
        if (cfg.data.source_path.empty() || cfg.data.target_path.empty())
            throw ConfigError("data.source and data.target must be given together");
        if (cfg.data.classes < 2)
            throw ConfigError("data.classes must be >= 2 when loading dataset files");
    } else {
        if (cfg.data.synth_classes < 2) throw ConfigError("data.synthetic.classes must be >= 2");
        if (cfg.data.synth_per_class < 1) throw ConfigError("data.synthetic.per_class must be >= 1");
        if (cfg.data.synth_dims < 2) throw ConfigError("data.synthetic.dims must be >= 2");
        data::shift_kind_from_string(cfg.data.synth_shift);  // throws on a bad name
        if (cfg.data.synth_noise_std < 0.0)
            throw ConfigError("data.synthetic.noise_std must be >= 0");
    }
}

std::string runs_root(const Config& cfg, const std::string& flag_value) {
    if (!flag_value.empty()) return flag_value;
    if (!cfg.output.dir.empty()) return cfg.output.dir;
    if (const char* env = std::getenv("GVIDA_RUNS_DIR"); env && *env) return env;
    return "runs";
}

std::pair<data::DomainDataset, data::DomainDataset> make_datasets(const Config& cfg) {
    if (cfg.data.from_files()) {
        auto source = data::load_dataset(cfg.data.source_path, cfg.data.classes);
        auto target = data::load_dataset(cfg.data.target_path, cfg.data.classes);
        return {std::move(source), std::move(target)};
    }
    data::ShiftSpec shift;
    shift.kind = data::shift_kind_from_string(cfg.data.synth_shift);
    shift.magnitude = cfg.data.synth_magnitude;
    shift.noise_std = cfg.data.synth_noise_std;
    shift.seed = nets::mix_seed(cfg.data.synth_seed, 0x5f37);
    return data::generate_pair(cfg.data.synth_classes, cfg.data.synth_per_class,
                               cfg.data.synth_dims, shift, cfg.data.synth_seed);
}

json resolved_json(const Config& cfg, const std::string& variant, std::uint64_t seed) {
    json j;
    j["version"] = GVIDA_VERSION_STRING;
    j["data"] = {{"name", cfg.data.name},
                 {"source", cfg.data.source_path},
                 {"target", cfg.data.target_path},
                 {"classes", cfg.data.classes},
                 {"synthetic",
                  {{"classes", cfg.data.synth_classes},
                   {"per_class", cfg.data.synth_per_class},
                   {"dims", cfg.data.synth_dims},
                   {"shift", cfg.data.synth_shift},
                   {"magnitude", cfg.data.synth_magnitude},
                   {"noise_std", cfg.data.synth_noise_std},
                   {"seed", cfg.data.synth_seed}}}};
    j["model"] = {{"latent_dim", cfg.model.latent_dim},
                  {"codebook_size", cfg.model.codebook_size}};
    j["train"] = {{"epochs", cfg.tcfg.epochs},
                  {"batch_size", cfg.tcfg.batch_size},
                  {"base_lr", cfg.tcfg.base_lr},
                  {"momentum", cfg.tcfg.sgd.momentum},
                  {"weight_decay", cfg.tcfg.sgd.weight_decay},
                  {"grad_clip", cfg.tcfg.sgd.clip_norm},
                  {"lambda1", cfg.tcfg.lambdas.l1},
                  {"lambda2", cfg.tcfg.lambdas.l2},
                  {"lambda3", cfg.tcfg.lambdas.l3},
                  {"lambda4", cfg.tcfg.lambdas.l4},
                  {"lambda5", cfg.tcfg.lambdas.l5},
                  {"entropy_threshold", cfg.tcfg.entropy_threshold},
                  {"warmup_epochs", cfg.tcfg.warmup_epochs},
                  {"perturb_sigma_scale", cfg.tcfg.perturb_sigma_scale},
                  {"commitment_beta", cfg.tcfg.commitment_beta},
                  {"tau_start", cfg.tcfg.tau_start},
                  {"tau_end", cfg.tcfg.tau_end}};
    j["variant"] = {{"name", variant}, {"seed", seed}};
    j["output"] = {{"dir", cfg.output.dir}, {"save_model", cfg.output.save_model}};
    return j;
}

report::RunRecord run_once(const Config& cfg, const std::string& variant, std::uint64_t seed,
                           const std::string& out_root, const data::DomainDataset& source,
                           const data::DomainDataset& target) {
    const auto spec = train::ModelSpec::defaults_for(source.dims(), source.class_count,
                                                     cfg.model.latent_dim, cfg.model.codebook_size);
    auto model = train::Model::init(spec, source.dims(), source.class_count, seed);
    train::TrainConfig tcfg = cfg.tcfg;
    tcfg.seed = seed;

    const fs::path dir = fs::path(out_root) / (variant + "_s" + std::to_string(seed));
    fs::create_directories(dir);
    {
        std::ofstream out(dir / "resolved_config.json", std::ios::binary);
        if (!out) throw ConfigError("cannot write '" + (dir / "resolved_config.json").string() + "'");
        out << resolved_json(cfg, variant, seed).dump(2) << '\n';
    }
    auto res = baselines::run_variant(variant, std::move(model), source, target, tcfg,
                                      (dir / "metrics.csv").string());
    if (cfg.output.save_model) {
        json extra = {{"variant", variant}, {"seed", seed}, {"version", GVIDA_VERSION_STRING}};
        train::save_model(res.model, (dir / "model.ckpt").string(), extra.dump());
    }
    report::RunRecord rec;
    rec.variant = variant;
    rec.task = cfg.data.name;
    rec.seed = seed;
    rec.accuracy = res.final_target_accuracy;
    std::printf("%s seed=%llu final target accuracy %.4f -> %s\n", variant.c_str(),
                static_cast<unsigned long long>(seed), rec.accuracy, dir.string().c_str());
    return rec;
}

void write_summary(const std::vector<report::RunRecord>& records, const std::string& out_root) {
    report::write_summary_csv(records, (fs::path(out_root) / "summary.csv").string());
    const std::string table = report::render_table(report::summarize(records));
    std::ofstream out(fs::path(out_root) / "summary.txt", std::ios::binary);
    if (!out) throw ConfigError("cannot write summary under '" + out_root + "'");
    out << table;
    std::fputs(table.c_str(), stdout);
}

int dispatch(const std::vector<std::string>& args) {
    CLI::App app{"synthetic-shift domain adaptation experiments"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen-data", "write a synthetic source/target CSV pair");
    std::string gen_out = "data", gen_config, gen_shift;
    int gen_classes = 0, gen_per = 0, gen_dims = 0;
    double gen_mag = 0.0, gen_noise = 0.0;
    std::uint64_t gen_seed = 0;
    gen->add_option("--out", gen_out, "output directory");
    gen->add_option("--config", gen_config, "config file supplying data.synthetic defaults");
    auto* o_classes = gen->add_option("--classes", gen_classes, "number of classes");
    auto* o_per = gen->add_option("--per-class", gen_per, "samples per class");
    auto* o_dims = gen->add_option("--dims", gen_dims, "feature dimension");
    auto* o_shift =
        gen->add_option("--shift", gen_shift, "rotation | affine | class_conditional_offset");
    auto* o_mag = gen->add_option("--magnitude", gen_mag, "shift magnitude (radians for rotation)");
    auto* o_noise = gen->add_option("--noise-std", gen_noise, "target noise std");
    auto* o_seed = gen->add_option("--seed", gen_seed, "generation seed");

    auto* tr = app.add_subcommand("train", "train one variant and write a run directory");
    std::string tr_config, tr_variant, tr_out;
    std::uint64_t tr_seed = 0;
    int tr_epochs = 0;
    tr->add_option("--config", tr_config, "experiment config JSON");
    auto* t_variant = tr->add_option("--variant", tr_variant, "variant name");
    auto* t_seed = tr->add_option("--seed", tr_seed, "training seed");
    auto* t_epochs = tr->add_option("--epochs", tr_epochs, "override epoch count");
    tr->add_option("--out", tr_out, "runs root directory");

    auto* ev = app.add_subcommand("eval", "report a saved model's accuracy on a dataset CSV");
    std::string ev_model, ev_data;
    ev->add_option("--model", ev_model, "model checkpoint")->required();
    ev->add_option("--data", ev_data, "dataset CSV")->required();

    auto* sw = app.add_subcommand("sweep", "run variants x seeds and summarize");
    std::string sw_config, sw_out;
    std::vector<std::string> sw_variants;
    std::vector<std::uint64_t> sw_seeds;
    sw->add_option("--config", sw_config, "experiment config JSON");
    auto* s_variants = sw->add_option("--variants", sw_variants, "variant names")->delimiter(',');
    auto* s_seeds = sw->add_option("--seeds", sw_seeds, "seeds")->delimiter(',');
    sw->add_option("--out", sw_out, "runs root directory");

    auto* rp = app.add_subcommand("report", "aggregate finished runs into a summary table");
    std::string rp_runs;
    rp->add_option("--runs", rp_runs, "runs root directory")->required();

    auto* pl = app.add_subcommand("plot", "write loss/accuracy SVG curves for one run");
    std::string pl_run;
    pl->add_option("--run", pl_run, "run directory containing metrics.csv")->required();

    {
        std::vector<std::string> full;
        full.reserve(args.size() + 1);
        full.push_back("gvida");
        full.insert(full.end(), args.begin(), args.end());
        std::vector<const char*> argv;
        argv.reserve(full.size());
        for (const auto& s : full) argv.push_back(s.c_str());
        try {
            app.parse(static_cast<int>(argv.size()), argv.data());
        } catch (const CLI::ParseError& e) {
            const int code = app.exit(e);
            return code == 0 ? 0 : 2;
        }
    }

    if (gen->parsed()) {
        Config cfg = gen_config.empty() ? Config{} : load_config(gen_config);
        if (o_classes->count()) cfg.data.synth_classes = gen_classes;
        if (o_per->count()) cfg.data.synth_per_class = gen_per;
        if (o_dims->count()) cfg.data.synth_dims = gen_dims;
        if (o_shift->count()) cfg.data.synth_shift = gen_shift;
        if (o_mag->count()) cfg.data.synth_magnitude = gen_mag;
        if (o_noise->count()) cfg.data.synth_noise_std = gen_noise;
        if (o_seed->count()) cfg.data.synth_seed = gen_seed;
        cfg.data.source_path.clear();
        cfg.data.target_path.clear();
        validate_config(cfg);
        const auto [source, target] = make_datasets(cfg);
        fs::create_directories(gen_out);
        const std::string sp = (fs::path(gen_out) / "source.csv").string();
        const std::string tp = (fs::path(gen_out) / "target.csv").string();
        data::save_dataset(source, sp);
        data::save_dataset(target, tp);
        std::printf("wrote %s (%d rows) and %s (%d rows)\n", sp.c_str(), source.rows(), tp.c_str(),
                    target.rows());
        return 0;
    }

    if (tr->parsed()) {
        Config cfg = tr_config.empty() ? Config{} : load_config(tr_config);
        if (t_variant->count()) cfg.variant.name = tr_variant;
        if (t_seed->count()) cfg.variant.seed = tr_seed;
        if (t_epochs->count()) cfg.tcfg.epochs = tr_epochs;
        validate_config(cfg);
        baselines::parse_variant(cfg.variant.name);
        const std::string root = runs_root(cfg, tr_out);
        const auto [source, target] = make_datasets(cfg);
        run_once(cfg, cfg.variant.name, cfg.variant.seed, root, source, target);
        return 0;
    }

    if (ev->parsed()) {
        const auto model = train::load_model(ev_model);
        const auto ds = data::load_dataset(ev_data, model.class_count);
        std::printf("accuracy %.6f\n", train::evaluate(model, ds));
        return 0;
    }

    if (sw->parsed()) {
        Config cfg = sw_config.empty() ? Config{} : load_config(sw_config);
        if (s_variants->count()) cfg.variant.list = sw_variants;
        if (s_seeds->count()) cfg.variant.seeds = sw_seeds;
        validate_config(cfg);
        if (cfg.variant.list.empty()) throw ConfigError("sweep needs a non-empty variant list");
        if (cfg.variant.seeds.empty()) throw ConfigError("sweep needs a non-empty seed list");
        for (const auto& v : cfg.variant.list) baselines::parse_variant(v);
        const std::string root = runs_root(cfg, sw_out);
        const auto [source, target] = make_datasets(cfg);
        std::vector<report::RunRecord> records;
        for (const auto& v : cfg.variant.list)
            for (const auto seed : cfg.variant.seeds)
                records.push_back(run_once(cfg, v, seed, root, source, target));
        write_summary(records, root);
        return 0;
    }

    if (rp->parsed()) {
        const auto records = report::collect_runs(rp_runs);
        if (records.empty()) throw ConfigError("no metric logs found under '" + rp_runs + "'");
        write_summary(records, rp_runs);
        return 0;
    }

    if (pl->parsed()) {
        const auto rows = train::read_metrics_csv((fs::path(pl_run) / "metrics.csv").string());
        if (rows.empty()) throw ConfigError("no metric rows in '" + pl_run + "'");
        const std::string lp = (fs::path(pl_run) / "loss.svg").string();
        const std::string ap = (fs::path(pl_run) / "accuracy.svg").string();
        report::write_loss_curves_svg(rows, lp);
        report::write_accuracy_curve_svg(rows, ap);
        std::printf("wrote %s and %s\n", lp.c_str(), ap.c_str());
        return 0;
    }

    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    try {
        return dispatch(args);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const FormatError& e) {
        std::fprintf(stderr, "format error: %s\n", e.what());
        return 2;
    } catch (const ParameterError& e) {
        std::fprintf(stderr, "parameter error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
}

}  // namespace gvida::cli
