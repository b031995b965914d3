// SPDX-License-Identifier: Apache-2.0
//
// Workbench entry point. Subcommands:
//   train     fit a variant on three IDX tasks (or the built-in synthetic set)
//   eval      score a checkpoint in ID or blind mode, dump routing histograms
//   simulate  run the connection-logit dynamics ensemble or the cosine study
//   export    regenerate SVG heatmaps / curve CSVs from a finished run
//   gen-data  write the synthetic three-task IDX files to disk
//
// Exit codes: 0 success, 2 bad configuration or usage, 3 I/O failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cdsp/checkpoint.hpp"
#include "cdsp/data.hpp"
#include "cdsp/dynamics.hpp"
#include "cdsp/idx.hpp"
#include "cdsp/metrics.hpp"
#include "cdsp/model.hpp"
#include "cdsp/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cdsp;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

json default_config() {
    json j;
    j["data"] = {
        {"tasks", json::array()},  // optional: 3 x {train_images, train_labels,
                                   //              test_images, test_labels}
        {"synthetic", {{"train_per_class", 200}, {"test_per_class", 40}, {"seed", 42}}},
        {"subsample_per_task", 0},
    };
    j["model"] = {
        {"n_experts", 8},       {"d_base", 256},     {"d_model", 64},
        {"rank_mode", "fixed"}, {"fixed_rank", 32},  {"top_k", 2},
        {"n_tasks", 3},         {"n_classes", 30},   {"input_dim", 784},
        {"task_embed_dim", 16}, {"p_drop", 0.1},     {"orthonormal_backbone_init", false},
    };
    j["train"] = {
        {"epochs", 10},          {"batch_size", 128},      {"lambda_task", 1.0},
        {"lambda_conf", 10.0},   {"lambda_reg", 1e-4},     {"aux_coeff", 0.01},
        {"variant", "cdsp"},     {"holdout_fraction", 0.1}, {"seed", 0},
        {"base_lr", 5e-3},       {"base_weight_decay", 1e-2},
        {"topo_lr", 5e-2},       {"topo_weight_decay", 0.0},
        {"p_drop_end", nullptr},
    };
    j["dynamics"] = {
        {"eta", 0.05},         {"lambda_c", 10.0},    {"lambda_r", 1e-4},
        {"task_gain", 0.0},    {"conflict", 0.5},     {"partner_prob", 0.5},
        {"noise_std", 0.1},    {"init_mode", "zero_centered"}, {"init_eps", 0.02},
        {"steps", 5000},       {"n_chains", 10000},   {"record_every", 10},
        {"seed", 0},
        // Lemma-1 cosine study knobs (used by the lemma1 preset).
        {"d_out", 128},        {"n_pairs", 100000},
    };
    j["output"] = {{"directory", "run"}};
    return j;
}

// Merge `user` onto `base`, rejecting keys absent from the defaults so typos
// fail loudly. Arrays and null-able leaves are replaced wholesale.
void merge_config(json& base, const json& user, const std::string& prefix) {
    if (!user.is_object()) throw ConfigError("config section is not an object: " + prefix);
    for (auto it = user.begin(); it != user.end(); ++it) {
        const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (!base.contains(it.key())) throw ConfigError("unknown config key: " + path);
        json& slot = base[it.key()];
        if (slot.is_object() && it.value().is_object()) {
            merge_config(slot, it.value(), path);
        } else {
            slot = it.value();
        }
    }
}

void apply_override(json& cfg, const std::string& kv) {
    const auto pos = kv.find('=');
    if (pos == std::string::npos) throw ConfigError("--set expects key=value, got: " + kv);
    const std::string key = kv.substr(0, pos);
    const std::string raw = kv.substr(pos + 1);
    json* node = &cfg;
    std::string seg, path;
    std::size_t start = 0;
    std::vector<std::string> segs;
    while (start <= key.size()) {
        const auto dot = key.find('.', start);
        segs.push_back(key.substr(start, dot == std::string::npos ? dot : dot - start));
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    for (std::size_t i = 0; i + 1 < segs.size(); ++i) {
        if (!node->contains(segs[i])) throw ConfigError("unknown config key: " + key);
        node = &(*node)[segs[i]];
    }
    if (!node->contains(segs.back())) throw ConfigError("unknown config key: " + key);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;  // bare strings need no quoting
    (*node)[segs.back()] = value;
}

json load_config(const std::string& path, const std::vector<std::string>& overrides) {
    json cfg = default_config();
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open config file: " + path);
        json user;
        try {
            in >> user;
        } catch (const json::exception& e) {
            throw ConfigError("config parse error in " + path + ": " + e.what());
        }
        merge_config(cfg, user, "");
    }
    for (const auto& kv : overrides) apply_override(cfg, kv);
    return cfg;
}

model::ModelConfig model_from_json(const json& m) {
    model::ModelConfig cfg;
    try {
        cfg.n_experts = m.at("n_experts").get<std::size_t>();
        cfg.d_base = m.at("d_base").get<std::size_t>();
        cfg.d_model = m.at("d_model").get<std::size_t>();
        const std::string rm = m.at("rank_mode").get<std::string>();
        if (rm == "fixed") {
            cfg.rank_mode = model::RankMode::kFixed;
        } else if (rm == "sqrt") {
            cfg.rank_mode = model::RankMode::kSqrtLaw;
        } else {
            throw ConfigError("model.rank_mode must be fixed or sqrt, got: " + rm);
        }
        cfg.fixed_rank = m.at("fixed_rank").get<std::size_t>();
        cfg.top_k = m.at("top_k").get<std::size_t>();
        cfg.n_tasks = m.at("n_tasks").get<std::size_t>();
        cfg.n_classes = m.at("n_classes").get<std::size_t>();
        cfg.input_dim = m.at("input_dim").get<std::size_t>();
        cfg.task_embed_dim = m.at("task_embed_dim").get<std::size_t>();
        cfg.p_drop = m.at("p_drop").get<double>();
        cfg.orthonormal_backbone_init = m.at("orthonormal_backbone_init").get<bool>();
        cfg.validate();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad model config: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("bad model config: ") + e.what());
    }
    return cfg;
}

trainer::TrainConfig train_from_json(const json& t) {
    trainer::TrainConfig cfg;
    try {
        cfg.epochs = t.at("epochs").get<std::size_t>();
        cfg.batch_size = t.at("batch_size").get<std::size_t>();
        cfg.lambda_task = t.at("lambda_task").get<double>();
        cfg.lambda_conf = t.at("lambda_conf").get<double>();
        cfg.lambda_reg = t.at("lambda_reg").get<double>();
        cfg.aux_coeff = t.at("aux_coeff").get<double>();
        cfg.variant = trainer::variant_from_name(t.at("variant").get<std::string>());
        cfg.holdout_fraction = t.at("holdout_fraction").get<double>();
        cfg.seed = t.at("seed").get<std::uint64_t>();
        cfg.base_group.lr = t.at("base_lr").get<double>();
        cfg.base_group.weight_decay = t.at("base_weight_decay").get<double>();
        cfg.topo_group.lr = t.at("topo_lr").get<double>();
        cfg.topo_group.weight_decay = t.at("topo_weight_decay").get<double>();
        if (!t.at("p_drop_end").is_null()) {
            cfg.p_drop_end = t.at("p_drop_end").get<double>();
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad train config: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("bad train config: ") + e.what());
    }
    return cfg;
}

dynamics::ChainConfig dynamics_from_json(const json& d) {
    dynamics::ChainConfig cfg;
    try {
        cfg.eta = d.at("eta").get<double>();
        cfg.lambda_c = d.at("lambda_c").get<double>();
        cfg.lambda_r = d.at("lambda_r").get<double>();
        cfg.task_gain = d.at("task_gain").get<double>();
        cfg.conflict = d.at("conflict").get<double>();
        cfg.partner_prob = d.at("partner_prob").get<double>();
        cfg.noise_std = d.at("noise_std").get<double>();
        const std::string im = d.at("init_mode").get<std::string>();
        if (im == "zero_centered") {
            cfg.init_mode = dynamics::InitMode::kZeroCentered;
        } else if (im == "self_preservation") {
            cfg.init_mode = dynamics::InitMode::kSelfPreservation;
        } else {
            throw ConfigError("dynamics.init_mode must be zero_centered or self_preservation");
        }
        cfg.init_eps = d.at("init_eps").get<double>();
        cfg.steps = d.at("steps").get<std::size_t>();
        cfg.n_chains = d.at("n_chains").get<std::size_t>();
        cfg.record_every = d.at("record_every").get<std::size_t>();
        cfg.seed = d.at("seed").get<std::uint64_t>();
        cfg.validate();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad dynamics config: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("bad dynamics config: ") + e.what());
    }
    return cfg;
}

data::LabeledImageSet load_idx_pair(const std::string& images, const std::string& labels,
                                    int task_id) {
    data::LabeledImageSet set;
    set.task_id = task_id;
    try {
        set.images = idx::parse_images(idx::read_file(images));
        set.labels = idx::parse_labels(idx::read_file(labels));
    } catch (const std::runtime_error& e) {
        throw IoError(std::string(e.what()));
    }
    if (set.images.rows != set.labels.size()) {
        throw ConfigError("image/label count mismatch for task " + std::to_string(task_id));
    }
    return set;
}

std::array<data::LabeledImageSet, 3> load_task_sets(const json& data_cfg, bool test_split) {
    std::array<data::LabeledImageSet, 3> sets;
    const auto& tasks = data_cfg.at("tasks");
    if (!tasks.empty()) {
        if (tasks.size() != 3) {
            throw ConfigError("data.tasks must list exactly 3 tasks, got " +
                              std::to_string(tasks.size()));
        }
        const char* img_key = test_split ? "test_images" : "train_images";
        const char* lbl_key = test_split ? "test_labels" : "train_labels";
        for (int t = 0; t < 3; ++t) {
            const auto& entry = tasks[t];
            for (const char* key : {img_key, lbl_key}) {
                if (!entry.contains(key)) {
                    throw ConfigError("data.tasks[" + std::to_string(t) +
                                      "] missing key: " + key);
                }
            }
            sets[t] = load_idx_pair(entry.at(img_key).get<std::string>(),
                                    entry.at(lbl_key).get<std::string>(), t);
        }
        return sets;
    }
    const auto& syn = data_cfg.at("synthetic");
    const auto per_class = test_split ? syn.at("test_per_class").get<std::size_t>()
                                      : syn.at("train_per_class").get<std::size_t>();
    const auto seed = syn.at("seed").get<std::uint64_t>() + (test_split ? 101 : 0);
    for (int t = 0; t < 3; ++t) sets[t] = data::make_synthetic_task(t, per_class, seed);
    return sets;
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << text;
    if (!out) throw IoError("write failed: " + path);
}

void write_heatmap(const Matrix& values, const std::vector<std::string>& rows,
                   const std::vector<std::string>& cols, const std::string& title,
                   const std::string& path) {
    metrics::HeatmapSpec spec;
    spec.values = values;
    spec.row_labels = rows;
    spec.col_labels = cols;
    spec.title = title;
    spec.annotate = true;
    metrics::export_svg_heatmap(spec, path);
}

std::vector<std::string> expert_labels(std::size_t n, const char* prefix) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
    return out;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
              const std::string& variant_flag, const std::string& out_flag) {
    json cfg = load_config(config_path, overrides);
    if (!variant_flag.empty()) cfg["train"]["variant"] = variant_flag;
    if (!out_flag.empty()) cfg["output"]["directory"] = out_flag;

    const auto model_cfg = model_from_json(cfg["model"]);
    auto train_cfg = train_from_json(cfg["train"]);
    train_cfg.subsample_per_task = cfg["data"].at("subsample_per_task").get<std::size_t>();
    const auto sets = load_task_sets(cfg["data"], /*test_split=*/false);

    const std::string dir = cfg["output"]["directory"].get<std::string>();
    ensure_dir(dir);
    write_text(dir + "/config.json", cfg.dump(2) + "\n");

    const auto result = trainer::run_training(model_cfg, train_cfg, sets);
    trainer::write_metric_log(result.log, dir);
    if (result.cdsp) {
        checkpoint::save_cdsp(*result.cdsp, dir + "/checkpoint.json");
        const auto& last = result.log.epochs.back();
        write_heatmap(last.topology_probs, expert_labels(model_cfg.n_experts, "E"),
                      expert_labels(model_cfg.n_experts, "E"), "connection probabilities",
                      dir + "/topology_final.svg");
    } else {
        checkpoint::save_standard(*result.standard, dir + "/checkpoint.json",
                                  trainer::variant_name(train_cfg.variant));
    }

    const auto& last = result.log.epochs.back();
    json summary = {
        {"variant", trainer::variant_name(train_cfg.variant)},
        {"epochs", result.log.epochs.size()},
        {"final_task_loss", last.task_loss},
        {"final_aux_loss", last.aux_loss},
        {"final_acc_id", last.acc_id},
        {"final_acc_blind", last.acc_blind},
        {"output_dir", dir},
    };
    write_text(dir + "/summary.json", summary.dump(2) + "\n");
    std::cout << summary.dump(2) << "\n";
    return kExitOk;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& config_path,
             const std::vector<std::string>& overrides, bool blind,
             const std::string& out_flag) {
    json cfg = load_config(config_path, overrides);
    if (!out_flag.empty()) cfg["output"]["directory"] = out_flag;
    const std::string dir = cfg["output"]["directory"].get<std::string>();
    ensure_dir(dir);

    const auto sets = load_task_sets(cfg["data"], /*test_split=*/true);
    data::MixedStream stream(sets, cfg["train"].at("batch_size").get<std::size_t>(), 0,
                             /*seed=*/0);
    const auto batches = stream.epoch(0);

    std::string variant;
    trainer::EvalResult res;
    try {
        variant = checkpoint::peek_variant(checkpoint_path);
        if (variant == "cdsp") {
            const auto params = checkpoint::load_cdsp(checkpoint_path);
            res = trainer::evaluate(params, batches, blind);
        } else {
            const auto params = checkpoint::load_standard(checkpoint_path);
            res = trainer::evaluate(params, batches, blind || variant == "pure_blind");
        }
    } catch (const std::runtime_error& e) {
        throw ConfigError(std::string("checkpoint error: ") + e.what());
    }

    const std::string mode = blind ? "blind" : "id";
    metrics::export_csv(res.routing_histogram,
                        expert_labels(res.routing_histogram.cols, "E"),
                        dir + "/routing_" + mode + ".csv");
    write_heatmap(res.routing_histogram, {"T0", "T1", "T2"},
                  expert_labels(res.routing_histogram.cols, "E"),
                  "top-1 routing (" + mode + ")", dir + "/routing_" + mode + ".svg");

    json summary = {{"variant", variant}, {"mode", mode}, {"accuracy", res.accuracy}};
    write_text(dir + "/eval_" + mode + ".json", summary.dump(2) + "\n");
    std::cout << summary.dump(2) << "\n";
    return kExitOk;
}

int cmd_simulate(const std::string& config_path, const std::vector<std::string>& overrides,
                 const std::string& preset, const std::string& out_flag) {
    json cfg = load_config(config_path, overrides);
    if (!out_flag.empty()) cfg["output"]["directory"] = out_flag;
    const std::string dir = cfg["output"]["directory"].get<std::string>();
    ensure_dir(dir);
    write_text(dir + "/config.json", cfg.dump(2) + "\n");

    const json& dj = cfg["dynamics"];
    json summary;

    if (preset == "lemma1") {
        Rng rng(dj.at("seed").get<std::uint64_t>());
        const auto report = dynamics::conflict_probability_experiment(
            dj.at("d_out").get<std::size_t>(), dj.at("n_pairs").get<std::size_t>(), rng);
        summary = {
            {"preset", preset},
            {"d_out", dj.at("d_out").get<std::size_t>()},
            {"n_pairs", dj.at("n_pairs").get<std::size_t>()},
            {"negative_fraction", report.negative_fraction},
            {"cosine_std", report.cosine_std},
        };
        write_text(dir + "/summary.json", summary.dump(2) + "\n");
        std::cout << summary.dump(2) << "\n";
        return kExitOk;
    }

    auto chain_cfg = dynamics_from_json(dj);
    if (preset == "no-force") {
        chain_cfg.task_gain = 0.0;
        chain_cfg.conflict = 0.0;
        chain_cfg.lambda_r = 0.0;
    } else if (preset != "conflict") {
        throw ConfigError("unknown preset: " + preset +
                          " (expected conflict, no-force or lemma1)");
    }

    Rng rng(chain_cfg.seed);
    auto ens = dynamics::init_ensemble(chain_cfg, rng);
    dynamics::run(ens, chain_cfg, rng);

    // Per recorded step: mean connection probability, system entropy, absorption.
    Matrix curve(ens.record_steps.size(), 4);
    for (std::size_t k = 0; k < ens.record_steps.size(); ++k) {
        std::vector<double> probs(ens.recorded[k].size());
        double mean_p = 0.0;
        std::size_t absorbed = 0;
        for (std::size_t c = 0; c < probs.size(); ++c) {
            probs[c] = sigmoid(ens.recorded[k][c]);
            mean_p += probs[c];
            if (probs[c] < 0.01) ++absorbed;
        }
        curve.at(k, 0) = static_cast<double>(ens.record_steps[k]);
        curve.at(k, 1) = mean_p / static_cast<double>(probs.size());
        curve.at(k, 2) = dynamics::system_entropy(probs);
        curve.at(k, 3) = static_cast<double>(absorbed) / static_cast<double>(probs.size());
    }
    metrics::export_csv(curve, {"step", "mean_prob", "system_entropy", "absorption"},
                        dir + "/trajectories.csv");

    const auto sm = dynamics::empirical_supermartingale_check(ens);
    summary = {
        {"preset", preset},
        {"steps", chain_cfg.steps},
        {"n_chains", chain_cfg.n_chains},
        {"absorption_fraction", dynamics::absorption_fraction(ens)},
        {"final_system_entropy", curve.at(curve.rows - 1, 2)},
        {"initial_entropy_bound",
         static_cast<double>(chain_cfg.n_chains) * std::log(2.0)},
        {"residual_entropy", dynamics::residual_entropy_estimate(ens, 0.1)},
        {"supermartingale",
         {{"bin_mean_delta", sm.bin_mean_delta},
          {"bin_count", sm.bin_count},
          {"fraction_nonpositive", sm.fraction_nonpositive}}},
    };
    write_text(dir + "/summary.json", summary.dump(2) + "\n");
    std::cout << summary.dump(2) << "\n";
    return kExitOk;
}

int cmd_export(const std::string& run_dir, const std::string& what,
               const std::string& out_flag) {
    const std::string out_dir = out_flag.empty() ? run_dir : out_flag;
    ensure_dir(out_dir);
    if (what != "topology" && what != "routing" && what != "curves") {
        throw ConfigError("unknown --what value: " + what +
                          " (expected topology, routing or curves)");
    }

    std::vector<std::string> prefixes;
    if (what == "topology") prefixes = {"topology"};
    if (what == "routing") prefixes = {"routing_blind", "routing_id"};

    if (what == "curves") {
        const std::string src = run_dir + "/metrics.csv";
        if (!fs::exists(src)) throw ConfigError("missing snapshot file: " + src);
        std::vector<std::string> names;
        Matrix table = metrics::import_csv(src, &names);
        Matrix curves(table.rows, 3);
        for (std::size_t i = 0; i < table.rows; ++i) {
            curves.at(i, 0) = table.at(i, 0);  // epoch
            curves.at(i, 1) = table.at(i, 3);  // acc_id
            curves.at(i, 2) = table.at(i, 4);  // acc_blind
        }
        metrics::export_csv(curves, {"epoch", "acc_id", "acc_blind"},
                            out_dir + "/accuracy_curves.csv");
        std::cout << "wrote " << out_dir << "/accuracy_curves.csv\n";
        return kExitOk;
    }

    std::size_t produced = 0;
    for (const auto& prefix : prefixes) {
        for (std::size_t epoch = 0;; ++epoch) {
            const std::string src =
                run_dir + "/" + prefix + "_epoch_" + std::to_string(epoch) + ".csv";
            if (!fs::exists(src)) break;
            std::vector<std::string> names;
            Matrix values = metrics::import_csv(src, &names);
            std::vector<std::string> rows;
            if (prefix == "topology") {
                rows = expert_labels(values.rows, "E");
            } else {
                for (std::size_t t = 0; t < values.rows; ++t) {
                    rows.push_back("T" + std::to_string(t));
                }
            }
            write_heatmap(values, rows, names, prefix + " epoch " + std::to_string(epoch),
                          out_dir + "/" + prefix + "_epoch_" + std::to_string(epoch) +
                              ".svg");
            ++produced;
        }
    }
    if (produced == 0) {
        throw ConfigError("no " + what + " snapshots found under " + run_dir);
    }
    std::cout << "wrote " << produced << " SVG files to " << out_dir << "\n";
    return kExitOk;
}

int cmd_gen_data(const std::string& out_dir, std::size_t train_per_class,
                 std::size_t test_per_class, std::uint64_t seed) {
    ensure_dir(out_dir);
    try {
        data::write_synthetic_dataset(out_dir, train_per_class, test_per_class, seed);
    } catch (const std::runtime_error& e) {
        throw IoError(std::string(e.what()));
    }
    std::cout << "wrote IDX files for 3 tasks to " << out_dir << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Shared-subspace MoE training and dynamics workbench"};
    app.require_subcommand(1);

    std::string config_path, variant, out_dir, checkpoint_path, preset = "conflict";
    std::string run_dir, what;
    std::vector<std::string> overrides;
    bool blind = false;
    std::size_t train_per_class = 200, test_per_class = 40;
    std::uint64_t gen_seed = 42;

    auto* train = app.add_subcommand("train", "Train a model variant");
    train->add_option("--config", config_path, "JSON run configuration");
    train->add_option("--variant", variant, "cdsp, standard or pure_blind")
        ->check(CLI::IsMember({"cdsp", "standard", "pure_blind"}));
    train->add_option("--set", overrides, "Override config key (key=value, repeatable)");
    train->add_option("--out", out_dir, "Output directory override");

    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
    eval->add_option("--checkpoint", checkpoint_path, "Checkpoint JSON path")->required();
    eval->add_option("--config", config_path, "JSON run configuration (data section)");
    eval->add_flag("--blind", blind, "Strip task IDs at inference");
    eval->add_option("--set", overrides, "Override config key (key=value, repeatable)");
    eval->add_option("--out", out_dir, "Output directory override");

    auto* sim = app.add_subcommand("simulate", "Run the logit-dynamics ensemble");
    sim->add_option("--config", config_path, "JSON run configuration (dynamics section)");
    sim->add_option("--preset", preset, "conflict (default), no-force or lemma1");
    sim->add_option("--set", overrides, "Override config key (key=value, repeatable)");
    sim->add_option("--out", out_dir, "Output directory override");

    auto* expo = app.add_subcommand("export", "Regenerate plots from a finished run");
    expo->add_option("--run", run_dir, "Run directory with stored snapshots")->required();
    expo->add_option("--what", what, "topology, routing or curves")->required();
    expo->add_option("--out", out_dir, "Output directory override");

    auto* gen = app.add_subcommand("gen-data", "Write the synthetic three-task IDX files");
    gen->add_option("--out", out_dir, "Output directory")->required();
    gen->add_option("--train-per-class", train_per_class, "Training images per class");
    gen->add_option("--test-per-class", test_per_class, "Test images per class");
    gen->add_option("--seed", gen_seed, "Generator seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (train->parsed()) return cmd_train(config_path, overrides, variant, out_dir);
        if (eval->parsed()) {
            return cmd_eval(checkpoint_path, config_path, overrides, blind, out_dir);
        }
        if (sim->parsed()) return cmd_simulate(config_path, overrides, preset, out_dir);
        if (expo->parsed()) return cmd_export(run_dir, what, out_dir);
        if (gen->parsed()) {
            return cmd_gen_data(out_dir, train_per_class, test_per_class, gen_seed);
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitConfig;
}
