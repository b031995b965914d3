// SPDX-License-Identifier: Apache-2.0

#include "cdsp/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace cdsp::checkpoint {

using nlohmann::json;

namespace {

json matrix_to_json(const Matrix& m) {
    return json{{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}};
}

Matrix matrix_from_json(const json& j) {
    Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
    m.data = j.at("data").get<std::vector<double>>();
    if (m.data.size() != m.rows * m.cols) {
        throw std::runtime_error("checkpoint: matrix payload size mismatch");
    }
    return m;
}

json config_to_json(const model::ModelConfig& c) {
    return json{{"n_experts", c.n_experts},
                {"d_base", c.d_base},
                {"d_model", c.d_model},
                {"rank_mode", c.rank_mode == model::RankMode::kFixed ? "fixed" : "sqrt_law"},
                {"fixed_rank", c.fixed_rank},
                {"top_k", c.top_k},
                {"n_tasks", c.n_tasks},
                {"n_classes", c.n_classes},
                {"input_dim", c.input_dim},
                {"task_embed_dim", c.task_embed_dim},
                {"p_drop", c.p_drop},
                {"orthonormal_backbone_init", c.orthonormal_backbone_init}};
}

model::ModelConfig config_from_json(const json& j) {
    model::ModelConfig c;
    c.n_experts = j.at("n_experts").get<std::size_t>();
    c.d_base = j.at("d_base").get<std::size_t>();
    c.d_model = j.at("d_model").get<std::size_t>();
    c.rank_mode = j.at("rank_mode").get<std::string>() == "sqrt_law"
                      ? model::RankMode::kSqrtLaw
                      : model::RankMode::kFixed;
    c.fixed_rank = j.at("fixed_rank").get<std::size_t>();
    c.top_k = j.at("top_k").get<std::size_t>();
    c.n_tasks = j.at("n_tasks").get<std::size_t>();
    c.n_classes = j.at("n_classes").get<std::size_t>();
    c.input_dim = j.at("input_dim").get<std::size_t>();
    c.task_embed_dim = j.at("task_embed_dim").get<std::size_t>();
    c.p_drop = j.at("p_drop").get<double>();
    c.orthonormal_backbone_init = j.at("orthonormal_backbone_init").get<bool>();
    return c;
}

json optimizer_to_json(const OptimizerSnapshot& snap) {
    json groups = json::array();
    for (std::size_t g = 0; g < snap.m.size(); ++g) {
        json jm = json::array(), jv = json::array();
        for (const auto& m : snap.m[g]) jm.push_back(matrix_to_json(m));
        for (const auto& v : snap.v[g]) jv.push_back(matrix_to_json(v));
        groups.push_back(json{{"m", jm}, {"v", jv}});
    }
    return json{{"step_count", snap.step_count}, {"groups", groups}};
}

OptimizerSnapshot optimizer_from_json(const json& j) {
    OptimizerSnapshot snap;
    snap.step_count = j.at("step_count").get<std::size_t>();
    for (const auto& g : j.at("groups")) {
        std::vector<Matrix> ms, vs;
        for (const auto& m : g.at("m")) ms.push_back(matrix_from_json(m));
        for (const auto& v : g.at("v")) vs.push_back(matrix_from_json(v));
        snap.m.push_back(std::move(ms));
        snap.v.push_back(std::move(vs));
    }
    return snap;
}

json read_and_check(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
    json doc = json::parse(f);
    if (doc.value("format", "") != kFormatTag) {
        throw std::runtime_error("checkpoint: not a " + std::string(kFormatTag) + " file: " +
                                 path);
    }
    if (doc.at("version").get<int>() != kFormatVersion) {
        throw std::runtime_error("checkpoint: unsupported version in " + path);
    }
    return doc;
}

void write_doc(const json& doc, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("checkpoint: cannot open for write " + path);
    f << doc.dump();
    if (!f) throw std::runtime_error("checkpoint: write failed " + path);
}

}  // namespace

OptimizerSnapshot snapshot_optimizer(optim::AdamW& opt) {
    OptimizerSnapshot snap;
    snap.step_count = opt.step_count();
    for (auto& g : opt.groups()) {
        snap.m.push_back(g.m);
        snap.v.push_back(g.v);
    }
    return snap;
}

void restore_optimizer(optim::AdamW& opt, const OptimizerSnapshot& snap) {
    auto& groups = opt.groups();
    if (groups.size() != snap.m.size()) {
        throw std::runtime_error("checkpoint: optimizer group layout mismatch");
    }
    for (std::size_t g = 0; g < groups.size(); ++g) {
        groups[g].m = snap.m[g];
        groups[g].v = snap.v[g];
    }
    opt.set_step_count(snap.step_count);
}

void save_cdsp(const model::CdspParams& params, const std::string& path,
               const OptimizerSnapshot* opt) {
    json doc{{"format", kFormatTag},
             {"version", kFormatVersion},
             {"variant", "cdsp"},
             {"config", config_to_json(params.cfg)},
             {"params",
              {{"w_in", matrix_to_json(params.w_in)},
               {"b_in", matrix_to_json(params.b_in)},
               {"w_out", matrix_to_json(params.w_out)},
               {"b_out", matrix_to_json(params.b_out)},
               {"w_g", matrix_to_json(params.w_g)},
               {"task_embed", matrix_to_json(params.task_embed)},
               {"u_base", matrix_to_json(params.u_base)},
               {"v_base", matrix_to_json(params.v_base)},
               {"topology", matrix_to_json(params.topology)}}}};
    if (opt) doc["optimizer"] = optimizer_to_json(*opt);
    write_doc(doc, path);
}

model::CdspParams load_cdsp(const std::string& path, OptimizerSnapshot* opt) {
    const json doc = read_and_check(path);
    if (doc.at("variant").get<std::string>() != "cdsp") {
        throw std::runtime_error("checkpoint: expected cdsp variant in " + path);
    }
    model::CdspParams p;
    p.cfg = config_from_json(doc.at("config"));
    const json& jp = doc.at("params");
    p.w_in = matrix_from_json(jp.at("w_in"));
    p.b_in = matrix_from_json(jp.at("b_in"));
    p.w_out = matrix_from_json(jp.at("w_out"));
    p.b_out = matrix_from_json(jp.at("b_out"));
    p.w_g = matrix_from_json(jp.at("w_g"));
    p.task_embed = matrix_from_json(jp.at("task_embed"));
    p.u_base = matrix_from_json(jp.at("u_base"));
    p.v_base = matrix_from_json(jp.at("v_base"));
    p.topology = matrix_from_json(jp.at("topology"));
    if (opt && doc.contains("optimizer")) *opt = optimizer_from_json(doc.at("optimizer"));
    return p;
}

void save_standard(const baselines::StandardMoEParams& params, const std::string& path,
                   const std::string& variant_name, const OptimizerSnapshot* opt) {
    json experts_u = json::array(), experts_v = json::array();
    for (const auto& m : params.u_expert) experts_u.push_back(matrix_to_json(m));
    for (const auto& m : params.v_expert) experts_v.push_back(matrix_to_json(m));
    json doc{{"format", kFormatTag},
             {"version", kFormatVersion},
             {"variant", variant_name},
             {"config", config_to_json(params.cfg)},
             {"params",
              {{"w_in", matrix_to_json(params.w_in)},
               {"b_in", matrix_to_json(params.b_in)},
               {"w_out", matrix_to_json(params.w_out)},
               {"b_out", matrix_to_json(params.b_out)},
               {"w_g", matrix_to_json(params.w_g)},
               {"task_embed", matrix_to_json(params.task_embed)},
               {"u_expert", experts_u},
               {"v_expert", experts_v}}}};
    if (opt) doc["optimizer"] = optimizer_to_json(*opt);
    write_doc(doc, path);
}

baselines::StandardMoEParams load_standard(const std::string& path, OptimizerSnapshot* opt) {
    const json doc = read_and_check(path);
    baselines::StandardMoEParams p;
    p.cfg = config_from_json(doc.at("config"));
    const json& jp = doc.at("params");
    p.w_in = matrix_from_json(jp.at("w_in"));
    p.b_in = matrix_from_json(jp.at("b_in"));
    p.w_out = matrix_from_json(jp.at("w_out"));
    p.b_out = matrix_from_json(jp.at("b_out"));
    p.w_g = matrix_from_json(jp.at("w_g"));
    p.task_embed = matrix_from_json(jp.at("task_embed"));
    for (const auto& m : jp.at("u_expert")) p.u_expert.push_back(matrix_from_json(m));
    for (const auto& m : jp.at("v_expert")) p.v_expert.push_back(matrix_from_json(m));
    if (opt && doc.contains("optimizer")) *opt = optimizer_from_json(doc.at("optimizer"));
    return p;
}

std::string peek_variant(const std::string& path) {
    return read_and_check(path).at("variant").get<std::string>();
}

}  // namespace cdsp::checkpoint
