#include "fwplab/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace fwplab {

using nlohmann::json;

void atomic_write_file(const std::string& path, const std::string& contents) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot open for writing: " + tmp);
        out << contents;
        out.flush();
        if (!out) throw ConfigError("write failed: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw ConfigError("rename failed: " + tmp + " -> " + path);
}

namespace {

json config_to_json_obj(const ModelConfig& cfg) {
    json j;
    j["d_in"] = cfg.d_in;
    j["d_model"] = cfg.d_model;
    j["n_blocks"] = cfg.n_blocks;
    j["n_out"] = cfg.n_out;
    j["mixer"] = mixer_name(cfg.mixer);
    j["rule"] = rule_name(cfg.rule.kind);
    j["retnet_lambda"] = cfg.rule.retnet_lambda;
    j["n_h"] = cfg.rule.n_h;
    j["phi"] = phi_name(cfg.phi);
    j["heads"] = cfg.heads;
    j["psi_scale"] = cfg.psi_scale;
    j["value_activation"] = cfg.value_activation;
    j["ln_eps"] = cfg.ln_eps;
    return j;
}

ModelConfig config_from_json_obj(const json& j) {
    ModelConfig cfg;
    cfg.d_in = j.at("d_in").get<int>();
    cfg.d_model = j.at("d_model").get<int>();
    cfg.n_blocks = j.at("n_blocks").get<int>();
    cfg.n_out = j.at("n_out").get<int>();
    cfg.mixer = mixer_from_name(j.at("mixer").get<std::string>());
    cfg.rule.kind = rule_from_name(j.at("rule").get<std::string>());
    cfg.rule.retnet_lambda = j.at("retnet_lambda").get<double>();
    cfg.rule.n_h = j.at("n_h").get<int>();
    cfg.phi = phi_from_name(j.at("phi").get<std::string>());
    cfg.heads = j.at("heads").get<int>();
    cfg.psi_scale = j.at("psi_scale").get<double>();
    cfg.value_activation = j.at("value_activation").get<bool>();
    cfg.ln_eps = j.at("ln_eps").get<double>();
    cfg.validate();
    return cfg;
}

}  // namespace

std::string model_config_to_json(const ModelConfig& cfg) {
    return config_to_json_obj(cfg).dump(2);
}

ModelConfig model_config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config JSON: ") + e.what());
    }
    return config_from_json_obj(j);
}

std::string checkpoint_to_json(const Model& m) {
    json j;
    j["config"] = config_to_json_obj(m.cfg);
    json weights = json::object();
    for (size_t i = 0; i < m.params.names.size(); ++i) {
        const Mat& w = m.params.values[i];
        json entry;
        entry["rows"] = w.rows;
        entry["cols"] = w.cols;
        entry["data"] = w.a;  // doubles serialize losslessly (round-trip exact)
        weights[m.params.names[i]] = std::move(entry);
    }
    j["weights"] = std::move(weights);
    return j.dump(2);
}

static Model checkpoint_from_json_inner(const std::string& text);

Model checkpoint_from_json(const std::string& text) {
    try {
        return checkpoint_from_json_inner(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad checkpoint JSON: ") + e.what());
    }
}

static Model checkpoint_from_json_inner(const std::string& text) {
    const json j = json::parse(text);
    const ModelConfig cfg = config_from_json_obj(j.at("config"));
    Model m = build_model(cfg, 0);
    const json& weights = j.at("weights");
    if (weights.size() != m.params.names.size())
        throw ConfigError("checkpoint: parameter count mismatch");
    for (size_t i = 0; i < m.params.names.size(); ++i) {
        const std::string& name = m.params.names[i];
        if (!weights.contains(name)) throw ConfigError("checkpoint: missing parameter " + name);
        const json& entry = weights.at(name);
        Mat& w = m.params.values[i];
        if (entry.at("rows").get<int>() != w.rows || entry.at("cols").get<int>() != w.cols)
            throw ConfigError("checkpoint: shape mismatch for " + name);
        const auto data = entry.at("data").get<std::vector<double>>();
        if (data.size() != w.a.size()) throw ConfigError("checkpoint: data size mismatch for " + name);
        w.a = data;
    }
    return m;
}

void save_checkpoint(const std::string& path, const Model& m) {
    atomic_write_file(path, checkpoint_to_json(m));
}

Model load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open checkpoint: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return checkpoint_from_json(ss.str());
}

}  // namespace fwplab
