#pragma once

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>

#include "pdn/data.hpp"
#include "pdn/errors.hpp"
#include "pdn/train.hpp"

namespace pdn {

// Experiment configuration: one JSON document with `model`, `data`, and
// `train` sections. Command-line overrides address keys by dot path
// ("train.lr=5e-4") and may only touch keys the config already has, so typos
// fail loudly. The effective config is echoed into every output directory;
// re-running from the echo reproduces the run.

inline nlohmann::json load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open config '" + path + "'");
    try {
        nlohmann::json j;
        in >> j;
        return j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("config '" + path + "': " + e.what());
    }
}

inline void apply_override(nlohmann::json& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ValidationError("override '" + assignment + "' is not of the form key.path=value");
    const std::string path = assignment.substr(0, eq);
    const std::string value = assignment.substr(eq + 1);

    nlohmann::json* node = &config;
    size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
        if (!node->is_object() || !node->contains(key))
            throw ValidationError("override '" + assignment + "': config has no key '" +
                                  path.substr(0, dot == std::string::npos ? path.size() : dot) +
                                  "'");
        node = &(*node)[key];
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    try {
        *node = nlohmann::json::parse(value);
    } catch (const nlohmann::json::exception&) {
        *node = value;  // unquoted strings
    }
}

inline ModelSpec model_from_config(const nlohmann::json& config) {
    if (!config.contains("model")) return ModelSpec{};
    return spec_from_json(config.at("model"));
}

inline GenConfig gen_from_config(const nlohmann::json& config) {
    if (!config.contains("data")) return GenConfig{};
    return GenConfig::from_json(config.at("data"));
}

inline TrainConfig train_from_config(const nlohmann::json& config) {
    TrainConfig cfg;
    cfg.model = model_from_config(config);
    if (!config.contains("train")) throw ValidationError("config has no 'train' section");
    const auto& t = config.at("train");
    try {
        if (t.contains("dataset")) cfg.dataset_dir = t.at("dataset").get<std::string>();
        if (t.contains("iterations")) cfg.iterations = t.at("iterations").get<int64_t>();
        if (t.contains("batch_size")) cfg.batch_size = t.at("batch_size").get<int64_t>();
        if (t.contains("lr")) cfg.lr = t.at("lr").get<double>();
        if (t.contains("resample_n")) cfg.resample_n = t.at("resample_n").get<int64_t>();
        if (t.contains("seed")) cfg.seed = t.at("seed").get<uint64_t>();
        if (t.contains("eval_interval")) cfg.eval_interval = t.at("eval_interval").get<int64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("config train section: ") + e.what());
    }
    return cfg;
}

inline std::string train_out_dir(const nlohmann::json& config) {
    if (config.contains("train") && config.at("train").contains("out_dir"))
        return config.at("train").at("out_dir").get<std::string>();
    return "out";
}

inline void write_config_echo(const nlohmann::json& config, const std::string& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream out(std::filesystem::path(dir) / "config.json");
    if (!out) throw FormatError("cannot write config echo into '" + dir + "'");
    out << config.dump(2) << "\n";
}

}  // namespace pdn
