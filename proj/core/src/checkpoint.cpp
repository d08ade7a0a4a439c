#include "srnn/checkpoint.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>

namespace srnn {

std::string double_to_hex(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%a", x);
    return buf;
}

double hex_to_double(const std::string& s) {
    char* end = nullptr;
    const double x = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || end == nullptr || *end != '\0') {
        throw Error("checkpoint: bad float literal '" + s + "'");
    }
    return x;
}

nlohmann::ordered_json checkpoint_to_json(Model& m, const nlohmann::ordered_json& train_echo,
                                          std::uint64_t seed) {
    nlohmann::ordered_json doc;
    doc["format"] = "srnn-checkpoint";
    doc["version"] = kCheckpointVersion;
    doc["seed"] = seed;
    nlohmann::ordered_json arch;
    arch["cell"] = cell_kind_name(m.cfg.cell);
    arch["hidden"] = m.cfg.hidden;
    arch["embed"] = m.cfg.embed;
    arch["centroids"] = m.cfg.centroids;
    arch["temperature"] = double_to_hex(m.cfg.temperature);
    arch["similarity"] = similarity_name(m.cfg.similarity);
    arch["head"] = m.cfg.head == HeadKind::binary ? "binary" : "per-step";
    arch["state_regularized"] = m.cfg.state_regularized;
    arch["alphabet"] = m.cfg.alphabet;
    doc["arch"] = std::move(arch);
    doc["train_config"] = train_echo;
    nlohmann::ordered_json params = nlohmann::ordered_json::array();
    for (Parameter* p : m.parameters()) {
        nlohmann::ordered_json block;
        block["name"] = p->name;
        block["rows"] = p->value.rows;
        block["cols"] = p->value.cols;
        nlohmann::ordered_json values = nlohmann::ordered_json::array();
        for (double x : p->value.v) values.push_back(double_to_hex(x));
        block["values"] = std::move(values);
        params.push_back(std::move(block));
    }
    doc["params"] = std::move(params);
    return doc;
}

void save_checkpoint(const std::string& path, Model& m, const nlohmann::ordered_json& train_echo,
                     std::uint64_t seed) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("save_checkpoint: cannot open " + path);
    out << checkpoint_to_json(m, train_echo, seed).dump(2) << "\n";
    if (!out) throw Error("save_checkpoint: write failed for " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("load_checkpoint: cannot open " + path);
    nlohmann::ordered_json doc;
    try {
        in >> doc;
    } catch (const std::exception& e) {
        throw Error("load_checkpoint: " + path + " is not valid JSON: " + e.what());
    }
    if (!doc.contains("format") || doc["format"] != "srnn-checkpoint") {
        throw Error("load_checkpoint: " + path + " is not a checkpoint file");
    }
    if (!doc.contains("version") || doc["version"].get<int>() != kCheckpointVersion) {
        throw Error("load_checkpoint: unsupported checkpoint version in " + path);
    }

    const auto& arch = doc.at("arch");
    ModelConfig cfg;
    if (!cell_kind_from_name(arch.at("cell").get<std::string>(), &cfg.cell)) {
        throw Error("load_checkpoint: unknown cell kind");
    }
    cfg.hidden = arch.at("hidden").get<int>();
    cfg.embed = arch.at("embed").get<int>();
    cfg.centroids = arch.at("centroids").get<int>();
    cfg.temperature = hex_to_double(arch.at("temperature").get<std::string>());
    if (!similarity_from_name(arch.at("similarity").get<std::string>(), &cfg.similarity)) {
        throw Error("load_checkpoint: unknown similarity kind");
    }
    cfg.head = arch.at("head").get<std::string>() == "binary" ? HeadKind::binary : HeadKind::per_step;
    cfg.state_regularized = arch.value("state_regularized", true);
    cfg.alphabet = arch.at("alphabet").get<std::vector<std::string>>();

    LoadedCheckpoint loaded{Model::init(cfg, 0), doc.value("train_config", nlohmann::ordered_json()),
                            doc.at("seed").get<std::uint64_t>()};
    Model& m = loaded.model;

    const auto& blocks = doc.at("params");
    const std::vector<Parameter*> params = m.parameters();
    if (blocks.size() != params.size()) {
        throw Error("load_checkpoint: parameter count mismatch");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& block = blocks[i];
        Parameter& p = *params[i];
        if (block.at("name").get<std::string>() != p.name) {
            throw Error("load_checkpoint: parameter '" + p.name + "' missing or out of order");
        }
        if (block.at("rows").get<int>() != p.value.rows ||
            block.at("cols").get<int>() != p.value.cols) {
            throw Error("load_checkpoint: shape mismatch for parameter '" + p.name + "'");
        }
        const auto& values = block.at("values");
        if (static_cast<int>(values.size()) != p.value.size()) {
            throw Error("load_checkpoint: value count mismatch for parameter '" + p.name + "'");
        }
        for (std::size_t j = 0; j < values.size(); ++j) {
            p.value.v[j] = hex_to_double(values[j].get<std::string>());
        }
    }
    return loaded;
}

} // namespace srnn
