#pragma once

#include "srnn/model.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>

namespace srnn {

// Self-describing text checkpoint: architecture descriptor, vocabulary,
// training-config echo and every parameter block with exact hex-float
// values, so save -> load reproduces evaluation bit for bit.
inline constexpr int kCheckpointVersion = 1;

nlohmann::ordered_json checkpoint_to_json(Model& model, const nlohmann::ordered_json& train_echo,
                                          std::uint64_t seed);
void save_checkpoint(const std::string& path, Model& model,
                     const nlohmann::ordered_json& train_echo, std::uint64_t seed);

struct LoadedCheckpoint {
    Model model;
    nlohmann::ordered_json train_echo;
    std::uint64_t seed = 0;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

std::string double_to_hex(double x);
double hex_to_double(const std::string& s);

} // namespace srnn
