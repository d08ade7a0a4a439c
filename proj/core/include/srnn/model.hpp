#pragma once

#include "srnn/cells.hpp"
#include "srnn/state_reg.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace srnn {

struct ModelConfig {
    CellKind cell = CellKind::gru;
    int hidden = 50;
    int embed = 0; // 0 -> same as hidden
    int centroids = 10;
    double temperature = 1.0;
    Similarity similarity = Similarity::dot;
    HeadKind head = HeadKind::binary;
    bool state_regularized = true; // false: plain RNN baseline, h_t = u_t
    std::vector<std::string> alphabet;
};

// A full state-regularized recurrent classifier: token embeddings, the
// recurrent component, the stochastic component and the decision head.
struct Model {
    ModelConfig cfg;
    Vocabulary vocab;
    CellParams cell;
    CentroidSet centroids;
    HeadParams head;

    static Model init(const ModelConfig& cfg, std::uint64_t seed);

    // Fixed order: embedding, cell weights, centroids, head. Checkpoints,
    // the optimizer and gradient sinks all rely on this order.
    std::vector<Parameter*> parameters();

    int head_input_dim() const {
        if (cfg.head == HeadKind::per_step) return cell.hidden;
        return is_memoryless(cfg.cell) ? cell.hidden : 2 * cell.hidden;
    }
    int head_output_dim() const {
        return cfg.head == HeadKind::per_step ? static_cast<int>(cfg.alphabet.size()) : 2;
    }
};

} // namespace srnn
