#pragma once

#include "srnn/model.hpp"
#include "srnn/trainer.hpp"

#include <string>
#include <vector>

namespace srnn {

// Mean transition probability into each centroid per input token,
// averaged over every occurrence in the dataset; top_n rows per centroid,
// sorted by probability. Tokens that never occur are excluded.
struct PrototypeRow {
    int centroid = 0;
    std::string token;
    double mean_prob = 0.0;
    int rank = 0; // 1-based within the centroid
};

std::vector<PrototypeRow> token_prototypes(Model& model, const Dataset& data, int top_n);

// Per-step record of one sequence run: START row first, then one row per
// input token. `state` is the argmax centroid, `h` the regularized hidden
// state, `c` the cell state.
struct TraceRow {
    int t = 0;
    std::string token;
    int state = 0;
    std::vector<double> alpha;
    std::vector<double> h;
    std::vector<double> c;
};

std::vector<TraceRow> state_trace(Model& model, std::span<const int> tokens);

// Per-step transition distributions sorted descending, then averaged
// position-wise over every step of every sequence.
std::vector<double> ranked_alpha_profile(Model& model, const Dataset& data);

void write_prototypes_csv(const std::string& path, const std::vector<PrototypeRow>& rows);
void write_trace_csv(const std::string& path, const std::vector<TraceRow>& rows);
void write_ranked_profile_csv(const std::string& path, const std::vector<double>& profile);

} // namespace srnn
