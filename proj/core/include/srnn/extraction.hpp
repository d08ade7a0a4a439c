#pragma once

#include "srnn/automata.hpp"
#include "srnn/model.hpp"
#include "srnn/trainer.hpp"

#include <map>
#include <tuple>
#include <vector>

namespace srnn {

// Sparse transition counts over (centroid, token, centroid) triples plus
// the start centroid chosen by the START token.
struct TransitionCounts {
    int num_states = 0;
    int start_state = 0;
    std::map<std::tuple<int, int, int>, long long> counts;
};

// Centroid the START token transitions to from the zero state.
int start_centroid(Model& model);

// Hard-propagation state path: argmax centroid after START and after each
// token. The argmax centroid is fed forward, not the mixture.
std::vector<int> hard_state_path(Model& model, std::span<const int> tokens);

// Transition distribution for one token read from centroid state j
// (cell state zero). For memory-less cells this is the exact next-step
// behavior of the machine in state j.
Arr alpha_from_centroid(Model& model, int centroid, int token);

// Hard-propagation trace counts over a dataset; END is never counted.
TransitionCounts collect_traces(Model& model, const Dataset& data, int threads = 0);

// Keep only the most frequent transition per (state, token); lowest index
// wins ties. States are the centroids reachable from the start centroid,
// renumbered densely in BFS order; `state_centroids` receives the original
// centroid index per state. Unobserved pairs stay partial.
Dfa build_dfa(const TransitionCounts& counts, const std::vector<std::string>& alphabet,
              std::vector<int>* state_centroids = nullptr);

// Accept set synthesized per state: place the machine on the state's
// centroid (cell state zero), apply the END cell step and the classifier.
// Exact for memory-less cells; an abstraction for cells with memory.
std::vector<bool> accept_states(Model& model, const Dfa& dfa,
                                std::span<const int> state_centroids);

struct ExtractionResult {
    Dfa raw;                               // partial transitions, accepts filled
    Dfa dfa;                               // sink-completed, ready for minimize/equivalent
    std::vector<std::string> state_labels; // centroid index per raw state (+"sink")
    TransitionCounts counts;
};

ExtractionResult extract_dfa(Model& model, const Dataset& data, int threads = 0);

void write_counts_csv(const std::string& path, const TransitionCounts& counts,
                      const std::vector<std::string>& alphabet);

} // namespace srnn
