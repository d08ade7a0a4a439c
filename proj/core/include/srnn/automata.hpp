#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace srnn {

// Deterministic finite automaton over a token alphabet. `delta[s][a]` is
// the successor state or -1 where the function is partial; evaluation
// routes missing transitions to an implicit non-accepting sink.
struct Dfa {
    std::vector<std::string> alphabet;
    std::vector<std::vector<int>> delta; // [state][token]
    int start = 0;
    std::vector<bool> accept;

    int num_states() const { return static_cast<int>(delta.size()); }
    bool total() const;
    int token_id(std::string_view token) const; // -1 if unknown
};

bool dfa_accepts(const Dfa& dfa, std::span<const int> tokens);
bool dfa_accepts(const Dfa& dfa, std::string_view word); // one char = one token

// Total-function version: adds one explicit non-accepting sink if needed.
Dfa complete_with_sink(const Dfa& dfa);

// Language-equivalent DFA with the minimal number of states (Moore
// partition refinement). Completes the transition function first and
// drops unreachable states; output states are numbered in BFS order from
// the start so the result is canonical and minimization is idempotent.
Dfa minimize(const Dfa& dfa);

struct EquivalenceResult {
    bool equivalent = false;
    std::optional<std::vector<int>> counterexample; // token ids, shortest
};

// Product-construction BFS; the first state pair with differing
// acceptance yields a shortest distinguishing string.
EquivalenceResult equivalent(const Dfa& a, const Dfa& b);

// GraphViz text. Accept states are doublecircle, the start state gets an
// incoming edge from an invisible node, edges sharing (src, dst) carry a
// comma-joined token label. Output ordering is deterministic.
std::string to_dot(const Dfa& dfa, std::span<const std::string> state_labels = {});

// Ground-truth machines used by the experiments.
Dfa tomita_dfa(int grammar);               // 1..7, alphabet {"0","1"}
Dfa bp_depth_dfa(int max_depth);           // nesting up to max_depth; letters loop

} // namespace srnn
