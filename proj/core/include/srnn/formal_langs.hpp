#pragma once

#include "srnn/rng.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace srnn {

enum class TaskKind { tomita, bp, palindrome, copy_memory };

const char* task_kind_name(TaskKind t);
bool task_kind_from_name(std::string_view name, TaskKind* out);

// Token-id sequence with either a binary label or per-step targets
// (copy task), never both.
struct LabeledSequence {
    std::vector<int> tokens;
    int label = -1;              // 0/1; -1 when targets are present
    std::vector<int> targets;    // copy task only, same length as tokens
};

struct Dataset {
    std::vector<std::string> alphabet;
    std::vector<LabeledSequence> seqs;
    std::vector<std::string> warnings; // e.g. lengths with no positives

    std::size_t size() const { return seqs.size(); }
    int positives() const;
    std::string tokens_as_string(const LabeledSequence& s) const;
};

struct DatasetSpec {
    TaskKind task = TaskKind::tomita;
    std::uint64_t seed = 0;

    // tomita
    int grammar = 1;
    std::vector<int> lengths;          // empty -> the default training lengths
    int per_class_per_length = 64;

    // bp / palindrome
    int count = 1000;
    double positive_fraction = 0.5;
    int depth_lo = 1, depth_hi = 5;    // bp nesting depth bounds
    int max_len = 100;                 // total length cap
    int half_lo = 1, half_hi = 25;     // palindrome half-length bounds

    // copy task
    int copy_lag = 100;
    int copy_span = 10;
};

// The default Tomita experiment length sets.
std::vector<int> tomita_train_lengths(); // 0..13, 16, 19, 22
std::vector<int> tomita_valid_lengths(); // 1, 4, ..., 28

// Membership per the ground-truth machine of the grammar (1..7).
bool tomita_accepts(int grammar, std::string_view bits);

// Counter scan over {a..z, (, )}: letters do not affect the balance.
// Returns (balanced, max nesting depth seen).
std::pair<bool, int> bp_accepts(std::string_view s);

int bp_max_depth(const Dataset& data, const LabeledSequence& seq);

Dataset gen_tomita(const DatasetSpec& spec);
Dataset gen_bp(const DatasetSpec& spec);
Dataset gen_palindrome(const DatasetSpec& spec);
Dataset gen_copy_memory(int lag, int span, int count, Rng& rng);

// Mean per-step cross entropy (nats) of the best memory-less predictor.
double copy_baseline_ce(int lag, int span = 10);

void write_dataset(const std::string& path, const Dataset& data);
Dataset read_dataset(const std::string& path);

} // namespace srnn
