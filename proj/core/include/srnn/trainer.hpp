#pragma once

#include "srnn/formal_langs.hpp"
#include "srnn/model.hpp"

#include <optional>
#include <span>
#include <vector>

namespace srnn {

enum class StatePropagation { soft, hard };

// One classification forward pass. Protocol: the START token transitions
// the model to its start state, every input token runs the recurrent and
// stochastic components, END runs one more cell application without the
// stochastic component and feeds the decision head. A k-token input
// therefore yields k+1 transition distributions.
//
// The per-step head skips END and instead emits logits from u_t after
// every input token.
struct SequenceRun {
    std::vector<Tensor> alphas;      // [1 x k] each; START first
    std::vector<int> hard_states;    // argmax centroid per alpha
    std::vector<Tensor> states;      // regularized h per alpha step, [1 x d]
    std::vector<Tensor> cell_states; // cell state per alpha step, [1 x d]
    Tensor u_end;                    // [1 x d]
    std::optional<Tensor> c_end;     // absent for memory-less cells
    Tensor logits;                   // [1 x 2]; unset for per-step heads
    std::vector<Tensor> step_logits; // per-step head only
};

SequenceRun run_sequence(Tape& tape, Model& model, std::span<const int> tokens,
                         StatePropagation prop = StatePropagation::soft);

// Equal-length batched version of the same protocol (training/eval hot path).
struct BatchRun {
    Tensor logits;                   // [B x 2]
    std::vector<Tensor> step_logits; // per-step head: [B x out] per step
};
BatchRun run_batch(Tape& tape, Model& model, std::span<const LabeledSequence* const> seqs);

struct TrainPhase {
    int cap = 0;        // admit sequences with curriculum key <= cap; <= 0: all
    int max_epochs = 0;
};

struct TrainConfig {
    double lr = 0.01;
    double rho = 0.9;      // squared-gradient decay
    double momentum = 0.9;
    double eps = 1e-8;
    double clip_norm = 0.0; // global gradient L2 clip; 0 disables
    int batch = 32;
    std::vector<TrainPhase> phases;
    int patience = 0;               // epochs without validation improvement; 0 disables
    bool stop_when_perfect = false; // stop once train and valid error are both 0
    std::uint64_t seed = 0;
    int threads = 0;                // 0: hardware concurrency
};

struct EpochStats {
    int epoch = 0;
    int phase = 0;
    double train_loss = 0.0;
    double train_err = 0.0;
    double valid_err = 0.0;
};

struct TrainResult {
    std::vector<EpochStats> history;
    double best_valid_err = 1.0;
    int best_epoch = -1;
    bool reached_perfect = false;
};

struct EvalResult {
    double error = 0.0;   // misclassification rate; recall-span symbol error for copy
    double mean_ce = 0.0; // mean cross entropy (per step for copy, per sequence otherwise)
};

struct RmsPropState {
    std::vector<Arr> cache;
    std::vector<Arr> momentum;
};

// cache <- rho cache + (1-rho) g^2
// buf   <- mu buf + lr g / sqrt(cache + eps)
// w     <- w - buf
void rmsprop_step(std::span<Parameter* const> params, RmsPropState& state, double lr,
                  double rho = 0.9, double mu = 0.9, double eps = 1e-8);

// Indices of sequences admitted by one curriculum phase (key <= cap;
// cap <= 0 admits everything).
std::vector<int> phase_filter(std::span<const int> keys, int cap);

// Curriculum phases filter the training set by `curriculum_keys` (defaults
// to sequence length); each phase runs epochs of shuffled mini-batches.
// Tracks validation error per epoch and restores the best-validation
// parameters on exit (unless the run stopped on a perfect epoch).
TrainResult train(const TrainConfig& cfg, Model& model, const Dataset& train_set,
                  const Dataset& valid_set, std::span<const int> curriculum_keys = {});

EvalResult evaluate(Model& model, const Dataset& data, int threads = 0);

// Finite-difference check of the whole pipeline (embedding, cell,
// stochastic component, head, loss) on one random short sequence.
GradCheckReport pipeline_gradient_check(CellKind kind, Similarity sim, int hidden, int centroids,
                                        int embed, int seq_len, std::uint64_t seed, double eps);

void write_history_csv(const std::string& path, const TrainResult& result);

} // namespace srnn
