#include "srnn/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

namespace srnn {

namespace {

constexpr int kChunkSize = 64; // fixed so results do not depend on thread count

int effective_threads(int requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(i, worker) for i in [0, n) on up to `threads` workers. Work is
// claimed dynamically; all result merging happens by index afterwards, so
// outputs never depend on the thread count.
template <class Fn>
void parallel_for(int n, int threads, Fn&& fn) {
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (int i = 0; i < n; ++i) fn(i, 0);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    std::exception_ptr first_error;
    std::mutex error_mu;
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            for (;;) {
                const int i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i, t);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mu);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

Tensor stochastic_transition(Tape& t, Model& m, Tensor u, StatePropagation prop,
                             std::vector<Tensor>* alphas, std::vector<int>* hard_states) {
    if (!m.cfg.state_regularized) return u; // plain RNN baseline
    Tensor alpha = transition_probs(t, m.centroids, u);
    if (alphas != nullptr) alphas->push_back(alpha);
    int j = -1;
    if (hard_states != nullptr || prop == StatePropagation::hard) {
        j = argmax_index(alpha.values().first(static_cast<std::size_t>(m.centroids.count())));
        if (hard_states != nullptr) hard_states->push_back(j);
    }
    if (prop == StatePropagation::hard) {
        const int row[1] = {j};
        return t.rows_gather(t.param(m.centroids.matrix), std::span<const int>(row, 1));
    }
    return mix_state(t, alpha, m.centroids);
}

} // namespace

SequenceRun run_sequence(Tape& t, Model& m, std::span<const int> tokens, StatePropagation prop) {
    if (m.vocab.size() == 0) throw Error("run_sequence: empty vocabulary");
    for (int tok : tokens) {
        if (tok < 0 || tok >= m.vocab.alphabet_size()) {
            throw Error("run_sequence: token id " + std::to_string(tok) + " outside the alphabet");
        }
    }

    SequenceRun run;
    CellState s = make_initial_state(t, m.cell, 1);
    const int start_ids[1] = {m.vocab.start_id};
    s = cell_step(t, m.cell, s, embed_batch(t, m.vocab, std::span<const int>(start_ids, 1)));
    s.hidden = stochastic_transition(t, m, s.hidden, prop, &run.alphas, &run.hard_states);
    run.states.push_back(s.hidden);
    run.cell_states.push_back(s.cell);

    for (int tok : tokens) {
        const int ids[1] = {tok};
        s = cell_step(t, m.cell, s, embed_batch(t, m.vocab, std::span<const int>(ids, 1)));
        if (m.head.kind == HeadKind::per_step) {
            run.step_logits.push_back(classify(t, m.head, s.hidden, std::nullopt));
        }
        s.hidden = stochastic_transition(t, m, s.hidden, prop, &run.alphas, &run.hard_states);
        run.states.push_back(s.hidden);
        run.cell_states.push_back(s.cell);
    }

    if (m.head.kind == HeadKind::binary) {
        const int end_ids[1] = {m.vocab.end_id};
        s = cell_step(t, m.cell, s, embed_batch(t, m.vocab, std::span<const int>(end_ids, 1)));
        run.u_end = s.hidden;
        if (!is_memoryless(m.cfg.cell)) run.c_end = s.cell;
        run.logits = classify(t, m.head, run.u_end, run.c_end);
    } else {
        run.u_end = s.hidden;
        if (!is_memoryless(m.cfg.cell)) run.c_end = s.cell;
    }
    return run;
}

BatchRun run_batch(Tape& t, Model& m, std::span<const LabeledSequence* const> seqs) {
    if (seqs.empty()) throw Error("run_batch: empty batch");
    const std::size_t len = seqs[0]->tokens.size();
    for (const LabeledSequence* s : seqs) {
        if (s->tokens.size() != len) throw Error("run_batch: sequences must share one length");
    }
    const int batch = static_cast<int>(seqs.size());

    BatchRun run;
    CellState s = make_initial_state(t, m.cell, batch);
    std::vector<int> ids(static_cast<std::size_t>(batch), m.vocab.start_id);
    s = cell_step(t, m.cell, s, embed_batch(t, m.vocab, ids));
    s.hidden = stochastic_transition(t, m, s.hidden, StatePropagation::soft, nullptr, nullptr);

    for (std::size_t step = 0; step < len; ++step) {
        for (int b = 0; b < batch; ++b) {
            ids[static_cast<std::size_t>(b)] = seqs[static_cast<std::size_t>(b)]->tokens[step];
        }
        s = cell_step(t, m.cell, s, embed_batch(t, m.vocab, ids));
        if (m.head.kind == HeadKind::per_step) {
            run.step_logits.push_back(classify(t, m.head, s.hidden, std::nullopt));
        }
        s.hidden = stochastic_transition(t, m, s.hidden, StatePropagation::soft, nullptr, nullptr);
    }

    if (m.head.kind == HeadKind::binary) {
        std::fill(ids.begin(), ids.end(), m.vocab.end_id);
        s = cell_step(t, m.cell, s, embed_batch(t, m.vocab, ids));
        std::optional<Tensor> c_end;
        if (!is_memoryless(m.cfg.cell)) c_end = s.cell;
        run.logits = classify(t, m.head, s.hidden, c_end);
    }
    return run;
}

void rmsprop_step(std::span<Parameter* const> params, RmsPropState& state, double lr,
                  double rho, double mu, double eps) {
    if (state.cache.size() != params.size()) {
        state.cache.clear();
        state.momentum.clear();
        for (const Parameter* p : params) {
            Arr zero = p->value;
            std::fill(zero.v.begin(), zero.v.end(), 0.0);
            state.cache.push_back(zero);
            state.momentum.push_back(std::move(zero));
        }
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        Parameter& p = *params[i];
        if (p.grad.size() != p.value.size()) throw Error("rmsprop: gradient shape mismatch");
        auto& cache = state.cache[i].v;
        auto& buf = state.momentum[i].v;
        for (std::size_t j = 0; j < p.value.v.size(); ++j) {
            const double g = p.grad.v[j];
            if (!std::isfinite(g)) {
                throw Error("rmsprop: non-finite gradient in parameter '" + p.name + "'");
            }
            cache[j] = rho * cache[j] + (1.0 - rho) * g * g;
            buf[j] = mu * buf[j] + lr * g / std::sqrt(cache[j] + eps);
            p.value.v[j] -= buf[j];
        }
        p.zero_grad();
    }
}

namespace {

struct ChunkOutcome {
    double loss_sum = 0.0; // scaled contribution to the batch loss
    std::vector<std::pair<Parameter*, Arr>> grads;
};

// Deterministic chunking: bucket by sequence length in ascending order,
// then cut into fixed-size chunks. Merge order never depends on threads.
std::vector<std::vector<int>> chunk_indices(const Dataset& data, std::span<const int> indices) {
    std::map<std::size_t, std::vector<int>> by_len;
    for (int i : indices) by_len[data.seqs[static_cast<std::size_t>(i)].tokens.size()].push_back(i);
    std::vector<std::vector<int>> chunks;
    for (auto& [len, idxs] : by_len) {
        (void)len;
        for (std::size_t at = 0; at < idxs.size(); at += kChunkSize) {
            const std::size_t hi = std::min(idxs.size(), at + kChunkSize);
            chunks.emplace_back(idxs.begin() + static_cast<long>(at), idxs.begin() + static_cast<long>(hi));
        }
    }
    return chunks;
}

// Loss of one equal-length chunk, scaled so chunk losses sum to the
// mean loss of the whole mini-batch.
Tensor chunk_loss(Tape& t, Model& m, const Dataset& data, const std::vector<int>& chunk,
                  int batch_total) {
    std::vector<const LabeledSequence*> seqs;
    seqs.reserve(chunk.size());
    for (int i : chunk) seqs.push_back(&data.seqs[static_cast<std::size_t>(i)]);
    BatchRun run = run_batch(t, m, seqs);

    if (m.head.kind == HeadKind::binary) {
        std::vector<int> labels;
        labels.reserve(seqs.size());
        for (const auto* s : seqs) {
            if (s->label < 0) throw Error("train: sequence without a label");
            labels.push_back(s->label);
        }
        Tensor ce = t.cross_entropy_logits(run.logits, labels);
        return t.scale(t.sum(ce), 1.0 / batch_total);
    }

    const std::size_t len = seqs[0]->tokens.size();
    std::vector<Tensor> step_ces;
    std::vector<int> targets(seqs.size());
    for (std::size_t step = 0; step < len; ++step) {
        for (std::size_t b = 0; b < seqs.size(); ++b) {
            targets[b] = seqs[b]->targets[step];
        }
        step_ces.push_back(t.cross_entropy_logits(run.step_logits[step], targets));
    }
    Tensor all = t.concat(step_ces);
    return t.scale(t.sum(all), 1.0 / (static_cast<double>(len) * batch_total));
}

double run_training_batch(Model& m, const Dataset& data, std::span<const int> batch_indices,
                          int threads, std::vector<Tape>& tapes) {
    const auto chunks = chunk_indices(data, batch_indices);
    std::vector<ChunkOutcome> outcomes(chunks.size());
    parallel_for(static_cast<int>(chunks.size()), threads, [&](int ci, int worker) {
        Tape& tape = tapes[static_cast<std::size_t>(worker)];
        Tensor loss = chunk_loss(tape, m, data, chunks[static_cast<std::size_t>(ci)],
                                 static_cast<int>(batch_indices.size()));
        outcomes[static_cast<std::size_t>(ci)].loss_sum = loss.scalar();
        tape.backward(loss, 1.0, &outcomes[static_cast<std::size_t>(ci)].grads);
    });
    double total = 0.0;
    for (auto& oc : outcomes) {
        total += oc.loss_sum;
        for (auto& [param, grad] : oc.grads) {
            for (std::size_t j = 0; j < grad.v.size(); ++j) param->grad.v[j] += grad.v[j];
        }
    }
    return total;
}

void clip_gradients(std::span<Parameter* const> params, double max_norm) {
    if (max_norm <= 0.0) return;
    double sq = 0.0;
    for (const Parameter* p : params) {
        for (double g : p->grad.v) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm <= max_norm) return;
    const double f = max_norm / norm;
    for (Parameter* p : params) {
        for (double& g : p->grad.v) g *= f;
    }
}

} // namespace

EvalResult evaluate(Model& m, const Dataset& data, int threads) {
    if (data.seqs.empty()) return {};
    std::vector<int> all(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) all[i] = static_cast<int>(i);
    const auto chunks = chunk_indices(data, all);

    struct ChunkEval {
        double err_num = 0.0, err_den = 0.0, ce_num = 0.0, ce_den = 0.0;
    };
    std::vector<ChunkEval> parts(chunks.size());

    parallel_for(static_cast<int>(chunks.size()), effective_threads(threads), [&](int ci, int) {
        const auto& chunk = chunks[static_cast<std::size_t>(ci)];
        std::vector<const LabeledSequence*> seqs;
        for (int i : chunk) seqs.push_back(&data.seqs[static_cast<std::size_t>(i)]);
        Tape tape(false);
        BatchRun run = run_batch(tape, m, seqs);
        ChunkEval& pe = parts[static_cast<std::size_t>(ci)];
        if (m.head.kind == HeadKind::binary) {
            for (std::size_t b = 0; b < seqs.size(); ++b) {
                auto row = run.logits.values().subspan(2 * b, 2);
                const int pred = row[1] > row[0] ? 1 : 0;
                pe.err_num += pred != seqs[b]->label ? 1.0 : 0.0;
                pe.err_den += 1.0;
                // per-sequence CE, stable log-sum-exp
                const double mx = std::max(row[0], row[1]);
                const double lse = mx + std::log(std::exp(row[0] - mx) + std::exp(row[1] - mx));
                pe.ce_num += lse - row[static_cast<std::size_t>(seqs[b]->label)];
                pe.ce_den += 1.0;
            }
        } else {
            const int width = m.head_output_dim();
            for (std::size_t step = 0; step < seqs[0]->tokens.size(); ++step) {
                auto logits = run.step_logits[step].values();
                for (std::size_t b = 0; b < seqs.size(); ++b) {
                    auto row = logits.subspan(b * static_cast<std::size_t>(width),
                                              static_cast<std::size_t>(width));
                    const int target = seqs[b]->targets[step];
                    double mx = row[0];
                    for (double x : row) mx = std::max(mx, x);
                    double se = 0.0;
                    for (double x : row) se += std::exp(x - mx);
                    pe.ce_num += mx + std::log(se) - row[static_cast<std::size_t>(target)];
                    pe.ce_den += 1.0;
                    if (target != 0) { // recall span
                        const int pred = argmax_index(row);
                        pe.err_num += pred != target ? 1.0 : 0.0;
                        pe.err_den += 1.0;
                    }
                }
            }
        }
    });

    ChunkEval total;
    for (const auto& pe : parts) {
        total.err_num += pe.err_num;
        total.err_den += pe.err_den;
        total.ce_num += pe.ce_num;
        total.ce_den += pe.ce_den;
    }
    EvalResult res;
    res.error = total.err_den > 0.0 ? total.err_num / total.err_den : 0.0;
    res.mean_ce = total.ce_den > 0.0 ? total.ce_num / total.ce_den : 0.0;
    return res;
}

std::vector<int> phase_filter(std::span<const int> keys, int cap) {
    std::vector<int> admitted;
    for (std::size_t i = 0; i < keys.size(); ++i) {
        if (cap <= 0 || keys[i] <= cap) admitted.push_back(static_cast<int>(i));
    }
    return admitted;
}

TrainResult train(const TrainConfig& cfg, Model& model, const Dataset& train_set,
                  const Dataset& valid_set, std::span<const int> curriculum_keys) {
    if (train_set.seqs.empty() || valid_set.seqs.empty()) {
        throw Error("train: empty training or validation split");
    }
    if (!curriculum_keys.empty() && curriculum_keys.size() != train_set.size()) {
        throw Error("train: one curriculum key per training sequence required");
    }
    std::vector<TrainPhase> phases = cfg.phases;
    if (phases.empty()) phases.push_back(TrainPhase{0, 100});

    std::vector<int> keys(train_set.size());
    for (std::size_t i = 0; i < train_set.size(); ++i) {
        keys[i] = curriculum_keys.empty() ? static_cast<int>(train_set.seqs[i].tokens.size())
                                          : curriculum_keys[i];
    }

    const std::vector<Parameter*> params = model.parameters();
    const int threads = effective_threads(cfg.threads);
    RmsPropState opt;
    Rng shuffle_rng(cfg.seed);
    std::vector<Tape> tapes(static_cast<std::size_t>(threads));

    TrainResult result;
    std::vector<Arr> best_params;
    int epochs_since_best = 0;
    int epoch = 0;

    auto snapshot = [&] {
        best_params.clear();
        for (const Parameter* p : params) best_params.push_back(p->value);
    };

    for (std::size_t phase_idx = 0; phase_idx < phases.size(); ++phase_idx) {
        const TrainPhase& phase = phases[phase_idx];
        std::vector<int> admitted = phase_filter(keys, phase.cap);
        if (admitted.empty()) continue;

        for (int phase_epoch = 0; phase_epoch < phase.max_epochs; ++phase_epoch, ++epoch) {
            shuffle_rng.shuffle(admitted);
            double loss_sum = 0.0;
            int batches = 0;
            for (std::size_t at = 0; at < admitted.size(); at += static_cast<std::size_t>(cfg.batch)) {
                const std::size_t hi = std::min(admitted.size(), at + static_cast<std::size_t>(cfg.batch));
                std::span<const int> batch(admitted.data() + at, hi - at);
                const double loss = run_training_batch(model, train_set, batch, threads, tapes);
                if (!std::isfinite(loss)) throw Error("train: loss diverged (non-finite)");
                clip_gradients(params, cfg.clip_norm);
                rmsprop_step(params, opt, cfg.lr, cfg.rho, cfg.momentum, cfg.eps);
                loss_sum += loss;
                ++batches;
            }

            const EvalResult tr = evaluate(model, train_set, threads);
            const EvalResult va = evaluate(model, valid_set, threads);
            EpochStats stats;
            stats.epoch = epoch;
            stats.phase = static_cast<int>(phase_idx);
            stats.train_loss = batches > 0 ? loss_sum / batches : 0.0;
            stats.train_err = tr.error;
            stats.valid_err = va.error;
            result.history.push_back(stats);

            if (result.best_epoch < 0 || va.error < result.best_valid_err) {
                result.best_valid_err = va.error;
                result.best_epoch = epoch;
                epochs_since_best = 0;
                snapshot();
            } else {
                ++epochs_since_best;
            }

            if (cfg.stop_when_perfect && tr.error == 0.0 && va.error == 0.0) {
                result.reached_perfect = true;
                return result; // keep the current (perfect) parameters
            }
            if (cfg.patience > 0 && epochs_since_best >= cfg.patience) break;
        }
    }

    if (!best_params.empty()) {
        for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best_params[i];
    }
    return result;
}

GradCheckReport pipeline_gradient_check(CellKind kind, Similarity sim, int hidden, int centroids,
                                        int embed, int seq_len, std::uint64_t seed, double eps) {
    ModelConfig cfg;
    cfg.cell = kind;
    cfg.hidden = hidden;
    cfg.embed = embed;
    cfg.centroids = centroids;
    cfg.similarity = sim;
    cfg.alphabet = {"0", "1"};
    Model model = Model::init(cfg, seed);

    Rng rng(seed + 1);
    std::vector<int> tokens;
    for (int i = 0; i < seq_len; ++i) tokens.push_back(rng.uniform_int(2));
    const int label = rng.uniform_int(2);

    auto closure = [&](bool want_grad) {
        Tape t;
        SequenceRun run = run_sequence(t, model, tokens);
        Tensor ce = t.cross_entropy_logits(run.logits, std::vector<int>{label});
        Tensor loss = t.sum(ce);
        const double v = loss.scalar();
        if (want_grad) t.backward(loss);
        return v;
    };
    std::vector<Parameter*> params = model.parameters();
    return check_gradients(closure, params, eps);
}

void write_history_csv(const std::string& path, const TrainResult& result) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("write_history_csv: cannot open " + path);
    out << "epoch,phase,train_loss,train_err,valid_err\n";
    char line[160];
    for (const EpochStats& s : result.history) {
        std::snprintf(line, sizeof(line), "%d,%d,%.17g,%.17g,%.17g\n", s.epoch, s.phase,
                      s.train_loss, s.train_err, s.valid_err);
        out << line;
    }
}

} // namespace srnn
