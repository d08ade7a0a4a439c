#include "srnn/extraction.hpp"

#include <atomic>
#include <deque>
#include <fstream>
#include <mutex>
#include <thread>

namespace srnn {

namespace {

// One hard step: cell application from (h = centroid row, c), then argmax
// of the transition distribution.
struct HardStepOut {
    int state = 0;
    Arr alpha;
    Arr cell; // carried cell state (memory cells)
};

HardStepOut hard_step(Tape& t, Model& m, Tensor h, Tensor c, int token_id) {
    const int ids[1] = {token_id};
    CellState s = cell_step(t, m.cell, {h, c}, embed_batch(t, m.vocab, std::span<const int>(ids, 1)));
    Tensor alpha = transition_probs(t, m.centroids, s.hidden);
    HardStepOut out;
    out.state = argmax_index(alpha.values());
    out.alpha = alpha.to_arr();
    out.cell = s.cell.to_arr();
    return out;
}

Tensor centroid_row(Tape& t, Model& m, int centroid) {
    const int row[1] = {centroid};
    return t.rows_gather(t.param(m.centroids.matrix), std::span<const int>(row, 1));
}

void check_tokens(Model& m, const Dataset& data) {
    const int limit = m.vocab.alphabet_size();
    for (const auto& s : data.seqs) {
        for (int tok : s.tokens) {
            if (tok < 0 || tok >= limit) {
                throw Error("extraction: token id " + std::to_string(tok) +
                            " outside the model vocabulary");
            }
        }
    }
}

template <class Fn>
void parallel_indexed(int n, int threads, Fn&& fn) {
    if (threads <= 0) {
        const unsigned hw = std::thread::hardware_concurrency();
        threads = hw == 0 ? 1 : static_cast<int>(hw);
    }
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr err;
    std::mutex mu;
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                const int i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(mu);
                    if (!err) err = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

} // namespace

int start_centroid(Model& m) {
    if (!m.cfg.state_regularized) throw Error("extraction: model has no stochastic component");
    Tape t(false);
    CellState s = make_initial_state(t, m.cell, 1);
    HardStepOut out = hard_step(t, m, s.hidden, s.cell, m.vocab.start_id);
    return out.state;
}

std::vector<int> hard_state_path(Model& m, std::span<const int> tokens) {
    Tape t(false);
    std::vector<int> path;
    CellState init = make_initial_state(t, m.cell, 1);
    HardStepOut out = hard_step(t, m, init.hidden, init.cell, m.vocab.start_id);
    path.push_back(out.state);
    Tensor c = t.constant(out.cell);
    for (int tok : tokens) {
        Tensor h = centroid_row(t, m, path.back());
        out = hard_step(t, m, h, c, tok);
        path.push_back(out.state);
        c = t.constant(out.cell);
    }
    return path;
}

Arr alpha_from_centroid(Model& m, int centroid, int token) {
    if (centroid < 0 || centroid >= m.centroids.count()) {
        throw Error("alpha_from_centroid: centroid index out of range");
    }
    Tape t(false);
    Tensor h = centroid_row(t, m, centroid);
    Tensor c = t.zeros(1, m.cell.hidden);
    HardStepOut out = hard_step(t, m, h, c, token);
    return out.alpha;
}

TransitionCounts collect_traces(Model& m, const Dataset& data, int threads) {
    if (!m.cfg.state_regularized) throw Error("extraction: model has no stochastic component");
    check_tokens(m, data);
    TransitionCounts counts;
    counts.num_states = m.centroids.count();
    counts.start_state = start_centroid(m);

    const int n = static_cast<int>(data.seqs.size());
    std::vector<std::map<std::tuple<int, int, int>, long long>> partial(
        static_cast<std::size_t>(n));
    parallel_indexed(n, threads, [&](int i) {
        auto& local = partial[static_cast<std::size_t>(i)];
        Tape t(false);
        int state = counts.start_state;
        Tensor c = t.zeros(1, m.cell.hidden);
        for (int tok : data.seqs[static_cast<std::size_t>(i)].tokens) {
            Tensor h = centroid_row(t, m, state);
            HardStepOut out = hard_step(t, m, h, c, tok);
            local[{state, tok, out.state}] += 1;
            state = out.state;
            c = t.constant(out.cell);
        }
    });
    for (const auto& local : partial) {
        for (const auto& [key, cnt] : local) counts.counts[key] += cnt;
    }
    return counts;
}

Dfa build_dfa(const TransitionCounts& counts, const std::vector<std::string>& alphabet,
              std::vector<int>* state_centroids) {
    const int k = counts.num_states;
    const int n_tokens = static_cast<int>(alphabet.size());

    // argmax-count successor per (centroid, token), lowest index on ties
    std::vector<std::vector<int>> best(static_cast<std::size_t>(k),
                                       std::vector<int>(static_cast<std::size_t>(n_tokens), -1));
    std::vector<std::vector<long long>> best_count(
        static_cast<std::size_t>(k), std::vector<long long>(static_cast<std::size_t>(n_tokens), 0));
    for (const auto& [key, cnt] : counts.counts) {
        const auto [from, tok, to] = key;
        if (from < 0 || from >= k || to < 0 || to >= k || tok < 0 || tok >= n_tokens) {
            throw Error("build_dfa: count entry outside (k, alphabet) bounds");
        }
        auto& cur = best[static_cast<std::size_t>(from)][static_cast<std::size_t>(tok)];
        auto& cur_cnt = best_count[static_cast<std::size_t>(from)][static_cast<std::size_t>(tok)];
        if (cnt > cur_cnt || (cnt == cur_cnt && cur >= 0 && to < cur)) {
            cur = to;
            cur_cnt = cnt;
        }
    }

    // BFS from the start centroid over kept transitions
    std::vector<int> order;
    std::vector<int> dense(static_cast<std::size_t>(k), -1);
    std::deque<int> queue{counts.start_state};
    dense[static_cast<std::size_t>(counts.start_state)] = 0;
    order.push_back(counts.start_state);
    while (!queue.empty()) {
        const int s = queue.front();
        queue.pop_front();
        for (int a = 0; a < n_tokens; ++a) {
            const int to = best[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)];
            if (to >= 0 && dense[static_cast<std::size_t>(to)] < 0) {
                dense[static_cast<std::size_t>(to)] = static_cast<int>(order.size());
                order.push_back(to);
                queue.push_back(to);
            }
        }
    }

    Dfa dfa;
    dfa.alphabet = alphabet;
    dfa.start = 0;
    dfa.delta.resize(order.size());
    dfa.accept.assign(order.size(), false);
    for (std::size_t i = 0; i < order.size(); ++i) {
        dfa.delta[i].reserve(static_cast<std::size_t>(n_tokens));
        for (int a = 0; a < n_tokens; ++a) {
            const int to = best[static_cast<std::size_t>(order[i])][static_cast<std::size_t>(a)];
            dfa.delta[i].push_back(to < 0 ? -1 : dense[static_cast<std::size_t>(to)]);
        }
    }
    if (state_centroids != nullptr) *state_centroids = order;
    return dfa;
}

std::vector<bool> accept_states(Model& m, const Dfa& dfa, std::span<const int> state_centroids) {
    if (state_centroids.size() != static_cast<std::size_t>(dfa.num_states())) {
        throw Error("accept_states: one centroid per state required");
    }
    std::vector<bool> accept(static_cast<std::size_t>(dfa.num_states()), false);
    for (int s = 0; s < dfa.num_states(); ++s) {
        Tape t(false);
        Tensor h = centroid_row(t, m, state_centroids[static_cast<std::size_t>(s)]);
        Tensor c = t.zeros(1, m.cell.hidden);
        const int ids[1] = {m.vocab.end_id};
        CellState end = cell_step(t, m.cell, {h, c},
                                  embed_batch(t, m.vocab, std::span<const int>(ids, 1)));
        std::optional<Tensor> c_end;
        if (!is_memoryless(m.cfg.cell)) c_end = end.cell;
        Tensor logits = classify(t, m.head, end.hidden, c_end);
        accept[static_cast<std::size_t>(s)] = logits.value(1) > logits.value(0);
    }
    return accept;
}

ExtractionResult extract_dfa(Model& m, const Dataset& data, int threads) {
    ExtractionResult res;
    res.counts = collect_traces(m, data, threads);
    std::vector<int> centroids;
    res.raw = build_dfa(res.counts, data.alphabet, &centroids);
    const std::vector<bool> accept = accept_states(m, res.raw, centroids);
    res.raw.accept = accept;
    for (int c : centroids) res.state_labels.push_back(std::to_string(c));
    res.dfa = complete_with_sink(res.raw);
    if (res.dfa.num_states() > res.raw.num_states()) res.state_labels.push_back("sink");
    return res;
}

void write_counts_csv(const std::string& path, const TransitionCounts& counts,
                      const std::vector<std::string>& alphabet) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("write_counts_csv: cannot open " + path);
    out << "state,token,state,count\n";
    for (const auto& [key, cnt] : counts.counts) {
        const auto [from, tok, to] = key;
        out << from << "," << alphabet[static_cast<std::size_t>(tok)] << "," << to << "," << cnt
            << "\n";
    }
}

} // namespace srnn
