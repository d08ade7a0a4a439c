#include "srnn/analysis.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

namespace srnn {

std::vector<PrototypeRow> token_prototypes(Model& m, const Dataset& data, int top_n) {
    if (top_n < 1) throw Error("token_prototypes: top_n must be >= 1");
    if (!m.cfg.state_regularized) throw Error("token_prototypes: model has no stochastic component");
    const int k = m.centroids.count();
    const int n_tokens = static_cast<int>(data.alphabet.size());
    std::vector<std::vector<double>> sums(static_cast<std::size_t>(n_tokens),
                                          std::vector<double>(static_cast<std::size_t>(k), 0.0));
    std::vector<long long> occurrences(static_cast<std::size_t>(n_tokens), 0);

    Tape tape(false);
    for (const auto& seq : data.seqs) {
        SequenceRun run = run_sequence(tape, m, seq.tokens);
        for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
            const int tok = seq.tokens[i];
            auto alpha = run.alphas[i + 1].values(); // alphas[0] belongs to START
            for (int j = 0; j < k; ++j) sums[static_cast<std::size_t>(tok)][static_cast<std::size_t>(j)] += alpha[static_cast<std::size_t>(j)];
            occurrences[static_cast<std::size_t>(tok)] += 1;
        }
        tape.reset();
    }

    std::vector<PrototypeRow> rows;
    for (int cent = 0; cent < k; ++cent) {
        std::vector<std::pair<double, int>> ranked; // (mean prob, token)
        for (int tok = 0; tok < n_tokens; ++tok) {
            if (occurrences[static_cast<std::size_t>(tok)] == 0) continue;
            ranked.emplace_back(sums[static_cast<std::size_t>(tok)][static_cast<std::size_t>(cent)] /
                                    static_cast<double>(occurrences[static_cast<std::size_t>(tok)]),
                                tok);
        }
        std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        const int take = std::min<int>(top_n, static_cast<int>(ranked.size()));
        for (int r = 0; r < take; ++r) {
            PrototypeRow row;
            row.centroid = cent;
            row.token = data.alphabet[static_cast<std::size_t>(ranked[static_cast<std::size_t>(r)].second)];
            row.mean_prob = ranked[static_cast<std::size_t>(r)].first;
            row.rank = r + 1;
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

std::vector<TraceRow> state_trace(Model& m, std::span<const int> tokens) {
    if (!m.cfg.state_regularized) throw Error("state_trace: model has no stochastic component");
    Tape tape(false);
    SequenceRun run = run_sequence(tape, m, tokens);
    std::vector<TraceRow> rows;
    for (std::size_t i = 0; i < run.alphas.size(); ++i) {
        TraceRow row;
        row.t = static_cast<int>(i);
        row.token = i == 0 ? m.vocab.tokens[static_cast<std::size_t>(m.vocab.start_id)]
                           : m.vocab.tokens[static_cast<std::size_t>(tokens[i - 1])];
        row.state = run.hard_states[i];
        auto alpha = run.alphas[i].values();
        row.alpha.assign(alpha.begin(), alpha.end());
        auto h = run.states[i].values();
        row.h.assign(h.begin(), h.end());
        auto c = run.cell_states[i].values();
        row.c.assign(c.begin(), c.end());
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<double> ranked_alpha_profile(Model& m, const Dataset& data) {
    if (data.seqs.empty()) throw Error("ranked_alpha_profile: empty dataset");
    if (!m.cfg.state_regularized) throw Error("ranked_alpha_profile: model has no stochastic component");
    const int k = m.centroids.count();
    std::vector<double> profile(static_cast<std::size_t>(k), 0.0);
    long long steps = 0;

    Tape tape(false);
    std::vector<double> sorted(static_cast<std::size_t>(k));
    for (const auto& seq : data.seqs) {
        SequenceRun run = run_sequence(tape, m, seq.tokens);
        for (const Tensor& alpha : run.alphas) {
            auto a = alpha.values();
            std::copy(a.begin(), a.end(), sorted.begin());
            std::sort(sorted.begin(), sorted.end(), std::greater<double>());
            for (int j = 0; j < k; ++j) profile[static_cast<std::size_t>(j)] += sorted[static_cast<std::size_t>(j)];
            ++steps;
        }
        tape.reset();
    }
    for (double& x : profile) x /= static_cast<double>(steps);
    return profile;
}

namespace {

std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

} // namespace

void write_prototypes_csv(const std::string& path, const std::vector<PrototypeRow>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("write_prototypes_csv: cannot open " + path);
    out << "centroid,token,mean_prob,rank\n";
    for (const auto& r : rows) {
        out << r.centroid << "," << r.token << "," << fmt(r.mean_prob) << "," << r.rank << "\n";
    }
}

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("write_trace_csv: cannot open " + path);
    out << "t,token,state";
    if (!rows.empty()) {
        for (std::size_t j = 0; j < rows[0].alpha.size(); ++j) out << ",alpha_" << j;
        for (std::size_t j = 0; j < rows[0].h.size(); ++j) out << ",h_" << j;
        for (std::size_t j = 0; j < rows[0].c.size(); ++j) out << ",c_" << j;
    }
    out << "\n";
    for (const auto& r : rows) {
        out << r.t << "," << r.token << "," << r.state;
        for (double x : r.alpha) out << "," << fmt(x);
        for (double x : r.h) out << "," << fmt(x);
        for (double x : r.c) out << "," << fmt(x);
        out << "\n";
    }
}

void write_ranked_profile_csv(const std::string& path, const std::vector<double>& profile) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("write_ranked_profile_csv: cannot open " + path);
    out << "rank,mean_prob\n";
    for (std::size_t i = 0; i < profile.size(); ++i) {
        out << (i + 1) << "," << fmt(profile[i]) << "\n";
    }
}

} // namespace srnn
