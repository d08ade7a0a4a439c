#include "srnn/automata.hpp"

#include "srnn/tensor.hpp" // Error

#include <algorithm>
#include <deque>
#include <map>
#include <sstream>

namespace srnn {

bool Dfa::total() const {
    for (const auto& row : delta) {
        for (int t : row) {
            if (t < 0) return false;
        }
    }
    return true;
}

int Dfa::token_id(std::string_view token) const {
    for (std::size_t i = 0; i < alphabet.size(); ++i) {
        if (alphabet[i] == token) return static_cast<int>(i);
    }
    return -1;
}

bool dfa_accepts(const Dfa& dfa, std::span<const int> tokens) {
    int state = dfa.start;
    for (int tok : tokens) {
        if (tok < 0 || tok >= static_cast<int>(dfa.alphabet.size())) {
            throw Error("dfa_accepts: token id outside alphabet");
        }
        state = dfa.delta[static_cast<std::size_t>(state)][static_cast<std::size_t>(tok)];
        if (state < 0) return false; // implicit sink
    }
    return dfa.accept[static_cast<std::size_t>(state)];
}

bool dfa_accepts(const Dfa& dfa, std::string_view word) {
    std::vector<int> ids;
    ids.reserve(word.size());
    for (char ch : word) {
        const int id = dfa.token_id(std::string_view(&ch, 1));
        if (id < 0) throw Error(std::string("dfa_accepts: symbol '") + ch + "' outside alphabet");
        ids.push_back(id);
    }
    return dfa_accepts(dfa, ids);
}

Dfa complete_with_sink(const Dfa& dfa) {
    if (dfa.total()) return dfa;
    Dfa out = dfa;
    const int sink = out.num_states();
    out.delta.push_back(std::vector<int>(out.alphabet.size(), sink));
    out.accept.push_back(false);
    for (int s = 0; s < sink; ++s) {
        for (auto& t : out.delta[static_cast<std::size_t>(s)]) {
            if (t < 0) t = sink;
        }
    }
    return out;
}

namespace {

std::vector<int> reachable_order(const Dfa& dfa) {
    std::vector<int> order;
    std::vector<bool> seen(static_cast<std::size_t>(dfa.num_states()), false);
    std::deque<int> queue{dfa.start};
    seen[static_cast<std::size_t>(dfa.start)] = true;
    while (!queue.empty()) {
        const int s = queue.front();
        queue.pop_front();
        order.push_back(s);
        for (int t : dfa.delta[static_cast<std::size_t>(s)]) {
            if (t >= 0 && !seen[static_cast<std::size_t>(t)]) {
                seen[static_cast<std::size_t>(t)] = true;
                queue.push_back(t);
            }
        }
    }
    return order;
}

} // namespace

Dfa minimize(const Dfa& input) {
    Dfa dfa = complete_with_sink(input);

    // restrict to reachable states
    const std::vector<int> order = reachable_order(dfa);
    std::vector<int> remap(static_cast<std::size_t>(dfa.num_states()), -1);
    for (std::size_t i = 0; i < order.size(); ++i) remap[static_cast<std::size_t>(order[i])] = static_cast<int>(i);
    Dfa r;
    r.alphabet = dfa.alphabet;
    r.start = 0;
    r.delta.resize(order.size());
    r.accept.resize(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        const int s = order[i];
        r.accept[i] = dfa.accept[static_cast<std::size_t>(s)];
        r.delta[i].reserve(dfa.alphabet.size());
        for (int t : dfa.delta[static_cast<std::size_t>(s)]) {
            r.delta[i].push_back(remap[static_cast<std::size_t>(t)]);
        }
    }

    // Moore refinement: split classes by (acceptance, successor classes)
    const int n = r.num_states();
    std::vector<int> cls(static_cast<std::size_t>(n));
    for (int s = 0; s < n; ++s) cls[static_cast<std::size_t>(s)] = r.accept[static_cast<std::size_t>(s)] ? 1 : 0;
    for (;;) {
        std::map<std::vector<int>, int> sig_to_class;
        std::vector<int> next(static_cast<std::size_t>(n));
        for (int s = 0; s < n; ++s) {
            std::vector<int> sig;
            sig.reserve(r.alphabet.size() + 1);
            sig.push_back(cls[static_cast<std::size_t>(s)]);
            for (int t : r.delta[static_cast<std::size_t>(s)]) sig.push_back(cls[static_cast<std::size_t>(t)]);
            auto [it, inserted] = sig_to_class.emplace(std::move(sig), static_cast<int>(sig_to_class.size()));
            next[static_cast<std::size_t>(s)] = it->second;
        }
        if (next == cls) break;
        cls = std::move(next);
    }

    // quotient automaton, then canonical BFS numbering from the start class
    const int num_classes = *std::max_element(cls.begin(), cls.end()) + 1;
    std::vector<std::vector<int>> qdelta(static_cast<std::size_t>(num_classes),
                                         std::vector<int>(r.alphabet.size(), -1));
    std::vector<bool> qaccept(static_cast<std::size_t>(num_classes), false);
    for (int s = 0; s < n; ++s) {
        const int c = cls[static_cast<std::size_t>(s)];
        qaccept[static_cast<std::size_t>(c)] = r.accept[static_cast<std::size_t>(s)];
        for (std::size_t a = 0; a < r.alphabet.size(); ++a) {
            qdelta[static_cast<std::size_t>(c)][a] = cls[static_cast<std::size_t>(r.delta[static_cast<std::size_t>(s)][a])];
        }
    }
    Dfa q;
    q.alphabet = r.alphabet;
    q.start = cls[static_cast<std::size_t>(r.start)];
    q.delta = std::move(qdelta);
    q.accept = std::move(qaccept);

    const std::vector<int> qorder = reachable_order(q); // all classes are reachable
    std::vector<int> qremap(static_cast<std::size_t>(q.num_states()), -1);
    for (std::size_t i = 0; i < qorder.size(); ++i) qremap[static_cast<std::size_t>(qorder[i])] = static_cast<int>(i);
    Dfa out;
    out.alphabet = q.alphabet;
    out.start = 0;
    out.delta.resize(qorder.size());
    out.accept.resize(qorder.size());
    for (std::size_t i = 0; i < qorder.size(); ++i) {
        const int s = qorder[i];
        out.accept[i] = q.accept[static_cast<std::size_t>(s)];
        for (int t : q.delta[static_cast<std::size_t>(s)]) {
            out.delta[i].push_back(qremap[static_cast<std::size_t>(t)]);
        }
    }
    return out;
}

EquivalenceResult equivalent(const Dfa& a_in, const Dfa& b_in) {
    if (a_in.alphabet != b_in.alphabet) throw Error("equivalent: alphabet mismatch");
    const Dfa a = complete_with_sink(a_in);
    const Dfa b = complete_with_sink(b_in);

    struct Visit {
        int prev = -1;
        int via = -1;
    };
    const int nb = b.num_states();
    auto key = [nb](int sa, int sb) { return sa * nb + sb; };
    std::map<int, Visit> visited;
    std::deque<int> queue;
    visited[key(a.start, b.start)] = Visit{};
    queue.push_back(key(a.start, b.start));

    while (!queue.empty()) {
        const int k = queue.front();
        queue.pop_front();
        const int sa = k / nb;
        const int sb = k % nb;
        if (a.accept[static_cast<std::size_t>(sa)] != b.accept[static_cast<std::size_t>(sb)]) {
            std::vector<int> tokens;
            int cur = k;
            while (visited[cur].prev >= 0 || visited[cur].via >= 0) {
                tokens.push_back(visited[cur].via);
                cur = visited[cur].prev;
            }
            std::reverse(tokens.begin(), tokens.end());
            EquivalenceResult res;
            res.equivalent = false;
            res.counterexample = std::move(tokens);
            return res;
        }
        for (std::size_t t = 0; t < a.alphabet.size(); ++t) {
            const int na = a.delta[static_cast<std::size_t>(sa)][t];
            const int nb2 = b.delta[static_cast<std::size_t>(sb)][t];
            const int nk = key(na, nb2);
            if (visited.find(nk) == visited.end()) {
                visited[nk] = Visit{k, static_cast<int>(t)};
                queue.push_back(nk);
            }
        }
    }
    EquivalenceResult res;
    res.equivalent = true;
    return res;
}

std::string to_dot(const Dfa& dfa, std::span<const std::string> state_labels) {
    if (!state_labels.empty() && static_cast<int>(state_labels.size()) != dfa.num_states()) {
        throw Error("to_dot: one label per state required");
    }
    auto label_of = [&](int s) {
        return state_labels.empty() ? std::to_string(s) : state_labels[static_cast<std::size_t>(s)];
    };
    std::ostringstream out;
    out << "digraph dfa {\n";
    out << "  rankdir=LR;\n";
    out << "  __start [shape=point, style=invis];\n";
    for (int s = 0; s < dfa.num_states(); ++s) {
        out << "  q" << s << " [label=\"" << label_of(s) << "\", shape="
            << (dfa.accept[static_cast<std::size_t>(s)] ? "doublecircle" : "circle") << "];\n";
    }
    out << "  __start -> q" << dfa.start << ";\n";
    for (int s = 0; s < dfa.num_states(); ++s) {
        std::map<int, std::string> edges; // dst -> comma-joined tokens, token order
        for (std::size_t t = 0; t < dfa.alphabet.size(); ++t) {
            const int dst = dfa.delta[static_cast<std::size_t>(s)][t];
            if (dst < 0) continue;
            auto& lbl = edges[dst];
            if (!lbl.empty()) lbl += ",";
            lbl += dfa.alphabet[t];
        }
        for (const auto& [dst, lbl] : edges) {
            out << "  q" << s << " -> q" << dst << " [label=\"" << lbl << "\"];\n";
        }
    }
    out << "}\n";
    return out.str();
}

Dfa tomita_dfa(int grammar) {
    Dfa d;
    d.alphabet = {"0", "1"};
    d.start = 0;
    auto set = [&](std::vector<std::vector<int>> delta, std::vector<bool> accept) {
        d.delta = std::move(delta);
        d.accept = std::move(accept);
    };
    switch (grammar) {
        case 1: // 1*
            set({{1, 0}, {1, 1}}, {true, false});
            break;
        case 2: // (10)*
            set({{2, 1}, {0, 2}, {2, 2}}, {true, false, false});
            break;
        case 3: // odd runs of 1s must be followed by even runs of 0s
            set({{0, 1}, {2, 0}, {3, 4}, {2, 1}, {4, 4}},
                {true, true, false, true, false});
            break;
        case 4: // no substring "000"
            set({{1, 0}, {2, 0}, {3, 0}, {3, 3}}, {true, true, true, false});
            break;
        case 5: // even number of 0s and even number of 1s
            set({{1, 2}, {0, 3}, {3, 0}, {2, 1}}, {true, false, false, false});
            break;
        case 6: // (#1s - #0s) divisible by 3
            set({{2, 1}, {0, 2}, {1, 0}}, {true, false, false});
            break;
        case 7: // 0*1*0*1*
            set({{0, 1}, {2, 1}, {2, 3}, {4, 3}, {4, 4}},
                {true, true, true, true, false});
            break;
        default:
            throw Error("tomita_dfa: grammar must be in 1..7");
    }
    return d;
}

Dfa bp_depth_dfa(int max_depth) {
    if (max_depth < 1) throw Error("bp_depth_dfa: max_depth must be >= 1");
    Dfa d;
    for (char ch = 'a'; ch <= 'z'; ++ch) d.alphabet.push_back(std::string(1, ch));
    d.alphabet.push_back("(");
    d.alphabet.push_back(")");
    const int open_id = 26;
    const int close_id = 27;
    const int sink = max_depth + 1;
    d.start = 0;
    for (int depth = 0; depth <= max_depth + 1; ++depth) {
        std::vector<int> row(d.alphabet.size(), depth); // letters keep the depth
        if (depth == sink) {
            std::fill(row.begin(), row.end(), sink);
        } else {
            row[open_id] = depth < max_depth ? depth + 1 : sink;
            row[close_id] = depth > 0 ? depth - 1 : sink;
        }
        d.delta.push_back(std::move(row));
        d.accept.push_back(depth == 0);
    }
    return d;
}

} // namespace srnn
