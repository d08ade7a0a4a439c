#include "srnn/formal_langs.hpp"

#include "srnn/automata.hpp"
#include "srnn/tensor.hpp" // Error

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace srnn {

const char* task_kind_name(TaskKind t) {
    switch (t) {
        case TaskKind::tomita: return "tomita";
        case TaskKind::bp: return "bp";
        case TaskKind::palindrome: return "palindrome";
        case TaskKind::copy_memory: return "copy";
    }
    return "?";
}

bool task_kind_from_name(std::string_view name, TaskKind* out) {
    if (name == "tomita") { *out = TaskKind::tomita; return true; }
    if (name == "bp") { *out = TaskKind::bp; return true; }
    if (name == "palindrome") { *out = TaskKind::palindrome; return true; }
    if (name == "copy" || name == "copy-memory") { *out = TaskKind::copy_memory; return true; }
    return false;
}

int Dataset::positives() const {
    int n = 0;
    for (const auto& s : seqs) n += s.label == 1 ? 1 : 0;
    return n;
}

std::string Dataset::tokens_as_string(const LabeledSequence& s) const {
    std::string out;
    for (int t : s.tokens) out += alphabet[static_cast<std::size_t>(t)];
    return out;
}

std::vector<int> tomita_train_lengths() {
    std::vector<int> ls;
    for (int l = 0; l <= 13; ++l) ls.push_back(l);
    ls.push_back(16);
    ls.push_back(19);
    ls.push_back(22);
    return ls;
}

std::vector<int> tomita_valid_lengths() {
    std::vector<int> ls;
    for (int l = 1; l <= 28; l += 3) ls.push_back(l);
    return ls;
}

bool tomita_accepts(int grammar, std::string_view bits) {
    static const std::vector<Dfa> machines = [] {
        std::vector<Dfa> ms;
        for (int g = 1; g <= 7; ++g) ms.push_back(tomita_dfa(g));
        return ms;
    }();
    if (grammar < 1 || grammar > 7) throw Error("tomita: grammar must be in 1..7");
    for (char c : bits) {
        if (c != '0' && c != '1') throw Error("tomita: non-binary symbol in input");
    }
    return dfa_accepts(machines[static_cast<std::size_t>(grammar - 1)], bits);
}

std::pair<bool, int> bp_accepts(std::string_view s) {
    int depth = 0;
    int max_depth = 0;
    bool negative = false;
    for (char c : s) {
        if (c == '(') {
            ++depth;
            max_depth = std::max(max_depth, depth);
        } else if (c == ')') {
            --depth;
            if (depth < 0) negative = true;
        } else if (c < 'a' || c > 'z') {
            throw Error(std::string("bp: invalid symbol '") + c + "'");
        }
    }
    return {!negative && depth == 0, max_depth};
}

int bp_max_depth(const Dataset& data, const LabeledSequence& seq) {
    return bp_accepts(data.tokens_as_string(seq)).second;
}

namespace {

std::vector<std::string> binary_alphabet() { return {"0", "1"}; }

std::vector<std::string> bp_alphabet() {
    std::vector<std::string> a;
    for (char c = 'a'; c <= 'z'; ++c) a.emplace_back(1, c);
    a.emplace_back("(");
    a.emplace_back(")");
    return a;
}

std::vector<std::string> letters_alphabet() {
    std::vector<std::string> a;
    for (char c = 'a'; c <= 'z'; ++c) a.emplace_back(1, c);
    return a;
}

std::vector<int> string_to_ids(std::string_view s, const std::map<char, int>& ids) {
    std::vector<int> out;
    out.reserve(s.size());
    for (char c : s) out.push_back(ids.at(c));
    return out;
}

std::map<char, int> char_id_map(const std::vector<std::string>& alphabet) {
    std::map<char, int> m;
    for (std::size_t i = 0; i < alphabet.size(); ++i) m[alphabet[i][0]] = static_cast<int>(i);
    return m;
}

// Exact per-length class machinery on a ground-truth DFA: member[r][s] is
// the number of accepting completions of length r from state s (doubles
// stay exact up to 2^53; lengths here are <= ~30). Enables uniform
// enumeration or sampling inside either class of any length.
struct ClassCounts {
    const Dfa* dfa;
    bool members; // true: accepting strings, false: rejected strings
    std::vector<std::vector<double>> count; // [remaining][state]

    ClassCounts(const Dfa& d, int len, bool accepted) : dfa(&d), members(accepted) {
        const int n = d.num_states();
        count.assign(static_cast<std::size_t>(len) + 1, std::vector<double>(static_cast<std::size_t>(n), 0.0));
        for (int s = 0; s < n; ++s) {
            const bool acc = d.accept[static_cast<std::size_t>(s)];
            count[0][static_cast<std::size_t>(s)] = (acc == accepted) ? 1.0 : 0.0;
        }
        for (int r = 1; r <= len; ++r) {
            for (int s = 0; s < n; ++s) {
                double total = 0.0;
                for (int t : d.delta[static_cast<std::size_t>(s)]) {
                    total += count[static_cast<std::size_t>(r - 1)][static_cast<std::size_t>(t)];
                }
                count[static_cast<std::size_t>(r)][static_cast<std::size_t>(s)] = total;
            }
        }
    }

    double total(int len) const { return count[static_cast<std::size_t>(len)][static_cast<std::size_t>(dfa->start)]; }

    std::string sample(int len, Rng& rng) const {
        std::string out;
        int state = dfa->start;
        for (int r = len; r > 0; --r) {
            const double c0 = count[static_cast<std::size_t>(r - 1)]
                                   [static_cast<std::size_t>(dfa->delta[static_cast<std::size_t>(state)][0])];
            const double c1 = count[static_cast<std::size_t>(r - 1)]
                                   [static_cast<std::size_t>(dfa->delta[static_cast<std::size_t>(state)][1])];
            const bool one = rng.uniform() * (c0 + c1) >= c0;
            out += one ? '1' : '0';
            state = dfa->delta[static_cast<std::size_t>(state)][one ? 1 : 0];
        }
        return out;
    }

    void enumerate(int len, std::vector<std::string>& out) const {
        std::string buf(static_cast<std::size_t>(len), '0');
        enumerate_from(dfa->start, len, buf, out);
    }

private:
    void enumerate_from(int state, int remaining, std::string& buf,
                        std::vector<std::string>& out) const {
        if (count[static_cast<std::size_t>(remaining)][static_cast<std::size_t>(state)] == 0.0) return;
        if (remaining == 0) {
            out.push_back(buf);
            return;
        }
        const std::size_t pos = buf.size() - static_cast<std::size_t>(remaining);
        for (int a = 0; a < 2; ++a) {
            buf[pos] = a == 0 ? '0' : '1';
            enumerate_from(dfa->delta[static_cast<std::size_t>(state)][static_cast<std::size_t>(a)],
                           remaining - 1, buf, out);
        }
        buf[pos] = '0';
    }
};

// Dyck-path step counts under a height cap: paths[i][h] = number of
// balanced continuations with i steps left starting at height h. Doubles
// lose exactness for long paths; good enough to steer sampling.
std::vector<std::vector<double>> dyck_path_table(int steps, int cap) {
    std::vector<std::vector<double>> f(static_cast<std::size_t>(steps) + 1,
                                       std::vector<double>(static_cast<std::size_t>(cap) + 1, 0.0));
    f[0][0] = 1.0;
    for (int i = 1; i <= steps; ++i) {
        for (int h = 0; h <= cap; ++h) {
            double total = 0.0;
            if (h + 1 <= cap) total += f[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(h + 1)];
            if (h - 1 >= 0) total += f[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(h - 1)];
            f[static_cast<std::size_t>(i)][static_cast<std::size_t>(h)] = total;
        }
    }
    return f;
}

// Balanced parenthesis skeleton with max depth exactly `depth`.
std::string dyck_word_with_depth(int pairs, int depth, Rng& rng) {
    const int steps = 2 * pairs;
    const auto table = dyck_path_table(steps, depth);
    for (int attempt = 0; attempt < 200; ++attempt) {
        std::string word;
        int h = 0;
        int reached = 0;
        for (int left = steps; left > 0; --left) {
            const double up = h + 1 <= depth ? table[static_cast<std::size_t>(left - 1)][static_cast<std::size_t>(h + 1)] : 0.0;
            const double down = h - 1 >= 0 ? table[static_cast<std::size_t>(left - 1)][static_cast<std::size_t>(h - 1)] : 0.0;
            const bool open = rng.uniform() * (up + down) < up;
            if (open) {
                word += '(';
                ++h;
                reached = std::max(reached, h);
            } else {
                word += ')';
                --h;
            }
        }
        if (reached == depth) return word;
    }
    // cap-conditioned sampling rarely misses the target depth; force the
    // spike shape as a last resort
    std::string word;
    for (int i = 0; i < depth; ++i) word += '(';
    for (int i = 0; i < depth; ++i) word += ')';
    for (int i = depth; i < pairs; ++i) word = "()" + word;
    return word;
}

std::string intersperse_letters(const std::string& skeleton, int letters, Rng& rng) {
    std::string out = skeleton;
    for (int i = 0; i < letters; ++i) {
        const char letter = static_cast<char>('a' + rng.uniform_int(26));
        const int pos = rng.uniform_int(static_cast<int>(out.size()) + 1);
        out.insert(out.begin() + pos, letter);
    }
    return out;
}

std::string corrupt_balanced(const std::string& positive, Rng& rng) {
    for (int attempt = 0; attempt < 100; ++attempt) {
        std::string s = positive;
        std::vector<int> paren_pos;
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (s[i] == '(' || s[i] == ')') paren_pos.push_back(static_cast<int>(i));
        }
        if (paren_pos.empty()) return s + ")";
        const int kind = rng.uniform_int(3);
        if (kind == 0) { // drop one paren
            const int p = paren_pos[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(paren_pos.size())))];
            s.erase(s.begin() + p);
        } else if (kind == 1) { // flip one paren
            const int p = paren_pos[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(paren_pos.size())))];
            s[static_cast<std::size_t>(p)] = s[static_cast<std::size_t>(p)] == '(' ? ')' : '(';
        } else { // swap one matched pair
            std::vector<std::pair<int, int>> pairs;
            std::vector<int> stack;
            for (std::size_t i = 0; i < s.size(); ++i) {
                if (s[i] == '(') {
                    stack.push_back(static_cast<int>(i));
                } else if (s[i] == ')') {
                    if (!stack.empty()) {
                        pairs.emplace_back(stack.back(), static_cast<int>(i));
                        stack.pop_back();
                    }
                }
            }
            if (pairs.empty()) continue;
            const auto [open, close] = pairs[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(pairs.size())))];
            std::swap(s[static_cast<std::size_t>(open)], s[static_cast<std::size_t>(close)]);
        }
        if (!bp_accepts(s).first) return s;
    }
    throw Error("bp: could not corrupt a positive into a negative");
}

} // namespace

Dataset gen_tomita(const DatasetSpec& spec) {
    if (spec.grammar < 1 || spec.grammar > 7) throw Error("gen_tomita: grammar must be in 1..7");
    Dataset data;
    data.alphabet = binary_alphabet();
    const auto ids = char_id_map(data.alphabet);
    Rng rng(spec.seed);
    const std::vector<int> lengths = spec.lengths.empty() ? tomita_train_lengths() : spec.lengths;

    const Dfa truth = tomita_dfa(spec.grammar);
    std::vector<std::pair<std::string, int>> rows;
    for (int len : lengths) {
        for (const bool accepted : {true, false}) {
            const ClassCounts cls(truth, len, accepted);
            const double available = cls.total(len);
            std::vector<std::string> bucket;
            if (available == 0.0) {
                data.warnings.push_back(std::string("no ") + (accepted ? "positive" : "negative") +
                                        " sequences of length " + std::to_string(len));
            } else if (available <= static_cast<double>(spec.per_class_per_length)) {
                cls.enumerate(len, bucket); // the whole class fits
            } else {
                std::set<std::string> seen;
                const int attempts = spec.per_class_per_length * 50;
                for (int i = 0; i < attempts &&
                                static_cast<int>(bucket.size()) < spec.per_class_per_length;
                     ++i) {
                    std::string s = cls.sample(len, rng);
                    if (seen.insert(s).second) bucket.push_back(std::move(s));
                }
            }
            for (auto& s : bucket) rows.emplace_back(std::move(s), accepted ? 1 : 0);
        }
    }
    rng.shuffle(rows);
    for (const auto& [s, label] : rows) {
        data.seqs.push_back(LabeledSequence{string_to_ids(s, ids), label, {}});
    }
    return data;
}

Dataset gen_bp(const DatasetSpec& spec) {
    if (spec.depth_lo < 1 || spec.depth_hi < spec.depth_lo) throw Error("gen_bp: bad depth bounds");
    if (spec.max_len < 2 * spec.depth_hi) {
        throw Error("gen_bp: max_len " + std::to_string(spec.max_len) +
                    " cannot hold depth " + std::to_string(spec.depth_hi));
    }
    Dataset data;
    data.alphabet = bp_alphabet();
    const auto ids = char_id_map(data.alphabet);
    Rng rng(spec.seed);

    const int n_pos = static_cast<int>(std::lround(spec.count * spec.positive_fraction));
    const int n_neg = spec.count - n_pos;
    const int max_pairs = spec.max_len / 2;

    std::set<std::string> seen;
    std::vector<std::string> positives;
    auto gen_positive = [&] {
        for (int attempt = 0; attempt < 200; ++attempt) {
            const int depth = spec.depth_lo + rng.uniform_int(spec.depth_hi - spec.depth_lo + 1);
            const int pairs = depth + rng.uniform_int(max_pairs - depth + 1);
            const std::string skeleton = dyck_word_with_depth(pairs, depth, rng);
            const int room = spec.max_len - 2 * pairs;
            const std::string s = intersperse_letters(skeleton, room > 0 ? rng.uniform_int(room + 1) : 0, rng);
            const auto [ok, d] = bp_accepts(s);
            if (!ok || d < spec.depth_lo || d > spec.depth_hi) {
                throw Error("gen_bp: generator produced an out-of-contract positive");
            }
            if (seen.insert(s).second || attempt == 199) return s;
        }
        throw Error("gen_bp: unreachable");
    };
    for (int i = 0; i < n_pos; ++i) positives.push_back(gen_positive());

    std::vector<std::pair<std::string, int>> rows;
    for (const auto& s : positives) rows.emplace_back(s, 1);
    for (int i = 0; i < n_neg; ++i) {
        const std::string& base =
            positives.empty() ? gen_positive() : positives[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(positives.size())))];
        for (int attempt = 0; attempt < 200; ++attempt) {
            std::string s = corrupt_balanced(base, rng);
            if (seen.insert(s).second || attempt == 199) {
                rows.emplace_back(std::move(s), 0);
                break;
            }
        }
    }
    rng.shuffle(rows);
    for (const auto& [s, label] : rows) {
        data.seqs.push_back(LabeledSequence{string_to_ids(s, ids), label, {}});
    }
    return data;
}

Dataset gen_palindrome(const DatasetSpec& spec) {
    if (spec.half_lo < 1 || spec.half_hi < spec.half_lo) throw Error("gen_palindrome: bad bounds");
    Dataset data;
    data.alphabet = letters_alphabet();
    const auto ids = char_id_map(data.alphabet);
    Rng rng(spec.seed);

    auto random_word = [&](int len) {
        std::string s(static_cast<std::size_t>(len), 'a');
        for (auto& c : s) c = static_cast<char>('a' + rng.uniform_int(26));
        return s;
    };
    auto is_palindrome = [](const std::string& s) {
        for (std::size_t i = 0, j = s.size(); i < j; ++i, --j) {
            if (s[i] != s[j - 1]) return false;
        }
        return true;
    };

    const int n_pos = static_cast<int>(std::lround(spec.count * spec.positive_fraction));
    std::vector<std::pair<std::string, int>> rows;
    for (int i = 0; i < n_pos; ++i) {
        const std::string w = random_word(spec.half_lo + rng.uniform_int(spec.half_hi - spec.half_lo + 1));
        std::string s = w;
        s.append(w.rbegin(), w.rend());
        rows.emplace_back(std::move(s), 1);
    }
    for (int i = 0; i < spec.count - n_pos; ++i) {
        std::string s;
        do {
            s = random_word(2 * (spec.half_lo + rng.uniform_int(spec.half_hi - spec.half_lo + 1)));
        } while (is_palindrome(s));
        rows.emplace_back(std::move(s), 0);
    }
    rng.shuffle(rows);
    for (const auto& [s, label] : rows) {
        data.seqs.push_back(LabeledSequence{string_to_ids(s, ids), label, {}});
    }
    return data;
}

Dataset gen_copy_memory(int lag, int span, int count, Rng& rng) {
    if (lag < 1 || span < 1) throw Error("gen_copy_memory: lag and span must be >= 1");
    Dataset data;
    for (int i = 0; i <= 9; ++i) data.alphabet.push_back("c" + std::to_string(i));
    const int blank = 0;
    const int marker = 9;
    const int total = lag + 2 * span;
    for (int i = 0; i < count; ++i) {
        LabeledSequence seq;
        seq.tokens.assign(static_cast<std::size_t>(total), blank);
        seq.targets.assign(static_cast<std::size_t>(total), blank);
        for (int j = 0; j < span; ++j) {
            const int sym = 1 + rng.uniform_int(8); // c1..c8
            seq.tokens[static_cast<std::size_t>(j)] = sym;
            seq.targets[static_cast<std::size_t>(lag + span + j)] = sym;
        }
        seq.tokens[static_cast<std::size_t>(span + lag - 1)] = marker;
        data.seqs.push_back(std::move(seq));
    }
    return data;
}

double copy_baseline_ce(int lag, int span) {
    return span * std::log(8.0) / static_cast<double>(lag + 2 * span);
}

void write_dataset(const std::string& path, const Dataset& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("write_dataset: cannot open " + path);
    out << "#alphabet: ";
    for (std::size_t i = 0; i < data.alphabet.size(); ++i) {
        if (i > 0) out << ",";
        out << data.alphabet[i];
    }
    out << "\n";
    for (const auto& s : data.seqs) {
        if (!s.targets.empty()) {
            out << "T:";
            for (std::size_t i = 0; i < s.targets.size(); ++i) {
                if (i > 0) out << " ";
                out << data.alphabet[static_cast<std::size_t>(s.targets[i])];
            }
        } else {
            out << s.label;
        }
        out << "\t";
        for (std::size_t i = 0; i < s.tokens.size(); ++i) {
            if (i > 0) out << " ";
            out << data.alphabet[static_cast<std::size_t>(s.tokens[i])];
        }
        out << "\n";
    }
    if (!out) throw Error("write_dataset: write failed for " + path);
}

namespace {

std::vector<int> parse_tokens(const std::string& field, const std::map<std::string, int>& ids,
                              int line_no) {
    std::vector<int> out;
    std::istringstream ss(field);
    std::string tok;
    while (ss >> tok) {
        auto it = ids.find(tok);
        if (it == ids.end()) {
            throw Error("read_dataset: line " + std::to_string(line_no) + ": token '" + tok +
                        "' not in alphabet header");
        }
        out.push_back(it->second);
    }
    return out;
}

} // namespace

Dataset read_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("read_dataset: cannot open " + path);
    Dataset data;
    std::string line;
    if (!std::getline(in, line)) return data; // empty file -> empty dataset
    const std::string header = "#alphabet: ";
    if (line.rfind(header, 0) != 0) {
        throw Error("read_dataset: line 1: missing alphabet header");
    }
    std::istringstream hs(line.substr(header.size()));
    std::string tok;
    while (std::getline(hs, tok, ',')) {
        if (!tok.empty()) data.alphabet.push_back(tok);
    }
    std::map<std::string, int> ids;
    for (std::size_t i = 0; i < data.alphabet.size(); ++i) ids[data.alphabet[i]] = static_cast<int>(i);

    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos) {
            throw Error("read_dataset: line " + std::to_string(line_no) + ": missing tab separator");
        }
        const std::string head = line.substr(0, tab);
        const std::string body = line.substr(tab + 1);
        LabeledSequence seq;
        seq.tokens = parse_tokens(body, ids, line_no);
        if (head.rfind("T:", 0) == 0) {
            seq.targets = parse_tokens(head.substr(2), ids, line_no);
            if (seq.targets.size() != seq.tokens.size()) {
                throw Error("read_dataset: line " + std::to_string(line_no) +
                            ": target/token length mismatch");
            }
        } else if (head == "0" || head == "1") {
            seq.label = head == "1" ? 1 : 0;
        } else {
            throw Error("read_dataset: line " + std::to_string(line_no) + ": bad label '" + head + "'");
        }
        data.seqs.push_back(std::move(seq));
    }
    return data;
}

} // namespace srnn
