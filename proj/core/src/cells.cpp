#include "srnn/cells.hpp"

#include <algorithm>
#include <cmath>

namespace srnn {

namespace {

constexpr const char* kStartToken = "<s>";
constexpr const char* kEndToken = "</s>";

// weights uniform on [-s, s] with s = 1/sqrt(fan); 0.1 at the usual d=100
Arr uniform_matrix(int rows, int cols, double scale, Rng& rng) {
    Arr a = cols == 0 ? Arr::vec(rows) : Arr::mat(rows, cols);
    for (auto& x : a.v) x = rng.uniform(-scale, scale);
    return a;
}

// gate pre-activation: W x + R h + b (+ optional peephole p (.) c)
Tensor gate_pre(Tape& t, Parameter& w, Parameter& r, Parameter& b, Tensor x, Tensor h,
                Parameter* peep = nullptr, Tensor* c = nullptr) {
    Tensor acc = t.add(t.matmul_bt(x, t.param(w)), t.matmul_bt(h, t.param(r)));
    if (peep != nullptr) {
        acc = t.add(acc, t.mul(*c, t.param(*peep)));
    }
    return t.add(acc, t.param(b));
}

} // namespace

const char* cell_kind_name(CellKind k) {
    switch (k) {
        case CellKind::gru: return "gru";
        case CellKind::lstm: return "lstm";
        case CellKind::lstm_p: return "lstm-p";
    }
    return "?";
}

bool cell_kind_from_name(std::string_view name, CellKind* out) {
    if (name == "gru") { *out = CellKind::gru; return true; }
    if (name == "lstm") { *out = CellKind::lstm; return true; }
    if (name == "lstm-p" || name == "lstm_p") { *out = CellKind::lstm_p; return true; }
    return false;
}

CellParams CellParams::init(CellKind kind, int hidden, int embed, Rng& rng) {
    if (hidden < 1 || embed < 1) throw Error("cell: hidden and embed sizes must be >= 1");
    CellParams p;
    p.kind = kind;
    p.hidden = hidden;
    p.embed = embed;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hidden));
    const int gates = kind == CellKind::gru ? 3 : 4;
    static const char* gru_names[3] = {"update", "reset", "candidate"};
    static const char* lstm_names[4] = {"input", "forget", "output", "candidate"};
    for (int g = 0; g < gates; ++g) {
        const std::string gn = kind == CellKind::gru ? gru_names[g] : lstm_names[g];
        p.w.emplace_back("w_" + gn, uniform_matrix(hidden, embed, scale, rng));
        p.r.emplace_back("r_" + gn, uniform_matrix(hidden, hidden, scale, rng));
        Arr bias = Arr::vec(hidden);
        if (kind != CellKind::gru && g == 1) {
            std::fill(bias.v.begin(), bias.v.end(), 1.0); // forget gate starts open
        }
        p.b.emplace_back("b_" + gn, std::move(bias));
    }
    if (kind == CellKind::lstm_p) {
        static const char* peep_names[3] = {"forget", "input", "output"};
        for (const char* pn : peep_names) {
            p.peep.emplace_back(std::string("peep_") + pn,
                                uniform_matrix(hidden, 0, scale, rng));
        }
    }
    return p;
}

std::vector<Parameter*> CellParams::parameters() {
    std::vector<Parameter*> out;
    for (auto& x : w) out.push_back(&x);
    for (auto& x : r) out.push_back(&x);
    for (auto& x : b) out.push_back(&x);
    for (auto& x : peep) out.push_back(&x);
    return out;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& alphabet, int embed, Rng& rng) {
    Vocabulary v;
    v.tokens = alphabet;
    for (const auto& t : alphabet) {
        if (t == kStartToken || t == kEndToken) {
            throw Error("vocabulary: alphabet may not contain the reserved token " + t);
        }
    }
    v.tokens.push_back(kStartToken);
    v.tokens.push_back(kEndToken);
    v.start_id = static_cast<int>(v.tokens.size()) - 2;
    v.end_id = static_cast<int>(v.tokens.size()) - 1;
    const double scale = 1.0 / std::sqrt(static_cast<double>(embed));
    v.embedding = Parameter("embedding",
                            uniform_matrix(static_cast<int>(v.tokens.size()), embed, scale, rng));
    return v;
}

int Vocabulary::id_of(std::string_view token) const {
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i] == token) return static_cast<int>(i);
    }
    throw Error("vocabulary: unknown token '" + std::string(token) + "'");
}

Tensor embed(Tape& tape, Vocabulary& vocab, int token_id) {
    if (token_id < 0 || token_id >= vocab.size()) {
        throw Error("embed: unknown token id " + std::to_string(token_id));
    }
    return tape.row_select(tape.param(vocab.embedding), token_id);
}

Tensor embed_batch(Tape& tape, Vocabulary& vocab, std::span<const int> token_ids) {
    for (int id : token_ids) {
        if (id < 0 || id >= vocab.size()) {
            throw Error("embed: unknown token id " + std::to_string(id));
        }
    }
    return tape.rows_gather(tape.param(vocab.embedding), token_ids);
}

CellState make_initial_state(Tape& tape, const CellParams& params, int batch) {
    Tensor z = tape.zeros(batch, params.hidden);
    return {z, z};
}

CellState gru_step(Tape& t, CellParams& p, const CellState& s, Tensor x) {
    if (p.kind != CellKind::gru) throw Error("gru_step: wrong cell kind");
    Tensor h = s.hidden;
    Tensor z = t.sigmoid(gate_pre(t, p.w[0], p.r[0], p.b[0], x, h));
    Tensor r = t.sigmoid(gate_pre(t, p.w[1], p.r[1], p.b[1], x, h));
    Tensor cand = t.tanh(t.add(t.add(t.matmul_bt(x, t.param(p.w[2])),
                                     t.matmul_bt(t.mul(r, h), t.param(p.r[2]))),
                               t.param(p.b[2])));
    // u = (1 - z) (.) h + z (.) cand
    Tensor u = t.add(t.sub(h, t.mul(z, h)), t.mul(z, cand));
    return {u, s.cell};
}

namespace {

CellState lstm_common(Tape& t, CellParams& p, const CellState& s, Tensor x, bool peephole) {
    Tensor h = s.hidden;
    Tensor c = s.cell;
    Parameter* pf = peephole ? &p.peep[0] : nullptr;
    Parameter* pi = peephole ? &p.peep[1] : nullptr;
    Parameter* po = peephole ? &p.peep[2] : nullptr;
    Tensor i = t.sigmoid(gate_pre(t, p.w[0], p.r[0], p.b[0], x, h, pi, &c));
    Tensor f = t.sigmoid(gate_pre(t, p.w[1], p.r[1], p.b[1], x, h, pf, &c));
    Tensor g = t.tanh(gate_pre(t, p.w[3], p.r[3], p.b[3], x, h));
    Tensor c_new = t.add(t.mul(f, c), t.mul(i, g));
    Tensor o = t.sigmoid(gate_pre(t, p.w[2], p.r[2], p.b[2], x, h, po, &c_new));
    Tensor u = t.mul(o, t.tanh(c_new));
    return {u, c_new};
}

} // namespace

CellState lstm_step(Tape& t, CellParams& p, const CellState& s, Tensor x) {
    if (p.kind == CellKind::gru) throw Error("lstm_step: wrong cell kind");
    return lstm_common(t, p, s, x, false);
}

CellState lstm_p_step(Tape& t, CellParams& p, const CellState& s, Tensor x) {
    if (p.kind != CellKind::lstm_p) throw Error("lstm_p_step: peephole parameters missing");
    return lstm_common(t, p, s, x, true);
}

CellState cell_step(Tape& t, CellParams& p, const CellState& s, Tensor x) {
    switch (p.kind) {
        case CellKind::gru: return gru_step(t, p, s, x);
        case CellKind::lstm: return lstm_step(t, p, s, x);
        case CellKind::lstm_p: return lstm_p_step(t, p, s, x);
    }
    throw Error("cell_step: bad kind");
}

HeadParams HeadParams::init(HeadKind kind, int in_dim, int out_dim, Rng& rng) {
    HeadParams h;
    h.kind = kind;
    h.in_dim = in_dim;
    h.out_dim = out_dim;
    const double scale = 1.0 / std::sqrt(static_cast<double>(in_dim));
    h.weight = Parameter("head_weight", uniform_matrix(out_dim, in_dim, scale, rng));
    h.bias = Parameter("head_bias", Arr::vec(out_dim));
    return h;
}

std::vector<Parameter*> HeadParams::parameters() { return {&weight, &bias}; }

Tensor classify(Tape& t, HeadParams& head, Tensor u_end, std::optional<Tensor> c_end) {
    Tensor in = u_end;
    if (c_end.has_value()) {
        const Tensor parts[2] = {u_end, *c_end};
        in = t.concat(std::span<const Tensor>(parts, 2));
    }
    if (in.cols() != head.in_dim) throw Error("classify: input width mismatch");
    return t.add(t.matmul_bt(in, t.param(head.weight)), t.param(head.bias));
}

} // namespace srnn
