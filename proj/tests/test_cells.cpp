#include <doctest.h>

#include "srnn/cells.hpp"
#include "srnn/model.hpp"

#include <cmath>

using namespace srnn;

namespace {

Arr random_vec(int n, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Arr a = Arr::vec(n);
    for (auto& x : a.v) x = rng.uniform(lo, hi);
    return a;
}

Arr random_row(int n, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Arr a = Arr::mat(1, n);
    for (auto& x : a.v) x = rng.uniform(lo, hi);
    return a;
}

// 3-step unroll of a cell with random fixed inputs; loss mixes u and c.
double cell_unroll_fd_error(CellKind kind, int d, int e) {
    Rng rng(123);
    CellParams cell = CellParams::init(kind, d, e, rng);
    std::vector<Arr> xs;
    for (int i = 0; i < 3; ++i) xs.push_back(random_row(e, rng));
    Arr wu = random_row(d, rng);
    Arr wc = random_row(d, rng);
    auto closure = [&](bool want_grad) {
        Tape t;
        CellState s = make_initial_state(t, cell, 1);
        for (const Arr& x : xs) s = cell_step(t, cell, s, t.constant(x));
        Tensor loss = t.sum(t.mul(s.hidden, t.constant(wu)));
        if (kind != CellKind::gru) {
            loss = t.add(loss, t.sum(t.mul(s.cell, t.constant(wc))));
        }
        const double v = loss.scalar();
        if (want_grad) t.backward(loss);
        return v;
    };
    std::vector<Parameter*> params = cell.parameters();
    return check_gradients(closure, params, 1e-5).max_rel_err;
}

} // namespace

TEST_SUITE("cells") {

TEST_CASE("vocabulary layout and lookup") {
    Rng rng(1);
    Vocabulary v = Vocabulary::build({"0", "1"}, 4, rng);
    CHECK(v.size() == 4);
    CHECK(v.id_of("0") == 0);
    CHECK(v.id_of("1") == 1);
    CHECK(v.start_id == 2);
    CHECK(v.end_id == 3);
    CHECK(v.alphabet_size() == 2);
    CHECK_THROWS_AS(v.id_of("2"), Error);
    CHECK_THROWS_AS(Vocabulary::build({"a", "<s>"}, 4, rng), Error);
}

TEST_CASE("embed selects the token's row") {
    Rng rng(2);
    Vocabulary v = Vocabulary::build({"a", "b"}, 3, rng);
    Tape t;
    Tensor e0 = embed(t, v, 0);
    Tensor es = embed(t, v, v.start_id);
    for (int j = 0; j < 3; ++j) {
        CHECK(e0.value(j) == v.embedding.value.at(0, j));
        CHECK(es.value(j) == v.embedding.value.at(v.start_id, j));
    }
    CHECK_THROWS_AS(embed(t, v, v.size()), Error);
}

TEST_CASE("gru: zero weights and zero state give zero output") {
    Rng rng(3);
    CellParams cell = CellParams::init(CellKind::gru, 4, 3, rng);
    for (auto* p : cell.parameters()) std::fill(p->value.v.begin(), p->value.v.end(), 0.0);
    Tape t;
    CellState s = make_initial_state(t, cell, 1);
    CellState out = gru_step(t, cell, s, t.constant(Arr::mat(1, 3)));
    for (int j = 0; j < 4; ++j) CHECK(out.hidden.value(j) == 0.0);
}

TEST_CASE("gru: update gate forced closed keeps the previous state") {
    Rng rng(4);
    CellParams cell = CellParams::init(CellKind::gru, 5, 5, rng);
    std::fill(cell.b[0].value.v.begin(), cell.b[0].value.v.end(), -1000.0);
    Arr h = random_row(5, rng, 0.1, 0.9);
    Tape t;
    CellState s{t.constant(h), t.zeros(1, 5)};
    CellState out = gru_step(t, cell, s, t.constant(random_row(5, rng)));
    for (int j = 0; j < 5; ++j) CHECK(out.hidden.value(j) == h.v[static_cast<std::size_t>(j)]);
}

TEST_CASE("lstm: saturated gates hold or clear memory") {
    Rng rng(5);
    CellParams cell = CellParams::init(CellKind::lstm, 4, 4, rng);
    // forget forced to 1, input forced to 0: pure memory hold
    std::fill(cell.b[1].value.v.begin(), cell.b[1].value.v.end(), 1000.0);
    std::fill(cell.b[0].value.v.begin(), cell.b[0].value.v.end(), -1000.0);
    Arr c = random_vec(4, rng, 0.2, 0.8);
    Arr c_row = Arr::mat(1, 4);
    c_row.v = c.v;
    {
        Tape t;
        CellState s{t.constant(random_row(4, rng)), t.constant(c_row)};
        CellState out = lstm_step(t, cell, s, t.constant(random_row(4, rng)));
        for (int j = 0; j < 4; ++j) CHECK(out.cell.value(j) == c.v[static_cast<std::size_t>(j)]);
    }
    {
        // zero cell and closed input gate: output is exactly zero
        Tape t;
        CellState s{t.constant(random_row(4, rng)), t.zeros(1, 4)};
        CellState out = lstm_step(t, cell, s, t.constant(random_row(4, rng)));
        for (int j = 0; j < 4; ++j) CHECK(std::fabs(out.hidden.value(j)) == 0.0);
    }
}

TEST_CASE("lstm-p with zero peepholes equals lstm bitwise") {
    Rng rng(6);
    CellParams cell = CellParams::init(CellKind::lstm_p, 6, 5, rng);
    for (auto& p : cell.peep) std::fill(p.value.v.begin(), p.value.v.end(), 0.0);
    Arr h = random_row(6, rng);
    Arr c = random_row(6, rng, 0.1, 0.9);
    Arr x = random_row(5, rng);
    Tape t1, t2;
    CellState a = lstm_p_step(t1, cell, {t1.constant(h), t1.constant(c)}, t1.constant(x));
    CellState b = lstm_step(t2, cell, {t2.constant(h), t2.constant(c)}, t2.constant(x));
    for (int j = 0; j < 6; ++j) {
        CHECK(a.hidden.value(j) == b.hidden.value(j));
        CHECK(a.cell.value(j) == b.cell.value(j));
    }
}

TEST_CASE("lstm-p: strong positive forget peephole with large cell saturates the gate") {
    Rng rng(7);
    CellParams cell = CellParams::init(CellKind::lstm_p, 4, 4, rng);
    std::fill(cell.peep[0].value.v.begin(), cell.peep[0].value.v.end(), 1000.0); // forget
    std::fill(cell.peep[1].value.v.begin(), cell.peep[1].value.v.end(), 0.0);    // input
    std::fill(cell.b[0].value.v.begin(), cell.b[0].value.v.end(), -1000.0);      // input closed
    Arr c = random_row(4, rng, 0.5, 1.0);
    Tape t;
    CellState s{t.constant(random_row(4, rng)), t.constant(c)};
    CellState out = lstm_p_step(t, cell, s, t.constant(random_row(4, rng)));
    // f == 1 and i == 0, so the cell state passes through untouched
    for (int j = 0; j < 4; ++j) CHECK(out.cell.value(j) == c.v[static_cast<std::size_t>(j)]);
}

TEST_CASE("lstm-p step requires peephole parameters") {
    Rng rng(8);
    CellParams cell = CellParams::init(CellKind::lstm, 4, 4, rng);
    Tape t;
    CellState s = make_initial_state(t, cell, 1);
    CHECK_THROWS_AS(lstm_p_step(t, cell, s, t.constant(Arr::mat(1, 4))), Error);
}

TEST_CASE("gate outputs stay inside their ranges") {
    Rng rng(9);
    for (CellKind kind : {CellKind::gru, CellKind::lstm, CellKind::lstm_p}) {
        CellParams cell = CellParams::init(kind, 8, 8, rng);
        Tape t;
        CellState s{t.constant(random_row(8, rng, -0.9, 0.9)),
                    t.constant(random_row(8, rng, -0.9, 0.9))};
        CellState out = cell_step(t, cell, s, t.constant(random_row(8, rng, -2.0, 2.0)));
        for (int j = 0; j < 8; ++j) {
            CHECK(out.hidden.value(j) > -1.0);
            CHECK(out.hidden.value(j) < 1.0);
        }
    }
}

TEST_CASE("3-step unroll gradients match finite differences") {
    CHECK(cell_unroll_fd_error(CellKind::gru, 5, 4) < 1e-4);
    CHECK(cell_unroll_fd_error(CellKind::lstm, 5, 4) < 1e-4);
    CHECK(cell_unroll_fd_error(CellKind::lstm_p, 5, 4) < 1e-4);
}

TEST_CASE("classify: zero weights give even logits") {
    Rng rng(10);
    HeadParams head = HeadParams::init(HeadKind::binary, 8, 2, rng);
    std::fill(head.weight.value.v.begin(), head.weight.value.v.end(), 0.0);
    Tape t;
    Tensor u = t.constant(random_row(4, rng));
    Tensor c = t.constant(random_row(4, rng));
    Tensor logits = classify(t, head, u, c);
    CHECK(logits.value(0) == 0.0);
    CHECK(logits.value(1) == 0.0);
    Tensor probs = t.softmax_temp(logits, 1.0);
    CHECK(probs.value(0) == doctest::Approx(0.5));
}

TEST_CASE("classify: memory-less head consumes the hidden state only") {
    Rng rng(11);
    HeadParams head = HeadParams::init(HeadKind::binary, 4, 2, rng);
    Tape t;
    Tensor u = t.constant(random_row(4, rng));
    Tensor logits = classify(t, head, u, std::nullopt);
    CHECK(logits.cols() == 2);
    // feeding a cell state into a d-wide head is a shape error
    CHECK_THROWS_AS(classify(t, head, u, t.constant(random_row(4, rng))), Error);
}

TEST_CASE("classify gradients match finite differences") {
    Rng rng(12);
    HeadParams head = HeadParams::init(HeadKind::binary, 8, 2, rng);
    Arr u = random_row(4, rng);
    Arr c = random_row(4, rng);
    auto closure = [&](bool want_grad) {
        Tape t;
        Tensor logits = classify(t, head, t.constant(u), t.constant(c));
        Tensor loss = t.cross_entropy_logits(logits, std::vector<int>{1});
        const double v = loss.scalar();
        if (want_grad) t.backward(loss);
        return v;
    };
    std::vector<Parameter*> params = head.parameters();
    CHECK(check_gradients(closure, params, 1e-5).max_rel_err < 1e-4);
}

} // TEST_SUITE
