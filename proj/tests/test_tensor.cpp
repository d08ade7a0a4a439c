#include <doctest.h>

#include "srnn/rng.hpp"
#include "srnn/tensor.hpp"

#include <cmath>
#include <vector>

using namespace srnn;

namespace {

Arr random_arr(int rows, int cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Arr a = cols == 0 ? Arr::vec(rows) : Arr::mat(rows, cols);
    for (auto& x : a.v) x = rng.uniform(lo, hi);
    return a;
}

// Builds loss = sum(out .* weights) for the op under test and runs the
// central-difference comparison over every input parameter.
double fd_error_for(const std::function<Tensor(Tape&, std::vector<Parameter>&)>& build,
                    std::vector<Parameter>& params, const Arr& weights) {
    std::vector<Parameter*> ptrs;
    for (auto& p : params) ptrs.push_back(&p);
    auto closure = [&](bool want_grad) {
        Tape tape;
        Tensor out = build(tape, params);
        Tensor w = tape.constant(weights);
        Tensor loss = tape.sum(tape.mul(out, w));
        const double v = loss.scalar();
        if (want_grad) tape.backward(loss);
        return v;
    };
    return check_gradients(closure, ptrs, 1e-5).max_rel_err;
}

} // namespace

TEST_SUITE("tensor") {

TEST_CASE("sigmoid at zero") {
    Tape t;
    Tensor y = t.sigmoid(t.constant_vec({0.0}));
    CHECK(y.value(0) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("softmax with temperature: equal scores are uniform") {
    Tape t;
    Tensor y = t.softmax_temp(t.constant_vec({1.0, 1.0, 1.0}), 0.5);
    for (int i = 0; i < 3; ++i) CHECK(y.value(i) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("matvec hand arithmetic") {
    Tape t;
    Arr a = Arr::mat(2, 2);
    a.v = {1, 2, 3, 4};
    Tensor y = t.matvec(t.constant(a), t.constant_vec({1.0, 1.0}));
    CHECK(y.value(0) == 3.0);
    CHECK(y.value(1) == 7.0);
}

TEST_CASE("backward: sum of squares") {
    Parameter w("w", Arr::vec({1.0, -2.0}));
    Tape t;
    Tensor wt = t.param(w);
    Tensor loss = t.sum(t.mul(wt, wt));
    CHECK(loss.scalar() == 5.0);
    t.backward(loss);
    CHECK(w.grad.v[0] == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(w.grad.v[1] == doctest::Approx(-4.0).epsilon(1e-15));
}

TEST_CASE("backward: sigmoid derivative at zero is 1/4") {
    Parameter w("w", Arr::vec({0.0}));
    Tape t;
    Tensor loss = t.sum(t.sigmoid(t.param(w)));
    t.backward(loss);
    CHECK(w.grad.v[0] == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("check_gradients exact for quadratics") {
    Parameter w("w", Arr::vec({1.0, -0.5, 2.0}));
    std::vector<Parameter*> ps = {&w};
    auto f = [&](bool want_grad) {
        Tape t;
        Tensor wt = t.param(w);
        Tensor loss = t.sum(t.mul(wt, wt));
        const double v = loss.scalar();
        if (want_grad) t.backward(loss);
        return v;
    };
    CHECK(check_gradients(f, ps, 1e-4).max_rel_err < 1e-10);
}

TEST_CASE("check_gradients rejects eps outside range") {
    Parameter w("w", Arr::vec({1.0}));
    std::vector<Parameter*> ps = {&w};
    auto f = [&](bool) { return 0.0; };
    CHECK_THROWS_AS(check_gradients(f, ps, 1e-2), Error);
    CHECK_THROWS_AS(check_gradients(f, ps, 1e-8), Error);
}

TEST_CASE("check_gradients rejects non-deterministic closure") {
    Parameter w("w", Arr::vec({1.0}));
    std::vector<Parameter*> ps = {&w};
    int calls = 0;
    auto f = [&](bool) { return static_cast<double>(calls++); };
    CHECK_THROWS_AS(check_gradients(f, ps, 1e-5), Error);
}

TEST_CASE("finite-difference agreement for every op kind") {
    Rng rng(42);
    const double tol = 1e-6;

    SUBCASE("matvec") {
        std::vector<Parameter> ps;
        ps.emplace_back("a", random_arr(3, 4, rng));
        ps.emplace_back("x", random_arr(4, 0, rng));
        Arr w = random_arr(3, 0, rng);
        auto build = [](Tape& t, std::vector<Parameter>& p) {
            return t.matvec(t.param(p[0]), t.param(p[1]));
        };
        CHECK(fd_error_for(build, ps, w) < tol);
    }
    SUBCASE("matvec-t") {
        std::vector<Parameter> ps;
        ps.emplace_back("a", random_arr(3, 4, rng));
        ps.emplace_back("x", random_arr(3, 0, rng));
        Arr w = random_arr(4, 0, rng);
        auto build = [](Tape& t, std::vector<Parameter>& p) {
            return t.matvec_t(t.param(p[0]), t.param(p[1]));
        };
        CHECK(fd_error_for(build, ps, w) < tol);
    }
    SUBCASE("matmul") {
        std::vector<Parameter> ps;
        ps.emplace_back("a", random_arr(2, 3, rng));
        ps.emplace_back("b", random_arr(3, 4, rng));
        Arr w = random_arr(2, 4, rng);
        auto build = [](Tape& t, std::vector<Parameter>& p) {
            return t.matmul(t.param(p[0]), t.param(p[1]));
        };
        CHECK(fd_error_for(build, ps, w) < tol);
    }
    SUBCASE("matmul-bt") {
        std::vector<Parameter> ps;
        ps.emplace_back("a", random_arr(2, 3, rng));
        ps.emplace_back("b", random_arr(4, 3, rng));
        Arr w = random_arr(2, 4, rng);
        auto build = [](Tape& t, std::vector<Parameter>& p) {
            return t.matmul_bt(t.param(p[0]), t.param(p[1]));
        };
        CHECK(fd_error_for(build, ps, w) < tol);
    }
    SUBCASE("add sub mul same shape") {
        std::vector<Parameter> ps;
        ps.emplace_back("a", random_arr(5, 0, rng));
        ps.emplace_back("b", random_arr(5, 0, rng));
        Arr w = random_arr(5, 0, rng);
        auto add = [](Tape& t, std::vector<Parameter>& p) { return t.add(t.param(p[0]), t.param(p[1])); };
        auto sub = [](Tape& t, std::vector<Parameter>& p) { return t.sub(t.param(p[0]), t.param(p[1])); };
        auto mul = [](Tape& t, std::vector<Parameter>& p) { return t.mul(t.param(p[0]), t.param(p[1])); };
        CHECK(fd_error_for(add, ps, w) < tol);
        CHECK(fd_error_for(sub, ps, w) < tol);
        CHECK(fd_error_for(mul, ps, w) < tol);
    }
    SUBCASE("add and mul with row broadcast") {
        std::vector<Parameter> ps;
        ps.emplace_back("a", random_arr(3, 4, rng));
        ps.emplace_back("b", random_arr(4, 0, rng));
        Arr w = random_arr(3, 4, rng);
        auto add = [](Tape& t, std::vector<Parameter>& p) { return t.add(t.param(p[0]), t.param(p[1])); };
        auto mul = [](Tape& t, std::vector<Parameter>& p) { return t.mul(t.param(p[0]), t.param(p[1])); };
        CHECK(fd_error_for(add, ps, w) < tol);
        CHECK(fd_error_for(mul, ps, w) < tol);
    }
    SUBCASE("unary elementwise") {
        std::vector<Parameter> ps;
        ps.emplace_back("x", random_arr(6, 0, rng, 0.1, 1.5)); // positive, sqrt-safe
        Arr w = random_arr(6, 0, rng);
        auto sig = [](Tape& t, std::vector<Parameter>& p) { return t.sigmoid(t.param(p[0])); };
        auto tan = [](Tape& t, std::vector<Parameter>& p) { return t.tanh(t.param(p[0])); };
        auto ex = [](Tape& t, std::vector<Parameter>& p) { return t.exp(t.param(p[0])); };
        auto sq = [](Tape& t, std::vector<Parameter>& p) { return t.sqrt(t.param(p[0])); };
        auto neg = [](Tape& t, std::vector<Parameter>& p) { return t.negate(t.param(p[0])); };
        auto sc = [](Tape& t, std::vector<Parameter>& p) { return t.scale(t.param(p[0]), -2.5); };
        CHECK(fd_error_for(sig, ps, w) < tol);
        CHECK(fd_error_for(tan, ps, w) < tol);
        CHECK(fd_error_for(ex, ps, w) < tol);
        CHECK(fd_error_for(sq, ps, w) < tol);
        CHECK(fd_error_for(neg, ps, w) < tol);
        CHECK(fd_error_for(sc, ps, w) < tol);
    }
    SUBCASE("sum") {
        std::vector<Parameter> ps;
        ps.emplace_back("x", random_arr(2, 3, rng));
        Arr w = Arr::vec({1.7});
        auto build = [](Tape& t, std::vector<Parameter>& p) { return t.sum(t.param(p[0])); };
        CHECK(fd_error_for(build, ps, w) < tol);
    }
    SUBCASE("concat vectors") {
        std::vector<Parameter> ps;
        ps.emplace_back("x", random_arr(2, 0, rng));
        ps.emplace_back("y", random_arr(3, 0, rng));
        Arr w = random_arr(5, 0, rng);
        auto build = [](Tape& t, std::vector<Parameter>& p) {
            const Tensor in[2] = {t.param(p[0]), t.param(p[1])};
            return t.concat(std::span<const Tensor>(in, 2));
        };
        CHECK(fd_error_for(build, ps, w) < tol);
    }
    SUBCASE("concat matrices column-wise") {
        std::vector<Parameter> ps;
        ps.emplace_back("x", random_arr(2, 2, rng));
        ps.emplace_back("y", random_arr(2, 3, rng));
        Arr w = random_arr(2, 5, rng);
        auto build = [](Tape& t, std::vector<Parameter>& p) {
            const Tensor in[2] = {t.param(p[0]), t.param(p[1])};
            return t.concat(std::span<const Tensor>(in, 2));
        };
        CHECK(fd_error_for(build, ps, w) < tol);
    }
    SUBCASE("row-select") {
        std::vector<Parameter> ps;
        ps.emplace_back("m", random_arr(4, 3, rng));
        Arr w = random_arr(3, 0, rng);
        auto build = [](Tape& t, std::vector<Parameter>& p) { return t.row_select(t.param(p[0]), 2); };
        CHECK(fd_error_for(build, ps, w) < tol);
    }
    SUBCASE("rows-gather with repeated index") {
        std::vector<Parameter> ps;
        ps.emplace_back("m", random_arr(4, 3, rng));
        Arr w = random_arr(3, 3, rng);
        auto build = [](Tape& t, std::vector<Parameter>& p) {
            const int idx[3] = {1, 3, 1};
            return t.rows_gather(t.param(p[0]), std::span<const int>(idx, 3));
        };
        CHECK(fd_error_for(build, ps, w) < tol);
    }
    SUBCASE("softmax with temperature") {
        std::vector<Parameter> ps;
        ps.emplace_back("x", random_arr(5, 0, rng));
        Arr w = random_arr(5, 0, rng);
        auto build = [](Tape& t, std::vector<Parameter>& p) { return t.softmax_temp(t.param(p[0]), 0.7); };
        CHECK(fd_error_for(build, ps, w) < tol);
    }
    SUBCASE("softmax with temperature, batched rows") {
        std::vector<Parameter> ps;
        ps.emplace_back("x", random_arr(3, 4, rng));
        Arr w = random_arr(3, 4, rng);
        auto build = [](Tape& t, std::vector<Parameter>& p) { return t.softmax_temp(t.param(p[0]), 1.3); };
        CHECK(fd_error_for(build, ps, w) < tol);
    }
    SUBCASE("squared euclidean rows") {
        std::vector<Parameter> ps;
        ps.emplace_back("m", random_arr(4, 3, rng));
        ps.emplace_back("x", random_arr(3, 0, rng));
        Arr w = random_arr(4, 0, rng);
        auto build = [](Tape& t, std::vector<Parameter>& p) {
            return t.sq_euclid_rows(t.param(p[0]), t.param(p[1]));
        };
        CHECK(fd_error_for(build, ps, w) < tol);
    }
    SUBCASE("squared euclidean rows, batched") {
        std::vector<Parameter> ps;
        ps.emplace_back("m", random_arr(4, 3, rng));
        ps.emplace_back("x", random_arr(2, 3, rng));
        Arr w = random_arr(2, 4, rng);
        auto build = [](Tape& t, std::vector<Parameter>& p) {
            return t.sq_euclid_rows(t.param(p[0]), t.param(p[1]));
        };
        CHECK(fd_error_for(build, ps, w) < tol);
    }
    SUBCASE("cross entropy with logits") {
        std::vector<Parameter> ps;
        ps.emplace_back("l", random_arr(4, 0, rng));
        Arr w = Arr::vec({1.0});
        auto build = [](Tape& t, std::vector<Parameter>& p) {
            return t.cross_entropy_logits(t.param(p[0]), 2);
        };
        CHECK(fd_error_for(build, ps, w) < tol);
    }
    SUBCASE("cross entropy with logits, batched") {
        std::vector<Parameter> ps;
        ps.emplace_back("l", random_arr(3, 4, rng));
        Arr w = random_arr(3, 0, rng);
        auto build = [](Tape& t, std::vector<Parameter>& p) {
            const int targets[3] = {0, 3, 1};
            return t.cross_entropy_logits(t.param(p[0]), std::span<const int>(targets, 3));
        };
        CHECK(fd_error_for(build, ps, w) < tol);
    }
}

TEST_CASE("softmax simplex and shift invariance") {
    Rng rng(7);
    for (int rep = 0; rep < 20; ++rep) {
        Arr scores = random_arr(6, 0, rng, -3.0, 3.0);
        const double tau = rng.uniform(0.01, 5.0);
        Tape t;
        Tensor y = t.softmax_temp(t.constant(scores), tau);
        double total = 0.0;
        for (int i = 0; i < 6; ++i) {
            CHECK(y.value(i) >= 0.0);
            total += y.value(i);
        }
        CHECK(std::fabs(total - 1.0) <= 1e-12);

        Arr shifted = scores;
        const double c = rng.uniform(-10.0, 10.0);
        for (auto& x : shifted.v) x += c;
        Tensor y2 = t.softmax_temp(t.constant(shifted), tau);
        for (int i = 0; i < 6; ++i) {
            CHECK(y2.value(i) == doctest::Approx(y.value(i)).epsilon(1e-10));
        }
    }
}

TEST_CASE("softmax survives extreme temperature without overflow") {
    Tape t;
    Tensor y = t.softmax_temp(t.constant_vec({900.0, 100.0}), 1e-3);
    CHECK(y.value(0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(y.value(1) >= 0.0);
}

TEST_CASE("backward is linear in the loss") {
    Rng rng(11);
    Parameter w("w", random_arr(4, 0, rng));
    auto grad_of = [&](double a, double b) {
        w.zero_grad();
        Tape t;
        Tensor wt = t.param(w);
        Tensor l1 = t.sum(t.mul(wt, wt));
        Tensor l2 = t.sum(t.sigmoid(wt));
        Tensor loss = t.add(t.scale(l1, a), t.scale(l2, b));
        t.backward(loss);
        return w.grad.v;
    };
    auto g10 = grad_of(1.0, 0.0);
    auto g01 = grad_of(0.0, 1.0);
    auto g23 = grad_of(2.0, 3.0);
    for (std::size_t i = 0; i < g23.size(); ++i) {
        CHECK(g23[i] == doctest::Approx(2.0 * g10[i] + 3.0 * g01[i]).epsilon(1e-12));
    }
}

TEST_CASE("error paths") {
    Tape t;
    SUBCASE("shape mismatch") {
        Arr a = Arr::mat(2, 3);
        CHECK_THROWS_AS(t.matvec(t.constant(a), t.constant_vec({1.0, 2.0})), Error);
    }
    SUBCASE("unknown op kind") {
        Tensor x = t.constant_vec({1.0});
        const Tensor in[1] = {x};
        CHECK_THROWS_AS(t.apply("frobnicate", std::span<const Tensor>(in, 1)), Error);
    }
    SUBCASE("non-finite output is a hard error") {
        Tensor x = t.constant_vec({1000.0});
        CHECK_THROWS_AS(t.exp(x), Error);
    }
    SUBCASE("non-scalar loss") {
        Tensor x = t.constant_vec({1.0, 2.0});
        CHECK_THROWS_AS(t.backward(x), Error);
    }
    SUBCASE("tau must be positive") {
        Tensor x = t.constant_vec({1.0, 2.0});
        CHECK_THROWS_AS(t.softmax_temp(x, 0.0), Error);
        CHECK_THROWS_AS(t.softmax_temp(x, -1.0), Error);
    }
    SUBCASE("row select out of range") {
        Arr a = Arr::mat(2, 2);
        CHECK_THROWS_AS(t.row_select(t.constant(a), 2), Error);
    }
}

TEST_CASE("apply by op name matches typed call") {
    Tape t;
    Arr a = Arr::mat(2, 2);
    a.v = {1, 2, 3, 4};
    Tensor m = t.constant(a);
    Tensor x = t.constant_vec({1.0, 1.0});
    const Tensor in[2] = {m, x};
    Tensor y = t.apply("matvec", std::span<const Tensor>(in, 2));
    CHECK(y.value(0) == 3.0);
    CHECK(y.value(1) == 7.0);
}

TEST_CASE("parameter leaves are memoized per tape") {
    Parameter w("w", Arr::vec({2.0}));
    Tape t;
    Tensor a = t.param(w);
    Tensor b = t.param(w);
    CHECK(a.id == b.id);
    // gradient accumulates once per use in the graph
    Tensor loss = t.sum(t.add(a, b));
    t.backward(loss);
    CHECK(w.grad.v[0] == doctest::Approx(2.0));
}

} // TEST_SUITE
