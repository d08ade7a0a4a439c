#include "srnn/state_reg.hpp"

namespace srnn {

const char* similarity_name(Similarity s) {
    return s == Similarity::dot ? "dot" : "euclidean";
}

bool similarity_from_name(std::string_view name, Similarity* out) {
    if (name == "dot") { *out = Similarity::dot; return true; }
    if (name == "euclidean") { *out = Similarity::euclidean; return true; }
    return false;
}

CentroidSet CentroidSet::init(int k, int d, Rng& rng, double temperature, Similarity similarity) {
    if (k < 2) throw Error("centroids: k must be >= 2");
    if (d < 1) throw Error("centroids: d must be >= 1");
    if (!(temperature > 0.0)) throw Error("centroids: temperature must be > 0");
    Arr m = Arr::mat(k, d);
    for (auto& x : m.v) x = rng.uniform(-0.5, 0.5);
    CentroidSet c;
    c.matrix = Parameter("centroids", std::move(m));
    c.temperature = temperature;
    c.similarity = similarity;
    return c;
}

Tensor transition_probs(Tape& t, CentroidSet& c, Tensor u) {
    if (!(c.temperature > 0.0)) throw Error("transition_probs: temperature must be > 0");
    Tensor s = t.param(c.matrix);
    Tensor scores;
    if (c.similarity == Similarity::dot) {
        scores = u.is_vec() ? t.matvec(s, u) : t.matmul_bt(u, s);
    } else {
        scores = t.negate(t.sqrt(t.sq_euclid_rows(s, u)));
    }
    return t.softmax_temp(scores, c.temperature);
}

Tensor mix_state(Tape& t, Tensor probs, CentroidSet& c) {
    Tensor s = t.param(c.matrix);
    return probs.is_vec() ? t.matvec_t(s, probs) : t.matmul(probs, s);
}

int argmax_index(std::span<const double> xs) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(xs.size()); ++i) {
        if (xs[static_cast<std::size_t>(i)] > xs[static_cast<std::size_t>(best)]) best = i;
    }
    return best;
}

namespace {

std::span<const double> single_distribution(Tensor probs, const CentroidSet& c) {
    const bool ok = (probs.is_vec() && probs.rows() == c.count()) ||
                    (!probs.is_vec() && probs.rows() == 1 && probs.cols() == c.count());
    if (!ok) throw Error("state selection: expected a single distribution over k centroids");
    return probs.values();
}

} // namespace

std::pair<int, Tensor> hard_state(Tape& t, Tensor probs, CentroidSet& c) {
    const int j = argmax_index(single_distribution(probs, c));
    return {j, t.row_select(t.param(c.matrix), j)};
}

std::pair<int, Tensor> sample_state(Tape& t, Tensor probs, CentroidSet& c, Rng& rng) {
    if (t.grad_enabled()) {
        throw Error("sample_state: not differentiable, refuse during gradient recording");
    }
    auto a = single_distribution(probs, c);
    const double x = rng.uniform();
    double acc = 0.0;
    int j = static_cast<int>(a.size()) - 1;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += a[i];
        if (x < acc) {
            j = static_cast<int>(i);
            break;
        }
    }
    return {j, t.row_select(t.param(c.matrix), j)};
}

} // namespace srnn
