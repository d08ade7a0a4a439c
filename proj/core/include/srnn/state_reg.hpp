#pragma once

#include "srnn/rng.hpp"
#include "srnn/tensor.hpp"

#include <string_view>
#include <utility>

namespace srnn {

enum class Similarity { dot, euclidean };

const char* similarity_name(Similarity s);
bool similarity_from_name(std::string_view name, Similarity* out);

// The stochastic component's learnable states: k centroids of size d
// (centroid i is row i of `matrix`), a softmax temperature, and the
// score function used to compare a candidate hidden state against them.
struct CentroidSet {
    Parameter matrix; // [k x d]
    double temperature = 1.0;
    Similarity similarity = Similarity::dot;

    int count() const { return matrix.value.rows; }
    int dim() const { return matrix.value.cols; }

    // entries i.i.d. uniform on [-0.5, 0.5]
    static CentroidSet init(int k, int d, Rng& rng, double temperature = 1.0,
                            Similarity similarity = Similarity::dot);
};

// Transition distribution over centroids for a candidate state u.
// dot:       alpha_i prop. exp((u . s_i) / tau)
// euclidean: alpha_i prop. exp(-|u - s_i| / tau)
// u may be a [d] vector (returns [k]) or a [B x d] batch (returns [B x k]).
// Differentiable with respect to both u and the centroid matrix.
Tensor transition_probs(Tape& tape, CentroidSet& centroids, Tensor u);

// Soft state selection: h = sum_i alpha_i s_i, the convex mixture of the
// centroid rows. probs may be [k] or [B x k].
Tensor mix_state(Tape& tape, Tensor probs, CentroidSet& centroids);

// Hard state selection: the argmax centroid, lowest index winning ties.
// probs must describe a single distribution ([k] or [1 x k]).
std::pair<int, Tensor> hard_state(Tape& tape, Tensor probs, CentroidSet& centroids);

// Stochastic state selection: draw j ~ probs, h = s_j. Inference only;
// refuses to run on a gradient-recording tape.
std::pair<int, Tensor> sample_state(Tape& tape, Tensor probs, CentroidSet& centroids, Rng& rng);

int argmax_index(std::span<const double> xs); // lowest index wins ties

} // namespace srnn
