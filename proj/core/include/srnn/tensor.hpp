#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace srnn {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dense row-major f64 array, rank 1 or 2. cols == 0 marks a rank-1 vector
// of length rows; everything at desk scale fits in these two ranks.
struct Arr {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Arr() = default;
    static Arr vec(int n) { Arr a; a.rows = n; a.v.assign(static_cast<std::size_t>(n), 0.0); return a; }
    static Arr vec(std::initializer_list<double> xs) {
        Arr a; a.rows = static_cast<int>(xs.size()); a.v.assign(xs); return a;
    }
    static Arr mat(int r, int c) {
        Arr a; a.rows = r; a.cols = c;
        a.v.assign(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), 0.0);
        return a;
    }
    int size() const { return cols == 0 ? rows : rows * cols; }
    bool is_vec() const { return cols == 0; }
    double& at(int i, int j) { return v[static_cast<std::size_t>(i) * cols + j]; }
    double at(int i, int j) const { return v[static_cast<std::size_t>(i) * cols + j]; }
    bool same_shape(const Arr& o) const { return rows == o.rows && cols == o.cols; }
};

// Named trainable tensor. `grad` mirrors `value`'s shape and is the
// accumulator written by Tape::backward; optimizer steps consume and zero it.
struct Parameter {
    std::string name;
    Arr value;
    Arr grad;

    Parameter() = default;
    Parameter(std::string n, Arr val) : name(std::move(n)), value(std::move(val)) {
        grad = value;
        std::fill(grad.v.begin(), grad.v.end(), 0.0);
    }
    void zero_grad() { std::fill(grad.v.begin(), grad.v.end(), 0.0); }
};

enum class Op : std::uint8_t {
    constant,
    leaf_param,
    matvec,          // A[m,n] * x[n] -> [m]
    matvec_t,        // A[m,n]^T * x[m] -> [n]
    matmul,          // A[m,n] * B[n,p] -> [m,p]
    matmul_bt,       // A[m,n] * B[p,n]^T -> [m,p]
    add,             // same shape, or [r,c] + [c] row broadcast
    sub,             // same shape
    mul,             // elementwise; same shape, or [r,c] (.) [c] row broadcast
    sigmoid,
    tanh_fn,
    exp_fn,
    sqrt_fn,
    negate,
    scale,           // aux_f * x
    sum,             // all entries -> scalar [1]
    concat,          // vectors -> vector; matrices with equal rows -> column concat
    row_select,      // (M[r,c], aux_i) -> [c]
    rows_gather,     // (M[r,c], index list) -> [B,c]
    softmax_temp,    // row-wise softmax of x / aux_f, max-subtracted
    sq_euclid_rows,  // (M[k,d], x[d]) -> [k]; (M[k,d], X[B,d]) -> [B,k]
    cross_entropy_logits, // (logits[n], aux_i) -> [1]; (L[B,n], targets) -> [B]
};

const char* op_name(Op op);
bool op_from_name(std::string_view name, Op* out);

class Tape;

// Handle to a node on a tape. Cheap to copy; the tape owns all storage.
struct Tensor {
    Tape* tape = nullptr;
    std::int32_t id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
    int rows() const;
    int cols() const;
    int size() const;
    bool is_vec() const;
    std::span<const double> values() const;
    double value(int i) const { return values()[static_cast<std::size_t>(i)]; }
    double scalar() const;
    Arr to_arr() const;
};

// Extra operands for apply(): the op that needs one documents which field.
struct OpAttr {
    double f = 0.0;                 // scale factor / temperature
    int i = 0;                      // row index / CE target
    std::span<const int> indices{}; // rows_gather / batched CE targets
};

// Reverse-mode tape. Records every op in topological order; values (and,
// during backward, gradients) live in one arena so a tape can be reset and
// reused without reallocating. One tape per execution context.
class Tape {
public:
    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool grad_enabled() const { return grad_enabled_; }

    Tensor constant(const Arr& a);
    Tensor constant_vec(std::initializer_list<double> xs);
    Tensor zeros(int rows, int cols = 0);
    Tensor ones(int rows, int cols = 0);

    // Leaf for a trainable parameter; memoized, so repeated use within one
    // tape shares a node and gradients accumulate.
    Tensor param(Parameter& p);

    Tensor apply(Op op, std::span<const Tensor> inputs, const OpAttr& attr = {});
    Tensor apply(std::string_view op, std::span<const Tensor> inputs, const OpAttr& attr = {});

    Tensor matvec(Tensor a, Tensor x) { return apply2(Op::matvec, a, x); }
    Tensor matvec_t(Tensor a, Tensor x) { return apply2(Op::matvec_t, a, x); }
    Tensor matmul(Tensor a, Tensor b) { return apply2(Op::matmul, a, b); }
    Tensor matmul_bt(Tensor a, Tensor b) { return apply2(Op::matmul_bt, a, b); }
    Tensor add(Tensor a, Tensor b) { return apply2(Op::add, a, b); }
    Tensor sub(Tensor a, Tensor b) { return apply2(Op::sub, a, b); }
    Tensor mul(Tensor a, Tensor b) { return apply2(Op::mul, a, b); }
    Tensor sigmoid(Tensor x) { return apply1(Op::sigmoid, x); }
    Tensor tanh(Tensor x) { return apply1(Op::tanh_fn, x); }
    Tensor exp(Tensor x) { return apply1(Op::exp_fn, x); }
    Tensor sqrt(Tensor x) { return apply1(Op::sqrt_fn, x); }
    Tensor negate(Tensor x) { return apply1(Op::negate, x); }
    Tensor scale(Tensor x, double f) { OpAttr a; a.f = f; return apply1(Op::scale, x, a); }
    Tensor sum(Tensor x) { return apply1(Op::sum, x); }
    Tensor concat(std::span<const Tensor> xs) { return apply(Op::concat, xs); }
    Tensor row_select(Tensor m, int row) { OpAttr a; a.i = row; return apply1(Op::row_select, m, a); }
    Tensor rows_gather(Tensor m, std::span<const int> rows) {
        OpAttr a; a.indices = rows; return apply1(Op::rows_gather, m, a);
    }
    Tensor softmax_temp(Tensor x, double tau) { OpAttr a; a.f = tau; return apply1(Op::softmax_temp, x, a); }
    Tensor sq_euclid_rows(Tensor m, Tensor x) { return apply2(Op::sq_euclid_rows, m, x); }
    Tensor cross_entropy_logits(Tensor logits, int target) {
        OpAttr a; a.i = target; return apply1(Op::cross_entropy_logits, logits, a);
    }
    Tensor cross_entropy_logits(Tensor logits, std::span<const int> targets) {
        OpAttr a; a.indices = targets; return apply1(Op::cross_entropy_logits, logits, a);
    }

    // Reverse sweep from a scalar loss. Gradients of every parameter leaf
    // are scaled by `seed` and added to Parameter::grad (or, when `sink`
    // is given, to the matching slot of `sink` and not the parameter).
    // The tape is cleared afterwards.
    void backward(Tensor loss, double seed = 1.0,
                  std::vector<std::pair<Parameter*, Arr>>* sink = nullptr);

    void reset();
    std::size_t node_count() const { return nodes_.size(); }

    int node_rows(std::int32_t id) const { return nodes_[static_cast<std::size_t>(id)].rows; }
    int node_cols(std::int32_t id) const { return nodes_[static_cast<std::size_t>(id)].cols; }
    std::span<const double> node_values(std::int32_t id) const;

private:
    friend struct Tensor;

    struct Node {
        Op op = Op::constant;
        std::int32_t in0 = -1, in1 = -1;
        int rows = 0, cols = 0;
        int off = 0;            // value / grad arena offset
        int aux_i = 0;          // row index / scalar CE target
        int aux_n = 0;          // count of pooled ints (gather, concat, CE targets)
        int aux_off = 0;        // offset into int pool
        double aux_f = 0.0;     // scale factor / temperature
        int save_off = -1;      // CE softmax save region
        Parameter* param = nullptr;
    };

    Tensor apply1(Op op, Tensor x, const OpAttr& attr = {}) {
        const Tensor in[1] = {x};
        return apply(op, std::span<const Tensor>(in, 1), attr);
    }
    Tensor apply2(Op op, Tensor a, Tensor b) {
        const Tensor in[2] = {a, b};
        return apply(op, std::span<const Tensor>(in, 2));
    }

    std::int32_t new_node(Op op, int rows, int cols);
    double* val(const Node& n) { return values_.data() + n.off; }
    const double* val(const Node& n) const { return values_.data() + n.off; }
    double* grad(const Node& n) { return grads_.data() + n.off; }
    void check_finite(const Node& n, Op op);
    void backward_op(const Node& n);

    bool grad_enabled_ = true;
    std::vector<Node> nodes_;
    std::vector<double> values_;
    std::vector<double> grads_;
    std::vector<double> saves_;
    std::vector<int> int_pool_;
    std::unordered_map<Parameter*, std::int32_t> param_nodes_;
};

// Maximum relative error between analytic and central-difference gradients.
//
// `f(want_grad)` must run one deterministic forward pass and return the
// scalar loss; when want_grad it must also accumulate analytic gradients
// into every parameter's grad (which this check zeroes beforehand).
// Relative error per scalar is |analytic - numeric| / max(1, |analytic|,
// |numeric|); numeric uses (f(w+eps) - f(w-eps)) / (2 eps).
struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    int worst_index = -1;
};

GradCheckReport check_gradients(const std::function<double(bool)>& f,
                                std::span<Parameter* const> params, double eps);

} // namespace srnn
