#include "srnn/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace srnn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using CMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using CVecMap = Eigen::Map<const Eigen::VectorXd>;

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

struct OpNameEntry {
    Op op;
    const char* name;
};

constexpr OpNameEntry kOpNames[] = {
    {Op::constant, "constant"},
    {Op::leaf_param, "param"},
    {Op::matvec, "matvec"},
    {Op::matvec_t, "matvec-t"},
    {Op::matmul, "matmul"},
    {Op::matmul_bt, "matmul-bt"},
    {Op::add, "add"},
    {Op::sub, "sub"},
    {Op::mul, "elementwise-mul"},
    {Op::sigmoid, "sigmoid"},
    {Op::tanh_fn, "tanh"},
    {Op::exp_fn, "exp"},
    {Op::sqrt_fn, "sqrt"},
    {Op::negate, "negate"},
    {Op::scale, "scale"},
    {Op::sum, "sum"},
    {Op::concat, "concat"},
    {Op::row_select, "row-select"},
    {Op::rows_gather, "rows-gather"},
    {Op::softmax_temp, "softmax-with-temperature"},
    {Op::sq_euclid_rows, "squared-euclidean-rows"},
    {Op::cross_entropy_logits, "cross-entropy-with-logits"},
};

[[noreturn]] void shape_error(Op op, const char* what) {
    throw Error(std::string(op_name(op)) + ": " + what);
}

} // namespace

const char* op_name(Op op) {
    for (const auto& e : kOpNames) {
        if (e.op == op) return e.name;
    }
    return "?";
}

bool op_from_name(std::string_view name, Op* out) {
    for (const auto& e : kOpNames) {
        if (name == e.name) {
            *out = e.op;
            return true;
        }
    }
    return false;
}

int Tensor::rows() const { return tape->node_rows(id); }
int Tensor::cols() const { return tape->node_cols(id); }
int Tensor::size() const { const int c = cols(); return c == 0 ? rows() : rows() * c; }
bool Tensor::is_vec() const { return cols() == 0; }
std::span<const double> Tensor::values() const { return tape->node_values(id); }

double Tensor::scalar() const {
    if (size() != 1) throw Error("scalar() on tensor of size " + std::to_string(size()));
    return values()[0];
}

Arr Tensor::to_arr() const {
    Arr a;
    a.rows = rows();
    a.cols = cols();
    auto s = values();
    a.v.assign(s.begin(), s.end());
    return a;
}

std::span<const double> Tape::node_values(std::int32_t id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    const int sz = n.cols == 0 ? n.rows : n.rows * n.cols;
    return {values_.data() + n.off, static_cast<std::size_t>(sz)};
}

std::int32_t Tape::new_node(Op op, int rows, int cols) {
    const int sz = cols == 0 ? rows : rows * cols;
    if (sz <= 0) shape_error(op, "empty output shape");
    Node n;
    n.op = op;
    n.rows = rows;
    n.cols = cols;
    n.off = static_cast<int>(values_.size());
    values_.resize(values_.size() + static_cast<std::size_t>(sz));
    nodes_.push_back(n);
    return static_cast<std::int32_t>(nodes_.size() - 1);
}

Tensor Tape::constant(const Arr& a) {
    if (a.size() == 0) throw Error("constant: empty array");
    const std::int32_t id = new_node(Op::constant, a.rows, a.cols);
    std::copy(a.v.begin(), a.v.end(), val(nodes_.back()));
    check_finite(nodes_.back(), Op::constant);
    return {this, id};
}

Tensor Tape::constant_vec(std::initializer_list<double> xs) {
    return constant(Arr::vec(xs));
}

Tensor Tape::zeros(int rows, int cols) {
    const std::int32_t id = new_node(Op::constant, rows, cols);
    Node& n = nodes_.back();
    std::fill(val(n), val(n) + (cols == 0 ? rows : rows * cols), 0.0);
    return {this, id};
}

Tensor Tape::ones(int rows, int cols) {
    const std::int32_t id = new_node(Op::constant, rows, cols);
    Node& n = nodes_.back();
    std::fill(val(n), val(n) + (cols == 0 ? rows : rows * cols), 1.0);
    return {this, id};
}

Tensor Tape::param(Parameter& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return {this, it->second};
    if (p.value.size() == 0) throw Error("param '" + p.name + "' is empty");
    const std::int32_t id = new_node(Op::leaf_param, p.value.rows, p.value.cols);
    Node& n = nodes_.back();
    n.param = &p;
    std::copy(p.value.v.begin(), p.value.v.end(), val(n));
    check_finite(n, Op::leaf_param);
    param_nodes_.emplace(&p, id);
    return {this, id};
}

void Tape::check_finite(const Node& n, Op op) {
    const int sz = n.cols == 0 ? n.rows : n.rows * n.cols;
    const double* p = val(n);
    for (int i = 0; i < sz; ++i) {
        if (!std::isfinite(p[i])) {
            throw Error(std::string("non-finite output in op '") + op_name(op) + "' at index " +
                        std::to_string(i));
        }
    }
}

Tensor Tape::apply(std::string_view op, std::span<const Tensor> inputs, const OpAttr& attr) {
    Op k;
    if (!op_from_name(op, &k)) throw Error("unknown op kind: " + std::string(op));
    return apply(k, inputs, attr);
}

Tensor Tape::apply(Op op, std::span<const Tensor> in, const OpAttr& attr) {
    if (op == Op::constant || op == Op::leaf_param) {
        throw Error(std::string("op '") + op_name(op) + "' is a leaf, not applyable");
    }
    for (const Tensor& t : in) {
        if (t.tape != this || t.id < 0 || t.id >= static_cast<std::int32_t>(nodes_.size())) {
            shape_error(op, "input tensor not on this tape");
        }
    }
    auto need = [&](std::size_t k) {
        if (in.size() != k) shape_error(op, "wrong input count");
    };
    auto nd = [&](int i) -> const Node& { return nodes_[static_cast<std::size_t>(in[static_cast<std::size_t>(i)].id)]; };
    auto sz_of = [](const Node& n) { return n.cols == 0 ? n.rows : n.rows * n.cols; };

    std::int32_t out = -1;
    switch (op) {
        case Op::matvec: {
            need(2);
            const Node a = nd(0), x = nd(1);
            if (a.cols == 0 || x.cols != 0 || x.rows != a.cols) shape_error(op, "shape mismatch");
            out = new_node(op, a.rows, 0);
            VecMap(val(nodes_.back()), a.rows).noalias() =
                CMatMap(val(a), a.rows, a.cols) * CVecMap(val(x), x.rows);
            break;
        }
        case Op::matvec_t: {
            need(2);
            const Node a = nd(0), x = nd(1);
            if (a.cols == 0 || x.cols != 0 || x.rows != a.rows) shape_error(op, "shape mismatch");
            out = new_node(op, a.cols, 0);
            VecMap(val(nodes_.back()), a.cols).noalias() =
                CMatMap(val(a), a.rows, a.cols).transpose() * CVecMap(val(x), x.rows);
            break;
        }
        case Op::matmul: {
            need(2);
            const Node a = nd(0), b = nd(1);
            if (a.cols == 0 || b.cols == 0 || a.cols != b.rows) shape_error(op, "shape mismatch");
            out = new_node(op, a.rows, b.cols);
            MatMap(val(nodes_.back()), a.rows, b.cols).noalias() =
                CMatMap(val(a), a.rows, a.cols) * CMatMap(val(b), b.rows, b.cols);
            break;
        }
        case Op::matmul_bt: {
            need(2);
            const Node a = nd(0), b = nd(1);
            if (a.cols == 0 || b.cols == 0 || a.cols != b.cols) shape_error(op, "shape mismatch");
            out = new_node(op, a.rows, b.rows);
            MatMap(val(nodes_.back()), a.rows, b.rows).noalias() =
                CMatMap(val(a), a.rows, a.cols) * CMatMap(val(b), b.rows, b.cols).transpose();
            break;
        }
        case Op::add:
        case Op::sub:
        case Op::mul: {
            need(2);
            const Node a = nd(0), b = nd(1);
            const bool same = a.rows == b.rows && a.cols == b.cols;
            const bool row_bcast = (op != Op::sub) && a.cols != 0 && b.cols == 0 && b.rows == a.cols;
            if (!same && !row_bcast) shape_error(op, "shape mismatch");
            out = new_node(op, a.rows, a.cols);
            double* o = val(nodes_.back());
            const double* pa = val(a);
            const double* pb = val(b);
            const int n = sz_of(a);
            if (same) {
                if (op == Op::add) {
                    for (int i = 0; i < n; ++i) o[i] = pa[i] + pb[i];
                } else if (op == Op::sub) {
                    for (int i = 0; i < n; ++i) o[i] = pa[i] - pb[i];
                } else {
                    for (int i = 0; i < n; ++i) o[i] = pa[i] * pb[i];
                }
            } else { // [r,c] (+|*) [c]
                for (int i = 0; i < a.rows; ++i) {
                    for (int j = 0; j < a.cols; ++j) {
                        const double x = pa[static_cast<std::size_t>(i) * a.cols + j];
                        o[static_cast<std::size_t>(i) * a.cols + j] =
                            op == Op::add ? x + pb[j] : x * pb[j];
                    }
                }
            }
            break;
        }
        case Op::sigmoid:
        case Op::tanh_fn:
        case Op::exp_fn:
        case Op::sqrt_fn:
        case Op::negate: {
            need(1);
            const Node x = nd(0);
            out = new_node(op, x.rows, x.cols);
            double* o = val(nodes_.back());
            const double* px = val(x);
            const int n = sz_of(x);
            switch (op) {
                case Op::sigmoid: for (int i = 0; i < n; ++i) o[i] = stable_sigmoid(px[i]); break;
                case Op::tanh_fn: for (int i = 0; i < n; ++i) o[i] = std::tanh(px[i]); break;
                case Op::exp_fn:  for (int i = 0; i < n; ++i) o[i] = std::exp(px[i]); break;
                case Op::sqrt_fn: for (int i = 0; i < n; ++i) o[i] = std::sqrt(px[i]); break;
                default:          for (int i = 0; i < n; ++i) o[i] = -px[i]; break;
            }
            break;
        }
        case Op::scale: {
            need(1);
            const Node x = nd(0);
            out = new_node(op, x.rows, x.cols);
            nodes_.back().aux_f = attr.f;
            double* o = val(nodes_.back());
            const double* px = val(x);
            const int n = sz_of(x);
            for (int i = 0; i < n; ++i) o[i] = attr.f * px[i];
            break;
        }
        case Op::sum: {
            need(1);
            const Node x = nd(0);
            out = new_node(op, 1, 0);
            double acc = 0.0;
            const double* px = val(x);
            const int n = sz_of(x);
            for (int i = 0; i < n; ++i) acc += px[i];
            *val(nodes_.back()) = acc;
            break;
        }
        case Op::concat: {
            if (in.empty()) shape_error(op, "no inputs");
            const bool vecs = nd(0).cols == 0;
            int total_cols = 0;
            for (std::size_t i = 0; i < in.size(); ++i) {
                const Node x = nd(static_cast<int>(i));
                if ((x.cols == 0) != vecs) shape_error(op, "mixed ranks");
                if (!vecs && x.rows != nd(0).rows) shape_error(op, "row count mismatch");
                total_cols += vecs ? x.rows : x.cols;
            }
            const int aux_off = static_cast<int>(int_pool_.size());
            for (const Tensor& t : in) int_pool_.push_back(t.id);
            out = vecs ? new_node(op, total_cols, 0) : new_node(op, nd(0).rows, total_cols);
            Node& o = nodes_.back();
            o.aux_off = aux_off;
            o.aux_n = static_cast<int>(in.size());
            double* po = val(o);
            if (vecs) {
                int at = 0;
                for (std::size_t i = 0; i < in.size(); ++i) {
                    const Node x = nd(static_cast<int>(i));
                    std::memcpy(po + at, val(x), sizeof(double) * static_cast<std::size_t>(x.rows));
                    at += x.rows;
                }
            } else {
                int col_at = 0;
                for (std::size_t i = 0; i < in.size(); ++i) {
                    const Node x = nd(static_cast<int>(i));
                    for (int r = 0; r < x.rows; ++r) {
                        std::memcpy(po + static_cast<std::size_t>(r) * total_cols + col_at,
                                    val(x) + static_cast<std::size_t>(r) * x.cols,
                                    sizeof(double) * static_cast<std::size_t>(x.cols));
                    }
                    col_at += x.cols;
                }
            }
            break;
        }
        case Op::row_select: {
            need(1);
            const Node m = nd(0);
            if (m.cols == 0) shape_error(op, "matrix input required");
            if (attr.i < 0 || attr.i >= m.rows) {
                throw Error("row-select: index " + std::to_string(attr.i) + " out of range [0, " +
                            std::to_string(m.rows) + ")");
            }
            out = new_node(op, m.cols, 0);
            nodes_.back().aux_i = attr.i;
            std::memcpy(val(nodes_.back()), val(m) + static_cast<std::size_t>(attr.i) * m.cols,
                        sizeof(double) * static_cast<std::size_t>(m.cols));
            break;
        }
        case Op::rows_gather: {
            need(1);
            const Node m = nd(0);
            if (m.cols == 0) shape_error(op, "matrix input required");
            if (attr.indices.empty()) shape_error(op, "index list required");
            for (int ix : attr.indices) {
                if (ix < 0 || ix >= m.rows) {
                    throw Error("rows-gather: index " + std::to_string(ix) + " out of range [0, " +
                                std::to_string(m.rows) + ")");
                }
            }
            const int aux_off = static_cast<int>(int_pool_.size());
            int_pool_.insert(int_pool_.end(), attr.indices.begin(), attr.indices.end());
            out = new_node(op, static_cast<int>(attr.indices.size()), m.cols);
            Node& o = nodes_.back();
            o.aux_off = aux_off;
            o.aux_n = static_cast<int>(attr.indices.size());
            for (int b = 0; b < o.aux_n; ++b) {
                const int src = int_pool_[static_cast<std::size_t>(aux_off + b)];
                std::memcpy(val(o) + static_cast<std::size_t>(b) * m.cols,
                            val(m) + static_cast<std::size_t>(src) * m.cols,
                            sizeof(double) * static_cast<std::size_t>(m.cols));
            }
            break;
        }
        case Op::softmax_temp: {
            need(1);
            if (!(attr.f > 0.0)) throw Error("softmax-with-temperature: tau must be > 0");
            const Node x = nd(0);
            const int rows = x.cols == 0 ? 1 : x.rows;
            const int width = x.cols == 0 ? x.rows : x.cols;
            out = new_node(op, x.rows, x.cols);
            Node& o = nodes_.back();
            o.aux_f = attr.f;
            for (int r = 0; r < rows; ++r) {
                const double* px = val(x) + static_cast<std::size_t>(r) * width;
                double* po = val(o) + static_cast<std::size_t>(r) * width;
                double mx = px[0];
                for (int i = 1; i < width; ++i) mx = std::max(mx, px[i]);
                double s = 0.0;
                for (int i = 0; i < width; ++i) {
                    po[i] = std::exp((px[i] - mx) / attr.f);
                    s += po[i];
                }
                const double inv = 1.0 / s;
                for (int i = 0; i < width; ++i) po[i] *= inv;
            }
            break;
        }
        case Op::sq_euclid_rows: {
            need(2);
            const Node m = nd(0), x = nd(1);
            if (m.cols == 0) shape_error(op, "matrix input required");
            const bool batched = x.cols != 0;
            if ((batched ? x.cols : x.rows) != m.cols) shape_error(op, "shape mismatch");
            const int batch = batched ? x.rows : 1;
            out = batched ? new_node(op, batch, m.rows) : new_node(op, m.rows, 0);
            Node& o = nodes_.back();
            for (int b = 0; b < batch; ++b) {
                const double* px = val(x) + static_cast<std::size_t>(b) * m.cols;
                double* po = val(o) + static_cast<std::size_t>(b) * m.rows;
                for (int i = 0; i < m.rows; ++i) {
                    const double* pm = val(m) + static_cast<std::size_t>(i) * m.cols;
                    double acc = 0.0;
                    for (int j = 0; j < m.cols; ++j) {
                        const double dlt = px[j] - pm[j];
                        acc += dlt * dlt;
                    }
                    po[i] = acc;
                }
            }
            break;
        }
        case Op::cross_entropy_logits: {
            need(1);
            const Node l = nd(0);
            const int rows = l.cols == 0 ? 1 : l.rows;
            const int width = l.cols == 0 ? l.rows : l.cols;
            std::vector<int> targets;
            if (l.cols == 0) {
                targets.push_back(attr.i);
            } else {
                if (static_cast<int>(attr.indices.size()) != rows) {
                    shape_error(op, "one target per row required");
                }
                targets.assign(attr.indices.begin(), attr.indices.end());
            }
            for (int t : targets) {
                if (t < 0 || t >= width) throw Error("cross-entropy-with-logits: target out of range");
            }
            const int aux_off = static_cast<int>(int_pool_.size());
            int_pool_.insert(int_pool_.end(), targets.begin(), targets.end());
            const int save_off = static_cast<int>(saves_.size());
            saves_.resize(saves_.size() + static_cast<std::size_t>(rows) * width);
            out = new_node(op, rows, 0);
            Node& o = nodes_.back();
            o.aux_off = aux_off;
            o.aux_n = rows;
            o.save_off = save_off;
            for (int r = 0; r < rows; ++r) {
                const double* px = val(l) + static_cast<std::size_t>(r) * width;
                double* ps = saves_.data() + save_off + static_cast<std::size_t>(r) * width;
                double mx = px[0];
                for (int i = 1; i < width; ++i) mx = std::max(mx, px[i]);
                double s = 0.0;
                for (int i = 0; i < width; ++i) {
                    ps[i] = std::exp(px[i] - mx);
                    s += ps[i];
                }
                const double inv = 1.0 / s;
                for (int i = 0; i < width; ++i) ps[i] *= inv;
                const int t = int_pool_[static_cast<std::size_t>(aux_off + r)];
                val(o)[r] = std::log(s) + mx - px[t];
            }
            break;
        }
        default:
            throw Error("unhandled op in apply");
    }

    Node& o = nodes_[static_cast<std::size_t>(out)];
    if (o.in0 < 0 && !in.empty()) o.in0 = in[0].id;
    if (in.size() > 1 && o.in1 < 0) o.in1 = in[1].id;
    check_finite(o, op);
    return {this, out};
}

void Tape::backward_op(const Node& n) {
    auto node = [&](std::int32_t id) -> const Node& { return nodes_[static_cast<std::size_t>(id)]; };
    auto sz_of = [](const Node& x) { return x.cols == 0 ? x.rows : x.rows * x.cols; };
    const double* g = grad(n);

    switch (n.op) {
        case Op::constant:
        case Op::leaf_param:
            return;
        case Op::matvec: {
            const Node& a = node(n.in0);
            const Node& x = node(n.in1);
            CMatMap A(val(a), a.rows, a.cols);
            CVecMap X(val(x), x.rows);
            CVecMap G(g, n.rows);
            MatMap(grad(a), a.rows, a.cols).noalias() += G * X.transpose();
            VecMap(grad(x), x.rows).noalias() += A.transpose() * G;
            return;
        }
        case Op::matvec_t: {
            const Node& a = node(n.in0);
            const Node& x = node(n.in1);
            CMatMap A(val(a), a.rows, a.cols);
            CVecMap X(val(x), x.rows);
            CVecMap G(g, n.rows);
            MatMap(grad(a), a.rows, a.cols).noalias() += X * G.transpose();
            VecMap(grad(x), x.rows).noalias() += A * G;
            return;
        }
        case Op::matmul: {
            const Node& a = node(n.in0);
            const Node& b = node(n.in1);
            CMatMap A(val(a), a.rows, a.cols);
            CMatMap B(val(b), b.rows, b.cols);
            CMatMap G(g, n.rows, n.cols);
            MatMap(grad(a), a.rows, a.cols).noalias() += G * B.transpose();
            MatMap(grad(b), b.rows, b.cols).noalias() += A.transpose() * G;
            return;
        }
        case Op::matmul_bt: {
            const Node& a = node(n.in0);
            const Node& b = node(n.in1);
            CMatMap A(val(a), a.rows, a.cols);
            CMatMap B(val(b), b.rows, b.cols);
            CMatMap G(g, n.rows, n.cols);
            MatMap(grad(a), a.rows, a.cols).noalias() += G * B;
            MatMap(grad(b), b.rows, b.cols).noalias() += G.transpose() * A;
            return;
        }
        case Op::add: {
            const Node& a = node(n.in0);
            const Node& b = node(n.in1);
            double* ga = grad(a);
            double* gb = grad(b);
            const int sz = sz_of(n);
            for (int i = 0; i < sz; ++i) ga[i] += g[i];
            if (a.rows == b.rows && a.cols == b.cols) {
                for (int i = 0; i < sz; ++i) gb[i] += g[i];
            } else { // bias row broadcast
                for (int r = 0; r < n.rows; ++r) {
                    for (int j = 0; j < n.cols; ++j) gb[j] += g[static_cast<std::size_t>(r) * n.cols + j];
                }
            }
            return;
        }
        case Op::sub: {
            const Node& a = node(n.in0);
            const Node& b = node(n.in1);
            double* ga = grad(a);
            double* gb = grad(b);
            const int sz = sz_of(n);
            for (int i = 0; i < sz; ++i) {
                ga[i] += g[i];
                gb[i] -= g[i];
            }
            return;
        }
        case Op::mul: {
            const Node& a = node(n.in0);
            const Node& b = node(n.in1);
            double* ga = grad(a);
            double* gb = grad(b);
            const double* pa = val(a);
            const double* pb = val(b);
            if (a.rows == b.rows && a.cols == b.cols) {
                const int sz = sz_of(n);
                for (int i = 0; i < sz; ++i) {
                    ga[i] += g[i] * pb[i];
                    gb[i] += g[i] * pa[i];
                }
            } else { // [r,c] (.) [c]
                for (int r = 0; r < n.rows; ++r) {
                    const std::size_t base = static_cast<std::size_t>(r) * n.cols;
                    for (int j = 0; j < n.cols; ++j) {
                        ga[base + j] += g[base + j] * pb[j];
                        gb[j] += g[base + j] * pa[base + j];
                    }
                }
            }
            return;
        }
        case Op::sigmoid: {
            const Node& x = node(n.in0);
            double* gx = grad(x);
            const double* y = val(n);
            const int sz = sz_of(n);
            for (int i = 0; i < sz; ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
            return;
        }
        case Op::tanh_fn: {
            const Node& x = node(n.in0);
            double* gx = grad(x);
            const double* y = val(n);
            const int sz = sz_of(n);
            for (int i = 0; i < sz; ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
            return;
        }
        case Op::exp_fn: {
            const Node& x = node(n.in0);
            double* gx = grad(x);
            const double* y = val(n);
            const int sz = sz_of(n);
            for (int i = 0; i < sz; ++i) gx[i] += g[i] * y[i];
            return;
        }
        case Op::sqrt_fn: {
            const Node& x = node(n.in0);
            double* gx = grad(x);
            const double* y = val(n);
            const int sz = sz_of(n);
            for (int i = 0; i < sz; ++i) {
                if (y[i] == 0.0) throw Error("sqrt: derivative singular at zero");
                gx[i] += g[i] * 0.5 / y[i];
            }
            return;
        }
        case Op::negate: {
            const Node& x = node(n.in0);
            double* gx = grad(x);
            const int sz = sz_of(n);
            for (int i = 0; i < sz; ++i) gx[i] -= g[i];
            return;
        }
        case Op::scale: {
            const Node& x = node(n.in0);
            double* gx = grad(x);
            const int sz = sz_of(n);
            for (int i = 0; i < sz; ++i) gx[i] += n.aux_f * g[i];
            return;
        }
        case Op::sum: {
            const Node& x = node(n.in0);
            double* gx = grad(x);
            const int sz = sz_of(x);
            for (int i = 0; i < sz; ++i) gx[i] += g[0];
            return;
        }
        case Op::concat: {
            if (n.cols == 0) {
                int at = 0;
                for (int i = 0; i < n.aux_n; ++i) {
                    const Node& x = node(int_pool_[static_cast<std::size_t>(n.aux_off + i)]);
                    double* gx = grad(x);
                    for (int j = 0; j < x.rows; ++j) gx[j] += g[at + j];
                    at += x.rows;
                }
            } else {
                int col_at = 0;
                for (int i = 0; i < n.aux_n; ++i) {
                    const Node& x = node(int_pool_[static_cast<std::size_t>(n.aux_off + i)]);
                    double* gx = grad(x);
                    for (int r = 0; r < x.rows; ++r) {
                        for (int j = 0; j < x.cols; ++j) {
                            gx[static_cast<std::size_t>(r) * x.cols + j] +=
                                g[static_cast<std::size_t>(r) * n.cols + col_at + j];
                        }
                    }
                    col_at += x.cols;
                }
            }
            return;
        }
        case Op::row_select: {
            const Node& m = node(n.in0);
            double* gm = grad(m) + static_cast<std::size_t>(n.aux_i) * m.cols;
            for (int j = 0; j < m.cols; ++j) gm[j] += g[j];
            return;
        }
        case Op::rows_gather: {
            const Node& m = node(n.in0);
            for (int b = 0; b < n.aux_n; ++b) {
                const int src = int_pool_[static_cast<std::size_t>(n.aux_off + b)];
                double* gm = grad(m) + static_cast<std::size_t>(src) * m.cols;
                const double* gr = g + static_cast<std::size_t>(b) * m.cols;
                for (int j = 0; j < m.cols; ++j) gm[j] += gr[j];
            }
            return;
        }
        case Op::softmax_temp: {
            const Node& x = node(n.in0);
            double* gx = grad(x);
            const int rows = n.cols == 0 ? 1 : n.rows;
            const int width = n.cols == 0 ? n.rows : n.cols;
            const double inv_tau = 1.0 / n.aux_f;
            for (int r = 0; r < rows; ++r) {
                const double* y = val(n) + static_cast<std::size_t>(r) * width;
                const double* gr = g + static_cast<std::size_t>(r) * width;
                double dot = 0.0;
                for (int i = 0; i < width; ++i) dot += gr[i] * y[i];
                double* gxr = gx + static_cast<std::size_t>(r) * width;
                for (int i = 0; i < width; ++i) gxr[i] += inv_tau * y[i] * (gr[i] - dot);
            }
            return;
        }
        case Op::sq_euclid_rows: {
            const Node& m = node(n.in0);
            const Node& x = node(n.in1);
            const bool batched = x.cols != 0;
            const int batch = batched ? x.rows : 1;
            double* gm = grad(m);
            double* gx = grad(x);
            for (int b = 0; b < batch; ++b) {
                const double* px = val(x) + static_cast<std::size_t>(b) * m.cols;
                double* gxr = gx + static_cast<std::size_t>(b) * m.cols;
                const double* gr = g + static_cast<std::size_t>(b) * m.rows;
                for (int i = 0; i < m.rows; ++i) {
                    const double* pm = val(m) + static_cast<std::size_t>(i) * m.cols;
                    double* gmr = gm + static_cast<std::size_t>(i) * m.cols;
                    const double gi2 = 2.0 * gr[i];
                    for (int j = 0; j < m.cols; ++j) {
                        const double dlt = px[j] - pm[j];
                        gxr[j] += gi2 * dlt;
                        gmr[j] -= gi2 * dlt;
                    }
                }
            }
            return;
        }
        case Op::cross_entropy_logits: {
            const Node& l = node(n.in0);
            const int rows = l.cols == 0 ? 1 : l.rows;
            const int width = l.cols == 0 ? l.rows : l.cols;
            double* gl = grad(l);
            for (int r = 0; r < rows; ++r) {
                const double* p = saves_.data() + n.save_off + static_cast<std::size_t>(r) * width;
                const int t = int_pool_[static_cast<std::size_t>(n.aux_off + r)];
                double* glr = gl + static_cast<std::size_t>(r) * width;
                for (int i = 0; i < width; ++i) glr[i] += g[r] * (p[i] - (i == t ? 1.0 : 0.0));
            }
            return;
        }
    }
}

void Tape::backward(Tensor loss, double seed, std::vector<std::pair<Parameter*, Arr>>* sink) {
    if (!grad_enabled_) throw Error("backward on a gradient-disabled tape");
    if (loss.tape != this || loss.id < 0 || loss.id >= static_cast<std::int32_t>(nodes_.size())) {
        throw Error("backward: loss not on this tape");
    }
    if (loss.size() != 1) throw Error("backward: loss must be scalar");

    grads_.assign(values_.size(), 0.0);
    grads_[static_cast<std::size_t>(nodes_[static_cast<std::size_t>(loss.id)].off)] = seed;

    for (std::int32_t i = loss.id; i >= 0; --i) {
        backward_op(nodes_[static_cast<std::size_t>(i)]);
    }

    auto shaped_zero = [](int rows, int cols) {
        return cols == 0 ? Arr::vec(rows) : Arr::mat(rows, cols);
    };
    for (const Node& n : nodes_) {
        if (n.op != Op::leaf_param) continue;
        const int sz = n.cols == 0 ? n.rows : n.rows * n.cols;
        const double* gsrc = grads_.data() + n.off;
        double* dst = nullptr;
        if (sink != nullptr) {
            for (auto& [p, arr] : *sink) {
                if (p == n.param) {
                    if (arr.size() != sz) arr = shaped_zero(n.rows, n.cols);
                    dst = arr.v.data();
                    break;
                }
            }
            if (dst == nullptr) {
                sink->emplace_back(n.param, shaped_zero(n.rows, n.cols));
                dst = sink->back().second.v.data();
            }
        } else {
            dst = n.param->grad.v.data();
        }
        for (int i = 0; i < sz; ++i) dst[i] += gsrc[i];
    }
    reset();
}

void Tape::reset() {
    nodes_.clear();
    values_.clear();
    grads_.clear();
    saves_.clear();
    int_pool_.clear();
    param_nodes_.clear();
}

GradCheckReport check_gradients(const std::function<double(bool)>& f,
                                std::span<Parameter* const> params, double eps) {
    if (!(eps >= 1e-7 && eps <= 1e-3)) throw Error("check_gradients: eps outside [1e-7, 1e-3]");

    const double l1 = f(false);
    const double l2 = f(false);
    if (std::memcmp(&l1, &l2, sizeof(double)) != 0) {
        throw Error("check_gradients: closure is not deterministic");
    }

    for (Parameter* p : params) p->zero_grad();
    f(true);
    std::vector<Arr> analytic;
    analytic.reserve(params.size());
    for (Parameter* p : params) {
        analytic.push_back(p->grad);
        p->zero_grad();
    }

    GradCheckReport rep;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Parameter* p = params[pi];
        for (int i = 0; i < p->value.size(); ++i) {
            const double saved = p->value.v[static_cast<std::size_t>(i)];
            p->value.v[static_cast<std::size_t>(i)] = saved + eps;
            const double fp = f(false);
            p->value.v[static_cast<std::size_t>(i)] = saved - eps;
            const double fm = f(false);
            p->value.v[static_cast<std::size_t>(i)] = saved;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double a = analytic[pi].v[static_cast<std::size_t>(i)];
            const double denom = std::max({1.0, std::fabs(a), std::fabs(numeric)});
            const double rel = std::fabs(a - numeric) / denom;
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_param = p->name;
                rep.worst_index = i;
            }
        }
    }
    return rep;
}

} // namespace srnn
