#include "capgen/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace capgen {

using detail::Node;

std::string shape_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? ", " : "") << shape[i];
    out << ']';
    return out.str();
}

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::span<Real> Node::ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
}

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::from(Shape shape, std::vector<Real> values, bool requires_grad) {
    if (shape_size(shape) != values.size())
        throw std::invalid_argument("tensor shape " + shape_string(shape) + " does not match " +
                                    std::to_string(values.size()) + " values");
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    if (requires_grad) node->ensure_grad();
    return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return filled(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::filled(Shape shape, Real value, bool requires_grad) {
    const std::size_t n = shape_size(shape);
    return from(std::move(shape), std::vector<Real>(n, value), requires_grad);
}

Tensor Tensor::scalar(Real value, bool requires_grad) { return from({1}, {value}, requires_grad); }

Tensor Tensor::vector(std::vector<Real> values, bool requires_grad) {
    const std::size_t n = values.size();
    return from({n}, std::move(values), requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<Real> values, bool requires_grad) {
    return from({rows, cols}, std::move(values), requires_grad);
}

Real Tensor::item() const {
    if (size() != 1) throw std::invalid_argument("item() on tensor of shape " + shape_string(shape()));
    return node_->value[0];
}

Real Tensor::at(std::size_t row, std::size_t col) const {
    if (rank() != 2 || row >= dim(0) || col >= dim(1))
        throw std::out_of_range("index (" + std::to_string(row) + ", " + std::to_string(col) + ") into " +
                                shape_string(shape()));
    return node_->value[row * dim(1) + col];
}

std::span<const Real> Tensor::grad() const { return node_->ensure_grad(); }

void Tensor::zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

// ---------------------------------------------------------------------------
// Tape

namespace {
thread_local Tape* active_tape = nullptr;
}

Tape::Tape() : previous_(active_tape) { active_tape = this; }

Tape::~Tape() { active_tape = previous_; }

Tape* Tape::active() { return active_tape; }

void Tape::backward(const Tensor& loss) {
    if (consumed_) throw std::logic_error("backward called twice on the same tape without reset()");
    if (!loss.defined() || loss.size() != 1)
        throw std::invalid_argument("backward needs a scalar loss, got shape " +
                                    (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
    consumed_ = true;
    loss.node()->ensure_grad()[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        Node& node = **it;
        if (node.grad.empty() || !node.backward) continue;
        node.backward(node);
    }
}

void Tape::reset() {
    nodes_.clear();
    consumed_ = false;
}

// ---------------------------------------------------------------------------
// Operation plumbing

namespace {

using NodePtr = std::shared_ptr<Node>;

template <class Backward>
Tensor finish(Shape shape, std::vector<Real> value, std::vector<NodePtr> parents, Backward&& backward) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    Tape* tape = Tape::active();
    const bool track =
        tape && std::any_of(parents.begin(), parents.end(), [](const NodePtr& p) { return p->requires_grad; });
    if (track) {
        node->requires_grad = true;
        node->parents = std::move(parents);
        node->backward = std::forward<Backward>(backward);
        tape->record(node);
    }
    return Tensor(std::move(node));
}

// Gradient sink for parent i, or an empty span when it does not need one.
std::span<Real> sink(Node& self, std::size_t i) {
    Node& parent = *self.parents[i];
    if (!parent.requires_grad) return {};
    return parent.ensure_grad();
}

void require_nonempty(const Tensor& x, const char* op) {
    if (!x.defined() || x.size() == 0) throw std::invalid_argument(std::string(op) + ": zero-size input");
}

void require_rank(const Tensor& x, std::size_t rank, const char* op) {
    if (x.rank() != rank)
        throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                                    shape_string(x.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                                    shape_string(b.shape()));
}

struct AxisSplit {
    std::size_t outer, len, inner;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, const char* op) {
    if (axis >= shape.size())
        throw std::invalid_argument(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                                    shape_string(shape));
    AxisSplit s{1, shape[axis], 1};
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

// Row count and width of a tensor viewed as a matrix over its last axis.
std::pair<std::size_t, std::size_t> as_rows(const Tensor& x) {
    const std::size_t cols = x.shape().back();
    return {x.size() / cols, cols};
}

}  // namespace

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw std::invalid_argument("matmul: incompatible shapes " + shape_string(a.shape()) + " x " +
                                    shape_string(b.shape()));
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<Real> out(m * n, 0.0);
    kernels::active().gemm_nn(m, k, n, a.data().data(), b.data().data(), out.data());
    return finish({m, n}, std::move(out), {a.node(), b.node()}, [m, k, n](Node& self) {
        const auto& kt = kernels::active();
        const Real* g = self.grad.data();
        if (auto ga = sink(self, 0); !ga.empty()) kt.gemm_nt(m, n, k, g, self.parents[1]->value.data(), ga.data());
        if (auto gb = sink(self, 1); !gb.empty()) kt.gemm_tn(k, m, n, self.parents[0]->value.data(), g, gb.data());
    });
}

Tensor transpose(const Tensor& a) {
    require_rank(a, 2, "transpose");
    const std::size_t m = a.dim(0), n = a.dim(1);
    std::vector<Real> out(m * n);
    const auto in = a.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = in[i * n + j];
    return finish({n, m}, std::move(out), {a.node()}, [m, n](Node& self) {
        auto ga = sink(self, 0);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += self.grad[j * m + i];
    });
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<Real> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    return finish(a.shape(), std::move(out), {a.node(), b.node()}, [](Node& self) {
        for (std::size_t p = 0; p < 2; ++p)
            if (auto g = sink(self, p); !g.empty())
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<Real> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    return finish(a.shape(), std::move(out), {a.node(), b.node()}, [](Node& self) {
        if (auto g = sink(self, 0); !g.empty())
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        if (auto g = sink(self, 1); !g.empty())
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<Real> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    return finish(a.shape(), std::move(out), {a.node(), b.node()}, [](Node& self) {
        const auto& av = self.parents[0]->value;
        const auto& bv = self.parents[1]->value;
        if (auto g = sink(self, 0); !g.empty())
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv[i];
        if (auto g = sink(self, 1); !g.empty())
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av[i];
    });
}

Tensor scale(const Tensor& a, Real factor) {
    std::vector<Real> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * factor;
    return finish(a.shape(), std::move(out), {a.node()}, [factor](Node& self) {
        auto g = sink(self, 0);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
    });
}

Tensor add_row(const Tensor& a, const Tensor& bias) {
    require_nonempty(a, "add_row");
    const auto [rows, cols] = as_rows(a);
    if (bias.size() != cols)
        throw std::invalid_argument("add_row: bias " + shape_string(bias.shape()) + " does not fit rows of " +
                                    shape_string(a.shape()));
    std::vector<Real> out(a.data().begin(), a.data().end());
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += bias.data()[c];
    return finish(a.shape(), std::move(out), {a.node(), bias.node()}, [rows, cols](Node& self) {
        if (auto g = sink(self, 0); !g.empty())
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        if (auto g = sink(self, 1); !g.empty())
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c) g[c] += self.grad[r * cols + c];
    });
}

Tensor relu(const Tensor& x) {
    std::vector<Real> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] > 0 ? x.data()[i] : 0.0;
    return finish(x.shape(), std::move(out), {x.node()}, [](Node& self) {
        auto g = sink(self, 0);
        const auto& xv = self.parents[0]->value;
        for (std::size_t i = 0; i < g.size(); ++i)
            if (xv[i] > 0) g[i] += self.grad[i];
    });
}

Tensor sigmoid(const Tensor& x) {
    std::vector<Real> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const Real v = x.data()[i];
        if (v >= 0) {
            out[i] = 1.0 / (1.0 + std::exp(-v));
        } else {
            const Real e = std::exp(v);
            out[i] = e / (1.0 + e);
        }
    }
    return finish(x.shape(), std::move(out), {x.node()}, [](Node& self) {
        auto g = sink(self, 0);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const Real y = self.value[i];
            g[i] += self.grad[i] * y * (1.0 - y);
        }
    });
}

// ---------------------------------------------------------------------------
// Normalizations

Tensor softmax(const Tensor& x, std::size_t axis) {
    require_nonempty(x, "softmax");
    const AxisSplit s = split_axis(x.shape(), axis, "softmax");
    std::vector<Real> out(x.size());
    const auto in = x.data();
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t i = 0; i < s.inner; ++i) {
            const std::size_t base = o * s.len * s.inner + i;
            Real peak = -std::numeric_limits<Real>::infinity();
            for (std::size_t j = 0; j < s.len; ++j) peak = std::max(peak, in[base + j * s.inner]);
            Real total = 0;
            for (std::size_t j = 0; j < s.len; ++j) {
                const Real e = std::exp(in[base + j * s.inner] - peak);
                out[base + j * s.inner] = e;
                total += e;
            }
            for (std::size_t j = 0; j < s.len; ++j) out[base + j * s.inner] /= total;
        }
    return finish(x.shape(), std::move(out), {x.node()}, [s](Node& self) {
        auto g = sink(self, 0);
        const auto& y = self.value;
        for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t i = 0; i < s.inner; ++i) {
                const std::size_t base = o * s.len * s.inner + i;
                Real inner = 0;
                for (std::size_t j = 0; j < s.len; ++j) {
                    const std::size_t at = base + j * s.inner;
                    inner += self.grad[at] * y[at];
                }
                for (std::size_t j = 0; j < s.len; ++j) {
                    const std::size_t at = base + j * s.inner;
                    g[at] += y[at] * (self.grad[at] - inner);
                }
            }
    });
}

Tensor log_softmax(const Tensor& x, std::size_t axis) {
    require_nonempty(x, "log_softmax");
    const AxisSplit s = split_axis(x.shape(), axis, "log_softmax");
    std::vector<Real> out(x.size());
    const auto in = x.data();
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t i = 0; i < s.inner; ++i) {
            const std::size_t base = o * s.len * s.inner + i;
            Real peak = -std::numeric_limits<Real>::infinity();
            for (std::size_t j = 0; j < s.len; ++j) peak = std::max(peak, in[base + j * s.inner]);
            Real total = 0;
            for (std::size_t j = 0; j < s.len; ++j) total += std::exp(in[base + j * s.inner] - peak);
            const Real log_total = peak + std::log(total);
            for (std::size_t j = 0; j < s.len; ++j) out[base + j * s.inner] = in[base + j * s.inner] - log_total;
        }
    return finish(x.shape(), std::move(out), {x.node()}, [s](Node& self) {
        auto g = sink(self, 0);
        const auto& y = self.value;
        for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t i = 0; i < s.inner; ++i) {
                const std::size_t base = o * s.len * s.inner + i;
                Real upstream = 0;
                for (std::size_t j = 0; j < s.len; ++j) upstream += self.grad[base + j * s.inner];
                for (std::size_t j = 0; j < s.len; ++j) {
                    const std::size_t at = base + j * s.inner;
                    g[at] += self.grad[at] - std::exp(y[at]) * upstream;
                }
            }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, Real epsilon) {
    require_nonempty(x, "layer_norm");
    const auto [rows, cols] = as_rows(x);
    if (gain.size() != cols || bias.size() != cols)
        throw std::invalid_argument("layer_norm: gain " + shape_string(gain.shape()) + " / bias " +
                                    shape_string(bias.shape()) + " do not fit " + shape_string(x.shape()));
    std::vector<Real> out(x.size());
    std::vector<Real> normalized(x.size());
    std::vector<Real> inv_std(rows);
    const auto in = x.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const Real* row = in.data() + r * cols;
        Real mu = 0;
        for (std::size_t c = 0; c < cols; ++c) mu += row[c];
        mu /= static_cast<Real>(cols);
        Real var = 0;
        for (std::size_t c = 0; c < cols; ++c) var += (row[c] - mu) * (row[c] - mu);
        var /= static_cast<Real>(cols);
        inv_std[r] = 1.0 / std::sqrt(var + epsilon);
        for (std::size_t c = 0; c < cols; ++c) {
            const Real xh = (row[c] - mu) * inv_std[r];
            normalized[r * cols + c] = xh;
            out[r * cols + c] = xh * gain.data()[c] + bias.data()[c];
        }
    }
    return finish(x.shape(), std::move(out), {x.node(), gain.node(), bias.node()},
                  [rows, cols, normalized = std::move(normalized), inv_std = std::move(inv_std)](Node& self) {
                      const auto& gain_v = self.parents[1]->value;
                      const Real* g = self.grad.data();
                      if (auto gg = sink(self, 1); !gg.empty())
                          for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t c = 0; c < cols; ++c)
                                  gg[c] += g[r * cols + c] * normalized[r * cols + c];
                      if (auto gb = sink(self, 2); !gb.empty())
                          for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
                      auto gx = sink(self, 0);
                      if (gx.empty()) return;
                      const Real n = static_cast<Real>(cols);
                      for (std::size_t r = 0; r < rows; ++r) {
                          Real sum_g = 0, sum_gx = 0;
                          for (std::size_t c = 0; c < cols; ++c) {
                              const Real gh = g[r * cols + c] * gain_v[c];
                              sum_g += gh;
                              sum_gx += gh * normalized[r * cols + c];
                          }
                          for (std::size_t c = 0; c < cols; ++c) {
                              const Real gh = g[r * cols + c] * gain_v[c];
                              gx[r * cols + c] +=
                                  inv_std[r] / n * (n * gh - sum_g - normalized[r * cols + c] * sum_gx);
                          }
                      }
                  });
}

// ---------------------------------------------------------------------------
// Structural

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    const Shape& first = parts[0].shape();
    if (axis >= first.size())
        throw std::invalid_argument("concat: axis " + std::to_string(axis) + " out of range for " +
                                    shape_string(first));
    Shape shape = first;
    shape[axis] = 0;
    std::vector<std::size_t> lens;
    std::vector<NodePtr> parents;
    for (const Tensor& part : parts) {
        Shape probe = part.shape();
        if (probe.size() != first.size())
            throw std::invalid_argument("concat: rank mismatch " + shape_string(first) + " vs " +
                                        shape_string(probe));
        const std::size_t len = probe[axis];
        probe[axis] = first[axis];
        if (probe != first)
            throw std::invalid_argument("concat: shapes " + shape_string(first) + " and " +
                                        shape_string(part.shape()) + " differ off axis " + std::to_string(axis));
        shape[axis] += len;
        lens.push_back(len);
        parents.push_back(part.node());
    }
    const AxisSplit s = split_axis(shape, axis, "concat");
    std::vector<Real> out(shape_size(shape));
    std::size_t offset = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        const auto in = parts[p].data();
        const std::size_t block = lens[p] * s.inner;
        for (std::size_t o = 0; o < s.outer; ++o)
            std::copy_n(in.data() + o * block, block, out.data() + o * s.len * s.inner + offset * s.inner);
        offset += lens[p];
    }
    return finish(std::move(shape), std::move(out), std::move(parents), [s, lens](Node& self) {
        std::size_t offset = 0;
        for (std::size_t p = 0; p < lens.size(); ++p) {
            const std::size_t block = lens[p] * s.inner;
            if (auto g = sink(self, p); !g.empty())
                for (std::size_t o = 0; o < s.outer; ++o)
                    for (std::size_t i = 0; i < block; ++i)
                        g[o * block + i] += self.grad[o * s.len * s.inner + offset * s.inner + i];
            offset += lens[p];
        }
    });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
    const AxisSplit s = split_axis(x.shape(), axis, "slice");
    if (begin >= end || end > s.len)
        throw std::invalid_argument("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                                    ") invalid for axis " + std::to_string(axis) + " of " + shape_string(x.shape()));
    Shape shape = x.shape();
    shape[axis] = end - begin;
    const std::size_t block = (end - begin) * s.inner;
    std::vector<Real> out(s.outer * block);
    const auto in = x.data();
    for (std::size_t o = 0; o < s.outer; ++o)
        std::copy_n(in.data() + o * s.len * s.inner + begin * s.inner, block, out.data() + o * block);
    return finish(std::move(shape), std::move(out), {x.node()}, [s, begin, block](Node& self) {
        auto g = sink(self, 0);
        for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t i = 0; i < block; ++i)
                g[o * s.len * s.inner + begin * s.inner + i] += self.grad[o * block + i];
    });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_size(shape) != x.size())
        throw std::invalid_argument("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
    std::vector<Real> out(x.data().begin(), x.data().end());
    return finish(std::move(shape), std::move(out), {x.node()}, [](Node& self) {
        auto g = sink(self, 0);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

Tensor embed_lookup(const Tensor& table, std::span<const int> ids) {
    require_rank(table, 2, "embed_lookup");
    if (ids.empty()) throw std::invalid_argument("embed_lookup: zero-size input");
    const std::size_t vocab = table.dim(0), width = table.dim(1);
    std::vector<int> rows(ids.begin(), ids.end());
    std::vector<Real> out(rows.size() * width);
    for (std::size_t t = 0; t < rows.size(); ++t) {
        if (rows[t] < 0 || static_cast<std::size_t>(rows[t]) >= vocab)
            throw std::out_of_range("embed_lookup: id " + std::to_string(rows[t]) + " outside table of " +
                                    std::to_string(vocab) + " rows");
        std::copy_n(table.data().data() + rows[t] * width, width, out.data() + t * width);
    }
    const std::size_t count = rows.size();
    return finish({count, width}, std::move(out), {table.node()}, [rows = std::move(rows), width](Node& self) {
        auto g = sink(self, 0);
        for (std::size_t t = 0; t < rows.size(); ++t)
            for (std::size_t c = 0; c < width; ++c) g[rows[t] * width + c] += self.grad[t * width + c];
    });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& x) {
    require_nonempty(x, "sum");
    Real total = 0;
    for (Real v : x.data()) total += v;
    return finish({1}, {total}, {x.node()}, [](Node& self) {
        auto g = sink(self, 0);
        for (Real& v : g) v += self.grad[0];
    });
}

Tensor mean(const Tensor& x) {
    require_nonempty(x, "mean");
    return scale(sum(x), 1.0 / static_cast<Real>(x.size()));
}

Tensor mean_rows(const Tensor& x) {
    require_nonempty(x, "mean_rows");
    require_rank(x, 2, "mean_rows");
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    std::vector<Real> out(cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out[c] += x.data()[r * cols + c];
    const Real inv = 1.0 / static_cast<Real>(rows);
    for (Real& v : out) v *= inv;
    return finish({cols}, std::move(out), {x.node()}, [rows, cols, inv](Node& self) {
        auto g = sink(self, 0);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += self.grad[c] * inv;
    });
}

// ---------------------------------------------------------------------------
// Gradient reversal and dropout

Tensor grad_reverse(const Tensor& x, Real lambda) {
    if (!(lambda >= 0) || !std::isfinite(lambda))
        throw std::invalid_argument("grad_reverse: lambda must be finite and non-negative, got " +
                                    std::to_string(lambda));
    std::vector<Real> out(x.data().begin(), x.data().end());
    return finish(x.shape(), std::move(out), {x.node()}, [lambda](Node& self) {
        auto g = sink(self, 0);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += -lambda * self.grad[i];
    });
}

Tensor dropout(const Tensor& x, Real rate, std::mt19937_64& rng) {
    if (!(rate >= 0 && rate < 1)) throw std::invalid_argument("dropout: rate must lie in [0, 1)");
    if (rate == 0) return x;
    const Real keep_scale = 1.0 / (1.0 - rate);
    std::bernoulli_distribution keep(1.0 - rate);
    std::vector<Real> mask(x.size());
    for (Real& m : mask) m = keep(rng) ? keep_scale : 0.0;
    std::vector<Real> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * mask[i];
    return finish(x.shape(), std::move(out), {x.node()}, [mask = std::move(mask)](Node& self) {
        auto g = sink(self, 0);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
    });
}

}  // namespace capgen
