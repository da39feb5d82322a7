#include "unisolver/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace unisolver {

namespace {

std::atomic<std::int64_t> g_next_id{0};

std::shared_ptr<TensorNode> new_node(Shape shape, std::vector<double> value,
                                     bool requires_grad) {
    auto n = std::make_shared<TensorNode>();
    n->id = g_next_id.fetch_add(1);
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return n;
}

Tensor make_op(Shape shape, std::vector<double> value,
               std::vector<Tensor> parents,
               std::function<void(TensorNode&)> bw) {
    bool rg = false;
    for (const auto& p : parents) rg = rg || p.requires_grad();
    auto n = new_node(std::move(shape), std::move(value), rg);
    for (const auto& p : parents) n->parents.push_back(p.node());
    if (rg) n->backward_fn = std::move(bw);
    return Tensor::wrap(n);
}

void accumulate(TensorNode& parent, std::size_t idx, double v) {
    if (parent.requires_grad) parent.grad[idx] += v;
}

// Broadcast classification: `small` must be a scalar (size 1) or match a
// trailing suffix of `big`.
enum class BcKind { Same, Scalar, Suffix };

BcKind bc_kind(const Shape& big, const Shape& small) {
    if (big == small) return BcKind::Same;
    if (shape_size(small) == 1) return BcKind::Scalar;
    if (small.size() <= big.size()) {
        bool ok = true;
        for (std::size_t i = 0; i < small.size(); ++i) {
            if (small[small.size() - 1 - i] != big[big.size() - 1 - i]) {
                ok = false;
                break;
            }
        }
        if (ok) return BcKind::Suffix;
    }
    throw std::invalid_argument("broadcast mismatch: " + shape_str(big) +
                                " vs " + shape_str(small));
}

// b-index for flat output index i under the given broadcast kind.
inline std::size_t bc_index(BcKind kind, std::size_t i, std::size_t small_size) {
    switch (kind) {
        case BcKind::Same: return i;
        case BcKind::Scalar: return 0;
        default: return i % small_size;
    }
}

// --- raw matmul kernels; all accumulate into C --------------------------

void mm_nn(const double* A, const double* B, double* C, std::size_t m,
           std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* a_row = A + i * k;
        double* c_row = C + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double a = a_row[p];
            const double* b_row = B + p * n;
            for (std::size_t j = 0; j < n; ++j) c_row[j] += a * b_row[j];
        }
    }
}

// C[m,n] += A[m,k] * B[n,k]^T
void mm_nt(const double* A, const double* B, double* C, std::size_t m,
           std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* a_row = A + i * k;
        double* c_row = C + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* b_row = B + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += a_row[p] * b_row[p];
            c_row[j] += acc;
        }
    }
}

// C[k,n] += A[m,k]^T * B[m,n]
void mm_tn(const double* A, const double* B, double* C, std::size_t m,
           std::size_t k, std::size_t n) {
    for (std::size_t p = 0; p < m; ++p) {
        const double* a_row = A + p * k;
        const double* b_row = B + p * n;
        for (std::size_t i = 0; i < k; ++i) {
            const double a = a_row[i];
            double* c_row = C + i * n;
            for (std::size_t j = 0; j < n; ++j) c_row[j] += a * b_row[j];
        }
    }
}

struct AxisSplit {
    std::size_t outer, axis, inner;
};

AxisSplit axis_split(const Shape& shape, std::size_t axis) {
    if (axis >= shape.size())
        throw std::invalid_argument("axis " + std::to_string(axis) +
                                    " out of range for shape " + shape_str(shape));
    AxisSplit s{1, shape[axis], 1};
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

// --- Tensor basics --------------------------------------------------------

Tensor Tensor::wrap(std::shared_ptr<TensorNode> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    std::size_t n = shape_size(shape);
    return wrap(new_node(std::move(shape), std::vector<double>(n, 0.0),
                         requires_grad));
}

Tensor Tensor::constant(Shape shape, double v, bool requires_grad) {
    std::size_t n = shape_size(shape);
    return wrap(new_node(std::move(shape), std::vector<double>(n, v),
                         requires_grad));
}

Tensor Tensor::from_vector(Shape shape, std::vector<double> data,
                           bool requires_grad) {
    if (shape_size(shape) != data.size())
        throw std::invalid_argument("from_vector: shape " + shape_str(shape) +
                                    " inconsistent with data length " +
                                    std::to_string(data.size()));
    return wrap(new_node(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return from_vector({1}, {v}, requires_grad);
}

const Shape& Tensor::shape() const {
    if (!node_) throw std::runtime_error("shape() on undefined tensor");
    return node_->shape;
}

std::size_t Tensor::size() const { return node_ ? node_->value.size() : 0; }

double Tensor::item() const {
    if (size() != 1)
        throw std::invalid_argument("item() requires a size-1 tensor, got " +
                                    shape_str(shape()));
    return node_->value[0];
}

std::vector<double>& Tensor::data() {
    if (!node_) throw std::runtime_error("data() on undefined tensor");
    return node_->value;
}

const std::vector<double>& Tensor::data() const {
    if (!node_) throw std::runtime_error("data() on undefined tensor");
    return node_->value;
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

std::int64_t Tensor::id() const { return node_ ? node_->id : -1; }

bool Tensor::has_grad() const {
    return node_ && node_->grad.size() == node_->value.size();
}

const std::vector<double>& Tensor::grad() const {
    if (!has_grad())
        throw std::runtime_error("grad() called before backward populated it");
    return node_->grad;
}

void Tensor::clear_grad() {
    if (node_) node_->grad.clear();
}

// --- elementwise binary ---------------------------------------------------

namespace {

Tensor broadcast_binary(const Tensor& big, const Tensor& small, bool subtract,
                        bool multiply) {
    BcKind kind = bc_kind(big.shape(), small.shape());
    const auto& a = big.data();
    const auto& b = small.data();
    const std::size_t sn = b.size();
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        double rhs = b[bc_index(kind, i, sn)];
        out[i] = multiply ? a[i] * rhs : (subtract ? a[i] - rhs : a[i] + rhs);
    }
    return make_op(big.shape(), std::move(out), {big, small},
                   [kind, sn, subtract, multiply](TensorNode& self) {
                       auto& pa = *self.parents[0];
                       auto& pb = *self.parents[1];
                       for (std::size_t i = 0; i < self.grad.size(); ++i) {
                           double g = self.grad[i];
                           std::size_t bi = bc_index(kind, i, sn);
                           if (multiply) {
                               accumulate(pa, i, g * pb.value[bi]);
                               accumulate(pb, bi, g * pa.value[i]);
                           } else {
                               accumulate(pa, i, g);
                               accumulate(pb, bi, subtract ? -g : g);
                           }
                       }
                   });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.size() < b.size()) return broadcast_binary(b, a, false, false);
    return broadcast_binary(a, b, false, false);
}

Tensor sub(const Tensor& a, const Tensor& b) {
    if (a.size() < b.size())
        throw std::invalid_argument("sub: minuend may not broadcast, shapes " +
                                    shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    return broadcast_binary(a, b, true, false);
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.size() < b.size()) return broadcast_binary(b, a, false, true);
    return broadcast_binary(a, b, false, true);
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor scale(const Tensor& a, double c) {
    std::vector<double> out(a.data());
    for (double& v : out) v *= c;
    return make_op(a.shape(), std::move(out), {a}, [c](TensorNode& self) {
        auto& p = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            accumulate(p, i, c * self.grad[i]);
    });
}

Tensor add_scalar(const Tensor& a, double c) {
    std::vector<double> out(a.data());
    for (double& v : out) v += c;
    return make_op(a.shape(), std::move(out), {a}, [](TensorNode& self) {
        auto& p = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            accumulate(p, i, self.grad[i]);
    });
}

// --- matmul / transpose / reshape ------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2)
        throw std::invalid_argument("matmul expects 2-D operands, got " +
                                    shape_str(a.shape()) + " and " +
                                    shape_str(b.shape()));
    std::size_t m = a.shape()[0], k = a.shape()[1];
    std::size_t k2 = b.shape()[0], n = b.shape()[1];
    if (k != k2)
        throw std::invalid_argument("matmul inner dimension mismatch: " +
                                    shape_str(a.shape()) + " x " +
                                    shape_str(b.shape()));
    std::vector<double> out(m * n, 0.0);
    mm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
    return make_op({m, n}, std::move(out), {a, b},
                   [m, k, n](TensorNode& self) {
                       auto& pa = *self.parents[0];
                       auto& pb = *self.parents[1];
                       if (pa.requires_grad)
                           mm_nt(self.grad.data(), pb.value.data(),
                                 pa.grad.data(), m, n, k);
                       if (pb.requires_grad)
                           mm_tn(pa.value.data(), self.grad.data(),
                                 pb.grad.data(), m, k, n);
                   });
}

Tensor transpose(const Tensor& a) {
    if (a.ndim() != 2)
        throw std::invalid_argument("transpose expects a 2-D tensor, got " +
                                    shape_str(a.shape()));
    std::size_t m = a.shape()[0], n = a.shape()[1];
    std::vector<double> out(m * n);
    const auto& v = a.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = v[i * n + j];
    return make_op({n, m}, std::move(out), {a}, [m, n](TensorNode& self) {
        auto& p = *self.parents[0];
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
                accumulate(p, i * n + j, self.grad[j * m + i]);
    });
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_size(shape) != a.size())
        throw std::invalid_argument("reshape: cannot view " +
                                    shape_str(a.shape()) + " as " +
                                    shape_str(shape));
    return make_op(std::move(shape), a.data(), {a}, [](TensorNode& self) {
        auto& p = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            accumulate(p, i, self.grad[i]);
    });
}

// --- concat / split / repeat ------------------------------------------------

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw std::invalid_argument("concat of zero tensors");
    const Shape& base = parts[0].shape();
    AxisSplit s0 = axis_split(base, axis);
    std::size_t axis_total = 0;
    for (const auto& p : parts) {
        if (p.ndim() != base.size())
            throw std::invalid_argument("concat rank mismatch: " +
                                        shape_str(base) + " vs " +
                                        shape_str(p.shape()));
        for (std::size_t i = 0; i < base.size(); ++i) {
            if (i != axis && p.shape()[i] != base[i])
                throw std::invalid_argument("concat shape mismatch: " +
                                            shape_str(base) + " vs " +
                                            shape_str(p.shape()));
        }
        axis_total += p.shape()[axis];
    }
    Shape out_shape = base;
    out_shape[axis] = axis_total;
    std::vector<double> out(shape_size(out_shape));
    std::vector<std::size_t> axis_sizes;
    for (const auto& p : parts) axis_sizes.push_back(p.shape()[axis]);

    std::size_t row = axis_total * s0.inner;
    for (std::size_t o = 0; o < s0.outer; ++o) {
        std::size_t col = 0;
        for (std::size_t pi = 0; pi < parts.size(); ++pi) {
            std::size_t block = axis_sizes[pi] * s0.inner;
            const auto& src = parts[pi].data();
            std::copy(src.begin() + o * block, src.begin() + (o + 1) * block,
                      out.begin() + o * row + col);
            col += block;
        }
    }
    std::vector<Tensor> parent_list(parts.begin(), parts.end());
    return make_op(out_shape, std::move(out), parent_list,
                   [s0, axis_sizes, axis_total](TensorNode& self) {
                       std::size_t row = axis_total * s0.inner;
                       for (std::size_t o = 0; o < s0.outer; ++o) {
                           std::size_t col = 0;
                           for (std::size_t pi = 0; pi < self.parents.size(); ++pi) {
                               auto& p = *self.parents[pi];
                               std::size_t block = axis_sizes[pi] * s0.inner;
                               if (p.requires_grad) {
                                   for (std::size_t i = 0; i < block; ++i)
                                       p.grad[o * block + i] +=
                                           self.grad[o * row + col + i];
                               }
                               col += block;
                           }
                       }
                   });
}

std::vector<Tensor> split(const Tensor& a, std::size_t axis,
                          const std::vector<std::size_t>& sizes) {
    AxisSplit s = axis_split(a.shape(), axis);
    std::size_t total = 0;
    for (std::size_t v : sizes) total += v;
    if (total != s.axis)
        throw std::invalid_argument("split sizes sum to " + std::to_string(total) +
                                    ", axis has " + std::to_string(s.axis));
    std::vector<Tensor> outs;
    std::size_t row = s.axis * s.inner;
    std::size_t col = 0;
    for (std::size_t part : sizes) {
        Shape shape = a.shape();
        shape[axis] = part;
        std::size_t block = part * s.inner;
        std::vector<double> v(s.outer * block);
        const auto& src = a.data();
        for (std::size_t o = 0; o < s.outer; ++o)
            std::copy(src.begin() + o * row + col,
                      src.begin() + o * row + col + block,
                      v.begin() + o * block);
        std::size_t col_here = col;
        outs.push_back(make_op(shape, std::move(v), {a},
                               [s, row, block, col_here](TensorNode& self) {
                                   auto& p = *self.parents[0];
                                   for (std::size_t o = 0; o < s.outer; ++o)
                                       for (std::size_t i = 0; i < block; ++i)
                                           accumulate(p, o * row + col_here + i,
                                                      self.grad[o * block + i]);
                               }));
        col += block;
    }
    return outs;
}

Tensor repeat_rows(const Tensor& a, std::size_t n) {
    std::size_t d;
    if (a.ndim() == 1) d = a.shape()[0];
    else if (a.ndim() == 2 && a.shape()[0] == 1) d = a.shape()[1];
    else
        throw std::invalid_argument("repeat_rows expects [d] or [1, d], got " +
                                    shape_str(a.shape()));
    std::vector<double> out(n * d);
    const auto& src = a.data();
    for (std::size_t r = 0; r < n; ++r)
        std::copy(src.begin(), src.end(), out.begin() + r * d);
    return make_op({n, d}, std::move(out), {a}, [n, d](TensorNode& self) {
        auto& p = *self.parents[0];
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t i = 0; i < d; ++i)
                accumulate(p, i, self.grad[r * d + i]);
    });
}

Tensor gather(const Tensor& a, std::vector<std::size_t> index, Shape shape) {
    if (shape_size(shape) != index.size()) {
        throw std::invalid_argument(
            "gather: " + std::to_string(index.size()) +
            " indices cannot fill " + shape_str(shape));
    }
    const auto& src = a.data();
    std::vector<double> out(index.size());
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= src.size()) {
            throw std::invalid_argument(
                "gather: index " + std::to_string(index[i]) +
                " out of range for " + shape_str(a.shape()));
        }
        out[i] = src[index[i]];
    }
    auto idx = std::make_shared<const std::vector<std::size_t>>(std::move(index));
    return make_op(std::move(shape), std::move(out), {a},
                   [idx](TensorNode& self) {
                       auto& p = *self.parents[0];
                       for (std::size_t i = 0; i < idx->size(); ++i)
                           accumulate(p, (*idx)[i], self.grad[i]);
                   });
}

// --- reductions -------------------------------------------------------------

Tensor sum(const Tensor& a) {
    double total = 0.0;
    for (double v : a.data()) total += v;
    return make_op({1}, {total}, {a}, [](TensorNode& self) {
        auto& p = *self.parents[0];
        double g = self.grad[0];
        for (std::size_t i = 0; i < p.value.size(); ++i) accumulate(p, i, g);
    });
}

Tensor mean(const Tensor& a) {
    if (a.size() == 0) throw std::invalid_argument("mean of empty tensor");
    double total = 0.0;
    for (double v : a.data()) total += v;
    double inv = 1.0 / static_cast<double>(a.size());
    return make_op({1}, {total * inv}, {a}, [inv](TensorNode& self) {
        auto& p = *self.parents[0];
        double g = self.grad[0] * inv;
        for (std::size_t i = 0; i < p.value.size(); ++i) accumulate(p, i, g);
    });
}

// --- nonlinearities -----------------------------------------------------------

Tensor softmax(const Tensor& a, std::size_t axis) {
    AxisSplit s = axis_split(a.shape(), axis);
    const auto& v = a.data();
    std::vector<double> out(v.size());
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t in = 0; in < s.inner; ++in) {
            std::size_t base = o * s.axis * s.inner + in;
            double mx = v[base];
            for (std::size_t j = 1; j < s.axis; ++j)
                mx = std::max(mx, v[base + j * s.inner]);
            double denom = 0.0;
            for (std::size_t j = 0; j < s.axis; ++j) {
                double e = std::exp(v[base + j * s.inner] - mx);
                out[base + j * s.inner] = e;
                denom += e;
            }
            for (std::size_t j = 0; j < s.axis; ++j)
                out[base + j * s.inner] /= denom;
        }
    }
    return make_op(a.shape(), std::move(out), {a}, [s](TensorNode& self) {
        auto& p = *self.parents[0];
        for (std::size_t o = 0; o < s.outer; ++o) {
            for (std::size_t in = 0; in < s.inner; ++in) {
                std::size_t base = o * s.axis * s.inner + in;
                double dot = 0.0;
                for (std::size_t j = 0; j < s.axis; ++j) {
                    std::size_t idx = base + j * s.inner;
                    dot += self.value[idx] * self.grad[idx];
                }
                for (std::size_t j = 0; j < s.axis; ++j) {
                    std::size_t idx = base + j * s.inner;
                    accumulate(p, idx, self.value[idx] * (self.grad[idx] - dot));
                }
            }
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
    if (x.ndim() < 1)
        throw std::invalid_argument("layer_norm needs at least 1-D input");
    std::size_t d = x.shape().back();
    if (gain.size() != d || bias.size() != d)
        throw std::invalid_argument(
            "layer_norm affine shape mismatch: feature dim " + std::to_string(d) +
            ", gain " + shape_str(gain.shape()) + ", bias " +
            shape_str(bias.shape()));
    std::size_t rows = x.size() / d;
    const auto& v = x.data();
    const auto& g = gain.data();
    const auto& b = bias.data();
    std::vector<double> out(v.size());
    auto xhat = std::make_shared<std::vector<double>>(v.size());
    auto inv_std = std::make_shared<std::vector<double>>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = v.data() + r * d;
        double mu = 0.0;
        for (std::size_t i = 0; i < d; ++i) mu += row[i];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            double c = row[i] - mu;
            var += c * c;
        }
        var /= static_cast<double>(d);
        double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = is;
        for (std::size_t i = 0; i < d; ++i) {
            double xh = (row[i] - mu) * is;
            (*xhat)[r * d + i] = xh;
            out[r * d + i] = xh * g[i] + b[i];
        }
    }
    return make_op(x.shape(), std::move(out), {x, gain, bias},
                   [rows, d, xhat, inv_std](TensorNode& self) {
                       auto& px = *self.parents[0];
                       auto& pg = *self.parents[1];
                       auto& pb = *self.parents[2];
                       for (std::size_t r = 0; r < rows; ++r) {
                           const double* gy = self.grad.data() + r * d;
                           const double* xh = xhat->data() + r * d;
                           double m1 = 0.0, m2 = 0.0;
                           for (std::size_t i = 0; i < d; ++i) {
                               double dxh = gy[i] * pg.value[i];
                               m1 += dxh;
                               m2 += dxh * xh[i];
                           }
                           m1 /= static_cast<double>(d);
                           m2 /= static_cast<double>(d);
                           double is = (*inv_std)[r];
                           for (std::size_t i = 0; i < d; ++i) {
                               double dxh = gy[i] * pg.value[i];
                               accumulate(px, r * d + i,
                                          is * (dxh - m1 - xh[i] * m2));
                               accumulate(pg, i, gy[i] * xh[i]);
                               accumulate(pb, i, gy[i]);
                           }
                       }
                   });
}

Tensor silu(const Tensor& a) {
    const auto& v = a.data();
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        double s = 1.0 / (1.0 + std::exp(-v[i]));
        out[i] = v[i] * s;
    }
    return make_op(a.shape(), std::move(out), {a}, [](TensorNode& self) {
        auto& p = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            double x = p.value[i];
            double s = 1.0 / (1.0 + std::exp(-x));
            accumulate(p, i, self.grad[i] * s * (1.0 + x * (1.0 - s)));
        }
    });
}

Tensor gelu(const Tensor& a) {
    const auto& v = a.data();
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        out[i] = 0.5 * v[i] * (1.0 + std::erf(v[i] * M_SQRT1_2));
    return make_op(a.shape(), std::move(out), {a}, [](TensorNode& self) {
        auto& p = *self.parents[0];
        const double inv_sqrt_2pi = 0.3989422804014327;
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            double x = p.value[i];
            double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
            double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
            accumulate(p, i, self.grad[i] * (cdf + x * pdf));
        }
    });
}

Tensor sqrt_elem(const Tensor& a) {
    const auto& v = a.data();
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (v[i] < 0.0)
            throw std::invalid_argument("sqrt_elem of negative value " +
                                        std::to_string(v[i]));
        out[i] = std::sqrt(v[i]);
    }
    return make_op(a.shape(), std::move(out), {a}, [](TensorNode& self) {
        auto& p = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            double y = self.value[i];
            if (y > 0.0) accumulate(p, i, self.grad[i] * 0.5 / y);
        }
    });
}

// --- reverse sweep -------------------------------------------------------------

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1)
        throw std::invalid_argument("backward expects a defined scalar loss");
    if (!loss.requires_grad())
        throw std::invalid_argument("backward: loss does not require grad");

    // Collect the reachable grad-requiring subgraph.
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> seen;
    std::vector<TensorNode*> stack{loss.node().get()};
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        TensorNode* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (auto& p : n->parents) {
            if (p->requires_grad && !seen.count(p.get())) {
                seen.insert(p.get());
                stack.push_back(p.get());
            }
        }
    }
    // Creation ids are a topological order of the DAG; descending ids give
    // the reverse sweep and make the accumulation order deterministic.
    std::sort(order.begin(), order.end(),
              [](TensorNode* a, TensorNode* b) { return a->id > b->id; });

    for (TensorNode* n : order) n->grad.assign(n->value.size(), 0.0);
    loss.node()->grad[0] = 1.0;
    for (TensorNode* n : order)
        if (n->backward_fn) n->backward_fn(*n);
}

Tensor finite_diff_gradient(const std::function<double(const Tensor&)>& f,
                            const Tensor& x, double h) {
    if (h <= 0.0) throw std::invalid_argument("finite_diff_gradient: h must be > 0");
    std::vector<double> base = x.data();
    std::vector<double> grad(base.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
        std::vector<double> plus = base, minus = base;
        plus[i] += h;
        minus[i] -= h;
        double fp = f(Tensor::from_vector(x.shape(), std::move(plus)));
        double fm = f(Tensor::from_vector(x.shape(), std::move(minus)));
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return Tensor::from_vector(x.shape(), std::move(grad));
}

void check_finite(const Tensor& t, const std::string& context) {
    for (double v : t.data()) {
        if (!std::isfinite(v))
            throw std::runtime_error(context + ": non-finite value encountered");
    }
}

}  // namespace unisolver
