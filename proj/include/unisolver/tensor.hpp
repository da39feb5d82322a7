#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace unisolver {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

// One node of the define-by-run computation graph. Nodes are created in
// monotonically increasing id order, so every parent id precedes its
// children; sorting reachable nodes by id yields a deterministic
// topological order for the reverse sweep.
struct TensorNode {
    std::int64_t id = -1;
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward_fn;
};

// Handle to a graph node. Copies share the node. All arithmetic is double
// precision; forward ops never mutate their inputs, they allocate fresh
// nodes, so a graph can be re-walked or differentiated after the fact.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor constant(Shape shape, double v, bool requires_grad = false);
    static Tensor from_vector(Shape shape, std::vector<double> data,
                              bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t ndim() const { return shape().size(); }
    std::size_t size() const;
    double item() const;

    std::vector<double>& data();
    const std::vector<double>& data() const;

    bool requires_grad() const;
    std::int64_t id() const;

    bool has_grad() const;
    const std::vector<double>& grad() const;
    void clear_grad();

    std::shared_ptr<TensorNode> node() const { return node_; }
    static Tensor wrap(std::shared_ptr<TensorNode> node);

private:
    std::shared_ptr<TensorNode> node_;
};

// --- graph construction -------------------------------------------------

// Elementwise binary ops broadcast when the right operand is a scalar or
// matches a trailing suffix of the left shape (and symmetrically for the
// commutative ops). Anything else is a shape error.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);

Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] x [k,n]
Tensor transpose(const Tensor& a);                // 2-D only
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
std::vector<Tensor> split(const Tensor& a, std::size_t axis,
                          const std::vector<std::size_t>& sizes);
// Repeats a [1, d] (or [d]) tensor into [n, d]; gradient sums over rows.
Tensor repeat_rows(const Tensor& a, std::size_t n);
// Element reordering: out[i] = a[index[i]], viewed with the given shape.
// Indices may repeat; the backward pass scatter-adds into the source.
Tensor gather(const Tensor& a, std::vector<std::size_t> index, Shape shape);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor softmax(const Tensor& a, std::size_t axis);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);
Tensor silu(const Tensor& a);
Tensor gelu(const Tensor& a);
// Elementwise square root; the derivative at exactly 0 is defined as 0 so a
// perfectly fit relative-error loss cannot poison the gradients with infs.
Tensor sqrt_elem(const Tensor& a);

// --- reverse sweep ------------------------------------------------------

// Reverse-mode accumulation from a scalar loss. Gradients of every
// grad-requiring node reachable from `loss` are recomputed from scratch
// (not accumulated across calls) and left on the nodes; leaves keep theirs
// until clear_grad. Two sweeps over the same graph are bit-identical.
void backward(const Tensor& loss);

// Central finite differences of a scalar function at x, step h per element.
// The probe tensors handed to f are fresh non-graph copies.
Tensor finite_diff_gradient(const std::function<double(const Tensor&)>& f,
                            const Tensor& x, double h = 1e-5);

void check_finite(const Tensor& t, const std::string& context);

}  // namespace unisolver
