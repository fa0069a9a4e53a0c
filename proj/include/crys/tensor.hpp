#pragma once

#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "crys/errors.hpp"
#include "crys/kernels.hpp"

namespace crys {

/// Dense 2-D array of 64-bit floats with a same-shape gradient buffer.
/// The unit of all differentiable computation.
struct Tensor {
    int rows = 0;
    int cols = 0;
    std::vector<double> values;
    std::vector<double> grad;

    Tensor() = default;
    Tensor(int r, int c);
    static Tensor zeros(int r, int c) { return Tensor(r, c); }
    static Tensor from(std::initializer_list<std::initializer_list<double>> data);
    static Tensor filled(int r, int c, double v);

    long size() const { return static_cast<long>(rows) * cols; }
    double& at(int i, int j) { return values[static_cast<std::size_t>(i) * cols + j]; }
    double at(int i, int j) const { return values[static_cast<std::size_t>(i) * cols + j]; }
    double& grad_at(int i, int j) { return grad[static_cast<std::size_t>(i) * cols + j]; }
    double grad_at(int i, int j) const { return grad[static_cast<std::size_t>(i) * cols + j]; }

    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
    bool all_finite() const;
    /// Throws NumericalError if any stored value is NaN or Inf.
    void check_finite(const std::string& what) const;
};

enum class Activation { Sigmoid, Softplus, Relu };

class Tape;

/// Lightweight handle to a value node on a tape.
class Var {
public:
    Var() = default;
    int rows() const;
    int cols() const;
    const Tensor& tensor() const;
    /// Value of a 1x1 node.
    double scalar() const;

private:
    friend class Tape;
    Var(Tape* tape, int node) : tape_(tape), node_(node) {}
    Tape* tape_ = nullptr;
    int node_ = -1;
};

/// Reverse-mode tape. A forward pass records one node per operation; backward
/// replays the nodes in reverse, accumulating gradients with += so tensors
/// that feed several downstream uses receive the sum of all contributions.
/// Parameter leaves alias external Tensors (typically ParamStore entries), so
/// their gradients survive the tape and are zeroed by the optimizer, not here.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Leaf aliasing an external tensor; backward accumulates into its grad.
    Var param(Tensor& external);
    /// Leaf owned by the tape; gradients reaching it are discarded.
    Var constant(Tensor value);

    // out[i,j] = sum_k x[i,k] W[k,j] + b[0,j]
    Var affine(Var x, Var w, Var b);
    Var matmul(Var a, Var b);
    /// a[n x k] * b[m x k]^T -> [n x m]
    Var matmul_nt(Var a, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    /// Elementwise product.
    Var mul(Var a, Var b);
    Var scale(Var a, double c);
    Var activation(Var a, Activation kind);
    /// out[i, :] = a[rows[i], :]
    Var row_gather(Var a, std::vector<int> rows);
    /// out[r, :] = sum of a[m, :] over m with dst[m] == r, ascending m.
    Var row_scatter_sum(Var a, std::vector<int> dst, int out_rows);
    Var concat_cols(std::span<const Var> parts);
    /// out[i, :] = w[i] * a[i, :]
    Var scale_rows(Var a, std::vector<double> w);
    /// Arithmetic mean over all rows -> [1 x c]. DomainError on zero rows.
    Var mean_rows(Var a);
    /// Per-segment row means; offsets has size G+1. -> [G x c]
    Var segment_mean_rows(Var a, std::vector<int> offsets);
    Var sum_all(Var a);
    /// L2-normalize each row. NumericalError on a zero-norm row.
    Var row_normalize(Var a);
    /// Mean softmax cross-entropy over rows against integer labels -> [1 x 1].
    Var softmax_xent(Var logits, std::vector<int> labels);

    struct NtXentOut {
        Var loss;
        bool has_positives = false;
    };
    /// NT-Xent over a precomputed similarity matrix. For each ordered pair
    /// (i, j), i != j, with equal labels: -log( exp(s_ij / tau) /
    /// sum_{k != i} exp(s_ik / tau) ), averaged over all such pairs. A batch
    /// with no positive pair yields a constant 0 loss and has_positives=false.
    NtXentOut ntxent_from_sims(Var sims, std::vector<int> labels, double tau);

    /// Seed d(out)/d(out) = 1 and run all recorded backward rules in reverse.
    void backward(Var scalar_out);

    const Tensor& value_of(Var v) const;
    Tensor& node_tensor(Var v); // exposes the grad buffer of any node (tests)

    int num_nodes() const { return static_cast<int>(nodes_.size()); }

private:
    struct Node {
        Tensor owned;
        Tensor* ext = nullptr;
        std::function<void()> back; // empty for leaves
        Tensor& t() { return ext ? *ext : owned; }
        const Tensor& t() const { return ext ? *ext : owned; }
    };

    Var push(Tensor value);
    Node& node(Var v) { return *nodes_[static_cast<std::size_t>(v.node_)]; }
    const Node& node(Var v) const { return *nodes_[static_cast<std::size_t>(v.node_)]; }
    Tensor& tn(Var v) { return node(v).t(); }

    static void require(bool cond, const std::string& msg);

    std::vector<std::unique_ptr<Node>> nodes_;
};

inline std::string shape_str(const Tensor& t) {
    return "[" + std::to_string(t.rows) + "x" + std::to_string(t.cols) + "]";
}

} // namespace crys
