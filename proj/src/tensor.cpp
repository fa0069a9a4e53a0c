#include "crys/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace crys {

Tensor::Tensor(int r, int c) : rows(r), cols(c) {
    if (r < 1 || c < 1) throw DimensionError("tensor shape must be at least 1x1, got " +
                                             std::to_string(r) + "x" + std::to_string(c));
    values.assign(static_cast<std::size_t>(r) * c, 0.0);
    grad.assign(static_cast<std::size_t>(r) * c, 0.0);
}

Tensor Tensor::from(std::initializer_list<std::initializer_list<double>> data) {
    const int r = static_cast<int>(data.size());
    const int c = r > 0 ? static_cast<int>(data.begin()->size()) : 0;
    Tensor t(r, c);
    int i = 0;
    for (const auto& row : data) {
        if (static_cast<int>(row.size()) != c)
            throw DimensionError("ragged initializer for tensor");
        int j = 0;
        for (double v : row) t.at(i, j++) = v;
        ++i;
    }
    return t;
}

Tensor Tensor::filled(int r, int c, double v) {
    Tensor t(r, c);
    std::fill(t.values.begin(), t.values.end(), v);
    return t;
}

bool Tensor::all_finite() const {
    for (double v : values)
        if (!std::isfinite(v)) return false;
    return true;
}

void Tensor::check_finite(const std::string& what) const {
    if (!all_finite()) throw NumericalError(what + ": non-finite value");
}

int Var::rows() const { return tensor().rows; }
int Var::cols() const { return tensor().cols; }
const Tensor& Var::tensor() const { return tape_->value_of(*this); }

double Var::scalar() const {
    const Tensor& t = tensor();
    if (t.rows != 1 || t.cols != 1)
        throw DimensionError("scalar() requires a 1x1 tensor, got " + shape_str(t));
    return t.values[0];
}

void Tape::require(bool cond, const std::string& msg) {
    if (!cond) throw DimensionError(msg);
}

Var Tape::push(Tensor value) {
    auto n = std::make_unique<Node>();
    n->owned = std::move(value);
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::param(Tensor& external) {
    auto n = std::make_unique<Node>();
    n->ext = &external;
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant(Tensor value) { return push(std::move(value)); }

const Tensor& Tape::value_of(Var v) const { return node(v).t(); }
Tensor& Tape::node_tensor(Var v) { return node(v).t(); }

Var Tape::affine(Var x, Var w, Var b) {
    const Tensor& xt = tn(x);
    const Tensor& wt = tn(w);
    const Tensor& bt = tn(b);
    require(xt.cols == wt.rows, "affine: inner dims differ, x " + shape_str(xt) + " vs W " + shape_str(wt));
    require(bt.rows == 1 && bt.cols == wt.cols,
            "affine: bias must be [1x" + std::to_string(wt.cols) + "], got " + shape_str(bt));
    Tensor out(xt.rows, wt.cols);
    kernels::matmul(xt.values.data(), wt.values.data(), out.values.data(), xt.rows, xt.cols, wt.cols);
    for (int i = 0; i < out.rows; ++i)
        for (int j = 0; j < out.cols; ++j) out.at(i, j) += bt.values[static_cast<std::size_t>(j)];
    Var o = push(std::move(out));
    node(o).back = [this, x, w, b, o] {
        Tensor& xn = tn(x); Tensor& wn = tn(w); Tensor& bn = tn(b);
        const Tensor& on = tn(o);
        // dX += dY W^T ; dW += X^T dY ; db += column sums of dY
        kernels::matmul_nt_acc(on.grad.data(), wn.values.data(), xn.grad.data(), xn.rows, wn.cols, wn.rows);
        kernels::matmul_tn_acc(xn.values.data(), on.grad.data(), wn.grad.data(), wn.rows, xn.rows, wn.cols);
        for (int i = 0; i < on.rows; ++i)
            for (int j = 0; j < on.cols; ++j) bn.grad[static_cast<std::size_t>(j)] += on.grad_at(i, j);
    };
    return o;
}

Var Tape::matmul(Var a, Var b) {
    const Tensor& at = tn(a);
    const Tensor& bt = tn(b);
    require(at.cols == bt.rows, "matmul: inner dims differ, " + shape_str(at) + " vs " + shape_str(bt));
    Tensor out(at.rows, bt.cols);
    kernels::matmul(at.values.data(), bt.values.data(), out.values.data(), at.rows, at.cols, bt.cols);
    Var o = push(std::move(out));
    node(o).back = [this, a, b, o] {
        Tensor& an = tn(a); Tensor& bn = tn(b);
        const Tensor& on = tn(o);
        kernels::matmul_nt_acc(on.grad.data(), bn.values.data(), an.grad.data(), an.rows, bn.cols, bn.rows);
        kernels::matmul_tn_acc(an.values.data(), on.grad.data(), bn.grad.data(), bn.rows, an.rows, bn.cols);
    };
    return o;
}

Var Tape::matmul_nt(Var a, Var b) {
    const Tensor& at = tn(a);
    const Tensor& bt = tn(b);
    require(at.cols == bt.cols, "matmul_nt: inner dims differ, " + shape_str(at) + " vs " + shape_str(bt));
    Tensor out(at.rows, bt.rows);
    kernels::matmul_nt_acc(at.values.data(), bt.values.data(), out.values.data(), at.rows, at.cols, bt.rows);
    Var o = push(std::move(out));
    node(o).back = [this, a, b, o] {
        Tensor& an = tn(a); Tensor& bn = tn(b);
        const Tensor& on = tn(o);
        // dA += dY B ; dB += dY^T A
        kernels::matmul_acc(on.grad.data(), bn.values.data(), an.grad.data(), an.rows, bn.rows, bn.cols);
        kernels::matmul_tn_acc(on.grad.data(), an.values.data(), bn.grad.data(), bn.rows, an.rows, an.cols);
    };
    return o;
}

Var Tape::add(Var a, Var b) {
    const Tensor& at = tn(a);
    const Tensor& bt = tn(b);
    require(at.rows == bt.rows && at.cols == bt.cols,
            "add: shape mismatch " + shape_str(at) + " vs " + shape_str(bt));
    Tensor out = at;
    for (long i = 0; i < out.size(); ++i) out.values[i] += bt.values[i];
    out.zero_grad();
    Var o = push(std::move(out));
    node(o).back = [this, a, b, o] {
        Tensor& an = tn(a); Tensor& bn = tn(b);
        const Tensor& on = tn(o);
        for (long i = 0; i < on.size(); ++i) {
            an.grad[i] += on.grad[i];
            bn.grad[i] += on.grad[i];
        }
    };
    return o;
}

Var Tape::sub(Var a, Var b) {
    const Tensor& at = tn(a);
    const Tensor& bt = tn(b);
    require(at.rows == bt.rows && at.cols == bt.cols,
            "sub: shape mismatch " + shape_str(at) + " vs " + shape_str(bt));
    Tensor out = at;
    for (long i = 0; i < out.size(); ++i) out.values[i] -= bt.values[i];
    out.zero_grad();
    Var o = push(std::move(out));
    node(o).back = [this, a, b, o] {
        Tensor& an = tn(a); Tensor& bn = tn(b);
        const Tensor& on = tn(o);
        for (long i = 0; i < on.size(); ++i) {
            an.grad[i] += on.grad[i];
            bn.grad[i] -= on.grad[i];
        }
    };
    return o;
}

Var Tape::mul(Var a, Var b) {
    const Tensor& at = tn(a);
    const Tensor& bt = tn(b);
    require(at.rows == bt.rows && at.cols == bt.cols,
            "mul: shape mismatch " + shape_str(at) + " vs " + shape_str(bt));
    Tensor out = at;
    for (long i = 0; i < out.size(); ++i) out.values[i] *= bt.values[i];
    out.zero_grad();
    Var o = push(std::move(out));
    node(o).back = [this, a, b, o] {
        Tensor& an = tn(a); Tensor& bn = tn(b);
        const Tensor& on = tn(o);
        for (long i = 0; i < on.size(); ++i) {
            an.grad[i] += bn.values[i] * on.grad[i];
            bn.grad[i] += an.values[i] * on.grad[i];
        }
    };
    return o;
}

Var Tape::scale(Var a, double c) {
    Tensor out = tn(a);
    for (double& v : out.values) v *= c;
    out.zero_grad();
    Var o = push(std::move(out));
    node(o).back = [this, a, o, c] {
        Tensor& an = tn(a);
        const Tensor& on = tn(o);
        for (long i = 0; i < on.size(); ++i) an.grad[i] += c * on.grad[i];
    };
    return o;
}

Var Tape::activation(Var a, Activation kind) {
    const Tensor& at = tn(a);
    const auto f = static_cast<kernels::Unary>(kind);
    Tensor out(at.rows, at.cols);
    kernels::unary_forward(f, at.values.data(), out.values.data(), at.size());
    Var o = push(std::move(out));
    node(o).back = [this, a, o, f] {
        Tensor& an = tn(a);
        const Tensor& on = tn(o);
        kernels::unary_backward_acc(f, an.values.data(), on.values.data(), on.grad.data(),
                                    an.grad.data(), on.size());
    };
    return o;
}

Var Tape::row_gather(Var a, std::vector<int> rows) {
    const Tensor& at = tn(a);
    for (int r : rows)
        require(r >= 0 && r < at.rows, "row_gather: index " + std::to_string(r) + " out of range for " + shape_str(at));
    Tensor out(static_cast<int>(rows.size()), at.cols);
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy_n(at.values.begin() + static_cast<long>(rows[i]) * at.cols, at.cols,
                    out.values.begin() + static_cast<long>(i) * at.cols);
    Var o = push(std::move(out));
    auto groups = std::make_shared<kernels::RowGroups>(kernels::RowGroups::build(rows, at.rows));
    node(o).back = [this, a, o, groups] {
        Tensor& an = tn(a);
        const Tensor& on = tn(o);
        // dA[r, :] += sum of dOut rows gathered from r, in recorded order
        for (int r = 0; r < an.rows; ++r) {
            double* dst = an.grad.data() + static_cast<long>(r) * an.cols;
            for (int p = groups->offsets[r]; p < groups->offsets[r + 1]; ++p) {
                const double* src = on.grad.data() + static_cast<long>(groups->members[p]) * on.cols;
                for (int j = 0; j < an.cols; ++j) dst[j] += src[j];
            }
        }
    };
    return o;
}

Var Tape::row_scatter_sum(Var a, std::vector<int> dst, int out_rows) {
    const Tensor& at = tn(a);
    require(static_cast<int>(dst.size()) == at.rows,
            "row_scatter_sum: dst size " + std::to_string(dst.size()) + " != rows of " + shape_str(at));
    for (int d : dst)
        require(d >= 0 && d < out_rows, "row_scatter_sum: target " + std::to_string(d) + " out of range");
    auto groups = std::make_shared<kernels::RowGroups>(kernels::RowGroups::build(dst, out_rows));
    Tensor out(out_rows, at.cols);
    kernels::scatter_sum_rows(*groups, at.values.data(), out.values.data(), out_rows, at.cols);
    Var o = push(std::move(out));
    auto dst_shared = std::make_shared<std::vector<int>>(std::move(dst));
    node(o).back = [this, a, o, dst_shared] {
        Tensor& an = tn(a);
        const Tensor& on = tn(o);
        kernels::gather_rows_acc(*dst_shared, on.grad.data(), an.grad.data(), an.cols);
    };
    return o;
}

Var Tape::concat_cols(std::span<const Var> parts) {
    require(!parts.empty(), "concat_cols: no inputs");
    const int rows = tn(parts[0]).rows;
    int cols = 0;
    for (Var p : parts) {
        require(tn(p).rows == rows, "concat_cols: row count mismatch");
        cols += tn(p).cols;
    }
    Tensor out(rows, cols);
    int col0 = 0;
    for (Var p : parts) {
        const Tensor& pt = tn(p);
        for (int i = 0; i < rows; ++i)
            std::copy_n(pt.values.begin() + static_cast<long>(i) * pt.cols, pt.cols,
                        out.values.begin() + static_cast<long>(i) * cols + col0);
        col0 += pt.cols;
    }
    Var o = push(std::move(out));
    std::vector<Var> parts_v(parts.begin(), parts.end());
    node(o).back = [this, parts_v, o] {
        const Tensor& on = tn(o);
        int c0 = 0;
        for (Var p : parts_v) {
            Tensor& pn = tn(p);
            for (int i = 0; i < on.rows; ++i) {
                const double* src = on.grad.data() + static_cast<long>(i) * on.cols + c0;
                double* dst = pn.grad.data() + static_cast<long>(i) * pn.cols;
                for (int j = 0; j < pn.cols; ++j) dst[j] += src[j];
            }
            c0 += pn.cols;
        }
    };
    return o;
}

Var Tape::scale_rows(Var a, std::vector<double> w) {
    const Tensor& at = tn(a);
    require(static_cast<int>(w.size()) == at.rows,
            "scale_rows: weight count " + std::to_string(w.size()) + " != rows of " + shape_str(at));
    Tensor out = at;
    for (int i = 0; i < out.rows; ++i)
        for (int j = 0; j < out.cols; ++j) out.at(i, j) *= w[static_cast<std::size_t>(i)];
    out.zero_grad();
    Var o = push(std::move(out));
    auto ws = std::make_shared<std::vector<double>>(std::move(w));
    node(o).back = [this, a, o, ws] {
        Tensor& an = tn(a);
        const Tensor& on = tn(o);
        for (int i = 0; i < on.rows; ++i)
            for (int j = 0; j < on.cols; ++j) an.grad_at(i, j) += (*ws)[static_cast<std::size_t>(i)] * on.grad_at(i, j);
    };
    return o;
}

Var Tape::mean_rows(Var a) {
    const Tensor& at = tn(a);
    if (at.rows < 1) throw DomainError("mean_rows: empty input");
    Tensor out(1, at.cols);
    for (int i = 0; i < at.rows; ++i)
        for (int j = 0; j < at.cols; ++j) out.values[static_cast<std::size_t>(j)] += at.at(i, j);
    const double inv = 1.0 / at.rows;
    for (double& v : out.values) v *= inv;
    Var o = push(std::move(out));
    node(o).back = [this, a, o, inv] {
        Tensor& an = tn(a);
        const Tensor& on = tn(o);
        for (int i = 0; i < an.rows; ++i)
            for (int j = 0; j < an.cols; ++j) an.grad_at(i, j) += inv * on.grad[static_cast<std::size_t>(j)];
    };
    return o;
}

Var Tape::segment_mean_rows(Var a, std::vector<int> offsets) {
    const Tensor& at = tn(a);
    require(offsets.size() >= 2, "segment_mean_rows: need at least one segment");
    require(offsets.front() == 0 && offsets.back() == at.rows, "segment_mean_rows: offsets must span all rows");
    const int g_count = static_cast<int>(offsets.size()) - 1;
    for (int g = 0; g < g_count; ++g)
        if (offsets[g + 1] <= offsets[g]) throw DomainError("segment_mean_rows: empty segment " + std::to_string(g));
    Tensor out(g_count, at.cols);
    for (int g = 0; g < g_count; ++g) {
        const double inv = 1.0 / (offsets[g + 1] - offsets[g]);
        for (int i = offsets[g]; i < offsets[g + 1]; ++i)
            for (int j = 0; j < at.cols; ++j) out.at(g, j) += at.at(i, j);
        for (int j = 0; j < at.cols; ++j) out.at(g, j) *= inv;
    }
    Var o = push(std::move(out));
    auto offs = std::make_shared<std::vector<int>>(std::move(offsets));
    node(o).back = [this, a, o, offs] {
        Tensor& an = tn(a);
        const Tensor& on = tn(o);
        for (int g = 0; g + 1 < static_cast<int>(offs->size()); ++g) {
            const double inv = 1.0 / ((*offs)[g + 1] - (*offs)[g]);
            for (int i = (*offs)[g]; i < (*offs)[g + 1]; ++i)
                for (int j = 0; j < an.cols; ++j) an.grad_at(i, j) += inv * on.grad_at(g, j);
        }
    };
    return o;
}

Var Tape::sum_all(Var a) {
    const Tensor& at = tn(a);
    Tensor out(1, 1);
    double acc = 0.0;
    for (double v : at.values) acc += v;
    out.values[0] = acc;
    Var o = push(std::move(out));
    node(o).back = [this, a, o] {
        Tensor& an = tn(a);
        const double g = tn(o).grad[0];
        for (double& gv : an.grad) gv += g;
    };
    return o;
}

Var Tape::row_normalize(Var a) {
    const Tensor& at = tn(a);
    Tensor out(at.rows, at.cols);
    std::vector<double> inv_norm(static_cast<std::size_t>(at.rows));
    for (int i = 0; i < at.rows; ++i) {
        double ss = 0.0;
        for (int j = 0; j < at.cols; ++j) ss += at.at(i, j) * at.at(i, j);
        const double norm = std::sqrt(ss);
        if (!(norm > 0.0) || !std::isfinite(norm))
            throw NumericalError("row_normalize: zero or non-finite norm at row " + std::to_string(i));
        inv_norm[static_cast<std::size_t>(i)] = 1.0 / norm;
        for (int j = 0; j < at.cols; ++j) out.at(i, j) = at.at(i, j) * inv_norm[static_cast<std::size_t>(i)];
    }
    Var o = push(std::move(out));
    auto inv = std::make_shared<std::vector<double>>(std::move(inv_norm));
    node(o).back = [this, a, o, inv] {
        Tensor& an = tn(a);
        const Tensor& on = tn(o);
        // d a_i = (d y_i - y_i (y_i . d y_i)) / ||a_i||
        for (int i = 0; i < an.rows; ++i) {
            double dot = 0.0;
            for (int j = 0; j < an.cols; ++j) dot += on.at(i, j) * on.grad_at(i, j);
            const double s = (*inv)[static_cast<std::size_t>(i)];
            for (int j = 0; j < an.cols; ++j)
                an.grad_at(i, j) += s * (on.grad_at(i, j) - on.at(i, j) * dot);
        }
    };
    return o;
}

Var Tape::softmax_xent(Var logits, std::vector<int> labels) {
    const Tensor& lt = tn(logits);
    require(static_cast<int>(labels.size()) == lt.rows,
            "softmax_xent: label count " + std::to_string(labels.size()) + " != rows of " + shape_str(lt));
    for (int l : labels)
        if (l < 0 || l >= lt.cols) throw DomainError("softmax_xent: label " + std::to_string(l) + " out of range");
    auto probs = std::make_shared<Tensor>(lt.rows, lt.cols);
    double total = 0.0;
    for (int i = 0; i < lt.rows; ++i) {
        double mx = lt.at(i, 0);
        for (int j = 1; j < lt.cols; ++j) mx = std::max(mx, lt.at(i, j));
        double z = 0.0;
        for (int j = 0; j < lt.cols; ++j) z += std::exp(lt.at(i, j) - mx);
        const double lse = mx + std::log(z);
        total += lse - lt.at(i, labels[static_cast<std::size_t>(i)]);
        const double invz = 1.0 / z;
        for (int j = 0; j < lt.cols; ++j) probs->at(i, j) = std::exp(lt.at(i, j) - mx) * invz;
    }
    Tensor out(1, 1);
    out.values[0] = total / lt.rows;
    Var o = push(std::move(out));
    auto labs = std::make_shared<std::vector<int>>(std::move(labels));
    node(o).back = [this, logits, o, probs, labs] {
        Tensor& ln = tn(logits);
        const double g = tn(o).grad[0] / ln.rows;
        for (int i = 0; i < ln.rows; ++i) {
            for (int j = 0; j < ln.cols; ++j) ln.grad_at(i, j) += g * probs->at(i, j);
            ln.grad_at(i, (*labs)[static_cast<std::size_t>(i)]) -= g;
        }
    };
    return o;
}

Tape::NtXentOut Tape::ntxent_from_sims(Var sims, std::vector<int> labels, double tau) {
    const Tensor& st = tn(sims);
    require(st.rows == st.cols, "ntxent: similarity matrix must be square, got " + shape_str(st));
    require(static_cast<int>(labels.size()) == st.rows, "ntxent: label count mismatch");
    if (tau <= 0.0) throw DomainError("ntxent: tau must be positive");
    const int n = st.rows;
    if (n < 2) throw DomainError("ntxent: batch size must be at least 2");

    // Per anchor: softmax over off-diagonal entries of row i at temperature tau.
    auto probs = std::make_shared<Tensor>(n, n);
    auto pos_count = std::make_shared<std::vector<int>>(static_cast<std::size_t>(n), 0);
    long total_pairs = 0;
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        double mx = -1e300;
        for (int k = 0; k < n; ++k)
            if (k != i) mx = std::max(mx, st.at(i, k) / tau);
        double z = 0.0;
        for (int k = 0; k < n; ++k)
            if (k != i) z += std::exp(st.at(i, k) / tau - mx);
        const double lse = mx + std::log(z);
        const double invz = 1.0 / z;
        for (int k = 0; k < n; ++k)
            probs->at(i, k) = (k == i) ? 0.0 : std::exp(st.at(i, k) / tau - mx) * invz;
        for (int j = 0; j < n; ++j) {
            if (j == i || labels[static_cast<std::size_t>(j)] != labels[static_cast<std::size_t>(i)]) continue;
            total += lse - st.at(i, j) / tau;
            (*pos_count)[static_cast<std::size_t>(i)]++;
            ++total_pairs;
        }
    }

    NtXentOut result;
    result.has_positives = total_pairs > 0;
    if (!result.has_positives) {
        result.loss = push(Tensor(1, 1)); // constant 0, no backward rule
        return result;
    }
    Tensor out(1, 1);
    out.values[0] = total / static_cast<double>(total_pairs);
    result.loss = push(std::move(out));
    auto labs = std::make_shared<std::vector<int>>(std::move(labels));
    Var o = result.loss;
    node(o).back = [this, sims, o, probs, pos_count, labs, tau, total_pairs] {
        Tensor& sn = tn(sims);
        const double g = tn(o).grad[0] / (tau * static_cast<double>(total_pairs));
        const int n = sn.rows;
        for (int i = 0; i < n; ++i) {
            const double c = static_cast<double>((*pos_count)[static_cast<std::size_t>(i)]);
            if (c == 0.0) continue;
            for (int k = 0; k < n; ++k) {
                if (k == i) continue;
                double d = c * probs->at(i, k);
                if ((*labs)[static_cast<std::size_t>(k)] == (*labs)[static_cast<std::size_t>(i)]) d -= 1.0;
                sn.grad_at(i, k) += g * d;
            }
        }
    };
    return result;
}

void Tape::backward(Var scalar_out) {
    const Tensor& t = tn(scalar_out);
    if (t.rows != 1 || t.cols != 1)
        throw DimensionError("backward: output must be 1x1, got " + shape_str(t));
    node(scalar_out).t().grad[0] = 1.0;
    for (int i = scalar_out.node_; i >= 0; --i) {
        auto& n = *nodes_[static_cast<std::size_t>(i)];
        if (n.back) n.back();
    }
}

} // namespace crys
