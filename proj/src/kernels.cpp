#include "crys/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

namespace crys::kernels {

namespace {

std::atomic<bool> g_parallel{true};

// Work below this many output elements is not worth a parallel region.
constexpr long kParallelThreshold = 4096;

inline bool go_parallel(long work) {
    return g_parallel.load(std::memory_order_relaxed) && work >= kParallelThreshold;
}

// ---- per-row workers -------------------------------------------------------
// One worker per kernel; both the serial loop and the OpenMP loop call these,
// which is what makes the two paths bit-identical.

inline void matmul_row(const double* a, const double* b, double* c, int k, int m, int i, bool zero) {
    double* crow = c + static_cast<long>(i) * m;
    if (zero) std::fill(crow, crow + m, 0.0);
    const double* arow = a + static_cast<long>(i) * k;
    for (int r = 0; r < k; ++r) {
        const double av = arow[r];
        const double* brow = b + static_cast<long>(r) * m;
        for (int j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
}

inline void matmul_nt_row(const double* a, const double* b, double* c, int k, int m, int i) {
    double* crow = c + static_cast<long>(i) * m;
    const double* arow = a + static_cast<long>(i) * k;
    for (int j = 0; j < m; ++j) {
        const double* brow = b + static_cast<long>(j) * k;
        double acc = 0.0;
        for (int r = 0; r < k; ++r) acc += arow[r] * brow[r];
        crow[j] += acc;
    }
}

inline void matmul_tn_row(const double* a, const double* b, double* c, int k, int n, int m, int i) {
    // C[i, :] += sum_r A[r, i] * B[r, :]
    double* crow = c + static_cast<long>(i) * m;
    for (int r = 0; r < k; ++r) {
        const double av = a[static_cast<long>(r) * n + i];
        const double* brow = b + static_cast<long>(r) * m;
        for (int j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
}

inline double sigmoid1(double t) {
    // split on sign so exp never overflows
    if (t >= 0.0) {
        const double e = std::exp(-t);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(t);
    return e / (1.0 + e);
}

inline double softplus1(double t) {
    // max(t, 0) + log1p(exp(-|t|))
    return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t)));
}

inline double unary1(Unary f, double t) {
    switch (f) {
        case Unary::Sigmoid: return sigmoid1(t);
        case Unary::Softplus: return softplus1(t);
        case Unary::Relu: return t > 0.0 ? t : 0.0;
    }
    return 0.0;
}

inline double unary_grad1(Unary f, double in, double out) {
    switch (f) {
        case Unary::Sigmoid: return out * (1.0 - out);
        case Unary::Softplus: return sigmoid1(in);
        case Unary::Relu: return in > 0.0 ? 1.0 : 0.0;
    }
    return 0.0;
}

inline void scatter_row(const RowGroups& g, const double* in, double* out, int cols, int r) {
    double* orow = out + static_cast<long>(r) * cols;
    std::fill(orow, orow + cols, 0.0);
    for (int p = g.offsets[r]; p < g.offsets[r + 1]; ++p) {
        const double* irow = in + static_cast<long>(g.members[p]) * cols;
        for (int j = 0; j < cols; ++j) orow[j] += irow[j];
    }
}

} // namespace

bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }
void set_parallel(bool on) { g_parallel.store(on, std::memory_order_relaxed); }

void matmul_serial(const double* a, const double* b, double* c, int n, int k, int m) {
    for (int i = 0; i < n; ++i) matmul_row(a, b, c, k, m, i, true);
}

void matmul(const double* a, const double* b, double* c, int n, int k, int m) {
    if (!go_parallel(static_cast<long>(n) * m)) {
        matmul_serial(a, b, c, n, k, m);
        return;
    }
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) matmul_row(a, b, c, k, m, i, true);
}

void matmul_acc_serial(const double* a, const double* b, double* c, int n, int k, int m) {
    for (int i = 0; i < n; ++i) matmul_row(a, b, c, k, m, i, false);
}

void matmul_acc(const double* a, const double* b, double* c, int n, int k, int m) {
    if (!go_parallel(static_cast<long>(n) * m)) {
        matmul_acc_serial(a, b, c, n, k, m);
        return;
    }
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) matmul_row(a, b, c, k, m, i, false);
}

void matmul_nt_acc_serial(const double* a, const double* b, double* c, int n, int k, int m) {
    for (int i = 0; i < n; ++i) matmul_nt_row(a, b, c, k, m, i);
}

void matmul_nt_acc(const double* a, const double* b, double* c, int n, int k, int m) {
    if (!go_parallel(static_cast<long>(n) * m)) {
        matmul_nt_acc_serial(a, b, c, n, k, m);
        return;
    }
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) matmul_nt_row(a, b, c, k, m, i);
}

void matmul_tn_acc_serial(const double* a, const double* b, double* c, int n, int k, int m) {
    for (int i = 0; i < n; ++i) matmul_tn_row(a, b, c, k, n, m, i);
}

void matmul_tn_acc(const double* a, const double* b, double* c, int n, int k, int m) {
    if (!go_parallel(static_cast<long>(n) * m)) {
        matmul_tn_acc_serial(a, b, c, n, k, m);
        return;
    }
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) matmul_tn_row(a, b, c, k, n, m, i);
}

void unary_forward_serial(Unary f, const double* in, double* out, long n) {
    for (long i = 0; i < n; ++i) out[i] = unary1(f, in[i]);
}

void unary_forward(Unary f, const double* in, double* out, long n) {
    if (!go_parallel(n)) {
        unary_forward_serial(f, in, out, n);
        return;
    }
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) out[i] = unary1(f, in[i]);
}

void unary_backward_acc_serial(Unary f, const double* in, const double* out, const double* d_out,
                               double* d_in, long n) {
    for (long i = 0; i < n; ++i) d_in[i] += unary_grad1(f, in[i], out[i]) * d_out[i];
}

void unary_backward_acc(Unary f, const double* in, const double* out, const double* d_out,
                        double* d_in, long n) {
    if (!go_parallel(n)) {
        unary_backward_acc_serial(f, in, out, d_out, d_in, n);
        return;
    }
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) d_in[i] += unary_grad1(f, in[i], out[i]) * d_out[i];
}

RowGroups RowGroups::build(const std::vector<int>& target_of_row, int out_rows) {
    RowGroups g;
    g.offsets.assign(static_cast<std::size_t>(out_rows) + 1, 0);
    for (int t : target_of_row) g.offsets[static_cast<std::size_t>(t) + 1]++;
    for (int r = 0; r < out_rows; ++r) g.offsets[r + 1] += g.offsets[r];
    g.members.resize(target_of_row.size());
    std::vector<int> cursor(g.offsets.begin(), g.offsets.end() - 1);
    for (int m = 0; m < static_cast<int>(target_of_row.size()); ++m)
        g.members[cursor[target_of_row[m]]++] = m;
    return g;
}

void scatter_sum_rows_serial(const RowGroups& groups, const double* in, double* out, int out_rows, int cols) {
    for (int r = 0; r < out_rows; ++r) scatter_row(groups, in, out, cols, r);
}

void scatter_sum_rows(const RowGroups& groups, const double* in, double* out, int out_rows, int cols) {
    if (!go_parallel(static_cast<long>(out_rows) * cols)) {
        scatter_sum_rows_serial(groups, in, out, out_rows, cols);
        return;
    }
#pragma omp parallel for schedule(static)
    for (int r = 0; r < out_rows; ++r) scatter_row(groups, in, out, cols, r);
}

void gather_rows_acc_serial(const std::vector<int>& target_of_row, const double* d_out, double* d_in, int cols) {
    const int n = static_cast<int>(target_of_row.size());
    for (int i = 0; i < n; ++i) {
        const double* src = d_out + static_cast<long>(target_of_row[i]) * cols;
        double* dst = d_in + static_cast<long>(i) * cols;
        for (int j = 0; j < cols; ++j) dst[j] += src[j];
    }
}

void gather_rows_acc(const std::vector<int>& target_of_row, const double* d_out, double* d_in, int cols) {
    const int n = static_cast<int>(target_of_row.size());
    if (!go_parallel(static_cast<long>(n) * cols)) {
        gather_rows_acc_serial(target_of_row, d_out, d_in, cols);
        return;
    }
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        const double* src = d_out + static_cast<long>(target_of_row[i]) * cols;
        double* dst = d_in + static_cast<long>(i) * cols;
        for (int j = 0; j < cols; ++j) dst[j] += src[j];
    }
}

} // namespace crys::kernels
