#pragma once

#include <cstdint>
#include <vector>

namespace crys::kernels {

// Dense kernels behind the tensor ops. Every kernel comes in two variants:
// a *_serial reference and an OpenMP version that distributes whole output
// rows across threads. Both call the same per-row worker, so each output
// row sees the identical floating-point sequence and the two variants are
// bit-equal for all inputs and thread counts. The dispatching entry point
// picks the OpenMP path when parallelism is enabled and the work is large
// enough to pay for it.

bool parallel_enabled();
void set_parallel(bool on);

// C[n x m] = A[n x k] * B[k x m]
void matmul(const double* a, const double* b, double* c, int n, int k, int m);
void matmul_serial(const double* a, const double* b, double* c, int n, int k, int m);

// C[n x m] += A[n x k] * B[k x m]
void matmul_acc(const double* a, const double* b, double* c, int n, int k, int m);
void matmul_acc_serial(const double* a, const double* b, double* c, int n, int k, int m);

// C[n x m] += A[n x k] * B[m x k]^T
void matmul_nt_acc(const double* a, const double* b, double* c, int n, int k, int m);
void matmul_nt_acc_serial(const double* a, const double* b, double* c, int n, int k, int m);

// C[n x m] += A[k x n]^T * B[k x m]
void matmul_tn_acc(const double* a, const double* b, double* c, int n, int k, int m);
void matmul_tn_acc_serial(const double* a, const double* b, double* c, int n, int k, int m);

enum class Unary : std::uint8_t { Sigmoid, Softplus, Relu };

// out[i] = f(in[i]); grad variant accumulates dIn[i] += f'(in[i]) * dOut[i],
// with f' expressed through the forward output where cheaper.
void unary_forward(Unary f, const double* in, double* out, long n);
void unary_forward_serial(Unary f, const double* in, double* out, long n);
void unary_backward_acc(Unary f, const double* in, const double* out, const double* d_out,
                        double* d_in, long n);
void unary_backward_acc_serial(Unary f, const double* in, const double* out, const double* d_out,
                               double* d_in, long n);

// Row groups: CSR-style index of which source rows feed each output row.
// Built once per op so the scatter side can run one thread per output row
// while keeping the member order (ascending source row) fixed.
struct RowGroups {
    std::vector<int> offsets; // size out_rows + 1
    std::vector<int> members; // source row indices, ascending within a group
    static RowGroups build(const std::vector<int>& target_of_row, int out_rows);
};

// out[r, :] = sum over members[g] of in[m, :], in member order.
void scatter_sum_rows(const RowGroups& groups, const double* in, double* out, int out_rows, int cols);
void scatter_sum_rows_serial(const RowGroups& groups, const double* in, double* out, int out_rows, int cols);

// d_in[m, :] += d_out[target_of_row[m], :]  (pure gather, trivially parallel)
void gather_rows_acc(const std::vector<int>& target_of_row, const double* d_out, double* d_in, int cols);
void gather_rows_acc_serial(const std::vector<int>& target_of_row, const double* d_out, double* d_in, int cols);

} // namespace crys::kernels
