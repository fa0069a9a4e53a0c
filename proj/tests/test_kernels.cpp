#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "crys/kernels.hpp"
#include "crys/rng.hpp"

using namespace crys;
namespace k = crys::kernels;

namespace {

std::vector<double> random_vec(Rng& rng, long n, double lo = -2.0, double hi = 2.0) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

void naive_matmul(const std::vector<double>& a, const std::vector<double>& b,
                  std::vector<double>& c, int n, int kk, int m) {
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) {
            double acc = 0.0;
            for (int r = 0; r < kk; ++r) acc += a[i * kk + r] * b[r * m + j];
            c[i * m + j] = acc;
        }
}

struct ParallelGuard {
    bool prev;
    explicit ParallelGuard(bool on) : prev(k::parallel_enabled()) { k::set_parallel(on); }
    ~ParallelGuard() { k::set_parallel(prev); }
};

} // namespace

TEST_CASE("matmul hand case") {
    std::vector<double> a{1, 2, 3, 4}, b{5, 6, 7, 8}, c(4, -1.0);
    k::matmul(a.data(), b.data(), c.data(), 2, 2, 2);
    CHECK(c == std::vector<double>{19, 22, 43, 50});
}

TEST_CASE("matmul matches naive reference on random shapes") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        int n = static_cast<int>(rng.uniform_int(1, 17));
        int kk = static_cast<int>(rng.uniform_int(1, 17));
        int m = static_cast<int>(rng.uniform_int(1, 17));
        auto a = random_vec(rng, static_cast<long>(n) * kk);
        auto b = random_vec(rng, static_cast<long>(kk) * m);
        std::vector<double> got(static_cast<std::size_t>(n) * m), want(got.size());
        k::matmul(a.data(), b.data(), got.data(), n, kk, m);
        naive_matmul(a, b, want, n, kk, m);
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
}

TEST_CASE("matmul_acc accumulates into existing values") {
    std::vector<double> a{1, 2}, b{3, 4}, c{10.0};
    k::matmul_acc(a.data(), b.data(), c.data(), 1, 2, 1);
    CHECK(c[0] == doctest::Approx(10 + 3 + 8));
}

TEST_CASE("matmul_nt_acc and matmul_tn_acc match explicit transposition") {
    Rng rng(23);
    for (int trial = 0; trial < 10; ++trial) {
        int n = static_cast<int>(rng.uniform_int(1, 9));
        int kk = static_cast<int>(rng.uniform_int(1, 9));
        int m = static_cast<int>(rng.uniform_int(1, 9));

        // nt: C[n x m] += A[n x k] * B[m x k]^T
        auto a = random_vec(rng, static_cast<long>(n) * kk);
        auto b = random_vec(rng, static_cast<long>(m) * kk);
        std::vector<double> bt(static_cast<std::size_t>(kk) * m);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < kk; ++j) bt[j * m + i] = b[i * kk + j];
        std::vector<double> got(static_cast<std::size_t>(n) * m, 0.5), want(got.size());
        naive_matmul(a, bt, want, n, kk, m);
        k::matmul_nt_acc(a.data(), b.data(), got.data(), n, kk, m);
        for (std::size_t i = 0; i < got.size(); ++i)
            CHECK(got[i] == doctest::Approx(0.5 + want[i]).epsilon(1e-12));

        // tn: C[n x m] += A[k x n]^T * B[k x m]
        auto a2 = random_vec(rng, static_cast<long>(kk) * n);
        auto b2 = random_vec(rng, static_cast<long>(kk) * m);
        std::vector<double> a2t(static_cast<std::size_t>(n) * kk);
        for (int i = 0; i < kk; ++i)
            for (int j = 0; j < n; ++j) a2t[j * kk + i] = a2[i * n + j];
        std::vector<double> got2(static_cast<std::size_t>(n) * m, -1.0), want2(got2.size());
        naive_matmul(a2t, b2, want2, n, kk, m);
        k::matmul_tn_acc(a2.data(), b2.data(), got2.data(), n, kk, m);
        for (std::size_t i = 0; i < got2.size(); ++i)
            CHECK(got2[i] == doctest::Approx(-1.0 + want2[i]).epsilon(1e-12));
    }
}

TEST_CASE("serial and parallel variants are bit-identical") {
    Rng rng(7);
    // large enough to clear the parallel threshold
    const int n = 80, kk = 30, m = 64;
    auto a = random_vec(rng, static_cast<long>(n) * kk);
    auto b = random_vec(rng, static_cast<long>(kk) * m);

    std::vector<double> cs(static_cast<std::size_t>(n) * m), cp(cs.size());
    k::matmul_serial(a.data(), b.data(), cs.data(), n, kk, m);
    {
        ParallelGuard g(true);
        k::matmul(a.data(), b.data(), cp.data(), n, kk, m);
    }
    CHECK(std::memcmp(cs.data(), cp.data(), cs.size() * sizeof(double)) == 0);

    std::vector<double> ds(cs.size(), 0.25), dp(cs.size(), 0.25);
    k::matmul_acc_serial(a.data(), b.data(), ds.data(), n, kk, m);
    {
        ParallelGuard g(true);
        k::matmul_acc(a.data(), b.data(), dp.data(), n, kk, m);
    }
    CHECK(std::memcmp(ds.data(), dp.data(), ds.size() * sizeof(double)) == 0);

    auto bt = random_vec(rng, static_cast<long>(m) * kk);
    std::vector<double> es(cs.size(), 1.0), ep(cs.size(), 1.0);
    k::matmul_nt_acc_serial(a.data(), bt.data(), es.data(), n, kk, m);
    {
        ParallelGuard g(true);
        k::matmul_nt_acc(a.data(), bt.data(), ep.data(), n, kk, m);
    }
    CHECK(std::memcmp(es.data(), ep.data(), es.size() * sizeof(double)) == 0);

    auto a2 = random_vec(rng, static_cast<long>(kk) * n);
    std::vector<double> fs(cs.size(), -0.5), fp(cs.size(), -0.5);
    k::matmul_tn_acc_serial(a2.data(), b.data(), fs.data(), n, kk, m);
    {
        ParallelGuard g(true);
        k::matmul_tn_acc(a2.data(), b.data(), fp.data(), n, kk, m);
    }
    CHECK(std::memcmp(fs.data(), fp.data(), fs.size() * sizeof(double)) == 0);
}

TEST_CASE("unary forward analytic points") {
    std::vector<double> in{0.0, 20.0, -3.0, 2.0, -745.0};
    std::vector<double> out(in.size());

    k::unary_forward(k::Unary::Sigmoid, in.data(), out.data(), static_cast<long>(in.size()));
    CHECK(out[0] == doctest::Approx(0.5));
    CHECK(std::isfinite(out[4]));

    k::unary_forward(k::Unary::Softplus, in.data(), out.data(), static_cast<long>(in.size()));
    CHECK(out[0] == doctest::Approx(0.6931471805599453).epsilon(1e-15));
    CHECK(out[1] - 20.0 < 1e-8);
    CHECK(out[1] >= 20.0);
    CHECK(std::isfinite(out[4]));
    CHECK(out[4] >= 0.0);

    k::unary_forward(k::Unary::Relu, in.data(), out.data(), static_cast<long>(in.size()));
    CHECK(out[2] == 0.0);
    CHECK(out[3] == 2.0);
}

TEST_CASE("unary range properties over random inputs") {
    Rng rng(91);
    // beyond |t| ~ 36.7 sigmoid saturates to exactly 0 or 1 in doubles
    auto in = random_vec(rng, 512, -35.0, 35.0);
    std::vector<double> out(in.size());
    k::unary_forward(k::Unary::Sigmoid, in.data(), out.data(), static_cast<long>(in.size()));
    for (double v : out) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
    k::unary_forward(k::Unary::Softplus, in.data(), out.data(), static_cast<long>(in.size()));
    for (std::size_t i = 0; i < in.size(); ++i) {
        CHECK(out[i] >= 0.0);
        CHECK(out[i] >= in[i]);
    }
}

TEST_CASE("unary backward matches central differences and accumulates") {
    Rng rng(5);
    for (k::Unary f : {k::Unary::Sigmoid, k::Unary::Softplus, k::Unary::Relu}) {
        auto in = random_vec(rng, 64, -4.0, 4.0);
        const long n = static_cast<long>(in.size());
        std::vector<double> out(in.size()), d_out = random_vec(rng, n), d_in(in.size(), 0.75);
        k::unary_forward(f, in.data(), out.data(), n);
        k::unary_backward_acc(f, in.data(), out.data(), d_out.data(), d_in.data(), n);
        const double eps = 1e-6;
        for (std::size_t i = 0; i < in.size(); ++i) {
            if (f == k::Unary::Relu && std::abs(in[i]) < 1e-3) continue; // kink
            double p, m2;
            double xp = in[i] + eps, xm = in[i] - eps;
            k::unary_forward(f, &xp, &p, 1);
            k::unary_forward(f, &xm, &m2, 1);
            const double numeric = (p - m2) / (2 * eps) * d_out[i];
            CHECK(d_in[i] - 0.75 == doctest::Approx(numeric).epsilon(1e-6));
        }
    }
}

TEST_CASE("serial and parallel unary paths are bit-identical") {
    Rng rng(17);
    auto in = random_vec(rng, 9000, -30.0, 30.0);
    const long n = static_cast<long>(in.size());
    std::vector<double> os(in.size()), op(in.size());
    for (k::Unary f : {k::Unary::Sigmoid, k::Unary::Softplus, k::Unary::Relu}) {
        k::unary_forward_serial(f, in.data(), os.data(), n);
        {
            ParallelGuard g(true);
            k::unary_forward(f, in.data(), op.data(), n);
        }
        CHECK(std::memcmp(os.data(), op.data(), os.size() * sizeof(double)) == 0);

        auto d_out = random_vec(rng, n);
        std::vector<double> dis(in.size(), 0.0), dip(in.size(), 0.0);
        k::unary_backward_acc_serial(f, in.data(), os.data(), d_out.data(), dis.data(), n);
        {
            ParallelGuard g(true);
            k::unary_backward_acc(f, in.data(), os.data(), d_out.data(), dip.data(), n);
        }
        CHECK(std::memcmp(dis.data(), dip.data(), dis.size() * sizeof(double)) == 0);
    }
}

TEST_CASE("RowGroups::build is a stable CSR index") {
    std::vector<int> target{2, 0, 2, 1};
    auto g = k::RowGroups::build(target, 3);
    CHECK(g.offsets == std::vector<int>{0, 1, 2, 4});
    CHECK(g.members == std::vector<int>{1, 3, 0, 2});
}

TEST_CASE("scatter_sum_rows matches a naive loop, serial == parallel") {
    Rng rng(33);
    const int rows = 300, cols = 32, out_rows = 24;
    auto in = random_vec(rng, static_cast<long>(rows) * cols);
    std::vector<int> target(rows);
    for (int& t : target) t = static_cast<int>(rng.uniform_int(0, out_rows - 1));
    auto groups = k::RowGroups::build(target, out_rows);

    std::vector<double> want(static_cast<std::size_t>(out_rows) * cols, 0.0);
    for (int r = 0; r < rows; ++r)
        for (int j = 0; j < cols; ++j) want[target[r] * cols + j] += in[r * cols + j];

    std::vector<double> ser(want.size()), par(want.size());
    k::scatter_sum_rows_serial(groups, in.data(), ser.data(), out_rows, cols);
    {
        ParallelGuard g(true);
        k::scatter_sum_rows(groups, in.data(), par.data(), out_rows, cols);
    }
    CHECK(std::memcmp(ser.data(), par.data(), ser.size() * sizeof(double)) == 0);
    for (std::size_t i = 0; i < want.size(); ++i)
        CHECK(ser[i] == doctest::Approx(want[i]).epsilon(1e-12));

    // backward side: gather accumulates d_out rows into each source row
    auto d_out = random_vec(rng, static_cast<long>(out_rows) * cols);
    std::vector<double> gs(static_cast<std::size_t>(rows) * cols, 0.1), gp(gs);
    k::gather_rows_acc_serial(target, d_out.data(), gs.data(), cols);
    {
        ParallelGuard g(true);
        k::gather_rows_acc(target, d_out.data(), gp.data(), cols);
    }
    CHECK(std::memcmp(gs.data(), gp.data(), gs.size() * sizeof(double)) == 0);
    for (int r = 0; r < rows; ++r)
        for (int j = 0; j < cols; ++j)
            CHECK(gs[r * cols + j] == doctest::Approx(0.1 + d_out[target[r] * cols + j]));
}

TEST_CASE("empty scatter group produces a zero row") {
    std::vector<int> target{0, 0};
    auto groups = k::RowGroups::build(target, 3);
    std::vector<double> in{1, 2, 3, 4}, out(6, 9.0);
    k::scatter_sum_rows(groups, in.data(), out.data(), 3, 2);
    CHECK(out == std::vector<double>{4, 6, 0, 0, 0, 0});
}
