// Times every kernel's serial reference against its OpenMP variant and
// checks they stay bit-equal on the same inputs. Build and run:
//   cmake --build build --target bench_kernels && ./build/bench_kernels
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <vector>

#include "crys/dataset.hpp"
#include "crys/encoder.hpp"
#include "crys/kernels.hpp"
#include "crys/pretrain.hpp"
#include "crys/rng.hpp"
#include "crys/tensor.hpp"

using namespace crys;
namespace k = crys::kernels;

namespace {

double time_best(int reps, const std::function<void()>& fn) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        best = std::min(best,
                        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return best;
}

void row(const char* name, const std::string& shape, double serial_s, double parallel_s,
         bool bit_equal) {
    std::printf("%-22s %-20s %9.3f ms %9.3f ms %7.2fx   %s\n", name, shape.c_str(),
                serial_s * 1e3, parallel_s * 1e3, serial_s / parallel_s,
                bit_equal ? "yes" : "NO");
}

std::vector<double> random_buf(Rng& rng, long n) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (double& x : v) x = rng.normal(0.0, 1.0);
    return v;
}

void bench_matmul(Rng& rng, int n, int reps) {
    const auto a = random_buf(rng, static_cast<long>(n) * n);
    const auto b = random_buf(rng, static_cast<long>(n) * n);
    std::vector<double> cs(static_cast<std::size_t>(n) * n), cp(cs);

    const double ts = time_best(reps, [&] { k::matmul_serial(a.data(), b.data(), cs.data(), n, n, n); });
    k::set_parallel(true);
    const double tp = time_best(reps, [&] { k::matmul(a.data(), b.data(), cp.data(), n, n, n); });
    row("matmul", std::to_string(n) + "^3", ts, tp,
        std::memcmp(cs.data(), cp.data(), cs.size() * sizeof(double)) == 0);
}

void bench_matmul_acc_family(Rng& rng, int n, int reps) {
    const auto a = random_buf(rng, static_cast<long>(n) * n);
    const auto b = random_buf(rng, static_cast<long>(n) * n);
    const auto seed = random_buf(rng, static_cast<long>(n) * n);

    struct Variant {
        const char* name;
        void (*serial)(const double*, const double*, double*, int, int, int);
        void (*parallel)(const double*, const double*, double*, int, int, int);
    };
    const Variant variants[] = {
        {"matmul_acc", k::matmul_acc_serial, k::matmul_acc},
        {"matmul_nt_acc", k::matmul_nt_acc_serial, k::matmul_nt_acc},
        {"matmul_tn_acc", k::matmul_tn_acc_serial, k::matmul_tn_acc},
    };
    for (const Variant& v : variants) {
        std::vector<double> cs = seed, cp = seed;
        const double ts = time_best(reps, [&] { v.serial(a.data(), b.data(), cs.data(), n, n, n); });
        k::set_parallel(true);
        const double tp = time_best(reps, [&] { v.parallel(a.data(), b.data(), cp.data(), n, n, n); });
        row(v.name, std::to_string(n) + "^3", ts, tp,
            std::memcmp(cs.data(), cp.data(), cs.size() * sizeof(double)) == 0);
    }
}

void bench_unary(Rng& rng, long n, int reps) {
    const auto in = random_buf(rng, n);
    const auto d_out = random_buf(rng, n);
    std::vector<double> outs(static_cast<std::size_t>(n)), outp(outs);

    const double ts =
        time_best(reps, [&] { k::unary_forward_serial(k::Unary::Softplus, in.data(), outs.data(), n); });
    k::set_parallel(true);
    const double tp =
        time_best(reps, [&] { k::unary_forward(k::Unary::Softplus, in.data(), outp.data(), n); });
    row("softplus forward", std::to_string(n) + " elems", ts, tp,
        std::memcmp(outs.data(), outp.data(), outs.size() * sizeof(double)) == 0);

    std::vector<double> dis(static_cast<std::size_t>(n), 0.0), dip(dis);
    const double bs = time_best(reps, [&] {
        k::unary_backward_acc_serial(k::Unary::Softplus, in.data(), outs.data(), d_out.data(),
                                     dis.data(), n);
    });
    k::set_parallel(true);
    const double bp = time_best(reps, [&] {
        k::unary_backward_acc(k::Unary::Softplus, in.data(), outp.data(), d_out.data(), dip.data(), n);
    });
    row("softplus backward", std::to_string(n) + " elems", bs, bp,
        std::memcmp(dis.data(), dip.data(), dis.size() * sizeof(double)) == 0);
}

void bench_scatter(Rng& rng, int out_rows, int fan, int cols, int reps) {
    const int in_rows = out_rows * fan;
    std::vector<int> target(static_cast<std::size_t>(in_rows));
    for (int i = 0; i < in_rows; ++i)
        target[static_cast<std::size_t>(i)] = static_cast<int>(rng.uniform_int(0, out_rows - 1));
    const k::RowGroups groups = k::RowGroups::build(target, out_rows);
    const auto in = random_buf(rng, static_cast<long>(in_rows) * cols);
    const auto d_out = random_buf(rng, static_cast<long>(out_rows) * cols);
    const std::string shape =
        std::to_string(in_rows) + "->" + std::to_string(out_rows) + " x" + std::to_string(cols);

    std::vector<double> outs(static_cast<std::size_t>(out_rows) * cols), outp(outs);
    const double ts = time_best(
        reps, [&] { k::scatter_sum_rows_serial(groups, in.data(), outs.data(), out_rows, cols); });
    k::set_parallel(true);
    const double tp =
        time_best(reps, [&] { k::scatter_sum_rows(groups, in.data(), outp.data(), out_rows, cols); });
    row("scatter_sum_rows", shape, ts, tp,
        std::memcmp(outs.data(), outp.data(), outs.size() * sizeof(double)) == 0);

    std::vector<double> dis(static_cast<std::size_t>(in_rows) * cols, 0.0), dip(dis);
    const double gs =
        time_best(reps, [&] { k::gather_rows_acc_serial(target, d_out.data(), dis.data(), cols); });
    k::set_parallel(true);
    const double gp = time_best(reps, [&] { k::gather_rows_acc(target, d_out.data(), dip.data(), cols); });
    row("gather_rows_acc", shape, gs, gp,
        std::memcmp(dis.data(), dip.data(), dis.size() * sizeof(double)) == 0);
}

// Whole differentiable pipeline: batched encode of a synthetic corpus plus
// the combined pre-training loss, forward and backward.
void bench_encode(int num_graphs, int embed_dim, int layers, int reps) {
    FeatureLayout layout;
    const auto data = generate_synthetic(num_graphs, 0, layout, 0.05);
    EncoderConfig cfg;
    cfg.feature_dim = layout.total_dim();
    cfg.embed_dim = embed_dim;
    cfg.num_layers = layers;
    ParamStore store;
    Rng init = Rng(1).stream("init");
    init_encoder_params(store, cfg, init);
    init_decoder_heads(store, cfg, init);
    std::vector<const CrystalGraph*> ptrs;
    for (const CrystalGraph& g : data) ptrs.push_back(&g);
    Rng neg = Rng(1).stream("negsample");
    const PretrainBatch batch = PretrainBatch::build(ptrs, 1.0, neg);
    const PretrainWeights weights;

    double loss_serial = 0.0, loss_parallel = 0.0;
    auto pass = [&](double& loss_out) {
        store.zero_grads();
        Tape tape;
        PretrainLossOut out = pretrain_loss(tape, batch, store, cfg, weights);
        tape.backward(out.total);
        loss_out = out.total.scalar();
    };

    k::set_parallel(false);
    const double ts = time_best(reps, [&] { pass(loss_serial); });
    k::set_parallel(true);
    const double tp = time_best(reps, [&] { pass(loss_parallel); });
    row("pretrain fwd+bwd",
        std::to_string(num_graphs) + " graphs d=" + std::to_string(embed_dim), ts, tp,
        std::memcmp(&loss_serial, &loss_parallel, sizeof(double)) == 0);
}

} // namespace

int main() {
    std::printf("%-22s %-20s %12s %12s %9s   %s\n", "kernel", "shape", "serial", "openmp",
                "speedup", "bit-equal");
    Rng rng(2024);
    bench_matmul(rng, 128, 5);
    bench_matmul(rng, 384, 3);
    bench_matmul_acc_family(rng, 256, 3);
    bench_unary(rng, 1 << 21, 5);
    bench_scatter(rng, 4000, 8, 64, 5);
    bench_encode(128, 64, 3, 3);
    k::set_parallel(true);
    return 0;
}
