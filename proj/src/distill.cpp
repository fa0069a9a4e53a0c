#include "crys/distill.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "crys/errors.hpp"

namespace crys {

void DistillConfig::validate() const {
    encoder.validate();
    adam.validate();
    if (!(delta >= 0.0 && delta <= 1.0)) throw ConfigError("delta outside [0,1]");
    if (epochs < 1) throw ConfigError("epochs must be >= 1, got " + std::to_string(epochs));
    if (batch_size < 1)
        throw ConfigError("batch_size must be >= 1, got " + std::to_string(batch_size));
}

void init_student_params(ParamStore& store, const EncoderConfig& config, int teacher_dim,
                         Rng& rng) {
    init_encoder_params(store, config, rng);
    const int d = config.embed_dim;
    store.add("reg.w1", uniform_init(rng, d, d, d));
    store.add("reg.b1", Tensor::zeros(1, d));
    store.add("reg.w2", uniform_init(rng, d, 1, d));
    store.add("reg.b2", Tensor::zeros(1, 1));
    if (teacher_dim > 0 && teacher_dim != d) {
        store.add("proj.w", uniform_init(rng, d, teacher_dim, d));
        store.add("proj.b", Tensor::zeros(1, teacher_dim));
    }
}

StudentForward student_forward(Tape& tape, const BatchedGraph& batch, ParamStore& store,
                               const EncoderConfig& config) {
    EncodeVars enc = encode_batch(tape, batch, store, config);
    Var hidden = tape.activation(
        tape.affine(enc.z_graph, tape.param(store.at("reg.w1")), tape.param(store.at("reg.b1"))),
        Activation::Softplus);
    Var yhat =
        tape.affine(hidden, tape.param(store.at("reg.w2")), tape.param(store.at("reg.b2")));
    return {enc.z_nodes, enc.z_graph, yhat};
}

double predict(const CrystalGraph& graph, ParamStore& store, const EncoderConfig& config) {
    const CrystalGraph* ptr = &graph;
    BatchedGraph batch = BatchedGraph::build(std::span<const CrystalGraph* const>(&ptr, 1));
    Tape tape;
    return student_forward(tape, batch, store, config).yhat.scalar();
}

Var kd_loss(Tape& tape, Var z_student, const Tensor& z_teacher) {
    if (z_student.rows() != z_teacher.rows || z_student.cols() != z_teacher.cols)
        throw DimensionError("kd_loss: student " + shape_str(z_student.tensor()) + " vs teacher " +
                             shape_str(z_teacher));
    Var diff = tape.sub(z_student, tape.constant(z_teacher));
    Var sq = tape.mul(diff, diff);
    return tape.scale(tape.sum_all(sq), 1.0 / static_cast<double>(z_teacher.rows));
}

double prop_loss(double mse, double kd, double delta) {
    if (!(delta >= 0.0 && delta <= 1.0)) throw ConfigError("delta outside [0,1]");
    return delta * mse + (1.0 - delta) * kd;
}

Var batched_kd_loss(Tape& tape, Var z_student, std::span<const Tensor* const> teacher_nodes) {
    if (teacher_nodes.empty()) throw DomainError("batched_kd_loss: empty batch");
    const int d = z_student.cols();
    int total = 0;
    for (const Tensor* t : teacher_nodes) {
        if (t->cols != d)
            throw DimensionError("batched_kd_loss: teacher block " + shape_str(*t) +
                                 " vs student width " + std::to_string(d));
        total += t->rows;
    }
    if (total != z_student.rows())
        throw DimensionError("batched_kd_loss: " + std::to_string(total) +
                             " teacher rows vs student " + shape_str(z_student.tensor()));

    Tensor zt(total, d);
    std::vector<double> wrow(static_cast<std::size_t>(total));
    int at = 0;
    for (const Tensor* t : teacher_nodes) {
        std::copy(t->values.begin(), t->values.end(),
                  zt.values.begin() + static_cast<std::ptrdiff_t>(at) * d);
        const double w = 1.0 / (static_cast<double>(teacher_nodes.size()) * t->rows);
        for (int u = 0; u < t->rows; ++u) wrow[static_cast<std::size_t>(at + u)] = w;
        at += t->rows;
    }
    Var diff = tape.sub(z_student, tape.constant(std::move(zt)));
    return tape.sum_all(tape.scale_rows(tape.mul(diff, diff), std::move(wrow)));
}

std::vector<Tensor> teacher_node_cache(const std::vector<CrystalGraph>& graphs,
                                       const Teacher& teacher) {
    ParamStore params = teacher.params;
    BatchedGraph batch = BatchedGraph::build(graphs);
    Tape tape;
    EncodeVars enc = encode_batch(tape, batch, params, teacher.config);
    const Tensor& z = tape.value_of(enc.z_nodes);
    std::vector<Tensor> cache;
    cache.reserve(graphs.size());
    for (std::size_t g = 0; g < graphs.size(); ++g) {
        const int lo = batch.node_offsets[g];
        const int hi = batch.node_offsets[g + 1];
        Tensor t(hi - lo, z.cols);
        std::copy(z.values.begin() + static_cast<std::ptrdiff_t>(lo) * z.cols,
                  z.values.begin() + static_cast<std::ptrdiff_t>(hi) * z.cols, t.values.begin());
        cache.push_back(std::move(t));
    }
    return cache;
}

namespace {

void require_targets(const std::vector<CrystalGraph>& graphs, const char* which) {
    for (const CrystalGraph& g : graphs)
        if (!g.target)
            throw DataError("graph '" + g.id + "': missing target in " + which + " set");
}

}  // namespace

DistillResult train_predictor(const std::vector<CrystalGraph>& train,
                              const std::vector<CrystalGraph>& val, const Teacher* teacher,
                              const DistillConfig& config) {
    config.validate();
    if (train.empty()) throw DataError("training set is empty");
    if (val.empty()) throw DataError("validation set is empty");
    require_targets(train, "training");
    require_targets(val, "validation");

    const bool use_kd = config.delta < 1.0;
    if (use_kd && teacher == nullptr)
        throw ConfigError("teacher checkpoint required when delta < 1");
    if (use_kd && teacher->config.feature_dim != config.encoder.feature_dim)
        throw ConfigError("teacher feature_dim " + std::to_string(teacher->config.feature_dim) +
                          " differs from student feature_dim " +
                          std::to_string(config.encoder.feature_dim));

    Rng root(config.seed);
    Rng init_rng = root.stream("init");
    Rng shuffle_rng = root.stream("shuffle");

    DistillResult result;
    ParamStore params;
    init_student_params(params, config.encoder, use_kd ? teacher->config.embed_dim : 0, init_rng);
    const bool project = use_kd && teacher->config.embed_dim != config.encoder.embed_dim;

    std::vector<Tensor> cache;
    if (use_kd) cache = teacher_node_cache(train, *teacher);

    const int n = static_cast<int>(train.size());
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    ParamStore best_params = params;
    double best_val = 0.0;
    bool has_best = false;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        DistillTraceRow row;
        for (int start = 0; start < n; start += config.batch_size) {
            const int count = std::min(config.batch_size, n - start);
            std::vector<const CrystalGraph*> ptrs;
            ptrs.reserve(static_cast<std::size_t>(count));
            for (int i = 0; i < count; ++i)
                ptrs.push_back(
                    &train[static_cast<std::size_t>(order[static_cast<std::size_t>(start + i)])]);
            BatchedGraph batch = BatchedGraph::build(std::span<const CrystalGraph* const>(ptrs));

            Tape tape;
            StudentForward fwd = student_forward(tape, batch, params, config.encoder);

            Tensor targets(count, 1);
            for (int i = 0; i < count; ++i) targets.at(i, 0) = *ptrs[static_cast<std::size_t>(i)]->target;
            Var diff = tape.sub(fwd.yhat, tape.constant(targets));
            Var mse = tape.scale(tape.sum_all(tape.mul(diff, diff)), 1.0 / count);

            Var total = mse;
            double kd_value = 0.0;
            if (use_kd) {
                Var zs = fwd.z_nodes;
                if (project)
                    zs = tape.affine(zs, tape.param(params.at("proj.w")),
                                     tape.param(params.at("proj.b")));
                std::vector<const Tensor*> blocks;
                blocks.reserve(static_cast<std::size_t>(count));
                for (int i = 0; i < count; ++i)
                    blocks.push_back(
                        &cache[static_cast<std::size_t>(order[static_cast<std::size_t>(start + i)])]);
                Var kd = batched_kd_loss(tape, zs, std::span<const Tensor* const>(blocks));
                kd_value = kd.scalar();
                if (config.delta == 0.0)
                    total = kd;
                else
                    total = tape.add(tape.scale(mse, config.delta),
                                     tape.scale(kd, 1.0 - config.delta));
            }
            const double total_value = total.scalar();
            if (!std::isfinite(total_value)) {
                result.params = has_best ? std::move(best_params) : std::move(params);
                result.best_val_mae = best_val;
                result.aborted = true;
                result.abort_reason =
                    "epoch " + std::to_string(epoch) + ": non-finite training loss";
                return result;
            }
            tape.backward(total);
            adam_step(params, config.adam);

            row.train_loss += total_value * count;
            row.train_mse += mse.scalar() * count;
            row.train_kd += kd_value * count;
        }
        row.train_loss /= n;
        row.train_mse /= n;
        row.train_kd /= n;
        row.val_mae = eval_mae(val, params, config.encoder);
        result.trace.push_back(row);
        if (!has_best || row.val_mae < best_val) {
            best_val = row.val_mae;
            best_params = params;
            result.best_epoch = epoch;
            has_best = true;
        }
    }
    result.params = has_best ? std::move(best_params) : std::move(params);
    result.best_val_mae = best_val;
    return result;
}

double eval_mae(const std::vector<CrystalGraph>& dataset, ParamStore& store,
                const EncoderConfig& config) {
    if (dataset.empty()) throw DataError("evaluation dataset is empty");
    require_targets(dataset, "evaluation");
    BatchedGraph batch = BatchedGraph::build(dataset);
    Tape tape;
    StudentForward fwd = student_forward(tape, batch, store, config);
    const Tensor& yhat = tape.value_of(fwd.yhat);
    double total = 0.0;
    for (std::size_t i = 0; i < dataset.size(); ++i)
        total += std::abs(yhat.at(static_cast<int>(i), 0) - *dataset[i].target);
    return total / static_cast<double>(dataset.size());
}

void write_distill_trace(const std::vector<DistillTraceRow>& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open trace file: " + path);
    out << "epoch,train_loss,train_mse,train_kd,val_mae\n";
    char buf[160];
    for (std::size_t i = 0; i < trace.size(); ++i) {
        const DistillTraceRow& r = trace[i];
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g\n", i + 1, r.train_loss,
                      r.train_mse, r.train_kd, r.val_mae);
        out << buf;
    }
    if (!out) throw DataError("write failed: " + path);
}

}  // namespace crys
