#pragma once

#include <span>
#include <string>
#include <vector>

#include "crys/encoder.hpp"
#include "crys/optim.hpp"
#include "crys/rng.hpp"

namespace crys {

/// Student training configuration. delta = 1 is the vanilla baseline: pure
/// supervised MSE, no teacher required.
struct DistillConfig {
    EncoderConfig encoder;
    AdamHyper adam;
    double delta = 0.5;
    int epochs = 500;
    int batch_size = 128;
    std::uint64_t seed = 0;
    std::string teacher_path;

    /// Throws ConfigError naming the offending field.
    void validate() const;
};

/// Frozen pre-trained encoder. Only enc.* parameters are consulted.
struct Teacher {
    ParamStore params;
    EncoderConfig config;
};

/// Student parameters: enc.* plus the regressor head
///   reg.w1, reg.b1   affine d -> d
///   reg.w2, reg.b2   affine d -> 1
/// and, only when teacher_dim differs from the student embed dim, a
/// projection proj.{w,b} mapping student node embeddings into teacher space.
/// teacher_dim <= 0 means no projection.
void init_student_params(ParamStore& store, const EncoderConfig& config, int teacher_dim,
                         Rng& rng);

/// Forward pass of the student over one batch.
struct StudentForward {
    Var z_nodes;  // total_nodes x d
    Var z_graph;  // num_graphs x d
    Var yhat;     // num_graphs x 1
};
StudentForward student_forward(Tape& tape, const BatchedGraph& batch, ParamStore& store,
                               const EncoderConfig& config);

/// Frozen single-graph prediction.
double predict(const CrystalGraph& graph, ParamStore& store, const EncoderConfig& config);

/// Mean over nodes of the squared distance between student and teacher node
/// embeddings. z_teacher enters as a constant and receives no gradient.
Var kd_loss(Tape& tape, Var z_student, const Tensor& z_teacher);

/// Batched form: per graph the node-mean squared distance, then the mean
/// over graphs. teacher_nodes holds one row block per graph, aligned with
/// the rows of z_student.
Var batched_kd_loss(Tape& tape, Var z_student, std::span<const Tensor* const> teacher_nodes);

/// Teacher node embeddings for every graph, computed once from a private
/// copy of the teacher parameters.
std::vector<Tensor> teacher_node_cache(const std::vector<CrystalGraph>& graphs,
                                       const Teacher& teacher);

/// delta * mse + (1 - delta) * kd. Throws ConfigError outside [0,1].
double prop_loss(double mse, double kd, double delta);

struct DistillTraceRow {
    double train_loss = 0.0;
    double train_mse = 0.0;
    double train_kd = 0.0;
    double val_mae = 0.0;
};

struct DistillResult {
    ParamStore params;  // best-validation-MAE snapshot
    std::vector<DistillTraceRow> trace;
    double best_val_mae = 0.0;
    int best_epoch = 0;
    bool aborted = false;
    std::string abort_reason;
};

/// Adam over delta * L_MSE + (1 - delta) * L_KD with a frozen teacher. The
/// KD term compares student node embeddings (projected if dims differ)
/// against cached teacher embeddings, averaged per node and per graph.
/// teacher may be null only when delta = 1. Deterministic per config.seed.
/// A non-finite loss stops training and returns the best snapshot so far
/// with aborted set.
DistillResult train_predictor(const std::vector<CrystalGraph>& train,
                              const std::vector<CrystalGraph>& val, const Teacher* teacher,
                              const DistillConfig& config);

/// Mean absolute prediction error over the dataset. Throws DataError on an
/// empty dataset or a graph without a target.
double eval_mae(const std::vector<CrystalGraph>& dataset, ParamStore& store,
                const EncoderConfig& config);

/// CSV: header epoch,train_loss,train_mse,train_kd,val_mae then one row per
/// epoch at 17 significant digits.
void write_distill_trace(const std::vector<DistillTraceRow>& trace, const std::string& path);

}  // namespace crys
