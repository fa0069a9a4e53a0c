#pragma once

#include <span>
#include <string>
#include <vector>

#include "crys/encoder.hpp"
#include "crys/optim.hpp"
#include "crys/rng.hpp"

namespace crys {

/// Weights, temperature and ablation mask of the combined pre-training loss
///   L = alpha L_FR + beta L_CR + gamma L_SG + lambda L_NTXent.
struct PretrainWeights {
    double alpha = 0.25;
    double beta = 0.25;
    double gamma = 0.25;
    double lambda = 0.25;
    double tau = 0.5;
    double neg_ratio = 1.0;
    bool enable_fr = true;
    bool enable_cr = true;
    bool enable_sg = true;
    bool enable_ntxent = true;

    bool any_enabled() const { return enable_fr || enable_cr || enable_sg || enable_ntxent; }
    /// Throws ConfigError naming the offending field.
    void validate() const;
};

/// Adds the decoder heads:
///   head.fr.{w,b}        affine d -> D feature reconstruction
///   head.cr.{bilinear,w1,b1,w2,b2}  bilinear + feed-forward pair scorer
///   head.sg.{w,b}        affine d -> 230 space-group logits
void init_decoder_heads(ParamStore& store, const EncoderConfig& config, Rng& rng);

/// One connectivity training pair; u and v are row indices into the batched
/// node matrix, target is the edge multiplicity (0 for sampled non-edges).
struct PairSample {
    int u = 0;
    int v = 0;
    double target = 0.0;
};

/// Adjacent pairs (target = multiplicity) plus ceil(neg_ratio * #adjacent)
/// non-adjacent pairs per graph (target = 0), sampled uniformly without
/// replacement. Single-node graphs contribute nothing.
std::vector<PairSample> sample_connectivity_pairs(std::span<const CrystalGraph* const> graphs,
                                                  const BatchedGraph& batch, double neg_ratio,
                                                  Rng& rng);

/// Everything pretrain_loss needs for one minibatch.
struct PretrainBatch {
    BatchedGraph graph;
    std::vector<PairSample> pairs;
    std::vector<int> sg_rows;     // graph rows carrying a space-group label
    std::vector<int> sg_labels;   // 0-based space group, aligned with sg_rows
    std::vector<int> sys_rows;    // graph rows with a derivable crystal system
    std::vector<int> sys_labels;  // 0..6, aligned with sys_rows

    static PretrainBatch build(std::span<const CrystalGraph* const> graphs, double neg_ratio,
                               Rng& rng);
};

/// Mean over nodes and feature dims of (affine(z_u) - x_u)^2.
Var feature_recon_loss(Tape& tape, Var z_nodes, const Tensor& features, ParamStore& store);

/// Mean squared error of the symmetrized bilinear pair score against the
/// multiplicity targets. Throws DomainError on an empty pair list.
Var connectivity_recon_loss(Tape& tape, Var z_nodes, const std::vector<PairSample>& pairs,
                            ParamStore& store);

/// Softmax cross-entropy of the space-group head over the labeled rows.
Var space_group_loss(Tape& tape, Var z_graph, const std::vector<int>& rows,
                     const std::vector<int>& labels, ParamStore& store);

/// NT-Xent over cosine similarities of the labeled graph embeddings;
/// positives share a crystal system. Throws DomainError when rows < 2.
Tape::NtXentOut ntxent_loss(Tape& tape, Var z_graph, const std::vector<int>& rows,
                            const std::vector<int>& labels, double tau);

struct PretrainLossOut {
    Var total;
    double fr = 0.0;
    double cr = 0.0;
    double sg = 0.0;
    double ntxent = 0.0;
};

/// The bare weighted sum over enabled components, with the same term order
/// and associativity as pretrain_loss.
double combine_pretrain_components(double fr, double cr, double sg, double ntxent,
                                   const PretrainWeights& weights);

/// Weighted sum of the enabled components over one batch. Disabled or
/// inapplicable components contribute exactly 0 and receive no gradient.
PretrainLossOut pretrain_loss(Tape& tape, const PretrainBatch& batch, ParamStore& store,
                              const EncoderConfig& config, const PretrainWeights& weights);

struct PretrainConfig {
    EncoderConfig encoder;
    PretrainWeights weights;
    AdamHyper adam;
    int epochs = 200;
    int batch_size = 128;
    std::uint64_t seed = 0;

    void validate() const;
};

struct PretrainTraceRow {
    double total = 0.0;
    double fr = 0.0;
    double cr = 0.0;
    double sg = 0.0;
    double ntxent = 0.0;
};

struct PretrainResult {
    ParamStore params;  // theta: encoder + all heads
    std::vector<PretrainTraceRow> trace;
    bool aborted = false;        // non-finite loss hit; params hold the last
    std::string abort_reason;    // good (previous-epoch) state
};

/// Minibatch Adam over the combined loss. Deterministic given config.seed:
/// init, shuffle and negative-sampling randomness run on separate named
/// streams. Throws DomainError on an empty dataset and ConfigError when all
/// four losses are masked off.
PretrainResult run_pretrain(const std::vector<CrystalGraph>& dataset, const PretrainConfig& config);

/// epoch,total,l_fr,l_cr,l_sg,l_ntxent at 17 significant digits.
void write_pretrain_trace(const std::vector<PretrainTraceRow>& trace, const std::string& path);

/// Fraction of labeled graphs whose space-group head argmax hits the label.
double space_group_accuracy(const std::vector<CrystalGraph>& graphs, ParamStore& store,
                            const EncoderConfig& config);

}  // namespace crys
