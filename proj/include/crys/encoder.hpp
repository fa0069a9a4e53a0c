#pragma once

#include <span>
#include <string>
#include <vector>

#include "crys/graph.hpp"
#include "crys/optim.hpp"
#include "crys/rng.hpp"
#include "crys/tensor.hpp"

namespace crys {

struct EncoderConfig {
    int num_layers = 5;
    int embed_dim = 64;
    int feature_dim = 93;

    /// Throws ConfigError naming the offending field.
    void validate() const;
};

/// Block-diagonal batch form: node features of all graphs stacked, edges
/// materialized in both directions with global node indices, per-graph row
/// ranges in node_offsets (size num_graphs + 1).
struct BatchedGraph {
    int num_graphs = 0;
    int total_nodes = 0;
    Tensor features;                 // [total_nodes x D]
    std::vector<int> node_offsets;   // node rows of graph g: [offsets[g], offsets[g+1])
    std::vector<int> edge_dst;       // node being updated (2 entries per stored edge)
    std::vector<int> edge_src;       // its neighbor
    std::vector<double> edge_len;

    static BatchedGraph build(std::span<const CrystalGraph* const> graphs);
    static BatchedGraph build(const std::vector<CrystalGraph>& graphs);
};

/// Parameter names: enc.wx plus enc.l{i}.{wc,bc,ws,bs} per layer.
std::vector<std::string> encoder_param_names(const EncoderConfig& config);

/// Weight matrix drawn uniformly from +/- 1/sqrt(fan_in).
Tensor uniform_init(Rng& rng, int rows, int cols, int fan_in);

/// Random init: weights uniform in +/- 1/sqrt(fan_in), biases zero.
void init_encoder_params(ParamStore& store, const EncoderConfig& config, Rng& rng);

/// One gated aggregation round over the batch:
///   z'_u = z_u + sum over directed edges (u, v, s): sigmoid(h Wc + bc) * softplus(h Ws + bs)
/// with h = z_u (+) z_v (+) s of width 2d+1. A batch with no edges passes z
/// through unchanged.
Var conv_layer(Tape& tape, Var z, const BatchedGraph& batch, Var wc, Var bc, Var ws, Var bs);

struct EncodeVars {
    Var z_nodes;  // [total_nodes x d]
    Var z_graph;  // [num_graphs x d], per-graph mean of node embeddings
};

/// Differentiable batched encode: z0 = X Wx, num_layers conv rounds, mean
/// pooling per graph. Parameters are taken from the store by name.
EncodeVars encode_batch(Tape& tape, const BatchedGraph& batch, ParamStore& store,
                        const EncoderConfig& config);

struct EncoderOutput {
    Tensor z_nodes;  // [|V| x d]
    Tensor z_graph;  // [1 x d]
};

/// Frozen single-graph encode (no gradients).
EncoderOutput encode(const CrystalGraph& graph, ParamStore& store, const EncoderConfig& config);

/// Arithmetic mean over rows. Throws DomainError on an empty matrix.
Tensor pool(const Tensor& z);

}  // namespace crys
