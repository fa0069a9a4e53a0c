#include "crys/encoder.hpp"

#include <cmath>

namespace crys {

void EncoderConfig::validate() const {
    if (num_layers < 0) throw ConfigError("num_layers must be >= 0, got " + std::to_string(num_layers));
    if (embed_dim < 1) throw ConfigError("embed_dim must be >= 1, got " + std::to_string(embed_dim));
    if (feature_dim < 1) throw ConfigError("feature_dim must be >= 1, got " + std::to_string(feature_dim));
}

BatchedGraph BatchedGraph::build(std::span<const CrystalGraph* const> graphs) {
    if (graphs.empty()) throw DomainError("batch must contain at least one graph");
    const int dim = graphs.front()->node_features.cols;
    int total = 0;
    for (const CrystalGraph* g : graphs) {
        if (g->node_features.cols != dim)
            throw DimensionError("graph '" + g->id + "': feature dim " +
                                 std::to_string(g->node_features.cols) + " != " + std::to_string(dim));
        if (g->node_features.rows != g->num_nodes)
            throw DimensionError("graph '" + g->id + "': feature rows != num_nodes");
        total += g->num_nodes;
    }

    BatchedGraph b;
    b.num_graphs = static_cast<int>(graphs.size());
    b.total_nodes = total;
    b.features = Tensor(total, dim);
    b.node_offsets.reserve(graphs.size() + 1);
    b.node_offsets.push_back(0);
    int base = 0;
    for (const CrystalGraph* g : graphs) {
        std::copy(g->node_features.values.begin(), g->node_features.values.end(),
                  b.features.values.begin() + static_cast<long>(base) * dim);
        for (const Edge& e : g->edges) {
            b.edge_dst.push_back(base + e.u);
            b.edge_src.push_back(base + e.v);
            b.edge_len.push_back(e.length);
            b.edge_dst.push_back(base + e.v);
            b.edge_src.push_back(base + e.u);
            b.edge_len.push_back(e.length);
        }
        base += g->num_nodes;
        b.node_offsets.push_back(base);
    }
    return b;
}

BatchedGraph BatchedGraph::build(const std::vector<CrystalGraph>& graphs) {
    std::vector<const CrystalGraph*> ptrs;
    ptrs.reserve(graphs.size());
    for (const CrystalGraph& g : graphs) ptrs.push_back(&g);
    return build(std::span<const CrystalGraph* const>(ptrs));
}

std::vector<std::string> encoder_param_names(const EncoderConfig& config) {
    std::vector<std::string> names{"enc.wx"};
    for (int l = 0; l < config.num_layers; ++l) {
        const std::string p = "enc.l" + std::to_string(l) + ".";
        names.push_back(p + "wc");
        names.push_back(p + "bc");
        names.push_back(p + "ws");
        names.push_back(p + "bs");
    }
    return names;
}

Tensor uniform_init(Rng& rng, int rows, int cols, int fan_in) {
    Tensor t(rows, cols);
    const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : t.values) v = rng.uniform(-s, s);
    return t;
}

void init_encoder_params(ParamStore& store, const EncoderConfig& config, Rng& rng) {
    config.validate();
    const int d = config.embed_dim;
    const int h = 2 * d + 1;
    store.add("enc.wx", uniform_init(rng, config.feature_dim, d, config.feature_dim));
    for (int l = 0; l < config.num_layers; ++l) {
        const std::string p = "enc.l" + std::to_string(l) + ".";
        store.add(p + "wc", uniform_init(rng, h, d, h));
        store.add(p + "bc", Tensor::zeros(1, d));
        store.add(p + "ws", uniform_init(rng, h, d, h));
        store.add(p + "bs", Tensor::zeros(1, d));
    }
}

Var conv_layer(Tape& tape, Var z, const BatchedGraph& batch, Var wc, Var bc, Var ws, Var bs) {
    if (z.rows() != batch.total_nodes)
        throw DimensionError("conv_layer: embedding rows " + std::to_string(z.rows()) +
                             " != node count " + std::to_string(batch.total_nodes));
    if (batch.edge_dst.empty()) return z;

    const int m = static_cast<int>(batch.edge_dst.size());
    Var zu = tape.row_gather(z, batch.edge_dst);
    Var zv = tape.row_gather(z, batch.edge_src);
    Tensor len(m, 1);
    len.values = batch.edge_len;
    Var s = tape.constant(std::move(len));
    std::vector<Var> parts{zu, zv, s};
    Var h = tape.concat_cols(parts);

    Var gate = tape.activation(tape.affine(h, wc, bc), Activation::Sigmoid);
    Var core = tape.activation(tape.affine(h, ws, bs), Activation::Softplus);
    Var msg = tape.mul(gate, core);
    Var agg = tape.row_scatter_sum(msg, batch.edge_dst, batch.total_nodes);
    return tape.add(z, agg);
}

EncodeVars encode_batch(Tape& tape, const BatchedGraph& batch, ParamStore& store,
                        const EncoderConfig& config) {
    if (batch.features.cols != config.feature_dim)
        throw DimensionError("encode: feature dim " + std::to_string(batch.features.cols) +
                             " != configured " + std::to_string(config.feature_dim));
    Var x = tape.constant(batch.features);
    Var z = tape.matmul(x, tape.param(store.at("enc.wx")));
    for (int l = 0; l < config.num_layers; ++l) {
        const std::string p = "enc.l" + std::to_string(l) + ".";
        z = conv_layer(tape, z, batch, tape.param(store.at(p + "wc")),
                       tape.param(store.at(p + "bc")), tape.param(store.at(p + "ws")),
                       tape.param(store.at(p + "bs")));
    }
    Var zg = tape.segment_mean_rows(z, batch.node_offsets);
    return {z, zg};
}

EncoderOutput encode(const CrystalGraph& graph, ParamStore& store, const EncoderConfig& config) {
    const CrystalGraph* ptr = &graph;
    BatchedGraph batch = BatchedGraph::build(std::span<const CrystalGraph* const>(&ptr, 1));
    Tape tape;
    EncodeVars vars = encode_batch(tape, batch, store, config);
    return {tape.value_of(vars.z_nodes), tape.value_of(vars.z_graph)};
}

Tensor pool(const Tensor& z) {
    if (z.rows < 1) throw DomainError("pool: empty embedding matrix");
    Tensor out(1, z.cols);
    for (int i = 0; i < z.rows; ++i)
        for (int j = 0; j < z.cols; ++j) out.at(0, j) += z.at(i, j);
    for (int j = 0; j < z.cols; ++j) out.at(0, j) /= z.rows;
    return out;
}

}  // namespace crys
