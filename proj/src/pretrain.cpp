#include "crys/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>

namespace crys {

void PretrainWeights::validate() const {
    auto nonneg = [](double v, const char* name) {
        if (!(v >= 0.0) || !std::isfinite(v))
            throw ConfigError(std::string(name) + " must be >= 0, got " + std::to_string(v));
    };
    nonneg(alpha, "alpha");
    nonneg(beta, "beta");
    nonneg(gamma, "gamma");
    nonneg(lambda, "lambda");
    nonneg(neg_ratio, "neg_ratio");
    if (!(tau > 0.0) || !std::isfinite(tau))
        throw ConfigError("tau must be > 0, got " + std::to_string(tau));
}

void PretrainConfig::validate() const {
    encoder.validate();
    weights.validate();
    adam.validate();
    if (epochs < 1) throw ConfigError("epochs must be >= 1, got " + std::to_string(epochs));
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1, got " + std::to_string(batch_size));
}

void init_decoder_heads(ParamStore& store, const EncoderConfig& config, Rng& rng) {
    const int d = config.embed_dim;
    const int D = config.feature_dim;
    store.add("head.fr.w", uniform_init(rng, d, D, d));
    store.add("head.fr.b", Tensor::zeros(1, D));
    store.add("head.cr.bilinear", uniform_init(rng, d, d, d));
    store.add("head.cr.w1", uniform_init(rng, d, d, d));
    store.add("head.cr.b1", Tensor::zeros(1, d));
    store.add("head.cr.w2", uniform_init(rng, d, 1, d));
    store.add("head.cr.b2", Tensor::zeros(1, 1));
    store.add("head.sg.w", uniform_init(rng, d, kNumSpaceGroups, d));
    store.add("head.sg.b", Tensor::zeros(1, kNumSpaceGroups));
}

std::vector<PairSample> sample_connectivity_pairs(std::span<const CrystalGraph* const> graphs,
                                                  const BatchedGraph& batch, double neg_ratio,
                                                  Rng& rng) {
    if (!(neg_ratio >= 0.0)) throw ConfigError("neg_ratio must be >= 0");
    std::vector<PairSample> out;
    for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
        const CrystalGraph& g = *graphs[gi];
        if (g.num_nodes < 2) continue;
        const int base = batch.node_offsets[gi];

        std::map<std::pair<int, int>, int> mult;
        for (const Edge& e : g.edges) ++mult[{e.u, e.v}];
        for (const auto& [pair, k] : mult)
            out.push_back({base + pair.first, base + pair.second, static_cast<double>(k)});

        const int adjacent = static_cast<int>(mult.size());
        const int want_neg = static_cast<int>(std::ceil(neg_ratio * adjacent));
        if (want_neg == 0) continue;
        std::vector<std::pair<int, int>> non_adjacent;
        for (int u = 0; u < g.num_nodes; ++u)
            for (int v = u + 1; v < g.num_nodes; ++v)
                if (!mult.count({u, v})) non_adjacent.push_back({u, v});
        rng.shuffle(non_adjacent);
        const int take = std::min<int>(want_neg, static_cast<int>(non_adjacent.size()));
        for (int i = 0; i < take; ++i)
            out.push_back({base + non_adjacent[static_cast<std::size_t>(i)].first,
                           base + non_adjacent[static_cast<std::size_t>(i)].second, 0.0});
    }
    return out;
}

PretrainBatch PretrainBatch::build(std::span<const CrystalGraph* const> graphs, double neg_ratio,
                                   Rng& rng) {
    PretrainBatch b;
    b.graph = BatchedGraph::build(graphs);
    b.pairs = sample_connectivity_pairs(graphs, b.graph, neg_ratio, rng);
    for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
        if (!graphs[gi]->space_group) continue;
        const int sg = *graphs[gi]->space_group;
        b.sg_rows.push_back(static_cast<int>(gi));
        b.sg_labels.push_back(sg - 1);
        b.sys_rows.push_back(static_cast<int>(gi));
        b.sys_labels.push_back(static_cast<int>(space_group_to_system(sg)));
    }
    return b;
}

Var feature_recon_loss(Tape& tape, Var z_nodes, const Tensor& features, ParamStore& store) {
    Var xhat = tape.affine(z_nodes, tape.param(store.at("head.fr.w")),
                           tape.param(store.at("head.fr.b")));
    Var diff = tape.sub(xhat, tape.constant(features));
    Var sq = tape.mul(diff, diff);
    const double scale = 1.0 / (static_cast<double>(features.rows) * features.cols);
    return tape.scale(tape.sum_all(sq), scale);
}

Var connectivity_recon_loss(Tape& tape, Var z_nodes, const std::vector<PairSample>& pairs,
                            ParamStore& store) {
    if (pairs.empty()) throw DomainError("connectivity loss needs at least one pair");
    const int p = static_cast<int>(pairs.size());
    std::vector<int> us, vs;
    us.reserve(pairs.size());
    vs.reserve(pairs.size());
    Tensor targets(p, 1);
    for (int i = 0; i < p; ++i) {
        us.push_back(pairs[static_cast<std::size_t>(i)].u);
        vs.push_back(pairs[static_cast<std::size_t>(i)].v);
        targets.at(i, 0) = pairs[static_cast<std::size_t>(i)].target;
    }
    Var zu = tape.row_gather(z_nodes, us);
    Var zv = tape.row_gather(z_nodes, vs);
    Var bil = tape.param(store.at("head.cr.bilinear"));
    Var w1 = tape.param(store.at("head.cr.w1"));
    Var b1 = tape.param(store.at("head.cr.b1"));
    Var w2 = tape.param(store.at("head.cr.w2"));
    Var b2 = tape.param(store.at("head.cr.b2"));
    auto score = [&](Var a, Var b) {
        Var combined = tape.mul(tape.matmul(a, bil), b);
        Var hidden = tape.activation(tape.affine(combined, w1, b1), Activation::Softplus);
        return tape.affine(hidden, w2, b2);
    };
    Var s = tape.scale(tape.add(score(zu, zv), score(zv, zu)), 0.5);
    Var diff = tape.sub(s, tape.constant(std::move(targets)));
    return tape.scale(tape.sum_all(tape.mul(diff, diff)), 1.0 / p);
}

Var space_group_loss(Tape& tape, Var z_graph, const std::vector<int>& rows,
                     const std::vector<int>& labels, ParamStore& store) {
    if (rows.empty()) throw DomainError("space-group loss needs at least one labeled graph");
    if (rows.size() != labels.size()) throw DimensionError("space-group rows/labels mismatch");
    Var zl = tape.row_gather(z_graph, rows);
    Var logits = tape.affine(zl, tape.param(store.at("head.sg.w")),
                             tape.param(store.at("head.sg.b")));
    return tape.softmax_xent(logits, labels);
}

Tape::NtXentOut ntxent_loss(Tape& tape, Var z_graph, const std::vector<int>& rows,
                            const std::vector<int>& labels, double tau) {
    if (rows.size() < 2) throw DomainError("ntxent loss needs a batch of at least 2");
    if (rows.size() != labels.size()) throw DimensionError("ntxent rows/labels mismatch");
    Var norm = tape.row_normalize(tape.row_gather(z_graph, rows));
    Var sims = tape.matmul_nt(norm, norm);
    return tape.ntxent_from_sims(sims, labels, tau);
}

double combine_pretrain_components(double fr, double cr, double sg, double ntxent,
                                   const PretrainWeights& weights) {
    double total = 0.0;
    if (weights.enable_fr) total += weights.alpha * fr;
    if (weights.enable_cr) total += weights.beta * cr;
    if (weights.enable_sg) total += weights.gamma * sg;
    if (weights.enable_ntxent) total += weights.lambda * ntxent;
    return total;
}

PretrainLossOut pretrain_loss(Tape& tape, const PretrainBatch& batch, ParamStore& store,
                              const EncoderConfig& config, const PretrainWeights& weights) {
    EncodeVars enc = encode_batch(tape, batch.graph, store, config);
    PretrainLossOut out;
    std::vector<Var> terms;

    if (weights.enable_fr) {
        Var fr = feature_recon_loss(tape, enc.z_nodes, batch.graph.features, store);
        out.fr = fr.scalar();
        terms.push_back(tape.scale(fr, weights.alpha));
    }
    if (weights.enable_cr && !batch.pairs.empty()) {
        Var cr = connectivity_recon_loss(tape, enc.z_nodes, batch.pairs, store);
        out.cr = cr.scalar();
        terms.push_back(tape.scale(cr, weights.beta));
    }
    if (weights.enable_sg && !batch.sg_rows.empty()) {
        Var sg = space_group_loss(tape, enc.z_graph, batch.sg_rows, batch.sg_labels, store);
        out.sg = sg.scalar();
        terms.push_back(tape.scale(sg, weights.gamma));
    }
    if (weights.enable_ntxent && batch.sys_rows.size() >= 2) {
        Tape::NtXentOut nt = ntxent_loss(tape, enc.z_graph, batch.sys_rows, batch.sys_labels,
                                         weights.tau);
        out.ntxent = nt.loss.scalar();
        if (nt.has_positives) terms.push_back(tape.scale(nt.loss, weights.lambda));
    }

    if (terms.empty()) {
        out.total = tape.constant(Tensor::zeros(1, 1));
        return out;
    }
    Var total = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i) total = tape.add(total, terms[i]);
    out.total = total;
    return out;
}

PretrainResult run_pretrain(const std::vector<CrystalGraph>& dataset, const PretrainConfig& config) {
    config.validate();
    if (dataset.empty()) throw DomainError("pretraining dataset is empty");
    if (!config.weights.any_enabled())
        throw ConfigError("all four pretraining losses are masked off");

    Rng root(config.seed);
    Rng init_rng = root.stream("init");
    Rng shuffle_rng = root.stream("shuffle");
    Rng neg_rng = root.stream("negsample");

    PretrainResult result;
    init_encoder_params(result.params, config.encoder, init_rng);
    init_decoder_heads(result.params, config.encoder, init_rng);

    const int n = static_cast<int>(dataset.size());
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    ParamStore last_good = result.params;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        PretrainTraceRow row;
        for (int start = 0; start < n; start += config.batch_size) {
            const int count = std::min(config.batch_size, n - start);
            std::vector<const CrystalGraph*> ptrs;
            ptrs.reserve(static_cast<std::size_t>(count));
            for (int i = 0; i < count; ++i)
                ptrs.push_back(&dataset[static_cast<std::size_t>(order[static_cast<std::size_t>(start + i)])]);

            PretrainBatch batch = PretrainBatch::build(
                std::span<const CrystalGraph* const>(ptrs), config.weights.neg_ratio, neg_rng);
            Tape tape;
            PretrainLossOut loss = pretrain_loss(tape, batch, result.params, config.encoder,
                                                 config.weights);
            const double total = loss.total.scalar();
            if (!std::isfinite(total)) {
                result.params = std::move(last_good);
                result.aborted = true;
                result.abort_reason =
                    "epoch " + std::to_string(epoch) + ": non-finite pretraining loss";
                return result;
            }
            tape.backward(loss.total);
            adam_step(result.params, config.adam);

            row.total += total * count;
            row.fr += loss.fr * count;
            row.cr += loss.cr * count;
            row.sg += loss.sg * count;
            row.ntxent += loss.ntxent * count;
        }
        row.total /= n;
        row.fr /= n;
        row.cr /= n;
        row.sg /= n;
        row.ntxent /= n;
        result.trace.push_back(row);
        last_good = result.params;
    }
    return result;
}

void write_pretrain_trace(const std::vector<PretrainTraceRow>& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open trace file: " + path);
    out << "epoch,total,l_fr,l_cr,l_sg,l_ntxent\n";
    char buf[160];
    for (std::size_t i = 0; i < trace.size(); ++i) {
        const PretrainTraceRow& r = trace[i];
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", i + 1, r.total, r.fr,
                      r.cr, r.sg, r.ntxent);
        out << buf;
    }
    if (!out) throw DataError("write failed: " + path);
}

double space_group_accuracy(const std::vector<CrystalGraph>& graphs, ParamStore& store,
                            const EncoderConfig& config) {
    int labeled = 0, correct = 0;
    const Tensor& w = store.at("head.sg.w");
    const Tensor& b = store.at("head.sg.b");
    for (const CrystalGraph& g : graphs) {
        if (!g.space_group) continue;
        ++labeled;
        EncoderOutput out = encode(g, store, config);
        int best = 0;
        double best_logit = -1e300;
        for (int c = 0; c < kNumSpaceGroups; ++c) {
            double logit = b.at(0, c);
            for (int j = 0; j < config.embed_dim; ++j) logit += out.z_graph.at(0, j) * w.at(j, c);
            if (logit > best_logit) {
                best_logit = logit;
                best = c;
            }
        }
        if (best == *g.space_group - 1) ++correct;
    }
    if (labeled == 0) throw DataError("no space-group labels in dataset");
    return static_cast<double>(correct) / labeled;
}

}  // namespace crys
