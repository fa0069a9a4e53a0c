#include "crys/dataset.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace crys {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

[[noreturn]] void fail_line(const std::string& path, int line, const std::string& msg) {
    throw FormatError(path + ":" + std::to_string(line) + ": " + msg);
}

int require_int(const json& obj, const char* key, const std::string& path, int line) {
    if (!obj.contains(key)) fail_line(path, line, std::string("missing key '") + key + "'");
    const json& v = obj.at(key);
    if (!v.is_number_integer()) fail_line(path, line, std::string("key '") + key + "' must be an integer");
    return v.get<int>();
}

double as_number(const json& v, const char* what, const std::string& path, int line) {
    if (!v.is_number()) fail_line(path, line, std::string(what) + " must be a number");
    return v.get<double>();
}

AtomPropertyRaw parse_atom(const json& obj, const std::string& path, int line) {
    if (!obj.is_object()) fail_line(path, line, "atom entry must be an object");
    static const char* kKeys[] = {"group", "period", "en", "radius", "valence",
                                  "ie",    "ea",     "block", "volume"};
    for (const auto& item : obj.items()) {
        bool known = false;
        for (const char* k : kKeys) known = known || item.key() == k;
        if (!known) fail_line(path, line, "unknown atom key '" + item.key() + "'");
    }
    AtomPropertyRaw raw;
    raw.group = require_int(obj, "group", path, line);
    raw.period = require_int(obj, "period", path, line);
    raw.valence = require_int(obj, "valence", path, line);
    for (const char* k : {"en", "radius", "ie", "ea", "volume"})
        if (!obj.contains(k)) fail_line(path, line, std::string("missing atom key '") + k + "'");
    raw.en = as_number(obj.at("en"), "en", path, line);
    raw.radius = as_number(obj.at("radius"), "radius", path, line);
    raw.ie = as_number(obj.at("ie"), "ie", path, line);
    raw.ea = as_number(obj.at("ea"), "ea", path, line);
    raw.volume = as_number(obj.at("volume"), "volume", path, line);
    if (!obj.contains("block") || !obj.at("block").is_string())
        fail_line(path, line, "atom key 'block' must be a string");
    raw.block = block_from_name(obj.at("block").get<std::string>());
    return raw;
}

}  // namespace

std::vector<CrystalGraph> load_dataset(const std::string& path, const FeatureLayout& layout) {
    layout.validate();
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset file: " + path);

    std::vector<CrystalGraph> graphs;
    std::string text;
    int line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (text.find_first_not_of(" \t\r") == std::string::npos) continue;

        json obj;
        try {
            obj = json::parse(text);
        } catch (const json::exception& e) {
            fail_line(path, line, e.what());
        }
        if (!obj.is_object()) fail_line(path, line, "record must be a JSON object");
        for (const auto& item : obj.items()) {
            static const char* kKeys[] = {"id", "num_nodes", "edges",      "atoms",
                                          "x",  "target",    "space_group"};
            bool known = false;
            for (const char* k : kKeys) known = known || item.key() == k;
            if (!known) fail_line(path, line, "unknown key '" + item.key() + "'");
        }

        CrystalGraph g;
        if (!obj.contains("id") || !obj.at("id").is_string())
            fail_line(path, line, "missing key 'id' (string)");
        g.id = obj.at("id").get<std::string>();
        g.num_nodes = require_int(obj, "num_nodes", path, line);

        if (!obj.contains("edges") || !obj.at("edges").is_array())
            fail_line(path, line, "missing key 'edges' (array)");
        for (const json& e : obj.at("edges")) {
            if (!e.is_array() || e.size() != 3)
                fail_line(path, line, "edge must be [u, v, bond_length]");
            if (!e[0].is_number_integer() || !e[1].is_number_integer())
                fail_line(path, line, "edge endpoints must be integers");
            Edge edge;
            edge.u = e[0].get<int>();
            edge.v = e[1].get<int>();
            edge.length = as_number(e[2], "bond_length", path, line);
            if (edge.u > edge.v) std::swap(edge.u, edge.v);
            g.edges.push_back(edge);
        }

        const bool has_atoms = obj.contains("atoms");
        const bool has_x = obj.contains("x");
        if (has_atoms == has_x)
            fail_line(path, line, "record must carry exactly one of 'atoms' or 'x'");

        const int dim = layout.total_dim();
        if (has_atoms) {
            const json& atoms = obj.at("atoms");
            if (!atoms.is_array()) fail_line(path, line, "'atoms' must be an array");
            if (static_cast<int>(atoms.size()) != g.num_nodes)
                fail_line(path, line, "atoms size " + std::to_string(atoms.size()) +
                                          " != num_nodes " + std::to_string(g.num_nodes));
            g.node_features = Tensor(g.num_nodes, dim);
            for (int i = 0; i < g.num_nodes; ++i) {
                std::vector<double> row;
                try {
                    row = encode_atom_features(parse_atom(atoms[static_cast<std::size_t>(i)], path, line), layout);
                } catch (const FormatError&) {
                    throw;
                } catch (const DataError& e) {
                    throw DataError("graph '" + g.id + "': atom " + std::to_string(i) + ": " + e.what());
                }
                std::copy(row.begin(), row.end(),
                          g.node_features.values.begin() + static_cast<long>(i) * dim);
            }
        } else {
            const json& x = obj.at("x");
            if (!x.is_array()) fail_line(path, line, "'x' must be an array of arrays");
            if (static_cast<int>(x.size()) != g.num_nodes)
                fail_line(path, line, "x row count " + std::to_string(x.size()) +
                                          " != num_nodes " + std::to_string(g.num_nodes));
            g.node_features = Tensor(g.num_nodes, dim);
            for (int i = 0; i < g.num_nodes; ++i) {
                const json& row = x[static_cast<std::size_t>(i)];
                if (!row.is_array()) fail_line(path, line, "'x' rows must be arrays");
                if (static_cast<int>(row.size()) != dim)
                    throw DimensionError("graph '" + g.id + "': feature row " + std::to_string(i) +
                                         " has " + std::to_string(row.size()) + " dims, expected " +
                                         std::to_string(dim));
                for (int j = 0; j < dim; ++j)
                    g.node_features.at(i, j) = as_number(row[static_cast<std::size_t>(j)], "feature", path, line);
            }
        }

        if (obj.contains("space_group")) g.space_group = require_int(obj, "space_group", path, line);
        if (obj.contains("target")) g.target = as_number(obj.at("target"), "target", path, line);

        const auto violations = validate_graph(g, dim);
        if (!violations.empty()) {
            const Violation& v = violations.front();
            const std::string msg = "graph '" + g.id + "': " + v.field + ": " + v.message;
            if (v.field == "space_group") throw DomainError(msg);
            throw DataError(msg);
        }
        graphs.push_back(std::move(g));
    }
    return graphs;
}

void save_dataset(const std::vector<CrystalGraph>& graphs, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open output file: " + path);
    for (const CrystalGraph& g : graphs) {
        ordered_json obj;
        obj["id"] = g.id;
        obj["num_nodes"] = g.num_nodes;
        ordered_json edges = ordered_json::array();
        for (const Edge& e : g.edges) edges.push_back({e.u, e.v, e.length});
        obj["edges"] = std::move(edges);
        ordered_json x = ordered_json::array();
        for (int i = 0; i < g.node_features.rows; ++i) {
            ordered_json row = ordered_json::array();
            for (int j = 0; j < g.node_features.cols; ++j) row.push_back(g.node_features.at(i, j));
            x.push_back(std::move(row));
        }
        obj["x"] = std::move(x);
        if (g.space_group) obj["space_group"] = *g.space_group;
        if (g.target) obj["target"] = *g.target;
        out << obj.dump() << '\n';
    }
    if (!out) throw DataError("write failed: " + path);
}

double synthetic_clean_target(double mean_en_bucket, int system_ordinal) {
    return 2.0 * mean_en_bucket + 0.5 * system_ordinal;
}

std::vector<CrystalGraph> generate_synthetic(int n, std::uint64_t seed, const FeatureLayout& layout,
                                             double noise_sigma) {
    if (n < 1) throw DomainError("generate_synthetic: n must be >= 1, got " + std::to_string(n));
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma))
        throw ConfigError("noise_sigma must be >= 0");
    layout.validate();

    Rng root(seed);
    Rng rng = root.stream("synthetic");
    const int dim = layout.total_dim();

    std::vector<CrystalGraph> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int gi = 0; gi < n; ++gi) {
        CrystalGraph g;
        g.id = "syn-" + std::to_string(gi);

        const int sys = static_cast<int>(rng.uniform_int(0, kNumCrystalSystems - 1));
        const auto [sg_lo, sg_hi] = space_group_range(static_cast<CrystalSystem>(sys));
        g.space_group = static_cast<int>(rng.uniform_int(sg_lo, sg_hi));
        g.num_nodes = static_cast<int>(rng.uniform_int(2, 12));

        g.node_features = Tensor(g.num_nodes, dim);
        double en_bucket_sum = 0.0;
        for (int a = 0; a < g.num_nodes; ++a) {
            AtomPropertyRaw raw;
            raw.group = static_cast<int>(rng.uniform_int(1, layout.group_dim));
            raw.period = static_cast<int>(rng.uniform_int(1, layout.period_dim));
            raw.en = rng.uniform(layout.en_lo, layout.en_hi);
            raw.radius = rng.uniform(layout.radius_lo, layout.radius_hi);
            raw.valence = static_cast<int>(rng.uniform_int(1, layout.valence_dim));
            raw.ie = rng.uniform(layout.ie_lo, layout.ie_hi);
            raw.ea = rng.uniform(layout.ea_lo, layout.ea_hi);
            raw.block = static_cast<Block>(rng.uniform_int(0, 3));
            raw.volume = rng.uniform(layout.volume_lo, layout.volume_hi);
            const auto row = encode_atom_features(raw, layout);
            std::copy(row.begin(), row.end(),
                      g.node_features.values.begin() + static_cast<long>(a) * dim);
            en_bucket_sum += bucket_index(raw.en, layout.en_lo, layout.en_hi, layout.en_buckets);
        }

        std::map<std::pair<int, int>, int> multiplicity;
        for (int v = 1; v < g.num_nodes; ++v) {
            const int u = static_cast<int>(rng.uniform_int(0, v - 1));
            g.edges.push_back({u, v, rng.uniform(1.0, 3.5)});
            ++multiplicity[{u, v}];
        }
        const int extra = static_cast<int>(rng.uniform_int(0, g.num_nodes));
        for (int e = 0; e < extra; ++e) {
            for (;;) {
                int u = static_cast<int>(rng.uniform_int(0, g.num_nodes - 1));
                int v = static_cast<int>(rng.uniform_int(0, g.num_nodes - 1));
                if (u == v) continue;
                if (u > v) std::swap(u, v);
                if (multiplicity[{u, v}] >= 3) continue;
                ++multiplicity[{u, v}];
                g.edges.push_back({u, v, rng.uniform(1.0, 3.5)});
                break;
            }
        }

        const double m = en_bucket_sum / g.num_nodes;
        const double eta = rng.normal(0.0, noise_sigma);
        g.target = synthetic_clean_target(m, sys) + eta;
        out.push_back(std::move(g));
    }
    return out;
}

}  // namespace crys
