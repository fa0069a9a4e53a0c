#include "crys/graph.hpp"

#include <cmath>

namespace crys {

const char* crystal_system_name(CrystalSystem s) {
    switch (s) {
        case CrystalSystem::Triclinic: return "triclinic";
        case CrystalSystem::Monoclinic: return "monoclinic";
        case CrystalSystem::Orthorhombic: return "orthorhombic";
        case CrystalSystem::Tetragonal: return "tetragonal";
        case CrystalSystem::Trigonal: return "trigonal";
        case CrystalSystem::Hexagonal: return "hexagonal";
        case CrystalSystem::Cubic: return "cubic";
    }
    return "?";
}

CrystalSystem space_group_to_system(int space_group) {
    if (space_group < 1 || space_group > kNumSpaceGroups)
        throw DomainError("space group " + std::to_string(space_group) + " outside [1, 230]");
    if (space_group <= 2) return CrystalSystem::Triclinic;
    if (space_group <= 15) return CrystalSystem::Monoclinic;
    if (space_group <= 74) return CrystalSystem::Orthorhombic;
    if (space_group <= 142) return CrystalSystem::Tetragonal;
    if (space_group <= 167) return CrystalSystem::Trigonal;
    if (space_group <= 194) return CrystalSystem::Hexagonal;
    return CrystalSystem::Cubic;
}

std::pair<int, int> space_group_range(CrystalSystem s) {
    switch (s) {
        case CrystalSystem::Triclinic: return {1, 2};
        case CrystalSystem::Monoclinic: return {3, 15};
        case CrystalSystem::Orthorhombic: return {16, 74};
        case CrystalSystem::Tetragonal: return {75, 142};
        case CrystalSystem::Trigonal: return {143, 167};
        case CrystalSystem::Hexagonal: return {168, 194};
        case CrystalSystem::Cubic: return {195, 230};
    }
    throw DomainError("invalid crystal system");
}

const char* block_name(Block b) {
    switch (b) {
        case Block::S: return "s";
        case Block::P: return "p";
        case Block::D: return "d";
        case Block::F: return "f";
    }
    return "?";
}

Block block_from_name(const std::string& name) {
    if (name == "s") return Block::S;
    if (name == "p") return Block::P;
    if (name == "d") return Block::D;
    if (name == "f") return Block::F;
    throw DataError("unknown block '" + name + "', expected one of s, p, d, f");
}

void FeatureLayout::validate() const {
    auto positive = [](int v, const char* name) {
        if (v < 1) throw ConfigError(std::string(name) + " must be >= 1");
    };
    positive(group_dim, "group_dim");
    positive(period_dim, "period_dim");
    positive(en_buckets, "en_buckets");
    positive(radius_buckets, "radius_buckets");
    positive(valence_dim, "valence_dim");
    positive(ie_buckets, "ie_buckets");
    positive(ea_buckets, "ea_buckets");
    positive(block_dim, "block_dim");
    positive(volume_buckets, "volume_buckets");
    auto ordered = [](double lo, double hi, const char* name) {
        if (!(lo < hi)) throw ConfigError(std::string(name) + " range must have lo < hi");
    };
    ordered(en_lo, en_hi, "en");
    ordered(radius_lo, radius_hi, "radius");
    ordered(ie_lo, ie_hi, "ie");
    ordered(ea_lo, ea_hi, "ea");
    ordered(volume_lo, volume_hi, "volume");
    if (block_dim != 4) throw ConfigError("block_dim must be 4 (s, p, d, f)");
}

int bucket_index(double v, double lo, double hi, int buckets) {
    const int raw = static_cast<int>(std::floor((v - lo) / (hi - lo) * buckets));
    return std::min(std::max(raw, 0), buckets - 1);
}

namespace {

void check_range_int(int v, int lo, int hi, const char* property) {
    if (v < lo || v > hi)
        throw DataError(std::string(property) + " = " + std::to_string(v) + " outside [" +
                        std::to_string(lo) + ", " + std::to_string(hi) + "]");
}

void check_range_real(double v, double lo, double hi, const char* property) {
    if (!std::isfinite(v) || v < lo || v > hi)
        throw DataError(std::string(property) + " = " + std::to_string(v) + " outside [" +
                        std::to_string(lo) + ", " + std::to_string(hi) + "]");
}

}  // namespace

std::vector<double> encode_atom_features(const AtomPropertyRaw& raw, const FeatureLayout& layout) {
    check_range_int(raw.group, 1, layout.group_dim, "group");
    check_range_int(raw.period, 1, layout.period_dim, "period");
    check_range_real(raw.en, layout.en_lo, layout.en_hi, "en");
    check_range_real(raw.radius, layout.radius_lo, layout.radius_hi, "radius");
    check_range_int(raw.valence, 1, layout.valence_dim, "valence");
    check_range_real(raw.ie, layout.ie_lo, layout.ie_hi, "ie");
    check_range_real(raw.ea, layout.ea_lo, layout.ea_hi, "ea");
    check_range_real(raw.volume, layout.volume_lo, layout.volume_hi, "volume");

    std::vector<double> x(static_cast<std::size_t>(layout.total_dim()), 0.0);
    std::size_t base = 0;
    auto hot = [&x, &base](int idx, int width) {
        x[base + static_cast<std::size_t>(idx)] = 1.0;
        base += static_cast<std::size_t>(width);
    };
    hot(raw.group - 1, layout.group_dim);
    hot(raw.period - 1, layout.period_dim);
    hot(bucket_index(raw.en, layout.en_lo, layout.en_hi, layout.en_buckets), layout.en_buckets);
    hot(bucket_index(raw.radius, layout.radius_lo, layout.radius_hi, layout.radius_buckets),
        layout.radius_buckets);
    hot(raw.valence - 1, layout.valence_dim);
    hot(bucket_index(raw.ie, layout.ie_lo, layout.ie_hi, layout.ie_buckets), layout.ie_buckets);
    hot(bucket_index(raw.ea, layout.ea_lo, layout.ea_hi, layout.ea_buckets), layout.ea_buckets);
    hot(static_cast<int>(raw.block), layout.block_dim);
    hot(bucket_index(raw.volume, layout.volume_lo, layout.volume_hi, layout.volume_buckets),
        layout.volume_buckets);
    return x;
}

std::vector<Violation> validate_graph(const CrystalGraph& g, int expected_dim) {
    std::vector<Violation> out;
    auto flag = [&out](const std::string& field, const std::string& message) {
        out.push_back({field, message});
    };

    if (g.num_nodes < 1) flag("num_nodes", "must be >= 1, got " + std::to_string(g.num_nodes));
    if (g.node_features.rows != g.num_nodes)
        flag("node_features", "row count " + std::to_string(g.node_features.rows) +
                                  " != num_nodes " + std::to_string(g.num_nodes));
    if (expected_dim >= 0 && g.node_features.cols != expected_dim)
        flag("node_features", "feature dim " + std::to_string(g.node_features.cols) + " != " +
                                  std::to_string(expected_dim));
    if (!g.node_features.all_finite()) flag("node_features", "non-finite value");

    for (std::size_t i = 0; i < g.edges.size(); ++i) {
        const Edge& e = g.edges[i];
        const std::string tag = "edges[" + std::to_string(i) + "]";
        if (e.u < 0 || e.u >= g.num_nodes || e.v < 0 || e.v >= g.num_nodes)
            flag(tag, "node index out of range for " + std::to_string(g.num_nodes) + " nodes");
        else if (e.u == e.v)
            flag(tag, "self-loop at node " + std::to_string(e.u));
        else if (e.u > e.v)
            flag(tag, "endpoints not normalized u < v");
        if (!std::isfinite(e.length) || e.length <= 0.0)
            flag(tag, "bond length must be finite and > 0");
    }

    if (g.space_group && (*g.space_group < 1 || *g.space_group > kNumSpaceGroups))
        flag("space_group", std::to_string(*g.space_group) + " outside [1, 230]");
    if (g.target && !std::isfinite(*g.target)) flag("target", "non-finite");
    return out;
}

}  // namespace crys
