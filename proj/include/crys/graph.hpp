#pragma once

#include <optional>
#include <string>
#include <vector>

#include "crys/errors.hpp"
#include "crys/tensor.hpp"

namespace crys {

/// The seven crystal systems. Order is fixed; the integer value is the
/// class label used by the contrastive loss and the synthetic target.
enum class CrystalSystem : int {
    Triclinic = 0,
    Monoclinic = 1,
    Orthorhombic = 2,
    Tetragonal = 3,
    Trigonal = 4,
    Hexagonal = 5,
    Cubic = 6,
};

inline constexpr int kNumCrystalSystems = 7;
inline constexpr int kNumSpaceGroups = 230;

const char* crystal_system_name(CrystalSystem s);

/// Standard crystallographic partition of the 230 space groups.
/// Throws DomainError outside [1, 230].
CrystalSystem space_group_to_system(int space_group);

/// Inclusive space-group range of a system (1-2, 3-15, ..., 195-230).
std::pair<int, int> space_group_range(CrystalSystem s);

enum class Block : int { S = 0, P = 1, D = 2, F = 3 };

const char* block_name(Block b);
/// Throws DataError on anything but "s", "p", "d", "f".
Block block_from_name(const std::string& name);

/// Raw per-atom properties before one-hot encoding. Ranges follow the
/// atomic feature table.
struct AtomPropertyRaw {
    int group = 1;          // [1, 18]
    int period = 1;         // [1, 9]
    double en = 0.5;        // electronegativity, [0.5, 4.0]
    double radius = 25.0;   // covalent radius, pm, [25, 250]
    int valence = 1;        // [1, 12]
    double ie = 1.3;        // first ionization energy, eV, [1.3, 3.3]
    double ea = -3.0;       // electron affinity, eV, [-3.0, 3.7]
    Block block = Block::S;
    double volume = 1.5;    // atomic volume, cm^3/mol, [1.5, 4.3]
};

/// Widths and ranges of the one-hot segments making up a node feature
/// vector. The default layout follows the feature table and sums to 93.
struct FeatureLayout {
    int group_dim = 18;
    int period_dim = 9;
    int en_buckets = 10;
    double en_lo = 0.5, en_hi = 4.0;
    int radius_buckets = 10;
    double radius_lo = 25.0, radius_hi = 250.0;
    int valence_dim = 12;
    int ie_buckets = 10;
    double ie_lo = 1.3, ie_hi = 3.3;
    int ea_buckets = 10;
    double ea_lo = -3.0, ea_hi = 3.7;
    int block_dim = 4;
    int volume_buckets = 10;
    double volume_lo = 1.5, volume_hi = 4.3;

    int total_dim() const {
        return group_dim + period_dim + en_buckets + radius_buckets + valence_dim + ie_buckets +
               ea_buckets + block_dim + volume_buckets;
    }
    /// Throws ConfigError naming the offending field.
    void validate() const;
};

/// clamp(floor((v - lo) / (hi - lo) * buckets), 0, buckets - 1)
int bucket_index(double v, double lo, double hi, int buckets);

/// One-hot concatenation of all property segments; exactly one 1 per
/// segment. Throws DataError naming the property on an out-of-range value.
std::vector<double> encode_atom_features(const AtomPropertyRaw& raw, const FeatureLayout& layout);

/// One undirected multi-edge instance, stored with u < v. Repeated (u, v)
/// entries realize multiplicity.
struct Edge {
    int u = 0;
    int v = 0;
    double length = 0.0;
};

/// Undirected weighted multigraph of atoms with encoded node features.
/// Immutable after construction by convention; safe to share across threads.
struct CrystalGraph {
    std::string id;
    int num_nodes = 0;
    Tensor node_features;  // [num_nodes x D]
    std::vector<Edge> edges;
    std::optional<int> space_group;
    std::optional<double> target;
};

struct Violation {
    std::string field;
    std::string message;
};

/// Pure invariant check; empty result iff the graph is well-formed.
/// expected_dim < 0 skips the feature-width check.
std::vector<Violation> validate_graph(const CrystalGraph& g, int expected_dim = -1);

}  // namespace crys
