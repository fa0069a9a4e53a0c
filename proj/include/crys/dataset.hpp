#pragma once

#include <string>
#include <vector>

#include "crys/graph.hpp"
#include "crys/rng.hpp"

namespace crys {

/// Reads a JSON Lines dataset: one object per line with keys
///   id (string), num_nodes (int), edges (array of [u, v, bond_length]),
///   exactly one of atoms (raw property objects) or x (pre-encoded rows),
///   optional space_group (int) and target (float).
/// Unknown keys are rejected. Edges are normalized to u < v. Every graph is
/// validated on load. Errors: FormatError "path:line: ..." for malformed
/// records, DimensionError for feature-width mismatches, DomainError /
/// DataError citing the graph id for invariant violations.
std::vector<CrystalGraph> load_dataset(const std::string& path, const FeatureLayout& layout);

/// Writes graphs as JSON Lines with pre-encoded "x" rows (raw atom
/// properties are not retained after encoding). load(save(d)) == d.
void save_dataset(const std::vector<CrystalGraph>& graphs, const std::string& path);

/// Deterministic synthetic corpus. Per graph: uniform crystal system, a
/// uniform space group within it, 2-12 atoms with uniform raw properties, a
/// random connected multigraph (spanning tree plus up to num_nodes extra
/// edges, per-pair multiplicity <= 3, bond lengths in [1.0, 3.5]) and target
///   y = 2.0 * mean_en_bucket + 0.5 * system_ordinal + Normal(0, noise_sigma).
/// All randomness comes from stream "synthetic" of the seed.
std::vector<CrystalGraph> generate_synthetic(int n, std::uint64_t seed, const FeatureLayout& layout,
                                             double noise_sigma = 0.05);

/// The noise-free part of the synthetic target formula.
double synthetic_clean_target(double mean_en_bucket, int system_ordinal);

}  // namespace crys
