#pragma once

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "divens/common.hpp"

namespace divens {

/// Bounds of the architecture search space. The maximum block count r_max is
/// the padded length R of every normalized representation.
struct SearchSpaceBounds {
  int r_min = 2;
  int r_max = 6;
  int c_min = 4;
  int c_max = 16;
  int o_min = 16;
  int o_max = 64;
  double d_min = 0.1;
  double d_max = 0.9;

  /// Throws InvalidArgument unless every bound invariant holds.
  void validate() const;

  /// Normalized representation length, 2 + 2R.
  std::size_t norm_length() const { return 2 + 2 * static_cast<std::size_t>(r_max); }

  bool operator==(const SearchSpaceBounds&) const = default;
};

/// Validated construction.
SearchSpaceBounds make_bounds(int r_min, int r_max, int c_min, int c_max, int o_min, int o_max,
                              double d_min, double d_max);

struct Block {
  int width = 0;
  double dropout = 0.0;

  bool operator==(const Block&) const = default;
};

/// Architecture descriptor: joint-training flag, first-layer width and an
/// ordered list of residual blocks.
struct Genome {
  bool joint = false;
  int first_width = 0;
  std::vector<Block> blocks;

  int block_count() const { return static_cast<int>(blocks.size()); }
  bool operator==(const Genome&) const = default;
};

bool is_valid(const Genome& g, const SearchSpaceBounds& bounds);

struct NormalizedRep {
  std::vector<double> values;
  bool operator==(const NormalizedRep&) const = default;
};

struct ArchRep {
  std::vector<double> values;
  bool operator==(const ArchRep&) const = default;
};

enum class MutationKind { add_block, remove_block, reparameterize_block, swap_blocks };

const char* to_string(MutationKind kind);

struct Mutation {
  Genome child;
  MutationKind kind;
};

Genome random_genome(const SearchSpaceBounds& bounds, Rng& rng);

/// Rescales every gene to [0,1] and pads both block sequences with leading
/// zeros up to r_max entries.
NormalizedRep normalize(const Genome& g, const SearchSpaceBounds& bounds);

ArchRep arch_rep(const NormalizedRep& n);

/// Applies one mutation kind, drawn uniformly among the kinds feasible for g.
Mutation mutate_traced(const Genome& g, const SearchSpaceBounds& bounds, Rng& rng);

inline Genome mutate(const Genome& g, const SearchSpaceBounds& bounds, Rng& rng) {
  return mutate_traced(g, bounds, rng).child;
}

/// Layer layout of the residual MLP a genome maps to.
struct LearnerConfig {
  int input_width = 0;
  std::vector<int> block_widths;
  std::vector<double> block_dropouts;

  bool operator==(const LearnerConfig&) const = default;
};

LearnerConfig genome_to_config(const Genome& g);

// Structured record {"j":0|1,"c":int,"blocks":[[o,d],...]}
nlohmann::json to_json(const Genome& g);
Genome genome_from_json(const nlohmann::json& j);
std::string genome_record(const Genome& g);

/// Stable 64-bit key of the genome record.
std::uint64_t genome_key(const Genome& g);

nlohmann::json to_json(const SearchSpaceBounds& b);

}  // namespace divens
