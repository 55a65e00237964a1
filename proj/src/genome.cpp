#include "divens/genome.hpp"

#include <algorithm>
#include <array>

#include <nlohmann/json.hpp>

namespace divens {

void SearchSpaceBounds::validate() const {
  if (r_min < 1) throw InvalidArgument("bounds: r_min must be >= 1");
  if (r_min > r_max) throw InvalidArgument("bounds: r_min > r_max");
  if (!(c_min < c_max)) throw InvalidArgument("bounds: c_min must be < c_max");
  if (c_min < 1) throw InvalidArgument("bounds: c_min must be >= 1");
  if (!(o_min < o_max)) throw InvalidArgument("bounds: o_min must be < o_max");
  if (o_min < 1) throw InvalidArgument("bounds: o_min must be >= 1");
  if (!(0.0 <= d_min && d_min < d_max && d_max < 1.0))
    throw InvalidArgument("bounds: need 0 <= d_min < d_max < 1");
}

SearchSpaceBounds make_bounds(int r_min, int r_max, int c_min, int c_max, int o_min, int o_max,
                              double d_min, double d_max) {
  SearchSpaceBounds b{r_min, r_max, c_min, c_max, o_min, o_max, d_min, d_max};
  b.validate();
  return b;
}

bool is_valid(const Genome& g, const SearchSpaceBounds& b) {
  const int r = g.block_count();
  if (r < b.r_min || r > b.r_max) return false;
  if (g.first_width < b.c_min || g.first_width > b.c_max) return false;
  return std::all_of(g.blocks.begin(), g.blocks.end(), [&](const Block& blk) {
    return blk.width >= b.o_min && blk.width <= b.o_max && blk.dropout >= b.d_min &&
           blk.dropout <= b.d_max;
  });
}

const char* to_string(MutationKind kind) {
  switch (kind) {
    case MutationKind::add_block: return "add";
    case MutationKind::remove_block: return "remove";
    case MutationKind::reparameterize_block: return "reparameterize";
    case MutationKind::swap_blocks: return "swap";
  }
  return "?";
}

namespace {

Block random_block(const SearchSpaceBounds& b, Rng& rng) {
  std::uniform_int_distribution<int> width(b.o_min, b.o_max);
  std::uniform_real_distribution<double> dropout(b.d_min, b.d_max);
  Block blk;
  blk.width = width(rng);
  blk.dropout = dropout(rng);
  return blk;
}

}  // namespace

Genome random_genome(const SearchSpaceBounds& b, Rng& rng) {
  std::bernoulli_distribution coin(0.5);
  std::uniform_int_distribution<int> blocks(b.r_min, b.r_max);
  std::uniform_int_distribution<int> first(b.c_min, b.c_max);
  Genome g;
  g.joint = coin(rng);
  const int r = blocks(rng);
  g.first_width = first(rng);
  g.blocks.reserve(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) g.blocks.push_back(random_block(b, rng));
  return g;
}

NormalizedRep normalize(const Genome& g, const SearchSpaceBounds& b) {
  const auto R = static_cast<std::size_t>(b.r_max);
  const auto r = g.blocks.size();
  const std::size_t pad = R - r;
  NormalizedRep n;
  n.values.assign(b.norm_length(), 0.0);
  n.values[0] = g.joint ? 1.0 : 0.0;
  n.values[1] = static_cast<double>(g.first_width - b.c_min) / (b.c_max - b.c_min);
  const std::size_t width_start = 2 + pad;
  const std::size_t dropout_start = 2 + R + pad;
  for (std::size_t i = 0; i < r; ++i) {
    n.values[width_start + i] = static_cast<double>(g.blocks[i].width - b.o_min) / (b.o_max - b.o_min);
    n.values[dropout_start + i] = (g.blocks[i].dropout - b.d_min) / (b.d_max - b.d_min);
  }
  return n;
}

ArchRep arch_rep(const NormalizedRep& n) {
  if (n.values.empty()) throw InvalidArgument("arch_rep: empty normalized representation");
  return ArchRep{std::vector<double>(n.values.begin() + 1, n.values.end())};
}

Mutation mutate_traced(const Genome& g, const SearchSpaceBounds& b, Rng& rng) {
  const int r = g.block_count();
  std::array<MutationKind, 4> feasible{};
  std::size_t count = 0;
  if (r < b.r_max) feasible[count++] = MutationKind::add_block;
  if (r > b.r_min) feasible[count++] = MutationKind::remove_block;
  if (r >= 1) feasible[count++] = MutationKind::reparameterize_block;
  if (r >= 2) feasible[count++] = MutationKind::swap_blocks;
  if (count == 0) throw InvalidArgument("mutate: genome has no feasible mutation");

  std::uniform_int_distribution<std::size_t> pick_kind(0, count - 1);
  Mutation m{g, feasible[pick_kind(rng)]};
  auto& blocks = m.child.blocks;
  switch (m.kind) {
    case MutationKind::add_block: {
      std::uniform_int_distribution<int> pos(0, r);
      const auto at = pos(rng);
      blocks.insert(blocks.begin() + at, random_block(b, rng));
      break;
    }
    case MutationKind::remove_block: {
      std::uniform_int_distribution<int> pos(0, r - 1);
      blocks.erase(blocks.begin() + pos(rng));
      break;
    }
    case MutationKind::reparameterize_block: {
      std::uniform_int_distribution<int> pos(0, r - 1);
      const auto at = pos(rng);
      blocks[static_cast<std::size_t>(at)] = random_block(b, rng);
      break;
    }
    case MutationKind::swap_blocks: {
      std::uniform_int_distribution<int> pos(0, r - 2);
      const auto at = static_cast<std::size_t>(pos(rng));
      std::swap(blocks[at], blocks[at + 1]);
      break;
    }
  }
  return m;
}

LearnerConfig genome_to_config(const Genome& g) {
  LearnerConfig cfg;
  cfg.input_width = g.first_width;
  for (const auto& blk : g.blocks) {
    cfg.block_widths.push_back(blk.width);
    cfg.block_dropouts.push_back(blk.dropout);
  }
  return cfg;
}

nlohmann::json to_json(const Genome& g) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& blk : g.blocks) blocks.push_back({blk.width, blk.dropout});
  return {{"j", g.joint ? 1 : 0}, {"c", g.first_width}, {"blocks", blocks}};
}

Genome genome_from_json(const nlohmann::json& j) {
  try {
    Genome g;
    const int flag = j.at("j").get<int>();
    if (flag != 0 && flag != 1) throw InvalidArgument("genome record: j must be 0 or 1");
    g.joint = flag == 1;
    g.first_width = j.at("c").get<int>();
    for (const auto& blk : j.at("blocks")) {
      if (!blk.is_array() || blk.size() != 2) throw InvalidArgument("genome record: block must be [o,d]");
      g.blocks.push_back(Block{blk[0].get<int>(), blk[1].get<double>()});
    }
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("genome record: ") + e.what());
  }
}

std::string genome_record(const Genome& g) { return to_json(g).dump(); }

std::uint64_t genome_key(const Genome& g) { return fnv1a64(genome_record(g)); }

nlohmann::json to_json(const SearchSpaceBounds& b) {
  return {{"r_min", b.r_min}, {"r_max", b.r_max}, {"c_min", b.c_min}, {"c_max", b.c_max},
          {"o_min", b.o_min}, {"o_max", b.o_max}, {"d_min", b.d_min}, {"d_max", b.d_max}};
}

}  // namespace divens
