#include <doctest.h>

#include <algorithm>
#include <map>
#include <tuple>
#include <nlohmann/json.hpp>

#include "divens/genome.hpp"

using namespace divens;

namespace {

SearchSpaceBounds wide_bounds() { return make_bounds(2, 6, 4, 16, 16, 64, 0.1, 0.9); }

// Independent chi-square statistic against a uniform distribution.
double chi_square_uniform(const std::map<int, int>& counts, int categories, int total) {
  const double expected = static_cast<double>(total) / categories;
  double chi = 0.0;
  for (const auto& [k, c] : counts) chi += (c - expected) * (c - expected) / expected;
  chi += (categories - static_cast<int>(counts.size())) * expected;
  return chi;
}

}  // namespace

TEST_CASE("bounds validation") {
  CHECK_NOTHROW(wide_bounds());
  CHECK_THROWS_AS(make_bounds(2, 6, 4, 16, 16, 64, 0.1, 0.1), InvalidArgument);
  CHECK_THROWS_AS(make_bounds(0, 6, 4, 16, 16, 64, 0.1, 0.9), InvalidArgument);
  CHECK_THROWS_AS(make_bounds(3, 2, 4, 16, 16, 64, 0.1, 0.9), InvalidArgument);
  CHECK_THROWS_AS(make_bounds(2, 6, 16, 16, 16, 64, 0.1, 0.9), InvalidArgument);
  CHECK_THROWS_AS(make_bounds(2, 6, 4, 16, 64, 16, 0.1, 0.9), InvalidArgument);
  CHECK_THROWS_AS(make_bounds(2, 6, 4, 16, 16, 64, 0.1, 1.0), InvalidArgument);
  CHECK_THROWS_AS(make_bounds(2, 6, 4, 16, 16, 64, -0.1, 0.5), InvalidArgument);
  CHECK(wide_bounds().norm_length() == 14);
}

TEST_CASE("random_genome respects a degenerate block range") {
  const auto b = make_bounds(2, 2, 4, 16, 16, 64, 0.1, 0.9);
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const auto g = random_genome(b, rng);
    CHECK(g.block_count() == 2);
    CHECK(is_valid(g, b));
  }
}

TEST_CASE("random_genome block counts are uniform") {
  const auto b = wide_bounds();
  Rng rng(2);
  std::map<int, int> counts;
  const int total = 10000;
  int joint = 0;
  for (int i = 0; i < total; ++i) {
    const auto g = random_genome(b, rng);
    REQUIRE(is_valid(g, b));
    ++counts[g.block_count()];
    joint += g.joint ? 1 : 0;
  }
  for (int r = 2; r <= 6; ++r) CHECK(std::abs(counts[r] / double(total) - 0.2) <= 0.02);
  // df = 4, 1% critical value 13.28
  CHECK(chi_square_uniform(counts, 5, total) < 13.28);
  CHECK(std::abs(joint / double(total) - 0.5) <= 0.02);
}

TEST_CASE("normalize worked example") {
  const auto b = wide_bounds();
  const Genome g{true, 10, {{16, 0.1}, {64, 0.9}}};
  const std::vector<double> expected = {1, 0.5, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 1};
  CHECK(normalize(g, b).values == expected);
}

TEST_CASE("normalize bounds cases") {
  const auto b = wide_bounds();
  Genome lo{false, 4, std::vector<Block>(6, Block{16, 0.1})};
  CHECK(normalize(lo, b).values == std::vector<double>(14, 0.0));
  Genome hi{true, 16, std::vector<Block>(6, Block{64, 0.9})};
  CHECK(normalize(hi, b).values == std::vector<double>(14, 1.0));
}

TEST_CASE("normalize range, length and padding over random genomes") {
  const auto b = wide_bounds();
  Rng rng(3);
  for (int i = 0; i < 2000; ++i) {
    const auto g = random_genome(b, rng);
    const auto n = normalize(g, b).values;
    REQUIRE(n.size() == 14);
    CHECK((n[0] == 0.0 || n[0] == 1.0));
    for (double v : n) CHECK((v >= 0.0 && v <= 1.0));
    const int pad = 6 - g.block_count();
    for (int k = 0; k < pad; ++k) {
      CHECK(n[2 + k] == 0.0);
      CHECK(n[8 + k] == 0.0);
    }
  }
}

TEST_CASE("normalize is injective for equal block counts") {
  const auto b = wide_bounds();
  Rng rng(4);
  for (int i = 0; i < 2000; ++i) {
    const auto g1 = random_genome(b, rng);
    auto g2 = mutate(g1, b, rng);
    if (g2.block_count() != g1.block_count() || g1 == g2) continue;
    CHECK(normalize(g1, b) != normalize(g2, b));
  }
}

TEST_CASE("arch_rep drops the joint flag") {
  CHECK(arch_rep(NormalizedRep{{1, 0.5, 0, 1}}).values == std::vector<double>{0.5, 0, 1});
  const auto b = wide_bounds();
  Genome a{true, 7, {{20, 0.3}, {30, 0.4}}};
  Genome c = a;
  c.joint = false;
  CHECK(arch_rep(normalize(a, b)) == arch_rep(normalize(c, b)));
  CHECK(arch_rep(normalize(a, b)).values.size() == 13);
}

TEST_CASE("mutation never leaves the bounds") {
  const auto b = wide_bounds();
  Rng rng(5);
  Genome full{false, 8, std::vector<Block>(6, Block{32, 0.5})};
  for (int i = 0; i < 1000; ++i) CHECK(mutate(full, b, rng).block_count() <= 6);
  for (int i = 0; i < 100000; ++i) {
    const auto g = random_genome(b, rng);
    REQUIRE(is_valid(mutate(g, b, rng), b));
  }
}

TEST_CASE("swap exchanges two consecutive blocks") {
  const auto b = make_bounds(2, 2, 4, 16, 16, 64, 0.1, 0.9);
  const Genome g{false, 8, {{16, 0.2}, {64, 0.7}}};
  Rng rng(6);
  bool seen = false;
  for (int i = 0; i < 50; ++i) {
    const auto m = mutate_traced(g, b, rng);
    if (m.kind != MutationKind::swap_blocks) continue;
    seen = true;
    CHECK(m.child.blocks == std::vector<Block>{{64, 0.7}, {16, 0.2}});
  }
  CHECK(seen);
}

TEST_CASE("mutation kinds are uniform for interior block counts") {
  const auto b = wide_bounds();
  Rng rng(7);
  const Genome g{false, 8, {{20, 0.2}, {30, 0.3}, {40, 0.4}, {50, 0.5}}};
  std::map<int, int> counts;
  const int total = 10000;
  for (int i = 0; i < total; ++i) ++counts[static_cast<int>(mutate_traced(g, b, rng).kind)];
  for (int k = 0; k < 4; ++k) CHECK(std::abs(counts[k] / double(total) - 0.25) <= 0.02);
}

TEST_CASE("each mutation kind changes the genome as described") {
  const auto b = wide_bounds();
  Rng rng(8);
  for (int i = 0; i < 5000; ++i) {
    const auto g = random_genome(b, rng);
    const auto m = mutate_traced(g, b, rng);
    CHECK(m.child.joint == g.joint);
    CHECK(m.child.first_width == g.first_width);
    switch (m.kind) {
      case MutationKind::add_block:
        CHECK(m.child.block_count() == g.block_count() + 1);
        break;
      case MutationKind::remove_block:
        CHECK(m.child.block_count() == g.block_count() - 1);
        break;
      case MutationKind::reparameterize_block: {
        REQUIRE(m.child.block_count() == g.block_count());
        int changed = 0;
        for (int k = 0; k < g.block_count(); ++k) changed += m.child.blocks[k] != g.blocks[k] ? 1 : 0;
        CHECK(changed <= 1);
        break;
      }
      case MutationKind::swap_blocks: {
        REQUIRE(m.child.block_count() == g.block_count());
        auto a = g.blocks, c = m.child.blocks;
        auto less = [](const Block& x, const Block& y) { return std::tie(x.width, x.dropout) < std::tie(y.width, y.dropout); };
        std::sort(a.begin(), a.end(), less);
        std::sort(c.begin(), c.end(), less);
        CHECK(a == c);
        break;
      }
    }
  }
}

TEST_CASE("genome_to_config maps blocks in order") {
  const Genome g{false, 9, {{16, 0.1}, {64, 0.9}}};
  const auto c = genome_to_config(g);
  CHECK(c.input_width == 9);
  CHECK(c.block_widths == std::vector<int>{16, 64});
  CHECK(c.block_dropouts == std::vector<double>{0.1, 0.9});
  CHECK(genome_to_config(g) == c);
  CHECK(genome_to_config(Genome{true, 4, {{16, 0.1}, {20, 0.2}, {24, 0.3}}}).block_widths.size() == 3);
}

TEST_CASE("genome record round trip") {
  const auto b = wide_bounds();
  Rng rng(9);
  for (int i = 0; i < 500; ++i) {
    const auto g = random_genome(b, rng);
    const auto back = genome_from_json(nlohmann::json::parse(genome_record(g)));
    CHECK(back == g);
    CHECK(genome_key(back) == genome_key(g));
  }
  CHECK(genome_record(Genome{true, 10, {{16, 0.25}}}) == R"({"blocks":[[16,0.25]],"c":10,"j":1})");
  CHECK_THROWS_AS(genome_from_json(nlohmann::json::parse(R"({"j":2,"c":4,"blocks":[]})")), InvalidArgument);
}
