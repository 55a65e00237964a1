#include "divens/surrogate.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "divens/stats.hpp"

namespace divens {

std::vector<DistanceRecord> build_distance_dataset(std::span<const SampleMember> sample,
                                                   const SearchSpaceBounds& bounds, bool symmetrize) {
  if (sample.size() < 2) throw InvalidArgument("distance dataset: need at least 2 sample members");
  std::vector<NormalizedRep> reps;
  std::vector<ArchRep> archs;
  reps.reserve(sample.size());
  for (const auto& m : sample) {
    reps.push_back(normalize(m.genome, bounds));
    archs.push_back(arch_rep(reps.back()));
  }
  std::vector<DistanceRecord> out;
  out.reserve(sample.size() * (sample.size() - 1) / (symmetrize ? 1 : 2));
  for (std::size_t i = 0; i < sample.size(); ++i) {
    for (std::size_t j = i + 1; j < sample.size(); ++j) {
      DistanceRecord r;
      r.d = exact_distance(sample[i].profile, sample[j].profile, archs[i], archs[j]);
      r.x = reps[i].values;
      r.x.insert(r.x.end(), reps[j].values.begin(), reps[j].values.end());
      out.push_back(r);
      if (symmetrize) {
        r.x = reps[j].values;
        r.x.insert(r.x.end(), reps[i].values.begin(), reps[i].values.end());
        out.push_back(std::move(r));
      }
    }
  }
  return out;
}

namespace {

void append_double(std::string& out, double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, ptr);
}

}  // namespace

std::string distance_csv_header(std::size_t rep_length) {
  std::string h;
  for (const char* side : {"i", "j"})
    for (std::size_t k = 0; k < rep_length; ++k) h += std::string(side) + "_" + std::to_string(k) + ",";
  for (std::size_t m = 0; m < kMetricCount; ++m) {
    h += metric_column(kAllMetrics[m]);
    h += m + 1 < kMetricCount ? "," : "\n";
  }
  return h;
}

std::string write_distance_csv(std::span<const DistanceRecord> records) {
  if (records.empty()) throw InvalidArgument("distance csv: no records");
  const std::size_t width = records.front().x.size();
  if (width % 2 != 0) throw InvalidArgument("distance csv: odd feature count");
  std::string out = distance_csv_header(width / 2);
  for (const auto& r : records) {
    if (r.x.size() != width) throw LengthMismatch("distance csv: records differ in width");
    for (double v : r.x) {
      append_double(out, v);
      out += ',';
    }
    for (std::size_t m = 0; m < kMetricCount; ++m) {
      append_double(out, r.d.values[m]);
      out += m + 1 < kMetricCount ? ',' : '\n';
    }
  }
  return out;
}

std::vector<DistanceRecord> read_distance_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty distance file " + path, 0);
  std::size_t columns = 1 + static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  if (columns < kMetricCount + 2 || (columns - kMetricCount) % 2 != 0)
    throw ParseError("distance file header has an unexpected column count", 1);
  const std::size_t width = columns - kMetricCount;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line + "\n" != distance_csv_header(width / 2))
    throw ParseError("distance file header does not match the canonical names", 1);

  std::vector<DistanceRecord> out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    DistanceRecord r;
    r.x.reserve(width);
    std::size_t col = 0;
    const char* p = line.data();
    const char* end = p + line.size();
    while (p <= end) {
      const char* comma = std::find(p, end, ',');
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(p, comma, v);
      if (ec != std::errc() || ptr != comma) throw ParseError("malformed number in distance file", row);
      if (col < width)
        r.x.push_back(v);
      else if (col < columns)
        r.d.values[col - width] = v;
      ++col;
      p = comma + 1;
    }
    if (col != columns) throw ParseError("wrong field count in distance file", row);
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct TreeBuilder {
  std::span<const double> x;
  std::size_t dim;
  std::span<const TargetVector> y;
  std::size_t m_try;
  std::size_t min_leaf;
  Rng& rng;
  std::vector<RegressionTree::Node>& nodes;
  std::vector<std::size_t> features;

  double at(std::size_t row, std::size_t f) const { return x[row * dim + f]; }

  TargetVector mean_of(std::span<const std::size_t> rows) const {
    // Shifted by the first row so that identical targets average exactly.
    const auto& base = y[rows.front()];
    TargetVector s{};
    for (auto r : rows)
      for (std::size_t d = 0; d < kMetricCount; ++d) s[d] += y[r][d] - base[d];
    for (std::size_t d = 0; d < kMetricCount; ++d) s[d] = base[d] + s[d] / static_cast<double>(rows.size());
    return s;
  }

  bool pure(std::span<const std::size_t> rows) const {
    const auto& first = y[rows.front()];
    return std::all_of(rows.begin(), rows.end(), [&](std::size_t r) { return y[r] == first; });
  }

  std::uint32_t grow(std::vector<std::size_t>& rows) {
    const auto id = static_cast<std::uint32_t>(nodes.size());
    nodes.emplace_back();
    nodes[id].value = mean_of(rows);
    nodes[id].count = static_cast<std::uint32_t>(rows.size());
    const std::size_t n = rows.size();
    if (n < 2 * min_leaf || pure(rows)) return id;

    // Candidate features: a uniform subset of size m_try, scanned in index order.
    for (std::size_t k = 0; k < m_try; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, dim - 1);
      std::swap(features[k], features[pick(rng)]);
    }
    std::vector<std::size_t> candidates(features.begin(), features.begin() + static_cast<std::ptrdiff_t>(m_try));
    std::sort(candidates.begin(), candidates.end());

    TargetVector total{};
    for (auto r : rows)
      for (std::size_t d = 0; d < kMetricCount; ++d) total[d] += y[r][d];
    double parent_score = 0.0;
    for (double t : total) parent_score += t * t / static_cast<double>(n);

    double best_score = -1.0;
    std::int32_t best_feature = -1;
    double best_threshold = 0.0;
    std::vector<std::pair<double, std::size_t>> sorted(n);
    for (std::size_t f : candidates) {
      for (std::size_t i = 0; i < n; ++i) sorted[i] = {at(rows[i], f), rows[i]};
      std::sort(sorted.begin(), sorted.end());
      if (sorted.front().first == sorted.back().first) continue;
      TargetVector left{};
      for (std::size_t k = 1; k < n; ++k) {
        for (std::size_t d = 0; d < kMetricCount; ++d) left[d] += y[sorted[k - 1].second][d];
        if (k < min_leaf || n - k < min_leaf) continue;
        const double lo = sorted[k - 1].first;
        const double hi = sorted[k].first;
        if (!(lo < hi)) continue;
        double score = 0.0;
        for (std::size_t d = 0; d < kMetricCount; ++d) {
          const double right = total[d] - left[d];
          score += left[d] * left[d] / static_cast<double>(k) + right * right / static_cast<double>(n - k);
        }
        if (score > best_score) {
          best_score = score;
          best_feature = static_cast<std::int32_t>(f);
          double mid = lo + 0.5 * (hi - lo);
          if (!(mid < hi)) mid = lo;
          best_threshold = mid;
        }
      }
    }
    if (best_feature < 0 || best_score - parent_score <= 1e-12 * std::max(1.0, parent_score)) return id;

    std::vector<std::size_t> left_rows, right_rows;
    for (auto r : rows) (at(r, static_cast<std::size_t>(best_feature)) <= best_threshold ? left_rows : right_rows).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    nodes[id].feature = best_feature;
    nodes[id].threshold = best_threshold;
    const auto l = grow(left_rows);
    const auto r = grow(right_rows);
    nodes[id].left = l;
    nodes[id].right = r;
    return id;
  }
};

}  // namespace

RegressionTree RegressionTree::fit(std::span<const double> x, std::size_t dim, std::span<const TargetVector> y,
                                   std::vector<std::size_t> rows, std::size_t m_try, std::size_t min_leaf, Rng& rng) {
  if (rows.empty()) throw InvalidArgument("tree: no training rows");
  if (m_try < 1 || m_try > dim) throw InvalidArgument("tree: m_try out of range");
  if (min_leaf < 1) throw InvalidArgument("tree: min_leaf must be >= 1");
  RegressionTree t;
  TreeBuilder b{x, dim, y, m_try, min_leaf, rng, t.nodes_, {}};
  b.features.resize(dim);
  std::iota(b.features.begin(), b.features.end(), std::size_t{0});
  b.grow(rows);
  return t;
}

const TargetVector& RegressionTree::predict(std::span<const double> features) const {
  std::uint32_t id = 0;
  while (nodes_[id].feature >= 0) {
    const auto& n = nodes_[id];
    id = features[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
  }
  return nodes_[id].value;
}

std::size_t RegressionTree::leaf_count() const {
  return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.feature < 0; }));
}

std::size_t RegressionTree::depth() const {
  std::vector<std::size_t> level(nodes_.size(), 0);
  std::size_t deepest = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    deepest = std::max(deepest, level[i]);
    if (nodes_[i].feature >= 0) {
      level[nodes_[i].left] = level[i] + 1;
      level[nodes_[i].right] = level[i] + 1;
    }
  }
  return deepest;
}

RandomForestSurrogate RandomForestSurrogate::fit(std::span<const DistanceRecord> records, ForestParams params) {
  if (records.size() < 2) throw InvalidArgument("forest: need at least 2 records");
  const std::size_t dim = records.front().x.size();
  if (dim == 0) throw InvalidArgument("forest: empty feature vectors");
  if (params.tree_count < 1) throw InvalidArgument("forest: tree_count must be >= 1");
  if (params.min_leaf < 1) throw InvalidArgument("forest: min_leaf must be >= 1");
  const std::size_t m_try = params.m_try == 0 ? (dim + 2) / 3 : params.m_try;
  if (m_try > dim) throw InvalidArgument("forest: m_try exceeds feature dimension");
  if (params.symmetric && dim % 2 != 0) throw InvalidArgument("forest: symmetric mode needs an even feature count");

  const std::size_t n = records.size();
  std::vector<double> x;
  x.reserve(n * dim);
  std::vector<TargetVector> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (records[i].x.size() != dim) throw LengthMismatch("forest: records differ in feature width");
    x.insert(x.end(), records[i].x.begin(), records[i].x.end());
    y[i] = records[i].d.values;
  }
  const bool same_x = std::all_of(records.begin(), records.end(), [&](const DistanceRecord& r) { return r.x == records.front().x; });
  const bool same_y = std::all_of(y.begin(), y.end(), [&](const TargetVector& t) { return t == y.front(); });
  if (same_x && !same_y) throw DegenerateData("forest: all records share one input but targets differ");

  RandomForestSurrogate rf;
  rf.feature_dim_ = dim;
  rf.m_try_ = m_try;
  rf.min_leaf_ = params.min_leaf;
  rf.seed_ = params.seed;
  rf.symmetric_ = params.symmetric;
  rf.trees_.resize(params.tree_count);
  std::vector<std::vector<std::uint8_t>> in_bag(params.tree_count, std::vector<std::uint8_t>(n, 0));

  parallel_for(params.tree_count, [&](std::size_t t) {
    Rng rng(derive_seed(params.seed, t));
    std::uniform_int_distribution<std::size_t> draw(0, n - 1);
    std::vector<std::size_t> rows(n);
    for (auto& r : rows) {
      r = draw(rng);
      in_bag[t][r] = 1;
    }
    rf.trees_[t] = RegressionTree::fit(x, dim, y, std::move(rows), m_try, params.min_leaf, rng);
  });

  // Out-of-bag estimate on the raw (unsymmetrized) forest.
  std::vector<TargetVector> oob_sum(n, TargetVector{});
  std::vector<std::size_t> oob_count(n, 0);
  for (std::size_t t = 0; t < params.tree_count; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      if (in_bag[t][i]) continue;
      const auto& p = rf.trees_[t].predict(std::span<const double>(x.data() + i * dim, dim));
      for (std::size_t d = 0; d < kMetricCount; ++d) oob_sum[i][d] += p[d];
      ++oob_count[i];
    }
  }
  TargetVector mean_y{}, sse{}, sst{};
  for (std::size_t i = 0; i < n; ++i) {
    if (oob_count[i] == 0) continue;
    ++rf.oob_.covered;
    for (std::size_t d = 0; d < kMetricCount; ++d) mean_y[d] += y[i][d];
  }
  if (rf.oob_.covered > 0) {
    for (auto& v : mean_y) v /= static_cast<double>(rf.oob_.covered);
    for (std::size_t i = 0; i < n; ++i) {
      if (oob_count[i] == 0) continue;
      for (std::size_t d = 0; d < kMetricCount; ++d) {
        const double pred = oob_sum[i][d] / static_cast<double>(oob_count[i]);
        sse[d] += (pred - y[i][d]) * (pred - y[i][d]);
        sst[d] += (y[i][d] - mean_y[d]) * (y[i][d] - mean_y[d]);
      }
    }
    for (std::size_t d = 0; d < kMetricCount; ++d) {
      rf.oob_.mse[d] = sse[d] / static_cast<double>(rf.oob_.covered);
      rf.oob_.r2[d] = sst[d] > 0.0 ? 1.0 - sse[d] / sst[d] : 0.0;
    }
  }
  return rf;
}

TargetVector RandomForestSurrogate::predict_features(std::span<const double> features) const {
  if (features.size() != feature_dim_) throw LengthMismatch("forest: feature dimension mismatch");
  const TargetVector base = trees_.front().predict(features);
  TargetVector s{};
  for (const auto& t : trees_) {
    const auto& p = t.predict(features);
    for (std::size_t d = 0; d < kMetricCount; ++d) s[d] += p[d] - base[d];
  }
  for (std::size_t d = 0; d < kMetricCount; ++d) s[d] = base[d] + s[d] / static_cast<double>(trees_.size());
  return s;
}

DistanceVector RandomForestSurrogate::predict(const NormalizedRep& n_i, const NormalizedRep& n_j) const {
  if (n_i.values.size() + n_j.values.size() != feature_dim_ || n_i.values.size() != n_j.values.size())
    throw LengthMismatch("forest: representation length does not match the training layout");
  std::vector<double> features(n_i.values);
  features.insert(features.end(), n_j.values.begin(), n_j.values.end());
  TargetVector out = predict_features(features);
  if (symmetric_) {
    std::vector<double> mirrored(n_j.values);
    mirrored.insert(mirrored.end(), n_i.values.begin(), n_i.values.end());
    const TargetVector other = predict_features(mirrored);
    for (std::size_t d = 0; d < kMetricCount; ++d) out[d] = 0.5 * (out[d] + other[d]);
  }
  DistanceVector dv;
  for (std::size_t d = 0; d < kMetricCount; ++d) dv.values[d] = std::clamp(out[d], 0.0, 1.0);
  return dv;
}

namespace {

constexpr char kForestMagic[8] = {'D', 'V', 'R', 'F', 'O', 'R', 'S', 'T'};

template <typename T>
void put(std::string& out, const T& v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw CorruptFile("surrogate file truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

std::string RandomForestSurrogate::serialize() const {
  std::string out(kForestMagic, sizeof kForestMagic);
  put(out, kFormatVersion);
  put(out, static_cast<std::uint32_t>(feature_dim_));
  put(out, static_cast<std::uint32_t>(kMetricCount));
  put(out, static_cast<std::uint32_t>(trees_.size()));
  put(out, static_cast<std::uint32_t>(m_try_));
  put(out, static_cast<std::uint32_t>(min_leaf_));
  put(out, seed_);
  put(out, static_cast<std::uint8_t>(symmetric_ ? 1 : 0));
  for (const auto& t : trees_) {
    put(out, static_cast<std::uint32_t>(t.nodes_.size()));
    for (const auto& node : t.nodes_) {
      put(out, node.feature);
      put(out, node.threshold);
      put(out, node.left);
      put(out, node.right);
      put(out, node.count);
      for (double v : node.value) put(out, v);
    }
  }
  return out;
}

RandomForestSurrogate RandomForestSurrogate::deserialize(const std::string& in) {
  if (in.size() < sizeof kForestMagic || std::memcmp(in.data(), kForestMagic, sizeof kForestMagic) != 0)
    throw CorruptFile("not a surrogate model file");
  std::size_t pos = sizeof kForestMagic;
  const auto version = take<std::uint32_t>(in, pos);
  if (version != kFormatVersion)
    throw VersionMismatch("surrogate file version " + std::to_string(version) + ", expected " +
                          std::to_string(kFormatVersion));
  RandomForestSurrogate rf;
  rf.feature_dim_ = take<std::uint32_t>(in, pos);
  if (take<std::uint32_t>(in, pos) != kMetricCount) throw CorruptFile("surrogate output count is not 6");
  const auto tree_count = take<std::uint32_t>(in, pos);
  rf.m_try_ = take<std::uint32_t>(in, pos);
  rf.min_leaf_ = take<std::uint32_t>(in, pos);
  rf.seed_ = take<std::uint64_t>(in, pos);
  rf.symmetric_ = take<std::uint8_t>(in, pos) != 0;
  if (tree_count == 0 || rf.feature_dim_ == 0) throw CorruptFile("surrogate file has no trees or features");
  rf.trees_.resize(tree_count);
  for (auto& t : rf.trees_) {
    const auto count = take<std::uint32_t>(in, pos);
    if (count == 0) throw CorruptFile("surrogate tree without nodes");
    t.nodes_.resize(count);
    for (auto& node : t.nodes_) {
      node.feature = take<std::int32_t>(in, pos);
      node.threshold = take<double>(in, pos);
      node.left = take<std::uint32_t>(in, pos);
      node.right = take<std::uint32_t>(in, pos);
      node.count = take<std::uint32_t>(in, pos);
      for (auto& v : node.value) v = take<double>(in, pos);
    }
    for (std::uint32_t i = 0; i < count; ++i) {
      const auto& node = t.nodes_[i];
      if (node.feature < 0) continue;
      if (static_cast<std::size_t>(node.feature) >= rf.feature_dim_ || node.left <= i || node.right <= i ||
          node.left >= count || node.right >= count)
        throw CorruptFile("surrogate tree has an invalid node");
    }
  }
  if (pos != in.size()) throw CorruptFile("trailing bytes in surrogate file");
  return rf;
}

void RandomForestSurrogate::save(const std::string& path) const { write_file_atomic(path, serialize()); }

RandomForestSurrogate RandomForestSurrogate::load(const std::string& path) { return deserialize(read_file(path)); }

std::pair<NormalizedRep, NormalizedRep> split_features(const DistanceRecord& r) {
  if (r.x.size() % 2 != 0) throw LengthMismatch("record feature count is odd");
  const auto half = static_cast<std::ptrdiff_t>(r.x.size() / 2);
  return {NormalizedRep{std::vector<double>(r.x.begin(), r.x.begin() + half)},
          NormalizedRep{std::vector<double>(r.x.begin() + half, r.x.end())}};
}

FidelityReport rank_fidelity(const DistanceEstimator& estimator, std::span<const DistanceRecord> held_out) {
  if (held_out.size() < 10) throw InvalidArgument("rank_fidelity: need at least 10 held-out records");
  FidelityReport report;
  report.records = held_out.size();
  std::array<std::vector<double>, kMetricCount> predicted, exact;
  for (const auto& r : held_out) {
    const auto [a, b] = split_features(r);
    const DistanceVector p = estimator.predict(a, b);
    for (std::size_t d = 0; d < kMetricCount; ++d) {
      predicted[d].push_back(p.values[d]);
      exact[d].push_back(r.d.values[d]);
    }
  }
  for (std::size_t d = 0; d < kMetricCount; ++d) {
    const Correlation c = spearman(predicted[d], exact[d]);
    double mae = 0.0;
    for (std::size_t i = 0; i < held_out.size(); ++i) mae += std::abs(predicted[d][i] - exact[d][i]);
    report.metrics[d] = {c.value, c.degenerate, mae / static_cast<double>(held_out.size())};
  }
  return report;
}

}  // namespace divens
