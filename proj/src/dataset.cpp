#include "divens/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>

namespace divens {

void LabeledDataset::validate() const {
  if (labels.empty()) throw InvalidArgument("dataset: no rows");
  if (static_cast<std::size_t>(features.rows()) != labels.size())
    throw InvalidArgument("dataset: feature rows do not match label count");
  if (class_count < 1) throw InvalidArgument("dataset: class_count must be >= 1");
  for (int y : labels)
    if (y < 0 || y >= class_count) throw InvalidArgument("dataset: label out of range");
  if (!features.allFinite()) throw InvalidArgument("dataset: non-finite feature value");
}

LabeledDataset LabeledDataset::subset(const std::vector<std::size_t>& rows) const {
  LabeledDataset out;
  out.class_count = class_count;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  out.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(rows[i]));
    out.labels.push_back(labels[rows[i]]);
  }
  return out;
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) {
    const auto first = field.find_first_not_of(" \t\r");
    const auto last = field.find_last_not_of(" \t\r");
    out.push_back(first == std::string::npos ? std::string() : field.substr(first, last - first + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::optional<double> parse_double(const std::string& s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || s.empty()) return std::nullopt;
  return v;
}

std::optional<long long> parse_int(const std::string& s) {
  long long v = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || s.empty()) return std::nullopt;
  return v;
}

}  // namespace

LabeledDataset load_csv(const std::string& path, int label_column) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);

  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    rows.push_back(split_fields(line));
    line_numbers.push_back(line_no);
  }
  if (rows.empty()) throw ParseError("empty CSV file " + path, 0);

  const auto all_numeric = [](const std::vector<std::string>& r) {
    return std::all_of(r.begin(), r.end(), [](const std::string& f) { return parse_double(f).has_value(); });
  };
  std::size_t first = all_numeric(rows.front()) ? 0 : 1;
  if (first == rows.size()) throw ParseError("CSV file has a header but no data: " + path, line_numbers[0]);

  const std::size_t arity = rows[first].size();
  if (arity < 2) throw ParseError("CSV needs at least one feature and a label column", line_numbers[first]);
  const int ncols = static_cast<int>(arity);
  const int label_idx = label_column < 0 ? ncols + label_column : label_column;
  if (label_idx < 0 || label_idx >= ncols) throw InvalidArgument("label column out of range");

  const std::size_t n = rows.size() - first;
  LabeledDataset d;
  d.features.resize(static_cast<Eigen::Index>(n), ncols - 1);
  std::map<long long, int> remap;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = rows[first + i];
    const std::size_t row_no = line_numbers[first + i];
    if (r.size() != arity)
      throw ParseError("expected " + std::to_string(arity) + " fields, got " + std::to_string(r.size()), row_no);
    Eigen::Index col = 0;
    for (int c = 0; c < ncols; ++c) {
      const auto& field = r[static_cast<std::size_t>(c)];
      if (c == label_idx) {
        auto y = parse_int(field);
        if (!y) throw ParseError("label '" + field + "' is not an integer", row_no);
        auto [it, inserted] = remap.try_emplace(*y, static_cast<int>(remap.size()));
        d.labels.push_back(it->second);
        continue;
      }
      auto v = parse_double(field);
      if (!v || !std::isfinite(*v)) throw ParseError("feature '" + field + "' is not a finite number", row_no);
      d.features(static_cast<Eigen::Index>(i), col++) = *v;
    }
  }
  d.class_count = static_cast<int>(remap.size());
  d.validate();
  return d;
}

LabeledDataset synth_blobs(int classes, int per_class, int dim, double spread, std::uint64_t seed) {
  if (classes < 2) throw InvalidArgument("synth_blobs: need at least 2 classes");
  if (per_class < 1) throw InvalidArgument("synth_blobs: per_class must be >= 1");
  if (dim < 1) throw InvalidArgument("synth_blobs: dim must be >= 1");
  if (!(spread > 0.0)) throw InvalidArgument("synth_blobs: spread must be > 0");

  // Centers are the simplex vertices e_k when dim >= classes; otherwise distinct
  // points on a low-frequency torus curve.
  Eigen::MatrixXd centers = Eigen::MatrixXd::Zero(classes, dim);
  for (int k = 0; k < classes; ++k) {
    if (dim >= classes) {
      centers(k, k) = 1.0;
    } else {
      for (int f = 0; f < dim; ++f) {
        const double angle = 2.0 * 3.14159265358979323846 * k * (f + 1) / classes;
        centers(k, f) = (f % 2 == 0) ? std::cos(angle) : std::sin(angle);
      }
    }
  }

  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, spread);
  LabeledDataset d;
  d.class_count = classes;
  const int n = classes * per_class;
  d.features.resize(n, dim);
  d.labels.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < classes; ++k) {
    for (int i = 0; i < per_class; ++i) {
      const int row = k * per_class + i;
      for (int f = 0; f < dim; ++f) d.features(row, f) = centers(k, f) + noise(rng);
      d.labels.push_back(k);
    }
  }
  return d;
}

DataSplit split(const LabeledDataset& d, std::array<double, 3> fractions, std::uint64_t seed) {
  for (double f : fractions)
    if (!(f > 0.0)) throw InvalidArgument("split: fractions must be positive");
  if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9)
    throw InvalidArgument("split: fractions must sum to 1");
  const std::size_t n = d.size();

  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(d.class_count));
  for (std::size_t i = 0; i < n; ++i) by_class[static_cast<std::size_t>(d.labels[i])].push_back(i);

  // Each row gets key (position within its shuffled class + 0.5) / class size;
  // cutting the key order at global counts keeps every part stratified.
  Rng rng(seed);
  struct Keyed {
    double key;
    int cls;
    std::size_t row;
  };
  std::vector<Keyed> order;
  order.reserve(n);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& rows = by_class[c];
    std::shuffle(rows.begin(), rows.end(), rng);
    for (std::size_t p = 0; p < rows.size(); ++p)
      order.push_back({(static_cast<double>(p) + 0.5) / static_cast<double>(rows.size()), static_cast<int>(c), rows[p]});
  }
  std::sort(order.begin(), order.end(), [](const Keyed& a, const Keyed& b) {
    return a.key != b.key ? a.key < b.key : a.cls < b.cls;
  });

  auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * fractions[0]));
  auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * fractions[1]));
  n_train = std::min(n_train, n);
  n_val = std::min(n_val, n - n_train);
  const std::size_t n_test = n - n_train - n_val;
  if (n_train == 0 || n_val == 0 || n_test == 0)
    throw InvalidArgument("split: a part would receive zero rows");

  DataSplit s;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t part = i < n_train ? 0 : (i < n_train + n_val ? 1 : 2);
    s.rows[part].push_back(order[i].row);
  }
  for (auto& r : s.rows) std::sort(r.begin(), r.end());
  s.train = d.subset(s.rows[0]);
  s.val = d.subset(s.rows[1]);
  s.test = d.subset(s.rows[2]);
  return s;
}

void standardize(DataSplit& s) {
  const Eigen::RowVectorXd mean = s.train.features.colwise().mean();
  Eigen::RowVectorXd sd = ((s.train.features.rowwise() - mean).array().square().colwise().sum() /
                           static_cast<double>(s.train.size()))
                              .sqrt()
                              .matrix();
  for (Eigen::Index j = 0; j < sd.size(); ++j)
    if (!(sd(j) > 1e-12)) sd(j) = 1.0;
  for (LabeledDataset* part : {&s.train, &s.val, &s.test})
    part->features = ((part->features.rowwise() - mean).array().rowwise() / sd.array()).matrix();
}

}  // namespace divens
