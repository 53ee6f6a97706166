#pragma once

// Samples, the synthetic partial-domain toy task, CSV ingestion, and paired
// source/target mini-batches.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pda/errors.hpp"
#include "pda/oracle.hpp"
#include "pda/rng.hpp"
#include "pda/tensor.hpp"

namespace pda {

enum class Domain : int { target = 0, source = 1 };

struct Sample {
  std::vector<double> x;
  std::optional<std::size_t> y;
  Domain domain = Domain::source;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct Dataset {
  std::size_t dim = 0;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }

  Matrix features() const { return features(all_indices()); }

  Matrix features(const std::vector<std::size_t>& rows) const {
    Matrix m(rows.size(), dim);
    for (std::size_t r = 0; r < rows.size(); ++r) std::copy(samples[rows[r]].x.begin(), samples[rows[r]].x.end(), m.row(r).begin());
    return m;
  }

  // Labels of every sample; throws if any is missing.
  std::vector<std::size_t> labels() const { return labels(all_indices()); }

  std::vector<std::size_t> labels(const std::vector<std::size_t>& rows) const {
    std::vector<std::size_t> out;
    out.reserve(rows.size());
    for (std::size_t i : rows) {
      if (!samples[i].y) throw UsageError("dataset: sample " + std::to_string(i) + " is unlabeled");
      out.push_back(*samples[i].y);
    }
    return out;
  }

  bool fully_labeled() const {
    return std::all_of(samples.begin(), samples.end(), [](const Sample& s) { return s.y.has_value(); });
  }

  // The same samples with labels removed.
  Dataset unlabeled() const {
    Dataset d = *this;
    for (Sample& s : d.samples) s.y.reset();
    return d;
  }

  std::vector<std::size_t> all_indices() const {
    std::vector<std::size_t> idx(samples.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return idx;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Gaussian clusters, one per source class. Target clusters exist only for the
// shared classes and are rotated about the origin then translated.
struct SyntheticSpec {
  std::size_t dim = 2;
  std::size_t num_source_classes = 5;
  std::vector<std::size_t> shared_classes{0, 1, 2};
  std::size_t samples_per_class = 100;
  // Empty means: evenly spaced on a circle of radius 2 in the first two
  // coordinates, starting at angle pi/2.
  std::vector<std::vector<double>> cluster_means{};
  double cluster_std = 0.35;
  double target_rotation = 0.3;  // radians, in the first two coordinates
  std::vector<double> target_translation{0.5, 0.5};
  std::uint64_t seed = 0;

  void validate() const {
    if (dim < 2) throw ConfigError("synthetic: dim must be at least 2");
    if (num_source_classes == 0) throw ConfigError("synthetic: num_source_classes must be positive");
    if (samples_per_class == 0) throw ConfigError("synthetic: samples_per_class must be positive");
    if (shared_classes.empty()) throw ConfigError("synthetic: shared_classes must be nonempty");
    std::vector<std::size_t> s = shared_classes;
    std::sort(s.begin(), s.end());
    if (std::adjacent_find(s.begin(), s.end()) != s.end()) throw ConfigError("synthetic: duplicate shared class");
    if (s.back() >= num_source_classes) throw ConfigError("synthetic: shared class outside [0, num_source_classes)");
    if (!(cluster_std >= 0.0) || !std::isfinite(cluster_std)) throw ConfigError("synthetic: cluster_std must be >= 0");
    if (!std::isfinite(target_rotation)) throw ConfigError("synthetic: target_rotation must be finite");
    if (target_translation.size() != dim) throw ConfigError("synthetic: target_translation must have dim entries");
    if (!cluster_means.empty()) {
      if (cluster_means.size() != num_source_classes) throw ConfigError("synthetic: one mean per source class");
      for (const auto& m : cluster_means)
        if (m.size() != dim) throw ConfigError("synthetic: cluster mean width must equal dim");
    }
  }

  std::vector<std::vector<double>> resolved_means() const {
    if (!cluster_means.empty()) return cluster_means;
    std::vector<std::vector<double>> means;
    for (std::size_t k = 0; k < num_source_classes; ++k) {
      const double a = std::numbers::pi / 2 + 2.0 * std::numbers::pi * static_cast<double>(k) /
                                                  static_cast<double>(num_source_classes);
      std::vector<double> m(dim, 0.0);
      m[0] = 2.0 * std::cos(a);
      m[1] = 2.0 * std::sin(a);
      means.push_back(std::move(m));
    }
    return means;
  }

  std::vector<std::size_t> sorted_shared() const {
    std::vector<std::size_t> s = shared_classes;
    std::sort(s.begin(), s.end());
    return s;
  }
};

struct ToyData {
  Dataset source;
  Dataset target;  // unlabeled
  oracle::OracleContext oracle;
};

inline ToyData generate_toy(const SyntheticSpec& spec) {
  spec.validate();
  const auto means = spec.resolved_means();
  Rng src_rng = Rng(spec.seed).substream("data/source");
  Rng tgt_rng = Rng(spec.seed).substream("data/target");
  const double c = std::cos(spec.target_rotation), s = std::sin(spec.target_rotation);

  ToyData out;
  out.source.dim = out.target.dim = spec.dim;
  for (std::size_t k = 0; k < spec.num_source_classes; ++k) {
    for (std::size_t n = 0; n < spec.samples_per_class; ++n) {
      std::vector<double> x(spec.dim);
      for (std::size_t j = 0; j < spec.dim; ++j) x[j] = means[k][j] + spec.cluster_std * src_rng.normal();
      out.source.samples.push_back(Sample{std::move(x), k, Domain::source});
    }
  }
  out.oracle.shared_classes = spec.sorted_shared();
  for (std::size_t k : out.oracle.shared_classes) {
    for (std::size_t n = 0; n < spec.samples_per_class; ++n) {
      std::vector<double> x(spec.dim);
      for (std::size_t j = 0; j < spec.dim; ++j) x[j] = means[k][j] + spec.cluster_std * tgt_rng.normal();
      const double x0 = c * x[0] - s * x[1];
      const double x1 = s * x[0] + c * x[1];
      x[0] = x0;
      x[1] = x1;
      for (std::size_t j = 0; j < spec.dim; ++j) x[j] += spec.target_translation[j];
      out.target.samples.push_back(Sample{std::move(x), std::nullopt, Domain::target});
      out.oracle.target_labels.push_back(k);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV: header x0,...,x{d-1},y,domain; y empty when unlabeled; LF endings.
// Reals are written in shortest round-trip form.
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline void write_csv(std::ostream& os, const Dataset& d) {
  for (std::size_t j = 0; j < d.dim; ++j) os << 'x' << j << ',';
  os << "y,domain\n";
  for (const Sample& s : d.samples) {
    for (double v : s.x) os << format_double(v) << ',';
    if (s.y) os << *s.y;
    os << ',' << static_cast<int>(s.domain) << '\n';
  }
}

inline void save_csv(const Dataset& d, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path + " for writing");
  write_csv(os, d);
  if (!os) throw Error("failed writing " + path);
}

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t p = line.find(',', start);
    if (p == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, p - start));
    start = p + 1;
  }
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  if (s.empty()) return false;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc{} && res.ptr == s.data() + s.size();
}

}  // namespace detail

inline Dataset read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError("csv: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_commas(line);
  if (header.size() < 3 || header[header.size() - 2] != "y" || header.back() != "domain")
    throw FormatError("csv: header must be x0,...,x{d-1},y,domain");
  const std::size_t dim = header.size() - 2;
  for (std::size_t j = 0; j < dim; ++j)
    if (header[j] != "x" + std::to_string(j)) throw FormatError("csv: header column " + std::to_string(j) + " must be x" + std::to_string(j));

  Dataset d;
  d.dim = dim;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = detail::split_commas(line);
    if (cells.size() != dim + 2)
      throw FormatError("csv line " + std::to_string(line_no) + ": expected " + std::to_string(dim + 2) +
                        " fields, found " + std::to_string(cells.size()));
    Sample s;
    s.x.resize(dim);
    for (std::size_t j = 0; j < dim; ++j)
      if (!detail::parse_number(cells[j], s.x[j]) || !std::isfinite(s.x[j]))
        throw ParseError("csv line " + std::to_string(line_no) + ": bad real in column x" + std::to_string(j));
    if (!cells[dim].empty()) {
      std::size_t y = 0;
      if (!detail::parse_number(cells[dim], y)) throw ParseError("csv line " + std::to_string(line_no) + ": bad label");
      s.y = y;
    }
    int dom = -1;
    if (!detail::parse_number(cells[dim + 1], dom) || (dom != 0 && dom != 1))
      throw ParseError("csv line " + std::to_string(line_no) + ": domain must be 0 or 1");
    s.domain = static_cast<Domain>(dom);
    if (s.domain == Domain::source && !s.y)
      throw ParseError("csv line " + std::to_string(line_no) + ": source rows must be labeled");
    d.samples.push_back(std::move(s));
  }
  return d;
}

inline Dataset load_csv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  return read_csv(is);
}

// Sidecar metadata. shared_classes is for oracle evaluation only.
struct DatasetMetadata {
  std::size_t num_source_classes = 0;
  std::vector<std::size_t> shared_classes;

  friend bool operator==(const DatasetMetadata&, const DatasetMetadata&) = default;
};

inline void save_metadata(const DatasetMetadata& m, const std::string& path) {
  nlohmann::ordered_json j;
  j["num_source_classes"] = m.num_source_classes;
  j["shared_classes"] = m.shared_classes;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path + " for writing");
  os << j.dump(2) << '\n';
}

inline DatasetMetadata load_metadata(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
    DatasetMetadata m;
    for (const auto& [key, _] : j.items())
      if (key != "num_source_classes" && key != "shared_classes") throw FormatError("metadata: unknown key " + key);
    m.num_source_classes = j.at("num_source_classes").get<std::size_t>();
    m.shared_classes = j.at("shared_classes").get<std::vector<std::size_t>>();
    std::sort(m.shared_classes.begin(), m.shared_classes.end());
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("metadata " + path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------

struct BatchIndices {
  std::vector<std::size_t> source;
  std::vector<std::size_t> target;
};

// One epoch = ceil(N_large / batch) steps. The larger domain is walked in a
// fresh permutation (the last batch topped up from the start of that
// permutation); the smaller domain is drawn from concatenated permutations.
class BatchIterator {
 public:
  BatchIterator(std::size_t source_size, std::size_t target_size, std::size_t batch_size)
      : source_size_(source_size), target_size_(target_size), batch_size_(batch_size) {
    if (source_size == 0 || target_size == 0) throw UsageError("batch_iterator: empty dataset");
    if (batch_size == 0 || batch_size > source_size || batch_size > target_size)
      throw UsageError("batch_iterator: batch size must be in [1, min(source, target)]");
  }

  std::size_t steps_per_epoch() const {
    const std::size_t n = std::max(source_size_, target_size_);
    return (n + batch_size_ - 1) / batch_size_;
  }

  std::vector<BatchIndices> epoch(Rng& rng) const {
    const bool source_large = source_size_ >= target_size_;
    const std::size_t steps = steps_per_epoch();
    const std::size_t need = steps * batch_size_;
    const auto large = cycle(source_large ? source_size_ : target_size_, need, rng, true);
    const auto small = cycle(source_large ? target_size_ : source_size_, need, rng, false);
    std::vector<BatchIndices> out(steps);
    for (std::size_t s = 0; s < steps; ++s) {
      auto lb = large.begin() + static_cast<std::ptrdiff_t>(s * batch_size_);
      auto sb = small.begin() + static_cast<std::ptrdiff_t>(s * batch_size_);
      std::vector<std::size_t> l(lb, lb + static_cast<std::ptrdiff_t>(batch_size_));
      std::vector<std::size_t> sm(sb, sb + static_cast<std::ptrdiff_t>(batch_size_));
      out[s] = source_large ? BatchIndices{std::move(l), std::move(sm)} : BatchIndices{std::move(sm), std::move(l)};
    }
    return out;
  }

 private:
  // `need` indices from repeated permutations of [0, n). The larger domain
  // reuses its one permutation for the top-up.
  static std::vector<std::size_t> cycle(std::size_t n, std::size_t need, Rng& rng, bool single_perm) {
    std::vector<std::size_t> out;
    out.reserve(need);
    std::vector<std::size_t> perm = rng.permutation(n);
    while (out.size() < need) {
      for (std::size_t i = 0; i < perm.size() && out.size() < need; ++i) out.push_back(perm[i]);
      if (out.size() < need && !single_perm) perm = rng.permutation(n);
    }
    return out;
  }

  std::size_t source_size_;
  std::size_t target_size_;
  std::size_t batch_size_;
};

}  // namespace pda
