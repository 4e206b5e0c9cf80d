#include "knnseq/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace knnseq {

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string strip(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

double parse_double(const std::string& token, std::size_t line_no, const std::string& what) {
  const std::string t = strip(token);
  double v = 0.0;
  const auto* begin = t.data();
  const auto* end = t.data() + t.size();
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc() || res.ptr != end || t.empty()) {
    throw std::runtime_error("line " + std::to_string(line_no) + ": non-numeric " + what + " '" +
                             token + "'");
  }
  return v;
}

std::int64_t parse_label(const std::string& token, std::size_t line_no) {
  const std::string t = strip(token);
  std::int64_t v = 0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size() || t.empty()) {
    throw std::runtime_error("line " + std::to_string(line_no) + ": label '" + token +
                             "' is not an integer");
  }
  return v;
}

void remap_labels(Dataset& ds, const std::vector<std::int64_t>& raw_labels) {
  std::map<std::int64_t, int> mapping;
  for (std::int64_t l : raw_labels) {
    mapping.emplace(l, 0);
  }
  if (mapping.size() < 2) {
    throw std::runtime_error("dataset has " + std::to_string(mapping.size()) +
                             " distinct label(s); at least 2 classes are required");
  }
  int next = 0;
  ds.label_map.clear();
  for (auto& [orig, idx] : mapping) {
    idx = next++;
    ds.label_map.push_back(orig);
  }
  ds.num_classes = mapping.size();
  ds.labels.resize(raw_labels.size());
  for (std::size_t i = 0; i < raw_labels.size(); ++i) {
    ds.labels[i] = mapping[raw_labels[i]];
  }
}

Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open dataset file '" + path + "'");
  }
  std::string header;
  if (!std::getline(in, header)) {
    throw std::runtime_error("dataset file '" + path + "' is empty");
  }
  const auto columns = split(header, ',');
  std::size_t label_col = columns.size();
  std::size_t origin_col = columns.size();
  std::vector<std::size_t> feature_cols;
  for (std::size_t j = 0; j < columns.size(); ++j) {
    const std::string name = strip(columns[j]);
    if (name == "label") {
      label_col = j;
    } else if (name == "origin") {
      origin_col = j;
    } else {
      feature_cols.push_back(j);
    }
  }
  if (label_col == columns.size()) {
    throw std::runtime_error("dataset file '" + path + "': header has no 'label' column");
  }

  Dataset ds;
  ds.d = feature_cols.size();
  std::vector<std::int64_t> raw_labels;
  std::string line;
  std::size_t line_no = 1;
  bool any_origin = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (strip(line).empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() != columns.size()) {
      throw std::runtime_error("line " + std::to_string(line_no) + ": expected " +
                               std::to_string(columns.size()) + " fields, got " +
                               std::to_string(fields.size()));
    }
    for (std::size_t j : feature_cols) {
      ds.features.push_back(parse_double(fields[j], line_no, "feature"));
    }
    raw_labels.push_back(parse_label(fields[label_col], line_no));
    if (origin_col != columns.size()) {
      const std::string o = strip(fields[origin_col]);
      ds.origins.push_back(o);
      any_origin = any_origin || !o.empty();
    }
  }
  ds.n = raw_labels.size();
  if (ds.n == 0) {
    throw std::runtime_error("dataset file '" + path + "' has a header but no data rows");
  }
  if (!any_origin) {
    ds.origins.clear();
  }
  remap_labels(ds, raw_labels);
  return ds;
}

Dataset load_libsvm(const std::string& path, std::size_t min_dim) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open dataset file '" + path + "'");
  }
  std::vector<std::int64_t> raw_labels;
  std::vector<std::vector<std::pair<std::size_t, double>>> sparse_rows;
  std::size_t max_index = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = strip(line);
    if (body.empty() || body[0] == '#') continue;
    std::istringstream ls(body);
    std::string token;
    if (!(ls >> token)) continue;
    raw_labels.push_back(parse_label(token, line_no));
    std::vector<std::pair<std::size_t, double>> row;
    while (ls >> token) {
      const std::size_t colon = token.find(':');
      if (colon == std::string::npos) {
        throw std::runtime_error("line " + std::to_string(line_no) + ": malformed entry '" +
                                 token + "' (expected index:value)");
      }
      const std::string idx_str = token.substr(0, colon);
      std::size_t idx = 0;
      const auto res = std::from_chars(idx_str.data(), idx_str.data() + idx_str.size(), idx);
      if (res.ec != std::errc() || idx == 0) {
        throw std::runtime_error("line " + std::to_string(line_no) + ": bad feature index '" +
                                 idx_str + "' (indices are 1-based)");
      }
      const double v = parse_double(token.substr(colon + 1), line_no, "feature value");
      row.emplace_back(idx - 1, v);
      max_index = std::max(max_index, idx);
    }
    sparse_rows.push_back(std::move(row));
  }
  if (raw_labels.empty()) {
    throw std::runtime_error("dataset file '" + path + "' has no data rows");
  }

  Dataset ds;
  ds.n = raw_labels.size();
  ds.d = std::max(max_index, min_dim);
  if (ds.d == 0) {
    throw std::runtime_error("dataset file '" + path + "' has no features");
  }
  ds.features.assign(ds.n * ds.d, 0.0);
  for (std::size_t i = 0; i < sparse_rows.size(); ++i) {
    for (const auto& [idx, v] : sparse_rows[i]) {
      ds.features[i * ds.d + idx] = v;
    }
  }
  remap_labels(ds, raw_labels);
  return ds;
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::vector<double> Dataset::row_vec(std::size_t i) const {
  return std::vector<double>(features.begin() + i * d, features.begin() + (i + 1) * d);
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes, 0);
  for (int l : labels) counts[static_cast<std::size_t>(l)]++;
  return counts;
}

Dataset load_dataset(const std::string& path, DatasetFormat format, std::size_t min_dim) {
  return format == DatasetFormat::csv ? load_csv(path) : load_libsvm(path, min_dim);
}

void save_dataset_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write dataset file '" + path + "'");
  }
  const bool with_origin = !ds.origins.empty();
  for (std::size_t j = 0; j < ds.d; ++j) {
    out << 'f' << j << ',';
  }
  out << "label";
  if (with_origin) out << ",origin";
  out << '\n';
  for (std::size_t i = 0; i < ds.n; ++i) {
    for (std::size_t j = 0; j < ds.d; ++j) {
      out << format_double(ds.features[i * ds.d + j]) << ',';
    }
    out << ds.label_map[static_cast<std::size_t>(ds.labels[i])];
    if (with_origin) out << ',' << ds.origins[i];
    out << '\n';
  }
  if (!out) {
    throw std::runtime_error("failed while writing '" + path + "'");
  }
}

void NormStats::apply(const double* in, double* out) const {
  for (std::size_t j = 0; j < mean.size(); ++j) {
    out[j] = stddev[j] > 0.0 ? (in[j] - mean[j]) / stddev[j] : 0.0;
  }
}

std::vector<double> NormStats::apply(const std::vector<double>& x) const {
  if (x.size() != mean.size()) {
    throw std::invalid_argument("NormStats::apply: vector has " + std::to_string(x.size()) +
                                " features, stats have " + std::to_string(mean.size()));
  }
  std::vector<double> out(x.size());
  apply(x.data(), out.data());
  return out;
}

std::vector<double> NormStats::invert(const std::vector<double>& z) const {
  if (z.size() != mean.size()) {
    throw std::invalid_argument("NormStats::invert: vector has " + std::to_string(z.size()) +
                                " features, stats have " + std::to_string(mean.size()));
  }
  std::vector<double> out(z.size());
  for (std::size_t j = 0; j < z.size(); ++j) {
    out[j] = stddev[j] > 0.0 ? z[j] * stddev[j] + mean[j] : mean[j];
  }
  return out;
}

NormStats normalize_fit(const Dataset& train) {
  NormStats stats;
  stats.mean.assign(train.d, 0.0);
  stats.stddev.assign(train.d, 0.0);
  if (train.n == 0) return stats;
  for (std::size_t i = 0; i < train.n; ++i) {
    for (std::size_t j = 0; j < train.d; ++j) {
      stats.mean[j] += train.features[i * train.d + j];
    }
  }
  for (std::size_t j = 0; j < train.d; ++j) stats.mean[j] /= static_cast<double>(train.n);
  for (std::size_t i = 0; i < train.n; ++i) {
    for (std::size_t j = 0; j < train.d; ++j) {
      const double diff = train.features[i * train.d + j] - stats.mean[j];
      stats.stddev[j] += diff * diff;
    }
  }
  for (std::size_t j = 0; j < train.d; ++j) {
    stats.stddev[j] = std::sqrt(stats.stddev[j] / static_cast<double>(train.n));
  }
  return stats;
}

std::vector<double> normalize_matrix(const NormStats& stats, const Dataset& ds) {
  if (stats.dim() != ds.d) {
    throw std::invalid_argument("normalize_matrix: stats dimension " +
                                std::to_string(stats.dim()) + " does not match dataset " +
                                std::to_string(ds.d));
  }
  std::vector<double> out(ds.n * ds.d);
  for (std::size_t i = 0; i < ds.n; ++i) {
    stats.apply(ds.row(i), out.data() + i * ds.d);
  }
  return out;
}

}  // namespace knnseq
