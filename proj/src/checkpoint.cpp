#include "knnseq/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include "knnseq/util.hpp"

namespace knnseq {

namespace {

constexpr char kMagic[] = "KNNSEQ1";
constexpr std::size_t kMagicLen = 7;
constexpr std::uint64_t kVersion = 1;

}  // namespace

bool Checkpoint::has_config(const std::string& key) const {
  for (const auto& [k, v] : config) {
    if (k == key) return true;
  }
  return false;
}

double Checkpoint::config_value(const std::string& key) const {
  for (const auto& [k, v] : config) {
    if (k == key) return v;
  }
  throw std::out_of_range("checkpoint config has no key '" + key + "'");
}

void Checkpoint::set_config(const std::string& key, double value) {
  for (auto& [k, v] : config) {
    if (k == key) {
      v = value;
      return;
    }
  }
  config.emplace_back(key, value);
}

const diff::Tensor& Checkpoint::param(const std::string& name) const {
  for (const auto& [n, t] : params) {
    if (n == name) return t;
  }
  throw std::out_of_range("checkpoint has no parameter '" + name + "'");
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write checkpoint file '" + path + "'");
  }
  out.write(kMagic, kMagicLen);
  binio::write_u64(out, kVersion);
  binio::write_string(out, ckpt.kind);
  binio::write_u64(out, ckpt.config.size());
  for (const auto& [key, value] : ckpt.config) {
    binio::write_string(out, key);
    binio::write_f64(out, value);
  }
  binio::write_u64(out, ckpt.stats.dim());
  for (double v : ckpt.stats.mean) binio::write_f64(out, v);
  for (double v : ckpt.stats.stddev) binio::write_f64(out, v);
  binio::write_u64(out, ckpt.label_map.size());
  for (std::int64_t l : ckpt.label_map) binio::write_i64(out, l);
  binio::write_u64(out, ckpt.params.size());
  for (const auto& [name, tensor] : ckpt.params) {
    binio::write_string(out, name);
    binio::write_u64(out, tensor.shape().size());
    for (std::size_t s : tensor.shape()) binio::write_u64(out, s);
    for (double v : tensor.values()) binio::write_f64(out, v);
  }
  if (!out) {
    throw std::runtime_error("failed while writing checkpoint file '" + path + "'");
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open checkpoint file '" + path + "'");
  }
  char magic[kMagicLen];
  in.read(magic, kMagicLen);
  if (!in || std::string(magic, kMagicLen) != kMagic) {
    throw std::runtime_error("'" + path + "' is not a checkpoint file (bad magic)");
  }
  const std::uint64_t version = binio::read_u64(in);
  if (version != kVersion) {
    throw std::runtime_error("checkpoint '" + path + "' has unsupported version " +
                             std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.kind = binio::read_string(in);
  const std::uint64_t n_config = binio::read_u64(in);
  for (std::uint64_t i = 0; i < n_config; ++i) {
    std::string key = binio::read_string(in);
    const double value = binio::read_f64(in);
    ckpt.config.emplace_back(std::move(key), value);
  }
  const std::uint64_t dim = binio::read_u64(in);
  ckpt.stats.mean.resize(dim);
  ckpt.stats.stddev.resize(dim);
  for (auto& v : ckpt.stats.mean) v = binio::read_f64(in);
  for (auto& v : ckpt.stats.stddev) v = binio::read_f64(in);
  const std::uint64_t n_labels = binio::read_u64(in);
  ckpt.label_map.resize(n_labels);
  for (auto& l : ckpt.label_map) l = binio::read_i64(in);
  const std::uint64_t n_params = binio::read_u64(in);
  for (std::uint64_t i = 0; i < n_params; ++i) {
    std::string name = binio::read_string(in);
    const std::uint64_t ndim = binio::read_u64(in);
    std::vector<std::size_t> shape(ndim);
    std::size_t count = 1;
    for (auto& s : shape) {
      s = binio::read_u64(in);
      count *= s;
    }
    std::vector<double> values(count);
    for (auto& v : values) v = binio::read_f64(in);
    ckpt.params.emplace_back(std::move(name), diff::Tensor(std::move(shape), std::move(values)));
  }
  return ckpt;
}

}  // namespace knnseq
