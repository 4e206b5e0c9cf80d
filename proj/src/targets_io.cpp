#include "knnseq/targets_io.hpp"

#include <fstream>
#include <stdexcept>

#include "knnseq/util.hpp"

namespace knnseq {

namespace {

constexpr char kMagic[] = "KNNT1";
constexpr std::size_t kMagicLen = 5;

}  // namespace

void write_targets(const TargetsFile& tf, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write targets file '" + path + "'");
  }
  const NeighborTargets& t = tf.targets;
  if (tf.stats.dim() != t.d) {
    throw std::invalid_argument("write_targets: stats dimension does not match targets");
  }
  out.write(kMagic, kMagicLen);
  binio::write_u64(out, t.k);
  binio::write_u64(out, t.d);
  binio::write_u64(out, t.n);
  binio::write_u64(out, tf.label_map.size());
  for (std::int64_t l : tf.label_map) binio::write_i64(out, l);
  for (double v : tf.stats.mean) binio::write_f64(out, v);
  for (double v : tf.stats.stddev) binio::write_f64(out, v);
  for (std::size_t i = 0; i < t.n; ++i) {
    for (std::size_t j = 0; j < t.k; ++j) binio::write_i64(out, t.labels[i * t.k + j]);
    for (std::size_t j = 0; j < t.k * t.d; ++j) binio::write_f64(out, t.vectors[i * t.k * t.d + j]);
    for (std::size_t j = 0; j < t.k; ++j) binio::write_f64(out, t.distances[i * t.k + j]);
  }
  if (!out) {
    throw std::runtime_error("failed while writing targets file '" + path + "'");
  }
}

TargetsFile read_targets(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open targets file '" + path + "'");
  }
  char magic[kMagicLen];
  in.read(magic, kMagicLen);
  if (!in || std::string(magic, kMagicLen) != kMagic) {
    throw std::runtime_error("'" + path + "' is not a targets file (bad magic)");
  }
  TargetsFile tf;
  NeighborTargets& t = tf.targets;
  t.k = binio::read_u64(in);
  t.d = binio::read_u64(in);
  t.n = binio::read_u64(in);
  const std::uint64_t c = binio::read_u64(in);
  tf.label_map.resize(c);
  for (auto& l : tf.label_map) l = binio::read_i64(in);
  tf.stats.mean.resize(t.d);
  tf.stats.stddev.resize(t.d);
  for (auto& v : tf.stats.mean) v = binio::read_f64(in);
  for (auto& v : tf.stats.stddev) v = binio::read_f64(in);
  t.labels.resize(t.n * t.k);
  t.vectors.resize(t.n * t.k * t.d);
  t.distances.resize(t.n * t.k);
  for (std::size_t i = 0; i < t.n; ++i) {
    for (std::size_t j = 0; j < t.k; ++j) {
      t.labels[i * t.k + j] = static_cast<int>(binio::read_i64(in));
    }
    for (std::size_t j = 0; j < t.k * t.d; ++j) {
      t.vectors[i * t.k * t.d + j] = binio::read_f64(in);
    }
    for (std::size_t j = 0; j < t.k; ++j) {
      t.distances[i * t.k + j] = binio::read_f64(in);
    }
  }
  return tf;
}

}  // namespace knnseq
