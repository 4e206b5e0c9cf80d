#include "knnseq/pca.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "knnseq/rng.hpp"

namespace knnseq {

namespace {

// y = Cov * v for the centered data, without materializing the covariance.
void apply_covariance(const std::vector<double>& centered, std::size_t n, std::size_t d,
                      const std::vector<double>& v, std::vector<double>& y) {
  y.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = centered.data() + i * d;
    double proj = 0.0;
    for (std::size_t j = 0; j < d; ++j) proj += row[j] * v[j];
    for (std::size_t j = 0; j < d; ++j) y[j] += proj * row[j];
  }
  for (std::size_t j = 0; j < d; ++j) y[j] /= static_cast<double>(n);
}

double norm(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

void fix_sign(std::vector<double>& v) {
  std::size_t arg = 0;
  for (std::size_t j = 1; j < v.size(); ++j) {
    if (std::abs(v[j]) > std::abs(v[arg])) arg = j;
  }
  if (v[arg] < 0.0) {
    for (double& x : v) x = -x;
  }
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

Projection project_2d(const std::vector<double>& features, std::size_t n, std::size_t d,
                      double tol, std::size_t max_iterations) {
  if (n < 2) {
    throw std::invalid_argument("project_2d: need at least 2 rows, got " + std::to_string(n));
  }
  if (d < 2) {
    throw std::invalid_argument("project_2d: need at least 2 features, got " + std::to_string(d));
  }

  std::vector<double> centered = features;
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) mean[j] += features[i * d + j];
  }
  for (std::size_t j = 0; j < d; ++j) mean[j] /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) centered[i * d + j] -= mean[j];
  }

  Projection proj;
  std::vector<double> y;
  for (int comp = 0; comp < 2; ++comp) {
    RngStream rng = RngStream::derive(0x9e3779b9, "pca-power", static_cast<std::uint64_t>(comp));
    std::vector<double> v(d);
    for (auto& x : v) x = 2.0 * rng.next_double() - 1.0;
    // Keep the start vector orthogonal to already-found components.
    for (int prev = 0; prev < comp; ++prev) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += v[j] * proj.components[prev][j];
      for (std::size_t j = 0; j < d; ++j) v[j] -= dot * proj.components[prev][j];
    }
    double vn = norm(v);
    for (auto& x : v) x /= vn;

    double eigenvalue = 0.0;
    for (std::size_t iter = 0; iter < max_iterations; ++iter) {
      apply_covariance(centered, n, d, v, y);
      for (int prev = 0; prev < comp; ++prev) {
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) dot += y[j] * proj.components[prev][j];
        for (std::size_t j = 0; j < d; ++j) y[j] -= dot * proj.components[prev][j];
      }
      const double yn = norm(y);
      if (yn < 1e-300) {
        // Degenerate direction (zero variance left); keep the current v.
        eigenvalue = 0.0;
        break;
      }
      double delta = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double next = y[j] / yn;
        delta = std::max(delta, std::abs(next - v[j]));
        v[j] = next;
      }
      eigenvalue = yn;
      if (delta < tol) break;
    }
    fix_sign(v);
    proj.components[comp] = v;
    proj.eigenvalues[comp] = eigenvalue;
  }

  proj.coords.resize(n * 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (int comp = 0; comp < 2; ++comp) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        dot += centered[i * d + j] * proj.components[comp][j];
      }
      proj.coords[i * 2 + comp] = dot;
    }
  }
  return proj;
}

Projection project_2d(const Dataset& ds, double tol) {
  return project_2d(ds.features, ds.n, ds.d, tol);
}

void write_projection_csv(const Projection& proj, const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write projection file '" + path + "'");
  }
  const bool with_origin = !ds.origins.empty();
  out << "pc1,pc2,label";
  if (with_origin) out << ",origin";
  out << '\n';
  for (std::size_t i = 0; i < ds.n; ++i) {
    out << format_double(proj.coords[i * 2]) << ',' << format_double(proj.coords[i * 2 + 1]) << ','
        << ds.label_map[static_cast<std::size_t>(ds.labels[i])];
    if (with_origin) out << ',' << ds.origins[i];
    out << '\n';
  }
  if (!out) {
    throw std::runtime_error("failed while writing '" + path + "'");
  }
}

}  // namespace knnseq
