#include "rcm/core.hpp"
#include "rcm/parallel.hpp"

#include <cmath>
#include <cstdlib>
#include <limits>

namespace rcm {

std::string to_string(const Point& p, int dim) {
  std::string s = "(";
  for (int i = 0; i < dim; ++i) {
    if (i) s += ",";
    s += std::to_string(p[i]);
  }
  return s + ")";
}

Lattice::Lattice(int dim, int radius) : dim_(dim), radius_(radius) {
  if (dim < 1 || dim > kMaxDim) throw std::invalid_argument("lattice dimension must be in [1, " + std::to_string(kMaxDim) + "]");
  if (radius < 0) throw std::invalid_argument("box radius must be non-negative");
  side_ = 2 * static_cast<std::int64_t>(radius) + 1;
  std::int64_t s = 1;
  for (int a = 0; a < dim; ++a) {
    stride_[a] = s;
    if (s > std::numeric_limits<std::int64_t>::max() / side_ / (dim + 1)) {
      throw std::invalid_argument("box too large to index");
    }
    s *= side_;
  }
  num_sites_ = s;
}

std::int64_t Lattice::num_edges() const {
  return static_cast<std::int64_t>(dim_) * (num_sites_ / side_) * (side_ - 1);
}

bool Lattice::contains(const Point& p) const {
  for (int a = 0; a < dim_; ++a) {
    if (p[a] < -radius_ || p[a] > radius_) return false;
  }
  for (int a = dim_; a < kMaxDim; ++a) {
    if (p[a] != 0) return false;
  }
  return true;
}

std::int64_t Lattice::index(const Point& p) const {
  std::int64_t idx = 0;
  for (int a = 0; a < dim_; ++a) idx += static_cast<std::int64_t>(p[a] + radius_) * stride_[a];
  return idx;
}

Point Lattice::point(std::int64_t site) const {
  Point p{};
  for (int a = 0; a < dim_; ++a) {
    p[a] = static_cast<int>(site % side_) - radius_;
    site /= side_;
  }
  return p;
}

std::int64_t Lattice::neighbor(std::int64_t site, int axis, int dir) const {
  const int c = coord(site, axis) + dir;
  if (c < -radius_ || c > radius_) return -1;
  return site + dir * stride_[axis];
}

int Lattice::depth(const Point& p) const {
  int best = radius_;
  for (int a = 0; a < dim_; ++a) best = std::min(best, radius_ - std::abs(p[a]));
  return best;
}

bool Lattice::on_boundary(std::int64_t site) const {
  for (int a = 0; a < dim_; ++a) {
    const int c = coord(site, a);
    if (c == -radius_ || c == radius_) return true;
  }
  return false;
}

double euclidean_norm(const Point& p) {
  double s = 0;
  for (int c : p) s += static_cast<double>(c) * c;
  return std::sqrt(s);
}

int l1_norm(const Point& p) {
  int s = 0;
  for (int c : p) s += std::abs(c);
  return s;
}

int linf_distance(const Point& a, const Point& b) {
  int m = 0;
  for (int i = 0; i < kMaxDim; ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

namespace parallel {

namespace {
int& threads_setting() {
  static int n = 0;
  return n;
}
}  // namespace

int default_threads() {
  if (threads_setting() > 0) return threads_setting();
  if (const char* env = std::getenv("RCM_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

void set_default_threads(int n) { threads_setting() = n; }

}  // namespace parallel

}  // namespace rcm
