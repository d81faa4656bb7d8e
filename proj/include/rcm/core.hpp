#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace rcm {

inline constexpr int kMaxDim = 6;

// Lattice point; coordinates beyond the lattice dimension are zero.
using Point = std::array<int, kMaxDim>;

// Error hierarchy. Parameter validation uses std::invalid_argument directly.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IsolatedSiteError : public Error {
 public:
  using Error::Error;
};

class BoxTooSmallError : public Error {
 public:
  using Error::Error;
};

class DisconnectedError : public Error {
 public:
  using Error::Error;
};

class NotStrongError : public Error {
 public:
  using Error::Error;
};

class StrandedComponentError : public Error {
 public:
  using Error::Error;
};

std::string to_string(const Point& p, int dim);

// Free-boundary box [-L, L]^d. Sites are numbered with axis 0 varying fastest.
// Bond (x, x + e_a) has canonical edge id index(x) * d + a.
class Lattice {
 public:
  Lattice() = default;
  Lattice(int dim, int radius);

  int dim() const { return dim_; }
  int radius() const { return radius_; }
  std::int64_t side() const { return side_; }
  std::int64_t num_sites() const { return num_sites_; }
  std::int64_t stride(int axis) const { return stride_[axis]; }

  // Number of bonds inside the box: d (2L+1)^(d-1) (2L).
  std::int64_t num_edges() const;
  std::int64_t edge_slots() const { return num_sites_ * dim_; }

  bool contains(const Point& p) const;
  std::int64_t index(const Point& p) const;
  Point point(std::int64_t site) const;
  int coord(std::int64_t site, int axis) const {
    return static_cast<int>((site / stride_[axis]) % side_) - radius_;
  }
  std::int64_t origin() const { return index(Point{}); }

  // Neighbor of `site` along `axis` in direction dir (+1 / -1), or -1 outside.
  std::int64_t neighbor(std::int64_t site, int axis, int dir) const;

  // l-infinity distance from p to the nearest face of the box.
  int depth(const Point& p) const;
  bool on_boundary(std::int64_t site) const;

  bool operator==(const Lattice& o) const { return dim_ == o.dim_ && radius_ == o.radius_; }

 private:
  int dim_ = 0;
  int radius_ = 0;
  std::int64_t side_ = 0;
  std::int64_t num_sites_ = 0;
  std::array<std::int64_t, kMaxDim> stride_{};
};

inline Point unit(int axis, int sign = 1) {
  Point p{};
  p[axis] = sign;
  return p;
}

inline Point add(Point a, const Point& b) {
  for (int i = 0; i < kMaxDim; ++i) a[i] += b[i];
  return a;
}

inline Point scale(Point a, int k) {
  for (auto& c : a) c *= k;
  return a;
}

double euclidean_norm(const Point& p);
int l1_norm(const Point& p);
int linf_distance(const Point& a, const Point& b);

}  // namespace rcm
