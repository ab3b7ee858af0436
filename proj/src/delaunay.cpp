#include "delaunay.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <unordered_map>
#include <unordered_set>

namespace stretchcap::detail {

double orient2d(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
  const long double acx = static_cast<long double>(a.x()) - c.x();
  const long double bcx = static_cast<long double>(b.x()) - c.x();
  const long double acy = static_cast<long double>(a.y()) - c.y();
  const long double bcy = static_cast<long double>(b.y()) - c.y();
  return static_cast<double>(acx * bcy - acy * bcx);
}

namespace {

// > 0 when d lies strictly inside the circumcircle of the ccw triangle abc.
long double incircle(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c,
                     const Eigen::Vector2d& d) {
  const long double adx = static_cast<long double>(a.x()) - d.x(), ady = static_cast<long double>(a.y()) - d.y();
  const long double bdx = static_cast<long double>(b.x()) - d.x(), bdy = static_cast<long double>(b.y()) - d.y();
  const long double cdx = static_cast<long double>(c.x()) - d.x(), cdy = static_cast<long double>(c.y()) - d.y();
  const long double ad = adx * adx + ady * ady;
  const long double bd = bdx * bdx + bdy * bdy;
  const long double cd = cdx * cdx + cdy * cdy;
  return adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx);
}

inline std::uint64_t edge_key(int a, int b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

class Builder {
 public:
  Builder(const std::vector<Eigen::Vector2d>& seed_points) {
    Eigen::Vector2d lo = seed_points.front(), hi = seed_points.front();
    for (const auto& p : seed_points) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    const Eigen::Vector2d center = 0.5 * (lo + hi);
    const double extent = std::max((hi - lo).maxCoeff(), 1.0);
    scale_ = extent;
    const double r = 1e3 * extent;
    pts_.push_back(center + Eigen::Vector2d(-r, -r));
    pts_.push_back(center + Eigen::Vector2d(r, -r));
    pts_.push_back(center + Eigen::Vector2d(0.0, r));
    add_triangle(0, 1, 2);
  }

  int insert(const Eigen::Vector2d& p) {
    const int t0 = locate(p);
    for (int k = 0; k < 3; ++k) {
      const int v = tris_[static_cast<std::size_t>(t0)][static_cast<std::size_t>(k)];
      if ((pts_[static_cast<std::size_t>(v)] - p).norm() <= 1e-12 * scale_) return v;
    }
    const int idx = static_cast<int>(pts_.size());
    pts_.push_back(p);

    std::vector<int> cavity{t0};
    std::unordered_set<int> in_cavity{t0};
    for (std::size_t head = 0; head < cavity.size(); ++head) {
      const auto tri = tris_[static_cast<std::size_t>(cavity[head])];
      for (int k = 0; k < 3; ++k) {
        const int a = tri[static_cast<std::size_t>(k)], b = tri[static_cast<std::size_t>((k + 1) % 3)];
        const auto it = edges_.find(edge_key(b, a));
        if (it == edges_.end() || in_cavity.count(it->second)) continue;
        const int n = it->second;
        const auto& nt = tris_[static_cast<std::size_t>(n)];
        bool take = incircle(pt(nt[0]), pt(nt[1]), pt(nt[2]), p) > 0.0L;
        // A point on the shared edge must split both neighbours.
        if (!take && head == 0 && orient2d(pt(a), pt(b), p) == 0.0) take = true;
        if (take) {
          in_cavity.insert(n);
          cavity.push_back(n);
        }
      }
    }

    std::vector<std::array<int, 2>> boundary;
    for (int t : cavity) {
      const auto tri = tris_[static_cast<std::size_t>(t)];
      for (int k = 0; k < 3; ++k) {
        const int a = tri[static_cast<std::size_t>(k)], b = tri[static_cast<std::size_t>((k + 1) % 3)];
        const auto it = edges_.find(edge_key(b, a));
        if (it == edges_.end() || !in_cavity.count(it->second)) boundary.push_back({a, b});
      }
    }
    for (const auto& [a, b] : boundary)
      if (!(orient2d(pt(a), pt(b), p) > 0.0))
        throw TriangulationError("degenerate cavity while inserting point (" + std::to_string(p.x()) + ", " +
                                 std::to_string(p.y()) + ")");
    for (int t : cavity) remove_triangle(t);
    for (const auto& [a, b] : boundary) add_triangle(a, b, idx);
    return idx;
  }

  bool has_edge(int a, int b) const { return edges_.count(edge_key(a, b)) || edges_.count(edge_key(b, a)); }

  const Eigen::Vector2d& pt(int i) const { return pts_[static_cast<std::size_t>(i)]; }

  Triangulation extract() const {
    Triangulation out;
    out.points.assign(pts_.begin() + 3, pts_.end());
    for (std::size_t t = 0; t < tris_.size(); ++t) {
      if (!alive_[t]) continue;
      const auto& tri = tris_[t];
      if (tri[0] < 3 || tri[1] < 3 || tri[2] < 3) continue;
      out.triangles.push_back({tri[0] - 3, tri[1] - 3, tri[2] - 3});
    }
    return out;
  }

 private:
  void add_triangle(int a, int b, int c) {
    const int t = static_cast<int>(tris_.size());
    tris_.push_back({a, b, c});
    alive_.push_back(1);
    edges_[edge_key(a, b)] = t;
    edges_[edge_key(b, c)] = t;
    edges_[edge_key(c, a)] = t;
    last_ = t;
  }

  void remove_triangle(int t) {
    const auto& tri = tris_[static_cast<std::size_t>(t)];
    for (int k = 0; k < 3; ++k) {
      const auto key = edge_key(tri[static_cast<std::size_t>(k)], tri[static_cast<std::size_t>((k + 1) % 3)]);
      const auto it = edges_.find(key);
      if (it != edges_.end() && it->second == t) edges_.erase(it);
    }
    alive_[static_cast<std::size_t>(t)] = 0;
  }

  bool contains(int t, const Eigen::Vector2d& p) const {
    const auto& tri = tris_[static_cast<std::size_t>(t)];
    for (int k = 0; k < 3; ++k)
      if (orient2d(pt(tri[static_cast<std::size_t>(k)]), pt(tri[static_cast<std::size_t>((k + 1) % 3)]), p) < 0.0)
        return false;
    return true;
  }

  int locate(const Eigen::Vector2d& p) const {
    int t = last_;
    const std::size_t max_steps = tris_.size() + 16;
    for (std::size_t step = 0; step < max_steps && alive_[static_cast<std::size_t>(t)]; ++step) {
      const auto& tri = tris_[static_cast<std::size_t>(t)];
      int next = -1;
      for (int k = 0; k < 3; ++k) {
        const int a = tri[static_cast<std::size_t>(k)], b = tri[static_cast<std::size_t>((k + 1) % 3)];
        if (orient2d(pt(a), pt(b), p) < 0.0) {
          const auto it = edges_.find(edge_key(b, a));
          if (it != edges_.end()) next = it->second;
          break;
        }
      }
      if (next < 0) {
        if (contains(t, p)) return t;
        break;
      }
      t = next;
    }
    for (std::size_t s = 0; s < tris_.size(); ++s)
      if (alive_[s] && contains(static_cast<int>(s), p)) return static_cast<int>(s);
    throw TriangulationError("point outside triangulation");
  }

  std::vector<Eigen::Vector2d> pts_;
  std::vector<std::array<int, 3>> tris_;
  std::vector<char> alive_;
  std::unordered_map<std::uint64_t, int> edges_;
  int last_ = 0;
  double scale_ = 1.0;
};

}  // namespace

Triangulation conforming_delaunay(const Pslg& pslg, const std::vector<Eigen::Vector2d>& extra_points,
                                  int max_splits) {
  if (pslg.points.size() < 3) throw TriangulationError("need at least three points");
  Builder builder(pslg.points);

  std::vector<int> pslg_index(pslg.points.size());
  for (std::size_t i = 0; i < pslg.points.size(); ++i) pslg_index[i] = builder.insert(pslg.points[i]);
  for (const auto& p : extra_points) builder.insert(p);

  std::vector<std::array<int, 2>> pending;
  for (const auto& s : pslg.segments)
    pending.push_back({pslg_index[static_cast<std::size_t>(s[0])], pslg_index[static_cast<std::size_t>(s[1])]});

  int splits = 0;
  bool changed = true;
  while (changed) {
    changed = false;
    std::vector<std::array<int, 2>> next;
    next.reserve(pending.size());
    for (const auto& [a, b] : pending) {
      if (a == b) continue;
      if (builder.has_edge(a, b)) {
        next.push_back({a, b});
        continue;
      }
      if (++splits > max_splits) throw TriangulationError("segment recovery did not converge");
      const int m = builder.insert(0.5 * (builder.pt(a) + builder.pt(b)));
      next.push_back({a, m});
      next.push_back({m, b});
      changed = true;
    }
    pending.swap(next);
  }
  return builder.extract();
}

}  // namespace stretchcap::detail
