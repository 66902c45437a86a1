#pragma once

// Discrete source domains (X, m) with the edge graph used for discrete
// x-derivatives, and node-subset masks standing in for open subsets.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "mvlift/error.hpp"

namespace mvlift {

enum class DomainKind { interval, circle, grid2d, custom_graph };

inline std::string to_string(DomainKind k) {
  switch (k) {
    case DomainKind::interval: return "interval";
    case DomainKind::circle: return "circle";
    case DomainKind::grid2d: return "grid2d";
    case DomainKind::custom_graph: return "custom-graph";
  }
  return "?";
}

struct Edge {
  std::size_t tail;
  std::size_t head;
  int axis;                      // x-axis the edge differentiates along
  std::array<double, 2> direction;
  double length;
  double weight;
};

struct SpatialDomain {
  DomainKind kind = DomainKind::custom_graph;
  int dim = 1;
  std::vector<std::array<double, 2>> positions;
  std::vector<double> node_weights;
  std::vector<Edge> edges;
  double total_volume = 0.0;

  std::size_t size() const noexcept { return positions.size(); }

  double measure() const {
    return std::accumulate(node_weights.begin(), node_weights.end(), 0.0);
  }

  /// Throws InvalidInput if any structural invariant is broken.
  void validate() const {
    if (positions.size() != node_weights.size())
      throw InvalidInput("domain: positions/weights size mismatch");
    for (double w : node_weights)
      if (!(w > 0.0)) throw InvalidInput("domain: non-positive node weight");
    for (const Edge& e : edges) {
      if (e.tail >= size() || e.head >= size() || e.tail == e.head)
        throw InvalidInput("domain: edge endpoints invalid");
      if (!(e.length > 0.0) || !(e.weight > 0.0))
        throw InvalidInput("domain: non-positive edge length or weight");
      if (e.axis < 0 || e.axis >= dim) throw InvalidInput("domain: edge axis out of range");
    }
    if (std::abs(measure() - total_volume) > 1e-12 * std::max(1.0, total_volume))
      throw InvalidInput("domain: node weights do not sum to the total volume");
  }
};

inline SpatialDomain build_interval(std::size_t n, double length) {
  if (n < 2) throw InvalidParameter("build_interval: need at least 2 nodes");
  if (!(length > 0.0)) throw InvalidParameter("build_interval: length must be positive");
  SpatialDomain d;
  d.kind = DomainKind::interval;
  d.dim = 1;
  const double h = length / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    d.positions.push_back({(static_cast<double>(i) + 0.5) * h, 0.0});
    d.node_weights.push_back(h);
  }
  for (std::size_t i = 0; i + 1 < n; ++i) d.edges.push_back({i, i + 1, 0, {1.0, 0.0}, h, h});
  d.total_volume = length;
  return d;
}

/// Nodes sit at parameters i * circumference / n (node 0 at parameter 0).
inline SpatialDomain build_circle(std::size_t n, double circumference) {
  if (n < 3) throw InvalidParameter("build_circle: need at least 3 nodes");
  if (!(circumference > 0.0)) throw InvalidParameter("build_circle: circumference must be positive");
  SpatialDomain d;
  d.kind = DomainKind::circle;
  d.dim = 1;
  const double h = circumference / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    d.positions.push_back({static_cast<double>(i) * h, 0.0});
    d.node_weights.push_back(h);
  }
  for (std::size_t i = 0; i < n; ++i) d.edges.push_back({i, (i + 1) % n, 0, {1.0, 0.0}, h, h});
  d.total_volume = circumference;
  return d;
}

/// Cell-centre tensor grid over [0,lx] x [0,ly]; node (ix,iy) has index iy*nx+ix.
/// All x-axis edges come first, then y-axis edges.
inline SpatialDomain build_grid2d(std::size_t nx, std::size_t ny, std::array<double, 2> lengths,
                                  std::array<double, 2> origin = {0.0, 0.0}) {
  if (nx < 2 || ny < 2) throw InvalidParameter("build_grid2d: need at least 2 nodes per axis");
  if (!(lengths[0] > 0.0) || !(lengths[1] > 0.0))
    throw InvalidParameter("build_grid2d: lengths must be positive");
  SpatialDomain d;
  d.kind = DomainKind::grid2d;
  d.dim = 2;
  const double hx = lengths[0] / static_cast<double>(nx);
  const double hy = lengths[1] / static_cast<double>(ny);
  for (std::size_t iy = 0; iy < ny; ++iy)
    for (std::size_t ix = 0; ix < nx; ++ix) {
      d.positions.push_back({origin[0] + (static_cast<double>(ix) + 0.5) * hx,
                             origin[1] + (static_cast<double>(iy) + 0.5) * hy});
      d.node_weights.push_back(hx * hy);
    }
  for (std::size_t iy = 0; iy < ny; ++iy)
    for (std::size_t ix = 0; ix + 1 < nx; ++ix)
      d.edges.push_back({iy * nx + ix, iy * nx + ix + 1, 0, {1.0, 0.0}, hx, hx * hy});
  for (std::size_t iy = 0; iy + 1 < ny; ++iy)
    for (std::size_t ix = 0; ix < nx; ++ix)
      d.edges.push_back({iy * nx + ix, (iy + 1) * nx + ix, 1, {0.0, 1.0}, hy, hx * hy});
  d.total_volume = lengths[0] * lengths[1];
  return d;
}

/// Sorted node subset of a domain plus the edges with both endpoints inside.
class SubdomainMask {
 public:
  SubdomainMask() = default;

  SubdomainMask(const SpatialDomain& domain, std::vector<std::size_t> nodes)
      : nodes_(std::move(nodes)) {
    std::sort(nodes_.begin(), nodes_.end());
    nodes_.erase(std::unique(nodes_.begin(), nodes_.end()), nodes_.end());
    inside_.assign(domain.size(), false);
    for (std::size_t i : nodes_) {
      if (i >= domain.size()) throw InvalidParameter("mask: node index out of range");
      inside_[i] = true;
    }
    for (std::size_t e = 0; e < domain.edges.size(); ++e)
      if (inside_[domain.edges[e].tail] && inside_[domain.edges[e].head]) edges_.push_back(e);
  }

  static SubdomainMask full(const SpatialDomain& domain) {
    std::vector<std::size_t> all(domain.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return SubdomainMask(domain, std::move(all));
  }

  /// Contiguous arc of `count` nodes starting at `first`, wrapping modulo the node count.
  static SubdomainMask arc(const SpatialDomain& domain, std::size_t first, std::size_t count) {
    std::vector<std::size_t> nodes;
    for (std::size_t k = 0; k < count; ++k) nodes.push_back((first + k) % domain.size());
    return SubdomainMask(domain, std::move(nodes));
  }

  const std::vector<std::size_t>& nodes() const noexcept { return nodes_; }
  const std::vector<std::size_t>& edges() const noexcept { return edges_; }
  bool contains(std::size_t node) const { return node < inside_.size() && inside_[node]; }
  bool empty() const noexcept { return nodes_.empty(); }
  std::size_t size() const noexcept { return nodes_.size(); }

  double measure(const SpatialDomain& domain) const {
    double s = 0.0;
    for (std::size_t i : nodes_) s += domain.node_weights[i];
    return s;
  }

  double edge_weight(const SpatialDomain& domain) const {
    double s = 0.0;
    for (std::size_t e : edges_) s += domain.edges[e].weight;
    return s;
  }

 private:
  std::vector<std::size_t> nodes_;
  std::vector<std::size_t> edges_;
  std::vector<bool> inside_;
};

inline SubdomainMask mask_union(const SpatialDomain& domain, const SubdomainMask& a,
                                const SubdomainMask& b) {
  std::vector<std::size_t> nodes = a.nodes();
  nodes.insert(nodes.end(), b.nodes().begin(), b.nodes().end());
  return SubdomainMask(domain, std::move(nodes));
}

/// Sub-domain with the masked nodes (re-indexed in increasing order) and
/// their induced edges. Kind becomes custom-graph unless the mask is full.
inline SpatialDomain restrict(const SpatialDomain& domain, const SubdomainMask& mask) {
  if (mask.empty()) throw InvalidParameter("restrict: empty mask");
  SpatialDomain out;
  out.dim = domain.dim;
  out.kind = mask.size() == domain.size() ? domain.kind : DomainKind::custom_graph;
  std::vector<std::size_t> index(domain.size(), domain.size());
  for (std::size_t k = 0; k < mask.nodes().size(); ++k) {
    const std::size_t i = mask.nodes()[k];
    index[i] = k;
    out.positions.push_back(domain.positions[i]);
    out.node_weights.push_back(domain.node_weights[i]);
  }
  for (std::size_t e : mask.edges()) {
    Edge edge = domain.edges[e];
    edge.tail = index[edge.tail];
    edge.head = index[edge.head];
    out.edges.push_back(edge);
  }
  out.total_volume = out.measure();
  return out;
}

// ---------------------------------------------------------------------------
// Topology of the induced edge graph of a mask.

enum class ComponentShape { isolated, path, cycle, other };

/// One connected component. For paths and cycles `nodes` is the traversal
/// order and `edges[k]` joins nodes[k] and nodes[k+1] (cycles: the last edge
/// closes the loop back to nodes[0]); `forward[k]` is true when the edge is
/// traversed tail -> head.
struct Component {
  ComponentShape shape = ComponentShape::isolated;
  std::vector<std::size_t> nodes;
  std::vector<std::size_t> edges;
  std::vector<bool> forward;
};

inline std::vector<Component> components(const SpatialDomain& domain, const SubdomainMask& mask) {
  const std::size_t n = domain.size();
  std::vector<std::vector<std::size_t>> incident(n);
  for (std::size_t e : mask.edges()) {
    incident[domain.edges[e].tail].push_back(e);
    incident[domain.edges[e].head].push_back(e);
  }
  std::vector<bool> seen(n, false);
  std::vector<Component> out;
  for (std::size_t start : mask.nodes()) {
    if (seen[start]) continue;
    // Gather the component by DFS.
    std::vector<std::size_t> comp_nodes, stack{start};
    std::vector<std::size_t> comp_edges;
    seen[start] = true;
    while (!stack.empty()) {
      const std::size_t v = stack.back();
      stack.pop_back();
      comp_nodes.push_back(v);
      for (std::size_t e : incident[v]) {
        comp_edges.push_back(e);
        const std::size_t w = domain.edges[e].tail == v ? domain.edges[e].head : domain.edges[e].tail;
        if (!seen[w]) {
          seen[w] = true;
          stack.push_back(w);
        }
      }
    }
    std::sort(comp_edges.begin(), comp_edges.end());
    comp_edges.erase(std::unique(comp_edges.begin(), comp_edges.end()), comp_edges.end());
    std::sort(comp_nodes.begin(), comp_nodes.end());

    Component c;
    if (comp_nodes.size() == 1) {
      c.shape = ComponentShape::isolated;
      c.nodes = comp_nodes;
      out.push_back(std::move(c));
      continue;
    }
    bool max_degree_two = true;
    std::size_t endpoint = comp_nodes.front();
    bool has_endpoint = false;
    for (std::size_t v : comp_nodes) {
      if (incident[v].size() > 2) max_degree_two = false;
      if (incident[v].size() == 1 && !has_endpoint) {
        endpoint = v;
        has_endpoint = true;
      }
    }
    if (!max_degree_two) {
      c.shape = ComponentShape::other;
      c.nodes = comp_nodes;
      c.edges = comp_edges;
      out.push_back(std::move(c));
      continue;
    }
    const bool is_cycle = comp_edges.size() == comp_nodes.size();
    c.shape = is_cycle ? ComponentShape::cycle : ComponentShape::path;
    std::size_t v = is_cycle ? comp_nodes.front() : endpoint;
    std::size_t prev_edge = static_cast<std::size_t>(-1);
    c.nodes.push_back(v);
    for (std::size_t step = 0; step < comp_edges.size(); ++step) {
      std::size_t next_edge = static_cast<std::size_t>(-1);
      // Prefer the outgoing edge for a deterministic orientation.
      for (std::size_t e : incident[v])
        if (e != prev_edge && domain.edges[e].tail == v) { next_edge = e; break; }
      if (next_edge == static_cast<std::size_t>(-1))
        for (std::size_t e : incident[v])
          if (e != prev_edge) { next_edge = e; break; }
      const Edge& ed = domain.edges[next_edge];
      const bool fwd = ed.tail == v;
      c.edges.push_back(next_edge);
      c.forward.push_back(fwd);
      v = fwd ? ed.head : ed.tail;
      prev_edge = next_edge;
      if (step + 1 < comp_edges.size()) c.nodes.push_back(v);
    }
    if (!is_cycle) c.nodes.push_back(v);
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace mvlift
