#pragma once

// Triangulated unit-disk meshes with boundary electrodes.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"
#include "io.hpp"

namespace eit {

using Point = std::array<double, 2>;
using Triangle = std::array<int, 3>;
using Edge = std::array<int, 2>;

struct Electrode {
    std::vector<Edge> edges;
};

inline double norm(const Point& p) { return std::hypot(p[0], p[1]); }

inline double signed_area(const Point& a, const Point& b, const Point& c) {
    return 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]));
}

inline double distance(const Point& a, const Point& b) { return std::hypot(a[0] - b[0], a[1] - b[1]); }

/// Immutable triangulation of the closed unit disk. Construct through
/// make_mesh(), which validates the invariants below and orients every
/// element counter-clockwise:
///  - all nodes satisfy |x| <= 1 + 1e-9,
///  - every element has strictly positive signed area,
///  - electrode edges are pairwise disjoint boundary edges.
class Mesh {
public:
    Mesh() = default;

    const std::vector<Point>& nodes() const { return nodes_; }
    const std::vector<Triangle>& elements() const { return elements_; }
    const std::vector<Electrode>& electrodes() const { return electrodes_; }
    const std::vector<int>& boundary_nodes() const { return boundary_nodes_; }
    /// Edges that belong to exactly one element.
    const std::vector<Edge>& boundary_edges() const { return boundary_edges_; }

    std::size_t node_count() const { return nodes_.size(); }
    std::size_t element_count() const { return elements_.size(); }
    int electrode_count() const { return static_cast<int>(electrodes_.size()); }

    double element_area(std::size_t e) const {
        const auto& t = elements_[e];
        return signed_area(nodes_[t[0]], nodes_[t[1]], nodes_[t[2]]);
    }

    friend Mesh make_mesh(std::vector<Point>, std::vector<Triangle>, std::vector<Electrode>);

private:
    std::vector<Point> nodes_;
    std::vector<Triangle> elements_;
    std::vector<Electrode> electrodes_;
    std::vector<int> boundary_nodes_;
    std::vector<Edge> boundary_edges_;
};

namespace detail {

inline Edge sorted_edge(int a, int b) { return a < b ? Edge{a, b} : Edge{b, a}; }

inline std::map<Edge, int> edge_use_counts(const std::vector<Triangle>& elements) {
    std::map<Edge, int> uses;
    for (const auto& t : elements)
        for (int k = 0; k < 3; ++k) ++uses[sorted_edge(t[k], t[(k + 1) % 3])];
    return uses;
}

} // namespace detail

/// Validates and finalizes a mesh. Clockwise elements are reoriented;
/// degenerate elements, out-of-range indices, nodes outside the disk, and
/// electrode edges that are not disjoint boundary edges raise TopologyError.
inline Mesh make_mesh(std::vector<Point> nodes, std::vector<Triangle> elements,
                      std::vector<Electrode> electrodes) {
    const int n = static_cast<int>(nodes.size());
    if (n < 3) throw TopologyError("mesh needs at least 3 nodes");
    if (elements.empty()) throw TopologyError("mesh has no elements");
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (!std::isfinite(nodes[i][0]) || !std::isfinite(nodes[i][1]))
            throw TopologyError("node " + std::to_string(i) + " has non-finite coordinates");
        if (norm(nodes[i]) > 1.0 + 1e-9)
            throw TopologyError("node " + std::to_string(i) + " lies outside the unit disk");
    }
    for (std::size_t e = 0; e < elements.size(); ++e) {
        auto& t = elements[e];
        for (int v : t)
            if (v < 0 || v >= n)
                throw TopologyError("element " + std::to_string(e) + " references node " + std::to_string(v) +
                                    " out of range");
        if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2])
            throw TopologyError("element " + std::to_string(e) + " repeats a node");
        const double a = signed_area(nodes[t[0]], nodes[t[1]], nodes[t[2]]);
        if (a == 0.0) throw TopologyError("element " + std::to_string(e) + " is degenerate");
        if (a < 0.0) std::swap(t[1], t[2]);
    }

    const auto uses = detail::edge_use_counts(elements);
    std::vector<Edge> boundary_edges;
    std::set<int> boundary;
    for (const auto& [edge, count] : uses) {
        if (count > 2) throw TopologyError("non-manifold edge shared by more than two elements");
        if (count == 1) {
            boundary_edges.push_back(edge);
            boundary.insert(edge[0]);
            boundary.insert(edge[1]);
        }
    }

    std::set<Edge> seen;
    for (std::size_t k = 0; k < electrodes.size(); ++k) {
        if (electrodes[k].edges.empty()) throw TopologyError("electrode " + std::to_string(k) + " has no edges");
        for (const auto& e : electrodes[k].edges) {
            if (e[0] < 0 || e[0] >= n || e[1] < 0 || e[1] >= n)
                throw TopologyError("electrode " + std::to_string(k) + " edge index out of range");
            const Edge key = detail::sorted_edge(e[0], e[1]);
            auto it = uses.find(key);
            if (it == uses.end() || it->second != 1)
                throw TopologyError("electrode " + std::to_string(k) + " edge is not a boundary edge");
            if (norm(nodes[e[0]]) < 1.0 - 1e-6 || norm(nodes[e[1]]) < 1.0 - 1e-6)
                throw TopologyError("electrode " + std::to_string(k) + " edge is not on the unit circle");
            if (!seen.insert(key).second)
                throw TopologyError("electrode edges overlap at electrode " + std::to_string(k));
        }
    }

    Mesh m;
    m.nodes_ = std::move(nodes);
    m.elements_ = std::move(elements);
    m.electrodes_ = std::move(electrodes);
    m.boundary_nodes_.assign(boundary.begin(), boundary.end());
    m.boundary_edges_ = std::move(boundary_edges);
    return m;
}

struct MeshSpec {
    int target_nodes = 1145;
    int n_electrodes = 16;
    /// Fraction of the boundary arc covered by metal.
    double electrode_coverage = 0.5;

    void validate() const {
        if (n_electrodes < 4) throw ConfigError("mesh: n_electrodes must be >= 4");
        if (!(electrode_coverage > 0.0 && electrode_coverage < 1.0))
            throw ConfigError("mesh: electrode_coverage must lie in (0, 1)");
        if (target_nodes < 3 * n_electrodes)
            throw ConfigError("mesh: target_nodes " + std::to_string(target_nodes) +
                              " is too small to place " + std::to_string(n_electrodes) + " electrodes (need >= " +
                              std::to_string(3 * n_electrodes) + ")");
    }
};

namespace detail {

struct RingLayout {
    int rings = 0;          // boundary ring index; ring j has radius j / rings
    int per_electrode = 0;  // boundary intervals under one electrode
    int per_gap = 0;        // boundary intervals in one gap
    std::vector<int> counts; // node count of rings 1..rings-1 (index j-1)

    int boundary_count(int n_electrodes) const { return n_electrodes * (per_electrode + per_gap); }
    int total(int n_electrodes) const {
        int s = 1 + boundary_count(n_electrodes);
        for (int c : counts) s += c;
        return s;
    }
};

inline RingLayout ring_layout(int rings, const MeshSpec& spec) {
    RingLayout lay;
    lay.rings = rings;
    const int period = std::max(2, static_cast<int>(std::lround(2.0 * std::numbers::pi * rings / spec.n_electrodes)));
    lay.per_electrode = std::max(1, static_cast<int>(std::lround(period * spec.electrode_coverage)));
    lay.per_gap = std::max(1, period - lay.per_electrode);
    const double boundary = lay.boundary_count(spec.n_electrodes);
    for (int j = 1; j < rings; ++j)
        lay.counts.push_back(std::max(3, static_cast<int>(std::lround(boundary * j / rings))));
    return lay;
}

/// Triangulates the annulus between two concentric rings whose node angles
/// are sorted ascending in [0, 2pi). Each step advances the ring whose next
/// node comes first in angle.
inline void zip_rings(const std::vector<int>& inner, const std::vector<double>& inner_angle,
                      const std::vector<int>& outer, const std::vector<double>& outer_angle,
                      std::vector<Triangle>& out) {
    const int m = static_cast<int>(inner.size());
    const int n = static_cast<int>(outer.size());
    const double two_pi = 2.0 * std::numbers::pi;
    const double a0 = inner_angle[0];

    // Start at the outer node angularly closest to inner[0], unwrapped near a0.
    int j0 = 0;
    double best = std::numeric_limits<double>::max();
    for (int j = 0; j < n; ++j) {
        double d = std::remainder(outer_angle[j] - a0, two_pi);
        if (std::abs(d) < best) {
            best = std::abs(d);
            j0 = j;
        }
    }
    auto forward_gap = [two_pi](double from, double to) {
        double d = std::fmod(to - from, two_pi);
        return d < 0 ? d + two_pi : d;
    };
    // Unwrapped angles: A[m] closes the inner loop, B[n] the outer one.
    std::vector<double> A(m + 1), B(n + 1);
    for (int i = 0; i < m; ++i) A[i] = inner_angle[i];
    A[m] = a0 + two_pi;
    B[0] = a0 + std::remainder(outer_angle[j0] - a0, two_pi);
    for (int j = 1; j < n; ++j)
        B[j] = B[j - 1] + forward_gap(outer_angle[(j0 + j - 1) % n], outer_angle[(j0 + j) % n]);
    B[n] = B[0] + two_pi;
    auto in_node = [&](int i) { return inner[i % m]; };
    auto out_node = [&](int j) { return outer[(j0 + j) % n]; };

    int i = 0, j = 0;
    while (i < m || j < n) {
        bool advance_outer;
        if (i == m) advance_outer = true;
        else if (j == n) advance_outer = false;
        else advance_outer = B[j + 1] < A[i + 1];
        if (advance_outer) {
            out.push_back({in_node(i), out_node(j), out_node(j + 1)});
            ++j;
        } else {
            out.push_back({in_node(i), out_node(j), in_node(i + 1)});
            ++i;
        }
    }
}

inline double wrap_angle(double a) {
    const double two_pi = 2.0 * std::numbers::pi;
    a = std::fmod(a, two_pi);
    if (a < 0) a += two_pi;
    if (a >= two_pi) a -= two_pi;
    return a;
}

} // namespace detail

/// Concentric-ring mesh of the unit disk. Ring j has radius j/R and a node
/// count proportional to its radius; the boundary ring places electrode k
/// centred at 2*pi*k/n_electrodes. Nodes are ordered boundary first
/// (counter-clockwise from angle 0), then interior rings from the outside in,
/// with the centre node last.
inline Mesh generate_disk_mesh(const MeshSpec& spec) {
    spec.validate();

    int best_rings = 2;
    int best_err = std::numeric_limits<int>::max();
    for (int rings = 2; rings <= 400; ++rings) {
        const auto lay = detail::ring_layout(rings, spec);
        const int err = std::abs(lay.total(spec.n_electrodes) - spec.target_nodes);
        if (err < best_err) {
            best_err = err;
            best_rings = rings;
        }
        if (lay.total(spec.n_electrodes) > 2 * spec.target_nodes) break;
    }
    const auto lay = detail::ring_layout(best_rings, spec);
    const int R = lay.rings;
    const int ne = spec.n_electrodes;
    const double two_pi = 2.0 * std::numbers::pi;
    const double period = two_pi / ne;
    const double width = spec.electrode_coverage * period;
    const double gap = period - width;

    // Boundary angles, tagged with the electrode whose edge starts there.
    struct BNode {
        double angle;
        int electrode; // -1 if the edge starting here is a gap edge
    };
    std::vector<BNode> bnodes;
    for (int k = 0; k < ne; ++k) {
        const double start = k * period - 0.5 * width;
        for (int i = 0; i < lay.per_electrode; ++i)
            bnodes.push_back({detail::wrap_angle(start + width * i / lay.per_electrode), k});
        for (int i = 0; i < lay.per_gap; ++i)
            bnodes.push_back({detail::wrap_angle(start + width + gap * i / lay.per_gap), -1});
    }
    std::sort(bnodes.begin(), bnodes.end(), [](const BNode& a, const BNode& b) { return a.angle < b.angle; });

    std::vector<Point> nodes;
    std::vector<std::vector<int>> ring_nodes(R + 1);
    std::vector<std::vector<double>> ring_angles(R + 1);
    for (const auto& b : bnodes) {
        ring_nodes[R].push_back(static_cast<int>(nodes.size()));
        ring_angles[R].push_back(b.angle);
        nodes.push_back({std::cos(b.angle), std::sin(b.angle)});
    }
    for (int j = R - 1; j >= 1; --j) {
        const int count = lay.counts[j - 1];
        const double r = static_cast<double>(j) / R;
        const double offset = (j % 2 == 1) ? 0.5 * two_pi / count : 0.0;
        for (int i = 0; i < count; ++i) {
            const double a = detail::wrap_angle(offset + two_pi * i / count);
            ring_angles[j].push_back(a);
        }
        std::sort(ring_angles[j].begin(), ring_angles[j].end());
        for (double a : ring_angles[j]) {
            ring_nodes[j].push_back(static_cast<int>(nodes.size()));
            nodes.push_back({r * std::cos(a), r * std::sin(a)});
        }
    }
    const int centre = static_cast<int>(nodes.size());
    nodes.push_back({0.0, 0.0});

    std::vector<Triangle> elements;
    const auto& ring1 = ring_nodes[1];
    for (std::size_t i = 0; i < ring1.size(); ++i)
        elements.push_back({centre, ring1[i], ring1[(i + 1) % ring1.size()]});
    for (int j = 1; j < R; ++j)
        detail::zip_rings(ring_nodes[j], ring_angles[j], ring_nodes[j + 1], ring_angles[j + 1], elements);

    std::vector<Electrode> electrodes(ne);
    const int nb = static_cast<int>(bnodes.size());
    for (int i = 0; i < nb; ++i)
        if (bnodes[i].electrode >= 0)
            electrodes[bnodes[i].electrode].edges.push_back({ring_nodes[R][i], ring_nodes[R][(i + 1) % nb]});

    return make_mesh(std::move(nodes), std::move(elements), std::move(electrodes));
}

/// Mean area of the elements incident to each node, min-max normalized to
/// [0, 1]. A constant vector (up to rounding, relative spread <= 1e-12) maps
/// to 0.5.
inline std::vector<double> node_sparsity(const Mesh& mesh) {
    const std::size_t n = mesh.node_count();
    std::vector<double> sum(n, 0.0);
    std::vector<int> count(n, 0);
    for (std::size_t e = 0; e < mesh.element_count(); ++e) {
        const double a = mesh.element_area(e);
        for (int v : mesh.elements()[e]) {
            sum[v] += a;
            ++count[v];
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (count[i] == 0) throw TopologyError("node " + std::to_string(i) + " has no incident element");
        sum[i] /= count[i];
    }
    const auto [lo, hi] = std::minmax_element(sum.begin(), sum.end());
    const double mn = *lo, mx = *hi;
    std::vector<double> h(n, 0.5);
    if (mx - mn > 1e-12 * std::abs(mx))
        for (std::size_t i = 0; i < n; ++i) h[i] = (sum[i] - mn) / (mx - mn);
    return h;
}

inline double total_area(const Mesh& mesh) {
    double s = 0.0;
    for (std::size_t e = 0; e < mesh.element_count(); ++e) s += mesh.element_area(e);
    return s;
}

inline double max_element_diameter(const Mesh& mesh) {
    double d = 0.0;
    const auto& x = mesh.nodes();
    for (const auto& t : mesh.elements())
        d = std::max({d, distance(x[t[0]], x[t[1]]), distance(x[t[1]], x[t[2]]), distance(x[t[2]], x[t[0]])});
    return d;
}

/// Arc length covered by electrodes, summed over electrodes.
inline double electrode_arc_length(const Mesh& mesh) {
    double s = 0.0;
    for (const auto& el : mesh.electrodes())
        for (const auto& e : el.edges) {
            const auto& a = mesh.nodes()[e[0]];
            const auto& b = mesh.nodes()[e[1]];
            s += std::abs(std::remainder(std::atan2(b[1], b[0]) - std::atan2(a[1], a[0]), 2.0 * std::numbers::pi));
        }
    return s;
}

// ---------------------------------------------------------------------------
// JSON: {"nodes": [[x,y],...], "elements": [[i,j,k],...], "electrodes": [{"edges": [[a,b],...]},...]}

inline json mesh_to_json(const Mesh& mesh) {
    json j;
    j["nodes"] = mesh.nodes();
    j["elements"] = mesh.elements();
    json els = json::array();
    for (const auto& e : mesh.electrodes()) els.push_back({{"edges", e.edges}});
    j["electrodes"] = els;
    return j;
}

inline Mesh mesh_from_json(const json& j) {
    std::vector<Point> nodes;
    std::vector<Triangle> elements;
    std::vector<Electrode> electrodes;
    try {
        nodes = io::require(j, "nodes").get<std::vector<Point>>();
        // Indices are read as signed 64-bit so negative or huge values reach
        // the topology check instead of wrapping.
        for (const auto& t : io::require(j, "elements")) {
            const auto v = t.get<std::array<long long, 3>>();
            Triangle tri;
            for (int k = 0; k < 3; ++k) {
                if (v[k] < 0 || v[k] > std::numeric_limits<int>::max())
                    throw TopologyError("element references node index out of range");
                tri[k] = static_cast<int>(v[k]);
            }
            elements.push_back(tri);
        }
        for (const auto& e : io::require(j, "electrodes")) electrodes.push_back({io::require(e, "edges").get<std::vector<Edge>>()});
    } catch (const json::exception& e) {
        throw IoError(std::string("mesh: malformed file: ") + e.what());
    }
    return make_mesh(std::move(nodes), std::move(elements), std::move(electrodes));
}

inline void save_mesh(const Mesh& mesh, const std::filesystem::path& path) {
    io::write_json(path, mesh_to_json(mesh));
}

inline Mesh load_mesh(const std::filesystem::path& path) { return mesh_from_json(io::read_json(path)); }

} // namespace eit
