#pragma once

// Piecewise-constant conductivity phantoms and simulated noisy measurements.

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "error.hpp"
#include "forward.hpp"
#include "io.hpp"
#include "mesh.hpp"
#include "rng.hpp"

namespace eit {

enum class ShapeKind { circle, rectangle, triangle, polygon };

inline std::string to_string(ShapeKind k) {
    switch (k) {
    case ShapeKind::circle: return "circle";
    case ShapeKind::rectangle: return "rectangle";
    case ShapeKind::triangle: return "triangle";
    case ShapeKind::polygon: return "polygon";
    }
    return "?";
}

inline ShapeKind shape_kind_from_string(const std::string& s) {
    if (s == "circle") return ShapeKind::circle;
    if (s == "rectangle") return ShapeKind::rectangle;
    if (s == "triangle") return ShapeKind::triangle;
    if (s == "polygon") return ShapeKind::polygon;
    throw ConfigError("unknown shape kind '" + s + "'");
}

/// Circle (radius), rectangle (width x height), equilateral triangle (side,
/// centred on its centroid, one vertex along +y at zero rotation) or an
/// explicit polygon. Rotation is counter-clockwise in radians.
struct Shape {
    ShapeKind kind = ShapeKind::circle;
    Point center{0.0, 0.0};
    double radius = 0.0;
    double width = 0.0;
    double height = 0.0;
    double side = 0.0;
    double rotation = 0.0;
    double value = 1.0;
    std::vector<Point> vertices; // polygon only

    static Shape circle(Point c, double r, double value) {
        Shape s;
        s.kind = ShapeKind::circle;
        s.center = c;
        s.radius = r;
        s.value = value;
        return s;
    }
    static Shape rectangle(Point c, double w, double h, double rot, double value) {
        Shape s;
        s.kind = ShapeKind::rectangle;
        s.center = c;
        s.width = w;
        s.height = h;
        s.rotation = rot;
        s.value = value;
        return s;
    }
    static Shape triangle(Point c, double side, double rot, double value) {
        Shape s;
        s.kind = ShapeKind::triangle;
        s.center = c;
        s.side = side;
        s.rotation = rot;
        s.value = value;
        return s;
    }
    static Shape polygon(std::vector<Point> v, double value) {
        Shape s;
        s.kind = ShapeKind::polygon;
        s.vertices = std::move(v);
        s.value = value;
        return s;
    }
    /// Ellipse approximated by an n-gon.
    static Shape ellipse(Point c, double a, double b, double rot, double value, int n = 48) {
        std::vector<Point> v;
        for (int k = 0; k < n; ++k) {
            const double t = 2.0 * std::numbers::pi * k / n;
            const double x = a * std::cos(t), y = b * std::sin(t);
            v.push_back({c[0] + x * std::cos(rot) - y * std::sin(rot), c[1] + x * std::sin(rot) + y * std::cos(rot)});
        }
        return polygon(std::move(v), value);
    }

    /// Corner points (empty for circles).
    std::vector<Point> corners() const {
        auto place = [&](double x, double y) {
            return Point{center[0] + x * std::cos(rotation) - y * std::sin(rotation), center[1] + x * std::sin(rotation) + y * std::cos(rotation)};
        };
        switch (kind) {
        case ShapeKind::circle: return {};
        case ShapeKind::rectangle:
            return {place(-width / 2, -height / 2), place(width / 2, -height / 2), place(width / 2, height / 2), place(-width / 2, height / 2)};
        case ShapeKind::triangle: {
            const double R = side / std::sqrt(3.0);
            std::vector<Point> v;
            for (int k = 0; k < 3; ++k) {
                const double t = std::numbers::pi / 2 + 2.0 * std::numbers::pi * k / 3;
                v.push_back(place(R * std::cos(t), R * std::sin(t)));
            }
            return v;
        }
        case ShapeKind::polygon: return vertices;
        }
        return {};
    }

    bool contains(const Point& p) const {
        if (kind == ShapeKind::circle) return distance(p, center) <= radius;
        const auto v = corners();
        // Crossing test; boundary points count as inside for convex corners.
        bool inside = false;
        for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
            if ((v[i][1] > p[1]) != (v[j][1] > p[1])) {
                const double x = v[j][0] + (p[1] - v[j][1]) * (v[i][0] - v[j][0]) / (v[i][1] - v[j][1]);
                if (p[0] < x) inside = !inside;
            }
        }
        return inside;
    }

    double area() const {
        if (kind == ShapeKind::circle) return std::numbers::pi * radius * radius;
        const auto v = corners();
        double a = 0;
        for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) a += v[j][0] * v[i][1] - v[i][0] * v[j][1];
        return std::abs(a) / 2;
    }

    void validate() const {
        if (!(value > 0.0)) throw ConfigError("shape: conductivity must be positive");
        switch (kind) {
        case ShapeKind::circle:
            if (!(radius > 0.0)) throw ConfigError("shape: circle radius must be positive");
            if (norm(center) + radius > 1.0) throw ConfigError("shape: circle leaves the unit disk");
            return;
        case ShapeKind::rectangle:
            if (!(width > 0.0) || !(height > 0.0)) throw ConfigError("shape: rectangle size must be positive");
            break;
        case ShapeKind::triangle:
            if (!(side > 0.0)) throw ConfigError("shape: triangle side must be positive");
            break;
        case ShapeKind::polygon:
            if (vertices.size() < 3) throw ConfigError("shape: polygon needs at least 3 vertices");
            break;
        }
        for (const auto& c : corners())
            if (norm(c) > 1.0) throw ConfigError("shape: " + to_string(kind) + " leaves the unit disk");
    }
};

struct PhantomSpec {
    std::string name = "custom";
    double background = 1.0;
    std::vector<Shape> shapes;
    /// Non-positive or infinite disables noise.
    double snr_db = 60.0;
    MeshSpec fine_mesh{5833, 16, 0.5};
    MeshSpec coarse_mesh{1145, 16, 0.5};

    bool noisy() const { return std::isfinite(snr_db) && snr_db > 0.0; }

    void validate() const {
        if (!(background > 0.0)) throw ConfigError("phantom: background must be positive");
        for (const auto& s : shapes) s.validate();
        fine_mesh.validate();
        coarse_mesh.validate();
    }

    double inclusion_area() const {
        double a = 0;
        for (const auto& s : shapes) a += s.area();
        return a;
    }
};

/// Nodal conductivity: later shapes override earlier ones.
inline VectorXd rasterize_phantom(const PhantomSpec& spec, const Mesh& mesh) {
    spec.validate();
    VectorXd sigma = VectorXd::Constant(static_cast<Eigen::Index>(mesh.node_count()), spec.background);
    for (std::size_t i = 0; i < mesh.node_count(); ++i)
        for (const auto& s : spec.shapes)
            if (s.contains(mesh.nodes()[i])) sigma[static_cast<Eigen::Index>(i)] = s.value;
    return sigma;
}

/// Field evaluated at arbitrary points.
inline double phantom_value(const PhantomSpec& spec, const Point& p) {
    double v = spec.background;
    for (const auto& s : spec.shapes)
        if (s.contains(p)) v = s.value;
    return v;
}

/// Forward-solves the phantom on `mesh` and adds Gaussian noise with standard
/// deviation RMS(V) * 10^(-SNR/20).
inline MeasurementData simulate_measurements(const PhantomSpec& spec, const Mesh& mesh, const PatternSet& patterns,
                                             const ContactModel& contact, std::uint64_t seed) {
    const VectorXd sigma = rasterize_phantom(spec, mesh);
    MeasurementData d;
    d.patterns = patterns;
    d.voltages_clean = solve_forward(mesh, sigma, patterns, contact).voltages;
    d.voltages = d.voltages_clean;
    double noise_std = 0.0;
    if (spec.noisy()) {
        const double rms = std::sqrt(d.voltages_clean.squaredNorm() / static_cast<double>(d.voltages_clean.size()));
        noise_std = rms * std::pow(10.0, -spec.snr_db / 20.0);
        Rng rng(seed);
        for (auto& v : d.voltages) v += noise_std * rng.normal();
    }
    d.meta = {{"phantom", spec.name},
              {"snr_db", spec.noisy() ? json(spec.snr_db) : json(nullptr)},
              {"noise_std", noise_std},
              {"seed", seed},
              {"mesh_nodes", mesh.node_count()},
              {"mesh_elements", mesh.element_count()}};
    return d;
}

/// Refuses to invert on the mesh the data was simulated on.
inline void require_distinct_meshes(const Mesh& simulation, const Mesh& inversion) {
    if (simulation.node_count() == inversion.node_count() && simulation.elements() == inversion.elements() &&
        simulation.nodes() == inversion.nodes())
        throw ConfigError("simulation and inversion meshes are identical (inverse crime)");
}

// ---------------------------------------------------------------- scenarios

inline constexpr double kInclusionValue = 2.0;

/// Two equilateral triangles of side 0.4 centred at (+-d, 0), flat sides
/// facing each other.
inline PhantomSpec distance_sweep_spec(double d) {
    if (!(d >= 0.1 && d <= 0.5)) throw ConfigError("distance sweep: d must lie in [0.1, 0.5]");
    const double side = 0.4;
    const double inradius = side / (2.0 * std::sqrt(3.0));
    if (d - inradius <= 0.0) throw ConfigError("distance sweep: triangles overlap at d = " + std::to_string(d));
    PhantomSpec s;
    s.name = "distance_" + std::to_string(d);
    s.shapes.push_back(Shape::triangle({d, 0.0}, side, -std::numbers::pi / 2, kInclusionValue));
    s.shapes.push_back(Shape::triangle({-d, 0.0}, side, std::numbers::pi / 2, kInclusionValue));
    s.validate();
    return s;
}

/// Low-contrast thorax: two elliptical lungs (0.8) and a circular heart (1.2).
inline PhantomSpec heart_lungs_spec() {
    PhantomSpec s;
    s.name = "heart_lungs";
    s.shapes.push_back(Shape::ellipse({-0.45, 0.05}, 0.28, 0.5, 0.0, 0.8));
    s.shapes.push_back(Shape::ellipse({0.45, 0.05}, 0.28, 0.5, 0.0, 0.8));
    s.shapes.push_back(Shape::circle({0.0, -0.35}, 0.2, 1.2));
    s.validate();
    return s;
}

/// Shape-combination cases 1-3.
inline PhantomSpec case_spec(int k) {
    PhantomSpec s;
    s.name = "case" + std::to_string(k);
    const double v = kInclusionValue;
    switch (k) {
    case 1:
        s.shapes = {Shape::circle({-0.4, 0.35}, 0.22, v), Shape::rectangle({0.38, 0.3}, 0.4, 0.25, 0.35, v),
                    Shape::triangle({0.0, -0.45}, 0.45, 0.0, v)};
        break;
    case 2:
        s.shapes = {Shape::circle({-0.45, -0.2}, 0.2, v), Shape::circle({0.1, 0.5}, 0.18, v),
                    Shape::rectangle({0.35, -0.3}, 0.3, 0.3, 0.0, v)};
        break;
    case 3:
        s.shapes = {Shape::triangle({-0.35, 0.3}, 0.45, 0.4, v), Shape::triangle({0.4, 0.2}, 0.4, -0.3, v),
                    Shape::rectangle({0.0, -0.45}, 0.5, 0.2, 0.0, v)};
        break;
    default: throw ConfigError("unknown case " + std::to_string(k));
    }
    s.validate();
    return s;
}

/// Named scenario: case1..case3, heart_lungs, homogeneous, distance:<d>.
inline PhantomSpec scenario(const std::string& name) {
    if (name == "case1") return case_spec(1);
    if (name == "case2") return case_spec(2);
    if (name == "case3") return case_spec(3);
    if (name == "heart_lungs") return heart_lungs_spec();
    if (name == "homogeneous") {
        PhantomSpec s;
        s.name = name;
        return s;
    }
    if (name.rfind("distance:", 0) == 0) return distance_sweep_spec(std::stod(name.substr(9)));
    throw ConfigError("unknown scenario '" + name + "'");
}

// ---------------------------------------------------------------- JSON

inline json mesh_spec_to_json(const MeshSpec& m) {
    return json{{"target_nodes", m.target_nodes}, {"n_electrodes", m.n_electrodes}, {"electrode_coverage", m.electrode_coverage}};
}

inline MeshSpec mesh_spec_from_json(const json& j, MeshSpec base = {}) {
    base.target_nodes = j.value("target_nodes", base.target_nodes);
    base.n_electrodes = j.value("n_electrodes", base.n_electrodes);
    base.electrode_coverage = j.value("electrode_coverage", base.electrode_coverage);
    base.validate();
    return base;
}

inline json shape_to_json(const Shape& s) {
    json j{{"kind", to_string(s.kind)}, {"value", s.value}};
    switch (s.kind) {
    case ShapeKind::circle: j["center"] = s.center, j["radius"] = s.radius; break;
    case ShapeKind::rectangle:
        j["center"] = s.center, j["width"] = s.width, j["height"] = s.height, j["rotation"] = s.rotation;
        break;
    case ShapeKind::triangle: j["center"] = s.center, j["side"] = s.side, j["rotation"] = s.rotation; break;
    case ShapeKind::polygon: j["vertices"] = s.vertices; break;
    }
    return j;
}

inline Shape shape_from_json(const json& j) {
    try {
        Shape s;
        s.kind = shape_kind_from_string(io::require(j, "kind").get<std::string>());
        s.value = io::require(j, "value").get<double>();
        s.center = j.value("center", Point{0.0, 0.0});
        s.radius = j.value("radius", 0.0);
        s.width = j.value("width", 0.0);
        s.height = j.value("height", 0.0);
        s.side = j.value("side", 0.0);
        s.rotation = j.value("rotation", 0.0);
        if (s.kind == ShapeKind::polygon) s.vertices = io::require(j, "vertices").get<std::vector<Point>>();
        return s;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("shape: ") + e.what());
    }
}

inline json phantom_to_json(const PhantomSpec& p) {
    json shapes = json::array();
    for (const auto& s : p.shapes) shapes.push_back(shape_to_json(s));
    return json{{"name", p.name},
                {"background", p.background},
                {"shapes", shapes},
                {"snr_db", p.noisy() ? json(p.snr_db) : json(nullptr)},
                {"fine_mesh", mesh_spec_to_json(p.fine_mesh)},
                {"coarse_mesh", mesh_spec_to_json(p.coarse_mesh)}};
}

inline PhantomSpec phantom_from_json(const json& j) {
    PhantomSpec p;
    try {
        p.name = j.value("name", p.name);
        p.background = j.value("background", p.background);
        if (j.contains("shapes"))
            for (const auto& s : j.at("shapes")) p.shapes.push_back(shape_from_json(s));
        if (j.contains("snr_db")) p.snr_db = j.at("snr_db").is_null() ? 0.0 : j.at("snr_db").get<double>();
        if (j.contains("fine_mesh")) p.fine_mesh = mesh_spec_from_json(j.at("fine_mesh"), p.fine_mesh);
        if (j.contains("coarse_mesh")) p.coarse_mesh = mesh_spec_from_json(j.at("coarse_mesh"), p.coarse_mesh);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("phantom: ") + e.what());
    }
    p.validate();
    return p;
}

} // namespace eit
