#pragma once

// Parameter sweeps over (method, parameter, seed) cells and their summary fits.

#include <algorithm>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "pipeline.hpp"
#include "plot.hpp"

namespace eit {

struct SweepRow {
    std::string method;
    double parameter = 0;
    std::uint64_t seed = 0;
    double psnr = 0;
    double ssim = 0;
    double final_loss = 0;
};

struct SweepOptions {
    std::vector<Method> methods;
    std::vector<std::uint64_t> seeds;
    std::vector<double> parameters;
    int total_iters = 1000;
    int resolution = 128;
    /// Merged over each method's preset before method and seed are applied.
    json recon_overrides = json::object();
    /// Mesh sizes used where the sweep does not vary them.
    MeshSpec fine_mesh{5833, 16, 0.5};
    MeshSpec coarse_mesh{1145, 16, 0.5};
    std::string phantom = "case1";
    std::function<void(const SweepRow&)> progress;
};

inline ReconConfig cell_config(const SweepOptions& o, Method m, std::uint64_t seed) {
    json j = recon_config_to_json(ReconConfig::for_method(m, seed));
    j["total_iters"] = o.total_iters;
    j.merge_patch(o.recon_overrides);
    j["method"] = to_string(m);
    j["seed"] = seed;
    return recon_config_from_json(j);
}

inline double median(std::vector<double> v) {
    if (v.empty()) throw DomainError("median of an empty set");
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

namespace detail {

inline std::vector<SweepRow> run_cells(const SweepOptions& o, const std::function<PhantomSpec(double)>& make_spec) {
    std::vector<SweepRow> rows;
    for (double param : o.parameters)
        for (std::uint64_t seed : o.seeds) {
            const PhantomSpec spec = make_spec(param);
            const MeasurementData data = simulate_on_fine(spec, seed);
            for (Method m : o.methods) {
                const CaseOutcome out = run_case(spec, data, cell_config(o, m, seed), o.resolution);
                SweepRow row{to_string(m), param, seed, out.psnr, out.ssim, out.result.loss_history.empty() ? 0.0 : out.result.loss_history.back()};
                if (o.progress) o.progress(row);
                rows.push_back(row);
            }
        }
    // Method-major order so the table reads one curve at a time.
    std::stable_sort(rows.begin(), rows.end(), [&](const SweepRow& a, const SweepRow& b) {
        const auto rank = [&](const std::string& s) { return std::find_if(o.methods.begin(), o.methods.end(), [&](Method m) { return to_string(m) == s; }) - o.methods.begin(); };
        return rank(a.method) < rank(b.method);
    });
    return rows;
}

} // namespace detail

/// Two equilateral triangles at +-d for every d in `parameters`.
inline std::vector<SweepRow> run_distance_sweep(const SweepOptions& o) {
    return detail::run_cells(o, [&](double d) {
        PhantomSpec s = distance_sweep_spec(d);
        s.fine_mesh = o.fine_mesh;
        s.coarse_mesh = o.coarse_mesh;
        return s;
    });
}

/// Fixed phantom; the inversion mesh takes each node count in `parameters`.
inline std::vector<SweepRow> run_mesh_sweep(const SweepOptions& o) {
    return detail::run_cells(o, [&](double nodes) {
        PhantomSpec s = scenario(o.phantom);
        s.fine_mesh = o.fine_mesh;
        s.coarse_mesh = {static_cast<int>(nodes), o.coarse_mesh.n_electrodes, o.coarse_mesh.electrode_coverage};
        return s;
    });
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows, const std::string& parameter_name) {
    std::string out = "method," + parameter_name + ",seed,psnr,ssim,final_loss\n";
    for (const auto& r : rows)
        out += r.method + "," + format_number(r.parameter) + "," + std::to_string(r.seed) + "," + format_number(r.psnr) + "," + format_number(r.ssim) + "," +
               format_number(r.final_loss) + "\n";
    return out;
}

/// Median PSNR over seeds per parameter value, for one method, in increasing parameter order.
inline std::pair<std::vector<double>, std::vector<double>> median_curve(const std::vector<SweepRow>& rows, const std::string& method) {
    std::map<double, std::vector<double>> by;
    for (const auto& r : rows)
        if (r.method == method) by[r.parameter].push_back(r.psnr);
    std::pair<std::vector<double>, std::vector<double>> c;
    for (const auto& [p, v] : by) {
        c.first.push_back(p);
        c.second.push_back(median(v));
    }
    return c;
}

/// Per-method piecewise fit of the median curve; methods with too few points get a note instead.
inline json sweep_fit_summary(const std::vector<SweepRow>& rows, const std::vector<Method>& methods, int segments) {
    json out = json::object();
    for (Method m : methods) {
        const auto [x, y] = median_curve(rows, to_string(m));
        json entry{{"parameter", x}, {"median_psnr", y}};
        try {
            entry["fit"] = piecewise_fit_to_json(piecewise_fit(x, y, segments));
        } catch (const DomainError& e) {
            entry["fit"] = nullptr;
            entry["note"] = e.what();
        }
        out[to_string(m)] = entry;
    }
    return out;
}

} // namespace eit
