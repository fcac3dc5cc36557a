#pragma once

// Simulate on a fine mesh, invert on a coarse one, evaluate on the fine one.

#include <map>
#include <memory>
#include <string>

#include "metrics.hpp"
#include "phantom.hpp"
#include "recon.hpp"

namespace eit {

/// Generated meshes cached by spec, so sweeps build each mesh once.
inline const Mesh& cached_mesh(const MeshSpec& spec) {
    static std::map<std::tuple<int, int, double>, std::unique_ptr<Mesh>> cache;
    auto& slot = cache[{spec.target_nodes, spec.n_electrodes, spec.electrode_coverage}];
    if (!slot) slot = std::make_unique<Mesh>(generate_disk_mesh(spec));
    return *slot;
}

/// Ground truth raster straight from the phantom geometry.
inline RasterField truth_raster(const PhantomSpec& spec, int resolution = 128) {
    RasterField r = rasterize_function([&](const Point& p) { return phantom_value(spec, p); }, resolution);
    r.source = "phantom " + spec.name;
    return r;
}

struct CaseOutcome {
    ReconResult result;
    VectorXd sigma_fine;
    RasterField raster;
    json metrics;
    double psnr = 0;
    double ssim = 0;
};

inline MeasurementData simulate_on_fine(const PhantomSpec& spec, std::uint64_t seed, double contact_impedance = 0.01) {
    const Mesh& fine = cached_mesh(spec.fine_mesh);
    return simulate_measurements(spec, fine, default_patterns(fine.electrode_count()), ContactModel::uniform(fine.electrode_count(), contact_impedance), seed);
}

/// Full run for one (phantom, method config) cell; data may be shared across methods.
inline CaseOutcome run_case(const PhantomSpec& spec, const MeasurementData& data, const ReconConfig& cfg, int resolution = 128) {
    const Mesh& fine = cached_mesh(spec.fine_mesh);
    const Mesh& coarse = cached_mesh(spec.coarse_mesh);
    require_distinct_meshes(fine, coarse);
    CaseOutcome out;
    out.result = reconstruct(cfg, coarse, data);
    out.sigma_fine = crossmesh_evaluate(out.result, coarse, fine);
    out.raster = rasterize(fine, out.sigma_fine, resolution);
    const RasterField truth = truth_raster(spec, resolution);
    out.metrics = metrics_report(truth, out.raster);
    out.psnr = out.metrics["psnr"].get<double>();
    out.ssim = out.metrics["ssim"].get<double>();
    return out;
}

} // namespace eit
