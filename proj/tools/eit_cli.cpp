// eit: command-line front end.
//
// Every command resolves its parameters (config file, then flags) into one
// JSON object, writes it as config.resolved.json in the output directory,
// and can be rerun from that file alone.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "eit/plot.hpp"
#include "eit/sweep.hpp"

using namespace eit;
namespace fs = std::filesystem;

namespace {

constexpr char kSnapshot[] = "config.resolved.json";

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string method;
    std::string mesh;
    std::string measurements;
    std::string out;
    // Command specific.
    std::string scenario;
    std::optional<int> nodes;
    std::optional<int> iters;
    std::string methods;
    std::string seeds;
    std::string input;
    std::string kind;
};

json load_config(const Flags& f, const std::string& command) {
    json j = json::object();
    if (!f.config.empty()) {
        j = io::read_json(f.config);
        if (!j.is_object()) throw ConfigError(f.config + ": config must be a JSON object");
        if (j.contains("command") && j["command"] != command)
            throw ConfigError(f.config + ": snapshot is for command '" + j["command"].get<std::string>() + "', not '" + command + "'");
    }
    j["command"] = command;
    if (f.seed) j["seed"] = *f.seed;
    if (!f.method.empty()) j["method"] = f.method;
    if (!f.mesh.empty()) j["mesh"] = f.mesh;
    if (!f.measurements.empty()) j["measurements"] = f.measurements;
    if (!f.out.empty()) j["out"] = f.out;
    if (!j.contains("out") || !j["out"].is_string() || j["out"].get<std::string>().empty()) throw ConfigError(command + ": --out is required");
    return j;
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    try {
        return j.contains(key) && !j.at(key).is_null() ? j.at(key).get<T>() : fallback;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
}

std::string require_path(const json& j, const char* key) {
    const std::string p = get_or<std::string>(j, key, "");
    if (p.empty()) throw IoError(std::string("missing input: ") + key);
    if (!fs::exists(p)) throw IoError("missing input file: " + p);
    return p;
}

template <typename T>
std::vector<T> split_list(const std::string& s, T (*parse)(const std::string&)) {
    std::vector<T> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        const std::size_t next = s.find(',', pos);
        const std::string item = s.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
        if (!item.empty()) out.push_back(parse(item));
        if (next == std::string::npos) break;
        pos = next + 1;
    }
    return out;
}

std::uint64_t parse_seed(const std::string& s) {
    try {
        std::size_t used = 0;
        const auto v = std::stoull(s, &used);
        if (used != s.size()) throw ConfigError("bad seed '" + s + "'");
        return v;
    } catch (const std::logic_error&) {
        throw ConfigError("bad seed '" + s + "'");
    }
}

std::string parse_method_name(const std::string& s) { return to_string(method_from_string(s)); }

fs::path out_dir(const json& j) { return j.at("out").get<std::string>(); }

void write_snapshot(const json& j) { io::write_json(out_dir(j) / kSnapshot, j); }

fs::path sibling(const std::string& file, const char* name) { return fs::path(file).parent_path() / name; }

// ---------------------------------------------------------------------------

int cmd_mesh(json j) {
    MeshSpec spec;
    j["nodes"] = get_or(j, "nodes", spec.target_nodes);
    j["electrodes"] = get_or(j, "electrodes", spec.n_electrodes);
    j["coverage"] = get_or(j, "coverage", spec.electrode_coverage);
    spec = {j["nodes"].get<int>(), j["electrodes"].get<int>(), j["coverage"].get<double>()};
    const Mesh m = generate_disk_mesh(spec);
    save_mesh(m, out_dir(j) / "mesh.json");
    write_snapshot(j);
    std::cout << "mesh: " << m.node_count() << " nodes, " << m.elements().size() << " elements\n";
    return 0;
}

int cmd_simulate(json j) {
    if (!j.contains("seed")) throw ConfigError("simulate: --seed is required");
    j["case"] = get_or<std::string>(j, "case", "case1");
    PhantomSpec spec = scenario(j["case"].get<std::string>());
    j["fine_nodes"] = get_or(j, "fine_nodes", spec.fine_mesh.target_nodes);
    j["coarse_nodes"] = get_or(j, "coarse_nodes", spec.coarse_mesh.target_nodes);
    j["snr_db"] = get_or(j, "snr_db", spec.snr_db);
    j["contact_impedance"] = get_or(j, "contact_impedance", 0.01);
    if (!j.contains("mesh")) j["mesh"] = "";
    spec.fine_mesh.target_nodes = j["fine_nodes"].get<int>();
    spec.coarse_mesh.target_nodes = j["coarse_nodes"].get<int>();
    spec.snr_db = j["snr_db"].get<double>();
    spec.validate();

    const std::string mesh_path = j["mesh"].get<std::string>();
    const Mesh fine = mesh_path.empty() ? generate_disk_mesh(spec.fine_mesh) : load_mesh(require_path(j, "mesh"));
    const Mesh coarse = generate_disk_mesh(spec.coarse_mesh);
    require_distinct_meshes(fine, coarse);
    const MeasurementData d = simulate_measurements(spec, fine, default_patterns(fine.electrode_count()),
                                                    ContactModel::uniform(fine.electrode_count(), j["contact_impedance"].get<double>()), j["seed"].get<std::uint64_t>());
    const fs::path out = out_dir(j);
    save_mesh(fine, out / "mesh.json");
    save_mesh(coarse, out / "inversion_mesh.json");
    io::write_json(out / "phantom.json", phantom_to_json(spec));
    io::write_json(out / "sigma_true.json", json{{"sigma", to_std(rasterize_phantom(spec, fine))}});
    save_measurements(d, out / "measurements.json");
    write_snapshot(j);
    std::cout << "simulate: " << spec.name << ", " << d.voltages.size() << " measurements on " << fine.node_count() << " nodes\n";
    return 0;
}

int cmd_recon(json j) {
    if (!j.contains("seed")) throw ConfigError("recon: --seed is required");
    const std::string measurements = require_path(j, "measurements");
    if (get_or<std::string>(j, "mesh", "").empty()) j["mesh"] = sibling(measurements, "inversion_mesh.json").string();
    if (get_or(j, "checkpoint_every", 0) > 0 && get_or<std::string>(j, "checkpoint_path", "").empty())
        j["checkpoint_path"] = (out_dir(j) / "checkpoint.bin").string();
    ReconConfig cfg = recon_config_from_json(j);
    const Mesh mesh = load_mesh(require_path(j, "mesh"));
    const MeasurementData data = load_measurements(measurements);
    json resolved = recon_config_to_json(cfg);
    resolved["command"] = "recon";
    write_snapshot(resolved);

    const ReconResult r = reconstruct(cfg, mesh, data);
    const fs::path out = out_dir(resolved);
    if (r.field) save_neural_state(*r.field, out / "neural_state.bin");
    save_recon_result(r, out / "result.json");
    std::cout << "recon: " << to_string(r.method) << ", " << r.loss_history.size() << " iterations, " << (r.notes.empty() ? "" : r.notes.back()) << "\n";
    return 0;
}

int cmd_eval(json j) {
    if (!j.contains("result") && !j.contains("input")) throw IoError("eval: --input <result.json> is required");
    if (!j.contains("result")) j["result"] = j["input"];
    j.erase("input");
    const std::string result_path = require_path(j, "result");
    ReconResult r = load_recon_result(result_path);
    const ReconConfig rc = recon_config_from_json(r.config);
    if (get_or<std::string>(j, "mesh", "").empty()) j["mesh"] = rc.mesh_path;
    if (get_or<std::string>(j, "measurements", "").empty()) j["measurements"] = rc.measurements_path;
    const std::string measurements = get_or<std::string>(j, "measurements", "");
    if (get_or<std::string>(j, "phantom", "").empty()) j["phantom"] = sibling(measurements, "phantom.json").string();
    if (get_or<std::string>(j, "eval_mesh", "").empty()) j["eval_mesh"] = sibling(measurements, "mesh.json").string();
    j["resolution"] = get_or(j, "resolution", 128);
    j["bands"] = get_or(j, "bands", 5);

    const Mesh inversion = load_mesh(require_path(j, "mesh"));
    const Mesh target = load_mesh(require_path(j, "eval_mesh"));
    const PhantomSpec spec = phantom_from_json(io::read_json(require_path(j, "phantom")));
    if (is_neural(r.method)) {
        j["neural_state"] = get_or<std::string>(j, "neural_state", sibling(result_path, "neural_state.bin").string());
        r.field = load_neural_state(require_path(j, "neural_state"), inversion);
    }
    write_snapshot(j);

    const int res = j["resolution"].get<int>();
    const RasterField recon = rasterize(target, crossmesh_evaluate(r, inversion, target), res);
    const RasterField truth = truth_raster(spec, res);
    json report = metrics_report(truth, recon, j["bands"].get<int>());
    if (recon.fallback_count > 0) report["notes"].push_back(std::to_string(recon.fallback_count) + " pixels used the nearest-element fallback");
    const fs::path out = out_dir(j);
    io::write_json(out / "report.json", report);
    const auto range = raster_range(truth);
    write_raster_figure(out / "recon", recon, range[0], range[1]);
    write_raster_figure(out / "truth", truth, range[0], range[1]);
    std::cout << "eval: psnr " << report["psnr"] << " ssim " << report["ssim"] << "\n";
    return 0;
}

std::vector<Method> resolve_methods(json& j, std::vector<std::string> fallback) {
    if (j.contains("method") && !j.contains("methods")) j["methods"] = json::array({j["method"]});
    j.erase("method");
    std::vector<Method> out;
    for (const auto& s : get_or(j, "methods", fallback)) out.push_back(method_from_string(s));
    if (out.empty()) throw ConfigError("sweep: no methods");
    json names = json::array();
    for (Method m : out) names.push_back(to_string(m));
    j["methods"] = names;
    return out;
}

SweepOptions resolve_sweep(json& j, const char* param_key, std::vector<double> default_params, int default_fine) {
    SweepOptions o;
    o.methods = resolve_methods(j, {"phync", "hybhash", "hash", "ffp", "tv"});
    if (j.contains("seed") && !j.contains("seeds")) j["seeds"] = json::array({j["seed"]});
    j.erase("seed");
    o.seeds = get_or(j, "seeds", std::vector<std::uint64_t>{1, 2, 3});
    if (o.seeds.empty()) throw ConfigError("sweep: no seeds");
    o.parameters = get_or(j, param_key, default_params);
    o.total_iters = get_or(j, "total_iters", o.total_iters);
    o.resolution = get_or(j, "resolution", o.resolution);
    o.fine_mesh.target_nodes = get_or(j, "fine_nodes", default_fine);
    o.coarse_mesh.target_nodes = get_or(j, "coarse_nodes", o.coarse_mesh.target_nodes);
    o.phantom = get_or(j, "phantom", o.phantom);
    o.recon_overrides = get_or(j, "recon", json::object());
    if (!o.recon_overrides.is_object()) throw ConfigError("sweep: 'recon' must be an object");
    j["seeds"] = o.seeds;
    j[param_key] = o.parameters;
    j["total_iters"] = o.total_iters;
    j["resolution"] = o.resolution;
    j["fine_nodes"] = o.fine_mesh.target_nodes;
    j["coarse_nodes"] = o.coarse_mesh.target_nodes;
    j["recon"] = o.recon_overrides;
    o.progress = [](const SweepRow& r) {
        std::cerr << "  " << r.method << " " << r.parameter << " seed " << r.seed << ": psnr " << r.psnr << "\n";
    };
    return o;
}

int write_sweep(const json& j, const std::vector<SweepRow>& rows, const SweepOptions& o, const char* param_name, int segments) {
    const fs::path out = out_dir(j);
    io::write_atomic(out / "sweep.csv", sweep_csv(rows, param_name));
    const json fit = sweep_fit_summary(rows, o.methods, segments);
    io::write_json(out / "fit.json", json{{"parameter", param_name}, {"segments", segments}, {"methods", fit}});
    for (const auto& [name, entry] : fit.items())
        if (!entry["fit"].is_null()) std::cout << name << " breakpoints " << entry["fit"]["breakpoints"].dump() << "\n";
    return 0;
}

int cmd_sweep_distance(json j) {
    SweepOptions o = resolve_sweep(j, "distances", {0.16, 0.20, 0.24, 0.28, 0.32, 0.36, 0.40, 0.44}, 5833);
    j.erase("phantom");
    write_snapshot(j);
    return write_sweep(j, run_distance_sweep(o), o, "distance", 3);
}

int cmd_sweep_mesh(json j) {
    SweepOptions o = resolve_sweep(j, "nodes", {484, 1145, 2000, 3154, 4400, 5833}, 8000);
    j["phantom"] = o.phantom;
    j.erase("coarse_nodes");
    write_snapshot(j);
    return write_sweep(j, run_mesh_sweep(o), o, "nodes", 2);
}

int cmd_plot(json j) {
    j["kind"] = get_or<std::string>(j, "kind", "nodal");
    j["resolution"] = get_or(j, "resolution", 128);
    const std::string kind = j["kind"].get<std::string>();
    const int res = j["resolution"].get<int>();
    const fs::path out = out_dir(j);
    const auto range_or = [&](const RasterField& r) {
        const auto own = raster_range(r);
        const auto rg = get_or(j, "range", std::vector<double>{own[0], own[1]});
        if (rg.size() != 2) throw ConfigError("plot: range needs two values");
        j["range"] = rg;
        return rg;
    };

    if (kind == "nodal" || kind == "spectrum") {
        const std::string input = require_path(j, "input");
        const ReconResult r = load_recon_result(input);
        if (get_or<std::string>(j, "mesh", "").empty()) j["mesh"] = recon_config_from_json(r.config).mesh_path;
        const Mesh mesh = load_mesh(require_path(j, "mesh"));
        if (r.sigma.size() != static_cast<Eigen::Index>(mesh.node_count())) throw ConfigError("plot: result does not match the mesh");
        const RasterField f = rasterize(mesh, r.sigma, res);
        if (kind == "nodal") {
            const auto rg = range_or(f);
            write_snapshot(j);
            write_raster_figure(out / "field", f, rg[0], rg[1]);
        } else {
            write_snapshot(j);
            write_spectrum_figure(out / "spectrum", spectrum_export(f));
        }
    } else if (kind == "truth") {
        const PhantomSpec spec = phantom_from_json(io::read_json(require_path(j, "input")));
        const RasterField f = truth_raster(spec, res);
        const auto rg = range_or(f);
        write_snapshot(j);
        write_raster_figure(out / "truth", f, rg[0], rg[1]);
    } else if (kind == "levels" || kind == "sensitivity" || kind == "analytic") {
        const Mesh mesh = load_mesh(require_path(j, "mesh"));
        std::vector<double> v;
        std::string stem = kind;
        if (kind == "levels") {
            const ReconConfig c = ReconConfig::for_method(Method::phync, 0);
            j["level_mu"] = get_or(j, "level_mu", c.level_mu);
            j["level_nu"] = get_or(j, "level_nu", c.level_nu);
            v = mesh_level_map(mesh, j["level_mu"].get<double>(), j["level_nu"].get<double>(), c.levels()).level;
        } else if (kind == "analytic") {
            for (double s : nodal_sensitivity(mesh)) v.push_back(std::log10(std::abs(s) + kSensitivityFloor));
        } else {
            if (!j.contains("seed")) throw ConfigError("plot: sensitivity needs --seed");
            j["method"] = get_or<std::string>(j, "method", "phync");
            const ReconConfig c = ReconConfig::for_method(method_from_string(j["method"].get<std::string>()), j["seed"].get<std::uint64_t>());
            v = initial_sensitivity_map(c, mesh, default_patterns(mesh.electrode_count()));
            j["center_boundary_ratio"] = center_boundary_ratio(mesh, v);
            stem += "_" + j["method"].get<std::string>();
        }
        const RasterField f = rasterize(mesh, to_eigen(v), res);
        const auto rg = range_or(f);
        write_snapshot(j);
        write_raster_figure(out / stem, f, rg[0], rg[1]);
    } else {
        throw ConfigError("plot: unknown kind '" + kind + "' (nodal, spectrum, truth, levels, sensitivity, analytic)");
    }
    std::cout << "plot: " << kind << " written to " << out.string() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Electrical impedance tomography reconstruction toolkit"};
    app.require_subcommand(1);
    Flags f;

    const auto common = [&](CLI::App* c) {
        c->add_option("--config", f.config, "JSON config or a resolved snapshot");
        c->add_option("--seed", f.seed, "Run seed");
        c->add_option("--method", f.method, "phync, ffp, hash, hybhash or tv");
        c->add_option("--mesh", f.mesh, "Mesh JSON");
        c->add_option("--measurements", f.measurements, "Measurement JSON");
        c->add_option("--out", f.out, "Output directory");
        return c;
    };
    auto* mesh = common(app.add_subcommand("mesh", "Generate a disk mesh"));
    mesh->add_option("--nodes", f.nodes, "Target node count");
    auto* simulate = common(app.add_subcommand("simulate", "Simulate measurements of a phantom on a fine mesh"));
    simulate->add_option("--case", f.scenario, "case1, case2, case3, heart_lungs or distance:<d>");
    auto* recon = common(app.add_subcommand("recon", "Reconstruct conductivity from measurements"));
    recon->add_option("--iters", f.iters, "Iterations (neural methods)");
    auto* eval = common(app.add_subcommand("eval", "Rasterize a result and score it against the phantom"));
    eval->add_option("--input", f.input, "result.json from recon");
    auto* sweep_d = common(app.add_subcommand("sweep-distance", "PSNR against the spacing of two triangles"));
    auto* sweep_m = common(app.add_subcommand("sweep-mesh", "PSNR against the inversion mesh size"));
    for (auto* c : {sweep_d, sweep_m}) {
        c->add_option("--methods", f.methods, "Comma separated methods");
        c->add_option("--seeds", f.seeds, "Comma separated seeds");
        c->add_option("--iters", f.iters, "Iterations per neural run");
    }
    auto* plot = common(app.add_subcommand("plot", "Render fields, level maps, sensitivity maps or spectra"));
    plot->add_option("--kind", f.kind, "nodal, spectrum, truth, levels, sensitivity or analytic");
    plot->add_option("--input", f.input, "result.json or phantom.json");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        CLI::App* sub = app.get_subcommands().front();
        json j = load_config(f, sub->get_name());
        if (f.nodes) j["nodes"] = *f.nodes;
        if (!f.scenario.empty()) j["case"] = f.scenario;
        if (f.iters) j["total_iters"] = *f.iters;
        if (!f.input.empty()) j["input"] = f.input;
        if (!f.kind.empty()) j["kind"] = f.kind;
        if (!f.methods.empty()) {
            json names = json::array();
            for (const auto& s : split_list<std::string>(f.methods, parse_method_name)) names.push_back(s);
            j["methods"] = names;
        }
        if (!f.seeds.empty()) j["seeds"] = split_list<std::uint64_t>(f.seeds, parse_seed);

        if (sub == mesh) return cmd_mesh(j);
        if (sub == simulate) return cmd_simulate(j);
        if (sub == recon) return cmd_recon(j);
        if (sub == eval) return cmd_eval(j);
        if (sub == sweep_d) return cmd_sweep_distance(j);
        if (sub == sweep_m) return cmd_sweep_mesh(j);
        if (sub == plot) return cmd_plot(j);
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const TopologyError& e) {
        std::cerr << "mesh error: " << e.what() << "\n";
        return 2;
    } catch (const json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
