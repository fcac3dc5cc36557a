#pragma once

// Reconstruction drivers: neural-field training (phync, ffp, hash, hybhash)
// against boundary voltages, and a smoothed-TV Gauss-Newton baseline.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "encoding.hpp"
#include "error.hpp"
#include "forward.hpp"
#include "io.hpp"
#include "metrics.hpp"
#include "network.hpp"
#include "optim.hpp"
#include "rng.hpp"
#include "sensitivity.hpp"

namespace eit {

enum class Method { phync, ffp, hash, hybhash, tv };

inline std::string to_string(Method m) {
    switch (m) {
    case Method::phync: return "phync";
    case Method::ffp: return "ffp";
    case Method::hash: return "hash";
    case Method::hybhash: return "hybhash";
    case Method::tv: return "tv";
    }
    return "?";
}

inline Method method_from_string(const std::string& s) {
    for (Method m : {Method::phync, Method::ffp, Method::hash, Method::hybhash, Method::tv})
        if (to_string(m) == s) return m;
    throw ConfigError("unknown method '" + s + "' (expected phync, ffp, hash, hybhash or tv)");
}

inline bool is_neural(Method m) { return m != Method::tv; }

inline EncoderConfig encoder_preset(Method m) {
    switch (m) {
    case Method::phync: return EncoderConfig::phync();
    case Method::ffp: return EncoderConfig::ffp();
    case Method::hash: return EncoderConfig::hash_grid();
    case Method::hybhash: return EncoderConfig::hybhash();
    case Method::tv: break;
    }
    throw ConfigError("tv has no encoder");
}

struct TvConfig {
    double alpha = 1e-3;
    double beta = 1e-4;
    int max_iters = 30;
    /// Initial Levenberg damping, relative to the mean Hessian diagonal.
    double lambda0 = 1e-2;
    double sigma_min = 1e-3;
    int max_line_search = 20;
    double armijo = 1e-4;

    void validate() const {
        if (!(alpha >= 0.0) || !(beta > 0.0)) throw ConfigError("tv: need alpha >= 0 and beta > 0");
        if (max_iters < 1 || max_line_search < 1) throw ConfigError("tv: iteration limits must be >= 1");
        if (!(lambda0 >= 0.0) || !(sigma_min > 0.0)) throw ConfigError("tv: need lambda0 >= 0 and sigma_min > 0");
        if (!(armijo > 0.0 && armijo < 1.0)) throw ConfigError("tv: armijo constant must lie in (0, 1)");
    }
};

struct ReconConfig {
    Method method = Method::phync;
    std::uint64_t seed = 0;
    int total_iters = 1000;
    EncoderConfig encoder = EncoderConfig::phync();
    MlpConfig mlp;
    AdamWConfig adamw;
    FreqSchedule schedule;
    double level_mu = -1.0;
    double level_nu = 1.0;
    /// Iterations between Jacobian refreshes; 0 picks 1 up to 1500 nodes and 5 above.
    int jacobian_reuse = 0;
    /// Optional smoothed-TV penalty added to the neural loss.
    double neural_tv_weight = 0.0;
    double contact_impedance = 0.01;
    TvConfig tv;
    /// Checkpoint cadence in iterations (0 = never) and target file.
    int checkpoint_every = 0;
    std::string checkpoint_path;
    std::string resume_from;
    std::string mesh_path;
    std::string measurements_path;
    std::string out_path;

    static ReconConfig for_method(Method m, std::uint64_t seed) {
        ReconConfig c;
        c.method = m;
        c.seed = seed;
        if (is_neural(m)) c.encoder = encoder_preset(m);
        return c;
    }

    int levels() const {
        if (encoder.mipmap) return encoder.mipmap->levels;
        if (encoder.fourier) return encoder.fourier->levels;
        return 1;
    }

    int reuse_for(std::size_t nodes) const {
        if (jacobian_reuse > 0) return jacobian_reuse;
        return nodes <= 1500 ? 1 : 5;
    }

    void validate() const {
        if (total_iters < 1) throw ConfigError("recon: total_iters must be >= 1");
        if (jacobian_reuse < 0) throw ConfigError("recon: jacobian_reuse must be >= 0");
        if (!(contact_impedance > 0.0)) throw ConfigError("recon: contact_impedance must be positive");
        if (!(neural_tv_weight >= 0.0)) throw ConfigError("recon: neural_tv_weight must be >= 0");
        if (checkpoint_every < 0) throw ConfigError("recon: checkpoint_every must be >= 0");
        if (checkpoint_every > 0 && checkpoint_path.empty()) throw ConfigError("recon: checkpoint_every needs checkpoint_path");
        if (is_neural(method)) {
            encoder.validate();
            mlp.validate();
            adamw.validate();
            schedule.validate();
        } else {
            tv.validate();
        }
    }
};

inline json recon_config_to_json(const ReconConfig& c) {
    json j;
    j["method"] = to_string(c.method);
    j["seed"] = c.seed;
    j["total_iters"] = c.total_iters;
    j["encoder"] = is_neural(c.method) ? encoder_config_to_json(c.encoder) : json(nullptr);
    j["mlp"] = json{{"hidden", c.mlp.hidden}, {"c_out", c.mlp.c_out}, {"output_gain", c.mlp.output_gain}};
    j["adamw"] = adamw_config_to_json(c.adamw);
    j["schedule"] = schedule_to_json(c.schedule);
    j["level_mu"] = c.level_mu;
    j["level_nu"] = c.level_nu;
    j["jacobian_reuse"] = c.jacobian_reuse;
    j["neural_tv_weight"] = c.neural_tv_weight;
    j["contact_impedance"] = c.contact_impedance;
    j["tv"] = json{{"alpha", c.tv.alpha},     {"beta", c.tv.beta},           {"max_iters", c.tv.max_iters},
                   {"lambda0", c.tv.lambda0}, {"sigma_min", c.tv.sigma_min}, {"max_line_search", c.tv.max_line_search},
                   {"armijo", c.tv.armijo}};
    j["checkpoint_every"] = c.checkpoint_every;
    j["checkpoint_path"] = c.checkpoint_path;
    j["resume_from"] = c.resume_from;
    j["mesh"] = c.mesh_path;
    j["measurements"] = c.measurements_path;
    j["out"] = c.out_path;
    return j;
}

/// Parses a run config. "seed" is mandatory; everything else defaults, with
/// the encoder starting from the method's preset.
inline ReconConfig recon_config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("recon config must be a JSON object");
    if (!j.contains("seed") || j.at("seed").is_null()) throw ConfigError("recon config: seed is mandatory");
    try {
        ReconConfig c = ReconConfig::for_method(method_from_string(j.value("method", std::string("phync"))), j.at("seed").get<std::uint64_t>());
        c.total_iters = j.value("total_iters", c.total_iters);
        if (is_neural(c.method) && j.contains("encoder") && !j.at("encoder").is_null())
            c.encoder = encoder_config_from_json(j.at("encoder"), c.encoder);
        if (j.contains("mlp")) {
            const auto& m = j.at("mlp");
            c.mlp.hidden = m.value("hidden", c.mlp.hidden);
            c.mlp.c_out = m.value("c_out", c.mlp.c_out);
            c.mlp.output_gain = m.value("output_gain", c.mlp.output_gain);
        }
        if (j.contains("adamw")) {
            const auto& a = j.at("adamw");
            c.adamw.beta1 = a.value("beta1", c.adamw.beta1);
            c.adamw.beta2 = a.value("beta2", c.adamw.beta2);
            c.adamw.eps = a.value("eps", c.adamw.eps);
            c.adamw.weight_decay = a.value("weight_decay", c.adamw.weight_decay);
            c.adamw.lr_mlp = a.value("lr_mlp", c.adamw.lr_mlp);
            c.adamw.lr_features = a.value("lr_features", c.adamw.lr_features);
            c.adamw.clip_norm = a.value("clip_norm", c.adamw.clip_norm);
        }
        if (j.contains("schedule")) {
            const auto& s = j.at("schedule");
            c.schedule.s_min = s.value("s_min", c.schedule.s_min);
            c.schedule.s_max = s.value("s_max", c.schedule.s_max);
            c.schedule.k = s.value("k", c.schedule.k);
            c.schedule.s_th = s.value("s_th", c.schedule.s_th);
            c.schedule.T_resample = s.value("T_resample", c.schedule.T_resample);
        }
        c.level_mu = j.value("level_mu", c.level_mu);
        c.level_nu = j.value("level_nu", c.level_nu);
        c.jacobian_reuse = j.value("jacobian_reuse", c.jacobian_reuse);
        c.neural_tv_weight = j.value("neural_tv_weight", c.neural_tv_weight);
        c.contact_impedance = j.value("contact_impedance", c.contact_impedance);
        if (j.contains("tv")) {
            const auto& t = j.at("tv");
            c.tv.alpha = t.value("alpha", c.tv.alpha);
            c.tv.beta = t.value("beta", c.tv.beta);
            c.tv.max_iters = t.value("max_iters", c.tv.max_iters);
            c.tv.lambda0 = t.value("lambda0", c.tv.lambda0);
            c.tv.sigma_min = t.value("sigma_min", c.tv.sigma_min);
            c.tv.max_line_search = t.value("max_line_search", c.tv.max_line_search);
            c.tv.armijo = t.value("armijo", c.tv.armijo);
        }
        c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
        c.checkpoint_path = j.value("checkpoint_path", c.checkpoint_path);
        c.resume_from = j.value("resume_from", c.resume_from);
        c.mesh_path = j.value("mesh", c.mesh_path);
        c.measurements_path = j.value("measurements", c.measurements_path);
        c.out_path = j.value("out", c.out_path);
        c.validate();
        return c;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("recon config: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Neural field

/// Encoder + MLP with the level assignment of its method.
class NeuralField {
public:
    explicit NeuralField(const ReconConfig& cfg) : cfg_(cfg), encoder_(make_encoder(cfg)), mlp_(make_mlp(cfg, encoder_.dim())) {}

    const ReconConfig& config() const { return cfg_; }
    FieldEncoder& encoder() { return encoder_; }
    const FieldEncoder& encoder() const { return encoder_; }
    Mlp& mlp() { return mlp_; }
    const Mlp& mlp() const { return mlp_; }

    /// Fixes the level map to the inversion mesh. Other meshes then get
    /// levels from the analytic sensitivity at their own nodes, with the
    /// sparsity interpolated from the inversion mesh and the same min-max
    /// normalisation, so a level depends on position only.
    void bind(const Mesh& inversion) {
        ref_mesh_ = std::make_shared<const Mesh>(inversion);
        if (cfg_.method == Method::phync) ref_map_ = mesh_level_map(inversion, cfg_.level_mu, cfg_.level_nu, cfg_.levels());
    }

    bool bound() const { return ref_mesh_ != nullptr; }
    const LevelMap& level_map() const { return ref_map_; }

    /// Level map levels for phync, level 0 for every other method.
    std::vector<double> levels(const Mesh& mesh) const {
        if (cfg_.method != Method::phync) return std::vector<double>(mesh.node_count(), 0.0);
        if (!ref_mesh_) return mesh_level_map(mesh, cfg_.level_mu, cfg_.level_nu, cfg_.levels()).level;
        if (mesh.nodes() == ref_mesh_->nodes() && mesh.elements() == ref_mesh_->elements()) return ref_map_.level;
        const VectorXd H = interpolate_nodal(*ref_mesh_, to_eigen(ref_map_.H), mesh.nodes());
        std::vector<double> out(mesh.node_count());
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = level_from_raw(ref_map_, level_raw_score(sensitivity_at(mesh.nodes()[i]), H[static_cast<Eigen::Index>(i)], cfg_.level_mu, cfg_.level_nu));
        return out;
    }

    VectorXd evaluate(const std::vector<Point>& pts, const std::vector<double>& levels) const {
        MatrixXd X;
        encoder_.encode(encoder_.prepare(pts, levels), X);
        return mlp_.forward(X);
    }

    VectorXd evaluate(const Mesh& mesh) const { return evaluate(mesh.nodes(), levels(mesh)); }

    bool uses_schedule() const { return encoder_.has_fourier(); }

    void save(io::BinaryWriter& w) const {
        encoder_.save(w);
        mlp_.save(w);
    }

    void load(io::BinaryReader& r) {
        encoder_.load(r);
        mlp_.load(r);
    }

private:
    // The encoder and MLP draw their seeds from one stream keyed by the run seed.
    static FieldEncoder make_encoder(const ReconConfig& cfg) {
        if (!is_neural(cfg.method)) throw ConfigError("neural field: method tv has no neural state");
        Rng rng(cfg.seed);
        return FieldEncoder(cfg.encoder, rng.next_u64());
    }

    static Mlp make_mlp(const ReconConfig& cfg, int dim) {
        Rng rng(cfg.seed);
        rng.next_u64();
        MlpConfig m = cfg.mlp;
        m.input_dim = dim;
        return Mlp(m, rng.next_u64());
    }

    ReconConfig cfg_;
    FieldEncoder encoder_;
    Mlp mlp_;
    std::shared_ptr<const Mesh> ref_mesh_;
    LevelMap ref_map_;
};

struct ReconResult {
    Method method = Method::phync;
    VectorXd sigma;
    /// Mean squared voltage residual per iteration.
    std::vector<double> loss_history;
    /// Full objective per accepted step (TV only).
    std::vector<double> objective_history;
    std::uint64_t seed = 0;
    json config;
    double wall_time = 0.0;
    std::vector<std::string> notes;
    std::shared_ptr<NeuralField> field;
};

inline json recon_result_to_json(const ReconResult& r) {
    json j;
    j["method"] = to_string(r.method);
    j["sigma"] = to_std(r.sigma);
    j["loss_history"] = r.loss_history;
    j["seed"] = r.seed;
    j["config"] = r.config;
    if (!r.objective_history.empty()) j["objective_history"] = r.objective_history;
    j["notes"] = r.notes;
    return j;
}

inline ReconResult recon_result_from_json(const json& j) {
    ReconResult r;
    try {
        r.method = method_from_string(io::require(j, "method").get<std::string>());
        r.sigma = to_eigen(io::to_vector<double>(io::require(j, "sigma"), "sigma"));
        r.loss_history = io::to_vector<double>(io::require(j, "loss_history"), "loss_history");
        r.seed = io::require(j, "seed").get<std::uint64_t>();
        r.config = io::require(j, "config");
        if (j.contains("objective_history")) r.objective_history = io::to_vector<double>(j.at("objective_history"), "objective_history");
        if (j.contains("notes")) r.notes = j.at("notes").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw IoError(std::string("recon result: ") + e.what());
    }
    return r;
}

inline void save_recon_result(const ReconResult& r, const std::filesystem::path& path) { io::write_json(path, recon_result_to_json(r)); }
inline ReconResult load_recon_result(const std::filesystem::path& path) { return recon_result_from_json(io::read_json(path)); }

// ---------------------------------------------------------------------------
// Smoothed total variation over element adjacency

/// R(sigma) = sum_e w_e sqrt((D sigma)_e^2 + beta^2), where row e of D is the
/// difference of the two element means sharing edge e and w_e is the shared
/// edge length.
struct TvOperator {
    Eigen::SparseMatrix<double, Eigen::RowMajor> D;
    VectorXd w;

    static TvOperator build(const Mesh& mesh) {
        std::map<Edge, std::vector<int>> owners;
        const auto& el = mesh.elements();
        for (std::size_t e = 0; e < el.size(); ++e)
            for (int k = 0; k < 3; ++k) owners[detail::sorted_edge(el[e][k], el[e][(k + 1) % 3])].push_back(static_cast<int>(e));
        std::vector<Eigen::Triplet<double>> trip;
        std::vector<double> w;
        int row = 0;
        for (const auto& [edge, es] : owners) {
            if (es.size() != 2) continue;
            for (int k = 0; k < 3; ++k) {
                trip.emplace_back(row, el[es[0]][k], 1.0 / 3.0);
                trip.emplace_back(row, el[es[1]][k], -1.0 / 3.0);
            }
            w.push_back(distance(mesh.nodes()[edge[0]], mesh.nodes()[edge[1]]));
            ++row;
        }
        TvOperator op;
        op.D.resize(row, static_cast<Eigen::Index>(mesh.node_count()));
        op.D.setFromTriplets(trip.begin(), trip.end());
        op.w = to_eigen(w);
        return op;
    }

    double value(const VectorXd& s, double beta) const {
        const VectorXd d = D * s;
        double r = 0;
        for (Eigen::Index e = 0; e < d.size(); ++e) r += w[e] * std::sqrt(d[e] * d[e] + beta * beta);
        return r;
    }

    VectorXd gradient(const VectorXd& s, double beta) const {
        VectorXd d = D * s;
        for (Eigen::Index e = 0; e < d.size(); ++e) d[e] = w[e] * d[e] / std::sqrt(d[e] * d[e] + beta * beta);
        return D.transpose() * d;
    }

    /// Lagged-diffusivity Hessian D^T diag(w / psi) D.
    Eigen::MatrixXd hessian(const VectorXd& s, double beta) const {
        const VectorXd d = D * s;
        VectorXd q(d.size());
        for (Eigen::Index e = 0; e < d.size(); ++e) q[e] = w[e] / std::sqrt(d[e] * d[e] + beta * beta);
        const Eigen::SparseMatrix<double> H = D.transpose() * q.asDiagonal() * D;
        return Eigen::MatrixXd(H);
    }
};

namespace detail {

inline void check_measurements(const ForwardModel& fm, const MeasurementData& data) {
    if (data.voltages.size() != fm.measurement_count())
        throw ConfigError("measurements: " + std::to_string(data.voltages.size()) + " voltages but the pattern set on this mesh yields " +
                          std::to_string(fm.measurement_count()));
    if (!data.voltages.allFinite()) throw ConfigError("measurements: non-finite voltages");
}

inline double mean_sq(const VectorXd& r) { return r.squaredNorm() / static_cast<double>(r.size()); }

constexpr char kCheckpointMagic[] = "eit-neural-checkpoint-v1";

} // namespace detail

// ---------------------------------------------------------------------------
// Neural training

/// Stateful trainer; run() or step() by step. Deterministic given the config.
class NeuralTrainer {
public:
    NeuralTrainer(const ReconConfig& cfg, const Mesh& mesh, const MeasurementData& data)
        : cfg_(cfg), fm_(mesh, data.patterns, ContactModel::uniform(mesh.electrode_count(), cfg.contact_impedance)), target_(data.voltages),
          field_(std::make_shared<NeuralField>(cfg)), opt_(cfg.adamw) {
        cfg_.validate();
        if (!is_neural(cfg_.method)) throw ConfigError("neural trainer: method must be a neural variant");
        detail::check_measurements(fm_, data);
        field_->bind(mesh);
        batch_ = field_->encoder().prepare(mesh.nodes(), field_->levels(mesh));
        mlp_grads_ = field_->mlp().make_gradients();
        enc_grads_ = field_->encoder().make_gradients();
        reuse_ = cfg_.reuse_for(mesh.node_count());
        if (cfg_.neural_tv_weight > 0.0) tv_ = TvOperator::build(mesh);
        if (!cfg_.resume_from.empty()) load_checkpoint(cfg_.resume_from);
    }

    int iteration() const { return t_; }
    const std::vector<double>& loss_history() const { return history_; }
    const std::shared_ptr<NeuralField>& field() const { return field_; }
    const ForwardModel& forward_model() const { return fm_; }

    VectorXd sigma() const {
        MatrixXd X;
        field_->encoder().encode(batch_, X);
        return field_->mlp().forward(X);
    }

    /// One optimisation step; returns the loss at the pre-step parameters.
    double step() {
        auto& enc = field_->encoder();
        auto& mlp = field_->mlp();
        MatrixXd X;
        enc.encode(batch_, X);
        MlpCache cache;
        const VectorXd s = mlp.forward(X, &cache);
        if (!s.allFinite()) throw NumericalError(failure("non-finite conductivity"));
        VectorXd V;
        if (!lin_ || t_ % reuse_ == 0) {
            lin_ = fm_.linearize(s);
            V = lin_->voltages();
        } else {
            V = fm_.solve(s).voltages;
        }
        const VectorXd r = V - target_;
        const double loss = detail::mean_sq(r);
        double objective = loss;
        if (tv_) objective += cfg_.neural_tv_weight * tv_->value(s, cfg_.tv.beta);
        if (!std::isfinite(objective)) throw NumericalError(failure("non-finite loss"));
        VectorXd ds = lin_->jacobian_transpose_product(2.0 * r / static_cast<double>(r.size()));
        if (tv_) ds += cfg_.neural_tv_weight * tv_->gradient(s, cfg_.tv.beta);
        MatrixXd dX;
        mlp.backward(cache, ds, mlp_grads_, &dX);
        enc.backward(batch_, dX, enc_grads_);
        opt_.step(groups(), cosine_factor(t_, cfg_.total_iters));
        ++t_;
        // No redraw after the final step: the returned field keeps the bank it was fitted with.
        if (field_->uses_schedule() && t_ < cfg_.total_iters) maybe_resample(t_, cfg_.schedule, enc.fourier());
        history_.push_back(loss);
        if (cfg_.checkpoint_every > 0 && t_ % cfg_.checkpoint_every == 0) save_checkpoint(cfg_.checkpoint_path);
        return loss;
    }

    ReconResult run() {
        const auto t0 = std::chrono::steady_clock::now();
        while (t_ < cfg_.total_iters) step();
        ReconResult res;
        res.method = cfg_.method;
        res.sigma = sigma();
        res.loss_history = history_;
        res.seed = cfg_.seed;
        res.config = recon_config_to_json(cfg_);
        res.field = field_;
        const VectorXd V = fm_.solve(res.sigma).voltages;
        res.notes.push_back("final relative residual " + std::to_string((V - target_).norm() / target_.norm()));
        res.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return res;
    }

    void save_checkpoint(const std::filesystem::path& path) {
        io::BinaryWriter w;
        w.put_string(detail::kCheckpointMagic);
        w.put_string(to_string(cfg_.method));
        w.put_u64(cfg_.seed);
        w.put_u64(static_cast<std::uint64_t>(t_));
        w.put_doubles(history_);
        field_->save(w);
        opt_.save(w);
        io::write_atomic(path, w.bytes());
        last_checkpoint_ = t_;
    }

    void load_checkpoint(const std::filesystem::path& path) {
        io::BinaryReader r(io::read_text(path));
        if (r.get_string() != detail::kCheckpointMagic) throw IoError(path.string() + ": not a neural checkpoint");
        if (r.get_string() != to_string(cfg_.method)) throw IoError(path.string() + ": checkpoint method differs");
        if (r.get_u64() != cfg_.seed) throw IoError(path.string() + ": checkpoint seed differs");
        t_ = static_cast<int>(r.get_u64());
        history_ = r.get_doubles();
        field_->load(r);
        opt_.load(r);
        lin_.reset();
        if (t_ > cfg_.total_iters) throw IoError(path.string() + ": checkpoint is past total_iters");
    }

private:
    std::string failure(const std::string& what) const {
        return what + " at iteration " + std::to_string(t_) +
               (last_checkpoint_ >= 0 ? "; last good checkpoint at iteration " + std::to_string(last_checkpoint_) + " in " + cfg_.checkpoint_path
                                      : std::string("; no checkpoint written"));
    }

    std::vector<ParamGroup> groups() {
        std::vector<ParamGroup> g;
        auto& mlp = field_->mlp();
        auto& enc = field_->encoder();
        for (std::size_t k = 0; k < mlp.layers().size(); ++k) {
            g.push_back({&mlp.layers()[k].W, &mlp_grads_.W[k], cfg_.adamw.lr_mlp, true, nullptr});
            g.push_back({&mlp.layers()[k].b, &mlp_grads_.b[k], cfg_.adamw.lr_mlp, false, nullptr});
        }
        if (enc.has_mipmap()) g.push_back({&enc.mipmap().features(), &enc_grads_.mipmap, cfg_.adamw.lr_features, false, &batch_.mip_touched});
        if (enc.has_hash()) g.push_back({&enc.hash().features(), &enc_grads_.hash, cfg_.adamw.lr_features, false, &batch_.hash_touched});
        if (!enc.global().empty()) g.push_back({&enc.global(), &enc_grads_.global, cfg_.adamw.lr_features, false, nullptr});
        return g;
    }

    ReconConfig cfg_;
    ForwardModel fm_;
    VectorXd target_;
    std::shared_ptr<NeuralField> field_;
    AdamW opt_;
    EncodingBatch batch_;
    MlpGradients mlp_grads_;
    EncoderGradients enc_grads_;
    std::optional<Linearization> lin_;
    std::optional<TvOperator> tv_;
    int reuse_ = 1;
    int t_ = 0;
    int last_checkpoint_ = -1;
    std::vector<double> history_;
};

inline ReconResult reconstruct_neural(const ReconConfig& cfg, const Mesh& mesh, const MeasurementData& data) {
    return NeuralTrainer(cfg, mesh, data).run();
}

// ---------------------------------------------------------------------------
// TV Gauss-Newton

/// Best homogeneous conductivity by scalar Gauss-Newton from 1.
inline double homogeneous_fit(const ForwardModel& fm, const VectorXd& target, double sigma_min, int iters = 6) {
    double c = 1.0;
    const Eigen::Index n = fm.node_count();
    for (int k = 0; k < iters; ++k) {
        const auto lin = fm.linearize(VectorXd::Constant(n, c));
        const VectorXd r = lin.voltages() - target;
        const VectorXd j = lin.jacobian().matrix.rowwise().sum();
        const double jj = j.squaredNorm();
        if (!(jj > 0.0)) break;
        c = std::max(sigma_min, c - j.dot(r) / jj);
    }
    return c;
}

inline ReconResult reconstruct_tv(const ReconConfig& cfg, const Mesh& mesh, const MeasurementData& data) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const TvConfig& tc = cfg.tv;
    const ForwardModel fm(mesh, data.patterns, ContactModel::uniform(mesh.electrode_count(), cfg.contact_impedance));
    detail::check_measurements(fm, data);
    const VectorXd& target = data.voltages;
    const double M = static_cast<double>(target.size());
    const TvOperator tv = TvOperator::build(mesh);
    const Eigen::Index n = fm.node_count();

    auto objective = [&](const VectorXd& s, double* data_fit) {
        const double d = detail::mean_sq(fm.solve(s).voltages - target);
        if (data_fit) *data_fit = d;
        return d + tc.alpha * tv.value(s, tc.beta);
    };

    ReconResult res;
    res.method = Method::tv;
    res.seed = cfg.seed;
    res.config = recon_config_to_json(cfg);
    VectorXd s = VectorXd::Constant(n, homogeneous_fit(fm, target, tc.sigma_min));
    double fit = 0;
    double phi = objective(s, &fit);
    double lambda = tc.lambda0;
    for (int it = 0; it < tc.max_iters; ++it) {
        const auto lin = fm.linearize(s);
        const VectorXd r = lin.voltages() - target;
        const auto& J = lin.jacobian().matrix;
        const VectorXd grad = (2.0 / M) * (J.transpose() * r) + tc.alpha * tv.gradient(s, tc.beta);
        Eigen::MatrixXd H = (2.0 / M) * (J.transpose() * J);
        if (tc.alpha > 0.0) H += tc.alpha * tv.hessian(s, tc.beta);
        const double scale = H.diagonal().mean();
        bool accepted = false;
        int failures = 0;
        while (!accepted && failures < tc.max_line_search) {
            Eigen::MatrixXd A = H;
            A.diagonal().array() += lambda * scale;
            const VectorXd delta = A.ldlt().solve(-grad);
            if (!delta.allFinite()) throw NumericalError("tv: Gauss-Newton system is singular");
            double t = 1.0;
            for (; failures < tc.max_line_search; t *= 0.5) {
                const VectorXd trial = (s + t * delta).cwiseMax(tc.sigma_min);
                double trial_fit = 0;
                const double trial_phi = objective(trial, &trial_fit);
                if (std::isfinite(trial_phi) && trial_phi <= phi + tc.armijo * grad.dot(trial - s) && trial_phi < phi) {
                    s = trial;
                    phi = trial_phi;
                    fit = trial_fit;
                    accepted = true;
                    lambda = t == 1.0 ? std::max(lambda / 3.0, 1e-10) : lambda * 2.0;
                    break;
                }
                ++failures;
            }
            if (!accepted) lambda *= 10.0;
        }
        if (!accepted) {
            res.notes.push_back("warning: line search failed " + std::to_string(tc.max_line_search) + " times at iteration " + std::to_string(it) +
                                "; returning best iterate");
            break;
        }
        res.loss_history.push_back(fit);
        res.objective_history.push_back(phi);
    }
    res.sigma = s;
    res.notes.push_back("final relative residual " + std::to_string(std::sqrt(fit * M) / target.norm()));
    res.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

inline ReconResult reconstruct(const ReconConfig& cfg, const Mesh& mesh, const MeasurementData& data) {
    return is_neural(cfg.method) ? reconstruct_neural(cfg, mesh, data) : reconstruct_tv(cfg, mesh, data);
}

// ---------------------------------------------------------------------------
// Diagnostics and cross-mesh evaluation

/// Per-node ||J[:, n]|| * ||d sigma / dx|| at initialisation, with the spatial
/// gradient by central differences of step h at the node's own level.
inline std::vector<double> initial_sensitivity_map(const ReconConfig& cfg, const Mesh& mesh, const PatternSet& patterns, double h = 1e-3) {
    const NeuralField field(cfg);
    const auto levels = field.levels(mesh);
    const auto& x = mesh.nodes();
    std::vector<Point> pts;
    std::vector<double> lv;
    pts.reserve(4 * x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        for (int d = 0; d < 2; ++d)
            for (double sgn : {1.0, -1.0}) {
                Point p = x[i];
                p[d] += sgn * h;
                pts.push_back(p);
                lv.push_back(levels[i]);
            }
    const VectorXd f = field.evaluate(pts, lv);
    std::vector<std::array<double, 2>> grad(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        for (int d = 0; d < 2; ++d) grad[i][d] = (f[static_cast<Eigen::Index>(4 * i + 2 * d)] - f[static_cast<Eigen::Index>(4 * i + 2 * d + 1)]) / (2 * h);
    const ForwardModel fm(mesh, patterns, ContactModel::uniform(mesh.electrode_count(), cfg.contact_impedance));
    return coordinate_sensitivity(fm.jacobian(field.evaluate(mesh)), grad);
}

/// Mean over nodes with |x| <= r_center divided by the mean over |x| >= r_boundary.
inline double center_boundary_ratio(const Mesh& mesh, const std::vector<double>& v, double r_center = 0.3, double r_boundary = 0.8) {
    double c = 0, b = 0;
    int nc = 0, nb = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double r = norm(mesh.nodes()[i]);
        if (r <= r_center) {
            c += v[i];
            ++nc;
        } else if (r >= r_boundary) {
            b += v[i];
            ++nb;
        }
    }
    if (nc == 0 || nb == 0 || b == 0.0) throw DomainError("center_boundary_ratio: empty region");
    return (c / nc) / (b / nb);
}

/// Conductivity of a finished run on another mesh: the neural field is
/// evaluated at the new nodes (phync levels recomputed there); TV results are
/// interpolated barycentrically from the inversion mesh.
inline VectorXd crossmesh_evaluate(const ReconResult& result, const Mesh& inversion_mesh, const Mesh& target_mesh) {
    if (is_neural(result.method)) {
        if (!result.field) throw ContractError("crossmesh_evaluate: result carries no trained neural state");
        return result.field->evaluate(target_mesh);
    }
    return interpolate_nodal(inversion_mesh, result.sigma, target_mesh.nodes());
}

/// Writes the trained neural state next to a result for later cross-mesh use.
inline void save_neural_state(const NeuralField& f, const std::filesystem::path& path) {
    io::BinaryWriter w;
    w.put_string(detail::kCheckpointMagic);
    w.put_string(recon_config_to_json(f.config()).dump());
    f.save(w);
    io::write_atomic(path, w.bytes());
}

/// Restores a trained field; `inversion` must be the mesh it was trained on.
inline std::shared_ptr<NeuralField> load_neural_state(const std::filesystem::path& path, const Mesh& inversion) {
    io::BinaryReader r(io::read_text(path));
    if (r.get_string() != detail::kCheckpointMagic) throw IoError(path.string() + ": not a neural state file");
    json j;
    try {
        j = json::parse(r.get_string());
    } catch (const json::parse_error& e) {
        throw IoError(path.string() + ": " + e.what());
    }
    auto f = std::make_shared<NeuralField>(recon_config_from_json(j));
    f->load(r);
    f->bind(inversion);
    return f;
}

} // namespace eit
