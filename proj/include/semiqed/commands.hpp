#pragma once

// Command implementations behind the `semiqed` executable: config ingestion,
// checks with pass/fail against tolerances, artifacts and report.json.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <optional>
#include <random>

#include "semiqed/studies.hpp"

namespace semiqed::cli {

namespace fs = std::filesystem;
using io::json;
using ps::PhasePoint;

inline constexpr const char* tool_version = "0.1.0";
inline constexpr int report_schema_version = 1;

inline const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names{"build-modes", "expand", "compare", "transition", "checks"};
    return names;
}

// ---------------------------------------------------------------- config access

/// Run configuration: the parsed file plus the two command-line overrides.
class RunConfig {
public:
    RunConfig(json raw, fs::path base_dir, std::uint64_t seed) : raw_(std::move(raw)), base_(std::move(base_dir)), seed_(seed) {
        if (!raw_.is_object()) throw ConfigError("config must be a JSON object");
        if (raw_.contains("tolerances")) {
            if (!raw_.at("tolerances").is_object()) throw ConfigError("tolerances must be an object");
            for (const auto& [k, v] : raw_.at("tolerances").items())
                if (!v.is_number() || v.get<double>() < 0.0) throw ConfigError("tolerance '" + k + "' must be a number >= 0");
        }
    }

    const json& raw() const { return raw_; }
    std::uint64_t seed() const { return seed_; }
    bool has(const std::string& key) const { return raw_.contains(key); }

    template <class T>
    T get(const std::string& key, const T& fallback) const {
        try {
            return raw_.value(key, fallback);
        } catch (const json::exception& e) {
            throw ConfigError("config key '" + key + "': " + e.what());
        }
    }

    template <class T>
    T require(const std::string& key) const {
        if (!raw_.contains(key)) throw ConfigError("config is missing '" + key + "'");
        try {
            return raw_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError("config key '" + key + "': " + e.what());
        }
    }

    const json& section(const std::string& key) const {
        static const json empty = json::object();
        if (!raw_.contains(key)) return empty;
        if (!raw_.at(key).is_object()) throw ConfigError("config key '" + key + "' must be an object");
        return raw_.at(key);
    }

    double tolerance(const std::string& name, double fallback) const {
        return raw_.contains("tolerances") ? raw_.at("tolerances").value(name, fallback) : fallback;
    }

    std::pair<double, double> window(const std::string& name, std::pair<double, double> fallback) const {
        if (!raw_.contains("windows") || !raw_.at("windows").contains(name)) return fallback;
        const auto v = raw_.at("windows").at(name).get<std::vector<double>>();
        if (v.size() != 2 || !(v[0] <= v[1])) throw ConfigError("window '" + name + "' must be [lo, hi]");
        return {v[0], v[1]};
    }

    modes::ModeModel model() const {
        if (raw_.contains("model_file")) {
            fs::path p = raw_.at("model_file").get<std::string>();
            if (p.is_relative()) p = base_ / p;
            return modes::deserialize(io::read_file(p));
        }
        if (!raw_.contains("model")) throw ConfigError("config needs 'model' or 'model_file'");
        return modes::build_mode_model(raw_.at("model"));
    }

    std::size_t n_max(std::size_t fallback) const { return section("truncation").value("n_max", fallback); }

    hier::SolverOptions solver() const {
        hier::SolverOptions o;
        const auto& s = section("solver");
        o.abs_tol = s.value("abs_tol", o.abs_tol);
        o.rel_tol = s.value("rel_tol", o.rel_tol);
        o.initial_step = s.value("initial_step", o.initial_step);
        o.max_steps = s.value("max_steps", o.max_steps);
        return o;
    }

    PhasePoint point(const json& j, std::size_t dim) const {
        const auto v = j.get<std::vector<double>>();
        if (v.size() != 2 * dim)
            throw ConfigError("phase point needs 2J = " + std::to_string(2 * dim) + " entries (q then p)");
        RVec x(Eigen::Index(v.size()));
        for (std::size_t i = 0; i < v.size(); ++i) x(Eigen::Index(i)) = v[i];
        return PhasePoint::from_stacked(x);
    }

    /// Explicit "points", or "random_points": {"count", "scale"} drawn from the run seed.
    std::vector<PhasePoint> points(std::size_t dim) const {
        std::vector<PhasePoint> out;
        if (raw_.contains("points"))
            for (const auto& p : raw_.at("points")) out.push_back(point(p, dim));
        if (raw_.contains("random_points")) {
            const auto& r = raw_.at("random_points");
            const std::size_t count = r.value("count", std::size_t(5));
            const double scale = r.value("scale", 0.5);
            std::mt19937_64 rng(seed_);
            std::normal_distribution<double> g(0.0, scale);
            for (std::size_t i = 0; i < count; ++i) {
                RVec q(static_cast<Eigen::Index>(dim)), p(static_cast<Eigen::Index>(dim));
                for (Eigen::Index k = 0; k < Eigen::Index(dim); ++k) {
                    q(k) = g(rng);
                    p(k) = g(rng);
                }
                out.emplace_back(q, p);
            }
        }
        if (out.empty()) throw ConfigError("config needs 'points' or 'random_points'");
        return out;
    }

private:
    json raw_;
    fs::path base_;
    std::uint64_t seed_;
};

// ---------------------------------------------------------------- report

struct Check {
    std::string name;
    bool required = true;
    bool passed = false;
    json measured;
    json tolerance;
    std::string comparison; ///< "<=", ">=", "in", "true"
    std::string note;

    json to_json() const {
        return {{"name", name},         {"required", required},     {"passed", passed}, {"measured", measured},
                {"tolerance", tolerance}, {"comparison", comparison}, {"note", note}};
    }
};

class Report {
public:
    explicit Report(std::string command) : command_(std::move(command)) {}

    void set_config(const json& c, std::uint64_t seed) {
        config_ = c;
        seed_ = seed;
    }
    void stage(std::string s) { stage_ = std::move(s); }
    const std::string& current_stage() const { return stage_; }

    Check& add(Check c) {
        checks_.push_back(std::move(c));
        return checks_.back();
    }
    void at_most(const std::string& name, double value, double tol, std::string note = {}) {
        add({name, true, value <= tol, study::number_or_null(value), tol, "<=", std::move(note)});
    }
    void at_least(const std::string& name, double value, double tol, std::string note = {}) {
        add({name, true, value >= tol, study::number_or_null(value), tol, ">=", std::move(note)});
    }
    void within(const std::string& name, double value, std::pair<double, double> w, std::string note = {}) {
        add({name, true, value >= w.first && value <= w.second, study::number_or_null(value),
             json::array({w.first, w.second}), "in", std::move(note)});
    }
    void holds(const std::string& name, bool value, std::string note = {}) {
        add({name, true, value, value, true, "true", std::move(note)});
    }
    /// Runs one check body; an exception fails that check only.
    void guarded(const std::string& name, const std::function<void()>& body) {
        try {
            body();
        } catch (const std::exception& e) {
            add({name, true, false, nullptr, nullptr, "error", e.what()});
        }
    }

    json& results() { return results_; }
    void artifact(const std::string& name) { artifacts_.push_back(name); }

    void fail(const std::string& stage, const std::string& message) {
        error_ = message;
        failure_stage_ = stage;
    }

    bool errored() const { return error_.has_value(); }
    bool passed() const {
        if (errored()) return false;
        for (const auto& c : checks_)
            if (c.required && !c.passed) return false;
        return true;
    }

    json to_json() const {
        json checks = json::array(), failed = json::array();
        for (const auto& c : checks_) {
            checks.push_back(c.to_json());
            if (c.required && !c.passed) failed.push_back(c.name);
        }
        std::optional<std::string> stage = failure_stage_;
        if (!stage && !failed.empty()) stage = "checks";
        return {{"schema_version", report_schema_version},
                {"tool", {{"name", "semiqed"}, {"version", tool_version}}},
                {"command", command_},
                {"seed", seed_},
                {"config", config_},
                {"status", errored() ? "error" : (passed() ? "passed" : "failed")},
                {"failure_stage", stage ? json(*stage) : json(nullptr)},
                {"error", error_ ? json(*error_) : json(nullptr)},
                {"checks", checks},
                {"failed_checks", failed},
                {"results", results_},
                {"artifacts", artifacts_}};
    }

private:
    std::string command_;
    json config_ = json::object();
    std::uint64_t seed_ = 0;
    std::string stage_ = "config";
    std::vector<Check> checks_;
    json results_ = json::object();
    std::vector<std::string> artifacts_;
    std::optional<std::string> error_, failure_stage_;
};

/// Output directory; every file goes through a temporary and a rename.
class Outputs {
public:
    Outputs(fs::path dir, Report& rep) : dir_(std::move(dir)), rep_(rep) {}
    void write(const std::string& name, const std::string& content) {
        io::write_atomic(dir_ / name, content);
        rep_.artifact(name);
    }
    const fs::path& dir() const { return dir_; }

private:
    fs::path dir_;
    Report& rep_;
};

// ---------------------------------------------------------------- commands

inline void cmd_build_modes(const RunConfig& cfg, Report& rep, Outputs& out) {
    rep.stage("model");
    if (!cfg.has("model")) throw ConfigError("build-modes needs an inline 'model'");
    const auto model = modes::build_mode_model(cfg.raw().at("model"));
    rep.results()["model"] = {{"kind", model.kind == modes::ModelKind::computed ? "computed" : "synthetic"},
                              {"J", model.n_modes()},
                              {"spins", model.n_spins()}};
    rep.stage("decay");
    const auto rows = study::decay_table(model);
    if (model.kind == modes::ModelKind::computed) {
        const modes::ModeSpace space(model.labels, model.quadrature);
        const auto& basis = space.basis();
        const auto fine = quad::sphere_product(2 * basis.rule().n_theta, 2 * basis.rule().n_phi);
        const RMat g = basis.gram_on(fine);
        rep.at_most("angular_gram", (g - RMat::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff(),
                    cfg.tolerance("angular_gram", 1e-8), "Gram matrix of the angular fields on a refined sphere rule");
        double radial = 0.0;
        for (const auto& l : model.labels)
            radial = std::max(radial, modes::RadialFunction::make(l.m, model.quadrature.r_max, model.quadrature.radial_nodes)
                                          .norm_residual());
        rep.at_most("radial_norm", radial, cfg.tolerance("radial_norm", 1e-8));
        rep.results()["decay"] = study::decay_summary(rows).to_json();
    }
    rep.stage("write");
    out.write("model.json", modes::serialize(model));
    out.write("decay_table.csv", study::decay_csv(rows));
}

inline void cmd_expand(const RunConfig& cfg, Report& rep, Outputs& out) {
    rep.stage("model");
    const auto model = cfg.model();
    rep.stage("hierarchy");
    const int order = cfg.get("order", 1);
    const PhasePoint x = cfg.has("point") ? cfg.point(cfg.raw().at("point"), model.n_modes()) : PhasePoint::zero(model.n_modes());
    std::vector<double> times;
    if (cfg.has("t_grid")) {
        times = cfg.require<std::vector<double>>("t_grid");
    } else {
        times = hier::uniform_times(cfg.require<double>("t"), cfg.get("steps", std::size_t(20)));
    }
    const auto r = hier::solve_hierarchy(model, x, times, order, cfg.solver());
    const auto bounds = hier::derivative_bound_report(r, model);
    rep.results()["hierarchy"] = hier::hierarchy_summary(r, bounds);
    rep.at_most("unitarity_drift", r.stats.unitarity_drift, cfg.tolerance("unitarity_drift", 1e-8));
    if (model.coupling_is_zero()) {
        double dev = 0.0;
        for (std::size_t i = 0; i < r.size(); ++i)
            dev = std::max(dev, max_abs(r.g(0, i).value - study::larmor_matrix(model, r.times[i])));
        rep.at_most("larmor", dev, cfg.tolerance("larmor", 1e-9), "zero coupling: g0 is the spin precession");
    }
    rep.stage("write");
    out.write("hierarchy.csv", hier::hierarchy_csv(r));
}

inline void cmd_compare(const RunConfig& cfg, Report& rep, Outputs& out) {
    rep.stage("model");
    const auto model = cfg.model();
    rep.stage("truncation");
    study::CompareOptions o;
    o.h_grid = cfg.require<std::vector<double>>("h_grid");
    o.t = cfg.require<double>("t");
    o.points = cfg.points(model.n_modes());
    o.n_max = cfg.n_max(40);
    o.n_max_check = cfg.section("truncation").value("n_max_check", 2 * o.n_max);
    o.truncation_tol = cfg.tolerance("truncation", 1e-9);
    o.exact_tol = cfg.tolerance("exact", 1e-10);
    o.solver = cfg.solver();
    o.threads = study::thread_cap();
    const auto res = study::compare_study(model, o);
    rep.stage("checks");
    rep.results()["compare"] = res.to_json();
    if (res.exact) {
        rep.add({"slope_order0", true, true, nullptr, nullptr, "exact", "errors at machine precision; slope fit skipped"});
        rep.add({"slope_order1", true, true, nullptr, nullptr, "exact", "errors at machine precision; slope fit skipped"});
    } else {
        rep.within("slope_order0", res.slope0, cfg.window("order0", {0.8, 1.2}));
        rep.within("slope_order1", res.slope1, cfg.window("order1", {1.7, 2.3}), "with the heat correction");
    }
    if (res.n_max_check) rep.at_most("truncation", res.truncation_delta, o.truncation_tol);
    rep.stage("write");
    out.write("compare.csv", res.csv());
}

inline void cmd_transition(const RunConfig& cfg, Report& rep, Outputs& out) {
    rep.stage("model");
    const auto model = cfg.model();
    rep.stage("amplitudes");
    study::TransitionOptions o;
    o.h_grid = cfg.require<std::vector<double>>("h_grid");
    o.t = cfg.require<double>("t");
    o.x = cfg.has("x") ? cfg.point(cfg.raw().at("x"), model.n_modes()) : PhasePoint::zero(model.n_modes());
    o.grid = cfg.get("grid", std::size_t(5));
    o.radius = cfg.get("radius", 1.0);
    o.n_max = cfg.n_max(40);
    o.threads = study::thread_cap();
    const auto sd = Eigen::Index(model.spin_dimension());
    const auto spin = [&](const char* key) {
        const auto i = cfg.get(key, std::size_t(0));
        if (Eigen::Index(i) >= sd) throw ConfigError(std::string(key) + " is out of range");
        return CVec(CVec::Unit(sd, Eigen::Index(i)));
    };
    o.a = spin("spin_in");
    o.b = spin("spin_out");
    const auto res = study::transition_study(model, o);
    rep.stage("checks");
    rep.results()["transition"] = res.to_json();
    double violation = -INFINITY;
    for (const auto& f : res.fits) violation = std::max(violation, f.violation);
    rep.at_most("bound_violation", violation, cfg.tolerance("bound_violation", 1e-6),
                "largest excess over the fitted bound with M at the intercept ceiling");
    if (model.coupling_is_zero()) {
        double g = 0.0;
        for (const auto& f : res.fits) g = std::max(g, f.gaussian_error);
        rep.at_most("gaussian", g, cfg.tolerance("gaussian", 1e-9), "zero coupling: exact Gaussian modulus");
    } else if (res.fits.size() > 1) {
        rep.at_most("K_stability", res.k_spread, cfg.tolerance("K_stability", 0.3), "relative spread of K across h");
    }
    rep.stage("write");
    out.write("transition.csv", res.csv());
}

inline void cmd_checks(const RunConfig& cfg, Report& rep, Outputs& out) {
    rep.stage("model");
    const auto model = cfg.model();
    const double h = cfg.get("h", 0.2), t = cfg.get("t", 1.0);
    const std::size_t n_max = cfg.n_max(20), margin = cfg.section("truncation").value("margin", std::size_t(2));
    const auto basis = std::make_shared<fock::FockBasis>(model.n_modes(), n_max, model.n_spins());
    rep.stage("checks");
    std::mt19937_64 rng(cfg.seed());
    json& res = rep.results();

    rep.guarded("ccr", [&] { rep.at_most("ccr", study::ccr_residual(*basis, margin), cfg.tolerance("ccr", 1e-12)); });
    rep.guarded("flow", [&] {
        const auto f = study::flow_residuals(model.W, rng);
        rep.at_most("flow_group_law", f.group_law, cfg.tolerance("flow_group_law", 1e-12));
        rep.at_most("flow_symplectic", f.symplectic, cfg.tolerance("flow_symplectic", 1e-12));
    });
    rep.guarded("coherent_transport", [&] {
        const PhasePoint x = cfg.has("x") ? cfg.point(cfg.raw().at("x"), model.n_modes())
                                          : PhasePoint(RVec::Constant(Eigen::Index(model.n_modes()), 0.6),
                                                       RVec::Constant(Eigen::Index(model.n_modes()), -0.4));
        const auto tr = study::coherent_transport(model.W, x, t, h, *basis);
        const double factor = cfg.tolerance("coherent_transport", 10.0);
        res["coherent_transport"] = {{"deficit", tr.deficit}, {"phase", tr.phase}, {"tail", tr.tail}};
        rep.at_most("coherent_transport", tr.deficit, factor * std::max(tr.tail, std::numeric_limits<double>::epsilon()),
                    "1 - |overlap| against the tolerance times max(tail, machine epsilon)");
    });
    rep.guarded("gamma_conjugation", [&] {
        double worst = 0.0;
        for (std::size_t k = 0; k < model.n_modes(); ++k)
            for (bool q : {true, false}) {
                const auto f = q ? ps::LinearSymbol::q_form(model.n_modes(), k) : ps::LinearSymbol::p_form(model.n_modes(), k);
                worst = std::max(worst, fock::gamma_conjugation_check(f, t, model, h, *basis, margin));
            }
        rep.at_most("gamma_conjugation", worst, cfg.tolerance("gamma_conjugation", 1e-8));
    });
    rep.guarded("cocycle", [&] {
        rep.at_most("cocycle", study::cocycle_residual(model, rng, 20, cfg.solver()), cfg.tolerance("cocycle", 1e-8));
    });
    rep.guarded("sensitivity", [&] {
        const auto s = study::sensitivity_check(model, PhasePoint(RVec::Constant(Eigen::Index(model.n_modes()), 0.3),
                                                                  RVec::Constant(Eigen::Index(model.n_modes()), -0.2)),
                                                t);
        rep.at_most("sensitivity_fd", s.vs_fd, cfg.tolerance("sensitivity_fd", 1e-6));
        rep.at_most("sensitivity_duhamel", s.vs_duhamel, cfg.tolerance("sensitivity_duhamel", 1e-6));
    });
    rep.guarded("beals", [&] {
        const auto& sec = cfg.section("beals");
        study::BealsOptions o;
        o.h = sec.value("h", o.h);
        o.times = sec.value("times", o.times);
        o.n_max = sec.value("n_max", o.n_max);
        o.n_max_check = sec.value("n_max_check", 2 * o.n_max);
        o.margin = margin;
        const auto b = study::beals_study(model, o);
        res["beals"] = b.to_json();
        double ratio = 0.0;
        for (const auto& r : b.rows) ratio = std::max(ratio, std::max(r.ratio_q, r.ratio_p) / (1.0 + r.shell_error));
        rep.at_most("beals_bound", ratio, cfg.tolerance("beals_bound", 1.0), "commutator norm over h|t|eps(1 + shell error)");
        rep.at_most("beals_shell", b.max_shell_error, cfg.tolerance("beals_shell", 0.1));
        rep.within("beals_slope", b.slope, cfg.window("beals_slope", {0.8, 1.2}));
        out.write("beals.csv", b.csv());
    });
    rep.guarded("field_commutator", [&] {
        const auto& sec = cfg.section("fields");
        const auto chi = sec.contains("cutoff") ? modes::Cutoff::from_json(sec.at("cutoff")) : modes::Cutoff{};
        modes::QuadratureSettings q;
        q.radial_nodes = sec.value("radial_nodes", std::size_t(400));
        const auto counts = sec.value("radial_counts", std::vector<unsigned>{2, 4, 8});
        const auto s = study::commutator_study(Vec3::Zero(), Vec3(0, 0, 1), chi, counts, 1, q);
        res["field_commutator"] = {{"final_rel_error", s.final_rel_error}, {"monotone", s.monotone}};
        rep.at_most("field_same_kind", s.same_kind_max, cfg.tolerance("field_same_kind", 1e-12));
        rep.at_most("field_commutator", s.final_rel_error, cfg.tolerance("field_commutator", 0.05),
                    "relative error of [E1(x), B2(y)] against ih d3 rho(y - x)");
        rep.holds("field_commutator_monotone", s.monotone);
        out.write("field_commutator.csv", fields::commutator_csv(s.rows));
    });
    rep.guarded("maxwell", [&] {
        const auto& sec = cfg.section("fields");
        const auto chi = sec.contains("cutoff") ? modes::Cutoff::from_json(sec.at("cutoff")) : modes::Cutoff{};
        const auto m = study::maxwell_continuum_study(chi);
        const auto w = cfg.window("maxwell_order", {1.7, 2.3});
        rep.within("maxwell_div_b", m.div_b, w);
        rep.within("maxwell_div_e", m.div_e, w);
        rep.within("maxwell_faraday", m.faraday, w);
        rep.within("maxwell_ampere", m.ampere, w);
        out.write("maxwell.csv", fields::maxwell_csv(m.rows));
    });
    rep.guarded("frame", [&] {
        const auto& sec = cfg.section("frame");
        auto fm = modes::build_mode_model(sec.contains("model") ? sec.at("model") : study::curl_triplet_config(0.4));
        const double scale = sec.value("coupling_scale", 8.0);
        for (auto& per : fm.coupling)
            for (auto& c : per) c *= scale;
        const auto drive = frame::RotatingDrive::from_json(sec.value("drive", json{{"B1", 0.3}, {"omega", 0.7}, {"beta3", 0.4}}));
        const auto f = study::frame_study(fm, drive, sec.value("h", 0.5), sec.value("t", 1.3), sec.value("n_max", std::size_t(4)),
                                          sec.value("ode_tolerances", std::vector<double>{1e-8, 1e-10, 1e-12}));
        json conv = json::array();
        for (const auto& r : f.convergence) conv.push_back(r.to_json());
        res["frame"] = {{"spin_identity", f.spin_identity}, {"zero_coupling", f.zero_coupling}, {"convergence", conv},
                        {"drive", drive.to_json()}};
        rep.at_most("frame_spin_identity", f.spin_identity, cfg.tolerance("frame_spin_identity", 1e-12));
        rep.at_most("frame_zero_coupling", f.zero_coupling, cfg.tolerance("frame_zero_coupling", 1e-8));
        rep.at_most("frame_full", f.convergence.back().residual, cfg.tolerance("frame_full", 1e-6));
        rep.holds("frame_convergence", f.decreasing, "residual decreases as the ODE tolerance tightens");
    });
}

// ---------------------------------------------------------------- driver

struct Invocation {
    std::string command;
    fs::path config;
    std::optional<fs::path> out;
    std::optional<std::uint64_t> seed;
};

/// Runs one command; report.json is written in every case. Returns the exit status.
inline int run(const Invocation& inv, std::ostream& log = std::cerr) {
    const auto start = std::chrono::steady_clock::now();
    Report rep(inv.command);
    fs::path out_dir = inv.out.value_or(fs::path("semiqed_out"));
    int status = 0;
    try {
        const auto& names = command_names();
        if (std::find(names.begin(), names.end(), inv.command) == names.end())
            throw ConfigError("unknown command '" + inv.command + "'");
        const json raw = io::parse(io::read_file(inv.config), inv.config.string());
        if (!inv.out && raw.is_object() && raw.contains("out")) {
            out_dir = raw.at("out").get<std::string>();
            if (out_dir.is_relative()) out_dir = inv.config.parent_path() / out_dir;
        }
        const std::uint64_t seed = inv.seed.value_or(raw.is_object() ? raw.value("seed", std::uint64_t(0)) : 0);
        rep.set_config(raw, seed);
        const RunConfig cfg(raw, inv.config.parent_path(), seed);
        if (cfg.has("command") && cfg.get("command", std::string()) != inv.command)
            throw ConfigError("config is for command '" + cfg.get("command", std::string()) + "', not '" + inv.command + "'");
        Outputs outputs(out_dir, rep);
        if (inv.command == "build-modes") cmd_build_modes(cfg, rep, outputs);
        else if (inv.command == "expand") cmd_expand(cfg, rep, outputs);
        else if (inv.command == "compare") cmd_compare(cfg, rep, outputs);
        else if (inv.command == "transition") cmd_transition(cfg, rep, outputs);
        else cmd_checks(cfg, rep, outputs);
        rep.stage("done");
    } catch (const std::exception& e) {
        rep.fail(rep.current_stage(), e.what());
        log << "semiqed " << inv.command << ": " << rep.current_stage() << ": " << e.what() << "\n";
    }
    try {
        io::write_atomic(out_dir / "report.json", io::dump(rep.to_json()));
    } catch (const std::exception& e) {
        log << "semiqed: cannot write report: " << e.what() << "\n";
        return 2;
    }
    if (rep.errored()) status = 2;
    else if (!rep.passed()) status = 1;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log << "semiqed " << inv.command << ": " << (status == 0 ? "passed" : status == 1 ? "failed" : "error") << " in "
        << secs << " s\n";
    return status;
}

} // namespace semiqed::cli
