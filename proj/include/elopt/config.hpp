#pragma once

#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "elopt/studies.hpp"

namespace elopt {

// configuration problems map to their own exit code in the tool
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace cfgdetail {

using nlohmann::json;

[[noreturn]] inline void bad(const std::string& path, const std::string& msg) {
    throw ConfigError("config error at " + path + ": " + msg);
}

inline void reject_unknown_keys(const json& obj, const std::string& path,
                                const std::set<std::string>& allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key())) bad(path + "." + it.key(), "unknown key");
}

inline double num(const json& obj, const std::string& path, const std::string& key) {
    if (!obj.contains(key)) bad(path + "." + key, "missing required number");
    if (!obj[key].is_number()) bad(path + "." + key, "expected a number");
    return obj[key].get<double>();
}

inline double num_or(const json& obj, const std::string& path, const std::string& key,
                     double fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number()) bad(path + "." + key, "expected a number");
    return obj[key].get<double>();
}

inline std::optional<double> opt_num(const json& obj, const std::string& path,
                                     const std::string& key) {
    if (!obj.contains(key)) return {};
    if (!obj[key].is_number()) bad(path + "." + key, "expected a number");
    return obj[key].get<double>();
}

inline long long int_or(const json& obj, const std::string& path, const std::string& key,
                        long long fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number_integer()) bad(path + "." + key, "expected an integer");
    return obj[key].get<long long>();
}

inline bool bool_or(const json& obj, const std::string& path, const std::string& key,
                    bool fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_boolean()) bad(path + "." + key, "expected a boolean");
    return obj[key].get<bool>();
}

inline std::string str_or(const json& obj, const std::string& path, const std::string& key,
                          const std::string& fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_string()) bad(path + "." + key, "expected a string");
    return obj[key].get<std::string>();
}

inline std::vector<double> num_list(const json& obj, const std::string& path,
                                    const std::string& key) {
    if (!obj.contains(key) || !obj[key].is_array()) bad(path + "." + key, "expected an array");
    std::vector<double> out;
    for (const auto& v : obj[key]) {
        if (!v.is_number()) bad(path + "." + key, "expected numbers");
        out.push_back(v.get<double>());
    }
    return out;
}

inline std::pair<double, double> interval(const json& obj, const std::string& path,
                                          const std::string& key,
                                          std::pair<double, double> fallback) {
    if (!obj.contains(key)) return fallback;
    auto xs = num_list(obj, path, key);
    if (xs.size() != 2 || !(xs[0] < xs[1])) bad(path + "." + key, "expected [lo, hi] with lo < hi");
    return {xs[0], xs[1]};
}

}  // namespace cfgdetail

struct AppConfig {
    struct Scheme {
        double dx = 0.0;
        std::optional<double> dt;
        std::optional<double> cfl_factor;
        double T = 0.0;
        std::optional<double> H;
        int store_every = 1;
        double domain_lo = -1.0;
        double domain_hi = 1.0;
    };
    struct Initial {
        std::string kind = "reference_bump";  // reference_bump | step_guess | riemann_half |
                                              // constant | csv
        double value = 0.2;
        std::string csv_path;
    };
    struct ObjectiveRef {
        std::string scheme = "local";  // local | nonlocal, or load from manifest
        std::optional<double> H;
        std::string manifest;
    };
    struct Objective {
        struct Term {
            std::string kind = "distributed_tracking";
            double weight = 1.0;
            double w_lo = -1.0;
            double w_hi = 1.0;
            double p = 1.0;
        };
        std::vector<Term> terms;
        ObjectiveRef reference;
    };
    struct Optimizer {
        OptimizerConfig cfg;
        bool auto_step_tol = true;
        bool auto_opt_tol = true;
        AdmissibleSpec admissible;
    };
    struct Study {
        std::string kind = "grid_convergence_local";
        std::vector<double> dx_list = {0.08, 0.04, 0.02, 0.01};
        std::vector<double> H_list;
        double dx = 0.01;
        double T = 0.25;
        double ref_H = 0.5;
        std::string coupling = "both";  // h_half | h_pow11 | both
        bool parallel_rows = false;
        double domain_lo = -1.0;
        double domain_hi = 1.0;
    };

    std::optional<Scheme> scheme;
    std::string kernel_shape = "affine";
    std::optional<double> kernel_H;
    std::string speed_law = "greenshields";
    std::optional<Initial> initial;
    std::optional<Objective> objective;
    Optimizer optimizer;
    std::optional<Study> study;
    nlohmann::json raw;
};

inline AppConfig parse_config(const nlohmann::json& root) {
    using namespace cfgdetail;
    if (!root.is_object()) bad("<root>", "expected a JSON object");
    reject_unknown_keys(root, "<root>",
                        {"scheme", "kernel", "speed", "initial", "objective", "optimizer",
                         "study"});
    AppConfig out;
    out.raw = root;

    if (root.contains("scheme")) {
        const auto& s = root["scheme"];
        if (!s.is_object()) bad("scheme", "expected an object");
        reject_unknown_keys(s, "scheme",
                            {"dx", "dt", "cfl_factor", "T", "H", "store_every", "domain"});
        AppConfig::Scheme sc;
        sc.dx = num(s, "scheme", "dx");
        sc.dt = opt_num(s, "scheme", "dt");
        sc.cfl_factor = opt_num(s, "scheme", "cfl_factor");
        sc.T = num(s, "scheme", "T");
        sc.H = opt_num(s, "scheme", "H");
        sc.store_every = static_cast<int>(int_or(s, "scheme", "store_every", 1));
        std::tie(sc.domain_lo, sc.domain_hi) =
            interval(s, "scheme", "domain", {-1.0, 1.0});
        if (sc.dt && sc.cfl_factor) bad("scheme", "give either dt or cfl_factor, not both");
        out.scheme = sc;
    }

    if (root.contains("kernel")) {
        const auto& k = root["kernel"];
        if (!k.is_object()) bad("kernel", "expected an object");
        reject_unknown_keys(k, "kernel", {"shape", "H"});
        out.kernel_shape = str_or(k, "kernel", "shape", "affine");
        if (out.kernel_shape != "affine") bad("kernel.shape", "unknown shape, only 'affine'");
        out.kernel_H = opt_num(k, "kernel", "H");
        if (out.kernel_H && out.scheme && out.scheme->H &&
            *out.kernel_H != *out.scheme->H)
            bad("kernel.H", "disagrees with scheme.H");
    }

    if (root.contains("speed")) {
        const auto& s = root["speed"];
        if (!s.is_object()) bad("speed", "expected an object");
        reject_unknown_keys(s, "speed", {"law"});
        out.speed_law = str_or(s, "speed", "law", "greenshields");
        if (out.speed_law != "greenshields")
            bad("speed.law", "unknown law, only 'greenshields'");
    }

    if (root.contains("initial")) {
        const auto& ini = root["initial"];
        if (!ini.is_object()) bad("initial", "expected an object");
        reject_unknown_keys(ini, "initial", {"kind", "value", "csv"});
        AppConfig::Initial in;
        in.kind = str_or(ini, "initial", "kind", "reference_bump");
        in.value = num_or(ini, "initial", "value", 0.2);
        in.csv_path = str_or(ini, "initial", "csv", "");
        static const std::set<std::string> kinds{"reference_bump", "step_guess", "riemann_half",
                                                 "constant", "csv"};
        if (!kinds.count(in.kind)) bad("initial.kind", "unknown kind '" + in.kind + "'");
        if (in.kind == "csv" && in.csv_path.empty()) bad("initial.csv", "missing path");
        out.initial = in;
    }

    if (root.contains("objective")) {
        const auto& o = root["objective"];
        if (!o.is_object()) bad("objective", "expected an object");
        reject_unknown_keys(o, "objective", {"terms", "reference"});
        AppConfig::Objective ob;
        if (!o.contains("terms") || !o["terms"].is_array() || o["terms"].empty())
            bad("objective.terms", "expected a non-empty array");
        for (const auto& t : o["terms"]) {
            if (!t.is_object()) bad("objective.terms", "expected objects");
            reject_unknown_keys(t, "objective.terms", {"kind", "weight", "window", "p"});
            AppConfig::Objective::Term term;
            term.kind = str_or(t, "objective.terms", "kind", "distributed_tracking");
            static const std::set<std::string> kinds{"distributed_tracking",
                                                     "final_time_tracking",
                                                     "bv_regularization"};
            if (!kinds.count(term.kind)) bad("objective.terms.kind", "unknown kind");
            term.weight = num_or(t, "objective.terms", "weight", 1.0);
            std::tie(term.w_lo, term.w_hi) =
                interval(t, "objective.terms", "window", {-1.0, 1.0});
            term.p = num_or(t, "objective.terms", "p", 1.0);
            ob.terms.push_back(term);
        }
        if (o.contains("reference")) {
            const auto& r = o["reference"];
            if (!r.is_object()) bad("objective.reference", "expected an object");
            reject_unknown_keys(r, "objective.reference", {"scheme", "H", "manifest"});
            ob.reference.scheme = str_or(r, "objective.reference", "scheme", "local");
            if (ob.reference.scheme != "local" && ob.reference.scheme != "nonlocal")
                bad("objective.reference.scheme", "expected 'local' or 'nonlocal'");
            ob.reference.H = opt_num(r, "objective.reference", "H");
            ob.reference.manifest = str_or(r, "objective.reference", "manifest", "");
        }
        out.objective = ob;
    }

    if (root.contains("optimizer")) {
        const auto& op = root["optimizer"];
        if (!op.is_object()) bad("optimizer", "expected an object");
        reject_unknown_keys(op, "optimizer",
                            {"max_iterations", "max_evaluations", "step_tolerance",
                             "optimality_tolerance", "fd_step", "armijo", "admissible"});
        auto& cfg = out.optimizer.cfg;
        cfg.max_iterations =
            static_cast<int>(int_or(op, "optimizer", "max_iterations", cfg.max_iterations));
        cfg.max_evaluations = int_or(op, "optimizer", "max_evaluations", cfg.max_evaluations);
        if (auto v = opt_num(op, "optimizer", "step_tolerance")) {
            cfg.step_tolerance = *v;
            out.optimizer.auto_step_tol = false;
        }
        if (auto v = opt_num(op, "optimizer", "optimality_tolerance")) {
            cfg.optimality_tolerance = *v;
            out.optimizer.auto_opt_tol = false;
        }
        cfg.fd_step = num_or(op, "optimizer", "fd_step", cfg.fd_step);
        if (op.contains("armijo")) {
            const auto& a = op["armijo"];
            if (!a.is_object()) bad("optimizer.armijo", "expected an object");
            reject_unknown_keys(a, "optimizer.armijo", {"c", "shrink", "max_backtracks"});
            cfg.armijo_c = num_or(a, "optimizer.armijo", "c", cfg.armijo_c);
            cfg.armijo_shrink = num_or(a, "optimizer.armijo", "shrink", cfg.armijo_shrink);
            cfg.max_backtracks = static_cast<int>(
                int_or(a, "optimizer.armijo", "max_backtracks", cfg.max_backtracks));
        }
        if (op.contains("admissible")) {
            const auto& a = op["admissible"];
            if (!a.is_object()) bad("optimizer.admissible", "expected an object");
            reject_unknown_keys(a, "optimizer.admissible", {"box", "tv_bound", "support"});
            auto& adm = out.optimizer.admissible;
            std::tie(adm.box_lo, adm.box_hi) =
                interval(a, "optimizer.admissible", "box", {adm.box_lo, adm.box_hi});
            adm.tv_bound = num_or(a, "optimizer.admissible", "tv_bound", adm.tv_bound);
            if (a.contains("support"))
                adm.support = interval(a, "optimizer.admissible", "support", {0, 0});
        }
    }

    if (root.contains("study")) {
        const auto& st = root["study"];
        if (!st.is_object()) bad("study", "expected an object");
        reject_unknown_keys(st, "study",
                            {"kind", "dx_list", "H_list", "dx", "T", "ref_H", "coupling",
                             "parallel_rows", "domain"});
        AppConfig::Study s;
        s.kind = str_or(st, "study", "kind", "grid_convergence_local");
        static const std::set<std::string> kinds{"grid_convergence_local",
                                                 "grid_convergence_nonlocal",
                                                 "gamma_minimizers", "double_limit",
                                                 "nl2l_solutions"};
        if (!kinds.count(s.kind)) bad("study.kind", "unknown kind '" + s.kind + "'");
        if (st.contains("dx_list")) s.dx_list = num_list(st, "study", "dx_list");
        if (st.contains("H_list")) s.H_list = num_list(st, "study", "H_list");
        s.dx = num_or(st, "study", "dx", s.dx);
        s.T = num_or(st, "study", "T", s.T);
        s.ref_H = num_or(st, "study", "ref_H", s.ref_H);
        s.coupling = str_or(st, "study", "coupling", "both");
        if (s.coupling != "h_half" && s.coupling != "h_pow11" && s.coupling != "both")
            bad("study.coupling", "expected h_half, h_pow11 or both");
        s.parallel_rows = bool_or(st, "study", "parallel_rows", false);
        std::tie(s.domain_lo, s.domain_hi) = interval(st, "study", "domain", {-1.0, 1.0});
        out.study = s;
    }

    return out;
}

inline AppConfig load_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    nlohmann::json root;
    try {
        is >> root;
    } catch (const std::exception& e) {
        throw ConfigError("config parse failure in " + path + ": " + e.what());
    }
    return parse_config(root);
}

}  // namespace elopt
