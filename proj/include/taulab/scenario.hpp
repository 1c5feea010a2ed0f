#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <map>

#include <json.hpp>

#include "taulab/corpus.hpp"
#include "taulab/expr.hpp"
#include "taulab/norms.hpp"
#include "taulab/snell.hpp"

namespace taulab {

using ordered_json = nlohmann::ordered_json;

enum class ExitCode : int {
    Ok = 0,
    SuiteFailure = 1,
    ParseError = 2,
    ValidationError = 3,
    BudgetExceeded = 4,
};

struct ScenarioError : std::runtime_error {
    ExitCode code;
    ScenarioError(ExitCode c, const std::string& msg) : std::runtime_error(msg), code(c) {}
};

inline unsigned long long enumeration_budget(const nlohmann::json& run) {
    unsigned long long budget = 1ull << 24;
    if (run.contains("budget")) budget = run.at("budget").get<unsigned long long>();
    if (const char* env = std::getenv("HORIZON_RBSDE_BUDGET")) {
        char* end = nullptr;
        unsigned long long v = std::strtoull(env, &end, 10);
        if (end && *end == '\0' && v > 0) budget = v;
    }
    return budget;
}

// ---------------------------------------------------------------------------
// Model serialization (the validator is the single entry point)
// ---------------------------------------------------------------------------

template <class S>
S parse_scalar(const nlohmann::json& j, const char* what) {
    std::string text = j.is_string() ? j.get<std::string>() : j.dump();
    S out;
    if (!numeric_traits<S>::parse(text, out))
        throw ScenarioError(ExitCode::ParseError, std::string("unparseable number for ") + what +
                                                      ": '" + text + "'");
    return out;
}

inline uint32_t parse_path(const std::string& s, int depth) {
    if (static_cast<int>(s.size()) != depth)
        throw ScenarioError(ExitCode::ParseError, "path '" + s + "' has wrong length");
    uint32_t c = 0;
    for (char ch : s) {
        if (ch != 'u' && ch != 'd')
            throw ScenarioError(ExitCode::ParseError, "path letters must be u/d");
        c = 2 * c + (ch == 'u' ? 1u : 0u);
    }
    return c;
}

template <class S>
RandomTimeModel<S> parse_model(const nlohmann::json& jm) {
    if (!jm.contains("depth"))
        throw ScenarioError(ExitCode::ParseError, "model: missing depth");
    int depth = jm.at("depth").get<int>();
    if (depth < 1 || depth > 24)
        throw ScenarioError(ExitCode::ValidationError, "model: depth out of range");
    S dt = jm.contains("dt") ? parse_scalar<S>(jm.at("dt"), "dt") : numeric_traits<S>::one();
    // sqrt(dt) must be representable; accept dt given as a perfect square of a
    // rational (dt = 1, 1/4, 9/16, ...) or any positive float
    S sqrt_dt;
    if constexpr (numeric_traits<S>::exact) {
        mpq_class q = dt;
        mpz_class num = q.get_num(), den = q.get_den();
        mpz_class rn, rd;
        if (mpz_root(rn.get_mpz_t(), num.get_mpz_t(), 2) == 0 ||
            mpz_root(rd.get_mpz_t(), den.get_mpz_t(), 2) == 0)
            throw ScenarioError(ExitCode::ValidationError,
                                "model: dt must be a perfect rational square on the exact backend");
        sqrt_dt = Rational(rn, rd);
    } else {
        if (!(numeric_traits<S>::to_double(dt) > 0))
            throw ScenarioError(ExitCode::ValidationError, "model: dt must be positive");
        sqrt_dt = std::sqrt(numeric_traits<S>::to_double(dt));
    }
    FilteredSpace<S> sp;
    if (jm.contains("path_prob")) {
        std::vector<S> probs;
        for (const auto& v : jm.at("path_prob")) probs.push_back(parse_scalar<S>(v, "path_prob"));
        try {
            sp = FilteredSpace<S>::with_probs(depth, sqrt_dt, std::move(probs));
        } catch (const std::exception& e) {
            throw ScenarioError(ExitCode::ValidationError, e.what());
        }
    } else {
        sp = FilteredSpace<S>::uniform(depth, sqrt_dt);
    }
    try {
        if (jm.contains("joint")) {
            std::vector<std::vector<S>> joint(size_t{1} << depth);
            for (auto& row : joint)
                row.assign(static_cast<size_t>(depth) + 2, numeric_traits<S>::zero());
            for (const auto& entry : jm.at("joint")) {
                uint32_t c = parse_path(entry.at("path").get<std::string>(), depth);
                int tau = depth + 1;
                const auto& jt = entry.at("tau");
                if (jt.is_string() && jt.get<std::string>() == "alive") tau = depth + 1;
                else tau = jt.get<int>();
                if (tau < 0 || tau > depth + 1)
                    throw ScenarioError(ExitCode::ValidationError, "model: tau out of range");
                joint[c][static_cast<size_t>(tau)] =
                    S(joint[c][static_cast<size_t>(tau)] + parse_scalar<S>(entry.at("weight"), "weight"));
            }
            return make_from_joint(std::move(sp), std::move(joint));
        }
        if (jm.contains("generator")) {
            const auto& g = jm.at("generator");
            auto kind = g.at("kind").get<std::string>();
            bool closed = g.value("closed", false);
            if (kind == "independent") {
                std::vector<S> law;
                for (const auto& v : g.at("law")) law.push_back(parse_scalar<S>(v, "law"));
                if (law.size() != static_cast<size_t>(depth) + 2)
                    throw ScenarioError(ExitCode::ValidationError, "model: law needs depth+2 slots");
                return make_independent(std::move(sp), law);
            }
            Expr hz_expr, tl_expr;
            bool has_tilt = kind == "lookahead";
            try {
                hz_expr = Expr::parse(g.at("hazard"));
                if (has_tilt) tl_expr = Expr::parse(g.at("tilt"));
            } catch (const std::exception& e) {
                throw ScenarioError(ExitCode::ParseError, e.what());
            }
            auto hz = hz_expr.template to_process<S>(sp);
            if (kind == "cox") return make_cox(std::move(sp), hz, closed);
            if (has_tilt) {
                auto tl = tl_expr.template to_process<S>(sp);
                return make_lookahead(std::move(sp), hz, tl, closed);
            }
            throw ScenarioError(ExitCode::ParseError, "model: unknown generator kind");
        }
    } catch (const ModelError& e) {
        throw ScenarioError(ExitCode::ValidationError, e.what());
    }
    throw ScenarioError(ExitCode::ParseError, "model: needs 'joint' or 'generator'");
}

/// Convert any model to the float backend (for fractional-power checks inside
/// exact-backend runs).
template <class S>
RandomTimeModel<double> model_to_double(const RandomTimeModel<S>& m) {
    if constexpr (std::is_same_v<S, double>) {
        return m;
    } else {
        FilteredSpace<double> sp;
        sp.depth = m.base.depth;
        sp.sqrt_dt = numeric_traits<S>::to_double(m.base.sqrt_dt);
        sp.dt = numeric_traits<S>::to_double(m.base.dt);
        for (const auto& p : m.base.path_prob)
            sp.path_prob.push_back(numeric_traits<S>::to_double(p));
        sp.finalize();
        std::vector<std::vector<double>> joint(m.joint.size());
        for (size_t i = 0; i < m.joint.size(); ++i)
            for (const auto& w : m.joint[i])
                joint[i].push_back(numeric_traits<S>::to_double(w));
        return make_from_joint(std::move(sp), std::move(joint));
    }
}

template <class S>
FProcess<double> fprocess_to_double(const FProcess<S>& p) {
    FProcess<double> out(p.depth());
    for (int t = 0; t <= p.depth(); ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c)
            out.at(t, c) = numeric_traits<S>::to_double(p.at(t, c));
    return out;
}

template <class S>
RBSDEData<double> data_to_double(const RBSDEData<S>& d) {
    RBSDEData<double> out;
    out.T = d.T;
    out.p = d.p;
    out.f = fprocess_to_double(d.f);
    out.h = fprocess_to_double(d.h);
    if (d.barrier) out.barrier = fprocess_to_double(*d.barrier);
    return out;
}

// ---------------------------------------------------------------------------
// Calibration ledger
// ---------------------------------------------------------------------------

struct CalibrationLedger {
    // key: id + "|p=" + formatted exponent(s)
    std::map<std::string, double> constants;
    std::string corpus_hash;

    static std::string key(const std::string& id, double p) {
        std::ostringstream os;
        os << id << "|p=" << p;
        return os.str();
    }
    static std::string key3(const std::string& id, double r, double a, double b) {
        std::ostringstream os;
        os << id << "|r=" << r << "|a=" << a << "|b=" << b;
        return os.str();
    }

    double require(const std::string& k) const {
        auto it = constants.find(k);
        if (it == constants.end())
            throw ScenarioError(ExitCode::ValidationError, "ledger: missing constant " + k);
        return it->second;
    }

    static CalibrationLedger load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ScenarioError(ExitCode::ValidationError, "ledger: cannot open " + path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const std::exception& e) {
            throw ScenarioError(ExitCode::ParseError, std::string("ledger: ") + e.what());
        }
        CalibrationLedger led;
        led.corpus_hash = j.value("corpus_hash", "");
        for (const auto& e : j.at("entries"))
            led.constants[e.at("key").get<std::string>()] = e.at("constant").get<double>();
        return led;
    }
};

inline std::string fnv1a_hex(const std::string& data) {
    uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : data) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

/// One calibration/acceptance corpus instance: model + two RBSDE datasets.
struct EstimateCorpusSpec {
    int instances = 200;
    int depth_min = 2;
    int depth_max = 5;
    uint64_t seed = 1;
    std::vector<double> exponents{1.5, 2.0, 3.0};
    std::vector<std::array<double, 3>> martingale_exponents{{2.0, 4.0, 4.0}, {1.5, 3.0, 3.0}};

    static EstimateCorpusSpec parse(const nlohmann::json& j) {
        EstimateCorpusSpec s;
        s.instances = j.value("instances", 200);
        s.depth_min = j.value("depth_min", 2);
        s.depth_max = j.value("depth_max", 5);
        s.seed = j.value("seed", uint64_t{1});
        if (j.contains("p")) {
            s.exponents.clear();
            for (const auto& v : j.at("p")) s.exponents.push_back(v.get<double>());
        }
        if (s.instances <= 0)
            throw ScenarioError(ExitCode::ValidationError, "corpus: needs at least one instance");
        if (s.depth_min < 2 || s.depth_max < s.depth_min || s.depth_max > 8)
            throw ScenarioError(ExitCode::ValidationError, "corpus: bad depth range");
        return s;
    }

    std::string hash() const {
        std::ostringstream os;
        os << instances << "|" << depth_min << "|" << depth_max << "|" << seed;
        for (double p : exponents) os << "|" << p;
        return fnv1a_hex(os.str());
    }
};

/// Per-instance estimate ratios, keyed like the ledger.
inline std::map<std::string, double> estimate_ratios_for_instance(uint64_t seed, int depth_min,
                                                                  int depth_max,
                                                                  const std::vector<double>& ps) {
    std::map<std::string, double> out;
    CorpusRng rng(seed);
    int depth = depth_min + static_cast<int>(rng.next(static_cast<uint64_t>(depth_max - depth_min + 1)));
    ModelKind kind = static_cast<ModelKind>(rng.next(3));
    bool closed = rng.next(2) == 0;
    auto model = random_model<double>(rng, depth, closed, kind);
    int T = 1 + static_cast<int>(rng.next(static_cast<uint64_t>(depth)));
    auto d1 = random_rbsde_data(rng, model.base, T, true);
    auto d2 = random_rbsde_data(rng, model.base, T, true);
    auto keep = [&](const std::string& k, double v) {
        auto it = out.find(k);
        if (it == out.end() || it->second < v) out[k] = v;
    };
    for (double p : ps) {
        d1.p = d2.p = p;
        auto s1 = solve_G(model, d1);
        auto s2 = solve_G(model, d2);
        keep(CalibrationLedger::key("rbsde_qtilde_bound", p), estimate_qtilde_bound(model, d1, s1, p).ratio);
        keep(CalibrationLedger::key("rbsde_qtilde_stability", p), estimate_qtilde_stability(model, d1, s1, d2, s2, p).ratio);
        keep(CalibrationLedger::key("rbsde_weighted_bound", p), estimate_weighted_bound(model, d1, s1, p).ratio);
        keep(CalibrationLedger::key("rbsde_weighted_stability", p), estimate_weighted_stability(model, d1, s1, d2, s2, p).ratio);
        if (closed) {
            auto r1 = solve_random_horizon(model, d1, p);
            auto r2 = solve_random_horizon(model, d2, p);
            keep(CalibrationLedger::key("random_horizon_bound", p),
                 estimate_random_horizon_bound(model, d1, r1.solution, p).ratio);
            keep(CalibrationLedger::key("random_horizon_stability", p),
                 estimate_random_horizon_stability(model, d1, r1.solution, d2, r2.solution, p).ratio);
            keep(CalibrationLedger::key("f_side_infinite_bound", p),
                 estimate_f_side_bound(model, d1, r1.f_side, p).ratio);
        }
    }
    // martingale Holder bound on the same space
    {
        auto sp = FilteredSpace<double>::uniform(std::max(depth, 4), 1.0);
        auto X = random_martingale(rng, sp);
        auto M = random_martingale(rng, sp);
        FProcess<double> H(sp.depth);
        for (int t = 1; t <= sp.depth; ++t)
            for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) H.at(t, c) = X.at(t - 1, c >> 1);
        for (auto [r, a, b] : std::vector<std::array<double, 3>>{{2, 4, 4}, {1.5, 3, 3}}) {
            auto rep = martingale_inequality(sp, H, X, M, r, a, b);
            keep(CalibrationLedger::key3("martingale_holder", r, a, b), rep.ratio);
        }
    }
    return out;
}

inline std::map<std::string, double> corpus_max_ratios(const EstimateCorpusSpec& spec, int jobs) {
    std::vector<std::map<std::string, double>> results(static_cast<size_t>(spec.instances));
    auto worker = [&](int i) {
        results[static_cast<size_t>(i)] = estimate_ratios_for_instance(
            spec.seed + static_cast<uint64_t>(i) * 1000003ull, spec.depth_min, spec.depth_max,
            spec.exponents);
    };
    if (jobs <= 1) {
        for (int i = 0; i < spec.instances; ++i) worker(i);
    } else {
        std::vector<std::future<void>> futs;
        std::atomic<int> next{0};
        for (int j = 0; j < jobs; ++j)
            futs.push_back(std::async(std::launch::async, [&]() {
                for (int i = next.fetch_add(1); i < spec.instances; i = next.fetch_add(1)) worker(i);
            }));
        for (auto& f : futs) f.get();
    }
    std::map<std::string, double> out;
    for (const auto& r : results)
        for (const auto& [k, v] : r) {
            auto it = out.find(k);
            if (it == out.end() || it->second < v) out[k] = v;
        }
    return out;
}

inline ordered_json build_ledger_json(const EstimateCorpusSpec& spec,
                                      const std::map<std::string, double>& max_ratios) {
    ordered_json j;
    j["schema_version"] = 1;
    j["corpus"] = {{"instances", spec.instances},
                   {"depth_min", spec.depth_min},
                   {"depth_max", spec.depth_max},
                   {"seed", spec.seed},
                   {"p", spec.exponents}};
    j["corpus_hash"] = spec.hash();
    ordered_json entries = ordered_json::array();
    for (const auto& [k, v] : max_ratios) {
        ordered_json e;
        e["key"] = k;
        e["max_ratio"] = v;
        e["constant"] = v * 1.5;
        entries.push_back(e);
    }
    j["entries"] = entries;
    return j;
}

}  // namespace taulab
