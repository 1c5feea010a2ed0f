#pragma once

#include "taulab/scenario.hpp"

namespace taulab {

struct SuiteCheck {
    std::string name;
    double value = 0.0;
    double threshold = 0.0;
    bool pass = true;
    std::string note;
};

struct SuiteResult {
    std::string name;
    bool pass = true;
    std::vector<SuiteCheck> checks;
    ordered_json extra = ordered_json::object();  // merged into the suite report

    void add(const std::string& n, double v, double thr, const std::string& note = "") {
        SuiteCheck c{n, v, thr, v <= thr, note};
        pass = pass && c.pass;
        checks.push_back(c);
    }
    void add_flag(const std::string& n, bool ok, const std::string& note = "") {
        SuiteCheck c{n, ok ? 0.0 : 1.0, 0.0, ok, note};
        pass = pass && ok;
        checks.push_back(c);
    }
    void skip(const std::string& n, const std::string& why) {
        checks.push_back({n, 0.0, 0.0, true, "skipped: " + why});
    }
};

namespace csv {

inline std::string num(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

}  // namespace csv

// ---------------------------------------------------------------------------
// Suites
// ---------------------------------------------------------------------------

template <class S>
SuiteResult identities_suite(const RandomTimeModel<S>& model, int T, double tol, uint64_t seed,
                             std::map<std::string, std::string>& tables) {
    SuiteResult res{"identities"};
    CorpusRng rng(seed);
    const auto& sp = model.base;
    auto dd = [](const S& v) { return numeric_traits<S>::to_double(abs_val(v)); };

    res.add("survival_multiplicative_decomposition", dd(multiplicative_decomposition_gap(model)), tol);
    res.add("martingale_m_drift", dd(martingale_drift(sp, model.m)), tol);
    {
        auto M = random_martingale(rng, sp);
        auto mu = GMeasure<S>::P(model);
        res.add("transform_T_of_m_drift",
                dd(g_martingale_drift(mu, transform_T(model, model.m), model.depth())), tol);
        res.add("transform_T_drift",
                dd(g_martingale_drift(mu, transform_T(model, M), model.depth())), tol);
        res.add("nG_drift", dd(g_martingale_drift(mu, n_G(model), model.depth())), tol);
        auto H = random_process(rng, sp);
        res.add("H_dot_nG_drift",
                dd(g_martingale_drift(mu, integral_f_against_nG(model, H), model.depth())), tol);
    }
    {
        auto X = random_stopped_reward(rng, model);
        res.add("alive_projection_identity", dd(alive_projection_gap(model, X)), tol);
        auto pair = reduce_G_to_F(model, X);
        res.add("reduction_reconstruction", dd(decomposition_discrepancy(model, X, pair)), tol);
        res.add("kernel_projection_duality", dd(mu_projection_discrepancy(model, pair)), tol);
    }
    {
        auto L = random_process(rng, sp);
        auto kk = random_process(rng, sp);
        auto rep = semimartingale_identities(model, L, kk);
        res.add("semimartingale_exp_identity", dd(rep.exp_ratio), tol);
        res.add("semimartingale_survival_identity", dd(rep.survival_ratio), tol);
        res.add("semimartingale_compensator_identity", dd(rep.compensator_ratio), tol);
        auto rep2 = semimartingale_identities(model, model.m, kk);
        res.add("semimartingale_exp_identity_m", dd(rep2.exp_ratio), tol);
        res.add("semimartingale_compensator_identity_m", dd(rep2.compensator_ratio), tol);
    }
    {
        FProcess<S> x = random_process(rng, sp);
        for (int t = 0; t <= sp.depth; ++t)
            for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) x.at(t, c) = abs_val(x.at(t, c));
        auto nd = random_nondecreasing(rng, sp);
        auto rep = qtilde_transfer_check(model, x, nd, T, 2);
        res.add("qtilde_expectation_identity", dd(rep.id_nonneg), tol);
        res.add("qtilde_parts_identity", dd(rep.id_nondecreasing), tol);
        res.add_flag("qtilde_lr_bound", rep.lr_ok);
    }
    {
        auto rep = compensator_bounds_check(model, T);
        res.add_flag("compensator_tail_bound", rep.bound_a_ok);
        res.add_flag("hazard_integral_bound", rep.bound_b_ok);
        for (double a : std::vector<double>{1.0, 2.0, 3.0}) {
            auto va = v_F_and_v_a(model, a);
            res.add_flag("discount_power_monotone_a" + std::to_string(static_cast<int>(a)),
                         !(va.monotonicity_margin < S(0)));
            res.add("Etilde_pow_identity_a" + std::to_string(static_cast<int>(a)),
                    dd(va.exp_identity_discrepancy), tol);
        }
        if constexpr (!numeric_traits<S>::exact) {
            auto va = v_F_and_v_a(model, 0.5);
            res.add_flag("discount_power_monotone_a0.5", va.monotonicity_margin >= -tol);
            res.add("Etilde_pow_identity_a0.5", dd(va.exp_identity_discrepancy), tol);
        }
    }
    {
        auto zq = z_tilde_and_Qtilde(model, T);
        res.add("qtilde_mass", dd(zq.mass_discrepancy), tol);
        res.add("W_qtilde_drift", dd(zq.w_drift_qtilde), tol);
    }
    // survival table
    {
        std::ostringstream os;
        os << "t,atom,G,Gtilde,dDoF,m,Etilde,VF\n";
        for (int t = 0; t <= sp.depth; ++t)
            for (uint32_t c = 0; c < (uint32_t{1} << t); ++c)
                os << t << "," << c << "," << csv::num(numeric_traits<S>::to_double(model.G.at(t, c)))
                   << "," << csv::num(numeric_traits<S>::to_double(model.Gtilde.at(t, c))) << ","
                   << csv::num(numeric_traits<S>::to_double(model.dDoF.at(t, c))) << ","
                   << csv::num(numeric_traits<S>::to_double(model.m.at(t, c))) << ","
                   << csv::num(numeric_traits<S>::to_double(model.Etilde.at(t, c))) << ","
                   << csv::num(numeric_traits<S>::to_double(model.VF.at(t, c))) << "\n";
        tables["survival.csv"] = os.str();
    }
    return res;
}

template <class S>
SuiteResult snell_suite(const RandomTimeModel<S>& model, int T, double tol, uint64_t seed,
                        unsigned long long budget, std::map<std::string, std::string>& tables) {
    SuiteResult res{"snell"};
    CorpusRng rng(seed + 17);
    auto reward = random_stopped_reward(rng, model);
    const int N = model.depth();

    auto gq = snell_transform_GQ(model, reward, T);
    res.add("snell_transform_qtilde", numeric_traits<S>::to_double(gq.certificate), tol);
    if (model.mode == HorizonMode::Open) {
        auto gp = snell_transform_GP(model, reward);
        res.add("snell_transform_base", numeric_traits<S>::to_double(gp.certificate), tol);
    } else {
        res.skip("snell_transform_base", "closed-mode model (G hits zero at the horizon)");
    }
    auto corr = optimal_time_correspondence(model, reward);
    res.add_flag("optimal_time_minimal", corr.minimal_ok);
    res.add_flag("optimal_time_maximal", corr.maximal_ok);

    // envelope properties under (G, P)
    {
        auto env = snell_backward_G(model, reward, 0, N, GMeasure<S>::P(model));
        bool dominates = true;
        for (int t = 0; t <= N; ++t)
            model.for_each_atom(t, [&](uint32_t c, int st) {
                if (env.envelope.at(t, c, st) < reward.at(t, c, st)) dominates = false;
            });
        res.add_flag("envelope_dominates", dominates);
        bool super = true;
        auto mu = GMeasure<S>::P(model);
        for (int t = 1; t <= N; ++t)
            model.for_each_atom(t - 1, [&](uint32_t c, int st) {
                if (st != kAlive) return;
                S pred = g_step_expect<S>(mu, t - 1, c, st, [&](uint32_t cc, int s2) {
                    return env.envelope.at(t, cc, s2);
                });
                if constexpr (numeric_traits<S>::exact) {
                    if (pred > env.envelope.at(t - 1, c, st)) super = false;
                } else {
                    if (numeric_traits<S>::to_double(S(pred - env.envelope.at(t - 1, c, st))) > tol)
                        super = false;
                }
            });
        res.add_flag("envelope_supermartingale", super);
        std::ostringstream os;
        os << "t,atom,status,envelope,reward\n";
        for (int t = 0; t <= N; ++t)
            model.for_each_atom(t, [&](uint32_t c, int st) {
                os << t << "," << c << "," << st << ","
                   << csv::num(numeric_traits<S>::to_double(env.envelope.at(t, c, st))) << ","
                   << csv::num(numeric_traits<S>::to_double(reward.at(t, c, st))) << "\n";
            });
        tables["envelope.csv"] = os.str();
    }

    // oracle equivalence on small trees
    if (N <= 3) {
        // (F, P) on an adapted reward
        auto freward = random_process(rng, model.base);
        auto fb = snell_backward_F(model.base, freward, 0, N);
        auto bf = brute_force_snell_F<S>(model.base, freward, 0, N, nullptr, budget);
        bool ok = detail::close_eq(fb.values_at_start[0], bf.values[0]);
        for (uint32_t pth = 0; pth < (uint32_t{1} << N) && ok; ++pth) {
            int mn = std::min(fb.minimal.time_on_path(N, pth), N);
            int mx = std::min(fb.maximal.time_on_path(N, pth), N);
            ok = (mn == bf.min_time[pth]) && (mx == bf.max_time[pth]);
        }
        res.add_flag("oracle_F_P", ok);
        for (auto measure : {0, 1}) {
            GMeasure<S> mu = measure == 0 ? GMeasure<S>::P(model) : GMeasure<S>::Qtilde(model, T);
            int to = measure == 0 ? N : T;
            auto gb = snell_backward_G(model, reward, 0, to, mu);
            auto bg = brute_force_snell_G(model, reward, 0, to, mu, budget);
            bool gok = true;
            if (model.has_mass(0, 0, kAlive))
                gok = detail::close_eq(gb.envelope.at(0, 0, kAlive), bg.values[0]);
            model.for_each_scenario([&](uint32_t pth, int k, const S&) {
                size_t idx = static_cast<size_t>(pth) * (static_cast<size_t>(N) + 2) +
                             static_cast<size_t>(k);
                if (g_rule_time(model, gb.minimal, pth, k) != bg.min_time[idx]) gok = false;
                if (g_rule_time(model, gb.maximal, pth, k) != bg.max_time[idx]) gok = false;
            });
            res.add_flag(measure == 0 ? "oracle_G_P" : "oracle_G_Qtilde", gok);
        }
    } else {
        res.skip("oracle", "tree too deep for exhaustive rule enumeration");
    }
    return res;
}

template <class S>
SuiteResult rbsde_suite(const RandomTimeModel<S>& model, const RBSDEData<S>& data, double tol,
                        std::map<std::string, std::string>& tables) {
    SuiteResult res{"rbsde"};
    auto dd = [](const S& v) { return numeric_traits<S>::to_double(abs_val(v)); };
    auto sol = solve_G(model, data);
    res.add("equation_residual", dd(sol.diag.equation_residual), tol);
    res.add("skorokhod_residual", dd(sol.diag.skorokhod_residual), tol);
    res.add("barrier_violation", dd(sol.diag.barrier_violation), tol);
    res.add("martingale_drift", dd(sol.diag.martingale_drift), tol);
    res.add("terminal_mismatch", dd(sol.diag.terminal_mismatch), tol);
    res.add_flag("K_nondecreasing", !(sol.diag.k_min_increment < S(0)));
    if (data.barrier) res.add("snell_representation", dd(snell_representation_certificate(model, data, sol)), tol);
    auto tri = solve_F(model, data);
    res.add("F_equation_residual", dd(tri.equation_residual), tol);
    res.add("F_snell_representation", dd(tri.snell_certificate), tol);
    auto mapped = transform_F_to_G(model, tri, data);
    auto gap = compare_solutions(model, sol, mapped);
    res.add("transform_gap_Y", dd(gap.y), tol);
    res.add("transform_gap_K", dd(gap.k), tol);
    res.add("transform_gap_Z", dd(gap.z), tol);
    res.add("transform_gap_M", dd(gap.m), tol);
    res.extra["diagnostics"] = {
        {"equation_residual", dd(sol.diag.equation_residual)},
        {"skorokhod_residual", dd(sol.diag.skorokhod_residual)},
        {"certificates",
         {{"snell_representation",
           data.barrier ? dd(snell_representation_certificate(model, data, sol)) : 0.0},
          {"transform_gap_Y", dd(gap.y)},
          {"transform_gap_K", dd(gap.k)},
          {"transform_gap_Z", dd(gap.z)},
          {"transform_gap_M", dd(gap.m)}}}};

    std::ostringstream os;
    os << "t,atom,status,Y,Z,dM,dK\n";
    for (int t = 0; t <= model.depth(); ++t)
        model.for_each_atom(t, [&](uint32_t c, int st) {
            double dm = 0.0, dk = 0.0;
            if (t >= 1) {
                int pst = (st == t) ? kAlive : st;
                dm = numeric_traits<S>::to_double(
                    S(sol.M.at(t, c, st) - sol.M.at(t - 1, c >> 1, pst)));
                dk = numeric_traits<S>::to_double(
                    S(sol.K.at(t, c, st) - sol.K.at(t - 1, c >> 1, pst)));
            }
            os << t << "," << c << "," << st << ","
               << csv::num(numeric_traits<S>::to_double(sol.Y.at(t, c, st))) << ","
               << csv::num(numeric_traits<S>::to_double(sol.Z.at(t, c, st))) << "," << csv::num(dm)
               << "," << csv::num(dk) << "\n";
        });
    tables["rbsde_solution.csv"] = os.str();
    return res;
}

template <class S>
SuiteResult infinite_horizon_suite(const RandomTimeModel<S>& model, const RBSDEData<S>& data,
                                   double p, double tol, uint64_t seed,
                                   std::map<std::string, std::string>& tables) {
    if (model.mode != HorizonMode::Closed)
        throw ScenarioError(ExitCode::ValidationError,
                            "infinite-horizon-convergence suite needs a closed-mode model");
    SuiteResult res{"infinite-horizon-convergence"};
    auto dd = [](const S& v) { return numeric_traits<S>::to_double(abs_val(v)); };
    auto rh = solve_random_horizon(model, data, p);
    res.add("equation_residual", dd(rh.solution.diag.equation_residual), tol);
    res.add("skorokhod_residual", dd(rh.solution.diag.skorokhod_residual), tol);
    res.add("infinite_transform_gap_Y", dd(rh.transform_gap.y), tol);
    res.add("infinite_transform_gap_K", dd(rh.transform_gap.k), tol);
    res.add("infinite_transform_gap_Z", dd(rh.transform_gap.z), tol);
    res.add("infinite_transform_gap_M", dd(rh.transform_gap.m), tol);
    double float_tol = std::max(tol, 1e-10);
    res.add("weighted_equation_residual", rh.weighted_residual, float_tol);
    bool monotone = true;
    for (size_t i = 1; i < rh.truncation_log.size(); ++i)
        if (rh.truncation_log[i].cauchy_gap > rh.truncation_log[i - 1].cauchy_gap + 1e-12)
            monotone = false;
    res.add_flag("truncation_cauchy_monotone", monotone);
    res.add("truncation_final_gap",
            rh.truncation_log.empty() ? 0.0 : rh.truncation_log.back().gap_to_final, float_tol);
    {
        CorpusRng rng(seed + 31);
        // bounded F-optional multiplier, |B| <= 1, B_0 = 0
        FProcess<S> b(model.depth());
        for (int t = 1; t <= model.depth(); ++t)
            for (uint32_t c = 0; c < (uint32_t{1} << t); ++c)
                b.at(t, c) = rng.template dyadic<S>(0, 8, 8);
        auto rep = limit_gap_check(model, b, std::max(1, model.depth() - 1));
        res.add_flag("limit_gap_bounded", rep.ok(),
                     "gap=" + csv::num(rep.gap) + " bound=" + csv::num(rep.bound));
    }
    res.extra["diagnostics"] = {
        {"equation_residual", dd(rh.solution.diag.equation_residual)},
        {"skorokhod_residual", dd(rh.solution.diag.skorokhod_residual)},
        {"certificates",
         {{"weighted_equation_residual", rh.weighted_residual},
          {"transform_gap_Y", dd(rh.transform_gap.y)},
          {"transform_gap_K", dd(rh.transform_gap.k)}}}};
    std::ostringstream os;
    os << "n,gap_to_final,cauchy_gap\n";
    for (const auto& e : rh.truncation_log)
        os << e.n << "," << csv::num(e.gap_to_final) << "," << csv::num(e.cauchy_gap) << "\n";
    tables["convergence.csv"] = os.str();
    return res;
}

template <class S>
SuiteResult estimates_suite(const RandomTimeModel<S>& model, const RBSDEData<S>& data,
                            const std::vector<double>& ps, const CalibrationLedger& ledger,
                            uint64_t seed, std::map<std::string, std::string>& tables) {
    SuiteResult res{"estimates"};
    auto dmodel = model_to_double(model);
    auto d1 = data_to_double(data);
    CorpusRng rng(seed + 101);
    auto d2 = random_rbsde_data(rng, dmodel.base, d1.T, d1.barrier.has_value());
    std::ostringstream os;
    os << "theorem,p,lhs,rhs,ratio,constant\n";
    auto check = [&](const std::string& key, const EstimateRatio& r, const std::string& name,
                     double p) {
        double cst = ledger.require(key);
        res.add(name, r.ratio, cst);
        os << name << "," << p << "," << csv::num(r.lhs) << "," << csv::num(r.rhs) << ","
           << csv::num(r.ratio) << "," << csv::num(cst) << "\n";
    };
    for (double p : ps) {
        d1.p = d2.p = p;
        auto s1 = solve_G(dmodel, d1);
        auto s2 = solve_G(dmodel, d2);
        check(CalibrationLedger::key("rbsde_qtilde_bound", p), estimate_qtilde_bound(dmodel, d1, s1, p),
              "rbsde_qtilde_bound", p);
        check(CalibrationLedger::key("rbsde_qtilde_stability", p), estimate_qtilde_stability(dmodel, d1, s1, d2, s2, p),
              "rbsde_qtilde_stability", p);
        check(CalibrationLedger::key("rbsde_weighted_bound", p), estimate_weighted_bound(dmodel, d1, s1, p),
              "rbsde_weighted_bound", p);
        check(CalibrationLedger::key("rbsde_weighted_stability", p), estimate_weighted_stability(dmodel, d1, s1, d2, s2, p),
              "rbsde_weighted_stability", p);
        if (dmodel.mode == HorizonMode::Closed) {
            auto r1 = solve_random_horizon(dmodel, d1, p);
            auto r2 = solve_random_horizon(dmodel, d2, p);
            check(CalibrationLedger::key("random_horizon_bound", p),
                  estimate_random_horizon_bound(dmodel, d1, r1.solution, p), "random_horizon_bound", p);
            check(CalibrationLedger::key("random_horizon_stability", p),
                  estimate_random_horizon_stability(dmodel, d1, r1.solution, d2, r2.solution, p), "random_horizon_stability", p);
            check(CalibrationLedger::key("f_side_infinite_bound", p), estimate_f_side_bound(dmodel, d1, r1.f_side, p),
                  "f_side_infinite_bound", p);
        }
    }
    {
        auto sp = FilteredSpace<double>::uniform(std::max(dmodel.depth(), 4), 1.0);
        auto X = random_martingale(rng, sp);
        auto M = random_martingale(rng, sp);
        FProcess<double> H(sp.depth);
        for (int t = 1; t <= sp.depth; ++t)
            for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) H.at(t, c) = X.at(t - 1, c >> 1);
        auto rep = martingale_inequality(sp, H, X, M, 2.0, 4.0, 4.0);
        double cst = ledger.require(CalibrationLedger::key3("martingale_holder", 2, 4, 4));
        res.add("martingale_holder", rep.ratio, cst);
        os << "lemmaA.1,2," << csv::num(rep.lhs) << ","
           << csv::num(rep.factor_a * rep.factor_b) << "," << csv::num(rep.ratio) << ","
           << csv::num(cst) << "\n";
    }
    tables["estimates.csv"] = os.str();
    return res;
}

// ---------------------------------------------------------------------------
// Scenario runner
// ---------------------------------------------------------------------------

struct RunOutput {
    ordered_json report;
    std::map<std::string, std::string> tables;
    bool pass = true;
};

template <class S>
RunOutput run_scenario_typed(const nlohmann::json& cfg, const std::string& ledger_dir) {
    RunOutput out;
    auto model = parse_model<S>(cfg.at("model"));
    const auto& run = cfg.at("run");
    int T = run.value("horizon", model.depth());
    if (T < 1 || T > model.depth())
        throw ScenarioError(ExitCode::ValidationError, "run: horizon out of range");
    double tol = numeric_traits<S>::exact ? 0.0 : run.value("tolerance", 1e-10);
    uint64_t seed = run.value("seed", uint64_t{1});
    unsigned long long budget = enumeration_budget(run);
    std::vector<double> ps;
    if (run.contains("p"))
        for (const auto& v : run.at("p")) ps.push_back(v.get<double>());
    if (ps.empty()) ps.push_back(2.0);

    RBSDEData<S> data;
    data.T = T;
    data.p = ps[0];
    if (!cfg.contains("data"))
        throw ScenarioError(ExitCode::ParseError, "scenario: missing data block");
    const auto& jd = cfg.at("data");
    try {
        data.f = Expr::parse(jd.at("f")).template to_process<S>(model.base);
        data.h = Expr::parse(jd.at("h")).template to_process<S>(model.base);
        if (jd.contains("S") && !jd.at("S").is_null())
            data.barrier = Expr::parse(jd.at("S")).template to_process<S>(model.base);
    } catch (const ScenarioError&) {
        throw;
    } catch (const std::exception& e) {
        throw ScenarioError(ExitCode::ParseError, e.what());
    }
    // terminal dominance is part of validation, not a suite failure
    try {
        detail::check_terminal_dominance(model, data, T);
    } catch (const std::exception& e) {
        throw ScenarioError(ExitCode::ValidationError, e.what());
    }

    std::vector<std::string> suites;
    for (const auto& s : run.at("suites")) suites.push_back(s.get<std::string>());
    ordered_json jsuites = ordered_json::object();
    bool all_pass = true;
    for (const auto& name : suites) {
        SuiteResult r;
        if (name == "identities") {
            r = identities_suite(model, T, tol, seed, out.tables);
        } else if (name == "snell") {
            r = snell_suite(model, T, tol, seed, budget, out.tables);
        } else if (name == "rbsde") {
            r = rbsde_suite(model, data, tol, out.tables);
        } else if (name == "estimates") {
            std::string ledger_path = run.value("ledger", std::string("data/calibration_ledger.json"));
            if (!std::filesystem::path(ledger_path).is_absolute() && !ledger_dir.empty())
                ledger_path = (std::filesystem::path(ledger_dir) / ledger_path).string();
            auto ledger = CalibrationLedger::load(ledger_path);
            r = estimates_suite(model, data, ps, ledger, seed, out.tables);
        } else if (name == "infinite-horizon-convergence") {
            r = infinite_horizon_suite(model, data, ps[0], tol, seed, out.tables);
        } else {
            throw ScenarioError(ExitCode::ValidationError, "unknown suite '" + name + "'");
        }
        ordered_json js;
        js["pass"] = r.pass;
        ordered_json checks = ordered_json::array();
        for (const auto& c : r.checks) {
            ordered_json jc;
            jc["name"] = c.name;
            jc["value"] = c.value;
            jc["threshold"] = c.threshold;
            jc["pass"] = c.pass;
            if (!c.note.empty()) jc["note"] = c.note;
            checks.push_back(jc);
        }
        js["checks"] = checks;
        for (auto it = r.extra.begin(); it != r.extra.end(); ++it) js[it.key()] = it.value();
        jsuites[name] = js;
        all_pass = all_pass && r.pass;
    }
    out.report["schema_version"] = 1;
    out.report["backend"] = numeric_traits<S>::exact ? "rational" : "float";
    out.report["seed"] = seed;
    out.report["horizon"] = T;
    out.report["suites"] = jsuites;
    out.report["pass"] = all_pass;
    out.pass = all_pass;
    return out;
}

/// `run <file> [--out DIR] [--backend rational|float] [--jobs K]`.
inline int run_scenario_file(const std::string& file, const std::string& out_dir,
                             const std::string& backend_override, int /*jobs*/) {
    auto emit_error = [&](ExitCode code, const std::string& kind, const std::string& msg) {
        ordered_json err;
        err["error"] = {{"code", static_cast<int>(code)}, {"kind", kind}, {"message", msg}};
        std::ofstream(std::filesystem::path(out_dir) / "report.json") << err.dump(2) << "\n";
        return static_cast<int>(code);
    };
    std::filesystem::create_directories(out_dir);
    nlohmann::json cfg;
    {
        std::ifstream in(file);
        if (!in) return emit_error(ExitCode::ParseError, "parse", "cannot open " + file);
        try {
            in >> cfg;
        } catch (const std::exception& e) {
            return emit_error(ExitCode::ParseError, "parse", e.what());
        }
    }
    std::string backend = backend_override;
    if (backend.empty() && cfg.contains("run"))
        backend = cfg.at("run").value("backend", std::string("rational"));
    if (backend.empty()) backend = "rational";
    std::string ledger_dir = std::filesystem::path(file).parent_path().parent_path().string();
    try {
        RunOutput out = (backend == "float")
                            ? run_scenario_typed<double>(cfg, ledger_dir)
                            : run_scenario_typed<Rational>(cfg, ledger_dir);
        out.report["scenario_file"] = std::filesystem::path(file).filename().string();
        std::ofstream(std::filesystem::path(out_dir) / "report.json") << out.report.dump(2) << "\n";
        std::filesystem::create_directories(std::filesystem::path(out_dir) / "tables");
        for (const auto& [name, content] : out.tables)
            std::ofstream(std::filesystem::path(out_dir) / "tables" / name) << content;
        return out.pass ? static_cast<int>(ExitCode::Ok)
                        : static_cast<int>(ExitCode::SuiteFailure);
    } catch (const ScenarioError& e) {
        std::string kind = e.code == ExitCode::ParseError      ? "parse"
                           : e.code == ExitCode::BudgetExceeded ? "budget"
                                                                 : "validation";
        return emit_error(e.code, kind, e.what());
    } catch (const BudgetExceeded& e) {
        return emit_error(ExitCode::BudgetExceeded, "budget", e.what());
    } catch (const ModelError& e) {
        return emit_error(ExitCode::ValidationError, "validation", e.what());
    } catch (const nlohmann::json::exception& e) {
        return emit_error(ExitCode::ParseError, "parse", e.what());
    } catch (const std::exception& e) {
        return emit_error(ExitCode::ValidationError, "validation", e.what());
    }
}

/// `calibrate <corpus> --out LEDGER` (deterministic; same seed, same bytes).
inline int calibrate_file(const std::string& corpus_file, const std::string& out_path, int jobs) {
    nlohmann::json spec_json;
    {
        std::ifstream in(corpus_file);
        if (!in) {
            std::fprintf(stderr, "cannot open %s\n", corpus_file.c_str());
            return static_cast<int>(ExitCode::ParseError);
        }
        try {
            in >> spec_json;
        } catch (const std::exception& e) {
            std::fprintf(stderr, "parse error: %s\n", e.what());
            return static_cast<int>(ExitCode::ParseError);
        }
    }
    try {
        auto spec = EstimateCorpusSpec::parse(spec_json);
        auto ratios = corpus_max_ratios(spec, jobs);
        auto ledger = build_ledger_json(spec, ratios);
        if (auto dir = std::filesystem::path(out_path).parent_path(); !dir.empty())
            std::filesystem::create_directories(dir);
        std::ofstream(out_path) << ledger.dump(2) << "\n";
        return static_cast<int>(ExitCode::Ok);
    } catch (const ScenarioError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return static_cast<int>(e.code);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return static_cast<int>(ExitCode::ValidationError);
    }
}

}  // namespace taulab
