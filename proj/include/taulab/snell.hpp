#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "taulab/projections.hpp"
#include "taulab/random_time.hpp"

namespace taulab {

namespace detail {

template <class S>
bool close_eq(const S& a, const S& b) {
    if constexpr (numeric_traits<S>::exact) {
        return a == b;
    } else {
        return std::abs(numeric_traits<S>::to_double(S(a - b))) <= 1e-11;
    }
}

template <class S>
bool strictly_pos(const S& v) {
    if constexpr (numeric_traits<S>::exact) {
        return v > S(0);
    } else {
        return numeric_traits<S>::to_double(v) > 1e-11;
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Backward induction on the base filtration
// ---------------------------------------------------------------------------

template <class S>
struct FSnellResult {
    FProcess<S> envelope;     // filled on [from, to]
    StoppingRule minimal;     // first hitting of {envelope = reward}
    StoppingRule maximal;     // last exit before the predictable part increases
    std::vector<S> values_at_start;
    int from = 0, to = 0;
};

template <class S>
FSnellResult<S> snell_backward_F(const FilteredSpace<S>& sp, const FProcess<S>& reward, int from,
                                 int to, const std::vector<S>* measure = nullptr) {
    if (from < 0 || to > sp.depth || from > to)
        throw std::invalid_argument("snell_backward_F: empty or invalid window");
    FSnellResult<S> res;
    res.from = from;
    res.to = to;
    res.envelope = FProcess<S>(sp.depth);
    res.minimal = StoppingRule::make(StoppingRule::Tag::F, from, to);
    res.maximal = StoppingRule::make(StoppingRule::Tag::F, from, to);
    for (uint32_t c = 0; c < (uint32_t{1} << to); ++c) res.envelope.at(to, c) = reward.at(to, c);
    for (int t = to - 1; t >= from; --t) {
        auto cont = cond_expect(sp, res.envelope.values[static_cast<size_t>(t) + 1], t + 1, t, measure);
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            res.envelope.at(t, c) = max_val(reward.at(t, c), cont[c]);
            // predictable part increases over ]t, t+1] iff envelope_t > continuation
            if (detail::strictly_pos(S(res.envelope.at(t, c) - cont[c])))
                res.maximal.set_stop(t, c);
        }
    }
    for (int t = from; t <= to; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            if (t == to) {
                res.minimal.set_stop(t, c);
                res.maximal.set_stop(t, c);
            } else if (detail::close_eq(res.envelope.at(t, c), reward.at(t, c))) {
                res.minimal.set_stop(t, c);
            }
        }
    res.values_at_start.assign(size_t{1} << from, numeric_traits<S>::zero());
    for (uint32_t c = 0; c < (uint32_t{1} << from); ++c)
        res.values_at_start[c] = res.envelope.at(from, c);
    return res;
}

// ---------------------------------------------------------------------------
// Backward induction on the enlarged filtration
// ---------------------------------------------------------------------------

/// Snell envelope of a tau-stopped reward over G-stopping times with values in
/// [t0 /\ tau, to /\ tau]: death and the window end are forced exits, decisions
/// happen on alive atoms.
template <class S>
struct GSnellResult {
    GProcess<S> envelope;  // filled on [from, to]; frozen at death
    StoppingRule minimal;  // G-rule: flags on alive atoms
    StoppingRule maximal;
    int from = 0, to = 0;
};

template <class S>
GSnellResult<S> snell_backward_G(const RandomTimeModel<S>& model, const GProcess<S>& reward,
                                 int from, int to, const GMeasure<S>& mu) {
    if (from < 0 || to > model.depth() || from > to)
        throw std::invalid_argument("snell_backward_G: empty or invalid window");
    GSnellResult<S> res;
    res.from = from;
    res.to = to;
    res.envelope = GProcess<S>(model.depth());
    res.minimal = StoppingRule::make(StoppingRule::Tag::G, from, to);
    res.maximal = StoppingRule::make(StoppingRule::Tag::G, from, to);
    for (int t = from; t <= to; ++t)
        model.for_each_atom(t, [&](uint32_t c, int st) {
            if (st != kAlive) res.envelope.at(t, c, st) = reward.at(t, c, st);
        });
    for (uint32_t c = 0; c < (uint32_t{1} << to); ++c)
        if (model.has_mass(to, c, kAlive)) res.envelope.at(to, c, kAlive) = reward.at(to, c, kAlive);
    for (int t = to - 1; t >= from; --t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            if (!model.has_mass(t, c, kAlive)) continue;
            S cont = g_step_expect<S>(mu, t, c, kAlive, [&](uint32_t cc, int s2) {
                return res.envelope.at(t + 1, cc, s2);
            });
            res.envelope.at(t, c, kAlive) = max_val(reward.at(t, c, kAlive), cont);
            if (detail::strictly_pos(S(res.envelope.at(t, c, kAlive) - cont)))
                res.maximal.set_stop(t, c);
        }
    for (int t = from; t <= to; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            if (!model.has_mass(t, c, kAlive)) continue;
            if (t == to) {
                res.minimal.set_stop(t, c);
                res.maximal.set_stop(t, c);
            } else if (detail::close_eq(res.envelope.at(t, c, kAlive), reward.at(t, c, kAlive))) {
                res.minimal.set_stop(t, c);
            }
        }
    return res;
}

// ---------------------------------------------------------------------------
// Brute-force oracles over enumerated stopping rules
// ---------------------------------------------------------------------------

template <class S>
struct BruteForceResult {
    std::vector<S> values;      // per start atom
    std::vector<int> min_time;  // pointwise over globally optimal rules
    std::vector<int> max_time;
    unsigned long long rule_count = 0;
};

template <class S>
BruteForceResult<S> brute_force_snell_F(const FilteredSpace<S>& sp, const FProcess<S>& reward,
                                        int from, int to, const std::vector<S>* measure,
                                        unsigned long long budget) {
    auto view = f_rule_tree(sp, from, to);
    const std::vector<S>& mu = measure ? *measure : sp.path_prob;

    auto rule_values = [&](const StoppingRule& rule) {
        std::vector<S> vals(size_t{1} << from);
        std::function<S(int, uint32_t)> rec = [&](int t, uint32_t c) -> S {
            if (rule.stops_at(t, c) || t == to) return reward.at(t, c);
            // conditional one-step weights under mu
            S m0 = numeric_traits<S>::zero(), m1 = numeric_traits<S>::zero();
            {
                // mass of children atoms under mu
                std::function<S(int, uint32_t)> mass = [&](int tt, uint32_t cc) -> S {
                    S acc = numeric_traits<S>::zero();
                    uint32_t lo = cc << (sp.depth - tt), hi = (cc + 1u) << (sp.depth - tt);
                    for (uint32_t p = lo; p < hi; ++p) acc = S(acc + mu[p]);
                    return acc;
                };
                m0 = mass(t + 1, 2 * c);
                m1 = mass(t + 1, 2 * c + 1);
            }
            S v0 = rec(t + 1, 2 * c), v1 = rec(t + 1, 2 * c + 1);
            return S((S(m0 * v0) + S(m1 * v1)) / S(m0 + m1));
        };
        for (uint32_t c = 0; c < (uint32_t{1} << from); ++c) vals[c] = rec(from, c);
        return vals;
    };

    BruteForceResult<S> res;
    res.values.assign(size_t{1} << from, numeric_traits<S>::zero());
    res.min_time.assign(size_t{1} << sp.depth, to + 1);
    res.max_time.assign(size_t{1} << sp.depth, -1);
    bool first = true;
    // pass 1: per-atom maxima
    enumerate_stopping_rules(view, StoppingRule::Tag::F, budget, [&](const StoppingRule& rule) {
        ++res.rule_count;
        auto vals = rule_values(rule);
        for (uint32_t c = 0; c < vals.size(); ++c)
            if (first || res.values[c] < vals[c]) res.values[c] = vals[c];
        first = false;
    });
    // pass 2: stop-time extremes over rules optimal at every start atom
    enumerate_stopping_rules(view, StoppingRule::Tag::F, budget, [&](const StoppingRule& rule) {
        auto vals = rule_values(rule);
        for (uint32_t c = 0; c < vals.size(); ++c)
            if (!detail::close_eq(vals[c], res.values[c])) return;
        for (uint32_t p = 0; p < (uint32_t{1} << sp.depth); ++p) {
            int t = std::min(rule.time_on_path(sp.depth, p), to);
            res.min_time[p] = std::min(res.min_time[p], t);
            res.max_time[p] = std::max(res.max_time[p], t);
        }
    });
    return res;
}

/// Decision structure of G-stopping rules with values in [from, to /\ tau]:
/// choices live on positive-mass alive atoms, death is a forced exit.
template <class S>
RuleTreeView g_rule_tree(const RandomTimeModel<S>& model, int from, int to) {
    if (from < 0 || to > model.depth() || from > to)
        throw std::invalid_argument("rule window out of range");
    RuleTreeView view;
    view.from = from;
    view.to = to;
    for (uint32_t c = 0; c < (uint32_t{1} << from); ++c)
        if (model.has_mass(from, c, kAlive)) view.roots.push_back(c);
    view.children = [&model](int t, uint32_t c) {
        std::vector<uint32_t> out;
        for (uint32_t b = 0; b < 2; ++b)
            if (model.has_mass(t + 1, 2 * c + b, kAlive)) out.push_back(2 * c + b);
        return out;
    };
    return view;
}

template <class S>
BruteForceResult<S> brute_force_snell_G(const RandomTimeModel<S>& model, const GProcess<S>& reward,
                                        int from, int to, const GMeasure<S>& mu,
                                        unsigned long long budget) {
    const int N = model.depth();
    RuleTreeView view = g_rule_tree(model, from, to);

    auto rule_values = [&](const StoppingRule& rule) {
        std::vector<S> vals(size_t{1} << from, numeric_traits<S>::zero());
        std::function<S(int, uint32_t)> rec = [&](int t, uint32_t c) -> S {
            if (rule.stops_at(t, c) || t == to) return reward.at(t, c, kAlive);
            return g_step_expect<S>(mu, t, c, kAlive, [&](uint32_t cc, int s2) -> S {
                if (s2 != kAlive) return reward.at(t + 1, cc, s2);  // death exits
                return rec(t + 1, cc);
            });
        };
        for (uint32_t c : view.roots) vals[c] = rec(from, c);
        return vals;
    };

    BruteForceResult<S> res;
    res.values.assign(size_t{1} << from, numeric_traits<S>::zero());
    res.min_time.assign((size_t{1} << N) * (static_cast<size_t>(N) + 2), to + 1);
    res.max_time.assign((size_t{1} << N) * (static_cast<size_t>(N) + 2), -1);
    bool first = true;
    enumerate_stopping_rules(view, StoppingRule::Tag::G, budget, [&](const StoppingRule& rule) {
        ++res.rule_count;
        auto vals = rule_values(rule);
        for (uint32_t c : view.roots)
            if (first || res.values[c] < vals[c]) res.values[c] = vals[c];
        first = false;
    });
    enumerate_stopping_rules(view, StoppingRule::Tag::G, budget, [&](const StoppingRule& rule) {
        auto vals = rule_values(rule);
        for (uint32_t c : view.roots)
            if (!detail::close_eq(vals[c], res.values[c])) return;
        model.for_each_scenario([&](uint32_t p, int k, const S&) {
            size_t idx = static_cast<size_t>(p) * (static_cast<size_t>(N) + 2) +
                         static_cast<size_t>(k);
            int t = g_rule_time(model, rule, p, k);
            res.min_time[idx] = std::min(res.min_time[idx], t);
            res.max_time[idx] = std::max(res.max_time[idx], t);
        });
    });
    return res;
}

// ---------------------------------------------------------------------------
// Snell envelope transforms across the enlargement
// ---------------------------------------------------------------------------

namespace detail {

/// Assemble a tau-stopped G-process from per-step alive increments and death
/// jumps added to the carried alive value: value stays frozen after death.
template <class S>
GProcess<S> accumulate_stopped(const RandomTimeModel<S>& model, const FProcess<S>& alive_incr,
                               const FProcess<S>& death_jump) {
    const int N = model.depth();
    FProcess<S> alive_run(N), death_val(N);
    for (int t = 0; t <= N; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            S prev = (t == 0) ? numeric_traits<S>::zero() : alive_run.at(t - 1, c >> 1);
            alive_run.at(t, c) = S(prev + alive_incr.at(t, c));
            death_val.at(t, c) = S(prev + death_jump.at(t, c));
        }
    return g_stopped_process(model, alive_run, death_val);
}

}  // namespace detail

/// Certificate report for the envelope transforms: both sides plus the worst
/// atom-wise difference over the certified domain.
template <class S>
struct SnellTransformResult {
    GSnellResult<S> lhs;
    GProcess<S> rhs;
    FSnellResult<S> f_side;
    ReductionPair<S> pair;
    S certificate;
};

/// The (G,P)-Snell envelope of a tau-stopped reward expressed from
/// the (F,P)-Snell envelope of X^F G + k^{(op)} . D^{o,F}. Requires G > 0 on
/// the whole horizon (open-mode models).
template <class S>
SnellTransformResult<S> snell_transform_GP(const RandomTimeModel<S>& model, const GProcess<S>& x) {
    if (model.mode != HorizonMode::Open)
        throw std::invalid_argument("snell_transform_GP: requires G > 0 through the horizon");
    if (model.dDoF.at(0, 0) > S(0))
        throw std::invalid_argument("snell_transform_GP: tau = 0 mass not supported");
    const int N = model.depth();
    SnellTransformResult<S> res;
    res.pair = reduce_G_to_F(model, x);
    FProcess<S> kop_dof = f_integral(model.base, res.pair.k_op, model.DoF);  // k^{(op)} . D^{o,F}
    FProcess<S> xtilde(N);
    for (int t = 0; t <= N; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c)
            xtilde.at(t, c) = S(S(res.pair.X_F.at(t, c) * model.G.at(t, c)) + kop_dof.at(t, c));
    res.f_side = snell_backward_F(model.base, xtilde, 0, N);
    res.lhs = snell_backward_G(model, x, 0, N, GMeasure<S>::P(model));

    // transform right-hand side: running integrals along alive histories; the
    // (k^{(op)} + (k^{(op)}.D^{o,F})/G) . N^G death jump collapses to
    // k^{(op)}_s (1 - comp) + (k^{(op)}.D^{o,F})_s / G~_s
    FProcess<S> alive_incr(N), death_jump(N);
    for (int t = 1; t <= N; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            uint32_t par = c >> 1;
            S dm = S(model.m.at(t, c) - model.m.at(t - 1, par));
            S dTm = S(dm - S(S(dm * dm) / model.Gtilde.at(t, c)));
            S pred = S(kop_dof.at(t - 1, par) /
                       S(model.G.at(t - 1, par) * model.G.at(t - 1, par)));
            S comp = S(model.dDoF.at(t, c) / model.Gtilde.at(t, c));
            S alive_ng = numeric_traits<S>::zero();
            if (comp > S(0) && model.has_mass(t, c, kAlive)) {
                S ng_weight = S(res.pair.k_op.at(t, c) + S(kop_dof.at(t, c) / model.G.at(t, c)));
                alive_ng = S(ng_weight * S(S(0) - comp));
            }
            S death_ng = S(S(res.pair.k_op.at(t, c) * S(numeric_traits<S>::one() - comp)) +
                           S(kop_dof.at(t, c) / model.Gtilde.at(t, c)));
            alive_incr.at(t, c) = S(S(pred * dTm) + alive_ng);
            death_jump.at(t, c) = S(S(pred * dTm) + res.pair.k_F.at(t, c) + death_ng);
        }
    res.rhs = detail::accumulate_stopped(model, alive_incr, death_jump);
    // add the non-integral term (S^F / G) I_{[0,tau[}
    for (int t = 0; t <= N; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            if (!model.has_mass(t, c, kAlive)) continue;
            res.rhs.at(t, c, kAlive) =
                S(res.rhs.at(t, c, kAlive) + S(res.f_side.envelope.at(t, c) / model.G.at(t, c)));
        }

    res.certificate = numeric_traits<S>::zero();
    for (int t = 0; t <= N; ++t)
        model.for_each_atom(t, [&](uint32_t c, int st) {
            res.certificate = max_val(
                res.certificate, abs_val(S(res.lhs.envelope.at(t, c, st) - res.rhs.at(t, c, st))));
        });
    return res;
}

/// The (G,Q~)-Snell envelope of the T-stopped reward from the
/// (F,P)-Snell envelope of (X^F E~ - k^{(op)} . E~)^T.
template <class S>
SnellTransformResult<S> snell_transform_GQ(const RandomTimeModel<S>& model, const GProcess<S>& x,
                                           int T) {
    if (T < 0 || T > model.depth()) throw std::invalid_argument("snell_transform_GQ: bad horizon");
    if (model.dDoF.at(0, 0) > S(0))
        throw std::invalid_argument("snell_transform_GQ: tau = 0 mass not supported");
    const int N = model.depth();
    SnellTransformResult<S> res;
    res.pair = reduce_G_to_F(model, x);
    FProcess<S> kop_de = f_integral(model.base, res.pair.k_op, model.Etilde);  // k^{(op)} . E~
    FProcess<S> reward_f(N);
    for (int t = 0; t <= N; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c)
            reward_f.at(t, c) =
                S(S(res.pair.X_F.at(t, c) * model.Etilde.at(t, c)) - kop_de.at(t, c));
    res.f_side = snell_backward_F(model.base, reward_f, 0, T);
    res.lhs = snell_backward_G(model, x, 0, T, GMeasure<S>::Qtilde(model, T));

    // the (k^{(op)} - (k^{(op)}.E~)/E~) . N^G death jump in the cancelled form
    // k^{(op)}_s (1 - comp) - (k^{(op)}.E~)_s / E~_{s-1}
    FProcess<S> alive_incr(N), death_jump(N);
    for (int t = 1; t <= T; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            S comp = S(model.dDoF.at(t, c) / model.Gtilde.at(t, c));
            S alive_term = numeric_traits<S>::zero();
            if (comp > S(0) && model.has_mass(t, c, kAlive)) {
                S ng_weight =
                    S(res.pair.k_op.at(t, c) - S(kop_de.at(t, c) / model.Etilde.at(t, c)));
                alive_term = S(ng_weight * S(S(0) - comp));
            }
            S death_term = S(S(res.pair.k_op.at(t, c) * S(numeric_traits<S>::one() - comp)) -
                             S(kop_de.at(t, c) / model.Etilde.at(t - 1, c >> 1)));
            alive_incr.at(t, c) = alive_term;
            death_jump.at(t, c) = S(death_term + res.pair.k_F.at(t, c));
        }
    res.rhs = detail::accumulate_stopped(model, alive_incr, death_jump);
    for (int t = 0; t <= T; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            if (!model.has_mass(t, c, kAlive)) continue;
            res.rhs.at(t, c, kAlive) = S(res.rhs.at(t, c, kAlive) +
                                         S(res.f_side.envelope.at(t, c) / model.Etilde.at(t, c)));
        }

    res.certificate = numeric_traits<S>::zero();
    for (int t = 0; t <= T; ++t)
        model.for_each_atom(t, [&](uint32_t c, int st) {
            res.certificate = max_val(
                res.certificate, abs_val(S(res.lhs.envelope.at(t, c, st) - res.rhs.at(t, c, st))));
        });
    return res;
}

// ---------------------------------------------------------------------------
// Optimal stopping times across filtrations
// ---------------------------------------------------------------------------

struct TimeCorrespondenceReport {
    bool minimal_ok = true;
    bool maximal_ok = true;
    std::string detail;
};

template <class S>
TimeCorrespondenceReport optimal_time_correspondence(const RandomTimeModel<S>& model,
                                                     const GProcess<S>& x) {
    const int N = model.depth();
    auto pair = reduce_G_to_F(model, x);
    FProcess<S> kop_dof = f_integral(model.base, pair.k_op, model.DoF);
    FProcess<S> xtilde(N);
    for (int t = 0; t <= N; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c)
            xtilde.at(t, c) = S(S(pair.X_F.at(t, c) * model.G.at(t, c)) + kop_dof.at(t, c));
    auto g_res = snell_backward_G(model, x, 0, N, GMeasure<S>::P(model));
    auto f_res = snell_backward_F(model.base, xtilde, 0, N);
    TimeCorrespondenceReport rep;
    model.for_each_scenario([&](uint32_t p, int k, const S&) {
        int death = (k <= N) ? k : N + 1;
        int g_min = g_rule_time(model, g_res.minimal, p, k);
        int g_max = g_rule_time(model, g_res.maximal, p, k);
        int f_min = std::min(f_res.minimal.time_on_path(N, p), N);
        int f_max = std::min(f_res.maximal.time_on_path(N, p), N);
        if (g_min != std::min(f_min, death)) rep.minimal_ok = false;
        if (g_max != std::min(f_max, death)) rep.maximal_ok = false;
    });
    if (!rep.minimal_ok) rep.detail += "theta_*^G != theta_*^F /\\ tau; ";
    if (!rep.maximal_ok) rep.detail += "theta~^G != theta~^F /\\ tau; ";
    return rep;
}

// ---------------------------------------------------------------------------
// Semimartingale identities linking F-integrands to the enlargement
// ---------------------------------------------------------------------------

template <class S>
struct SemimartingaleIdentitiesReport {
    S exp_ratio;
    S survival_ratio;
    S compensator_ratio;
};

template <class S>
SemimartingaleIdentitiesReport<S> semimartingale_identities(const RandomTimeModel<S>& model,
                                                            const FProcess<S>& L,
                                                            const FProcess<S>& kk) {
    const int N = model.depth();
    SemimartingaleIdentitiesReport<S> rep{numeric_traits<S>::zero(), numeric_traits<S>::zero(),
                                          numeric_traits<S>::zero()};
    auto in_domain = [&](int t, int st) {
        if (model.mode == HorizonMode::Open) return true;
        return st == kAlive ? t < N : st < N;
    };

    // L E~^{-1} I_{[0,tau[} + (L E~^{-1}) . N^G = L_0 I_{tau>0} + E~_-^{-1} . L^tau
    // The death jump of the integral is evaluated in the cancelled form
    // (L/E~_s)(1 - dD^{o,F}/G~)_s = L_s / E~_{s-1}, which stays finite at a
    // forced horizon death where E~_s = 0.
    {
        FProcess<S> alive_incr(N), death_jump(N);
        for (int t = 1; t <= N; ++t)
            for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
                S comp = S(model.dDoF.at(t, c) / model.Gtilde.at(t, c));
                S a = numeric_traits<S>::zero();
                if (comp > S(0) && model.has_mass(t, c, kAlive))
                    a = S(S(L.at(t, c) / model.Etilde.at(t, c)) * S(S(0) - comp));
                alive_incr.at(t, c) = a;
                death_jump.at(t, c) = S(L.at(t, c) / model.Etilde.at(t - 1, c >> 1));
            }
        auto integral = detail::accumulate_stopped(model, alive_incr, death_jump);
        FProcess<S> dl_incr(N);
        for (int t = 1; t <= N; ++t)
            for (uint32_t c = 0; c < (uint32_t{1} << t); ++c)
                dl_incr.at(t, c) =
                    S(S(L.at(t, c) - L.at(t - 1, c >> 1)) / model.Etilde.at(t - 1, c >> 1));
        auto rhs_int = detail::accumulate_stopped(model, dl_incr, dl_incr);
        for (int t = 0; t <= N; ++t)
            model.for_each_atom(t, [&](uint32_t c, int st) {
                S lhs = integral.at(t, c, st);
                if (st == kAlive) lhs = S(lhs + S(L.at(t, c) / model.Etilde.at(t, c)));
                S rhs = rhs_int.at(t, c, st);
                if (!(st == 0)) rhs = S(rhs + L.at(0, 0));
                rep.exp_ratio = max_val(rep.exp_ratio, abs_val(S(lhs - rhs)));
            });
    }

    auto Tm = transform_T(model, model.m);
    auto TL = transform_T(model, L);

    // L/G I_{[0,tau[} = L_0/G_0 I_{tau>0} - (L_-/G_-^2) . T(m)
    //         + (1/G_-) . T(L) - (L/G) . N^G
    // At a death the (L/G).N^G jump collapses to L_s/G~_s, finite even when
    // G_s = 0 at a forced horizon death.
    {
        FProcess<S> alive_incr(N), death_jump(N);
        for (int t = 1; t <= N; ++t)
            for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
                uint32_t par = c >> 1;
                S dTm = S(Tm.at(t, c, t) - Tm.at(t - 1, par, kAlive));
                S dTL = S(TL.at(t, c, t) - TL.at(t - 1, par, kAlive));
                // jump values of T(m), T(L) at s are status-independent (alive
                // and newly-dead get the same increment)
                S coef_m = S(S(0) - S(L.at(t - 1, par) /
                                      S(model.G.at(t - 1, par) * model.G.at(t - 1, par))));
                S coef_L = S(numeric_traits<S>::one() / model.G.at(t - 1, par));
                S base = S(S(coef_m * dTm) + S(coef_L * dTL));
                S comp = S(model.dDoF.at(t, c) / model.Gtilde.at(t, c));
                S alive_ng = numeric_traits<S>::zero();
                if (comp > S(0) && model.has_mass(t, c, kAlive))
                    alive_ng = S(S(L.at(t, c) / model.G.at(t, c)) * S(S(0) - comp));
                alive_incr.at(t, c) = S(base - alive_ng);
                death_jump.at(t, c) = S(base - S(L.at(t, c) / model.Gtilde.at(t, c)));
            }
        auto rhs = detail::accumulate_stopped(model, alive_incr, death_jump);
        for (int t = 0; t <= N; ++t)
            model.for_each_atom(t, [&](uint32_t c, int st) {
                S lhs = (st == kAlive) ? S(L.at(t, c) / model.G.at(t, c))
                                       : numeric_traits<S>::zero();
                S r = rhs.at(t, c, st);
                if (!(st == 0)) r = S(r + S(L.at(0, 0) / model.G.at(0, 0)));
                rep.survival_ratio = max_val(rep.survival_ratio, abs_val(S(lhs - r)));
            });
    }

    // -V^tau / G^tau = (V_-/G_-^2) . T(m) - ((k + V/G)/G~) I_{]0,tau]} . D^{o,F}
    {
        FProcess<S> V = f_integral(model.base, kk, model.DoF);
        FProcess<S> alive_incr(N), death_jump(N);
        for (int t = 1; t <= N; ++t)
            for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
                uint32_t par = c >> 1;
                S dTm = S(Tm.at(t, c, t) - Tm.at(t - 1, par, kAlive));
                S pred = S(V.at(t - 1, par) /
                           S(model.G.at(t - 1, par) * model.G.at(t - 1, par)));
                S base = S(pred * dTm);
                S ddof = model.dDoF.at(t, c);
                if (ddof > S(0) && in_domain(t, t)) {
                    S integrand = S(S(kk.at(t, c) + S(V.at(t, c) / model.G.at(t, c))) /
                                    model.Gtilde.at(t, c));
                    base = S(base - S(integrand * ddof));
                }
                alive_incr.at(t, c) = base;
                death_jump.at(t, c) = base;
            }
        auto rhs = detail::accumulate_stopped(model, alive_incr, death_jump);
        for (int t = 0; t <= N; ++t)
            model.for_each_atom(t, [&](uint32_t c, int st) {
                if (!in_domain(t, st)) return;
                int u = (st == kAlive) ? t : st;
                uint32_t cu = c >> (t - u);
                S lhs = S(S(0) - S(V.at(u, cu) / model.G.at(u, cu)));
                rep.compensator_ratio = max_val(rep.compensator_ratio, abs_val(S(lhs - rhs.at(t, c, st))));
            });
    }
    return rep;
}

}  // namespace taulab
