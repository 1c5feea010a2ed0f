#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "taulab/random_time.hpp"

namespace taulab {

/// F-optional projection: (^{o,F}X)_t = E[X_t | F_t], atom-wise.
template <class S>
FProcess<S> optional_projection_F(const RandomTimeModel<S>& model, const GProcess<S>& x) {
    FProcess<S> out(model.depth());
    for (int t = 0; t <= model.depth(); ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            S num = numeric_traits<S>::zero();
            for (int st = kAlive; st <= t; ++st) {
                const S& mass = model.gmass[static_cast<size_t>(t)][g_slot(t, c, st)];
                if (mass > S(0)) num = S(num + S(mass * x.at(t, c, st)));
            }
            out.at(t, c) = S(num / model.base.atom_mass[static_cast<size_t>(t)][c]);
        }
    return out;
}

/// Alive-projection identity E[X_t|G_t] 1_{t<tau} = G_t^{-1} E[X_t 1_{t<tau}|F_t] 1_{t<tau}.
/// Returns the worst atom-wise discrepancy.
template <class S>
S alive_projection_gap(const RandomTimeModel<S>& model, const GProcess<S>& x) {
    S worst = numeric_traits<S>::zero();
    for (int t = 0; t <= model.depth(); ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            const S& alive_mass = model.gmass[static_cast<size_t>(t)][g_slot(t, c, kAlive)];
            if (!(alive_mass > S(0))) continue;
            // lhs: E[X_t | G_t] on the alive atom is X itself (X_t is G_t-measurable);
            // the identity is exercised against the F-side route.
            S lhs = x.at(t, c, kAlive);
            S rhs = S(S(alive_mass * x.at(t, c, kAlive)) /
                      S(model.base.atom_mass[static_cast<size_t>(t)][c] * model.G.at(t, c)));
            worst = max_val(worst, abs_val(S(lhs - rhs)));
        }
    return worst;
}

/// Dual projections of a finite-variation G-process: increments E[dV_t|F_t]
/// (optional) resp. E[dV_t|F_{t-1}] (predictable); the time-0 jump is V_0.
template <class S>
struct DualProjections {
    FProcess<S> optional_dual;
    FProcess<S> predictable_dual;
};

template <class S>
DualProjections<S> dual_projections(const RandomTimeModel<S>& model, const GProcess<S>& v) {
    const int N = model.depth();
    DualProjections<S> out{FProcess<S>(N), FProcess<S>(N)};
    // time-0 jump
    {
        S num = numeric_traits<S>::zero();
        for (int st = kAlive; st <= 0; ++st) {
            const S& mass = model.gmass[0][g_slot(0, 0, st)];
            if (mass > S(0)) num = S(num + S(mass * v.at(0, 0, st)));
        }
        S j0 = S(num / model.base.atom_mass[0][0]);
        out.optional_dual.at(0, 0) = j0;
        out.predictable_dual.at(0, 0) = j0;
    }
    for (int t = 1; t <= N; ++t) {
        std::vector<S> opt_incr(size_t{1} << t, numeric_traits<S>::zero());
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            S num = numeric_traits<S>::zero();
            for (int st = kAlive; st <= t; ++st) {
                const S& mass = model.gmass[static_cast<size_t>(t)][g_slot(t, c, st)];
                if (!(mass > S(0))) continue;
                int pst = (st == t) ? kAlive : st;  // parent-status at t-1
                S dv = S(v.at(t, c, st) - v.at(t - 1, c >> 1, pst));
                num = S(num + S(mass * dv));
            }
            opt_incr[c] = S(num / model.base.atom_mass[static_cast<size_t>(t)][c]);
            out.optional_dual.at(t, c) = S(out.optional_dual.at(t - 1, c >> 1) + opt_incr[c]);
        }
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            uint32_t par = c >> 1;
            S num = numeric_traits<S>::zero();
            for (uint32_t b = 0; b < 2; ++b) {
                uint32_t cc = 2 * par + b;
                num = S(num + S(model.base.atom_mass[static_cast<size_t>(t)][cc] * opt_incr[cc]));
            }
            S pred = S(num / model.base.atom_mass[static_cast<size_t>(t) - 1][par]);
            out.predictable_dual.at(t, c) = S(out.predictable_dual.at(t - 1, par) + pred);
        }
    }
    return out;
}

/// Unique reduction of a tau-stopped G-optional process to F-data
/// X^G = X^F I_{[0,tau[} + k^{(pr)} . D, with the mu-optional
/// projection k^{(op)} and the orthogonal remainder k^{(F)}.
template <class S>
struct ReductionPair {
    FProcess<S> X_F;
    FProcess<S> k_pr;  // diagonal values: k^{(pr)}(t, .) where tau = t
    FProcess<S> k_op;
    FProcess<S> k_F;   // k^{(pr)} - k^{(op)}; M^P_mu(k^{(F)} | O(F)) = 0
};

template <class S>
ReductionPair<S> reduce_G_to_F(const RandomTimeModel<S>& model, const GProcess<S>& x) {
    if (!is_stopped_at_tau(model, x))
        throw std::invalid_argument("reduce_G_to_F: process is not stopped at tau");
    const int N = model.depth();
    ReductionPair<S> r{FProcess<S>(N), FProcess<S>(N), FProcess<S>(N), FProcess<S>(N)};
    for (int t = 0; t <= N; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            const S& alive_mass = model.gmass[static_cast<size_t>(t)][g_slot(t, c, kAlive)];
            if (alive_mass > S(0)) {
                // ^{o,F}(X 1_{[0,tau[}) / G evaluated atom-wise
                S num = S(alive_mass * x.at(t, c, kAlive));
                r.X_F.at(t, c) =
                    S(S(num / model.base.atom_mass[static_cast<size_t>(t)][c]) / model.G.at(t, c));
            }
            const S& dead_mass = model.gmass[static_cast<size_t>(t)][g_slot(t, c, t)];
            if (dead_mass > S(0)) {
                r.k_pr.at(t, c) = x.at(t, c, t);
                // mu-optional projection: weighted average over the {tau = t} fiber
                S num = S(dead_mass * x.at(t, c, t));
                r.k_op.at(t, c) = S(S(num / model.base.atom_mass[static_cast<size_t>(t)][c]) /
                                    model.dDoF.at(t, c));
            }
            r.k_F.at(t, c) = S(r.k_pr.at(t, c) - r.k_op.at(t, c));
        }
    return r;
}

/// Rebuild the stopped G-process from its reduction pair.
template <class S>
GProcess<S> reconstruct_from_pair(const RandomTimeModel<S>& model, const ReductionPair<S>& pair) {
    return g_stopped_process(model, pair.X_F, pair.k_pr);
}

/// Check the defining duality of k^{(op)} against the atom-indicator
/// basis of bounded F-optional processes. Returns worst discrepancy.
template <class S>
S mu_projection_discrepancy(const RandomTimeModel<S>& model, const ReductionPair<S>& pair) {
    S worst = numeric_traits<S>::zero();
    for (int t = 0; t <= model.depth(); ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            // H = 1_{(t, c)}: both sides of E[int X H dD] restricted to the fiber
            const S& dead_mass = model.gmass[static_cast<size_t>(t)][g_slot(t, c, t)];
            if (!(dead_mass > S(0))) continue;
            S lhs = S(dead_mass * pair.k_pr.at(t, c));
            S rhs = S(dead_mass * pair.k_op.at(t, c));
            worst = max_val(worst, abs_val(S(lhs - rhs)));
        }
    return worst;
}

/// Semimartingale split (X^G)^tau = (X^F)^tau + (k^{(pr)} - X^F) . D.
template <class S>
S decomposition_discrepancy(const RandomTimeModel<S>& model, const GProcess<S>& x,
                            const ReductionPair<S>& pair) {
    S worst = numeric_traits<S>::zero();
    for (int t = 0; t <= model.depth(); ++t)
        model.for_each_atom(t, [&](uint32_t c, int st) {
            S rhs;
            if (st == kAlive) {
                rhs = pair.X_F.at(t, c);
            } else {
                uint32_t cs = c >> (t - st);
                rhs = S(pair.X_F.at(st, cs) +
                        S(pair.k_pr.at(st, cs) - pair.X_F.at(st, cs)));
            }
            worst = max_val(worst, abs_val(S(x.at(t, c, st) - rhs)));
        });
    return worst;
}

/// Integrability-transfer quantities and the sandwich I/2 <= sup <= I.
/// The sandwich needs tau observed almost surely (closed-mode models).
template <class S>
struct IntegrabilityReport {
    S sup_q;       // E[sup_t |X^G_t|^q]
    S kpr_lq;      // E[|k^{(pr)}_tau|^q 1_{tau <= N}]
    S xf_dof;      // E[(sup_{s<.} |X^F_s|^q . D^{o,F})_inf]
    bool sandwich_checked = false;
    bool sandwich_ok = true;
};

template <class S>
IntegrabilityReport<S> integrability_transfer(const RandomTimeModel<S>& model,
                                              const GProcess<S>& x, double q) {
    auto pair = reduce_G_to_F(model, x);
    IntegrabilityReport<S> rep;
    rep.sup_q = numeric_traits<S>::zero();
    rep.kpr_lq = numeric_traits<S>::zero();
    rep.xf_dof = numeric_traits<S>::zero();
    const int N = model.depth();
    model.for_each_scenario([&](uint32_t p, int k, const S& w) {
        S sup = numeric_traits<S>::zero();
        for (int t = 0; t <= N; ++t) {
            S v = abs_val(x.at(t, p >> (N - t), model.status_at(k, t)));
            sup = max_val(sup, v);
        }
        rep.sup_q = S(rep.sup_q + S(w * pow_abs(sup, q)));
        if (k <= N)
            rep.kpr_lq = S(rep.kpr_lq + S(w * pow_abs(pair.k_pr.at(k, p >> (N - k)), q)));
    });
    for (int s = 0; s <= N; ++s)
        for (uint32_t c = 0; c < (uint32_t{1} << s); ++c) {
            S run = numeric_traits<S>::zero();
            for (int u = 0; u < s; ++u) run = max_val(run, pow_abs(pair.X_F.at(u, c >> (s - u)), q));
            S mass = S(model.base.atom_mass[static_cast<size_t>(s)][c] * model.dDoF.at(s, c));
            rep.xf_dof = S(rep.xf_dof + S(mass * run));
        }
    if (model.mode == HorizonMode::Closed) {
        rep.sandwich_checked = true;
        S total = S(rep.kpr_lq + rep.xf_dof);
        S two_sup = S(S(2) * rep.sup_q);
        rep.sandwich_ok = !(rep.sup_q > total) && !(total > two_sup);
    }
    return rep;
}

/// Class-D transfer inequality: for an F-rule sigma and cutoff c,
/// E[|X^F_s| G_s 1_{|X^F_s| G_s > c}] <= E[|X^G_s| 1_{s<tau} 1_{|X^G_s| > c}].
template <class S>
bool class_D_transfer_holds(const RandomTimeModel<S>& model, const GProcess<S>& x,
                            const StoppingRule& sigma, const S& cutoff) {
    auto pair = reduce_G_to_F(model, x);
    const int N = model.depth();
    S lhs = numeric_traits<S>::zero(), rhs = numeric_traits<S>::zero();
    model.for_each_scenario([&](uint32_t p, int k, const S& w) {
        int s = std::min(sigma.time_on_path(N, p), N);
        uint32_t cs = p >> (N - s);
        S xf = abs_val(pair.X_F.at(s, cs));
        S xg = S(xf * model.G.at(s, cs));
        if (xg > cutoff) lhs = S(lhs + S(w * xg));
        bool before_tau = s < k;  // k = N+1 encodes tau beyond the horizon
        if (before_tau) {
            S v = abs_val(x.at(s, cs, kAlive));
            if (v > cutoff) rhs = S(rhs + S(w * v));
        }
    });
    return !(lhs > rhs);
}

// ---------------------------------------------------------------------------
// Stopping-time lifting
// ---------------------------------------------------------------------------

/// Stop time of a G-rule on the scenario (path, k): first flagged alive atom
/// in the window, else death, else the window end.
template <class S>
int g_rule_time(const RandomTimeModel<S>& model, const StoppingRule& rule, uint32_t path, int k) {
    const int N = model.depth();
    int death = (k <= N) ? k : N + 1;
    for (int t = rule.from; t <= rule.to; ++t) {
        if (t >= death) return death;
        if (rule.stops_at(t, path >> (N - t))) return t;
    }
    return std::min(rule.to, death);
}

template <class S>
int f_rule_time_capped(const RandomTimeModel<S>& model, const StoppingRule& rule, uint32_t path) {
    return std::min(rule.time_on_path(model.depth(), path), rule.to);
}

struct LiftError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Lift a G-rule sandwiched by sigma1 /\ tau <= sigma^G <= sigma2 /\ tau
/// to an F-rule with sigma1 <= sigma^F <= sigma2 and sigma^F /\ tau = sigma^G.
template <class S>
StoppingRule lift_stopping_time(const RandomTimeModel<S>& model, const StoppingRule& sigma_g,
                                const StoppingRule& sigma1, const StoppingRule& sigma2) {
    const int N = model.depth();
    if (sigma_g.tag != StoppingRule::Tag::G) throw std::invalid_argument("lift: need a G-rule");
    // precondition: sigma1 /\ tau <= sigma^G <= sigma2 /\ tau
    model.for_each_scenario([&](uint32_t p, int k, const S&) {
        int sg = g_rule_time(model, sigma_g, p, k);
        int s1 = f_rule_time_capped(model, sigma1, p);
        int s2 = f_rule_time_capped(model, sigma2, p);
        int death = (k <= N) ? k : N + 1;
        if (sg < std::min(s1, death) || sg > std::min(s2, death))
            throw std::invalid_argument("lift: sigma^G violates the sandwich precondition");
    });
    // candidate sigma with sigma /\ tau = sigma^G: flagged alive atoms, forced
    // stop at the window end
    std::vector<int> lifted(size_t{1} << N);
    for (uint32_t p = 0; p < (uint32_t{1} << N); ++p) {
        int cand = sigma_g.to;
        for (int t = sigma_g.from; t <= sigma_g.to; ++t)
            if (sigma_g.stops_at(t, p >> (N - t))) {
                cand = t;
                break;
            }
        int s1 = f_rule_time_capped(model, sigma1, p);
        int s2 = f_rule_time_capped(model, sigma2, p);
        lifted[p] = std::min(std::max(cand, s1), s2);
    }
    // materialize as a first-hitting rule and check adaptedness
    StoppingRule out = StoppingRule::make(StoppingRule::Tag::F, 0, N);
    for (uint32_t p = 0; p < (uint32_t{1} << N); ++p) out.set_stop(lifted[p], p >> (N - lifted[p]));
    for (uint32_t p = 0; p < (uint32_t{1} << N); ++p)
        if (out.time_on_path(N, p) != lifted[p])
            throw LiftError("lift: candidate stopping map is not adapted");
    // postcondition: sigma1 <= sigma^F <= sigma2 and sigma^F /\ tau = sigma^G
    model.for_each_scenario([&](uint32_t p, int k, const S&) {
        int sg = g_rule_time(model, sigma_g, p, k);
        int death = (k <= N) ? k : N + 1;
        if (std::min(lifted[p], death) != sg)
            throw LiftError("lift: sigma^F /\\ tau != sigma^G");
    });
    return out;
}

}  // namespace taulab
