#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "taulab/rbsde.hpp"

namespace taulab {

/// Stopping horizon entering the solution norms.
struct NormHorizon {
    enum class Kind { TandTau, FixedT, Tau } kind = Kind::TandTau;
    int T = 0;

    static NormHorizon t_and_tau(int T) { return {Kind::TandTau, T}; }
    static NormHorizon fixed_t(int T) { return {Kind::FixedT, T}; }
    static NormHorizon tau() { return {Kind::Tau, 0}; }
};

namespace detail {

template <class S>
int horizon_time(const RandomTimeModel<S>& model, const NormHorizon& h, int k) {
    int death = std::min(k, model.depth());  // k = N+1 caps at N (never observed)
    switch (h.kind) {
        case NormHorizon::Kind::TandTau: return std::min(h.T, k <= model.depth() ? k : h.T);
        case NormHorizon::Kind::FixedT: return h.T;
        case NormHorizon::Kind::Tau: return death;
    }
    return death;
}

template <class S>
double dbl(const S& v) {
    return numeric_traits<S>::to_double(v);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Solution norms (computed as exact finite sums, reported as doubles)
// ---------------------------------------------------------------------------

template <class S>
double d_norm(const RandomTimeModel<S>& model, const GProcess<S>& y, const NormHorizon& hor,
              const GMeasure<S>& mu, double p) {
    const int N = model.depth();
    double acc = 0.0;
    model.for_each_scenario([&](uint32_t path, int k, const S&) {
        double w = detail::dbl(mu.scenario_weight(path, k));
        int T = detail::horizon_time(model, hor, k);
        double sup = 0.0;
        for (int t = 0; t <= T; ++t)
            sup = std::max(sup,
                           std::abs(detail::dbl(y.at(t, path >> (N - t), model.status_at(k, t)))));
        acc += w * std::pow(sup, p);
    });
    return std::pow(acc, 1.0 / p);
}

template <class S>
double s_norm(const RandomTimeModel<S>& model, const GProcess<S>& z, const NormHorizon& hor,
              const GMeasure<S>& mu, double p) {
    const int N = model.depth();
    double acc = 0.0;
    model.for_each_scenario([&](uint32_t path, int k, const S&) {
        double w = detail::dbl(mu.scenario_weight(path, k));
        int T = detail::horizon_time(model, hor, k);
        double q = 0.0;
        for (int t = 1; t <= T; ++t) {
            double zt = detail::dbl(z.at(t, path >> (N - t), model.status_at(k, t)));
            q += zt * zt * detail::dbl(model.base.dt);
        }
        acc += w * std::pow(q, p / 2.0);
    });
    return std::pow(acc, 1.0 / p);
}

template <class S>
double m_norm(const RandomTimeModel<S>& model, const GProcess<S>& m, const GMeasure<S>& mu,
              double p) {
    const int N = model.depth();
    double acc = 0.0;
    model.for_each_scenario([&](uint32_t path, int k, const S&) {
        double w = detail::dbl(mu.scenario_weight(path, k));
        double q = 0.0, prev = detail::dbl(m.at(0, 0, model.status_at(k, 0)));
        for (int t = 1; t <= N; ++t) {
            double now = detail::dbl(m.at(t, path >> (N - t), model.status_at(k, t)));
            q += (now - prev) * (now - prev);
            prev = now;
        }
        acc += w * std::pow(q, p / 2.0);
    });
    return std::pow(acc, 1.0 / p);
}

template <class S>
double a_norm(const RandomTimeModel<S>& model, const GProcess<S>& kproc, const NormHorizon& hor,
              const GMeasure<S>& mu, double p) {
    const int N = model.depth();
    double acc = 0.0;
    model.for_each_scenario([&](uint32_t path, int k, const S&) {
        double w = detail::dbl(mu.scenario_weight(path, k));
        int T = detail::horizon_time(model, hor, k);
        double var = 0.0, prev = detail::dbl(kproc.at(0, 0, model.status_at(k, 0)));
        for (int t = 1; t <= T; ++t) {
            double now = detail::dbl(kproc.at(t, path >> (N - t), model.status_at(k, t)));
            var += std::abs(now - prev);
            prev = now;
        }
        acc += w * std::pow(var, p);
    });
    return std::pow(acc, 1.0 / p);
}

/// The quadruple norm |||(Y,Z,M,K)|||: D + S + M^p + A components.
template <class S>
double combined_norm(const RandomTimeModel<S>& model, const RBSDESolution<S>& sol,
                     const NormHorizon& hor, const GMeasure<S>& mu, double p) {
    return d_norm(model, sol.Y, hor, mu, p) + s_norm(model, sol.Z, hor, mu, p) +
           m_norm(model, sol.M, mu, p) + a_norm(model, sol.K, hor, mu, p);
}

/// Discounted quadruple norm for the random-horizon theory: (E~^{1/p} Y, E~_-^{1/p} Z,
/// E~_-^{1/p}.M, E~_-^{1/p}.K) under P.
template <class S>
double weighted_combined_norm(const RandomTimeModel<S>& model, const RBSDESolution<S>& sol,
                              const NormHorizon& hor, double p) {
    const int N = model.depth();
    double ed = 0.0, ez = 0.0, em = 0.0, ek = 0.0;
    model.for_each_scenario([&](uint32_t path, int k, const S& w0) {
        double w = detail::dbl(w0);
        int T = detail::horizon_time(model, hor, k);
        double sup = 0.0, qz = 0.0, qm = 0.0, vk = 0.0;
        double m_prev = detail::dbl(sol.M.at(0, 0, model.status_at(k, 0)));
        double k_prev = detail::dbl(sol.K.at(0, 0, model.status_at(k, 0)));
        for (int t = 0; t <= T; ++t) {
            uint32_t c = path >> (N - t);
            int st = model.status_at(k, t);
            double et = detail::dbl(model.Etilde.at(t, c));
            sup = std::max(sup, et * std::pow(std::abs(detail::dbl(sol.Y.at(t, c, st))), p));
            if (t >= 1) {
                double ep = std::pow(detail::dbl(model.Etilde.at(t - 1, c >> 1)), 1.0 / p);
                double zt = detail::dbl(sol.Z.at(t, c, st));
                qz += ep * ep * zt * zt * detail::dbl(model.base.dt);
                double m_now = detail::dbl(sol.M.at(t, c, st));
                qm += ep * ep * (m_now - m_prev) * (m_now - m_prev);
                m_prev = m_now;
                double k_now = detail::dbl(sol.K.at(t, c, st));
                vk += ep * std::abs(k_now - k_prev);
                k_prev = k_now;
            }
        }
        ed += w * sup;
        ez += w * std::pow(qz, p / 2.0);
        em += w * std::pow(qm, p / 2.0);
        ek += w * std::pow(vk, p);
    });
    return std::pow(ed, 1.0 / p) + std::pow(ez, 1.0 / p) + std::pow(em, 1.0 / p) +
           std::pow(ek, 1.0 / p);
}

/// L^q(O(F), P (x) dD): E[|X_tau|^q 1_{tau < inf}].
template <class S>
double lq_pd(const RandomTimeModel<S>& model, const FProcess<S>& x, double q) {
    const int N = model.depth();
    double acc = 0.0;
    model.for_each_scenario([&](uint32_t path, int k, const S& w) {
        if (k > N) return;
        acc += detail::dbl(w) * std::pow(std::abs(detail::dbl(x.at(k, path >> (N - k)))), q);
    });
    return acc;
}

/// L^p(P (x) V^F) norm of an F-indexed process.
template <class S>
double lp_pvf(const RandomTimeModel<S>& model, const FProcess<S>& x, double p) {
    const int N = model.depth();
    double acc = 0.0;
    for (int t = 1; t <= N; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            double dvf = detail::dbl(S(model.VF.at(t, c) - model.VF.at(t - 1, c >> 1)));
            acc += detail::dbl(model.base.atom_mass[static_cast<size_t>(t)][c]) * dvf *
                   std::pow(std::abs(detail::dbl(x.at(t, c))), p);
        }
    return std::pow(acc, 1.0 / p);
}

// ---------------------------------------------------------------------------
// Data functionals
// ---------------------------------------------------------------------------

/// Data functional Delta_Q~(xi, f, S^+); plus_part=false uses sup|S| (difference
/// estimates).
template <class S>
double delta_qtilde(const RandomTimeModel<S>& model, const RBSDEData<S>& data, int T, double p,
                    bool plus_part = true) {
    const int N = model.depth();
    GMeasure<S> mu = GMeasure<S>::Qtilde(model, T);
    double exi = 0.0, ef = 0.0, es = 0.0;
    model.for_each_scenario([&](uint32_t path, int k, const S&) {
        double w = detail::dbl(mu.scenario_weight(path, k));
        int hk = std::min(k <= N ? k : T, T);
        double fint = 0.0;
        for (int t = 0; t < hk; ++t)
            fint += std::abs(detail::dbl(data.f.at(t, path >> (N - t)))) * detail::dbl(model.base.dt);
        double sup_s = 0.0;
        if (data.barrier)
            for (int t = 0; t <= hk; ++t) {
                double sv = detail::dbl(data.barrier->at(t, path >> (N - t)));
                sup_s = std::max(sup_s, plus_part ? std::max(sv, 0.0) : std::abs(sv));
            }
        double xi = detail::dbl(data.h.at(hk, path >> (N - hk)));
        exi += w * std::pow(std::abs(xi), p);
        ef += w * std::pow(fint, p);
        es += w * std::pow(sup_s, p);
    });
    return std::pow(exi, 1.0 / p) + std::pow(ef, 1.0 / p) + std::pow(es, 1.0 / p);
}

/// Data functional Delta_{P (x) V^F}(f, h, S); plus_part selects sup S^+.
template <class S>
double delta_pvf(const RandomTimeModel<S>& model, const RBSDEData<S>& data, double p,
                 bool plus_part = false) {
    const int N = model.depth();
    FProcess<S> composite(N);
    for (int t = 0; t <= N; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            double fint = 0.0;
            for (int u = 0; u < t; ++u)
                fint += std::abs(detail::dbl(data.f.at(u, c >> (t - u)))) * detail::dbl(model.base.dt);
            double sup_s = 0.0;
            if (data.barrier)
                for (int u = 0; u <= t; ++u) {
                    double sv = detail::dbl(data.barrier->at(u, c >> (t - u)));
                    sup_s = std::max(sup_s, plus_part ? std::max(sv, 0.0) : std::abs(sv));
                }
            double hv = std::abs(detail::dbl(data.h.at(t, c)));
            composite.at(t, c) = S(fint + hv + sup_s);
        }
    return lp_pvf(model, composite, p);
}

// ---------------------------------------------------------------------------
// Compensator bounds and Q~-to-P expectation transfer
// ---------------------------------------------------------------------------

template <class S>
struct CompensatorBoundsReport {
    bool bound_a_ok = true;   // E^Q~[D^{o,F}_{T/\tau} - D^{o,F}_{(t/\tau)-} | G_t] <= G~_{t/\tau} <= 1
    bool bound_b_ok = true;   // E[int_{t/\tau}^{T/\tau} G~^{-1} dD^{o,F} | G_t] <= 1
    S worst_a = numeric_traits<S>::zero();
    S worst_b = numeric_traits<S>::zero();
};

template <class S>
CompensatorBoundsReport<S> compensator_bounds_check(const RandomTimeModel<S>& model, int T) {
    const int N = model.depth();
    CompensatorBoundsReport<S> rep;
    // conditional expectations computed by backward recursion on G-atoms
    GProcess<S> a_val(N), b_val(N);  // E[ tail | atom ]
    for (int t = N; t >= 0; --t)
        model.for_each_atom(t, [&](uint32_t c, int st) {
            if (st != kAlive || t >= T) {
                a_val.at(t, c, st) = numeric_traits<S>::zero();
                b_val.at(t, c, st) = numeric_traits<S>::zero();
                return;
            }
            // one-step contribution over ]t, t+1]
            GMeasure<S> q = GMeasure<S>::Qtilde(model, T);
            S na = g_step_expect<S>(q, t, c, kAlive, [&](uint32_t cc, int s2) {
                S jump = S(model.dDoF.at(t + 1, cc));  // dD^{o,F}_{t+1}
                return S(jump + a_val.at(t + 1, cc, s2));
            });
            a_val.at(t, c, kAlive) = na;
            GMeasure<S> pp = GMeasure<S>::P(model);
            S nb = g_step_expect<S>(pp, t, c, kAlive, [&](uint32_t cc, int s2) {
                S jump = S(model.dDoF.at(t + 1, cc) / model.Gtilde.at(t + 1, cc));
                return S(jump + b_val.at(t + 1, cc, s2));
            });
            b_val.at(t, c, kAlive) = nb;
        });
    for (int t = 0; t <= T; ++t)
        model.for_each_atom(t, [&](uint32_t c, int st) {
            // at the atom, D^{o,F}_{(t/\tau)-} accounts for the jump at t/\tau:
            // the conditional tail from t includes dD^{o,F}_{t/\tau} itself
            int u = (st == kAlive) ? t : st;
            uint32_t cu = c >> (t - u);
            S tail = (st == kAlive) ? S(a_val.at(t, c, kAlive) + model.dDoF.at(u, cu))
                                    : model.dDoF.at(u, cu);
            S cap = model.Gtilde.at(u, cu);
            S slack = S(cap - tail);
            if (slack < S(0)) rep.bound_a_ok = false;
            rep.worst_a = max_val(rep.worst_a, S(tail - cap));
            if (cap > numeric_traits<S>::one()) rep.bound_a_ok = false;
            S tb = (st == kAlive) ? b_val.at(t, c, kAlive) : numeric_traits<S>::zero();
            if (tb > numeric_traits<S>::one()) rep.bound_b_ok = false;
            rep.worst_b = max_val(rep.worst_b, S(tb - numeric_traits<S>::one()));
        });
    return rep;
}

template <class S>
struct QtildeTransferReport {
    S id_nonneg = numeric_traits<S>::zero();  // identity discrepancy, nonnegative X
    S id_nondecreasing = numeric_traits<S>::zero();  // identity discrepancy, nondecreasing X
    S lr_slack = numeric_traits<S>::zero();  // r^r G_0^{-1} E^Q~[X^r] - E[((E~_-.X)_T)^r] (>= 0)
    bool lr_ok = true;
};

/// X must be F-optional and nonnegative for the expectation identity;
/// `nondecreasing` additionally nondecreasing with X_0 = 0 for the
/// integration-by-parts identity and the L^r bound with integer exponent r.
template <class S>
QtildeTransferReport<S> qtilde_transfer_check(const RandomTimeModel<S>& model,
                                              const FProcess<S>& x,
                                              const FProcess<S>& nondecreasing, int T, long r) {
    const int N = model.depth();
    QtildeTransferReport<S> rep;
    GMeasure<S> q = GMeasure<S>::Qtilde(model, T);
    const S g0 = model.G.at(0, 0);
    // E^Q~[X_{T/\tau}] = E[G_0 int X dV^F + G_0 X_T E~_T + X_0 (1 - G_0)]
    {
        S lhs = numeric_traits<S>::zero();
        model.for_each_scenario([&](uint32_t path, int k, const S&) {
            S w = q.scenario_weight(path, k);
            int hk = std::min(k <= N ? k : T, T);
            lhs = S(lhs + S(w * x.at(hk, path >> (N - hk))));
        });
        S rhs = numeric_traits<S>::zero();
        for (int t = 1; t <= T; ++t)
            for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
                S dvf = S(model.VF.at(t, c) - model.VF.at(t - 1, c >> 1));
                rhs = S(rhs + S(model.base.atom_mass[static_cast<size_t>(t)][c] *
                                S(S(g0 * x.at(t, c)) * dvf)));
            }
        for (uint32_t c = 0; c < (uint32_t{1} << T); ++c)
            rhs = S(rhs + S(model.base.atom_mass[static_cast<size_t>(T)][c] *
                            S(S(g0 * x.at(T, c)) * model.Etilde.at(T, c))));
        rhs = S(rhs + S(x.at(0, 0) * S(numeric_traits<S>::one() - g0)));
        rep.id_nonneg = abs_val(S(lhs - rhs));
    }
    // parts identity and the L^r bound on the nondecreasing input
    {
        S lhs = numeric_traits<S>::zero(), lhs_r = numeric_traits<S>::zero();
        model.for_each_scenario([&](uint32_t path, int k, const S&) {
            S w = q.scenario_weight(path, k);
            int hk = std::min(k <= N ? k : T, T);
            const S& v = nondecreasing.at(hk, path >> (N - hk));
            lhs = S(lhs + S(w * v));
            lhs_r = S(lhs_r + S(w * pow_int(v, r)));
        });
        S rhs = nondecreasing.at(0, 0);
        S int_r = numeric_traits<S>::zero();
        for (int t = 1; t <= T; ++t)
            for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
                S dx = S(nondecreasing.at(t, c) - nondecreasing.at(t - 1, c >> 1));
                S w = model.base.atom_mass[static_cast<size_t>(t)][c];
                rhs = S(rhs + S(w * S(S(g0 * model.Etilde.at(t - 1, c >> 1)) * dx)));
            }
        rep.id_nondecreasing = abs_val(S(lhs - rhs));
        // E[((E~_- . X)_T)^r] <= r^r G_0^{-1} E^Q~[X_{T/\tau}^r]
        FProcess<S> run(N);
        for (int t = 1; t <= N; ++t)
            for (uint32_t c = 0; c < (uint32_t{1} << t); ++c)
                run.at(t, c) = S(run.at(t - 1, c >> 1) +
                                 S(model.Etilde.at(t - 1, c >> 1) *
                                   S(nondecreasing.at(t, c) - nondecreasing.at(t - 1, c >> 1))));
        for (uint32_t c = 0; c < (uint32_t{1} << T); ++c)
            int_r = S(int_r + S(model.base.atom_mass[static_cast<size_t>(T)][c] *
                                pow_int(run.at(T, c), r)));
        S cap = S(S(pow_int(S(numeric_traits<S>::from_int(r)), r) / g0) * lhs_r);
        rep.lr_slack = S(cap - int_r);
        rep.lr_ok = !(int_r > cap);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Discount-weighted inequalities (computed in doubles)
// ---------------------------------------------------------------------------

inline double kappa_weighted(double a) {
    return std::pow(3.0, 1.0 / a) * (5.0 + std::pow(std::max(a, 1.0 / a), 1.0 / a));
}

template <class S>
struct WeightedInequalitiesReport {
    double slack_a = 0.0;  // weighted sup bound
    double slack_b = 0.0;  // weighted nondecreasing-integral bound
    double slack_c = 0.0;  // weighted [N^G] bound, G-optional integrand
    double slack_d = 0.0;  // weighted [N^G] bound, F-optional integrand
    bool ok() const { return slack_a >= 0 && slack_b >= 0 && slack_c >= 0 && slack_d >= 0; }
};

/// y: any G-process; kproc: nondecreasing G-adapted with K_0 = 0; hF: a
/// nonnegative F-optional process (used both as the G-optional input of (c)
/// and the F-optional input of (d)).
template <class S>
WeightedInequalitiesReport<S> weighted_inequalities_check(const RandomTimeModel<S>& model,
                                                          const GProcess<S>& y,
                                                          const GProcess<S>& kproc,
                                                          const FProcess<S>& hF, int T, double p,
                                                          double a) {
    const int N = model.depth();
    WeightedInequalitiesReport<S> rep;
    GMeasure<S> q = GMeasure<S>::Qtilde(model, T);
    auto ngproc = n_G(model);
    double lhs_a = 0.0, rhs_a = 0.0;
    double lhs_b = 0.0, rhs_b1 = 0.0, rhs_b2 = 0.0;
    double lhs_c = 0.0, rhs_c1 = 0.0, rhs_c2 = 0.0;
    double rhs_d2 = 0.0;
    const double g0 = detail::dbl(model.G.at(0, 0));
    model.for_each_scenario([&](uint32_t path, int k, const S& w0) {
        double wp = detail::dbl(w0);
        double wq = detail::dbl(q.scenario_weight(path, k));
        int hk = std::min(k <= N ? k : T, T);
        double supw = 0.0, supq = 0.0;
        double kb = 0.0, kprev = detail::dbl(kproc.at(0, 0, model.status_at(k, 0)));
        double kb_sumjump = 0.0;
        double qc_w = 0.0, qc = 0.0, c2 = 0.0;
        double ng_prev = detail::dbl(ngproc.at(0, 0, model.status_at(k, 0)));
        for (int t = 0; t <= hk; ++t) {
            uint32_t c = path >> (N - t);
            int st = model.status_at(k, t);
            double et = detail::dbl(model.Etilde.at(t, c));
            double yv = std::abs(detail::dbl(y.at(t, c, st)));
            supw = std::max(supw, et * std::pow(yv, p));
            supq = std::max(supq, std::pow(yv, p));
            if (t >= 1) {
                double eprev = detail::dbl(model.Etilde.at(t - 1, c >> 1));
                double know = detail::dbl(kproc.at(t, c, st));
                double dk = know - kprev;
                kprev = know;
                kb += std::pow(eprev, a) * dk;
                double gt = detail::dbl(model.Gtilde.at(t, c));
                kb_sumjump += gt * std::pow(std::max(dk, 0.0), 1.0 / a);
                double hv = std::abs(detail::dbl(hF.at(t, c)));
                double ng_now = detail::dbl(ngproc.at(t, c, st));
                double dng = ng_now - ng_prev;
                ng_prev = ng_now;
                qc_w += std::pow(eprev, 2.0 / p) * hv * dng * dng;
                qc += hv * dng * dng;
                c2 += gt * std::pow(hv, p / 2.0) * std::abs(dng);
            }
        }
        lhs_a += wp * supw;
        rhs_a += wq * supq;
        double ktot = kprev;
        lhs_b += wp * std::pow(std::max(kb, 0.0), 1.0 / a);
        rhs_b1 += wq * std::pow(std::max(ktot, 0.0), 1.0 / a);
        rhs_b2 += wq * kb_sumjump;
        lhs_c += wp * std::pow(qc_w, p / 2.0);
        rhs_c1 += wq * std::pow(qc, p / 2.0);
        rhs_c2 += wq * c2;
    });
    // (d) second term: 2 (H^{p/2} I_{]0,tau[} . D^{o,F})_T under Q~
    {
        // E^Q~[ sum_{0<t<=T} H_t^{p/2} 1_{t < tau} dD^{o,F}_t ]
        model.for_each_scenario([&](uint32_t path, int k, const S&) {
            double wq = detail::dbl(q.scenario_weight(path, k));
            int cap = std::min(k <= N ? k - 1 : T, T);  // strictly before tau
            double acc = 0.0;
            for (int t = 1; t <= cap; ++t) {
                uint32_t c = path >> (N - t);
                acc += std::pow(std::abs(detail::dbl(hF.at(t, c))), p / 2.0) *
                       detail::dbl(model.dDoF.at(t, c));
            }
            rhs_d2 += wq * acc;
        });
    }
    rep.slack_a = rhs_a / g0 - lhs_a;
    rep.slack_b = kappa_weighted(a) / g0 * (rhs_b1 + rhs_b2) - lhs_b;
    rep.slack_c = kappa_weighted(2.0 / p) / g0 * (rhs_c1 + rhs_c2) - lhs_c;
    rep.slack_d = kappa_weighted(2.0 / p) / g0 * (rhs_c1 + 2.0 * rhs_d2) - lhs_c;
    return rep;
}

/// Long-horizon limit gap |E^Q~[X_{T/\tau}] - G_0 E[int_0^inf X dV^F]| for
/// X = B E(G_-^{-1}.m) with |B| <= 1, B_0 = 0; bounded by 2 sup_omega G_T.
template <class S>
struct LimitGapReport {
    double gap = 0.0;
    double bound = 0.0;
    bool ok() const { return gap <= bound + 1e-12; }
};

template <class S>
LimitGapReport<S> limit_gap_check(const RandomTimeModel<S>& model, const FProcess<S>& b_clip,
                                  int T) {
    const int N = model.depth();
    LimitGapReport<S> rep;
    FProcess<S> x(N);
    for (int t = 0; t <= N; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c)
            x.at(t, c) = (t == 0) ? numeric_traits<S>::zero()
                                  : S(b_clip.at(t, c) * model.Em.at(t, c));
    GMeasure<S> q = GMeasure<S>::Qtilde(model, T);
    double lhs = 0.0;
    model.for_each_scenario([&](uint32_t path, int k, const S&) {
        int hk = std::min(k <= N ? k : T, T);
        lhs += detail::dbl(q.scenario_weight(path, k)) *
               detail::dbl(x.at(hk, path >> (N - hk)));
    });
    double rhs = 0.0;
    const double g0 = detail::dbl(model.G.at(0, 0));
    for (int t = 1; t <= N; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            double dvf = detail::dbl(S(model.VF.at(t, c) - model.VF.at(t - 1, c >> 1)));
            rhs += g0 * detail::dbl(model.base.atom_mass[static_cast<size_t>(t)][c]) * dvf *
                   detail::dbl(x.at(t, c));
        }
    rep.gap = std::abs(lhs - rhs);
    double supG = 0.0;
    for (uint32_t c = 0; c < (uint32_t{1} << T); ++c)
        supG = std::max(supG, detail::dbl(model.G.at(T, c)));
    rep.bound = 2.0 * supG;
    return rep;
}

// ---------------------------------------------------------------------------
// A-priori estimate ratios enforced against the calibration ledger
// ---------------------------------------------------------------------------

struct EstimateRatio {
    double lhs = 0.0;
    double rhs = 0.0;
    double ratio = 0.0;  // 0 when both sides vanish

    static EstimateRatio of(double lhs, double rhs) {
        EstimateRatio r;
        r.lhs = lhs;
        r.rhs = rhs;
        r.ratio = (rhs > 0.0) ? lhs / rhs : (lhs > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
        return r;
    }
};

template <class S>
EstimateRatio estimate_qtilde_bound(const RandomTimeModel<S>& model, const RBSDEData<S>& data,
                             const RBSDESolution<S>& sol, double p) {
    auto hor = NormHorizon::t_and_tau(data.T);
    GMeasure<S> mu = GMeasure<S>::Qtilde(model, data.T);
    return EstimateRatio::of(combined_norm(model, sol, hor, mu, p),
                             delta_qtilde(model, data, data.T, p, true));
}

template <class S>
EstimateRatio estimate_qtilde_stability(const RandomTimeModel<S>& model, const RBSDEData<S>& d1,
                             const RBSDESolution<S>& s1, const RBSDEData<S>& d2,
                             const RBSDESolution<S>& s2, double p) {
    const int N = model.depth();
    auto hor = NormHorizon::t_and_tau(d1.T);
    GMeasure<S> mu = GMeasure<S>::Qtilde(model, d1.T);
    GProcess<S> dy(N), dz(N), dm(N);
    for (int t = 0; t <= N; ++t)
        model.for_each_atom(t, [&](uint32_t c, int st) {
            dy.at(t, c, st) = S(s1.Y.at(t, c, st) - s2.Y.at(t, c, st));
            dz.at(t, c, st) = S(s1.Z.at(t, c, st) - s2.Z.at(t, c, st));
            dm.at(t, c, st) = S(s1.M.at(t, c, st) - s2.M.at(t, c, st));
        });
    double lhs = d_norm(model, dy, hor, mu, p) + s_norm(model, dz, hor, mu, p) +
                 m_norm(model, dm, mu, p);
    RBSDEData<S> dd;
    dd.T = d1.T;
    dd.p = p;
    dd.f = FProcess<S>(N);
    dd.h = FProcess<S>(N);
    dd.barrier = FProcess<S>(N);
    bool bar = d1.barrier.has_value() || d2.barrier.has_value();
    for (int t = 0; t <= N; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            dd.f.at(t, c) = S(d1.f.at(t, c) - d2.f.at(t, c));
            dd.h.at(t, c) = S(d1.h.at(t, c) - d2.h.at(t, c));
            S b1 = d1.barrier ? d1.barrier->at(t, c) : numeric_traits<S>::zero();
            S b2 = d2.barrier ? d2.barrier->at(t, c) : numeric_traits<S>::zero();
            dd.barrier->at(t, c) = S(b1 - b2);
        }
    if (!bar) dd.barrier.reset();
    double delta_d = delta_qtilde(model, dd, d1.T, p, false);
    double ds_norm = 0.0;
    if (dd.barrier) {
        auto dbar = embed_f(model, *dd.barrier);
        ds_norm = d_norm(model, dbar, hor, mu, p);
    }
    double sum_deltas = delta_qtilde(model, d1, d1.T, p, true) +
                        delta_qtilde(model, d2, d2.T, p, true);
    double rhs = delta_d + std::sqrt(ds_norm) * std::sqrt(sum_deltas);
    return EstimateRatio::of(lhs, rhs);
}

template <class S>
EstimateRatio estimate_weighted_bound(const RandomTimeModel<S>& model, const RBSDEData<S>& data,
                             const RBSDESolution<S>& sol, double p) {
    auto hor = NormHorizon::t_and_tau(data.T);
    return EstimateRatio::of(weighted_combined_norm(model, sol, hor, p),
                             delta_qtilde(model, data, data.T, p, true));
}

template <class S>
EstimateRatio estimate_weighted_stability(const RandomTimeModel<S>& model, const RBSDEData<S>& d1,
                             const RBSDESolution<S>& s1, const RBSDEData<S>& d2,
                             const RBSDESolution<S>& s2, double p) {
    const int N = model.depth();
    auto hor = NormHorizon::t_and_tau(d1.T);
    GMeasure<S> mu = GMeasure<S>::Qtilde(model, d1.T);
    RBSDESolution<S> diff{GProcess<S>(N), GProcess<S>(N), GProcess<S>(N), GProcess<S>(N), {}};
    for (int t = 0; t <= N; ++t)
        model.for_each_atom(t, [&](uint32_t c, int st) {
            diff.Y.at(t, c, st) = S(s1.Y.at(t, c, st) - s2.Y.at(t, c, st));
            diff.Z.at(t, c, st) = S(s1.Z.at(t, c, st) - s2.Z.at(t, c, st));
            diff.M.at(t, c, st) = S(s1.M.at(t, c, st) - s2.M.at(t, c, st));
        });
    double lhs = weighted_combined_norm(model, diff, hor, p);  // K-slot is zero
    RBSDEData<S> dd = d1;
    dd.f = FProcess<S>(N);
    dd.h = FProcess<S>(N);
    dd.barrier = FProcess<S>(N);
    for (int t = 0; t <= N; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            dd.f.at(t, c) = S(d1.f.at(t, c) - d2.f.at(t, c));
            dd.h.at(t, c) = S(d1.h.at(t, c) - d2.h.at(t, c));
            S b1 = d1.barrier ? d1.barrier->at(t, c) : numeric_traits<S>::zero();
            S b2 = d2.barrier ? d2.barrier->at(t, c) : numeric_traits<S>::zero();
            dd.barrier->at(t, c) = S(b1 - b2);
        }
    double delta_d = delta_qtilde(model, dd, d1.T, p, false);
    double ds_norm = d_norm(model, embed_f(model, *dd.barrier), hor, mu, p);
    double sum_deltas = delta_qtilde(model, d1, d1.T, p, true) +
                        delta_qtilde(model, d2, d2.T, p, true);
    return EstimateRatio::of(lhs, delta_d + std::sqrt(ds_norm) * std::sqrt(sum_deltas));
}

template <class S>
EstimateRatio estimate_random_horizon_bound(const RandomTimeModel<S>& model, const RBSDEData<S>& data,
                              const RBSDESolution<S>& sol, double p) {
    return EstimateRatio::of(weighted_combined_norm(model, sol, NormHorizon::tau(), p),
                             delta_pvf(model, data, p, true));
}

template <class S>
EstimateRatio estimate_random_horizon_stability(const RandomTimeModel<S>& model, const RBSDEData<S>& d1,
                              const RBSDESolution<S>& s1, const RBSDEData<S>& d2,
                              const RBSDESolution<S>& s2, double p) {
    const int N = model.depth();
    RBSDESolution<S> diff{GProcess<S>(N), GProcess<S>(N), GProcess<S>(N), GProcess<S>(N), {}};
    for (int t = 0; t <= N; ++t)
        model.for_each_atom(t, [&](uint32_t c, int st) {
            diff.Y.at(t, c, st) = S(s1.Y.at(t, c, st) - s2.Y.at(t, c, st));
            diff.Z.at(t, c, st) = S(s1.Z.at(t, c, st) - s2.Z.at(t, c, st));
            diff.M.at(t, c, st) = S(s1.M.at(t, c, st) - s2.M.at(t, c, st));
        });
    double lhs = weighted_combined_norm(model, diff, NormHorizon::tau(), p);
    RBSDEData<S> dd = d1;
    dd.f = FProcess<S>(N);
    dd.h = FProcess<S>(N);
    dd.barrier = FProcess<S>(N);
    for (int t = 0; t <= N; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            dd.f.at(t, c) = S(d1.f.at(t, c) - d2.f.at(t, c));
            dd.h.at(t, c) = S(d1.h.at(t, c) - d2.h.at(t, c));
            S b1 = d1.barrier ? d1.barrier->at(t, c) : numeric_traits<S>::zero();
            S b2 = d2.barrier ? d2.barrier->at(t, c) : numeric_traits<S>::zero();
            dd.barrier->at(t, c) = S(b1 - b2);
        }
    RBSDEData<S> ds_only = dd;
    ds_only.f = FProcess<S>(N);
    ds_only.h = FProcess<S>(N);
    double rhs = delta_pvf(model, dd, p, false) +
                 std::sqrt(delta_pvf(model, ds_only, p, false) *
                           (delta_pvf(model, d1, p, true) + delta_pvf(model, d2, p, true)));
    return EstimateRatio::of(lhs, rhs);
}

/// F-side a-priori bound for the triple of the infinite-horizon equation.
template <class S>
EstimateRatio estimate_f_side_bound(const RandomTimeModel<S>& model, const RBSDEData<S>& data,
                             const FTriple<S>& tri, double p) {
    const int N = model.depth();
    double ed = 0.0, ez = 0.0, ek = 0.0, erhs = 0.0;
    for (uint32_t path = 0; path < (uint32_t{1} << N); ++path) {
        double w = detail::dbl(model.base.path_prob[path]);
        double sup = 0.0, qz = 0.0;
        double fint = 0.0, hint = 0.0, sup_sf = 0.0;
        for (int t = 0; t <= N; ++t) {
            uint32_t c = path >> (N - t);
            sup = std::max(sup, std::abs(detail::dbl(tri.Y.at(t, c))));
            double et = detail::dbl(model.Etilde.at(t, c));
            if (data.barrier)
                sup_sf = std::max(sup_sf, std::max(et * detail::dbl(data.barrier->at(t, c)), 0.0));
            if (t >= 1) {
                double z = detail::dbl(tri.Z.at(t, c));
                qz += z * z * detail::dbl(model.base.dt);
                double dvf = detail::dbl(S(model.VF.at(t, c) - model.VF.at(t - 1, c >> 1)));
                hint += std::abs(detail::dbl(data.h.at(t, c))) * dvf;
                fint += detail::dbl(model.Etilde.at(t - 1, c >> 1)) *
                        std::abs(detail::dbl(data.f.at(t - 1, c >> 1))) *
                        detail::dbl(model.base.dt);
            }
        }
        ed += w * std::pow(sup, p);
        ez += w * std::pow(qz, p / 2.0);
        ek += w * std::pow(std::abs(detail::dbl(tri.K.at(N, path))), p);
        erhs += w * std::pow(fint + hint + sup_sf, p);
    }
    double lhs = std::pow(ed, 1.0 / p) + std::pow(ez, 1.0 / p) + std::pow(ek, 1.0 / p);
    return EstimateRatio::of(lhs, std::pow(erhs, 1.0 / p));
}

/// Martingale Holder bound: || sup |(H.M)| ||_r <= kappa ||sup|X|||_a ||[M]^{1/2}||_b
/// with 1/r = 1/a + 1/b, H predictable and |H| <= |X_-|.
template <class S>
struct MartingaleInequalityReport {
    double lhs = 0.0;
    double factor_a = 0.0;
    double factor_b = 0.0;
    double ratio = 0.0;
};

template <class S>
MartingaleInequalityReport<S> martingale_inequality(const FilteredSpace<S>& sp,
                                                    const FProcess<S>& H, const FProcess<S>& x,
                                                    const FProcess<S>& M, double r, double a,
                                                    double b) {
    if (std::abs(1.0 / r - 1.0 / a - 1.0 / b) > 1e-12)
        throw std::invalid_argument("martingale_inequality: exponent relation violated");
    const int N = sp.depth;
    // predictability and domination |H_t| <= |X_{t-1}|
    for (int t = 1; t <= N; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << (t - 1)); ++c) {
            if (!(H.at(t, 2 * c) == H.at(t, 2 * c + 1)))
                throw std::invalid_argument("martingale_inequality: H is not predictable");
            if (abs_val(H.at(t, 2 * c)) > abs_val(x.at(t - 1, c)))
                throw std::invalid_argument("martingale_inequality: |H| <= |X_-| violated");
        }
    MartingaleInequalityReport<S> rep;
    double er = 0.0, ea = 0.0, eb = 0.0;
    for (uint32_t path = 0; path < (uint32_t{1} << N); ++path) {
        double w = detail::dbl(sp.path_prob[path]);
        double hm = 0.0, sup_hm = 0.0, sup_x = 0.0, qv = 0.0;
        sup_x = std::abs(detail::dbl(x.at(0, 0)));
        for (int t = 1; t <= N; ++t) {
            uint32_t c = path >> (N - t);
            double dm = detail::dbl(S(M.at(t, c) - M.at(t - 1, c >> 1)));
            hm += detail::dbl(H.at(t, c)) * dm;
            sup_hm = std::max(sup_hm, std::abs(hm));
            sup_x = std::max(sup_x, std::abs(detail::dbl(x.at(t, c))));
            qv += dm * dm;
        }
        er += w * std::pow(sup_hm, r);
        ea += w * std::pow(sup_x, a);
        eb += w * std::pow(std::sqrt(qv), b);
    }
    rep.lhs = std::pow(er, 1.0 / r);
    rep.factor_a = std::pow(ea, 1.0 / a);
    rep.factor_b = std::pow(eb, 1.0 / b);
    double denom = rep.factor_a * rep.factor_b;
    rep.ratio = denom > 0.0 ? rep.lhs / denom : (rep.lhs > 0.0 ? 1e300 : 0.0);
    return rep;
}

}  // namespace taulab
