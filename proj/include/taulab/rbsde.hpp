#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "taulab/snell.hpp"

namespace taulab {

/// Data triplet (f, S, h): driver rate, barrier (absent = BSDE mode) and the
/// terminal kernel xi = h_{T /\ tau}. T = kRandomHorizon solves up to tau
/// (closed-mode models only).
constexpr int kRandomHorizon = -1;

template <class S>
struct RBSDEData {
    FProcess<S> f;
    std::optional<FProcess<S>> barrier;
    FProcess<S> h;
    int T = kRandomHorizon;
    double p = 2.0;
};

template <class S>
struct RBSDEDiagnostics {
    S equation_residual = numeric_traits<S>::zero();
    S skorokhod_residual = numeric_traits<S>::zero();
    S barrier_violation = numeric_traits<S>::zero();
    S martingale_drift = numeric_traits<S>::zero();
    S terminal_mismatch = numeric_traits<S>::zero();
    S k_min_increment = numeric_traits<S>::zero();  // most negative dK (>= 0 required)
};

/// Quadruple (Y, Z, M, K): Y stopped at the horizon, Z predictable and
/// supported on ]0, horizon], M the orthogonal martingale part (M_0 = 0), K
/// nondecreasing predictable (K_0 = 0). Z and dK are stored on the successor
/// atoms of the step they act on and are constant across siblings.
template <class S>
struct RBSDESolution {
    GProcess<S> Y, Z, M, K;
    RBSDEDiagnostics<S> diag;
};

namespace detail {

template <class S>
int effective_T(const RandomTimeModel<S>& model, const RBSDEData<S>& data) {
    if (data.T == kRandomHorizon) {
        if (model.mode != HorizonMode::Closed)
            throw std::invalid_argument("rbsde: random horizon needs a closed-mode model");
        return model.depth();
    }
    if (data.T < 0 || data.T > model.depth())
        throw std::invalid_argument("rbsde: horizon out of range");
    return data.T;
}

/// xi >= S at every attainable horizon atom (terminal dominance).
template <class S>
void check_terminal_dominance(const RandomTimeModel<S>& model, const RBSDEData<S>& data, int Teff) {
    if (!data.barrier) return;
    const auto& bar = *data.barrier;
    for (int s = 0; s <= Teff; ++s)
        for (uint32_t c = 0; c < (uint32_t{1} << s); ++c) {
            bool attainable = model.has_mass(s, c, s);  // death at s
            if (s == Teff && data.T != kRandomHorizon && model.has_mass(s, c, kAlive))
                attainable = true;
            if (attainable && bar.at(s, c) > data.h.at(s, c))
                throw std::invalid_argument("rbsde: terminal value below the barrier");
        }
}

}  // namespace detail

/// One backward sweep on the enlarged filtration under the given measure.
/// Martingale increments are split as Z dW^tau + dM with Z the covariance
/// projection onto the centred driver increment (zero variance sends all mass
/// to M); this keeps M a martingale under the solving measure.
template <class S>
RBSDESolution<S> solve_rbsde_core(const RandomTimeModel<S>& model, const RBSDEData<S>& data,
                                  const GMeasure<S>& mu) {
    const int N = model.depth();
    const int Teff = detail::effective_T(model, data);
    detail::check_terminal_dominance(model, data, Teff);
    if (!model.base.driver_is_martingale())
        throw std::invalid_argument("rbsde: base driver must be a martingale");

    RBSDESolution<S> sol{GProcess<S>(N), GProcess<S>(N), GProcess<S>(N), GProcess<S>(N), {}};

    // terminal and post-horizon layer: dead atoms carry h at the death time,
    // survivors h_{Teff}; alive pre-horizon values come from the sweep below
    for (int t = 0; t <= N; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c)
            for (int st = kAlive; st <= t; ++st) {
                if (st != kAlive && st <= Teff)
                    sol.Y.at(t, c, st) = data.h.at(st, c >> (t - st));
                else
                    sol.Y.at(t, c, st) = data.h.at(std::min(t, Teff), c >> (t - std::min(t, Teff)));
            }

    for (int t = Teff - 1; t >= 0; --t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            if (!model.has_mass(t, c, kAlive)) continue;
            // one-step statistics under mu at the alive atom
            S mean = numeric_traits<S>::zero(), den = numeric_traits<S>::zero();
            S wmean = numeric_traits<S>::zero();
            auto wval = [&](uint32_t cc) { return model.base.driver.at(t + 1, cc); };
            auto visit = [&](const std::function<void(uint32_t, int, const S&)>& fn) {
                for (uint32_t b = 0; b < 2; ++b) {
                    uint32_t cc = 2 * c + b;
                    for (int st : {kAlive, t + 1}) {
                        const S& mass = model.gmass[static_cast<size_t>(t) + 1][g_slot(t + 1, cc, st)];
                        if (!(mass > S(0))) continue;
                        S w = S(mass * mu.density(t + 1, cc, st));
                        fn(cc, st, w);
                    }
                }
            };
            visit([&](uint32_t cc, int st, const S& w) {
                den = S(den + w);
                mean = S(mean + S(w * sol.Y.at(t + 1, cc, st)));
                wmean = S(wmean + S(w * wval(cc)));
            });
            mean = S(mean / den);
            S drift = S(S(wmean / den) - model.base.driver.at(t, c));  // E[dW] under mu
            S var = numeric_traits<S>::zero(), cov = numeric_traits<S>::zero();
            visit([&](uint32_t cc, int st, const S& w) {
                S dw = S(S(wval(cc) - model.base.driver.at(t, c)) - drift);
                var = S(var + S(w * S(dw * dw)));
                cov = S(cov + S(w * S(dw * S(sol.Y.at(t + 1, cc, st) - mean))));
            });
            S z = (var > S(0)) ? S(cov / var) : numeric_traits<S>::zero();
            S cont = S(S(mean + S(S(data.f.at(t, c) * model.base.dt))) - S(z * drift));
            S dk = numeric_traits<S>::zero();
            S ynew = cont;
            if (data.barrier) {
                const S& b = data.barrier->at(t, c);
                if (b > cont) {
                    dk = S(b - cont);
                    ynew = b;
                }
            }
            sol.Y.at(t, c, kAlive) = ynew;
            // record per-step increments on the successor atoms; the forward
            // pass below turns them into the cumulative processes
            visit([&](uint32_t cc, int st, const S&) {
                sol.Z.at(t + 1, cc, st) = z;
                sol.K.at(t + 1, cc, st) = dk;
                S dw = S(wval(cc) - model.base.driver.at(t, c));
                S dm = S(S(S(sol.Y.at(t + 1, cc, st) - ynew) +
                           S(data.f.at(t, c) * model.base.dt)) +
                         S(dk - S(z * dw)));
                sol.M.at(t + 1, cc, st) = dm;
            });
        }
    // forward accumulation; post-death and post-horizon steps are flat
    for (int t = 1; t <= N; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c)
            for (int st = kAlive; st <= t; ++st) {
                int pst = (st == t) ? kAlive : st;
                bool active_step = (t <= Teff) && (st == kAlive || st == t) &&
                                   model.has_mass(t - 1, c >> 1, kAlive) &&
                                   model.has_mass(t, c, st);
                S dm = active_step ? sol.M.at(t, c, st) : numeric_traits<S>::zero();
                S dk = active_step ? sol.K.at(t, c, st) : numeric_traits<S>::zero();
                if (!active_step) sol.Z.at(t, c, st) = numeric_traits<S>::zero();
                sol.M.at(t, c, st) = S(sol.M.at(t - 1, c >> 1, pst) + dm);
                sol.K.at(t, c, st) = S(sol.K.at(t - 1, c >> 1, pst) + dk);
            }
    validate_rbsde_solution(model, data, sol, mu, sol.diag);
    return sol;
}

/// Recompute all Definition 4.1 diagnostics for a candidate quadruple.
template <class S>
void validate_rbsde_solution(const RandomTimeModel<S>& model, const RBSDEData<S>& data,
                             const RBSDESolution<S>& sol, const GMeasure<S>& mu,
                             RBSDEDiagnostics<S>& diag) {
    const int N = model.depth();
    const int Teff = detail::effective_T(model, data);
    diag = RBSDEDiagnostics<S>{};
    for (int t = 1; t <= Teff; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            uint32_t par = c >> 1;
            if (!model.has_mass(t - 1, par, kAlive)) continue;
            for (int st : {kAlive, t}) {
                if (!model.has_mass(t, c, st)) continue;
                S dy = S(sol.Y.at(t, c, st) - sol.Y.at(t - 1, par, kAlive));
                S dw = S(model.base.driver.at(t, c) - model.base.driver.at(t - 1, par));
                S dm = S(sol.M.at(t, c, st) - sol.M.at(t - 1, par, kAlive));
                S dk = S(sol.K.at(t, c, st) - sol.K.at(t - 1, par, kAlive));
                S res = abs_val(S(S(S(dy + S(data.f.at(t - 1, par) * model.base.dt)) -
                                    S(sol.Z.at(t, c, st) * dw)) -
                                  S(dm - dk)));
                diag.equation_residual = max_val(diag.equation_residual, res);
                if (dk < diag.k_min_increment) diag.k_min_increment = dk;
                if (data.barrier) {
                    S gap = abs_val(S(S(sol.Y.at(t - 1, par, kAlive) -
                                        data.barrier->at(t - 1, par)) *
                                      dk));
                    diag.skorokhod_residual = max_val(diag.skorokhod_residual, gap);
                }
            }
        }
    if (data.barrier)
        for (int t = 0; t < Teff; ++t)
            for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
                if (!model.has_mass(t, c, kAlive)) continue;
                S viol = S(data.barrier->at(t, c) - sol.Y.at(t, c, kAlive));
                diag.barrier_violation = max_val(diag.barrier_violation, pos_part(viol));
            }
    diag.martingale_drift = g_martingale_drift(mu, sol.M, Teff);
    model.for_each_scenario([&](uint32_t p, int k, const S&) {
        int u = std::min(k <= N ? k : N + 1, Teff);
        if (u > N) u = N;
        uint32_t cu = p >> (N - u);
        S xi = data.h.at(u, cu);
        S y = sol.Y.at(u, cu, model.status_at(k, u));
        diag.terminal_mismatch = max_val(diag.terminal_mismatch, abs_val(S(y - xi)));
    });
}

/// The finite-horizon G-RBSDE solved under Q~.
template <class S>
RBSDESolution<S> solve_G(const RandomTimeModel<S>& model, const RBSDEData<S>& data) {
    if (data.T == kRandomHorizon)
        throw std::invalid_argument("solve_G: use solve_random_horizon for a tau horizon");
    return solve_rbsde_core(model, data, GMeasure<S>::Qtilde(model, data.T));
}

/// Snell representation: Y^G_t + int_0^{t/\tau/\T} f = (G,Q~)-Snell
/// envelope of the reward built from (f, S, xi). Requires a barrier.
template <class S>
S snell_representation_certificate(const RandomTimeModel<S>& model, const RBSDEData<S>& data,
                      const RBSDESolution<S>& sol) {
    if (!data.barrier) throw std::invalid_argument("snell representation: needs a barrier");
    const int N = model.depth();
    const int T = detail::effective_T(model, data);
    FProcess<S> acc_f(N);
    for (int t = 1; t <= N; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c)
            acc_f.at(t, c) = S(acc_f.at(t - 1, c >> 1) +
                               ((t - 1 < T) ? S(data.f.at(t - 1, c >> 1) * model.base.dt)
                                            : numeric_traits<S>::zero()));
    FProcess<S> alive_reward(N), death_reward(N);
    for (int t = 0; t <= N; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            alive_reward.at(t, c) =
                S(acc_f.at(t, c) + ((t < T) ? data.barrier->at(t, c) : data.h.at(T, c >> (t - std::min(t, T)))));
            death_reward.at(t, c) = S(acc_f.at(t, c) + data.h.at(std::min(t, T), c >> (t - std::min(t, T))));
        }
    auto reward = g_stopped_process(model, alive_reward, death_reward);
    auto mu = (data.T == kRandomHorizon) ? GMeasure<S>::P(model) : GMeasure<S>::Qtilde(model, T);
    auto env = snell_backward_G(model, reward, 0, T, mu);
    S worst = numeric_traits<S>::zero();
    for (int t = 0; t <= T; ++t)
        model.for_each_atom(t, [&](uint32_t c, int st) {
            int u = (st == kAlive) ? t : std::min(st, T);
            S acc = acc_f.at(u, c >> (t - u));
            S lhs = S(sol.Y.at(t, c, st) + acc);
            worst = max_val(worst, abs_val(S(lhs - env.envelope.at(t, c, st))));
        });
    return worst;
}

// ---------------------------------------------------------------------------
// The base-filtration equation
// ---------------------------------------------------------------------------

template <class S>
struct FTriple {
    FProcess<S> Y, Z, K;
    S equation_residual = numeric_traits<S>::zero();
    S skorokhod_residual = numeric_traits<S>::zero();
    S snell_certificate = numeric_traits<S>::zero();
};

/// The F-RBSDE with data (E~ f, E~ S, E~_T h_T) and the extra nondecreasing
/// term int h dV^F. infinite=true runs the random-horizon variant on a
/// closed model: horizon N, zero terminal value.
template <class S>
FTriple<S> solve_F(const RandomTimeModel<S>& model, const RBSDEData<S>& data,
                   bool infinite = false) {
    const int N = model.depth();
    const int T = infinite ? N : detail::effective_T(model, data);
    if (infinite && model.mode != HorizonMode::Closed)
        throw std::invalid_argument("solve_F: infinite variant needs a closed model");
    if (!model.base.driver_is_martingale())
        throw std::invalid_argument("solve_F: base driver must be a martingale");
    FTriple<S> tri{FProcess<S>(N), FProcess<S>(N), FProcess<S>(N)};
    // terminal
    for (uint32_t c = 0; c < (uint32_t{1} << T); ++c)
        tri.Y.at(T, c) = infinite ? numeric_traits<S>::zero()
                                  : S(model.Etilde.at(T, c) * data.h.at(T, c));
    for (int t = T - 1; t >= 0; --t) {
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            // q = Y_{t+1} + h_{t+1} dV^F_{t+1} on each child
            S q[2], wmass[2];
            for (uint32_t b = 0; b < 2; ++b) {
                uint32_t cc = 2 * c + b;
                S dvf = S(model.VF.at(t + 1, cc) - model.VF.at(t, c));
                q[b] = S(tri.Y.at(t + 1, cc) + S(data.h.at(t + 1, cc) * dvf));
                wmass[b] = model.base.atom_mass[static_cast<size_t>(t) + 1][cc];
            }
            S tot = S(wmass[0] + wmass[1]);
            S mean = S(S(S(wmass[0] * q[0]) + S(wmass[1] * q[1])) / tot);
            S dw = S(model.base.driver.at(t + 1, 2 * c + 1) - model.base.driver.at(t, c));
            // fair coin: the centred increment spans the one-step martingales
            S z = S(S(q[1] - q[0]) / S(S(2) * dw));
            S ff = S(model.Etilde.at(t, c) * data.f.at(t, c));
            S cont = S(mean + S(ff * model.base.dt));
            S dk = numeric_traits<S>::zero();
            S ynew = cont;
            if (data.barrier) {
                S bf = S(model.Etilde.at(t, c) * data.barrier->at(t, c));
                if (bf > cont) {
                    dk = S(bf - cont);
                    ynew = bf;
                }
            }
            tri.Y.at(t, c) = ynew;
            for (uint32_t b = 0; b < 2; ++b) {
                uint32_t cc = 2 * c + b;
                tri.Z.at(t + 1, cc) = z;
                tri.K.at(t + 1, cc) = dk;  // increment; accumulated forward below
                // residual of the step equation must vanish
                S dvf = S(model.VF.at(t + 1, cc) - model.VF.at(t, c));
                S lhs = S(tri.Y.at(t + 1, cc) - ynew);
                S dwb = S(model.base.driver.at(t + 1, cc) - model.base.driver.at(t, c));
                S rhs = S(S(S(S(0) - S(ff * model.base.dt)) -
                            S(data.h.at(t + 1, cc) * dvf)) -
                          dk);
                rhs = S(rhs + S(z * dwb));
                tri.equation_residual = max_val(tri.equation_residual, abs_val(S(lhs - rhs)));
                if (data.barrier) {
                    S bf_prev = S(model.Etilde.at(t, c) * data.barrier->at(t, c));
                    tri.skorokhod_residual =
                        max_val(tri.skorokhod_residual, abs_val(S(S(ynew - bf_prev) * dk)));
                }
            }
        }
    }
    for (int t = 1; t <= N; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c)
            tri.K.at(t, c) = S(tri.K.at(t - 1, c >> 1) + (t <= T ? tri.K.at(t, c)
                                                                 : numeric_traits<S>::zero()));
    // Snell representation: Y^F + int_0^. (f^F ds + h dV^F) is the
    // F-Snell envelope of the cumulative reward
    {
        FProcess<S> acc(N), reward(N);
        for (int t = 1; t <= T; ++t)
            for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
                S ff = S(model.Etilde.at(t - 1, c >> 1) * data.f.at(t - 1, c >> 1));
                S dvf = S(model.VF.at(t, c) - model.VF.at(t - 1, c >> 1));
                acc.at(t, c) =
                    S(S(acc.at(t - 1, c >> 1) + S(ff * model.base.dt)) + S(data.h.at(t, c) * dvf));
            }
        for (int t = 0; t <= T; ++t)
            for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
                S tail;
                if (t == T) {
                    tail = infinite ? numeric_traits<S>::zero()
                                    : S(model.Etilde.at(T, c) * data.h.at(T, c));
                } else if (data.barrier) {
                    tail = S(model.Etilde.at(t, c) * data.barrier->at(t, c));
                } else {
                    // BSDE mode: only the horizon pays
                    tail = numeric_traits<S>::zero();
                }
                reward.at(t, c) = S(acc.at(t, c) + tail);
            }
        if (data.barrier) {
            auto env = snell_backward_F(model.base, reward, 0, T);
            for (int t = 0; t <= T; ++t)
                for (uint32_t c = 0; c < (uint32_t{1} << t); ++c)
                    tri.snell_certificate =
                        max_val(tri.snell_certificate,
                                abs_val(S(S(tri.Y.at(t, c) + acc.at(t, c)) -
                                          env.envelope.at(t, c))));
        }
    }
    return tri;
}

/// Explicit solution transform: map the F-triple to the G-quadruple via
/// (Y^F/E~, Z^F/E~_-, (1/E~_-) . K^F, (h - Y^F/E~) . N^G).
template <class S>
RBSDESolution<S> transform_F_to_G(const RandomTimeModel<S>& model, const FTriple<S>& tri,
                                  const RBSDEData<S>& data) {
    const int N = model.depth();
    const bool random_mode = (data.T == kRandomHorizon);
    const int T = random_mode ? N : data.T;
    RBSDESolution<S> sol{GProcess<S>(N), GProcess<S>(N), GProcess<S>(N), GProcess<S>(N), {}};
    // Y
    for (int t = 0; t <= N; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c)
            for (int st = kAlive; st <= t; ++st) {
                if (st != kAlive && st <= T) {
                    sol.Y.at(t, c, st) = data.h.at(st, c >> (t - st));
                } else if (st == kAlive && t < T) {
                    if (model.has_mass(t, c, kAlive))
                        sol.Y.at(t, c, kAlive) = S(tri.Y.at(t, c) / model.Etilde.at(t, c));
                } else {
                    sol.Y.at(t, c, st) = data.h.at(T, c >> (t - std::min(t, T)));
                }
            }
    // Z, K, M along active steps
    for (int t = 1; t <= T; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            uint32_t par = c >> 1;
            if (!model.has_mass(t - 1, par, kAlive)) continue;
            S et_prev = model.Etilde.at(t - 1, par);
            S z = S(tri.Z.at(t, c) / et_prev);
            S dk = S(S(tri.K.at(t, c) - tri.K.at(t - 1, par)) / et_prev);
            S comp = S(model.dDoF.at(t, c) / model.Gtilde.at(t, c));
            for (int st : {kAlive, t}) {
                if (!model.has_mass(t, c, st)) continue;
                sol.Z.at(t, c, st) = z;
                sol.K.at(t, c, st) = S(sol.K.at(t - 1, par, kAlive) + dk);
                S dng = (st == kAlive) ? S(S(0) - comp) : S(numeric_traits<S>::one() - comp);
                S dm = numeric_traits<S>::zero();
                if (!(dng == S(0))) {
                    S hminus = S(data.h.at(t, c) - S(tri.Y.at(t, c) / model.Etilde.at(t, c)));
                    dm = S(hminus * dng);
                }
                sol.M.at(t, c, st) = S(sol.M.at(t - 1, par, kAlive) + dm);
            }
        }
    // freeze outside active steps
    for (int t = 1; t <= N; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c)
            for (int st = kAlive; st <= t; ++st) {
                bool active_step =
                    (t <= T) && (st == kAlive || st == t) && model.has_mass(t - 1, c >> 1, kAlive);
                if (!active_step) {
                    int pst = (st == t) ? kAlive : st;
                    sol.M.at(t, c, st) = sol.M.at(t - 1, c >> 1, pst);
                    sol.K.at(t, c, st) = sol.K.at(t - 1, c >> 1, pst);
                    sol.Z.at(t, c, st) = numeric_traits<S>::zero();
                }
            }
    auto mu = random_mode ? GMeasure<S>::P(model) : GMeasure<S>::Qtilde(model, T);
    validate_rbsde_solution(model, data, sol, mu, sol.diag);
    return sol;
}

/// Worst per-component gap between two quadruples over positive-mass atoms.
template <class S>
struct SolutionGap {
    S y = numeric_traits<S>::zero();
    S z = numeric_traits<S>::zero();
    S m = numeric_traits<S>::zero();
    S k = numeric_traits<S>::zero();
};

template <class S>
SolutionGap<S> compare_solutions(const RandomTimeModel<S>& model, const RBSDESolution<S>& a,
                                 const RBSDESolution<S>& b) {
    SolutionGap<S> gap;
    for (int t = 0; t <= model.depth(); ++t)
        model.for_each_atom(t, [&](uint32_t c, int st) {
            gap.y = max_val(gap.y, abs_val(S(a.Y.at(t, c, st) - b.Y.at(t, c, st))));
            gap.z = max_val(gap.z, abs_val(S(a.Z.at(t, c, st) - b.Z.at(t, c, st))));
            gap.m = max_val(gap.m, abs_val(S(a.M.at(t, c, st) - b.M.at(t, c, st))));
            gap.k = max_val(gap.k, abs_val(S(a.K.at(t, c, st) - b.K.at(t, c, st))));
        });
    return gap;
}

// ---------------------------------------------------------------------------
// Random horizon
// ---------------------------------------------------------------------------

/// Residual of the discount-weighted equivalent RBSDE for the transformed
/// quadruple (Y E~^{1/p}, Z E~_-^{1/p}, E~_-^{1/p}.K, E~_-^{1/p}.M). Uses the
/// division-free form of the dV~^{(1/p)} coefficient. Fractional powers force
/// a double-precision evaluation.
template <class S>
double equivalent_rbsde_residual(const RandomTimeModel<S>& model, const RBSDEData<S>& data,
                                 const RBSDESolution<S>& sol, double p) {
    const int N = model.depth();
    const double cexp = 1.0 / p;
    auto dbl = [](const S& v) { return numeric_traits<S>::to_double(v); };
    double worst = 0.0;
    std::vector<std::vector<double>> ec(static_cast<size_t>(N) + 1);  // E~^{1/p}
    for (int t = 0; t <= N; ++t) {
        ec[static_cast<size_t>(t)].resize(size_t{1} << t);
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c)
            ec[static_cast<size_t>(t)][c] = std::pow(dbl(model.Etilde.at(t, c)), cexp);
    }
    for (int t = 1; t <= N; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            uint32_t par = c >> 1;
            if (!model.has_mass(t - 1, par, kAlive)) continue;
            double x = dbl(model.dDoF.at(t, c)) / dbl(model.Gtilde.at(t, c));
            double dva = 1.0 - std::pow(1.0 - x, cexp);
            double ep = ec[static_cast<size_t>(t) - 1][par];
            for (int st : {kAlive, t}) {
                if (!model.has_mass(t, c, st)) continue;
                double y_now = dbl(sol.Y.at(t, c, st));
                double ytil_now = y_now * ec[static_cast<size_t>(t)][c];
                double ytil_prev = dbl(sol.Y.at(t - 1, par, kAlive)) * ep;
                double dw = dbl(model.base.driver.at(t, c)) - dbl(model.base.driver.at(t - 1, par));
                double dk = (dbl(sol.K.at(t, c, st)) - dbl(sol.K.at(t - 1, par, kAlive))) * ep;
                double dm = (dbl(sol.M.at(t, c, st)) - dbl(sol.M.at(t - 1, par, kAlive))) * ep;
                double z = dbl(sol.Z.at(t, c, st)) * ep;
                // Ytil (G~/G)^{1/p} dV~ = Y_t E~_{t-1}^{1/p} dV~ (division-free)
                double refl = y_now * ep * dva;
                double res = (ytil_now - ytil_prev) + refl +
                             dbl(data.f.at(t - 1, par)) * ep * dbl(model.base.dt) -
                             (z * dw + dm - dk);
                worst = std::max(worst, std::abs(res));
            }
        }
    // barrier in the weighted variables (Skorokhod follows from the raw one)
    if (data.barrier)
        for (int t = 0; t < N; ++t)
            for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
                if (!model.has_mass(t, c, kAlive)) continue;
                double lhs = dbl(sol.Y.at(t, c, kAlive)) * ec[static_cast<size_t>(t)][c];
                double rhs = dbl(data.barrier->at(t, c)) * ec[static_cast<size_t>(t)][c];
                worst = std::max(worst, std::max(rhs - lhs, 0.0));
            }
    return worst;
}

template <class S>
struct TruncationLogEntry {
    int n = 0;
    double gap_to_final = 0.0;
    double cauchy_gap = 0.0;  // max weighted distance to any later truncation
};

template <class S>
struct RandomHorizonResult {
    RBSDESolution<S> solution;       // direct (G,P) solve on horizon tau
    FTriple<S> f_side;               // infinite-horizon base-filtration triple
    SolutionGap<S> transform_gap;    // direct solve vs the explicit transform
    double weighted_residual = 0.0;  // discount-weighted equivalent RBSDE
    std::vector<TruncationLogEntry<S>> truncation_log;
};

namespace detail {

template <class S>
RBSDEData<S> truncate_data(const RandomTimeModel<S>& model, const RBSDEData<S>& data, int n) {
    const int N = model.depth();
    RBSDEData<S> out = data;
    out.T = n;
    out.f = FProcess<S>(N);
    out.h = FProcess<S>(N);
    if (data.barrier) out.barrier = FProcess<S>(N);
    for (int t = 0; t <= N; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            int u = std::min(t, n);
            uint32_t cu = c >> (t - u);
            out.f.at(t, c) = (t < n) ? data.f.at(t, c) : numeric_traits<S>::zero();
            out.h.at(t, c) = data.h.at(u, cu);
            if (data.barrier) (*out.barrier).at(t, c) = data.barrier->at(u, cu);
        }
    return out;
}

/// Weighted distance ||| (E~^{1/p} dY, E~_-^{1/p} dZ, E~_-^{1/p}.dM, 0) ||| used
/// by the truncation Cauchy log; computed in doubles.
template <class S>
double weighted_distance(const RandomTimeModel<S>& model, const RBSDESolution<S>& a,
                         const RBSDESolution<S>& b, double p) {
    const int N = model.depth();
    auto dbl = [](const S& v) { return numeric_traits<S>::to_double(v); };
    double ed = 0.0, ez = 0.0, em = 0.0;
    model.for_each_scenario([&](uint32_t path, int k, const S& w) {
        double ww = dbl(w);
        int horizon = std::min(k, N);
        double sup = 0.0, sz = 0.0, sm = 0.0;
        double m_prev = 0.0;
        for (int t = 0; t <= horizon; ++t) {
            uint32_t c = path >> (N - t);
            int st = model.status_at(k, t);
            double et = dbl(model.Etilde.at(t, c));
            double dy = dbl(a.Y.at(t, c, st)) - dbl(b.Y.at(t, c, st));
            sup = std::max(sup, et * std::pow(std::abs(dy), p));
            if (t >= 1) {
                double eprev = dbl(model.Etilde.at(t - 1, c >> 1));
                double epc = std::pow(eprev, 2.0 / p);
                double dz = dbl(a.Z.at(t, c, st)) - dbl(b.Z.at(t, c, st));
                sz += epc * dz * dz * dbl(model.base.dt);
                double m_now = dbl(a.M.at(t, c, st)) - dbl(b.M.at(t, c, st));
                double dm = m_now - m_prev;
                sm += epc * dm * dm;
                m_prev = m_now;
            }
        }
        ed += ww * sup;
        ez += ww * std::pow(sz, p / 2.0);
        em += ww * std::pow(sm, p / 2.0);
    });
    return std::pow(ed, 1.0 / p) + std::pow(ez, 1.0 / p) + std::pow(em, 1.0 / p);
}

}  // namespace detail

/// Solve on the horizon tau directly, reproduce the localization scheme of
/// growing fixed horizons, and certify the weighted equation and the
/// explicit transform.
template <class S>
RandomHorizonResult<S> solve_random_horizon(const RandomTimeModel<S>& model,
                                            const RBSDEData<S>& data, double p) {
    if (model.mode != HorizonMode::Closed)
        throw std::invalid_argument("solve_random_horizon: closed-mode model required");
    RBSDEData<S> d = data;
    d.T = kRandomHorizon;
    d.p = p;
    RandomHorizonResult<S> res{solve_rbsde_core(model, d, GMeasure<S>::P(model)),
                               solve_F(model, d, /*infinite=*/true),
                               {},
                               0.0,
                               {}};
    auto transformed = transform_F_to_G(model, res.f_side, d);
    res.transform_gap = compare_solutions(model, res.solution, transformed);
    res.weighted_residual = equivalent_rbsde_residual(model, d, res.solution, p);

    const int N = model.depth();
    std::vector<RBSDESolution<S>> truncs;
    truncs.reserve(static_cast<size_t>(N));
    for (int n = 1; n <= N; ++n) {
        auto dn = detail::truncate_data(model, data, n);
        truncs.push_back(solve_rbsde_core(model, dn, GMeasure<S>::Qtilde(model, n)));
    }
    for (int n = 1; n <= N; ++n) {
        TruncationLogEntry<S> e;
        e.n = n;
        e.gap_to_final = detail::weighted_distance(model, truncs[static_cast<size_t>(n - 1)],
                                                   res.solution, p);
        e.cauchy_gap = 0.0;
        for (int k = n + 1; k <= N; ++k)
            e.cauchy_gap = std::max(e.cauchy_gap,
                                    detail::weighted_distance(model, truncs[static_cast<size_t>(n - 1)],
                                                              truncs[static_cast<size_t>(k - 1)], p));
        e.cauchy_gap = std::max(e.cauchy_gap, e.gap_to_final);
        res.truncation_log.push_back(e);
    }
    return res;
}

/// BSDE mode (no barrier, K = 0).
template <class S>
RBSDESolution<S> solve_bsde(const RandomTimeModel<S>& model, const RBSDEData<S>& data) {
    RBSDEData<S> d = data;
    d.barrier.reset();
    if (d.T == kRandomHorizon)
        return solve_rbsde_core(model, d, GMeasure<S>::P(model));
    return solve_rbsde_core(model, d, GMeasure<S>::Qtilde(model, d.T));
}

}  // namespace taulab
