#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "taulab/fspace.hpp"

namespace taulab {

enum class HorizonMode { Open, Closed };

constexpr int kAlive = -1;

/// Atom slot layout at time t: per prefix, slot 0 = alive (tau > t), slot 1+s =
/// dead at s (tau = s <= t).
inline size_t g_slot(int t, uint32_t c, int status) {
    return static_cast<size_t>(c) * (static_cast<size_t>(t) + 2) +
           static_cast<size_t>(status + 1);
}

/// Real-valued process on the enlarged filtration's atoms.
template <class S>
struct GProcess {
    std::vector<std::vector<S>> values;

    GProcess() = default;
    explicit GProcess(int depth) : values(static_cast<size_t>(depth) + 1) {
        for (int t = 0; t <= depth; ++t)
            values[static_cast<size_t>(t)].assign((size_t{1} << t) * (static_cast<size_t>(t) + 2),
                                                  numeric_traits<S>::zero());
    }

    int depth() const { return static_cast<int>(values.size()) - 1; }
    S& at(int t, uint32_t c, int status) { return values[static_cast<size_t>(t)][g_slot(t, c, status)]; }
    const S& at(int t, uint32_t c, int status) const {
        return values[static_cast<size_t>(t)][g_slot(t, c, status)];
    }
};

struct ModelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Joint law of (path, tau) on the enlarged space. tau takes values in
/// {0..N} or stays unobserved (ALIVE slot, only in Open mode). Owns every
/// derived object of the enlargement: G, G~, D^{o,F}, m, E~, Z~, V^F.
template <class S>
struct RandomTimeModel {
    FilteredSpace<S> base;
    // joint[path][k] for k = 0..N; slot N+1 = tau beyond the horizon
    std::vector<std::vector<S>> joint;
    HorizonMode mode = HorizonMode::Open;

    FProcess<S> G, Gtilde, dDoF, DoF, m;
    FProcess<S> Em;      // E(G_-^{-1} . m), positive
    FProcess<S> Ztilde;  // 1 / Em
    FProcess<S> Etilde;  // E(-G~^{-1} . D^{o,F}), nonincreasing in [0,1]
    FProcess<S> VF;      // 1 - Etilde

    // gmass[t][g_slot(t,c,status)] = P(prefix c at t, status)
    std::vector<std::vector<S>> gmass;

    int depth() const { return base.depth; }
    int alive_k() const { return base.depth + 1; }

    bool has_mass(int t, uint32_t c, int status) const {
        return gmass[static_cast<size_t>(t)][g_slot(t, c, status)] > S(0);
    }

    /// Status of the scenario (path, k) at time t; k == depth+1 means alive
    /// throughout.
    int status_at(int k, int t) const { return (k <= base.depth && k <= t) ? k : kAlive; }

    void finalize() {
        const int N = base.depth;
        size_t npaths = size_t{1} << N;
        if (joint.size() != npaths) throw ModelError("model: joint table size mismatch");
        bool any_alive = false;
        for (size_t p = 0; p < npaths; ++p) {
            if (joint[p].size() != static_cast<size_t>(N) + 2)
                throw ModelError("model: joint row size mismatch");
            S row = numeric_traits<S>::zero();
            for (const auto& w : joint[p]) {
                if (w < S(0)) throw ModelError("model: negative joint weight");
                row = S(row + w);
            }
            if (!FilteredSpace<S>::scalar_close(row, base.path_prob[p]))
                throw ModelError("model: joint weights do not marginalize to path_prob");
            if (joint[p][static_cast<size_t>(N) + 1] > S(0)) any_alive = true;
        }
        mode = any_alive ? HorizonMode::Open : HorizonMode::Closed;

        // atom masses on the enlarged space
        gmass.assign(static_cast<size_t>(N) + 1, {});
        for (int t = N; t >= 0; --t) {
            auto& lvl = gmass[static_cast<size_t>(t)];
            lvl.assign((size_t{1} << t) * (static_cast<size_t>(t) + 2), numeric_traits<S>::zero());
            if (t == N) {
                for (uint32_t p = 0; p < npaths; ++p) {
                    lvl[g_slot(N, p, kAlive)] = joint[p][static_cast<size_t>(N) + 1];
                    for (int s = 0; s <= N; ++s) lvl[g_slot(N, p, s)] = joint[p][static_cast<size_t>(s)];
                }
            } else {
                const auto& nxt = gmass[static_cast<size_t>(t) + 1];
                for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
                    S alive = numeric_traits<S>::zero();
                    for (uint32_t b = 0; b < 2; ++b) {
                        alive = S(alive + nxt[g_slot(t + 1, 2 * c + b, kAlive)]);
                        alive = S(alive + nxt[g_slot(t + 1, 2 * c + b, t + 1)]);
                    }
                    lvl[g_slot(t, c, kAlive)] = alive;
                    for (int s = 0; s <= t; ++s) {
                        S dead = numeric_traits<S>::zero();
                        for (uint32_t b = 0; b < 2; ++b)
                            dead = S(dead + nxt[g_slot(t + 1, 2 * c + b, s)]);
                        lvl[g_slot(t, c, s)] = dead;
                    }
                }
            }
        }

        // Azema supermartingales and friends
        G = FProcess<S>(N);
        Gtilde = FProcess<S>(N);
        dDoF = FProcess<S>(N);
        DoF = FProcess<S>(N);
        m = FProcess<S>(N);
        Em = FProcess<S>(N);
        Ztilde = FProcess<S>(N);
        Etilde = FProcess<S>(N);
        VF = FProcess<S>(N);
        for (int t = 0; t <= N; ++t) {
            for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
                const S& am = base.atom_mass[static_cast<size_t>(t)][c];
                G.at(t, c) = S(gmass[static_cast<size_t>(t)][g_slot(t, c, kAlive)] / am);
                dDoF.at(t, c) = S(gmass[static_cast<size_t>(t)][g_slot(t, c, t)] / am);
                Gtilde.at(t, c) = S(G.at(t, c) + dDoF.at(t, c));
                DoF.at(t, c) = (t == 0) ? dDoF.at(t, c)
                                        : S(DoF.at(t - 1, c >> 1) + dDoF.at(t, c));
                m.at(t, c) = S(G.at(t, c) + DoF.at(t, c));
            }
        }
        // positivity per the standing assumption: G > 0 strictly before the
        // horizon; at the horizon only in Open mode. G~ must be positive at the
        // horizon too ({G~ = 0 < G_-} is ruled out).
        for (int t = 0; t <= N; ++t)
            for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
                bool need_G = (t < N) || (mode == HorizonMode::Open);
                if (need_G && !(G.at(t, c) > S(0)))
                    throw ModelError("model: survival probability G vanishes at time " +
                                     std::to_string(t) + ", atom " + std::to_string(c));
                if (!(Gtilde.at(t, c) > S(0)))
                    throw ModelError("model: G~ vanishes at time " + std::to_string(t) +
                                     ", atom " + std::to_string(c));
            }
        for (uint32_t c = 0; c < 1u; ++c) {
            Em.at(0, c) = numeric_traits<S>::one();
            Ztilde.at(0, c) = numeric_traits<S>::one();
            Etilde.at(0, c) = numeric_traits<S>::one();
            VF.at(0, c) = numeric_traits<S>::zero();
        }
        for (int t = 1; t <= N; ++t)
            for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
                uint32_t par = c >> 1;
                // 1 + dm_t / G_{t-1} = G~_t / G_{t-1}
                Em.at(t, c) = S(Em.at(t - 1, par) * S(Gtilde.at(t, c) / G.at(t - 1, par)));
                Ztilde.at(t, c) = S(numeric_traits<S>::one() / Em.at(t, c));
                // 1 - dD^{o,F}_t / G~_t = G_t / G~_t
                Etilde.at(t, c) = S(Etilde.at(t - 1, par) * S(G.at(t, c) / Gtilde.at(t, c)));
                VF.at(t, c) = S(numeric_traits<S>::one() - Etilde.at(t, c));
            }
    }

    /// Iterate positive-mass atoms at time t.
    void for_each_atom(int t, const std::function<void(uint32_t, int)>& fn) const {
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c)
            for (int st = kAlive; st <= t; ++st)
                if (has_mass(t, c, st)) fn(c, st);
    }

    /// Iterate scenarios (path, k) of positive weight; k == depth+1 encodes a
    /// never-observed tau.
    void for_each_scenario(const std::function<void(uint32_t, int, const S&)>& fn) const {
        for (uint32_t p = 0; p < (uint32_t{1} << base.depth); ++p)
            for (int k = 0; k <= base.depth + 1; ++k) {
                const S& w = joint[p][static_cast<size_t>(k)];
                if (w > S(0)) fn(p, k, w);
            }
    }
};

// ---------------------------------------------------------------------------
// Measures on the enlarged filtration
// ---------------------------------------------------------------------------

/// P, or the equivalent measure Q~ with density Z~_{T /\ tau} on G_{T /\ tau}.
template <class S>
struct GMeasure {
    const RandomTimeModel<S>* model = nullptr;
    std::optional<int> qtilde_T;

    static GMeasure P(const RandomTimeModel<S>& m) { return GMeasure{&m, std::nullopt}; }
    static GMeasure Qtilde(const RandomTimeModel<S>& m, int T) { return GMeasure{&m, T}; }

    /// Density process Lambda_t = Z~_{t /\ tau /\ T} at an atom (1 under P).
    S density(int t, uint32_t c, int status) const {
        if (!qtilde_T) return numeric_traits<S>::one();
        int u = t;
        if (status >= 0 && status < u) u = status;
        if (*qtilde_T < u) u = *qtilde_T;
        return model->Ztilde.at(u, c >> (t - u));
    }

    S scenario_weight(uint32_t path, int k) const {
        S w = model->joint[path][static_cast<size_t>(k)];
        if (!qtilde_T) return w;
        int N = model->base.depth;
        int u = (k <= N) ? std::min(k, *qtilde_T) : *qtilde_T;
        return S(w * model->Ztilde.at(u, path >> (N - u)));
    }
};

/// E_mu[ X_{t+1} | G_t-atom ], with X given as a callback on successor atoms.
template <class S>
S g_step_expect(const GMeasure<S>& mu, int t, uint32_t c, int status,
                const std::function<S(uint32_t, int)>& val_next) {
    const auto& model = *mu.model;
    S num = numeric_traits<S>::zero(), den = numeric_traits<S>::zero();
    auto add = [&](uint32_t cc, int st) {
        const S& mass = model.gmass[static_cast<size_t>(t) + 1][g_slot(t + 1, cc, st)];
        if (!(mass > S(0))) return;
        S w = S(mass * mu.density(t + 1, cc, st));
        num = S(num + S(w * val_next(cc, st)));
        den = S(den + w);
    };
    for (uint32_t b = 0; b < 2; ++b) {
        uint32_t cc = 2 * c + b;
        if (status == kAlive) {
            add(cc, kAlive);
            add(cc, t + 1);
        } else {
            add(cc, status);
        }
    }
    if (!(den > S(0))) throw std::domain_error("g_step_expect: zero mass at atom");
    return S(num / den);
}

/// Max one-step conditional drift of X under mu over positive-mass atoms with
/// t <= t_max; zero iff X is a martingale there.
template <class S>
S g_martingale_drift(const GMeasure<S>& mu, const GProcess<S>& x, int t_max) {
    const auto& model = *mu.model;
    S worst = numeric_traits<S>::zero();
    for (int t = 1; t <= t_max; ++t) {
        model.for_each_atom(t - 1, [&](uint32_t c, int st) {
            S pred = g_step_expect<S>(mu, t - 1, c, st,
                                      [&](uint32_t cc, int s2) { return x.at(t, cc, s2); });
            worst = max_val(worst, abs_val(S(pred - x.at(t - 1, c, st))));
        });
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Embeddings and stopped processes
// ---------------------------------------------------------------------------

/// View an F-adapted process inside the enlarged filtration (not stopped).
template <class S>
GProcess<S> embed_f(const RandomTimeModel<S>& model, const FProcess<S>& x) {
    GProcess<S> g(model.depth());
    for (int t = 0; t <= model.depth(); ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c)
            for (int st = kAlive; st <= t; ++st) g.at(t, c, st) = x.at(t, c);
    return g;
}

/// Stopped process with alive values from `alive` and at-death values from
/// `at_death` (evaluated at the death time's prefix). This is the canonical
/// way to build a G-optional process equal to its tau-stopped version.
template <class S>
GProcess<S> g_stopped_process(const RandomTimeModel<S>& model, const FProcess<S>& alive,
                              const FProcess<S>& at_death) {
    GProcess<S> g(model.depth());
    for (int t = 0; t <= model.depth(); ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            g.at(t, c, kAlive) = alive.at(t, c);
            for (int s = 0; s <= t; ++s) g.at(t, c, s) = at_death.at(s, c >> (t - s));
        }
    return g;
}

/// W stopped at tau.
template <class S>
GProcess<S> driver_stopped(const RandomTimeModel<S>& model) {
    return g_stopped_process(model, model.base.driver, model.base.driver);
}

/// Verify that X equals its tau-stopped version.
template <class S>
bool is_stopped_at_tau(const RandomTimeModel<S>& model, const GProcess<S>& x) {
    for (int t = 0; t <= model.depth(); ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c)
            for (int s = 0; s < t; ++s) {
                if (!model.has_mass(t, c, s)) continue;
                if (!(x.at(t, c, s) == x.at(s, c >> (t - s), s))) return false;
            }
    return true;
}

// ---------------------------------------------------------------------------
// Section-2 operators
// ---------------------------------------------------------------------------

template <class S>
struct SurvivalTriple {
    FProcess<S> G, Gtilde, dDoF;
};

template <class S>
SurvivalTriple<S> survival_processes(const RandomTimeModel<S>& model) {
    return {model.G, model.Gtilde, model.dDoF};
}

template <class S>
FProcess<S> martingale_m(const RandomTimeModel<S>& model) {
    return model.m;
}

template <class S>
FProcess<S> epsilon_tilde(const RandomTimeModel<S>& model) {
    return model.Etilde;
}

/// Multiplicative decomposition G = G_0 E(G_-^{-1} . m) E~, atom-wise.
template <class S>
S multiplicative_decomposition_gap(const RandomTimeModel<S>& model) {
    S worst = numeric_traits<S>::zero();
    const S g0 = model.G.at(0, 0);
    for (int t = 0; t <= model.depth(); ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            S rhs = S(g0 * S(model.Em.at(t, c) * model.Etilde.at(t, c)));
            worst = max_val(worst, abs_val(S(model.G.at(t, c) - rhs)));
        }
    return worst;
}

/// The enlargement transform T(M) = M^tau - G~^{-1} I_{]0,tau]} . [M, m],
/// turning a stopped F-martingale into a G-local martingale.
/// The third displayed term vanishes because {G~ = 0 < G_-} is empty here.
template <class S>
GProcess<S> transform_T(const RandomTimeModel<S>& model, const FProcess<S>& M) {
    GProcess<S> out(model.depth());
    for (int t = 1; t <= model.depth(); ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            uint32_t par = c >> 1;
            S dM = S(M.at(t, c) - M.at(t - 1, par));
            S dm = S(model.m.at(t, c) - model.m.at(t - 1, par));
            S incr = S(dM - S(S(dM * dm) / model.Gtilde.at(t, c)));
            // alive and newly-dead atoms take the increment (s <= tau)
            out.at(t, c, kAlive) = S(out.at(t - 1, par, kAlive) + incr);
            out.at(t, c, t) = S(out.at(t - 1, par, kAlive) + incr);
            for (int s = 0; s < t; ++s) out.at(t, c, s) = out.at(s, c >> (t - s), s);
        }
    return out;
}

/// N^G = D - G~^{-1} I_{]0,tau]} . D^{o,F}; a G-martingale with integrable
/// variation.
template <class S>
GProcess<S> n_G(const RandomTimeModel<S>& model) {
    GProcess<S> out(model.depth());
    out.at(0, 0, kAlive) = numeric_traits<S>::zero();
    if (model.has_mass(0, 0, 0)) out.at(0, 0, 0) = numeric_traits<S>::one();
    for (int t = 1; t <= model.depth(); ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            uint32_t par = c >> 1;
            S comp = S(model.dDoF.at(t, c) / model.Gtilde.at(t, c));
            out.at(t, c, kAlive) = S(out.at(t - 1, par, kAlive) - comp);
            out.at(t, c, t) = S(out.at(t - 1, par, kAlive) + S(numeric_traits<S>::one() - comp));
            for (int s = 0; s < t; ++s) out.at(t, c, s) = out.at(s, c >> (t - s), s);
        }
    return out;
}

/// Integral H . N^G for an F-optional integrand (member of the space I^o).
template <class S>
GProcess<S> integral_f_against_nG(const RandomTimeModel<S>& model, const FProcess<S>& h) {
    GProcess<S> out(model.depth());
    for (int t = 1; t <= model.depth(); ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            uint32_t par = c >> 1;
            S comp = S(model.dDoF.at(t, c) / model.Gtilde.at(t, c));
            out.at(t, c, kAlive) = S(out.at(t - 1, par, kAlive) - S(h.at(t, c) * comp));
            out.at(t, c, t) = S(out.at(t - 1, par, kAlive) +
                                S(h.at(t, c) * S(numeric_traits<S>::one() - comp)));
            for (int s = 0; s < t; ++s) out.at(t, c, s) = out.at(s, c >> (t - s), s);
        }
    return out;
}

/// Q~ restricted to G_{T /\ tau}: explicit weights on the stopped atoms.
template <class S>
struct QtildeWeights {
    struct Atom {
        int t;
        uint32_t c;
        int status;  // death time, or kAlive for survivors at T
        S weight;
    };
    std::vector<Atom> atoms;
    S total;
};

template <class S>
struct ZQResult {
    GProcess<S> z_stopped;  // Z~^{T /\ tau}
    QtildeWeights<S> qtilde;
    S mass_discrepancy;   // |total - 1|
    S w_drift_qtilde;     // max Q~-drift of W^{T /\ tau} on [0, T]
};

template <class S>
ZQResult<S> z_tilde_and_Qtilde(const RandomTimeModel<S>& model, int T) {
    if (T < 0 || T > model.depth()) throw std::invalid_argument("z_tilde_and_Qtilde: bad horizon");
    ZQResult<S> res;
    res.z_stopped = GProcess<S>(model.depth());
    for (int t = 0; t <= model.depth(); ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c)
            for (int st = kAlive; st <= t; ++st) {
                int u = t;
                if (st >= 0 && st < u) u = st;
                if (T < u) u = T;
                res.z_stopped.at(t, c, st) = model.Ztilde.at(u, c >> (t - u));
            }
    res.qtilde.total = numeric_traits<S>::zero();
    for (int s = 0; s <= T; ++s)
        for (uint32_t c = 0; c < (uint32_t{1} << s); ++c) {
            const S& mass = model.gmass[static_cast<size_t>(s)][g_slot(s, c, s)];
            if (!(mass > S(0))) continue;
            S w = S(mass * model.Ztilde.at(s, c));
            res.qtilde.atoms.push_back({s, c, s, w});
            res.qtilde.total = S(res.qtilde.total + w);
        }
    for (uint32_t c = 0; c < (uint32_t{1} << T); ++c) {
        const S& mass = model.gmass[static_cast<size_t>(T)][g_slot(T, c, kAlive)];
        if (!(mass > S(0))) continue;
        S w = S(mass * model.Ztilde.at(T, c));
        res.qtilde.atoms.push_back({T, c, kAlive, w});
        res.qtilde.total = S(res.qtilde.total + w);
    }
    res.mass_discrepancy = abs_val(S(res.qtilde.total - numeric_traits<S>::one()));
    if (!model.base.driver_is_martingale())
        throw ModelError("z_tilde_and_Qtilde: driver is not a base martingale");
    auto w_stopped = driver_stopped(model);
    res.w_drift_qtilde = g_martingale_drift<S>(GMeasure<S>::Qtilde(model, T), w_stopped, T);
    return res;
}

/// V^F = 1 - E~ together with the power-discount compensator V~^{(a)}.
/// Returns the processes, the worst monotonicity margin of
/// max(a,1) G~^{-1}.D^{o,F} - V~^{(a)} (must be >= 0), and the discrepancy
/// of the defining identity E~^a = E(-V~^{(a)}).
template <class S>
struct VaResult {
    FProcess<S> V_F;
    FProcess<S> V_a;
    S monotonicity_margin;
    S exp_identity_discrepancy;
};

template <class S>
VaResult<S> v_F_and_v_a(const RandomTimeModel<S>& model, double a) {
    if (!(a > 0)) throw std::invalid_argument("v_F_and_v_a: a must be positive");
    VaResult<S> r;
    r.V_F = model.VF;
    r.V_a = FProcess<S>(model.depth());
    r.monotonicity_margin = numeric_traits<S>::zero();
    bool first = true;
    FProcess<S> exp_check(model.depth());
    exp_check.at(0, 0) = numeric_traits<S>::one();
    for (int t = 1; t <= model.depth(); ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            uint32_t par = c >> 1;
            S x = S(model.dDoF.at(t, c) / model.Gtilde.at(t, c));  // in [0,1]
            S dh = S(numeric_traits<S>::one() -
                     numeric_traits<S>::pow_real(S(numeric_traits<S>::one() - x), a));
            r.V_a.at(t, c) = S(r.V_a.at(t - 1, par) + dh);
            // max(a,1) x - dV~^{(a)} >= 0 increment-wise
            S lin = x;
            if (a > 1.0) {
                if constexpr (numeric_traits<S>::exact) {
                    double ip;
                    if (std::modf(a, &ip) != 0.0)
                        throw std::domain_error("rational backend: non-integer a");
                    lin = S(numeric_traits<S>::from_int(static_cast<long>(ip)) * x);
                } else {
                    lin = S(S(a) * x);
                }
            }
            S margin = S(lin - dh);
            if (first) {
                r.monotonicity_margin = margin;
                first = false;
            } else {
                r.monotonicity_margin = min_val(r.monotonicity_margin, margin);
            }
            exp_check.at(t, c) = S(exp_check.at(t - 1, par) * S(numeric_traits<S>::one() - dh));
        }
    r.exp_identity_discrepancy = numeric_traits<S>::zero();
    for (int t = 0; t <= model.depth(); ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            S ea = numeric_traits<S>::pow_real(model.Etilde.at(t, c), a);
            r.exp_identity_discrepancy =
                max_val(r.exp_identity_discrepancy, abs_val(S(ea - exp_check.at(t, c))));
        }
    return r;
}

// ---------------------------------------------------------------------------
// Model generators
// ---------------------------------------------------------------------------

template <class S>
RandomTimeModel<S> make_from_joint(FilteredSpace<S> base, std::vector<std::vector<S>> joint) {
    RandomTimeModel<S> m;
    m.base = std::move(base);
    m.joint = std::move(joint);
    m.finalize();
    return m;
}

/// tau independent of the path: weights[k] for k = 0..N, weights[N+1] = alive.
template <class S>
RandomTimeModel<S> make_independent(FilteredSpace<S> base, const std::vector<S>& tau_law) {
    const int N = base.depth;
    if (tau_law.size() != static_cast<size_t>(N) + 2)
        throw std::invalid_argument("make_independent: law size mismatch");
    std::vector<std::vector<S>> joint(size_t{1} << N);
    for (uint32_t p = 0; p < (uint32_t{1} << N); ++p) {
        joint[p].resize(static_cast<size_t>(N) + 2);
        for (int k = 0; k <= N + 1; ++k)
            joint[p][static_cast<size_t>(k)] = S(base.path_prob[p] * tau_law[static_cast<size_t>(k)]);
    }
    return make_from_joint(std::move(base), std::move(joint));
}

namespace detail {

/// Survival-chain joint weights from per-path conditional hazards q_k(path).
template <class S>
std::vector<std::vector<S>> chain_joint(const FilteredSpace<S>& base,
                                        const std::function<S(uint32_t, int)>& q) {
    const int N = base.depth;
    std::vector<std::vector<S>> joint(size_t{1} << N);
    for (uint32_t p = 0; p < (uint32_t{1} << N); ++p) {
        joint[p].assign(static_cast<size_t>(N) + 2, numeric_traits<S>::zero());
        S surv = numeric_traits<S>::one();
        for (int k = 0; k <= N; ++k) {
            S qk = q(p, k);
            if (qk < S(0) || qk > S(1))
                throw ModelError("generator: conditional hazard outside [0,1]");
            joint[p][static_cast<size_t>(k)] = S(base.path_prob[p] * S(surv * qk));
            surv = S(surv * S(numeric_traits<S>::one() - qk));
        }
        joint[p][static_cast<size_t>(N) + 1] = S(base.path_prob[p] * surv);
    }
    return joint;
}

}  // namespace detail

/// Cox construction: tau built from an adapted hazard and independent noise;
/// immersion holds, so m is constant. closed=true forces death at the horizon.
template <class S>
RandomTimeModel<S> make_cox(FilteredSpace<S> base, const FProcess<S>& hazard, bool closed) {
    const int N = base.depth;
    auto q = [&](uint32_t p, int k) -> S {
        if (closed && k == N) return numeric_traits<S>::one();
        return hazard.at(k, p >> (N - k));
    };
    auto joint = detail::chain_joint<S>(base, q);
    return make_from_joint(std::move(base), std::move(joint));
}

/// Look-ahead family: the hazard at k is tilted by the NEXT driver increment,
/// so tau sees the future and immersion fails (m is genuinely random).
template <class S>
RandomTimeModel<S> make_lookahead(FilteredSpace<S> base, const FProcess<S>& hazard,
                                  const FProcess<S>& tilt, bool closed) {
    const int N = base.depth;
    auto q = [&](uint32_t p, int k) -> S {
        if (closed && k == N) return numeric_traits<S>::one();
        S lam = hazard.at(k, p >> (N - k));
        if (k == N) return lam;
        bool up = ((p >> (N - k - 1)) & 1u) != 0;
        S e = tilt.at(k, p >> (N - k));
        return up ? S(lam * S(numeric_traits<S>::one() + e))
                  : S(lam * S(numeric_traits<S>::one() - e));
    };
    auto joint = detail::chain_joint<S>(base, q);
    return make_from_joint(std::move(base), std::move(joint));
}

}  // namespace taulab
