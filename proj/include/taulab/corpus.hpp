#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "taulab/rbsde.hpp"

namespace taulab {

/// Deterministic corpus generation shared by tests, the acceptance suite and
/// the calibration command. Uses raw engine draws (not distributions) so the
/// streams are identical across standard libraries.
struct CorpusRng {
    std::mt19937_64 eng;
    explicit CorpusRng(uint64_t seed) : eng(seed) {}
    // integer in [0, n)
    uint64_t next(uint64_t n) { return eng() % n; }
    // dyadic in [lo_num/den, hi_num/den]
    template <class S>
    S dyadic(long lo_num, long hi_num, long den) {
        long k = lo_num + static_cast<long>(next(static_cast<uint64_t>(hi_num - lo_num + 1)));
        return numeric_traits<S>::from_fraction(k, den);
    }
};

enum class ModelKind { Independent, Cox, Lookahead };

template <class S>
RandomTimeModel<S> random_model(CorpusRng& rng, int depth, bool closed,
                                ModelKind kind) {
    auto sp = FilteredSpace<S>::uniform(depth, numeric_traits<S>::one());
    if (kind == ModelKind::Independent) {
        std::vector<S> law(static_cast<size_t>(depth) + 2, numeric_traits<S>::zero());
        long total = 0;
        std::vector<long> raw(static_cast<size_t>(depth) + 2, 0);
        for (int k = 1; k <= depth; ++k) {
            raw[static_cast<size_t>(k)] = 1 + static_cast<long>(rng.next(8));
            total += raw[static_cast<size_t>(k)];
        }
        raw[static_cast<size_t>(depth) + 1] = closed ? 0 : 1 + static_cast<long>(rng.next(8));
        total += raw[static_cast<size_t>(depth) + 1];
        for (size_t i = 0; i < raw.size(); ++i)
            law[i] = numeric_traits<S>::from_fraction(raw[i], total);
        return make_independent(std::move(sp), law);
    }
    FProcess<S> hazard(depth), tilt(depth);
    for (int t = 0; t <= depth; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            hazard.at(t, c) = (t == 0) ? numeric_traits<S>::zero()
                                       : rng.template dyadic<S>(1, 8, 16);  // in [1/16, 1/2]
            tilt.at(t, c) = rng.template dyadic<S>(0, 7, 8);                // in [0, 7/8]
        }
    if (kind == ModelKind::Cox) return make_cox(std::move(sp), hazard, closed);
    return make_lookahead(std::move(sp), hazard, tilt, closed);
}

/// Model M2 of the running examples: N = 2, uniform paths, tau in {1,2} with
/// a look-ahead tilt (non-immersion), closed.
template <class S>
RandomTimeModel<S> model_m2() {
    auto sp = FilteredSpace<S>::uniform(2, numeric_traits<S>::one());
    auto frac = [](long n, long d) { return numeric_traits<S>::from_fraction(n, d); };
    std::vector<std::vector<S>> joint(4);
    // paths by code: 0 = dd, 1 = du, 2 = ud, 3 = uu; P(tau=1 | path):
    // uu 4/5, ud 1/5, du 3/5, dd 2/5
    auto row = [&](long q_num) {
        std::vector<S> r(4, numeric_traits<S>::zero());
        r[1] = frac(q_num, 20);       // weight * q = (1/4)(q_num/5)
        r[2] = frac(5 - q_num, 20);
        return r;
    };
    joint[3] = row(4);
    joint[2] = row(1);
    joint[1] = row(3);
    joint[0] = row(2);
    return make_from_joint(std::move(sp), std::move(joint));
}

/// Deterministic constant-hazard Cox model (immersion; E~ deterministic).
template <class S>
RandomTimeModel<S> model_cox_const(int depth, long lam_num, long lam_den, bool closed) {
    auto sp = FilteredSpace<S>::uniform(depth, numeric_traits<S>::one());
    FProcess<S> hazard(depth);
    for (int t = 1; t <= depth; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c)
            hazard.at(t, c) = numeric_traits<S>::from_fraction(lam_num, lam_den);
    return make_cox(std::move(sp), hazard, closed);
}

/// Random adapted process: dyadic combination of {1, W, t*dt, |W|}.
template <class S>
FProcess<S> random_process(CorpusRng& rng, const FilteredSpace<S>& sp) {
    S c0 = rng.template dyadic<S>(-8, 8, 8);
    S c1 = rng.template dyadic<S>(-8, 8, 8);
    S c2 = rng.template dyadic<S>(-4, 4, 8);
    S c3 = rng.template dyadic<S>(0, 4, 8);
    FProcess<S> p(sp.depth);
    for (int t = 0; t <= sp.depth; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            S w = sp.driver.at(t, c);
            S tt = S(numeric_traits<S>::from_int(t) * sp.dt);
            p.at(t, c) = S(S(S(c0 + S(c1 * w)) + S(c2 * tt)) + S(c3 * abs_val(w)));
        }
    return p;
}

/// Random nonnegative, nondecreasing process with X_0 = 0.
template <class S>
FProcess<S> random_nondecreasing(CorpusRng& rng, const FilteredSpace<S>& sp) {
    FProcess<S> p(sp.depth);
    for (int t = 1; t <= sp.depth; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c)
            p.at(t, c) = S(p.at(t - 1, c >> 1) + rng.template dyadic<S>(0, 8, 8));
    return p;
}

/// Random martingale started at 0 (random increments conditionally centred).
template <class S>
FProcess<S> random_martingale(CorpusRng& rng, const FilteredSpace<S>& sp) {
    FProcess<S> p(sp.depth);
    for (int t = 1; t <= sp.depth; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << (t - 1)); ++c) {
            // fair-coin space: +/- the same step keeps the drift zero
            S step = rng.template dyadic<S>(-8, 8, 8);
            p.at(t, 2 * c + 1) = S(p.at(t - 1, c) + step);
            p.at(t, 2 * c) = S(p.at(t - 1, c) - step);
        }
    return p;
}

/// Random RBSDE data respecting terminal dominance (h >= S pointwise).
template <class S>
RBSDEData<S> random_rbsde_data(CorpusRng& rng, const FilteredSpace<S>& sp, int T, bool with_barrier,
                               double p = 2.0) {
    RBSDEData<S> d;
    d.T = T;
    d.p = p;
    d.f = random_process(rng, sp);
    d.h = random_process(rng, sp);
    if (with_barrier) {
        auto raw = random_process(rng, sp);
        FProcess<S> bar(sp.depth);
        for (int t = 0; t <= sp.depth; ++t)
            for (uint32_t c = 0; c < (uint32_t{1} << t); ++c)
                bar.at(t, c) = min_val(raw.at(t, c), d.h.at(t, c));
        d.barrier = bar;
    }
    return d;
}

/// Random tau-stopped reward: an adapted part plus an at-death kernel.
template <class S>
GProcess<S> random_stopped_reward(CorpusRng& rng, const RandomTimeModel<S>& model) {
    auto alive = random_process(rng, model.base);
    auto at_death = random_process(rng, model.base);
    return g_stopped_process(model, alive, at_death);
}

}  // namespace taulab
