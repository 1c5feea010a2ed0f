#include <gtest/gtest.h>

#include "taulab/corpus.hpp"
#include "taulab/rbsde.hpp"

using namespace taulab;

namespace {

using R = Rational;

R frac(long n, long d) { return numeric_traits<R>::from_fraction(n, d); }

RandomTimeModel<R> never_dies(int depth) {
    auto sp = FilteredSpace<R>::uniform(depth, R(1));
    std::vector<R> law(static_cast<size_t>(depth) + 2, R(0));
    law.back() = R(1);
    return make_independent(std::move(sp), law);
}

RandomTimeModel<R> dies_at(int depth, int t0) {
    auto sp = FilteredSpace<R>::uniform(depth, R(1));
    std::vector<R> law(static_cast<size_t>(depth) + 2, R(0));
    law[static_cast<size_t>(t0)] = R(1);
    return make_independent(std::move(sp), law);
}

TEST(SolveG, ConstantTerminalNoDriver) {
    auto m = never_dies(3);
    RBSDEData<R> d;
    d.T = 3;
    d.f = FProcess<R>(3);
    d.h = FProcess<R>::constant(3, R(1));
    auto sol = solve_G(m, d);
    for (int t = 0; t <= 3; ++t)
        m.for_each_atom(t, [&](uint32_t c, int st) {
            EXPECT_EQ(sol.Y.at(t, c, st), R(1));
            EXPECT_EQ(sol.Z.at(t, c, st), R(0));
            EXPECT_EQ(sol.M.at(t, c, st), R(0));
            EXPECT_EQ(sol.K.at(t, c, st), R(0));
        });
}

TEST(SolveG, DeterministicIntegralOfDriverRate) {
    // f = 1, xi = 0, tau beyond the horizon: Y_t = N - t
    auto m = never_dies(3);
    RBSDEData<R> d;
    d.T = 3;
    d.f = FProcess<R>::constant(3, R(1));
    d.h = FProcess<R>(3);
    auto sol = solve_G(m, d);
    for (int t = 0; t <= 3; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            EXPECT_EQ(sol.Y.at(t, c, kAlive), R(3 - t));
            EXPECT_EQ(sol.Z.at(t, c, kAlive), R(0));
            EXPECT_EQ(sol.K.at(t, c, kAlive), R(0));
        }
}

TEST(SolveG, TerminalDominanceEnforced) {
    auto m = model_m2<R>();
    RBSDEData<R> d;
    d.T = 2;
    d.f = FProcess<R>(2);
    d.h = FProcess<R>(2);
    d.barrier = FProcess<R>::constant(2, R(1));  // xi = 0 < S at the horizon
    EXPECT_THROW(solve_G(m, d), std::invalid_argument);
}

TEST(SolveG, M2RunningInstanceFullDiagnostics) {
    auto m = model_m2<R>();
    RBSDEData<R> d;
    d.T = 2;
    d.f = FProcess<R>(2);
    d.h = FProcess<R>::constant(2, frac(1, 2));
    FProcess<R> bar(2);
    for (int t = 0; t <= 2; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c)
            bar.at(t, c) = R(frac(3, 10) * R(2 - t));
    d.barrier = bar;
    auto sol = solve_G(m, d);
    EXPECT_EQ(sol.diag.equation_residual, R(0));
    EXPECT_EQ(sol.diag.skorokhod_residual, R(0));
    EXPECT_EQ(sol.diag.barrier_violation, R(0));
    EXPECT_EQ(sol.diag.martingale_drift, R(0));
    EXPECT_EQ(sol.diag.terminal_mismatch, R(0));
    EXPECT_EQ(snell_representation_certificate(m, d, sol), R(0));
    // reflection is active at time 0 (barrier 0.6 beats the continuation 0.5)
    EXPECT_EQ(sol.Y.at(0, 0, kAlive), frac(3, 5));
    EXPECT_TRUE(sol.K.at(1, 0, kAlive) > R(0));
}

TEST(SolveF, ConstantKernelClosedForm) {
    // f = 0, no barrier, h = c: Y^F_t = c E~_t
    CorpusRng rng(50);
    auto m = random_model<R>(rng, 3, false, ModelKind::Lookahead);
    RBSDEData<R> d;
    d.T = 3;
    d.f = FProcess<R>(3);
    d.h = FProcess<R>::constant(3, frac(4, 7));
    auto tri = solve_F(m, d);
    for (int t = 0; t <= 3; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c)
            EXPECT_EQ(tri.Y.at(t, c), R(frac(4, 7) * m.Etilde.at(t, c)));
}

TEST(Transform, IdentityWhenTauNeverObserved) {
    auto m = never_dies(3);
    CorpusRng rng(51);
    auto d = random_rbsde_data(rng, m.base, 3, true);
    auto sol = solve_G(m, d);
    auto tri = solve_F(m, d);  // E~ = 1: the F-equation is the plain RBSDE
    auto mapped = transform_F_to_G(m, tri, d);
    auto gap = compare_solutions(m, sol, mapped);
    EXPECT_EQ(gap.y, R(0));
    EXPECT_EQ(gap.z, R(0));
    EXPECT_EQ(gap.m, R(0));
    EXPECT_EQ(gap.k, R(0));
    for (int t = 0; t <= 3; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c)
            EXPECT_EQ(tri.Y.at(t, c), sol.Y.at(t, c, kAlive));
}

TEST(Transform, ZeroDataMapsToZero) {
    auto m = model_m2<R>();
    RBSDEData<R> d;
    d.T = 2;
    d.f = FProcess<R>(2);
    d.h = FProcess<R>(2);
    auto tri = solve_F(m, d);
    auto mapped = transform_F_to_G(m, tri, d);
    for (int t = 0; t <= 2; ++t)
        m.for_each_atom(t, [&](uint32_t c, int st) {
            EXPECT_EQ(mapped.Y.at(t, c, st), R(0));
            EXPECT_EQ(mapped.K.at(t, c, st), R(0));
            EXPECT_EQ(mapped.M.at(t, c, st), R(0));
        });
}

TEST(Transform, AgreementOnRandomCorpus) {
    for (int i = 0; i < 40; ++i) {
        CorpusRng rng(2000 + i);
        int depth = 2 + static_cast<int>(rng.next(3));
        auto m = random_model<R>(rng, depth, rng.next(2) == 0, static_cast<ModelKind>(rng.next(3)));
        int T = 1 + static_cast<int>(rng.next(depth));
        auto d = random_rbsde_data(rng, m.base, T, true);
        auto sol = solve_G(m, d);
        EXPECT_EQ(sol.diag.equation_residual, R(0));
        EXPECT_EQ(sol.diag.skorokhod_residual, R(0));
        EXPECT_EQ(sol.diag.martingale_drift, R(0));
        EXPECT_FALSE(sol.diag.k_min_increment < R(0));
        auto tri = solve_F(m, d);
        EXPECT_EQ(tri.equation_residual, R(0));
        EXPECT_EQ(tri.snell_certificate, R(0));
        auto mapped = transform_F_to_G(m, tri, d);
        auto gap = compare_solutions(m, sol, mapped);
        EXPECT_EQ(gap.y, R(0));
        EXPECT_EQ(gap.k, R(0));
        EXPECT_EQ(gap.z, R(0));
        EXPECT_EQ(gap.m, R(0));
    }
}

TEST(Comparison, OrderedDataGivesOrderedSolutions) {
    CorpusRng rng(61);
    auto m = random_model<R>(rng, 3, false, ModelKind::Cox);
    auto d1 = random_rbsde_data(rng, m.base, 3, true);
    RBSDEData<R> d2 = d1;
    for (int t = 0; t <= 3; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            d2.f.at(t, c) = R(d2.f.at(t, c) + frac(1, 4));
            d2.h.at(t, c) = R(d2.h.at(t, c) + frac(1, 2));
            d2.barrier->at(t, c) = R(d2.barrier->at(t, c) + frac(1, 4));
        }
    auto s1 = solve_G(m, d1);
    auto s2 = solve_G(m, d2);
    for (int t = 0; t <= 3; ++t)
        m.for_each_atom(t, [&](uint32_t c, int st) {
            EXPECT_FALSE(s2.Y.at(t, c, st) < s1.Y.at(t, c, st));
        });
}

TEST(Localization, LocalizedDataExtendsToLongerWindows) {
    // solving with (f I_{[0,sigma]}, xi, S^sigma) on a longer window leaves the
    // solution unchanged on the original one
    CorpusRng rng(63);
    auto m = random_model<R>(rng, 4, false, ModelKind::Lookahead);
    int sigma = 2;
    auto d = random_rbsde_data(rng, m.base, sigma, true);
    auto base_sol = solve_G(m, d);
    RBSDEData<R> ext;
    ext.T = 4;
    ext.p = d.p;
    ext.f = FProcess<R>(4);
    ext.h = FProcess<R>(4);
    ext.barrier = FProcess<R>(4);
    for (int t = 0; t <= 4; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            int u = std::min(t, sigma);
            uint32_t cu = c >> (t - u);
            ext.f.at(t, c) = (t < sigma) ? d.f.at(t, c) : R(0);
            ext.h.at(t, c) = d.h.at(u, cu);
            ext.barrier->at(t, c) = d.barrier->at(u, cu);
        }
    auto ext_sol = solve_G(m, ext);
    for (int t = 0; t <= sigma; ++t)
        m.for_each_atom(t, [&](uint32_t c, int st) {
            EXPECT_EQ(ext_sol.Y.at(t, c, st), base_sol.Y.at(t, c, st));
            EXPECT_EQ(ext_sol.K.at(t, c, st), base_sol.K.at(t, c, st));
        });
}

TEST(RandomHorizon, ConstantKernelIsFlat) {
    auto m = model_m2<R>();
    RBSDEData<R> d;
    d.T = kRandomHorizon;
    d.f = FProcess<R>(2);
    d.h = FProcess<R>::constant(2, R(1));
    auto rh = solve_random_horizon(m, d, 2.0);
    for (int t = 0; t <= 2; ++t)
        m.for_each_atom(t, [&](uint32_t c, int st) { EXPECT_EQ(rh.solution.Y.at(t, c, st), R(1)); });
    EXPECT_LE(rh.weighted_residual, 1e-12);
}

TEST(RandomHorizon, DeterministicTauReducesToFixedHorizon) {
    auto m = dies_at(3, 3);
    CorpusRng rng(65);
    auto d = random_rbsde_data(rng, m.base, 3, true);
    auto fixed = solve_G(m, d);
    RBSDEData<R> dr = d;
    dr.T = kRandomHorizon;
    auto rh = solve_random_horizon(m, dr, 2.0);
    auto gap = compare_solutions(m, fixed, rh.solution);
    EXPECT_EQ(gap.y, R(0));
    EXPECT_EQ(gap.z, R(0));
    EXPECT_EQ(gap.m, R(0));
    EXPECT_EQ(gap.k, R(0));
}

TEST(RandomHorizon, CertificatesAndLogsOnClosedCorpus) {
    for (int i = 0; i < 15; ++i) {
        CorpusRng rng(3000 + i);
        auto m = random_model<R>(rng, 2 + static_cast<int>(rng.next(2)), true,
                                 static_cast<ModelKind>(rng.next(3)));
        auto d = random_rbsde_data(rng, m.base, m.depth(), true);
        d.T = kRandomHorizon;
        auto rh = solve_random_horizon(m, d, 2.0);
        EXPECT_EQ(rh.solution.diag.equation_residual, R(0));
        EXPECT_EQ(rh.transform_gap.y, R(0));
        EXPECT_EQ(rh.transform_gap.k, R(0));
        EXPECT_EQ(rh.transform_gap.z, R(0));
        EXPECT_EQ(rh.transform_gap.m, R(0));
        EXPECT_LE(rh.weighted_residual, 1e-12);
        EXPECT_LE(rh.truncation_log.back().gap_to_final, 1e-12);
    }
}

TEST(Bsde, WeightedEquationCertificateOnRandomHorizon) {
    for (int i = 0; i < 10; ++i) {
        CorpusRng rng(4100 + i);
        auto m = random_model<R>(rng, 3, true, static_cast<ModelKind>(rng.next(3)));
        RBSDEData<R> d = random_rbsde_data(rng, m.base, 3, false);
        d.T = kRandomHorizon;
        auto sol = solve_bsde(m, d);
        EXPECT_EQ(sol.diag.equation_residual, R(0));
        for (int t = 0; t <= 3; ++t)
            m.for_each_atom(t, [&](uint32_t c, int st) { EXPECT_EQ(sol.K.at(t, c, st), R(0)); });
        // the discount-weighted equivalent equation holds without reflection
        EXPECT_LE(equivalent_rbsde_residual(m, d, sol, 2.0), 1e-12);
        EXPECT_LE(equivalent_rbsde_residual(m, d, sol, 1.5), 1e-12);
    }
}

TEST(Bsde, MatchesUnbarrieredSolveAndClosedForm) {
    auto m = model_m2<R>();
    RBSDEData<R> d;
    d.T = 2;
    d.f = FProcess<R>::constant(2, frac(1, 5));
    d.h = FProcess<R>::constant(2, frac(1, 3));
    auto b = solve_bsde(m, d);
    auto g = solve_G(m, d);  // no barrier given: same recursion
    auto gap = compare_solutions(m, b, g);
    EXPECT_EQ(gap.y, R(0));
    for (int t = 0; t <= 2; ++t)
        m.for_each_atom(t, [&](uint32_t c, int st) { EXPECT_EQ(b.K.at(t, c, st), R(0)); });
    // constant xi, f = 0: Y = xi everywhere pre-tau
    RBSDEData<R> dc;
    dc.T = 2;
    dc.f = FProcess<R>(2);
    dc.h = FProcess<R>::constant(2, frac(2, 9));
    auto bc = solve_bsde(m, dc);
    for (int t = 0; t <= 2; ++t)
        m.for_each_atom(t, [&](uint32_t c, int st) { EXPECT_EQ(bc.Y.at(t, c, st), frac(2, 9)); });
    // linear driver on an immersion model: explicit conditional integral
    auto cox = model_cox_const<R>(3, 1, 2, true);
    RBSDEData<R> dl;
    dl.T = kRandomHorizon;
    dl.f = FProcess<R>::constant(3, R(1));
    dl.h = FProcess<R>(3);
    auto bl = solve_bsde(cox, dl);
    // Y_t = E[tau /\ 3 - t /\ tau | alive] with hazard 1/2 forced at 3
    for (int t = 0; t < 3; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            // remaining lifetime of the chain started alive at t
            R expect(0);
            R surv(1);
            for (int s = t + 1; s <= 3; ++s) {
                R haz = (s == 3) ? R(1) : frac(1, 2);
                expect = R(expect + surv);  // one more unit survived into ]s-1, s]
                surv = R(surv * R(R(1) - haz));
            }
            EXPECT_EQ(bl.Y.at(t, c, kAlive), expect);
        }
}

}  // namespace
