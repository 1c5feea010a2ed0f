#include <gtest/gtest.h>

#include "taulab/corpus.hpp"
#include "taulab/projections.hpp"

using namespace taulab;

namespace {

using R = Rational;

R frac(long n, long d) { return numeric_traits<R>::from_fraction(n, d); }

// indicator of [0, tau[ as a G-process
template <class S>
GProcess<S> pre_death_indicator(const RandomTimeModel<S>& m) {
    GProcess<S> x(m.depth());
    for (int t = 0; t <= m.depth(); ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            x.at(t, c, kAlive) = numeric_traits<S>::one();
            for (int s = 0; s <= t; ++s) x.at(t, c, s) = numeric_traits<S>::zero();
        }
    return x;
}

TEST(OptionalProjection, RecoversAzemaSupermartingales) {
    auto m = model_m2<R>();
    auto pg = optional_projection_F(m, pre_death_indicator(m));
    for (int t = 0; t <= 2; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) EXPECT_EQ(pg.at(t, c), m.G.at(t, c));
    // 1_{[0,tau]} projects onto G~
    GProcess<R> upto(m.depth());
    for (int t = 0; t <= 2; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            upto.at(t, c, kAlive) = R(1);
            for (int s = 0; s <= t; ++s) upto.at(t, c, s) = (s == t) ? R(1) : R(0);
        }
    auto pgt = optional_projection_F(m, upto);
    for (int t = 0; t <= 2; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) EXPECT_EQ(pgt.at(t, c), m.Gtilde.at(t, c));
    // constants are fixed points
    auto pc = optional_projection_F(m, g_stopped_process(m, FProcess<R>::constant(2, frac(3, 7)),
                                                         FProcess<R>::constant(2, frac(3, 7))));
    for (int t = 0; t <= 2; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) EXPECT_EQ(pc.at(t, c), frac(3, 7));
}

TEST(DualProjections, DefaultIndicatorRecoversCompensator) {
    for (int i = 0; i < 5; ++i) {
        CorpusRng rng(70 + i);
        auto m = random_model<R>(rng, 3, rng.next(2) == 0, static_cast<ModelKind>(rng.next(3)));
        // D = I_{[tau, inf)}
        GProcess<R> d(m.depth());
        for (int t = 0; t <= 3; ++t)
            for (uint32_t c = 0; c < (uint32_t{1} << t); ++c)
                for (int s = 0; s <= t; ++s) d.at(t, c, s) = R(1);
        auto dp = dual_projections(m, d);
        for (int t = 0; t <= 3; ++t)
            for (uint32_t c = 0; c < (uint32_t{1} << t); ++c)
                EXPECT_EQ(dp.optional_dual.at(t, c), m.DoF.at(t, c));
    }
}

TEST(DualProjections, DeterministicProcessIsItsOwnProjection) {
    auto m = model_m2<R>();
    GProcess<R> v(m.depth());
    for (int t = 0; t <= 2; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c)
            for (int s = kAlive; s <= t; ++s) v.at(t, c, s) = R(t * t);
    auto dp = dual_projections(m, v);
    for (int t = 0; t <= 2; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            EXPECT_EQ(dp.optional_dual.at(t, c), R(t * t));
            EXPECT_EQ(dp.predictable_dual.at(t, c), R(t * t));
        }
}

TEST(Reduction, AdaptedProcessReducesTrivially) {
    auto m = model_cox_const<R>(3, 1, 2, false);
    auto w = driver_stopped(m);
    auto pair = reduce_G_to_F(m, w);
    for (int t = 0; t <= 3; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            EXPECT_EQ(pair.X_F.at(t, c), m.base.driver.at(t, c));
            if (m.dDoF.at(t, c) > R(0)) {
                EXPECT_EQ(pair.k_pr.at(t, c), m.base.driver.at(t, c));
                EXPECT_EQ(pair.k_F.at(t, c), R(0));
            }
        }
}

TEST(Reduction, DeathIndicatorSplitsCleanly) {
    auto m = model_m2<R>();
    // X = 1_{[tau, inf)}
    GProcess<R> x(m.depth());
    for (int t = 0; t <= 2; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c)
            for (int s = 0; s <= t; ++s) x.at(t, c, s) = R(1);
    auto pair = reduce_G_to_F(m, x);
    for (int t = 0; t <= 2; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            EXPECT_EQ(pair.X_F.at(t, c), R(0));
            if (m.dDoF.at(t, c) > R(0)) {
                EXPECT_EQ(pair.k_pr.at(t, c), R(1));
                EXPECT_EQ(pair.k_op.at(t, c), R(1));
                EXPECT_EQ(pair.k_F.at(t, c), R(0));
            }
        }
    EXPECT_EQ(decomposition_discrepancy(m, x, pair), R(0));
}

TEST(Reduction, DualityAgainstHandEnumeratedAverage) {
    auto m = model_m2<R>();
    CorpusRng rng(9);
    auto xg = random_stopped_reward(rng, m);
    auto pair = reduce_G_to_F(m, xg);
    // independent oracle: weighted average of X over each {tau = t} fiber
    for (int t = 0; t <= 2; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            R fiber = m.gmass[static_cast<size_t>(t)][g_slot(t, c, t)];
            if (!(fiber > R(0))) continue;
            R avg = R(R(fiber * xg.at(t, c, t)) / fiber);
            EXPECT_EQ(pair.k_op.at(t, c), avg);
        }
    EXPECT_EQ(mu_projection_discrepancy(m, pair), R(0));
    // round trip both ways
    auto rec = reconstruct_from_pair(m, pair);
    auto pair2 = reduce_G_to_F(m, rec);
    for (int t = 0; t <= 2; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            EXPECT_EQ(pair2.k_pr.at(t, c), pair.k_pr.at(t, c));
            if (m.has_mass(t, c, kAlive)) EXPECT_EQ(pair2.X_F.at(t, c), pair.X_F.at(t, c));
        }
    EXPECT_THROW(reduce_G_to_F(m, embed_f(m, m.base.driver)), std::invalid_argument);
}

TEST(Integrability, ZeroAndConstantCases) {
    auto m = model_m2<R>();
    GProcess<R> zero(m.depth());
    auto rep0 = integrability_transfer(m, zero, 2.0);
    EXPECT_EQ(rep0.sup_q, R(0));
    EXPECT_EQ(rep0.kpr_lq, R(0));
    EXPECT_EQ(rep0.xf_dof, R(0));
    auto one = g_stopped_process(m, FProcess<R>::constant(2, R(1)), FProcess<R>::constant(2, R(1)));
    auto rep1 = integrability_transfer(m, one, 1.0);
    EXPECT_EQ(rep1.sup_q, R(1));
    EXPECT_TRUE(rep1.sandwich_checked);
    EXPECT_TRUE(rep1.sandwich_ok);
}

TEST(Integrability, M2DriverSandwich) {
    auto m = model_m2<R>();
    auto rep = integrability_transfer(m, driver_stopped(m), 2.0);
    EXPECT_TRUE(rep.sandwich_checked);
    EXPECT_TRUE(rep.sandwich_ok);
    // E[sup |W^tau|^2] computed independently over scenarios
    R expect = R(0);
    m.for_each_scenario([&](uint32_t p, int k, const R& w) {
        R sup(0);
        for (int t = 0; t <= 2; ++t) {
            int u = std::min(t, k);
            R v = abs_val(m.base.driver.at(u, p >> (2 - u)));
            sup = max_val(sup, v);
        }
        expect = R(expect + R(w * R(sup * sup)));
    });
    EXPECT_EQ(rep.sup_q, expect);
}

TEST(ClassD, TransferInequalityOverRulesAndCutoffs) {
    auto m = model_m2<R>();
    CorpusRng rng(21);
    auto xg = random_stopped_reward(rng, m);
    auto view = f_rule_tree(m.base, 0, 2);
    enumerate_stopping_rules(view, StoppingRule::Tag::F, 1u << 16, [&](const StoppingRule& sig) {
        for (long cn = 0; cn <= 4; ++cn)
            EXPECT_TRUE(class_D_transfer_holds(m, xg, sig, frac(cn, 2)));
    });
}

TEST(Lift, ConstantAndCappedTimes) {
    auto m = model_m2<R>();
    auto sigma1 = StoppingRule::make(StoppingRule::Tag::F, 0, 2);
    for (uint32_t c = 0; c < 1; ++c) sigma1.set_stop(0, c);  // sigma1 = 0
    auto sigma2 = StoppingRule::make(StoppingRule::Tag::F, 0, 2);
    for (uint32_t c = 0; c < 4; ++c) sigma2.set_stop(2, c);  // sigma2 = 2

    // sigma^G = 1 /\ tau (constant G-time capped at death)
    auto sg = StoppingRule::make(StoppingRule::Tag::G, 0, 2);
    for (uint32_t c = 0; c < 2; ++c) sg.set_stop(1, c);
    auto sf = lift_stopping_time(m, sg, sigma1, sigma2);
    m.for_each_scenario([&](uint32_t p, int k, const R&) {
        EXPECT_EQ(std::min(sf.time_on_path(2, p), std::min(k, 3)), g_rule_time(m, sg, p, k));
        EXPECT_EQ(std::min(sf.time_on_path(2, p), 2), 1);
    });

    // sigma^G = first time W <= -sqrt(dt), capped at tau
    auto hit = StoppingRule::make(StoppingRule::Tag::G, 0, 2);
    for (int t = 1; t <= 2; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c)
            if (m.base.driver.at(t, c) < R(0)) hit.set_stop(t, c);
    auto sfh = lift_stopping_time(m, hit, sigma1, sigma2);
    m.for_each_scenario([&](uint32_t p, int k, const R&) {
        int death = std::min(k, 3);
        EXPECT_EQ(std::min(sfh.time_on_path(2, p), death), g_rule_time(m, hit, p, k));
    });

    // precondition violation reported
    auto late = StoppingRule::make(StoppingRule::Tag::F, 0, 2);
    late.set_stop(0, 0);  // sigma2 = 0 < sigma^G sometimes
    EXPECT_THROW(lift_stopping_time(m, hit, sigma1, late), std::invalid_argument);
}

}  // namespace
