#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "taulab/numeric.hpp"

namespace taulab {

/// An adapted real-valued process on the binary path tree. values[t] holds one
/// entry per F_t-atom; the atom with code c at time t has children 2c (down)
/// and 2c+1 (up) at time t+1.
template <class S>
struct FProcess {
    std::vector<std::vector<S>> values;

    FProcess() = default;
    explicit FProcess(int depth) : values(static_cast<size_t>(depth) + 1) {
        for (int t = 0; t <= depth; ++t)
            values[static_cast<size_t>(t)].assign(size_t{1} << t, numeric_traits<S>::zero());
    }

    int depth() const { return static_cast<int>(values.size()) - 1; }
    S& at(int t, uint32_t c) { return values[static_cast<size_t>(t)][c]; }
    const S& at(int t, uint32_t c) const { return values[static_cast<size_t>(t)][c]; }

    static FProcess constant(int depth, const S& v) {
        FProcess p(depth);
        for (auto& lvl : p.values)
            for (auto& x : lvl) x = v;
        return p;
    }
};

/// Finite binary path tree carrying the base filtration, path probabilities
/// and the scaled random-walk driver W (|dW| = sqrt_dt on every step).
template <class S>
struct FilteredSpace {
    int depth = 0;
    S sqrt_dt = numeric_traits<S>::one();
    S dt = numeric_traits<S>::one();
    std::vector<S> path_prob;                // size 2^depth, all positive, sums to 1
    std::vector<std::vector<S>> atom_mass;   // atom_mass[t][c] = P(prefix c at t)
    FProcess<S> driver;                      // W_t per atom, W_0 = 0

    static FilteredSpace uniform(int depth, const S& sqrt_dt) {
        if (depth < 1) throw std::invalid_argument("FilteredSpace: depth must be >= 1");
        FilteredSpace sp;
        sp.depth = depth;
        sp.sqrt_dt = sqrt_dt;
        sp.dt = S(sqrt_dt * sqrt_dt);
        size_t n = size_t{1} << depth;
        S u = numeric_traits<S>::from_fraction(1, 1);
        for (int i = 0; i < depth; ++i) u = S(u / S(2));
        sp.path_prob.assign(n, u);
        sp.finalize();
        return sp;
    }

    static FilteredSpace with_probs(int depth, const S& sqrt_dt, std::vector<S> probs) {
        FilteredSpace sp;
        sp.depth = depth;
        sp.sqrt_dt = sqrt_dt;
        sp.dt = S(sqrt_dt * sqrt_dt);
        sp.path_prob = std::move(probs);
        sp.finalize();
        return sp;
    }

    void finalize() {
        if (path_prob.size() != (size_t{1} << depth))
            throw std::invalid_argument("FilteredSpace: path_prob size mismatch");
        S total = numeric_traits<S>::zero();
        for (const auto& p : path_prob) {
            if (!(p > S(0))) throw std::invalid_argument("FilteredSpace: path_prob must be positive");
            total = S(total + p);
        }
        if (!scalar_close(total, numeric_traits<S>::one()))
            throw std::invalid_argument("FilteredSpace: path_prob must sum to 1");
        atom_mass.assign(static_cast<size_t>(depth) + 1, {});
        atom_mass[static_cast<size_t>(depth)] = path_prob;
        for (int t = depth - 1; t >= 0; --t) {
            auto& lvl = atom_mass[static_cast<size_t>(t)];
            lvl.assign(size_t{1} << t, numeric_traits<S>::zero());
            for (uint32_t c = 0; c < (uint32_t{1} << t); ++c)
                lvl[c] = S(atom_mass[static_cast<size_t>(t) + 1][2 * c] +
                           atom_mass[static_cast<size_t>(t) + 1][2 * c + 1]);
        }
        driver = FProcess<S>(depth);
        for (int t = 1; t <= depth; ++t)
            for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
                const S& parent = driver.at(t - 1, c >> 1);
                driver.at(t, c) = (c & 1u) ? S(parent + sqrt_dt) : S(parent - sqrt_dt);
            }
    }

    // Fair one-step moves at every atom; required wherever W is used as a
    // martingale driver (Q~ Brownian checks, RBSDE Z-splits).
    bool driver_is_martingale() const {
        for (int t = 1; t <= depth; ++t)
            for (uint32_t c = 0; c < (uint32_t{1} << (t - 1)); ++c) {
                S diff = S(atom_mass[static_cast<size_t>(t)][2 * c + 1] -
                           atom_mass[static_cast<size_t>(t)][2 * c]);
                if (!(diff == S(0))) return false;
            }
        return true;
    }

    static bool scalar_close(const S& a, const S& b) {
        if constexpr (numeric_traits<S>::exact) return a == b;
        else return std::abs(numeric_traits<S>::to_double(S(a - b))) <= 1e-12;
    }
};

/// E[X | F_t] for X given on F_s-atoms, t <= s, under the given path weights
/// (defaults to the space's own probabilities). Exact atom-wise averages.
template <class S>
std::vector<S> cond_expect(const FilteredSpace<S>& sp, const std::vector<S>& x_at_s, int s, int t,
                           const std::vector<S>* measure = nullptr) {
    if (t < 0 || s > sp.depth || t > s)
        throw std::invalid_argument("cond_expect: time out of range");
    if (x_at_s.size() != (size_t{1} << s))
        throw std::invalid_argument("cond_expect: value vector size mismatch");
    const std::vector<S>& mu = measure ? *measure : sp.path_prob;
    if (mu.size() != sp.path_prob.size())
        throw std::invalid_argument("cond_expect: measure size mismatch");

    // weighted sums of x and of mass, aggregated from leaves to level s then to t
    std::vector<S> wmass(size_t{1} << sp.depth), wx;
    for (size_t p = 0; p < wmass.size(); ++p) wmass[p] = mu[p];
    for (int lvl = sp.depth; lvl > s; --lvl) {
        std::vector<S> nxt(size_t{1} << (lvl - 1));
        for (uint32_t c = 0; c < nxt.size(); ++c) nxt[c] = S(wmass[2 * c] + wmass[2 * c + 1]);
        wmass.swap(nxt);
    }
    wx.resize(size_t{1} << s);
    for (uint32_t c = 0; c < wx.size(); ++c) wx[c] = S(wmass[c] * x_at_s[c]);
    for (int lvl = s; lvl > t; --lvl) {
        std::vector<S> nm(size_t{1} << (lvl - 1)), nx(size_t{1} << (lvl - 1));
        for (uint32_t c = 0; c < nm.size(); ++c) {
            nm[c] = S(wmass[2 * c] + wmass[2 * c + 1]);
            nx[c] = S(wx[2 * c] + wx[2 * c + 1]);
        }
        wmass.swap(nm);
        wx.swap(nx);
    }
    std::vector<S> out(size_t{1} << t);
    for (uint32_t c = 0; c < out.size(); ++c) {
        if (wmass[c] == S(0))
            throw std::domain_error("cond_expect: zero total mass on an atom");
        out[c] = S(wx[c] / wmass[c]);
    }
    return out;
}

template <class S>
S expectation(const FilteredSpace<S>& sp, const std::vector<S>& x_at_s, int s,
              const std::vector<S>* measure = nullptr) {
    return cond_expect(sp, x_at_s, s, 0, measure)[0];
}

/// Doob decomposition X = X_0 + M + A with M a martingale (M_0 = 0) and A
/// predictable finite-variation (A_0 = 0, dA_t F_{t-1}-measurable).
template <class S>
struct DoobDecomposition {
    FProcess<S> martingale;
    FProcess<S> predictable_fv;
};

template <class S>
DoobDecomposition<S> doob_meyer(const FilteredSpace<S>& sp, const FProcess<S>& x) {
    if (x.depth() != sp.depth) throw std::invalid_argument("doob_meyer: depth mismatch");
    DoobDecomposition<S> d{FProcess<S>(sp.depth), FProcess<S>(sp.depth)};
    for (int t = 1; t <= sp.depth; ++t) {
        auto pred = cond_expect(sp, x.values[static_cast<size_t>(t)], t, t - 1);
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            uint32_t par = c >> 1;
            S da = S(pred[par] - x.at(t - 1, par));
            d.predictable_fv.at(t, c) = S(d.predictable_fv.at(t - 1, par) + da);
            d.martingale.at(t, c) =
                S(d.martingale.at(t - 1, par) + S(x.at(t, c) - x.at(t - 1, par)) - da);
        }
    }
    return d;
}

/// Doleans-Dade exponential in pure-jump form: E(X)_t = prod_{s<=t} (1 + dX_s).
template <class S>
FProcess<S> stochastic_exponential(const FilteredSpace<S>& sp, const FProcess<S>& x) {
    FProcess<S> e(sp.depth);
    for (uint32_t c = 0; c < 1u; ++c) e.at(0, c) = numeric_traits<S>::one();
    for (int t = 1; t <= sp.depth; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            S dx = S(x.at(t, c) - x.at(t - 1, c >> 1));
            e.at(t, c) = S(e.at(t - 1, c >> 1) * S(numeric_traits<S>::one() + dx));
        }
    return e;
}

/// Discrete bracket [X,Y]_t = sum_{s<=t} dX_s dY_s.
template <class S>
FProcess<S> bracket(const FilteredSpace<S>& sp, const FProcess<S>& x, const FProcess<S>& y) {
    FProcess<S> b(sp.depth);
    for (int t = 1; t <= sp.depth; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            S dx = S(x.at(t, c) - x.at(t - 1, c >> 1));
            S dy = S(y.at(t, c) - y.at(t - 1, c >> 1));
            b.at(t, c) = S(b.at(t - 1, c >> 1) + S(dx * dy));
        }
    return b;
}

/// Stieltjes integral (H . X)_t = sum_{0<s<=t} H_s dX_s with optional-time
/// evaluation of the integrand. Pass shift=1 for predictable evaluation H_{s-1}.
template <class S>
FProcess<S> f_integral(const FilteredSpace<S>& sp, const FProcess<S>& h, const FProcess<S>& x,
                       int shift = 0) {
    FProcess<S> out(sp.depth);
    for (int t = 1; t <= sp.depth; ++t)
        for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) {
            S dx = S(x.at(t, c) - x.at(t - 1, c >> 1));
            S hval = (shift == 0) ? h.at(t, c) : h.at(t - 1, c >> 1);
            out.at(t, c) = S(out.at(t - 1, c >> 1) + S(hval * dx));
        }
    return out;
}

/// Max one-step conditional drift |E[dX_t | F_{t-1}]| over all atoms; zero iff
/// X is a martingale under the supplied weights.
template <class S>
S martingale_drift(const FilteredSpace<S>& sp, const FProcess<S>& x,
                   const std::vector<S>* measure = nullptr) {
    S worst = numeric_traits<S>::zero();
    for (int t = 1; t <= sp.depth; ++t) {
        auto pred = cond_expect(sp, x.values[static_cast<size_t>(t)], t, t - 1, measure);
        for (uint32_t c = 0; c < (uint32_t{1} << (t - 1)); ++c)
            worst = max_val(worst, abs_val(S(pred[c] - x.at(t - 1, c))));
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Stopping rules
// ---------------------------------------------------------------------------

struct BudgetExceeded : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// First-hitting stop/continue labelling of atoms. F-rules decide on path
/// prefixes; G-rules decide on alive atoms only (death and the window end are
/// forced exits). never_time() encodes "never stops" as depth+1.
struct StoppingRule {
    enum class Tag { F, G };
    Tag tag = Tag::F;
    int from = 0;
    int to = 0;
    // stop[t - from][atom code]: 1 = stop here if not already stopped
    std::vector<std::vector<uint8_t>> stop;

    static StoppingRule make(Tag tag, int from, int to) {
        StoppingRule r;
        r.tag = tag;
        r.from = from;
        r.to = to;
        r.stop.assign(static_cast<size_t>(to - from) + 1, {});
        for (int t = from; t <= to; ++t)
            r.stop[static_cast<size_t>(t - from)].assign(size_t{1} << t, uint8_t{0});
        return r;
    }

    bool stops_at(int t, uint32_t c) const {
        if (t < from || t > to) return false;
        return stop[static_cast<size_t>(t - from)][c] != 0;
    }

    void set_stop(int t, uint32_t c, bool v = true) {
        stop[static_cast<size_t>(t - from)][c] = v ? 1 : 0;
    }

    /// Stopping instant along a full path (F-rules); to+1 if never.
    int time_on_path(int depth, uint32_t path) const {
        for (int t = from; t <= to; ++t) {
            uint32_t prefix = path >> (depth - t);
            if (stops_at(t, prefix)) return t;
        }
        return to + 1;
    }
};

namespace detail {

inline unsigned long long sat_mul(unsigned long long a, unsigned long long b,
                                  unsigned long long cap) {
    if (a == 0 || b == 0) return 0;
    if (a > cap / b) return cap + 1;
    unsigned long long r = a * b;
    return r > cap ? cap + 1 : r;
}

inline unsigned long long sat_add(unsigned long long a, unsigned long long b,
                                  unsigned long long cap) {
    unsigned long long r = a + b;
    return (r < a || r > cap) ? cap + 1 : r;
}

}  // namespace detail

/// Decision structure for rule enumeration: a forest of binary decision nodes
/// between `from` and `to`. Children outside the tree (forced exits) are not
/// decision nodes.
struct RuleTreeView {
    int from = 0;
    int to = 0;
    std::vector<uint32_t> roots;  // atom codes at time `from`
    // children(t, c) -> codes at t+1 that remain decision nodes
    std::function<std::vector<uint32_t>(int, uint32_t)> children;
};

inline unsigned long long count_stopping_rules(const RuleTreeView& view,
                                               unsigned long long cap) {
    std::function<unsigned long long(int, uint32_t)> f = [&](int t,
                                                             uint32_t c) -> unsigned long long {
        if (t == view.to) return 1;
        unsigned long long prod = 1;
        for (uint32_t ch : view.children(t, c)) {
            prod = detail::sat_mul(prod, f(t + 1, ch), cap);
            if (prod > cap) return prod;
        }
        return detail::sat_add(1, prod, cap);
    };
    unsigned long long total = 1;
    for (uint32_t r : view.roots) {
        total = detail::sat_mul(total, f(view.from, r), cap);
        if (total > cap) return total;
    }
    return total;
}

/// Streams every adapted absorbing rule with values in [from, to]. Throws
/// BudgetExceeded if the rule count exceeds `budget` (callers fall back to
/// backward induction only).
inline void enumerate_stopping_rules(const RuleTreeView& view, StoppingRule::Tag tag,
                                     unsigned long long budget,
                                     const std::function<void(const StoppingRule&)>& emit) {
    unsigned long long n = count_stopping_rules(view, budget);
    if (n > budget)
        throw BudgetExceeded("enumerate_stopping_rules: rule count exceeds budget");

    StoppingRule rule = StoppingRule::make(tag, view.from, view.to);
    // worklist of pending decision nodes; DFS over stop/continue choices
    std::vector<std::pair<int, uint32_t>> work(view.roots.size());
    for (size_t i = 0; i < view.roots.size(); ++i) work[i] = {view.from, view.roots[i]};

    std::function<void(std::vector<std::pair<int, uint32_t>>&)> rec =
        [&](std::vector<std::pair<int, uint32_t>>& pending) {
            if (pending.empty()) {
                emit(rule);
                return;
            }
            auto [t, c] = pending.back();
            pending.pop_back();
            // stop here (forced at the window end)
            rule.set_stop(t, c, true);
            rec(pending);
            rule.set_stop(t, c, false);
            if (t < view.to) {
                auto kids = view.children(t, c);
                for (uint32_t ch : kids) pending.push_back({t + 1, ch});
                rec(pending);
                for (size_t i = 0; i < kids.size(); ++i) pending.pop_back();
            }
            pending.push_back({t, c});
        };
    rec(work);
}

template <class S>
RuleTreeView f_rule_tree(const FilteredSpace<S>& sp, int from, int to) {
    if (from < 0 || to > sp.depth || from > to)
        throw std::invalid_argument("rule window out of range");
    RuleTreeView v;
    v.from = from;
    v.to = to;
    for (uint32_t c = 0; c < (uint32_t{1} << from); ++c) v.roots.push_back(c);
    v.children = [](int, uint32_t c) { return std::vector<uint32_t>{2 * c, 2 * c + 1}; };
    return v;
}

/// Adaptedness is structural (stop flags are per-atom); this checks the rule
/// stops at most once and by `to` on every path.
template <class S>
bool validate_f_rule(const FilteredSpace<S>& sp, const StoppingRule& rule) {
    if (rule.tag != StoppingRule::Tag::F) return false;
    for (uint32_t p = 0; p < (uint32_t{1} << sp.depth); ++p)
        if (rule.time_on_path(sp.depth, p) > rule.to) return false;
    return true;
}

}  // namespace taulab
