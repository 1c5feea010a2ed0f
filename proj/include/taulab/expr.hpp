#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "taulab/fspace.hpp"

namespace taulab {

/// Expression trees over {t, W_t, constants} with {+, -, *, max, min}; the
/// serializable data language for scenario drivers, barriers and kernels.
/// `t` evaluates to the physical time t * dt.
struct Expr {
    enum class Kind { Const, VarT, VarW, Add, Sub, Mul, Max, Min, Neg };
    Kind kind = Kind::Const;
    std::string literal;  // for Const, backend-parsed lazily
    std::vector<Expr> args;

    static Expr parse(const nlohmann::json& j) {
        Expr e;
        if (j.is_number() || j.is_string()) {
            e.kind = Kind::Const;
            e.literal = j.is_string() ? j.get<std::string>() : j.dump();
            return e;
        }
        if (!j.is_object()) throw std::invalid_argument("expr: expected object, number or string");
        if (j.contains("const")) {
            e.kind = Kind::Const;
            const auto& c = j.at("const");
            e.literal = c.is_string() ? c.get<std::string>() : c.dump();
            return e;
        }
        if (j.contains("var")) {
            auto v = j.at("var").get<std::string>();
            if (v == "t") e.kind = Kind::VarT;
            else if (v == "W") e.kind = Kind::VarW;
            else throw std::invalid_argument("expr: unknown variable '" + v + "'");
            return e;
        }
        if (!j.contains("op")) throw std::invalid_argument("expr: missing op");
        auto op = j.at("op").get<std::string>();
        if (op == "+") e.kind = Kind::Add;
        else if (op == "-") e.kind = Kind::Sub;
        else if (op == "*") e.kind = Kind::Mul;
        else if (op == "max") e.kind = Kind::Max;
        else if (op == "min") e.kind = Kind::Min;
        else throw std::invalid_argument("expr: unknown op '" + op + "'");
        const auto& args = j.at("args");
        if (!args.is_array() || args.empty()) throw std::invalid_argument("expr: bad args");
        for (const auto& a : args) e.args.push_back(parse(a));
        if (e.kind == Kind::Sub && e.args.size() == 1) e.kind = Kind::Neg;
        if ((e.kind == Kind::Sub) && e.args.size() != 2)
            throw std::invalid_argument("expr: '-' takes one or two args");
        return e;
    }

    template <class S>
    S eval(const FilteredSpace<S>& sp, int t, uint32_t c) const {
        switch (kind) {
            case Kind::Const: {
                S v;
                if (!numeric_traits<S>::parse(literal, v))
                    throw std::invalid_argument("expr: unparseable constant '" + literal + "'");
                return v;
            }
            case Kind::VarT:
                return S(numeric_traits<S>::from_int(t) * sp.dt);
            case Kind::VarW:
                return sp.driver.at(t, c);
            case Kind::Neg:
                return S(S(0) - args[0].eval(sp, t, c));
            default:
                break;
        }
        S acc = args[0].eval(sp, t, c);
        for (size_t i = 1; i < args.size(); ++i) {
            S v = args[i].eval(sp, t, c);
            switch (kind) {
                case Kind::Add: acc = S(acc + v); break;
                case Kind::Sub: acc = S(acc - v); break;
                case Kind::Mul: acc = S(acc * v); break;
                case Kind::Max: acc = max_val(acc, v); break;
                case Kind::Min: acc = min_val(acc, v); break;
                default: throw std::logic_error("expr: bad state");
            }
        }
        return acc;
    }

    template <class S>
    FProcess<S> to_process(const FilteredSpace<S>& sp) const {
        FProcess<S> p(sp.depth);
        for (int t = 0; t <= sp.depth; ++t)
            for (uint32_t c = 0; c < (uint32_t{1} << t); ++c) p.at(t, c) = eval(sp, t, c);
        return p;
    }
};

}  // namespace taulab
