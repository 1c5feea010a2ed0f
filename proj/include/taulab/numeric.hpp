#pragma once

#include <cmath>
#include <cstdint>
#include <gmpxx.h>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>

namespace taulab {

/// Exact rational scalar backend. All model weights and identity suites can
/// run on it with tolerance 0; the float backend is used where fractional
/// powers appear (weighted norms, a-priori estimates).
using Rational = mpq_class;

template <class S>
struct numeric_traits;

template <>
struct numeric_traits<double> {
    static constexpr bool exact = false;
    static double zero() { return 0.0; }
    static double one() { return 1.0; }
    static double from_int(long v) { return static_cast<double>(v); }
    static double from_fraction(long num, long den) {
        return static_cast<double>(num) / static_cast<double>(den);
    }
    static double to_double(double v) { return v; }
    static double pow_real(double base, double e) { return std::pow(base, e); }
    static bool parse(const std::string& s, double& out) {
        try {
            size_t pos = 0;
            if (auto k = s.find('/'); k != std::string::npos) {
                double num = std::stod(s.substr(0, k), &pos);
                double den = std::stod(s.substr(k + 1));
                if (den == 0.0) return false;
                out = num / den;
                return true;
            }
            out = std::stod(s, &pos);
            return pos == s.size();
        } catch (...) {
            return false;
        }
    }
    static std::string to_string(double v) {
        std::ostringstream os;
        os.precision(17);
        os << v;
        return os.str();
    }
};

template <>
struct numeric_traits<Rational> {
    static constexpr bool exact = true;
    static Rational zero() { return Rational(0); }
    static Rational one() { return Rational(1); }
    static Rational from_int(long v) { return Rational(v); }
    static Rational from_fraction(long num, long den) {
        Rational r(num, den);
        r.canonicalize();
        return r;
    }
    static double to_double(const Rational& v) { return v.get_d(); }
    static Rational pow_real(const Rational& base, double e) {
        double ip;
        if (std::modf(e, &ip) != 0.0)
            throw std::domain_error("rational backend: fractional exponent not representable");
        long n = static_cast<long>(ip);
        if (n < 0) throw std::domain_error("rational backend: negative exponent");
        Rational acc(1), b = base;
        for (long i = 0; i < n; ++i) acc *= b;
        return acc;
    }
    // Accepts "p/q", integers, and finite decimal strings ("0.25" -> 1/4).
    static bool parse(const std::string& s, Rational& out) {
        if (s.empty()) return false;
        if (s.find('/') != std::string::npos) {
            try {
                out = Rational(s);
                out.canonicalize();
                return true;
            } catch (...) {
                return false;
            }
        }
        std::string t = s;
        bool neg = false;
        if (t[0] == '+' || t[0] == '-') {
            neg = t[0] == '-';
            t = t.substr(1);
        }
        auto dot = t.find('.');
        std::string digits = (dot == std::string::npos) ? t : t.substr(0, dot) + t.substr(dot + 1);
        if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos)
            return false;
        size_t frac_len = (dot == std::string::npos) ? 0 : t.size() - dot - 1;
        mpz_class num(digits.empty() ? "0" : digits);
        mpz_class den(1);
        for (size_t i = 0; i < frac_len; ++i) den *= 10;
        out = Rational(num, den);
        out.canonicalize();
        if (neg) out = -out;
        return true;
    }
    static std::string to_string(const Rational& v) { return v.get_str(); }
};

template <class S>
S abs_val(const S& x) {
    return x < S(0) ? S(-x) : x;
}

template <class S>
S max_val(const S& a, const S& b) {
    return a < b ? b : a;
}

template <class S>
S min_val(const S& a, const S& b) {
    return a < b ? a : b;
}

template <class S>
S pos_part(const S& x) {
    return x < S(0) ? S(0) : x;
}

template <class S>
S pow_int(const S& base, long n) {
    if (n < 0) throw std::domain_error("pow_int: negative exponent");
    S acc = numeric_traits<S>::one();
    S b = base;
    while (n > 0) {
        if (n & 1) acc = S(acc * b);
        b = S(b * b);
        n >>= 1;
    }
    return acc;
}

/// |x|^p under the backend; p need not be an integer on the float backend.
template <class S>
S pow_abs(const S& x, double p) {
    return numeric_traits<S>::pow_real(abs_val(x), p);
}

}  // namespace taulab
