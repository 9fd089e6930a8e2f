#include "mcopf/expr.hpp"

#include "mcopf/errors.hpp"

#include <algorithm>
#include <cmath>

namespace mcopf {

CExpr CExpr::var(int re, int im, cx coeff, bool conj) {
    CExpr e;
    e.terms.push_back({coeff, re, im, conj});
    return e;
}

CExpr CExpr::real_var(int re, cx coeff) { return var(re, -1, coeff, false); }

CExpr CExpr::conjugate() const {
    CExpr out;
    out.constant = std::conj(constant);
    out.terms.reserve(terms.size());
    for (const auto& t : terms)
        out.terms.push_back({std::conj(t.coeff), t.re, t.im, t.im >= 0 ? !t.conj : t.conj});
    return out;
}

cx CExpr::eval(const RVec& x) const {
    cx v = constant;
    for (const auto& t : terms) {
        cx q{x(t.re), t.im >= 0 ? x(t.im) : 0.0};
        if (t.conj) q = std::conj(q);
        v += t.coeff * q;
    }
    return v;
}

CExpr& CExpr::operator+=(const CExpr& o) {
    constant += o.constant;
    terms.insert(terms.end(), o.terms.begin(), o.terms.end());
    return *this;
}

CExpr& CExpr::operator-=(const CExpr& o) {
    constant -= o.constant;
    for (const auto& t : o.terms) terms.push_back({-t.coeff, t.re, t.im, t.conj});
    return *this;
}

CExpr& CExpr::operator*=(cx s) {
    constant *= s;
    for (auto& t : terms) t.coeff *= s;
    return *this;
}

CExpr operator+(CExpr a, const CExpr& b) { return a += b; }
CExpr operator-(CExpr a, const CExpr& b) { return a -= b; }
CExpr operator*(cx s, CExpr a) { return a *= s; }
CExpr operator-(CExpr a) { return a *= cx{-1.0, 0.0}; }

void LinExpr::add(int var, double coeff) {
    if (coeff != 0.0) terms.emplace_back(var, coeff);
}

void LinExpr::compress() {
    std::map<int, double> acc;
    for (const auto& [v, c] : terms) acc[v] += c;
    terms.clear();
    for (const auto& [v, c] : acc)
        if (c != 0.0) terms.emplace_back(v, c);
}

double LinExpr::eval(const RVec& x) const {
    double v = constant;
    for (const auto& [idx, c] : terms) v += c * x(idx);
    return v;
}

bool LinExpr::all_zero() const {
    if (constant != 0.0) return false;
    return std::all_of(terms.begin(), terms.end(),
                       [](const auto& t) { return t.second == 0.0; });
}

void QExpr::add_quad(int a, int b, double coeff) {
    if (coeff == 0.0) return;
    if (a > b) std::swap(a, b);
    quad[{a, b}] += coeff;
}

double QExpr::eval(const RVec& x) const {
    double v = affine.eval(x);
    for (const auto& [key, c] : quad) v += c * x(key.first) * x(key.second);
    return v;
}

RVec QExpr::gradient(const RVec& x, int n) const {
    RVec g = RVec::Zero(n);
    for (const auto& [idx, c] : affine.terms) g(idx) += c;
    for (const auto& [key, c] : quad) {
        const auto [a, b] = key;
        if (a == b) {
            g(a) += 2.0 * c * x(a);
        } else {
            g(a) += c * x(b);
            g(b) += c * x(a);
        }
    }
    return g;
}

bool QExpr::all_zero() const {
    if (!affine.all_zero()) return false;
    return std::all_of(quad.begin(), quad.end(),
                       [](const auto& kv) { return kv.second == 0.0; });
}

namespace {

// Expands coeff * z_a * z_b into real/imag quadratic monomials, where z is
// (x + j s y) with s = -1 under conjugation and y absent for real scalars.
struct PartAccumulator {
    QExpr re, im;

    void add_const(cx v) {
        re.affine.constant += v.real();
        im.affine.constant += v.imag();
    }
    void add_lin(int var, cx coeff) {
        if (var < 0) return;
        re.affine.add(var, coeff.real());
        im.affine.add(var, coeff.imag());
    }
    void add_quad(int a, int b, cx coeff) {
        if (a < 0 || b < 0) return;
        if (coeff.real() != 0.0) {
            re.add_quad(a, b, coeff.real());
        }
        if (coeff.imag() != 0.0) {
            im.add_quad(a, b, coeff.imag());
        }
    }
};

void accumulate_product(PartAccumulator& acc, const CExpr& a, const CExpr& b) {
    // constant * constant
    acc.add_const(a.constant * b.constant);
    // constant * atom and atom * constant
    auto add_scaled_atom = [&](cx scale, const CAtom& t) {
        cx c = scale * t.coeff;
        double s = t.conj ? -1.0 : 1.0;
        acc.add_lin(t.re, c);
        acc.add_lin(t.im, c * cx{0.0, s});
    };
    for (const auto& t : b.terms) add_scaled_atom(a.constant, t);
    for (const auto& t : a.terms) add_scaled_atom(b.constant, t);
    // atom * atom: (x1 + j s1 y1)(x2 + j s2 y2)
    for (const auto& ta : a.terms) {
        const double s1 = ta.conj ? -1.0 : 1.0;
        for (const auto& tb : b.terms) {
            const double s2 = tb.conj ? -1.0 : 1.0;
            cx c = ta.coeff * tb.coeff;
            acc.add_quad(ta.re, tb.re, c);
            acc.add_quad(ta.re, tb.im, c * cx{0.0, s2});
            acc.add_quad(ta.im, tb.re, c * cx{0.0, s1});
            acc.add_quad(ta.im, tb.im, c * cx{-s1 * s2, 0.0});
        }
    }
}

} // namespace

LinExpr re_part(const CExpr& e) {
    PartAccumulator acc;
    accumulate_product(acc, e, CExpr(cx{1.0, 0.0}));
    acc.re.affine.compress();
    return acc.re.affine;
}

LinExpr im_part(const CExpr& e) {
    PartAccumulator acc;
    accumulate_product(acc, e, CExpr(cx{1.0, 0.0}));
    acc.im.affine.compress();
    return acc.im.affine;
}

QExpr product_re(const CExpr& a, const CExpr& b) {
    PartAccumulator acc;
    accumulate_product(acc, a, b);
    acc.re.affine.compress();
    return acc.re;
}

QExpr product_im(const CExpr& a, const CExpr& b) {
    PartAccumulator acc;
    accumulate_product(acc, a, b);
    acc.im.affine.compress();
    return acc.im;
}

std::vector<RealConstraint> realify(const CxEquality& eq) {
    PartAccumulator acc;
    for (const auto& term : eq.terms) {
        if (term.factors.empty()) continue;
        if (term.factors.size() == 1) {
            accumulate_product(acc, term.factors[0], CExpr(cx{1.0, 0.0}));
        } else if (term.factors.size() == 2) {
            accumulate_product(acc, term.factors[0], term.factors[1]);
        } else {
            throw unsupported_expression_error(
                "constraint '" + eq.label + "': degree above two is not supported");
        }
    }
    acc.re.affine.compress();
    acc.im.affine.compress();
    std::vector<RealConstraint> out(2);
    out[0].q = std::move(acc.re);
    out[0].label = eq.label + ".re";
    out[0].removable = out[0].q.all_zero();
    out[1].q = std::move(acc.im);
    out[1].label = eq.label + ".im";
    out[1].removable = out[1].q.all_zero();
    return out;
}

} // namespace mcopf
