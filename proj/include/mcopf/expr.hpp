#pragma once

#include "mcopf/complex_matrix.hpp"

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace mcopf {

// One term of an affine complex expression: coeff * v or coeff * conj(v),
// where v is a complex quantity held as a (re, im) pair of registry indices.
// im = -1 marks a purely real scalar (no imaginary column).
struct CAtom {
    cx coeff{1.0, 0.0};
    int re = -1;
    int im = -1;
    bool conj = false;
};

struct CExpr {
    std::vector<CAtom> terms;
    cx constant{0.0, 0.0};

    CExpr() = default;
    CExpr(cx c) : constant(c) {} // NOLINT: implicit by design
    CExpr(double c) : constant(c) {}

    static CExpr var(int re, int im, cx coeff = cx{1.0, 0.0}, bool conj = false);
    static CExpr real_var(int re, cx coeff = cx{1.0, 0.0});

    CExpr conjugate() const;
    cx eval(const RVec& x) const;

    CExpr& operator+=(const CExpr& o);
    CExpr& operator-=(const CExpr& o);
    CExpr& operator*=(cx s);
};

CExpr operator+(CExpr a, const CExpr& b);
CExpr operator-(CExpr a, const CExpr& b);
CExpr operator*(cx s, CExpr a);
CExpr operator-(CExpr a);

// Real affine form: sum of coeff * x_idx plus a constant.
struct LinExpr {
    std::vector<std::pair<int, double>> terms;
    double constant = 0.0;

    void add(int var, double coeff);
    void compress(); // merge duplicates, drop exact zeros
    double eval(const RVec& x) const;
    bool all_zero() const;
};

// Real quadratic form. `quad` maps a monomial x_a * x_b (keyed a <= b) to its
// coefficient, so the value is sum(quad) + affine; Hessian entries follow as
// H_ab = coeff (a != b) and H_aa = 2 * coeff.
struct QExpr {
    std::map<std::pair<int, int>, double> quad;
    LinExpr affine;

    void add_quad(int a, int b, double coeff);
    double eval(const RVec& x) const;
    RVec gradient(const RVec& x, int n) const;
    bool is_affine() const { return quad.empty(); }
    bool all_zero() const;
};

// Real and imaginary parts of an affine complex expression.
LinExpr re_part(const CExpr& e);
LinExpr im_part(const CExpr& e);

// Real and imaginary parts of a product of two affine complex expressions.
QExpr product_re(const CExpr& a, const CExpr& b);
QExpr product_im(const CExpr& a, const CExpr& b);

// A sum of products of affine complex factors, constrained to zero. Degree is
// the factor count per term; anything above two is rejected.
struct CxProduct {
    std::vector<CExpr> factors;
};

struct CxEquality {
    std::vector<CxProduct> terms;
    std::string label;
};

enum class Rel { eq, le };

struct RealConstraint {
    QExpr q;
    Rel rel = Rel::eq;
    std::string label;
    bool removable = false; // every coefficient and the constant are zero
};

// Expands one complex equality into its real and imaginary rows.
// Throws unsupported_expression_error when a term has more than two factors.
std::vector<RealConstraint> realify(const CxEquality& eq);

} // namespace mcopf
