#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace symbiotic::conic {

enum class ConeKind { NonNeg, SecondOrder, PSD };

/// One block of the slack cone. `size` is the vector length for NonNeg and
/// SecondOrder blocks and the matrix side for PSD blocks (stored as svec).
struct ConeTag {
    ConeKind kind;
    int size;

    int slack_length() const { return kind == ConeKind::PSD ? size * (size + 1) / 2 : size; }
};

/// minimize c'x  subject to  G x + s = h,  A x = b,  s in K.
struct ConeProgram {
    Eigen::VectorXd c;
    Eigen::MatrixXd G;
    Eigen::VectorXd h;
    Eigen::MatrixXd A;
    Eigen::VectorXd b;
    std::vector<ConeTag> cones;

    Eigen::Index variable_dim() const { return c.size(); }

    Eigen::Index slack_dim() const {
        Eigen::Index m = 0;
        for (const auto& t : cones) m += t.slack_length();
        return m;
    }

    void validate() const {
        const Eigen::Index n = c.size();
        if (n == 0) throw std::invalid_argument("cone program has no variables");
        if (G.cols() != n || G.rows() != h.size()) throw std::invalid_argument("inequality block has inconsistent shape");
        if (A.rows() != b.size() || (A.rows() > 0 && A.cols() != n))
            throw std::invalid_argument("equality block has inconsistent shape");
        for (const auto& t : cones)
            if (t.size < 1) throw std::invalid_argument("cone blocks must be nonempty");
        if (slack_dim() != G.rows()) throw std::invalid_argument("cone tags do not cover the slack vector exactly");
        if (G.rows() == 0) throw std::invalid_argument("cone program needs at least one cone constraint");
    }
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, MaxIter, NumericalFailure };

inline const char* to_string(SolveStatus s) {
    switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::Unbounded: return "unbounded";
    case SolveStatus::MaxIter: return "max-iter";
    case SolveStatus::NumericalFailure: return "numerical-failure";
    }
    return "unknown";
}

struct Tolerances {
    double feastol = 1e-8;
    double abstol = 1e-8;
    double reltol = 1e-8;
    int max_iterations = 200;
    /// Looser thresholds under which the best iterate is still reported as
    /// Optimal (flagged inaccurate) when the iteration breaks down numerically.
    double feastol_inaccurate = 1e-6;
    double gaptol_inaccurate = 1e-5;
};

struct ConeSolution {
    SolveStatus status = SolveStatus::NumericalFailure;
    Eigen::VectorXd x;  // primal variables
    Eigen::VectorXd s;  // primal slacks
    Eigen::VectorXd y;  // equality multipliers
    Eigen::VectorXd z;  // cone multipliers
    double objective_value = 0.0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    double gap = 0.0;
    double relative_gap = 0.0;
    /// Residual of the infeasibility certificate (Infeasible / Unbounded only).
    double certificate_residual = 0.0;
    int iterations = 0;
    /// Optimal only to the reduced tolerances (numerical breakdown near the end).
    bool inaccurate = false;
};

// ---------------------------------------------------------------------------
// Symmetric-matrix vectorization: lower triangle, column-major, off-diagonal
// entries scaled by sqrt(2) so that <svec(X), svec(Y)> = Tr(XY).

inline Eigen::VectorXd svec(const Eigen::MatrixXd& X) {
    const Eigen::Index n = X.rows();
    Eigen::VectorXd v(n * (n + 1) / 2);
    Eigen::Index k = 0;
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = j; i < n; ++i) v(k++) = (i == j) ? X(i, j) : std::numbers::sqrt2 * X(i, j);
    return v;
}

template <class Vec>
Eigen::MatrixXd smat(const Vec& v, Eigen::Index n) {
    Eigen::MatrixXd X(n, n);
    Eigen::Index k = 0;
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = j; i < n; ++i) {
            const double a = v(k++);
            if (i == j) {
                X(i, i) = a;
            } else {
                X(i, j) = a / std::numbers::sqrt2;
                X(j, i) = X(i, j);
            }
        }
    return X;
}

/// Real symmetric embedding [[Re H, -Im H], [Im H, Re H]] of a Hermitian matrix.
inline Eigen::MatrixXd hermitian_embed(const Eigen::MatrixXcd& H) {
    if (H.rows() != H.cols()) throw std::invalid_argument("hermitian_embed needs a square matrix");
    if ((H - H.adjoint()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, H.cwiseAbs().maxCoeff()))
        throw std::invalid_argument("hermitian_embed needs a Hermitian matrix");
    const Eigen::Index n = H.rows();
    Eigen::MatrixXd E(2 * n, 2 * n);
    E.topLeftCorner(n, n) = H.real();
    E.topRightCorner(n, n) = -H.imag();
    E.bottomLeftCorner(n, n) = H.imag();
    E.bottomRightCorner(n, n) = H.real();
    return 0.5 * (E + E.transpose());
}

/// Inverse of hermitian_embed for matrices with the embedded block structure
/// (blocks are averaged, so it is also the projection onto that structure).
inline Eigen::MatrixXcd hermitian_unembed(const Eigen::MatrixXd& E) {
    const Eigen::Index n = E.rows() / 2;
    const Eigen::MatrixXd re = 0.5 * (E.topLeftCorner(n, n) + E.bottomRightCorner(n, n));
    const Eigen::MatrixXd im = 0.5 * (E.bottomLeftCorner(n, n) - E.topRightCorner(n, n));
    Eigen::MatrixXcd H(n, n);
    H.real() = re;
    H.imag() = im;
    return 0.5 * (H + H.adjoint());
}

// ---------------------------------------------------------------------------

/// Incremental construction of a ConeProgram. Linear rows are gathered into a
/// single leading NonNeg block; cone blocks follow in insertion order.
class ProgramBuilder {
public:
    explicit ProgramBuilder(Eigen::Index num_vars) : n_(num_vars), c_(Eigen::VectorXd::Zero(num_vars)) {}

    Eigen::Index num_vars() const { return n_; }

    void set_objective(const Eigen::VectorXd& c) {
        if (c.size() != n_) throw std::invalid_argument("objective has the wrong length");
        c_ = c;
    }

    /// a'x <= rhs
    void add_leq(const Eigen::RowVectorXd& a, double rhs) {
        check(a.size());
        lin_rows_.push_back(a);
        lin_rhs_.push_back(rhs);
    }

    /// a'x >= rhs
    void add_geq(const Eigen::RowVectorXd& a, double rhs) { add_leq(-a, -rhs); }

    void add_equality(const Eigen::RowVectorXd& a, double rhs) {
        check(a.size());
        eq_rows_.push_back(a);
        eq_rhs_.push_back(rhs);
    }

    /// hq - Gq x in SOC, i.e. ||(hq - Gq x)_{1:}|| <= (hq - Gq x)_0.
    void add_soc(const Eigen::MatrixXd& Gq, const Eigen::VectorXd& hq) {
        check(Gq.cols());
        if (Gq.rows() != hq.size() || Gq.rows() < 1) throw std::invalid_argument("malformed SOC block");
        blocks_.push_back({ConeTag{ConeKind::SecondOrder, static_cast<int>(Gq.rows())}, Gq, hq});
    }

    /// ||U x + u0||^2 <= a'x + a0 via the rotated-cone identity
    /// ||(2(Ux + u0), t - 1)|| <= t + 1 with t = a'x + a0.
    void add_quadratic_leq(const Eigen::MatrixXd& U, const Eigen::VectorXd& u0, const Eigen::RowVectorXd& a,
                           double a0) {
        check(U.cols());
        check(a.size());
        const Eigen::Index r = U.rows();
        Eigen::MatrixXd Gq(r + 2, n_);
        Eigen::VectorXd hq(r + 2);
        Gq.row(0) = -a;
        hq(0) = a0 + 1.0;
        Gq.row(1) = -a;
        hq(1) = a0 - 1.0;
        Gq.bottomRows(r) = -2.0 * U;
        hq.tail(r) = 2.0 * u0;
        add_soc(Gq, hq);
    }

    /// Hs - sum_j x_j smat(Gs.col(j)) is PSD, with Gs given in svec rows.
    void add_psd(const Eigen::MatrixXd& Gs, const Eigen::VectorXd& hs, int side) {
        check(Gs.cols());
        if (Gs.rows() != side * (side + 1) / 2 || hs.size() != Gs.rows()) throw std::invalid_argument("malformed PSD block");
        blocks_.push_back({ConeTag{ConeKind::PSD, side}, Gs, hs});
    }

    ConeProgram build() const {
        ConeProgram p;
        p.c = c_;
        Eigen::Index m = static_cast<Eigen::Index>(lin_rows_.size());
        for (const auto& b : blocks_) m += b.G.rows();
        p.G.resize(m, n_);
        p.h.resize(m);
        Eigen::Index r = 0;
        if (!lin_rows_.empty()) {
            for (std::size_t i = 0; i < lin_rows_.size(); ++i, ++r) {
                p.G.row(r) = lin_rows_[i];
                p.h(r) = lin_rhs_[i];
            }
            p.cones.push_back({ConeKind::NonNeg, static_cast<int>(lin_rows_.size())});
        }
        for (const auto& b : blocks_) {
            p.G.middleRows(r, b.G.rows()) = b.G;
            p.h.segment(r, b.G.rows()) = b.h;
            r += b.G.rows();
            p.cones.push_back(b.tag);
        }
        p.A.resize(static_cast<Eigen::Index>(eq_rows_.size()), n_);
        p.b.resize(static_cast<Eigen::Index>(eq_rows_.size()));
        for (std::size_t i = 0; i < eq_rows_.size(); ++i) {
            p.A.row(static_cast<Eigen::Index>(i)) = eq_rows_[i];
            p.b(static_cast<Eigen::Index>(i)) = eq_rhs_[i];
        }
        return p;
    }

private:
    struct Block {
        ConeTag tag;
        Eigen::MatrixXd G;
        Eigen::VectorXd h;
    };

    void check(Eigen::Index cols) const {
        if (cols != n_) throw std::invalid_argument("constraint row has the wrong number of columns");
    }

    Eigen::Index n_;
    Eigen::VectorXd c_;
    std::vector<Eigen::RowVectorXd> lin_rows_;
    std::vector<double> lin_rhs_;
    std::vector<Eigen::RowVectorXd> eq_rows_;
    std::vector<double> eq_rhs_;
    std::vector<Block> blocks_;
};

// ---------------------------------------------------------------------------
// Plain-text dump of the standard form, for cross-checking with external
// solvers. Layout:
//
//   conic-program v1
//   n <vars> m <slack rows> p <equality rows>
//   cones <count>
//   L <len> | Q <len> | S <side>        one line per block, in slack order
//   c
//   <n values>
//   G
//   <m lines of n values>
//   h
//   <m values>
//   A
//   <p lines of n values>
//   b
//   <p values>
//
// PSD slack rows use the svec convention of svec() above.
inline void dump_program(const ConeProgram& p, std::ostream& os) {
    os << "conic-program v1\n";
    os << "n " << p.variable_dim() << " m " << p.G.rows() << " p " << p.A.rows() << "\n";
    os << "cones " << p.cones.size() << "\n";
    for (const auto& t : p.cones) {
        const char tag = t.kind == ConeKind::NonNeg ? 'L' : (t.kind == ConeKind::SecondOrder ? 'Q' : 'S');
        os << tag << ' ' << t.size << "\n";
    }
    os << std::setprecision(17);
    auto row = [&](const auto& v) {
        for (Eigen::Index j = 0; j < v.size(); ++j) os << (j ? " " : "") << v(j);
        os << "\n";
    };
    os << "c\n";
    row(p.c);
    os << "G\n";
    for (Eigen::Index i = 0; i < p.G.rows(); ++i) row(p.G.row(i));
    os << "h\n";
    row(p.h);
    os << "A\n";
    for (Eigen::Index i = 0; i < p.A.rows(); ++i) row(p.A.row(i));
    os << "b\n";
    row(p.b);
}

}  // namespace symbiotic::conic
