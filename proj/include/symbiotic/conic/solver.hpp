#pragma once

#include "symbiotic/conic/program.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace symbiotic::conic {

namespace detail {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Block {
    ConeKind kind;
    Index offset;
    Index dim;
    int side;  // matrix side for PSD blocks
};

inline std::vector<Block> layout(const std::vector<ConeTag>& cones) {
    std::vector<Block> out;
    Index off = 0;
    for (const auto& t : cones) {
        out.push_back({t.kind, off, t.slack_length(), t.kind == ConeKind::PSD ? t.size : 0});
        off += t.slack_length();
    }
    return out;
}

inline double degree(const std::vector<Block>& blocks) {
    double m = 0.0;
    for (const auto& b : blocks) m += b.kind == ConeKind::NonNeg ? static_cast<double>(b.dim) : (b.kind == ConeKind::SecondOrder ? 1.0 : b.side);
    return m;
}

inline VectorXd identity(const std::vector<Block>& blocks, Index m) {
    VectorXd e = VectorXd::Zero(m);
    for (const auto& b : blocks) {
        switch (b.kind) {
        case ConeKind::NonNeg: e.segment(b.offset, b.dim).setOnes(); break;
        case ConeKind::SecondOrder: e(b.offset) = 1.0; break;
        case ConeKind::PSD: e.segment(b.offset, b.dim) = svec(MatrixXd::Identity(b.side, b.side)); break;
        }
    }
    return e;
}

/// Smallest "eigenvalue" of x in the Jordan algebra of the cone.
inline double min_eigenvalue(const std::vector<Block>& blocks, const VectorXd& x) {
    double lo = std::numeric_limits<double>::infinity();
    for (const auto& b : blocks) {
        const auto seg = x.segment(b.offset, b.dim);
        switch (b.kind) {
        case ConeKind::NonNeg: lo = std::min(lo, seg.minCoeff()); break;
        case ConeKind::SecondOrder: lo = std::min(lo, seg(0) - seg.tail(b.dim - 1).norm()); break;
        case ConeKind::PSD: {
            Eigen::SelfAdjointEigenSolver<MatrixXd> es(smat(seg, b.side), Eigen::EigenvaluesOnly);
            lo = std::min(lo, es.eigenvalues()(0));
            break;
        }
        }
    }
    return lo;
}

/// Jordan product u o v.
inline VectorXd jprod(const std::vector<Block>& blocks, const VectorXd& u, const VectorXd& v) {
    VectorXd out(u.size());
    for (const auto& b : blocks) {
        const auto us = u.segment(b.offset, b.dim);
        const auto vs = v.segment(b.offset, b.dim);
        switch (b.kind) {
        case ConeKind::NonNeg: out.segment(b.offset, b.dim) = us.cwiseProduct(vs); break;
        case ConeKind::SecondOrder:
            out(b.offset) = us.dot(vs);
            out.segment(b.offset + 1, b.dim - 1) = us(0) * vs.tail(b.dim - 1) + vs(0) * us.tail(b.dim - 1);
            break;
        case ConeKind::PSD: {
            const MatrixXd U = smat(us, b.side);
            const MatrixXd V = smat(vs, b.side);
            out.segment(b.offset, b.dim) = svec(0.5 * (U * V + V * U));
            break;
        }
        }
    }
    return out;
}

/// Nesterov-Todd scaling W with W z = W^{-T} s = lambda.
struct Scaling {
    struct Part {
        VectorXd d;          // NonNeg: W = diag(d)
        MatrixXd W, Winv;    // SecondOrder: dense symmetric
        MatrixXd r, rinv;    // PSD: W(U) = r' U r
        VectorXd eig;        // PSD: diagonal of lambda
    };
    std::vector<Part> parts;
    VectorXd lambda;
};

enum class Op { W, Wt, Winv, Wit };

inline VectorXd apply(const std::vector<Block>& blocks, const Scaling& sc, Op op, const VectorXd& u) {
    VectorXd out(u.size());
    for (std::size_t k = 0; k < blocks.size(); ++k) {
        const Block& b = blocks[k];
        const auto& p = sc.parts[k];
        const auto us = u.segment(b.offset, b.dim);
        switch (b.kind) {
        case ConeKind::NonNeg:
            if (op == Op::W || op == Op::Wt)
                out.segment(b.offset, b.dim) = p.d.cwiseProduct(us);
            else
                out.segment(b.offset, b.dim) = us.cwiseQuotient(p.d);
            break;
        case ConeKind::SecondOrder:
            out.segment(b.offset, b.dim) = (op == Op::W || op == Op::Wt) ? VectorXd(p.W * us) : VectorXd(p.Winv * us);
            break;
        case ConeKind::PSD: {
            const MatrixXd U = smat(us, b.side);
            MatrixXd R;
            switch (op) {
            case Op::W: R = p.r.transpose() * U * p.r; break;
            case Op::Wt: R = p.r * U * p.r.transpose(); break;
            case Op::Winv: R = p.rinv.transpose() * U * p.rinv; break;
            case Op::Wit: R = p.rinv * U * p.rinv.transpose(); break;
            }
            out.segment(b.offset, b.dim) = svec(0.5 * (R + R.transpose()));
            break;
        }
        }
    }
    return out;
}

inline std::optional<Scaling> compute_scaling(const std::vector<Block>& blocks, const VectorXd& s, const VectorXd& z) {
    Scaling sc;
    sc.parts.resize(blocks.size());
    sc.lambda.resize(s.size());
    for (std::size_t k = 0; k < blocks.size(); ++k) {
        const Block& b = blocks[k];
        auto& p = sc.parts[k];
        const VectorXd ss = s.segment(b.offset, b.dim);
        const VectorXd zs = z.segment(b.offset, b.dim);
        switch (b.kind) {
        case ConeKind::NonNeg:
            if ((ss.array() <= 0.0).any() || (zs.array() <= 0.0).any()) return std::nullopt;
            p.d = ss.cwiseQuotient(zs).cwiseSqrt();
            sc.lambda.segment(b.offset, b.dim) = ss.cwiseProduct(zs).cwiseSqrt();
            break;
        case ConeKind::SecondOrder: {
            const Index n1 = b.dim - 1;
            const double sa = (ss(0) - ss.tail(n1).norm()) * (ss(0) + ss.tail(n1).norm());
            const double za = (zs(0) - zs.tail(n1).norm()) * (zs(0) + zs.tail(n1).norm());
            if (!(sa > 0.0 && za > 0.0 && ss(0) > 0.0 && zs(0) > 0.0)) return std::nullopt;
            const double aa = std::sqrt(sa), bb = std::sqrt(za);
            const double beta = std::sqrt(aa / bb);
            const VectorXd sb = ss / aa;
            const VectorXd zb = zs / bb;
            const double cc = std::sqrt(0.5 * (1.0 + sb.dot(zb)));
            VectorXd wb(b.dim);
            wb(0) = (sb(0) + zb(0)) / (2.0 * cc);
            wb.tail(n1) = (sb.tail(n1) - zb.tail(n1)) / (2.0 * cc);
            const double w0 = wb(0);
            const VectorXd w1 = wb.tail(n1);
            MatrixXd H(b.dim, b.dim);
            H(0, 0) = w0;
            H.block(0, 1, 1, n1) = w1.transpose();
            H.block(1, 0, n1, 1) = w1;
            H.bottomRightCorner(n1, n1) = MatrixXd::Identity(n1, n1) + w1 * w1.transpose() / (1.0 + w0);
            p.W = beta * H;
            MatrixXd Hi = H;
            Hi.block(0, 1, 1, n1) = -w1.transpose();
            Hi.block(1, 0, n1, 1) = -w1;
            p.Winv = Hi / beta;
            sc.lambda.segment(b.offset, b.dim) = p.W * zs;
            break;
        }
        case ConeKind::PSD: {
            Eigen::LLT<MatrixXd> ls(smat(ss, b.side));
            Eigen::LLT<MatrixXd> lz(smat(zs, b.side));
            if (ls.info() != Eigen::Success || lz.info() != Eigen::Success) return std::nullopt;
            const MatrixXd Ls = ls.matrixL();
            const MatrixXd Lz = lz.matrixL();
            Eigen::JacobiSVD<MatrixXd> svd(Lz.transpose() * Ls, Eigen::ComputeFullU | Eigen::ComputeFullV);
            const VectorXd lam = svd.singularValues();
            if (!(lam.minCoeff() > 0.0)) return std::nullopt;
            const VectorXd isq = lam.cwiseSqrt().cwiseInverse();
            p.r = Ls * svd.matrixV() * isq.asDiagonal();
            p.rinv = isq.asDiagonal() * svd.matrixU().transpose() * Lz.transpose();
            p.eig = lam;
            sc.lambda.segment(b.offset, b.dim) = svec(MatrixXd(lam.asDiagonal()));
            break;
        }
        }
    }
    return sc;
}

/// Solves lambda o x = d for x, with lambda the scaled point.
inline VectorXd jdiv(const std::vector<Block>& blocks, const Scaling& sc, const VectorXd& d) {
    VectorXd x(d.size());
    const VectorXd& lam = sc.lambda;
    for (std::size_t k = 0; k < blocks.size(); ++k) {
        const Block& b = blocks[k];
        const auto ds = d.segment(b.offset, b.dim);
        const auto ls = lam.segment(b.offset, b.dim);
        switch (b.kind) {
        case ConeKind::NonNeg: x.segment(b.offset, b.dim) = ds.cwiseQuotient(ls); break;
        case ConeKind::SecondOrder: {
            const Index n1 = b.dim - 1;
            const double l0 = ls(0);
            const double det = (l0 - ls.tail(n1).norm()) * (l0 + ls.tail(n1).norm());
            const double x0 = (l0 * ds(0) - ls.tail(n1).dot(ds.tail(n1))) / det;
            x(b.offset) = x0;
            x.segment(b.offset + 1, n1) = (ds.tail(n1) - x0 * ls.tail(n1)) / l0;
            break;
        }
        case ConeKind::PSD: {
            const VectorXd& e = sc.parts[k].eig;
            MatrixXd D = smat(ds, b.side);
            for (int j = 0; j < b.side; ++j)
                for (int i = 0; i < b.side; ++i) D(i, j) *= 2.0 / (e(i) + e(j));
            x.segment(b.offset, b.dim) = svec(D);
            break;
        }
        }
    }
    return x;
}

/// Largest step t with lambda + t * dir in the cone (infinity if unbounded).
inline double max_step(const std::vector<Block>& blocks, const Scaling& sc, const VectorXd& dir) {
    double t = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < blocks.size(); ++k) {
        const Block& b = blocks[k];
        const auto ds = dir.segment(b.offset, b.dim);
        const auto ls = sc.lambda.segment(b.offset, b.dim);
        switch (b.kind) {
        case ConeKind::NonNeg:
            for (Index i = 0; i < b.dim; ++i)
                if (ds(i) < 0.0) t = std::min(t, -ls(i) / ds(i));
            break;
        case ConeKind::SecondOrder: {
            const Index n1 = b.dim - 1;
            const double a = ds(0) * ds(0) - ds.tail(n1).squaredNorm();
            const double bh = ls(0) * ds(0) - ls.tail(n1).dot(ds.tail(n1));
            const double c0 = (ls(0) - ls.tail(n1).norm()) * (ls(0) + ls.tail(n1).norm());
            // Smallest positive root of a t^2 + 2 bh t + c0 = 0.
            double root = std::numeric_limits<double>::infinity();
            if (std::abs(a) <= 1e-300) {
                if (bh < 0.0) root = -c0 / (2.0 * bh);
            } else {
                const double disc = bh * bh - a * c0;
                if (disc >= 0.0) {
                    const double sq = std::sqrt(disc);
                    const double q = -(bh + (bh >= 0.0 ? sq : -sq));
                    for (double r : {q / a, q != 0.0 ? c0 / q : std::numeric_limits<double>::infinity()})
                        if (r > 0.0) root = std::min(root, r);
                }
            }
            t = std::min(t, root);
            break;
        }
        case ConeKind::PSD: {
            const VectorXd isq = sc.parts[k].eig.cwiseSqrt().cwiseInverse();
            const MatrixXd D = isq.asDiagonal() * smat(ds, b.side) * isq.asDiagonal();
            Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (D + D.transpose()), Eigen::EigenvaluesOnly);
            const double mu = es.eigenvalues()(0);
            if (mu < 0.0) t = std::min(t, -1.0 / mu);
            break;
        }
        }
    }
    return t;
}

/// Factorization of the reduced KKT system
///   [0  A' G'; A 0 0; G 0 -W'W] [x; y; z] = [bx; by; bz].
class KktSolver {
public:
    KktSolver(const ConeProgram& p, const std::vector<Block>& blocks, const Scaling* sc)
        : p_(p), blocks_(blocks), sc_(sc) {
        const Index n = p.variable_dim();
        const Index eq = p.A.rows();
        Gt_.resize(p.G.rows(), n);
        for (Index j = 0; j < n; ++j) Gt_.col(j) = sc ? apply(blocks, *sc, Op::Wit, p.G.col(j)) : VectorXd(p.G.col(j));
        if (eq == 0) {
            // G^T W^-1 W^-T G = R^T R from a QR of W^-T G, which avoids forming
            // (and squaring the conditioning of) the normal matrix.
            qr_.compute(Gt_);
            R_ = qr_.matrixQR().topRows(n).triangularView<Eigen::Upper>();
            const double top = R_.diagonal().cwiseAbs().maxCoeff();
            for (Index j = 0; j < n; ++j)
                if (std::abs(R_(j, j)) < 1e-14 * std::max(top, 1.0)) R_(j, j) = (R_(j, j) < 0.0 ? -1.0 : 1.0) * 1e-14 * std::max(top, 1.0);
            ok_ = Gt_.rows() >= n && R_.allFinite();
        } else {
            MatrixXd H = Gt_.transpose() * Gt_;
            const double reg = 1e-13 * std::max(1.0, H.diagonal().maxCoeff());
            MatrixXd K = MatrixXd::Zero(n + eq, n + eq);
            K.topLeftCorner(n, n) = H;
            K.topLeftCorner(n, n).diagonal().array() += reg;
            K.topRightCorner(n, eq) = p.A.transpose();
            K.bottomLeftCorner(eq, n) = p.A;
            K.bottomRightCorner(eq, eq).diagonal().array() -= reg;
            lu_.compute(K);
            saddle_ = K;
            ok_ = std::isfinite(K.sum());
        }
    }

    bool ok() const { return ok_; }

    void solve(const VectorXd& bx, const VectorXd& by, const VectorXd& bz, VectorXd& x, VectorXd& y,
               VectorXd& z) const {
        const VectorXd bzt = sc_ ? apply(blocks_, *sc_, Op::Wit, bz) : bz;
        const VectorXd rhs = bx + Gt_.transpose() * bzt;
        const Index n = p_.variable_dim();
        const Index eq = p_.A.rows();
        if (eq == 0) {
            auto normal_solve = [&](const VectorXd& r) -> VectorXd {
                const VectorXd t = R_.transpose().triangularView<Eigen::Lower>().solve(r);
                return R_.triangularView<Eigen::Upper>().solve(t);
            };
            x = normal_solve(rhs);
            for (int pass = 0; pass < 2; ++pass) x += normal_solve(rhs - Gt_.transpose() * (Gt_ * x));
            y.resize(0);
        } else {
            VectorXd full(n + eq);
            full << rhs, by;
            VectorXd sol = lu_.solve(full);
            for (int pass = 0; pass < 2; ++pass) sol += lu_.solve(full - saddle_ * sol);
            x = sol.head(n);
            y = sol.tail(eq);
        }
        const VectorXd u = Gt_ * x - bzt;
        z = sc_ ? apply(blocks_, *sc_, Op::Winv, u) : u;
    }

private:
    const ConeProgram& p_;
    const std::vector<Block>& blocks_;
    const Scaling* sc_;
    MatrixXd Gt_;
    Eigen::HouseholderQR<MatrixXd> qr_;
    MatrixXd R_;
    Eigen::PartialPivLU<MatrixXd> lu_;
    MatrixXd saddle_;
    bool ok_ = false;
};

}  // namespace detail

/// Homogeneous self-dual primal-dual interior-point method with
/// Nesterov-Todd scaling and a Mehrotra predictor-corrector.
inline ConeSolution solve(const ConeProgram& p, const Tolerances& tol = {}) {
    using namespace detail;
    p.validate();
    const std::vector<Block> blocks = layout(p.cones);
    const Index n = p.variable_dim();
    const Index m = p.G.rows();
    const Index eq = p.A.rows();
    const double deg = degree(blocks);
    const VectorXd e = identity(blocks, m);

    const double resx0 = std::max(1.0, p.c.norm());
    const double resy0 = std::max(1.0, p.b.size() ? p.b.norm() : 0.0);
    const double resz0 = std::max(1.0, p.h.norm());

    ConeSolution out;
    VectorXd x, y, z, s;
    {
        KktSolver kkt(p, blocks, nullptr);
        if (!kkt.ok()) {
            out.status = SolveStatus::NumericalFailure;
            return out;
        }
        VectorXd zp;
        kkt.solve(VectorXd::Zero(n), p.b, p.h, x, y, zp);
        s = -zp;
        VectorXd xd;
        kkt.solve(-p.c, VectorXd::Zero(eq), VectorXd::Zero(m), xd, y, z);
    }
    {
        const double ts = -min_eigenvalue(blocks, s);
        if (ts >= -1e-8 * std::max(s.norm(), 1.0)) s += (1.0 + ts) * e;
        const double tz = -min_eigenvalue(blocks, z);
        if (tz >= -1e-8 * std::max(z.norm(), 1.0)) z += (1.0 + tz) * e;
    }
    double tau = 1.0, kappa = 1.0;

    struct Snapshot {
        VectorXd x, s, y, z;
        double tau = 1.0, pres = 0.0, dres = 0.0, gap = 0.0, relgap = 0.0, merit = std::numeric_limits<double>::infinity();
        int it = 0;
    } best;

    auto finish = [&](SolveStatus st, int it) {
        if ((st == SolveStatus::NumericalFailure || st == SolveStatus::MaxIter) && best.merit < 1.0 &&
            best.pres <= tol.feastol_inaccurate && best.dres <= tol.feastol_inaccurate &&
            (best.gap <= tol.gaptol_inaccurate || best.relgap <= tol.gaptol_inaccurate)) {
            out.status = SolveStatus::Optimal;
            out.inaccurate = true;
            out.iterations = it;
            out.x = best.x / best.tau;
            out.s = best.s / best.tau;
            out.y = best.y / best.tau;
            out.z = best.z / best.tau;
            out.objective_value = p.c.dot(out.x);
            out.primal_residual = best.pres;
            out.dual_residual = best.dres;
            out.gap = best.gap;
            out.relative_gap = best.relgap;
            return out;
        }
        out.status = st;
        out.iterations = it;
        out.x = x / tau;
        out.s = s / tau;
        out.y = y / tau;
        out.z = z / tau;
        out.objective_value = p.c.dot(out.x);
        return out;
    };

    for (int it = 0; it <= tol.max_iterations; ++it) {
        // Residuals of the homogeneous embedding.
        const VectorXd rx = (eq ? VectorXd(p.A.transpose() * y) : VectorXd::Zero(n)) + p.G.transpose() * z + p.c * tau;
        const VectorXd ry = eq ? VectorXd(p.b * tau - p.A * x) : VectorXd::Zero(0);
        const VectorXd rz = p.h * tau - p.G * x - s;
        const double cx = p.c.dot(x);
        const double by = eq ? p.b.dot(y) : 0.0;
        const double hz = p.h.dot(z);
        const double rt = -cx - by - hz - kappa;

        const double pres = std::max(eq ? ry.norm() / tau / resy0 : 0.0, rz.norm() / tau / resz0);
        const double dres = rx.norm() / tau / resx0;
        const double pcost = cx / tau;
        const double dcost = -(by + hz) / tau;
        const double gap = s.dot(z) / (tau * tau);
        double relgap = std::numeric_limits<double>::infinity();
        if (pcost < 0.0)
            relgap = gap / -pcost;
        else if (dcost > 0.0)
            relgap = gap / dcost;

        out.primal_residual = pres;
        out.dual_residual = dres;
        out.gap = gap;
        out.relative_gap = relgap;

        if (!std::isfinite(pres) || !std::isfinite(dres) || !std::isfinite(gap)) return finish(SolveStatus::NumericalFailure, it);
        {
            const double merit = std::max({pres, dres, std::min(gap, relgap)});
            if (merit < best.merit) best = {x, s, y, z, tau, pres, dres, gap, relgap, merit, it};
        }
        if (pres <= tol.feastol && dres <= tol.feastol && (gap <= tol.abstol || relgap <= tol.reltol))
            return finish(SolveStatus::Optimal, it);

        if (hz + by < 0.0) {
            const VectorXd g = (eq ? VectorXd(p.A.transpose() * y) : VectorXd::Zero(n)) + p.G.transpose() * z;
            const double res = g.norm() / resx0 / -(hz + by);
            if (res <= tol.feastol) {
                out.status = SolveStatus::Infeasible;
                out.certificate_residual = res;
                out.iterations = it;
                out.y = y / -(hz + by);
                out.z = z / -(hz + by);
                out.x = VectorXd::Zero(n);
                out.s = VectorXd::Zero(m);
                return out;
            }
        }
        if (cx < 0.0) {
            const double res = std::max(eq ? (p.A * x).norm() / resy0 : 0.0, (p.G * x + s).norm() / resz0) / -cx;
            if (res <= tol.feastol) {
                out.status = SolveStatus::Unbounded;
                out.certificate_residual = res;
                out.iterations = it;
                out.x = x / -cx;
                out.s = s / -cx;
                out.y = VectorXd::Zero(eq);
                out.z = VectorXd::Zero(m);
                return out;
            }
        }
        if (it == tol.max_iterations) break;

        const auto scaling = compute_scaling(blocks, s, z);
        if (!scaling) return finish(SolveStatus::NumericalFailure, it);
        const Scaling& sc = *scaling;
        const VectorXd& lam = sc.lambda;
        KktSolver kkt(p, blocks, &sc);
        if (!kkt.ok()) return finish(SolveStatus::NumericalFailure, it);

        // Direction of the tau column, shared by both Newton solves.
        VectorXd x2, y2, z2;
        kkt.solve(-p.c, p.b, p.h, x2, y2, z2);
        const double den_base = -(p.c.dot(x2) + (eq ? p.b.dot(y2) : 0.0) + p.h.dot(z2));

        struct Direction {
            VectorXd dx, dy, dz, ds;
            double dtau = 0.0, dkappa = 0.0;
        };
        auto newton = [&](const VectorXd& dsr, double dk, double eta) {
            const VectorXd q = jdiv(blocks, sc, dsr);
            VectorXd x1, y1, z1;
            kkt.solve(-eta * rx, eta * ry, eta * rz - apply(blocks, sc, Op::Wt, q), x1, y1, z1);
            Direction d;
            const double num = -eta * rt + dk / tau + p.c.dot(x1) + (eq ? p.b.dot(y1) : 0.0) + p.h.dot(z1);
            d.dtau = num / (den_base + kappa / tau);
            d.dx = x1 + d.dtau * x2;
            d.dy = eq ? VectorXd(y1 + d.dtau * y2) : VectorXd::Zero(0);
            d.dz = z1 + d.dtau * z2;
            d.ds = apply(blocks, sc, Op::Wt, VectorXd(q - apply(blocks, sc, Op::W, d.dz)));
            d.dkappa = (dk - kappa * d.dtau) / tau;
            return d;
        };
        auto step_length = [&](const Direction& d) {
            const VectorXd dzs = apply(blocks, sc, Op::W, d.dz);
            const VectorXd dss = apply(blocks, sc, Op::Wit, d.ds);
            double t = std::min(max_step(blocks, sc, dzs), max_step(blocks, sc, dss));
            if (d.dtau < 0.0) t = std::min(t, -tau / d.dtau);
            if (d.dkappa < 0.0) t = std::min(t, -kappa / d.dkappa);
            return std::make_pair(t, std::make_pair(dss, dzs));
        };

        const VectorXd ll = jprod(blocks, lam, lam);
        const Direction aff = newton(-ll, -tau * kappa, 1.0);
        const auto [t_aff, scaled_aff] = step_length(aff);
        const double sigma = std::pow(1.0 - std::min(1.0, t_aff), 3);
        const double mu = (s.dot(z) + tau * kappa) / (deg + 1.0);

        const VectorXd corr = jprod(blocks, scaled_aff.first, scaled_aff.second);
        const Direction d = newton(-ll - corr + sigma * mu * e, -tau * kappa - aff.dtau * aff.dkappa + sigma * mu,
                                   1.0 - sigma);
        const double t_max = step_length(d).first;
        const double t = std::min(1.0, 0.99 * t_max);
        if (!(t > 0.0) || !std::isfinite(t)) return finish(SolveStatus::NumericalFailure, it);

        x += t * d.dx;
        if (eq) y += t * d.dy;
        z += t * d.dz;
        s += t * d.ds;
        tau += t * d.dtau;
        kappa += t * d.dkappa;
        if (!(tau > 0.0) || !(kappa > 0.0)) return finish(SolveStatus::NumericalFailure, it + 1);
    }
    return finish(SolveStatus::MaxIter, tol.max_iterations);
}

}  // namespace symbiotic::conic
