#pragma once

#include "symbiotic/allocation.hpp"
#include "symbiotic/conic/program.hpp"
#include "symbiotic/conic/solver.hpp"
#include "symbiotic/model.hpp"
#include "symbiotic/rng.hpp"
#include "symbiotic/subspace.hpp"
#include "symbiotic/units.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace symbiotic {

struct RandomizationFailed : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Tr(A W) >= b with W = p_t w w^H, A expressed in span coordinates.
struct SdrConstraint {
    cmat A;
    double b = 0.0;
    std::string label;
};

struct SdrProblem {
    conic::ConeProgram program;  // dual form, variables = multipliers y >= 0
    cmat basis;                  // M x d, W = power_unit * B W_hat B^H
    double power_unit = 1.0;
    std::vector<SdrConstraint> constraints;
    std::vector<double> row_scale;  // ||A_j||_F used in the program
};

/// Builds the relaxed power-minimization SDP for a fixed split:
///   min Tr(W) s.t. Tr(A_j W) >= b_j, W PSD,
/// with users, tag (lower-bound SINR), energy harvesting, the NOMA order and
/// the power cap as rows. W lives in the span of the channels (see
/// channel_span_basis). The program handed to the cone solver is the dual
///   max sum b_j y_j s.t. I - sum y_j A_j PSD, y >= 0,
/// which is always strictly feasible (y = 0); the solver's PSD multiplier is W.
/// An unbounded dual therefore certifies an infeasible relaxation.
inline SdrProblem build_sdr(const SystemParams& params, const ChannelSet& ch, const std::vector<double>& rho) {
    params.validate();
    (void)PowerAllocation(rho, 1.0);  // validates the split
    const int K = params.num_users;
    if (rho.size() != static_cast<std::size_t>(K)) throw InvalidInput("split must have one entry per user");
    const double s2 = params.noise_power;
    const double alpha = params.reflection_coeff;
    SdrProblem sp;
    sp.basis = channel_span_basis(ch);
    const ChannelSet rc = ch.transformed(sp.basis);
    const Eigen::Index d = sp.basis.cols();
    auto outer = [](const cvec& v) -> cmat { return v * v.adjoint(); };

    for (int k = 1; k <= K; ++k) {
        const double gth = params.sinr_threshold(k);
        if (gth <= 0.0) continue;
        double leak = 0.0;
        for (int j = 1; j < k; ++j) leak += rho[static_cast<std::size_t>(j - 1)];
        for (int j = k + 1; j <= K; ++j) leak += rho[static_cast<std::size_t>(j - 1)] * params.residual(j);
        for (int i = 1; i <= k; ++i) {
            const cmat H = outer(rc.h(i));
            sp.constraints.push_back({rho[static_cast<std::size_t>(k - 1)] * H - gth * (leak * H + alpha * outer(rc.g(i))),
                                      gth * s2, "user " + std::to_string(k) + " at " + std::to_string(i)});
        }
    }
    const double g0 = params.sinr_threshold(0);
    if (g0 > 0.0) {
        double res = 0.0;
        for (int j = 1; j <= K; ++j) res += rho[static_cast<std::size_t>(j - 1)] * params.residual(j);
        sp.constraints.push_back({alpha * std::norm(rc.q(1)) * outer(rc.f()) - 2.0 * g0 * res * outer(rc.h(1)),
                                  2.0 * g0 * s2, "tag"});
    }
    if (params.eh_threshold > 0.0)
        sp.constraints.push_back(
            {params.eh_efficiency * (1.0 - alpha) * outer(rc.f()), params.eh_threshold, "energy harvesting"});
    for (int k = 1; k < K; ++k)
        sp.constraints.push_back({outer(rc.h(k)) - outer(rc.h(k + 1)), 0.0, "order " + std::to_string(k)});
    sp.constraints.push_back({-cmat::Identity(d, d), -params.max_power, "power cap"});

    // Power unit: the largest single-constraint requirement, so Tr(W_hat) = O(1).
    double unit = 0.0;
    for (const auto& c : sp.constraints) {
        if (c.b <= 0.0) continue;
        const double top = Eigen::SelfAdjointEigenSolver<cmat>(c.A, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
        if (top > 0.0) unit = std::max(unit, c.b / top);
    }
    sp.power_unit = unit > 0.0 ? unit : params.max_power;

    // The cap Tr(W) <= p_max only bounds the objective itself, so it is left
    // out of the conic program (where its large coefficient hurts conditioning)
    // and checked against the optimum in solve_sdr.
    const int m = static_cast<int>(sp.constraints.size()) - 1;
    const int side = static_cast<int>(2 * d);
    const int svec_len = side * (side + 1) / 2;
    conic::ProgramBuilder pb(m);
    Eigen::VectorXd c(m);
    Eigen::MatrixXd Gs(svec_len, m);
    for (int j = 0; j < m; ++j) {
        const auto& con = sp.constraints[static_cast<std::size_t>(j)];
        const double scale = std::max(con.A.norm(), std::numeric_limits<double>::min());
        sp.row_scale.push_back(scale);
        c(j) = -con.b / (sp.power_unit * scale);
        Gs.col(j) = conic::svec(conic::hermitian_embed(con.A / scale));
        Eigen::RowVectorXd e = Eigen::RowVectorXd::Zero(m);
        e(j) = 1.0;
        pb.add_geq(e, 0.0);
    }
    pb.set_objective(c);
    pb.add_psd(Gs, conic::svec(Eigen::MatrixXd::Identity(side, side)), side);
    sp.program = pb.build();
    return sp;
}

/// Status Unbounded (of the dual program) means the relaxation is infeasible,
/// including the case where its optimum exceeds p_max.
struct SdrSolution {
    conic::SolveStatus status = conic::SolveStatus::NumericalFailure;
    cmat W;                      // M x M, watts
    double objective = 0.0;      // Tr(W) at the returned iterate
    /// Dual objective at the solver's multipliers, shrunk until they are
    /// exactly dual feasible: a certified lower bound on the relaxation, and
    /// hence on the power of every feasible rank-one point.
    double lower_bound = 0.0;
};

inline SdrSolution solve_sdr(const SdrProblem& sp, const conic::Tolerances& tol = {}) {
    SdrSolution out;
    const auto sol = conic::solve(sp.program, tol);
    out.status = sol.status;
    if (sol.status != conic::SolveStatus::Optimal) return out;
    const Eigen::Index m = static_cast<Eigen::Index>(sp.constraints.size()) - 1;
    const int side = sp.program.cones.back().size;
    const Eigen::MatrixXd Z = conic::smat(Eigen::VectorXd(sol.z.segment(m, side * (side + 1) / 2)), side);
    const cmat W_hat = conic::hermitian_unembed(2.0 * Z);
    out.W = sp.power_unit * sp.basis * W_hat * sp.basis.adjoint();
    out.W = 0.5 * (out.W + out.W.adjoint()).eval();
    out.objective = out.W.trace().real();
    if (out.objective > -sp.constraints.back().b * (1.0 + 1e-9)) out.status = conic::SolveStatus::Unbounded;

    const Eigen::Index d = sp.basis.cols();
    cmat slack = cmat::Identity(d, d);
    double bound = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
        const auto& con = sp.constraints[static_cast<std::size_t>(j)];
        const double y = std::max(sol.x(j), 0.0);
        slack -= y * con.A / sp.row_scale[static_cast<std::size_t>(j)];
        bound += y * con.b / sp.row_scale[static_cast<std::size_t>(j)];
    }
    const double low = Eigen::SelfAdjointEigenSolver<cmat>(slack, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
    out.lower_bound = std::max(bound / (1.0 + std::max(-low, 0.0)), 0.0);
    return out;
}

struct SdrStepResult {
    cmat W;
    bool rank_one = false;
    double p_t = 0.0;
    Beamformer w;
    double sdr_lower_bound = 0.0;
    int randomization_trials_used = 0;
};

struct ExtractOptions {
    int randomizations = 100;
    double rank_one_threshold = 1e-6;
};

namespace detail {

/// Smallest p with p * Tr(A_j w w^H) >= b_j for every row (w unit norm), or
/// nullopt when some row cannot be met by scaling.
inline std::optional<double> required_power(const SdrProblem& sp, const cvec& w) {
    const cvec u = sp.basis.adjoint() * w;
    double p = 0.0;
    for (const auto& c : sp.constraints) {
        if (c.b < 0.0) continue;  // upper bounds, checked separately
        const double a = (u.adjoint() * c.A * u)(0, 0).real();
        if (c.b == 0.0) {
            if (a < -1e-9 * c.A.norm()) return std::nullopt;
            continue;
        }
        if (!(a > 0.0)) return std::nullopt;
        p = std::max(p, c.b / a);
    }
    return p;
}

/// A binding order row is met by the relaxed solution only to solver accuracy,
/// which for a beam pointed mostly at the tag can flip it. Nudges w along h_k
/// (phase-aligned) by the least doubling step that restores each violated pair.
inline cvec repair_order(const ChannelSet& ch, cvec w) {
    const int K = ch.num_users();
    for (int pass = 0; pass < 4 * K; ++pass) {
        const LinkGains g = link_gains(ch, w);
        int k = 1;
        while (k < K && g.h2[static_cast<std::size_t>(k - 1)] >= g.h2[static_cast<std::size_t>(k)] * (1.0 + 1e-9)) ++k;
        if (k == K) return w;
        const cvec& h = ch.h(k);
        const cplx proj = h.dot(w);
        const cplx phase = std::abs(proj) > 0.0 ? proj / std::abs(proj) : cplx(1.0, 0.0);
        const cvec dir = phase * h / h.norm();
        double eps = 1e-6 * std::max(std::abs(proj) / h.norm(), 1e-12);
        for (int it = 0; it < 60; ++it, eps *= 2.0) {
            const cvec v = w + eps * dir;
            const LinkGains gv = link_gains(ch, v);
            if (gv.h2[static_cast<std::size_t>(k - 1)] >= gv.h2[static_cast<std::size_t>(k)] * (1.0 + 1e-6)) {
                w = v;
                break;
            }
        }
    }
    return w;
}

}  // namespace detail

/// Recovers a rank-one precoder from the relaxed solution W. Rank-one W gives
/// its principal eigenpair directly; otherwise D candidates v = U S^{1/2} e
/// with random unit-modulus e (so ||v||^2 = Tr W) are drawn. Every candidate is
/// up-scaled by the least factor c >= 1 that restores the lower-bound rows and
/// rechecked against the original constraints; the smallest power wins.
inline SdrStepResult extract_precoder(const SystemParams& params, const ChannelSet& ch, const std::vector<double>& rho,
                                      const SdrProblem& sp, const SdrSolution& sol, RandomStream& rng,
                                      const ExtractOptions& opt = {}) {
    Eigen::SelfAdjointEigenSolver<cmat> es(sol.W);
    const Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0);  // ascending
    const cmat U = es.eigenvectors();
    const Eigen::Index M = sol.W.rows();
    SdrStepResult out;
    out.W = sol.W;
    out.sdr_lower_bound = sol.lower_bound;
    const double top = lam(M - 1);
    if (!(top > 0.0)) throw RandomizationFailed("relaxed solution is zero");
    out.rank_one = M == 1 || lam(M - 2) <= opt.rank_one_threshold * top;

    std::optional<double> best_p;
    cvec best_w;
    auto consider = [&](const cvec& v) {
        const double base = v.squaredNorm();
        if (!(base > 0.0)) return;
        cvec w = v / std::sqrt(base);
        if (!noma_order_satisfied(ch, w)) {
            w = detail::repair_order(ch, w);
            w /= w.norm();
        }
        const auto need = detail::required_power(sp, w);
        if (!need) return;
        const double p = std::max(base, *need * (1.0 + 1e-9));
        if (p > params.max_power * (1.0 + 1e-9)) return;
        if (best_p && p >= *best_p) return;
        if (!check_constraints(params, ch, w, rho, std::min(p, params.max_power)).ok()) return;
        best_p = std::min(p, params.max_power);
        best_w = w;
    };

    const cvec principal = std::sqrt(top) * U.col(M - 1);
    consider(principal);
    if (!out.rank_one) {
        consider(std::sqrt(lam.sum()) * U.col(M - 1));
        for (int dtrial = 0; dtrial < opt.randomizations; ++dtrial) {
            cvec e(M);
            for (Eigen::Index m = 0; m < M; ++m) e(m) = std::polar(1.0, rng.phase());
            consider(U * (lam.cwiseSqrt().cast<cplx>().asDiagonal() * e));
            ++out.randomization_trials_used;
        }
    }
    if (!best_p) throw RandomizationFailed("no feasible candidate among " + std::to_string(opt.randomizations) + " randomizations");
    out.p_t = *best_p;
    out.w = Beamformer::digital(best_w);
    return out;
}

struct RhoStepResult {
    std::optional<std::vector<double>> rho;
    double p_t = 0.0;  // smallest power meeting all rows with the new split
};

/// Split step for fixed (w, p_t): the max-headroom LP. Its headroom s is the
/// factor by which the noise could grow with every row still met, which for a
/// fixed direction is the same as shrinking p_t to p_t / (1 + s).
inline RhoStepResult power_allocation_step(const SystemParams& params, const ChannelSet& ch, const cvec& w, double p_t,
                                           const std::vector<double>& rho_prev, const conic::Tolerances& tol = {}) {
    RhoStepResult out;
    if (params.num_users == 1) {
        out.rho = std::vector<double>{1.0};
        out.p_t = p_t;
        return out;
    }
    const SlackAllocation sa = max_slack_allocation(params, ch, w, p_t, tol);
    if (!sa.rho) {
        if (check_constraints(params, ch, w, rho_prev, p_t).ok()) {
            out.rho = rho_prev;
            out.p_t = p_t;
        }
        return out;
    }
    out.rho = sa.rho;
    out.p_t = p_t;
    if (sa.slack > 0.0) {
        const double shrunk = p_t / (1.0 + sa.slack) * (1.0 + 1e-9);
        if (shrunk < p_t && check_constraints(params, ch, w, *sa.rho, shrunk).ok()) out.p_t = shrunk;
    }
    return out;
}

enum class TpminStatus { Converged, MaxIterations, Infeasible };

inline const char* to_string(TpminStatus s) {
    switch (s) {
    case TpminStatus::Converged: return "converged";
    case TpminStatus::MaxIterations: return "max-iterations";
    case TpminStatus::Infeasible: return "infeasible";
    }
    return "unknown";
}

struct TpminOptions {
    double epsilon = 1e-3;
    int max_iterations = 50;
    int max_starts = 6;  // split candidates explored by the initialization
    std::uint64_t seed = 0;
    ExtractOptions extract{};
    conic::Tolerances tolerances{};
};

struct TpminTraceRecord {
    int iteration = 0;
    double p_t_dbm = 0.0;
    bool rank_one = false;
    int randomizations = 0;
    bool accepted = true;
};

/// One audited relaxation solve: the extracted power against the SDR bound.
struct SdrAudit {
    double sdr_lower_bound = 0.0;
    double p_t = 0.0;
    bool rank_one = false;
    bool recheck_ok = false;
};

struct TpminResult {
    TpminStatus status = TpminStatus::Infeasible;
    Beamformer w;
    PowerAllocation alloc;
    double p_t = 0.0;
    double p_t_dbm = 0.0;
    int iterations = 0;
    std::vector<TpminTraceRecord> trace;
    std::vector<SdrAudit> audits;
    std::string diagnostics;
};

/// Candidate splits for the initialization: near-uniform and geometric.
inline std::vector<std::vector<double>> tpmin_split_candidates(int K) {
    if (K == 1) return {{1.0}};
    std::vector<std::vector<double>> out{uniform_ordered_split(K)};
    for (double r : {1.5, 2.5, 4.0, 8.0, 16.0}) {
        std::vector<double> rho;
        for (int k = 0; k < K; ++k) rho.push_back(std::pow(r, k));
        out.push_back(repair_split(rho));
    }
    return out;
}

namespace detail {

struct SdrStepOutcome {
    std::optional<SdrStepResult> step;
    conic::SolveStatus status = conic::SolveStatus::NumericalFailure;
};

inline SdrStepOutcome sdr_step(const SystemParams& params, const ChannelSet& ch, const std::vector<double>& rho,
                               RandomStream& rng, const TpminOptions& opt, std::vector<SdrAudit>& audits) {
    SdrStepOutcome out;
    const SdrProblem sp = build_sdr(params, ch, rho);
    const SdrSolution sol = solve_sdr(sp, opt.tolerances);
    out.status = sol.status;
    if (sol.status != conic::SolveStatus::Optimal) return out;
    try {
        SdrStepResult r = extract_precoder(params, ch, rho, sp, sol, rng, opt.extract);
        audits.push_back({r.sdr_lower_bound, r.p_t, r.rank_one, check_constraints(params, ch, r.w.w, rho, r.p_t).ok()});
        out.step = std::move(r);
    } catch (const RandomizationFailed&) {
    }
    return out;
}

}  // namespace detail

/// Alternates the relaxed precoder/power step with the split step, starting
/// from each feasible split candidate and keeping the lowest power reached.
inline TpminResult solve_tpmin(const SystemParams& params, const ChannelSet& ch, const TpminOptions& opt = {}) {
    params.validate();
    check_dimensions(params, ch, ch.num_antennas());
    RandomStream rng(opt.seed, streams::randomization);
    TpminResult best;
    int starts = 0;
    for (const auto& rho0 : tpmin_split_candidates(params.num_users)) {
        if (starts >= opt.max_starts) break;
        TpminResult cur;
        auto first = detail::sdr_step(params, ch, rho0, rng, opt, best.audits);
        if (!first.step) continue;
        ++starts;
        std::vector<double> rho = rho0;
        double p = first.step->p_t;
        Beamformer w = first.step->w;
        cur.trace.push_back({0, watts_to_dbm(p), first.step->rank_one, first.step->randomization_trials_used, true});
        cur.status = TpminStatus::MaxIterations;
        for (int it = 1; it <= opt.max_iterations; ++it) {
            const double p_old = p;
            const RhoStepResult rs = power_allocation_step(params, ch, w.w, p, rho, opt.tolerances);
            if (rs.rho) {
                rho = *rs.rho;
                p = std::min(p, rs.p_t);
            }
            auto next = detail::sdr_step(params, ch, rho, rng, opt, best.audits);
            bool accepted = false;
            if (next.step && next.step->p_t <= p) {
                p = next.step->p_t;
                w = next.step->w;
                accepted = true;
            }
            cur.iterations = it;
            cur.trace.push_back({it, watts_to_dbm(p), next.step ? next.step->rank_one : false,
                                 next.step ? next.step->randomization_trials_used : 0, accepted});
            if ((p_old - p) / p_old < opt.epsilon) {
                cur.status = TpminStatus::Converged;
                break;
            }
        }
        cur.w = w;
        cur.alloc = PowerAllocation(rho, p);
        cur.p_t = p;
        cur.p_t_dbm = watts_to_dbm(p);
        if (best.status == TpminStatus::Infeasible || p < best.p_t) {
            auto audits = std::move(best.audits);
            best = std::move(cur);
            best.audits = std::move(audits);
        }
    }
    if (starts == 0) {
        best.status = TpminStatus::Infeasible;
        best.diagnostics = "relaxation infeasible for every initial split";
    }
    return best;
}

}  // namespace symbiotic
