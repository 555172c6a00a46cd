#pragma once

#include "symbiotic/allocation.hpp"
#include "symbiotic/baselines.hpp"
#include "symbiotic/conic/program.hpp"
#include "symbiotic/conic/solver.hpp"
#include "symbiotic/model.hpp"
#include "symbiotic/rng.hpp"
#include "symbiotic/subspace.hpp"
#include "symbiotic/tpmin.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace symbiotic {

enum class StepStatus { Accepted, Rejected };

inline const char* to_string(StepStatus s) { return s == StepStatus::Accepted ? "accepted" : "rejected"; }

enum class WsrStatus { Converged, MaxIterations, Infeasible };

inline const char* to_string(WsrStatus s) {
    switch (s) {
    case WsrStatus::Converged: return "converged";
    case WsrStatus::MaxIterations: return "max-iterations";
    case WsrStatus::Infeasible: return "infeasible";
    }
    return "unknown";
}

struct WsrOptions {
    BeamMode mode = BeamMode::Digital;
    double epsilon = 1e-3;  // normalized-increment stopping rule
    int max_outer_iterations = 50;
    int max_inner_iterations = 20;
    int random_restarts = 10;
    std::uint64_t seed = 0;  // drives the random restarts of the initialization
    conic::Tolerances tolerances{};
};

struct WsrIterate {
    Beamformer w;
    PowerAllocation alloc;
    std::vector<double> beta, lambda, theta, y;  // index 0 = tag
    std::vector<double> objective_trace;
};

struct WsrTraceRecord {
    int iteration = 0;
    double wsr = 0.0;
    std::vector<double> sinr;  // index 0 = tag (gamma0'), then users
    StepStatus beam_step = StepStatus::Accepted;
    StepStatus power_step = StepStatus::Accepted;
};

struct WsrResult {
    WsrStatus status = WsrStatus::Infeasible;
    Beamformer w;
    PowerAllocation alloc;
    double wsr = 0.0;        // lower-bound tag rate, the optimized objective
    double wsr_exact = 0.0;  // exact ergodic tag rate
    RateReport report;
    int outer_iterations = 0;
    int rejected_steps = 0;
    std::vector<WsrTraceRecord> trace;
    WsrIterate iterate;
    std::string diagnostics;
};

// ---------------------------------------------------------------------------
// Fractional-programming updates. A_k / B_k are the numerator / denominator of
// device k's SINR (tag: lower-bound SINR gamma0).

inline std::vector<double> update_lambda(const SystemParams& params, const ChannelSet& ch, const cvec& w,
                                         const PowerAllocation& alloc) {
    const LinkGains gains = link_gains(ch, w);
    std::vector<double> lambda;
    for (int k = 0; k <= params.num_users; ++k) {
        const SinrTerms t = device_sinr_terms(params, ch, gains, alloc.rho, alloc.p_t, k);
        lambda.push_back(params.weight(k) * t.denominator / (t.numerator + t.denominator));
    }
    return lambda;
}

struct BetaUpdate {
    std::vector<double> beta;
    std::vector<int> below_threshold;  // devices whose current SINR misses its target
    bool feasible() const { return below_threshold.empty(); }
};

inline BetaUpdate update_beta(const SystemParams& params, const ChannelSet& ch, const cvec& w,
                              const PowerAllocation& alloc) {
    const LinkGains gains = link_gains(ch, w);
    BetaUpdate out;
    for (int k = 0; k <= params.num_users; ++k) {
        const double b = device_sinr_terms(params, ch, gains, alloc.rho, alloc.p_t, k).value();
        out.beta.push_back(b);
        if (b < params.sinr_threshold(k) * (1.0 - 1e-6)) out.below_threshold.push_back(k);
    }
    return out;
}

/// With the beamformer fixed the same closed forms give (y, theta).
inline std::vector<double> update_y(const SystemParams& params, const ChannelSet& ch, const cvec& w,
                                    const PowerAllocation& alloc) {
    return update_lambda(params, ch, w, alloc);
}

inline BetaUpdate update_theta(const SystemParams& params, const ChannelSet& ch, const cvec& w,
                               const PowerAllocation& alloc) {
    return update_beta(params, ch, w, alloc);
}

/// Lagrangian of the transformed problem in nats:
/// sum a_k ln(1 + beta_k) - sum lambda_k (beta_k - A_k/B_k).
inline double fp_lagrangian(const SystemParams& params, const std::vector<double>& beta,
                            const std::vector<double>& lambda, const std::vector<double>& sinr) {
    double L = 0.0;
    for (std::size_t k = 0; k < beta.size(); ++k)
        L += params.weights[k] * std::log1p(beta[k]) - lambda[k] * (beta[k] - sinr[k]);
    return L;
}

inline std::vector<double> margin_weights(const SystemParams& params, const std::vector<double>& duals) {
    std::vector<double> mu;
    for (int k = 0; k <= params.num_users; ++k)
        mu.push_back(std::max(params.weight(k) - duals[static_cast<std::size_t>(k)], 0.0));
    return mu;
}

namespace detail {

/// Rows giving Re(c^H w) and Im(c^H w) as linear functions of u = [Re w; Im w].
inline Eigen::MatrixXd inner_rows(const cvec& c) {
    const Eigen::Index d = c.size();
    Eigen::MatrixXd R(2, 2 * d);
    R.row(0) << c.real().transpose(), c.imag().transpose();
    R.row(1) << -c.imag().transpose(), c.real().transpose();
    return R;
}

/// First-order under-estimator of |c^H w|^2 around x0 = c^H w0:
/// 2 Re(conj(x0) c^H w) - |x0|^2, returned as (row, constant).
inline std::pair<Eigen::RowVectorXd, double> linearized_gain(const cvec& c, cplx x0) {
    const Eigen::MatrixXd R = inner_rows(c);
    Eigen::RowVectorXd row = 2.0 * (x0.real() * R.row(0) + x0.imag() * R.row(1));
    return {row, -std::norm(x0)};
}

inline cvec from_real(const Eigen::VectorXd& u) {
    const Eigen::Index d = u.size() / 2;
    cvec w(d);
    for (Eigen::Index m = 0; m < d; ++m) w(m) = cplx(u(m), u(d + m));
    return w;
}

}  // namespace detail

struct BeamStepResult {
    StepStatus status = StepStatus::Rejected;
    Beamformer w;
    cvec direction;  // raw SOCP point B u, norm <= 1
    conic::SolveStatus solver_status = conic::SolveStatus::NumericalFailure;
};

/// One beamforming step for a fixed split. Every nonconvex |.^H w|^2 term on a
/// "greater-than" side is replaced by its tangent at w_prev (a global
/// under-estimator), so any point of the resulting SOCP meets the original
/// constraints. Device k gets a margin t_k measured against its current SINR
/// beta_k (t_k >= 0 <=> SINR_k >= beta_k), and the objective
/// sum mu_k t_k with mu_k = a_k - lambda_k = a_k beta_k / (1 + beta_k) is the
/// first-order model of the weighted sum rate around w_prev. The rate
/// thresholds enter as separate rows without margin, and t_k >= -1 keeps the
/// model local; the caller line-searches the resulting direction.
inline BeamStepResult beamformer_step(const SystemParams& params, const ChannelSet& ch, const PowerAllocation& alloc,
                                      const std::vector<double>& beta, const std::vector<double>& mu,
                                      const Beamformer& w_prev, BeamMode mode = BeamMode::Digital,
                                      const conic::Tolerances& tol = {}) {
    check_dimensions(params, ch, w_prev.w.size());
    const int K = params.num_users;
    const double p_t = alloc.p_t;
    const double s2 = params.noise_power;
    const double alpha = params.reflection_coeff;
    const cmat B = channel_span_basis(ch);
    const ChannelSet rc = ch.transformed(B);
    const Eigen::Index d = B.cols();
    const Eigen::Index n = 2 * d + K + 1;
    const LinkGains g0 = link_gains(ch, w_prev.w);
    auto tcol = [&](int k) { return 2 * d + k; };

    conic::ProgramBuilder pb(n);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
    for (int k = 0; k <= K; ++k) c(tcol(k)) = -mu[static_cast<std::size_t>(k)];
    pb.set_objective(c);

    BeamStepResult out;
    out.w = w_prev;

    for (int k = 0; k <= K; ++k) {
        Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(n);
        row(tcol(k)) = 1.0;
        pb.add_geq(row, -1.0);
        if (!(beta[static_cast<std::size_t>(k)] > 0.0)) pb.add_leq(row, 0.0);
    }

    // ||w|| <= 1
    {
        Eigen::MatrixXd G = Eigen::MatrixXd::Zero(2 * d + 1, n);
        G.block(1, 0, 2 * d, 2 * d) = -Eigen::MatrixXd::Identity(2 * d, 2 * d);
        Eigen::VectorXd h = Eigen::VectorXd::Zero(2 * d + 1);
        h(0) = 1.0;
        pb.add_soc(G, h);
    }

    // SINR of user k at decoder i >= level (1 + margin), with the tangent of
    // |h_i^H w|^2; margin_col < 0 means no margin variable.
    auto add_user_row = [&](int i, int k, double level, Eigen::Index margin_col) {
        double leak = 0.0;
        for (int j = 1; j < k; ++j) leak += alloc.rho_of(j);
        for (int j = k + 1; j <= K; ++j) leak += alloc.rho_of(j) * params.residual(j);
        const double coef = (alloc.rho_of(k) - level * leak) * p_t;
        if (!(coef > 0.0)) return false;  // level above the interference-limited ceiling
        const cplx x0 = ch.h(i).dot(w_prev.w);
        const double D0 = user_sinr_terms(params, g0, alloc.rho, p_t, i, k).denominator;
        const double scale = coef / (level * D0);
        auto [lin, lin0] = detail::linearized_gain(rc.h(i), x0);
        Eigen::RowVectorXd a = Eigen::RowVectorXd::Zero(n);
        a.head(2 * d) = scale * lin;
        if (margin_col >= 0) a(margin_col) = -1.0;
        Eigen::MatrixXd U = Eigen::MatrixXd::Zero(2, n);
        U.leftCols(2 * d) = std::sqrt(alpha * p_t / D0) * detail::inner_rows(rc.g(i));
        pb.add_quadratic_leq(U, Eigen::VectorXd::Zero(2), a, scale * lin0 - s2 / D0);
        return true;
    };
    for (int k = 1; k <= K; ++k) {
        const double b = beta[static_cast<std::size_t>(k)];
        const double th = params.sinr_threshold(k);
        for (int i = 1; i <= k; ++i) {
            if (b > 0.0 && !add_user_row(i, k, b, tcol(k))) return out;
            if (th > 0.0 && !add_user_row(i, k, th, -1)) return out;
        }
    }

    // Tag SINR (lower-bound form).
    auto add_tag_row = [&](double level, Eigen::Index margin_col) {
        double res = 0.0;
        for (int j = 1; j <= K; ++j) res += alloc.rho_of(j) * params.residual(j);
        const double D0 = tag_sinr_lb_terms(params, ch, g0, alloc.rho, p_t).denominator;
        const cplx x0 = ch.f().dot(w_prev.w);
        const double scale = alpha * p_t * std::norm(ch.q(1)) / (level * D0);
        auto [lin, lin0] = detail::linearized_gain(rc.f(), x0);
        Eigen::RowVectorXd a = Eigen::RowVectorXd::Zero(n);
        a.head(2 * d) = scale * lin;
        if (margin_col >= 0) a(margin_col) = -1.0;
        Eigen::MatrixXd U = Eigen::MatrixXd::Zero(2, n);
        U.leftCols(2 * d) = std::sqrt(2.0 * res * p_t / D0) * detail::inner_rows(rc.h(1));
        pb.add_quadratic_leq(U, Eigen::VectorXd::Zero(2), a, scale * lin0 - 2.0 * s2 / D0);
    };
    if (beta[0] > 0.0) add_tag_row(beta[0], tcol(0));
    if (params.sinr_threshold(0) > 0.0) add_tag_row(params.sinr_threshold(0), -1);

    // Energy harvesting, tangent cut of |f^H w|^2 around w_prev.
    if (params.eh_threshold > 0.0) {
        const cplx x0 = ch.f().dot(w_prev.w);
        const double f0 = std::max(std::norm(x0), 1e-300);
        auto [lin, lin0] = detail::linearized_gain(rc.f(), x0);
        Eigen::RowVectorXd a = Eigen::RowVectorXd::Zero(n);
        a.head(2 * d) = lin / f0;
        const double need = params.eh_threshold / (params.eh_efficiency * (1.0 - alpha) * p_t * f0);
        pb.add_geq(a, need - lin0 / f0);
    }

    // NOMA order |h_k^H w|^2 >= |h_{k+1}^H w|^2 with the left side linearized.
    for (int k = 1; k < K; ++k) {
        const cplx x0 = ch.h(k).dot(w_prev.w);
        const double n0 = std::norm(x0);
        if (!(n0 > 0.0)) return out;
        auto [lin, lin0] = detail::linearized_gain(rc.h(k), x0);
        Eigen::RowVectorXd a = Eigen::RowVectorXd::Zero(n);
        a.head(2 * d) = lin / n0;
        Eigen::MatrixXd U = Eigen::MatrixXd::Zero(2, n);
        U.leftCols(2 * d) = detail::inner_rows(rc.h(k + 1)) / std::sqrt(n0);
        pb.add_quadratic_leq(U, Eigen::VectorXd::Zero(2), a, lin0 / n0);
    }

    const auto sol = conic::solve(pb.build(), tol);
    out.solver_status = sol.status;
    if (sol.status != conic::SolveStatus::Optimal) return out;
    const cvec u = detail::from_real(sol.x.head(2 * d));
    const cvec w_full = B * u;
    if (!(w_full.norm() > 0.0)) return out;
    out.direction = w_full;
    const Beamformer cand = mode == BeamMode::Digital ? Beamformer::digital(w_full) : project_constant_modulus(w_full);
    if (!check_constraints(params, ch, cand.w, alloc.rho, p_t).ok()) return out;
    out.w = cand;
    out.status = StepStatus::Accepted;
    return out;
}

struct PowerStepResult {
    StepStatus status = StepStatus::Rejected;
    PowerAllocation alloc;
    conic::SolveStatus solver_status = conic::SolveStatus::NumericalFailure;
};

/// Power-split step for a fixed beamformer: with w fixed every SINR is a
/// ratio of affine functions of rho, so the margin model (same construction
/// as the beamforming step, reference SINRs theta) is an LP.
inline PowerStepResult power_step(const SystemParams& params, const ChannelSet& ch, const cvec& w,
                                  const std::vector<double>& theta, const std::vector<double>& mu,
                                  const PowerAllocation& prev, const conic::Tolerances& tol = {}) {
    const int K = params.num_users;
    PowerStepResult out;
    out.alloc = prev;
    if (K == 1) {
        out.status = StepStatus::Accepted;
        out.solver_status = conic::SolveStatus::Optimal;
        return out;
    }
    const double p_t = prev.p_t;
    const double s2 = params.noise_power;
    const double alpha = params.reflection_coeff;
    const LinkGains gains = link_gains(ch, w);
    const int n = 2 * K + 1;
    auto tcol = [&](int k) { return K + k; };

    conic::ProgramBuilder pb(n);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
    for (int k = 0; k <= K; ++k) c(tcol(k)) = -mu[static_cast<std::size_t>(k)];
    pb.set_objective(c);
    add_split_constraints(pb, K);
    for (int k = 0; k <= K; ++k) {
        Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(n);
        row(tcol(k)) = 1.0;
        pb.add_geq(row, -1.0);
        if (!(theta[static_cast<std::size_t>(k)] > 0.0)) pb.add_leq(row, 0.0);
    }

    auto add_user_row = [&](int i, int k, double level, int margin_col) {
        const double X = p_t * gains.h(i);
        const double D0 = user_sinr_terms(params, gains, prev.rho, p_t, i, k).denominator;
        Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(n);
        for (int j = 1; j <= K; ++j) {
            if (j == k)
                row(j - 1) = X / (level * D0);
            else if (j < k)
                row(j - 1) = -X / D0;
            else
                row(j - 1) = -X * params.residual(j) / D0;
        }
        if (margin_col >= 0) row(margin_col) = -1.0;
        pb.add_geq(row, (alpha * p_t * gains.g(i) + s2) / D0);
    };
    for (int k = 1; k <= K; ++k) {
        const double b = theta[static_cast<std::size_t>(k)];
        const double th = params.sinr_threshold(k);
        for (int i = 1; i <= k; ++i) {
            if (b > 0.0) add_user_row(i, k, b, tcol(k));
            if (th > 0.0) add_user_row(i, k, th, -1);
        }
    }
    auto add_tag_row = [&](double level, int margin_col) {
        const double D0 = tag_sinr_lb_terms(params, ch, gains, prev.rho, p_t).denominator;
        const double signal = alpha * p_t * std::norm(ch.q(1)) * gains.f2;
        Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(n);
        for (int j = 1; j <= K; ++j) row(j - 1) = -2.0 * p_t * gains.h(1) * params.residual(j) / D0;
        if (margin_col >= 0) row(margin_col) = -1.0;
        pb.add_geq(row, 2.0 * s2 / D0 - signal / (level * D0));
    };
    if (theta[0] > 0.0) add_tag_row(theta[0], tcol(0));
    if (params.sinr_threshold(0) > 0.0) add_tag_row(params.sinr_threshold(0), -1);

    const auto sol = conic::solve(pb.build(), tol);
    out.solver_status = sol.status;
    if (sol.status != conic::SolveStatus::Optimal) return out;
    std::vector<double> rho(sol.x.data(), sol.x.data() + K);
    out.alloc = PowerAllocation(repair_split(rho), p_t);
    out.status = check_constraints(params, ch, w, out.alloc.rho, p_t).ok() ? StepStatus::Accepted : StepStatus::Rejected;
    return out;
}

// ---------------------------------------------------------------------------

struct WsrInitialization {
    Beamformer w;
    PowerAllocation alloc;
    std::string source;
};

/// Initialization ladder: weighted MRT, then MRT / tag-direction mixes, then
/// seeded random restarts. For each direction the uniform-ordered split is
/// tried first and the max-headroom split second.
inline std::optional<WsrInitialization> initialize_wsrmax(const SystemParams& params, const ChannelSet& ch, double p_t,
                                                          const WsrOptions& opt, std::string* diagnostics = nullptr) {
    const int K = params.num_users;
    const int M = params.num_antennas;
    std::vector<std::pair<cvec, std::string>> candidates;
    const cvec mrt = weighted_mrt(ch).w;
    candidates.emplace_back(mrt, "weighted-mrt");
    cvec fdir = ch.f() / ch.f().norm();
    const cplx overlap = fdir.dot(mrt);
    if (std::abs(overlap) > 0.0) fdir *= overlap / std::abs(overlap);
    for (double mix : {0.25, 0.5, 0.75, 0.9, 1.0}) candidates.emplace_back((1.0 - mix) * mrt + mix * fdir, "tag-mix");
    RandomStream rng(opt.seed, streams::restarts);
    for (int r = 0; r < opt.random_restarts; ++r) {
        cvec v(M);
        for (int m = 0; m < M; ++m) v(m) = rng.complex_normal();
        candidates.emplace_back(v, "random-restart");
    }

    int tried = 0;
    for (const auto& [v, source] : candidates) {
        if (!(v.norm() > 0.0)) continue;
        const Beamformer b = opt.mode == BeamMode::Digital ? Beamformer::digital(v) : project_constant_modulus(v);
        ++tried;
        if (!noma_order_satisfied(ch, b.w)) continue;
        const std::vector<double> uniform = uniform_ordered_split(K);
        if (check_constraints(params, ch, b.w, uniform, p_t).ok()) return WsrInitialization{b, PowerAllocation(uniform, p_t), source};
        const SlackAllocation sa = max_slack_allocation(params, ch, b.w, p_t, opt.tolerances);
        if (sa.rho) return WsrInitialization{b, PowerAllocation(*sa.rho, p_t), source + "+max-headroom-split"};
    }
    // Last resort: the power-minimization relaxation with the cap set to p_t.
    // Any precoder it certifies at p <= p_t stays feasible at p_t, since every
    // SINR and the harvested power grow with the transmit power.
    SystemParams capped = params;
    capped.max_power = p_t;
    RandomStream srng(opt.seed, streams::randomization);
    for (const auto& rho : tpmin_split_candidates(K)) {
        const SdrProblem sp = build_sdr(capped, ch, rho);
        const SdrSolution sol = solve_sdr(sp, opt.tolerances);
        if (sol.status != conic::SolveStatus::Optimal) continue;
        try {
            const SdrStepResult st = extract_precoder(capped, ch, rho, sp, sol, srng);
            const Beamformer b = opt.mode == BeamMode::Digital ? st.w : project_constant_modulus(st.w.w);
            ++tried;
            if (check_constraints(params, ch, b.w, rho, p_t).ok()) return WsrInitialization{b, PowerAllocation(rho, p_t), "relaxation"};
            if (!noma_order_satisfied(ch, b.w)) continue;
            const SlackAllocation sa = max_slack_allocation(params, ch, b.w, p_t, opt.tolerances);
            if (sa.rho) return WsrInitialization{b, PowerAllocation(*sa.rho, p_t), "relaxation+max-headroom-split"};
        } catch (const RandomizationFailed&) {
        }
    }
    if (diagnostics) *diagnostics = "no feasible start among " + std::to_string(tried) + " candidate beamformers";
    return std::nullopt;
}

inline std::vector<double> device_sinrs(const SystemParams& params, const ChannelSet& ch, const cvec& w,
                                        const PowerAllocation& alloc) {
    const RateReport r = evaluate(params, ch, w, alloc);
    std::vector<double> s{r.tag_avg_sinr};
    s.insert(s.end(), r.user_sinr.begin(), r.user_sinr.end());
    return s;
}

/// Alternating optimization of beamformer and power split at fixed p_t.
inline WsrResult solve_wsrmax(const SystemParams& params, const ChannelSet& ch, double p_t, const WsrOptions& opt = {},
                              const std::optional<WsrInitialization>& init = std::nullopt) {
    params.validate();
    WsrResult res;
    std::optional<WsrInitialization> start = init;
    if (!start) start = initialize_wsrmax(params, ch, p_t, opt, &res.diagnostics);
    if (!start) {
        res.status = WsrStatus::Infeasible;
        return res;
    }
    if (!check_constraints(params, ch, start->w.w, start->alloc.rho, p_t).ok()) {
        res.status = WsrStatus::Infeasible;
        res.diagnostics = "supplied initialization violates the constraints";
        return res;
    }

    Beamformer w = start->w;
    PowerAllocation alloc = start->alloc;
    double wsr = evaluate(params, ch, w.w, alloc).wsr;
    WsrIterate it;
    it.objective_trace.push_back(wsr);
    res.trace.push_back({0, wsr, device_sinrs(params, ch, w.w, alloc), StepStatus::Accepted, StepStatus::Accepted});
    auto increment = [](double now, double before) { return (now - before) / std::max(std::abs(before), 1e-12); };

    res.status = WsrStatus::MaxIterations;
    for (int outer = 1; outer <= opt.max_outer_iterations; ++outer) {
        const double wsr_start = wsr;
        StepStatus beam_status = StepStatus::Accepted, power_status = StepStatus::Accepted;

        for (int inner = 0; inner < opt.max_inner_iterations; ++inner) {
            it.lambda = update_lambda(params, ch, w.w, alloc);
            it.beta = update_beta(params, ch, w.w, alloc).beta;
            const auto step = beamformer_step(params, ch, alloc, it.beta,
                                              margin_weights(params, it.lambda), w, opt.mode, opt.tolerances);
            double cand = -1.0;
            Beamformer next = w;
            if (step.direction.size() > 0) {
                // The linear margin objective can overshoot; backtrack along the
                // segment to w_prev, which stays inside the convex step region.
                for (double tau = 1.0; tau >= 1.0 / 64.0; tau *= 0.5) {
                    const cvec v = w.w + tau * (step.direction - w.w);
                    if (!(v.norm() > 0.0)) continue;
                    const Beamformer b = opt.mode == BeamMode::Digital ? Beamformer::digital(v) : project_constant_modulus(v);
                    if (!check_constraints(params, ch, b.w, alloc.rho, p_t).ok()) continue;
                    const double value = evaluate(params, ch, b.w, alloc).wsr;
                    if (value > wsr) {
                        cand = value;
                        next = b;
                        break;
                    }
                }
            }
            if (cand < wsr) {
                beam_status = StepStatus::Rejected;
                ++res.rejected_steps;
                break;
            }
            const double inc = increment(cand, wsr);
            w = next;
            wsr = cand;
            it.objective_trace.push_back(wsr);
            if (inc < opt.epsilon) break;
        }

        for (int inner = 0; inner < opt.max_inner_iterations && params.num_users > 1; ++inner) {
            it.y = update_y(params, ch, w.w, alloc);
            it.theta = update_theta(params, ch, w.w, alloc).beta;
            const auto step = power_step(params, ch, w.w, it.theta, margin_weights(params, it.y),
                                         alloc, opt.tolerances);
            double cand = -1.0;
            PowerAllocation next = alloc;
            if (step.solver_status == conic::SolveStatus::Optimal) {
                for (double tau = 1.0; tau >= 1.0 / 64.0; tau *= 0.5) {
                    std::vector<double> rho(alloc.rho.size());
                    for (std::size_t j = 0; j < rho.size(); ++j)
                        rho[j] = alloc.rho[j] + tau * (step.alloc.rho[j] - alloc.rho[j]);
                    rho = repair_split(rho);
                    if (!check_constraints(params, ch, w.w, rho, p_t).ok()) continue;
                    const PowerAllocation a(rho, p_t);
                    const double value = evaluate(params, ch, w.w, a).wsr;
                    if (value > wsr) {
                        cand = value;
                        next = a;
                        break;
                    }
                }
            }
            if (cand < wsr) {
                power_status = StepStatus::Rejected;
                ++res.rejected_steps;
                break;
            }
            const double inc = increment(cand, wsr);
            alloc = next;
            wsr = cand;
            it.objective_trace.push_back(wsr);
            if (inc < opt.epsilon) break;
        }

        res.outer_iterations = outer;
        res.trace.push_back({outer, wsr, device_sinrs(params, ch, w.w, alloc), beam_status, power_status});
        if (increment(wsr, wsr_start) < opt.epsilon) {
            res.status = WsrStatus::Converged;
            break;
        }
    }

    it.w = w;
    it.alloc = alloc;
    res.w = w;
    res.alloc = alloc;
    res.report = evaluate(params, ch, w.w, alloc);
    res.wsr = res.report.wsr;
    res.wsr_exact = res.report.wsr_exact;
    res.iterate = std::move(it);
    return res;
}

}  // namespace symbiotic
