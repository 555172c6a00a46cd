#pragma once

#include "symbiotic/conic/program.hpp"
#include "symbiotic/conic/solver.hpp"
#include "symbiotic/model.hpp"

#include <algorithm>
#include <optional>
#include <vector>

namespace symbiotic {

inline constexpr double kMinPowerFraction = 1e-6;

/// Removes solver round-off from a power split: positive, nondecreasing,
/// summing to one.
inline std::vector<double> repair_split(std::vector<double> rho) {
    double run = 0.0;
    for (double& r : rho) {
        r = std::max({r, kMinPowerFraction, run});
        run = r;
    }
    double total = 0.0;
    for (double r : rho) total += r;
    for (double& r : rho) r /= total;
    return rho;
}

inline std::vector<double> uniform_ordered_split(int K, double spread = 0.02) {
    std::vector<double> rho;
    for (int k = 1; k <= K; ++k) rho.push_back((1.0 + spread * (k - 0.5 * (K + 1))) / K);
    return repair_split(rho);
}

/// Adds the split constraints sum rho = 1, rho_1 >= rho_min and
/// rho_k <= rho_{k+1} for variables x_0..x_{K-1}.
inline void add_split_constraints(conic::ProgramBuilder& pb, int K) {
    const Eigen::Index n = pb.num_vars();
    Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(n);
    sum.head(K).setOnes();
    pb.add_equality(sum, 1.0);
    Eigen::RowVectorXd first = Eigen::RowVectorXd::Zero(n);
    first(0) = 1.0;
    pb.add_geq(first, kMinPowerFraction);
    for (int k = 0; k + 1 < K; ++k) {
        Eigen::RowVectorXd d = Eigen::RowVectorXd::Zero(n);
        d(k + 1) = 1.0;
        d(k) = -1.0;
        pb.add_geq(d, 0.0);
    }
}

struct SlackAllocation {
    std::optional<std::vector<double>> rho;  // set when the split meets every threshold
    double slack = 0.0;                      // common relative headroom
    conic::SolveStatus status = conic::SolveStatus::NumericalFailure;
};

/// For fixed (w, p_t) every SINR threshold is affine in rho. This LP picks the
/// split that maximizes the smallest headroom s, where every constraint is
/// normalized by its noise term: s is the factor by which the noise could grow
/// (equivalently 1/(1+s) the factor by which p_t could shrink) with all
/// thresholds still met. Energy harvesting enters as a rho-independent cap.
inline SlackAllocation max_slack_allocation(const SystemParams& params, const ChannelSet& ch, const cvec& w,
                                            double p_t, const conic::Tolerances& tol = {}) {
    const int K = params.num_users;
    const LinkGains gains = link_gains(ch, w);
    const double s2 = params.noise_power;
    const double alpha = params.reflection_coeff;
    constexpr double slack_cap = 1e3;

    conic::ProgramBuilder pb(K + 1);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(K + 1);
    c(K) = -1.0;
    pb.set_objective(c);
    add_split_constraints(pb, K);

    for (int k = 1; k <= K; ++k) {
        const double gth = params.sinr_threshold(k);
        if (gth <= 0.0) continue;
        for (int i = 1; i <= k; ++i) {
            const double x = p_t * gains.h(i) / s2;
            Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(K + 1);
            for (int j = 1; j <= K; ++j) {
                if (j == k)
                    row(j - 1) = x / gth;
                else if (j < k)
                    row(j - 1) = -x;
                else
                    row(j - 1) = -x * params.residual(j);
            }
            row(K) = -1.0;
            pb.add_geq(row, 1.0 + alpha * p_t * gains.g(i) / s2);
        }
    }
    const double g0 = params.sinr_threshold(0);
    if (g0 > 0.0) {
        const double x1 = p_t * gains.h(1) / s2;
        Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(K + 1);
        for (int j = 1; j <= K; ++j) row(j - 1) = -x1 * params.residual(j) / 1.0;
        row(K) = -1.0;
        const double signal = alpha * p_t * std::norm(ch.q(1)) * gains.f2 / (2.0 * g0 * s2);
        pb.add_geq(row, 1.0 - signal);
    }
    if (params.eh_threshold > 0.0) {
        Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(K + 1);
        row(K) = 1.0;
        const double ph = params.eh_efficiency * (1.0 - alpha) * gains.f2 * p_t;
        pb.add_leq(row, ph / params.eh_threshold - 1.0);
    }
    Eigen::RowVectorXd cap = Eigen::RowVectorXd::Zero(K + 1);
    cap(K) = 1.0;
    pb.add_leq(cap, slack_cap);

    SlackAllocation out;
    const auto sol = conic::solve(pb.build(), tol);
    out.status = sol.status;
    if (sol.status != conic::SolveStatus::Optimal) return out;
    out.slack = sol.x(K);
    std::vector<double> rho(sol.x.data(), sol.x.data() + K);
    rho = repair_split(rho);
    if (check_constraints(params, ch, w, rho, p_t).ok()) out.rho = rho;
    return out;
}

}  // namespace symbiotic
