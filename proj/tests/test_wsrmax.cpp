#include <catch_amalgamated.hpp>

#include "symbiotic/channel.hpp"
#include "symbiotic/wsrmax.hpp"

#include <algorithm>
#include <cmath>

using namespace symbiotic;
using Catch::Approx;

namespace {

SystemParams two_user_params(double p_t_dbm) {
    SystemParams p;
    p.num_antennas = 16;
    p.num_users = 2;
    p.reflection_coeff = 0.6;
    p.eh_efficiency = 0.6;
    p.eh_threshold = dbm_to_watts(-20.0);
    p.noise_power = noise_power_watts(LinkBudget{});
    p.sic_quality = {1.0, 1.0};
    p.weights = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    const double mw = dbm_to_watts(p_t_dbm) * 1e3;
    p.rate_thresholds = {std::log2(1.0 + mw / 100.0), std::log2(1.0 + mw), std::log2(1.0 + mw / 10.0)};
    p.max_power = dbm_to_watts(p_t_dbm);
    return p;
}

ChannelSet two_user_channels(std::uint64_t seed, const SystemParams& p) {
    return sample_channels(seed, p, Geometry{{12.0, 12.0}, 1.0, {8.0, 10.0}});
}

}  // namespace

TEST_CASE("fractional-programming updates") {
    const SystemParams p = two_user_params(20.0);
    const ChannelSet ch = two_user_channels(5, p);
    const Beamformer w = weighted_mrt(ch);
    const PowerAllocation alloc({0.3, 0.7}, p.max_power);
    const RateReport r = evaluate(p, ch, w.w, alloc);
    const std::vector<double> sinr{r.tag_avg_sinr / 2.0, r.user_sinr[0], r.user_sinr[1]};

    const BetaUpdate beta = update_beta(p, ch, w.w, alloc);
    const std::vector<double> lambda = update_lambda(p, ch, w.w, alloc);
    const std::vector<double> mu = margin_weights(p, lambda);
    REQUIRE(beta.beta.size() == 3);
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(beta.beta[k] == Approx(sinr[k]).epsilon(1e-12));
        CHECK(lambda[k] == Approx(p.weights[k] / (1.0 + sinr[k])).epsilon(1e-12));
        CHECK(mu[k] == Approx(p.weights[k] * sinr[k] / (1.0 + sinr[k])).epsilon(1e-12));
    }

    // At beta = SINR the Lagrangian equals the weighted sum of ln(1 + SINR),
    // and beta = SINR maximizes it for the matching lambda.
    double expect = 0.0;
    for (std::size_t k = 0; k < 3; ++k) expect += p.weights[k] * std::log1p(sinr[k]);
    const double at = fp_lagrangian(p, beta.beta, lambda, sinr);
    CHECK(at == Approx(expect).epsilon(1e-12));
    for (double f : {0.9, 1.1}) {
        std::vector<double> moved = beta.beta;
        for (double& b : moved) b *= f;
        CHECK(fp_lagrangian(p, moved, lambda, sinr) < at);
    }
    CHECK(update_y(p, ch, w.w, alloc) == lambda);
    CHECK(update_theta(p, ch, w.w, alloc).beta == beta.beta);
}

TEST_CASE("alternating optimization is monotone and feasible") {
    const SystemParams p = two_user_params(20.0);
    int solved = 0, fast = 0;
    for (std::uint64_t t = 0; t < 6; ++t) {
        const ChannelSet ch = two_user_channels(trial_seed(1, t), p);
        WsrOptions opt;
        opt.seed = t;
        const WsrResult r = solve_wsrmax(p, ch, p.max_power, opt);
        if (r.status == WsrStatus::Infeasible) {
            CHECK_FALSE(r.diagnostics.empty());
            continue;
        }
        ++solved;
        CHECK(r.status == WsrStatus::Converged);
        if (r.outer_iterations <= 8) ++fast;
        const auto& trace = r.iterate.objective_trace;
        REQUIRE_FALSE(trace.empty());
        for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] >= trace[i - 1]);
        CHECK(r.wsr == Approx(trace.back()));
        CHECK(r.wsr >= r.trace.front().wsr);
        CHECK(check_constraints(p, ch, r.w.w, r.alloc.rho, p.max_power).ok());
        CHECK(r.wsr == Approx(weighted_sum_rate(p, ch, r.w.w, r.alloc)));
        CHECK(r.wsr_exact >= r.wsr - 1e-12);
        CHECK(r.w.w.norm() == Approx(1.0));
    }
    CHECK(solved >= 4);
    CHECK(fast == solved);
}

TEST_CASE("the converged split is locally optimal for its beamformer") {
    const SystemParams p = two_user_params(20.0);
    const ChannelSet ch = two_user_channels(trial_seed(1, 0), p);
    const WsrResult r = solve_wsrmax(p, ch, p.max_power);
    REQUIRE(r.status == WsrStatus::Converged);
    // Scan the one-dimensional split around the solution with the beamformer held.
    double best = -1.0;
    for (double r1 = 1e-3; r1 < 0.5; r1 += 1e-3) {
        const std::vector<double> rho{r1, 1.0 - r1};
        if (!check_constraints(p, ch, r.w.w, rho, p.max_power).ok()) continue;
        best = std::max(best, weighted_sum_rate(p, ch, r.w.w, PowerAllocation(rho, p.max_power)));
    }
    REQUIRE(best > 0.0);
    CHECK(r.wsr >= best - 1e-3 * best);
}

TEST_CASE("unreachable rate targets are reported as infeasible") {
    SystemParams p = two_user_params(20.0);
    p.rate_thresholds = {1.0, 40.0, 1.0};
    const ChannelSet ch = two_user_channels(3, p);
    WsrOptions opt;
    opt.random_restarts = 2;
    const WsrResult r = solve_wsrmax(p, ch, p.max_power, opt);
    CHECK(r.status == WsrStatus::Infeasible);
    CHECK_FALSE(r.diagnostics.empty());

    // A supplied start that breaks a constraint is refused as well.
    const SystemParams ok = two_user_params(20.0);
    const WsrInitialization bad{weighted_mrt(ch), PowerAllocation({0.3, 0.7}, ok.max_power), "test"};
    SystemParams strict = ok;
    strict.rate_thresholds = {1.0, 40.0, 1.0};
    CHECK(solve_wsrmax(strict, ch, ok.max_power, opt, bad).status == WsrStatus::Infeasible);
}

TEST_CASE("constant-modulus mode keeps unit-modulus entries") {
    const SystemParams p = two_user_params(20.0);
    const ChannelSet ch = two_user_channels(trial_seed(1, 1), p);
    WsrOptions opt;
    opt.mode = BeamMode::ConstantModulus;
    const WsrResult r = solve_wsrmax(p, ch, p.max_power, opt);
    if (r.status != WsrStatus::Infeasible) {
        const double m = 1.0 / std::sqrt(static_cast<double>(p.num_antennas));
        for (Eigen::Index i = 0; i < r.w.w.size(); ++i) CHECK(std::abs(r.w.w(i)) == Approx(m));
        CHECK(check_constraints(p, ch, r.w.w, r.alloc.rho, p.max_power).ok());
        const auto& trace = r.iterate.objective_trace;
        for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] >= trace[i - 1]);
    }
}

TEST_CASE("single user keeps the whole power") {
    SystemParams p;
    p.num_antennas = 8;
    p.num_users = 1;
    p.reflection_coeff = 0.5;
    p.eh_threshold = dbm_to_watts(-20.0);
    p.noise_power = noise_power_watts(LinkBudget{});
    p.sic_quality = {1.0};
    p.weights = {0.5, 0.5};
    p.rate_thresholds = {0.0, 0.0};
    p.max_power = dbm_to_watts(20.0);
    const ChannelSet ch = sample_channels(11, p, Geometry{{10.0}, 1.0, {8.0}});
    const WsrResult r = solve_wsrmax(p, ch, p.max_power);
    REQUIRE(r.status == WsrStatus::Converged);
    CHECK(r.alloc.rho[0] == Approx(1.0));
    CHECK(check_constraints(p, ch, r.w.w, r.alloc.rho, p.max_power).ok());
    CHECK(r.wsr >= r.trace.front().wsr);
    // MRT misses the harvesting target at this size, so the optimum leans toward f.
    CHECK_FALSE(check_constraints(p, ch, weighted_mrt(ch).w, {1.0}, p.max_power).ok());
}

TEST_CASE("results are reproducible for a fixed seed") {
    const SystemParams p = two_user_params(20.0);
    const ChannelSet ch = two_user_channels(trial_seed(1, 2), p);
    WsrOptions opt;
    opt.seed = 9;
    const WsrResult a = solve_wsrmax(p, ch, p.max_power, opt);
    const WsrResult b = solve_wsrmax(p, ch, p.max_power, opt);
    CHECK(a.status == b.status);
    CHECK(a.wsr == b.wsr);
    CHECK(a.w.w == b.w.w);
}
