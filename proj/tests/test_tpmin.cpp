#include <catch_amalgamated.hpp>

#include "symbiotic/baselines.hpp"
#include "symbiotic/channel.hpp"
#include "symbiotic/tpmin.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

using namespace symbiotic;
using Catch::Approx;

namespace {

SystemParams three_user_params() {
    SystemParams p;
    p.num_antennas = 16;
    p.num_users = 3;
    p.reflection_coeff = 0.5;
    p.eh_efficiency = 0.6;
    p.eh_threshold = dbm_to_watts(-20.0);
    p.noise_power = noise_power_watts(LinkBudget{});
    p.sic_quality = {1.0, 1.0, 1.0};
    p.weights = {0.25, 0.25, 0.25, 0.25};
    p.rate_thresholds = {0.3, 2.0, 1.0, 0.5};
    p.max_power = dbm_to_watts(40.0);
    return p;
}

ChannelSet three_user_channels(std::uint64_t seed, const SystemParams& p) {
    return sample_channels(seed, p, Geometry{{10.0, 10.0, 10.0}, 1.0, {8.0, 9.0, 10.0}});
}

// Smallest feasible power for a fixed (w, rho), by bisection on a strict audit.
double bisect_min_power(const SystemParams& p, const ChannelSet& ch, const cvec& w, const std::vector<double>& rho) {
    double hi = p.max_power;
    auto ok = [&](double v) { return check_constraints(p, ch, w, rho, v, 1e-12).ok(); };
    if (!ok(hi)) return std::numeric_limits<double>::infinity();
    double lo = hi * 1e-12;
    for (int i = 0; i < 200 && hi - lo > 1e-12 * hi; ++i) {
        const double mid = std::sqrt(lo * hi);
        (ok(mid) ? hi : lo) = mid;
    }
    return hi;
}

}  // namespace

TEST_CASE("single user without tag load reduces to MRT") {
    SystemParams p;
    p.num_antennas = 8;
    p.num_users = 1;
    p.reflection_coeff = 1e-6;
    p.eh_threshold = 0.0;
    p.noise_power = 1e-12;
    p.sic_quality = {1.0};
    p.weights = {0.5, 0.5};
    p.rate_thresholds = {0.0, 2.0};
    p.max_power = 10.0;
    const ChannelSet ch = sample_channels(21, p, Geometry{{10.0}, 1.0, {5.0}});
    const TpminResult r = solve_tpmin(p, ch);
    REQUIRE(r.status != TpminStatus::Infeasible);
    const double gamma = 3.0;
    CHECK(r.p_t == Approx(gamma * p.noise_power / ch.h(1).squaredNorm()).epsilon(1e-4));
    CHECK(std::abs(r.w.w.dot(ch.h(1))) / ch.h(1).norm() == Approx(1.0).epsilon(1e-6));
    CHECK(r.alloc.rho[0] == Approx(1.0));
    for (const auto& a : r.audits) CHECK(a.rank_one);
}

TEST_CASE("relaxation rows agree with the model") {
    const SystemParams p = three_user_params();
    for (std::uint64_t s = 0; s < 5; ++s) {
        const ChannelSet ch = three_user_channels(s, p);
        const cvec w = random_beamformer(s, ch).w;
        const std::vector<double> rho{0.1, 0.3, 0.6};
        const SdrProblem sp = build_sdr(p, ch, rho);
        const auto need = detail::required_power(sp, w);
        const double oracle = bisect_min_power(p, ch, w, rho);
        if (!need || *need > p.max_power) {
            CHECK(std::isinf(oracle));
            continue;
        }
        CHECK(*need == Approx(oracle).epsilon(1e-6));
        CHECK(check_constraints(p, ch, w, rho, *need * (1.0 + 1e-9)).ok());
        CHECK_FALSE(check_constraints(p, ch, w, rho, *need * (1.0 - 1e-6), 1e-12).ok());
    }
}

TEST_CASE("relaxed bound sits below every recovered precoder") {
    const SystemParams p = three_user_params();
    for (std::uint64_t t = 0; t < 3; ++t) {
        const ChannelSet ch = three_user_channels(trial_seed(1, t), p);
        TpminOptions opt;
        opt.seed = t;
        const TpminResult r = solve_tpmin(p, ch, opt);
        REQUIRE(r.status == TpminStatus::Converged);
        REQUIRE_FALSE(r.audits.empty());
        for (const auto& a : r.audits) {
            CHECK(a.sdr_lower_bound <= a.p_t);
            CHECK(a.recheck_ok);
            if (a.rank_one) CHECK(a.p_t == Approx(a.sdr_lower_bound).epsilon(1e-4));
        }
        CHECK(check_constraints(p, ch, r.w.w, r.alloc.rho, r.p_t).ok());
        CHECK(r.p_t <= p.max_power);
        CHECK(r.p_t_dbm == Approx(watts_to_dbm(r.p_t)));
        for (std::size_t i = 1; i < r.trace.size(); ++i) CHECK(r.trace[i].p_t_dbm <= r.trace[i - 1].p_t_dbm + 1e-12);
    }
}

TEST_CASE("relaxation status and extraction") {
    const SystemParams p = three_user_params();
    const ChannelSet ch = three_user_channels(trial_seed(1, 0), p);
    const std::vector<double> rho = tpmin_split_candidates(3).front();
    const SdrProblem sp = build_sdr(p, ch, rho);
    const SdrSolution sol = solve_sdr(sp);
    REQUIRE(sol.status == conic::SolveStatus::Optimal);
    CHECK(sol.W.trace().real() == Approx(sol.objective));
    CHECK(sol.lower_bound <= sol.objective);
    CHECK(sol.lower_bound >= sol.objective * (1.0 - 1e-6));
    Eigen::SelfAdjointEigenSolver<cmat> es(sol.W);
    CHECK(es.eigenvalues().minCoeff() >= -1e-9 * sol.objective);
    // Every row of the relaxation holds at the relaxed optimum.
    const cmat W_hat = sp.basis.adjoint() * sol.W * sp.basis;
    for (std::size_t j = 0; j + 1 < sp.constraints.size(); ++j) {
        const auto& c = sp.constraints[j];
        const double lhs = (c.A * W_hat).trace().real();
        CHECK(lhs >= c.b - 1e-6 * std::max(std::abs(c.b), c.A.norm() * sol.objective));
    }
    RandomStream rng(3, streams::randomization);
    const SdrStepResult st = extract_precoder(p, ch, rho, sp, sol, rng);
    CHECK(st.p_t >= sol.objective * (1.0 - 1e-6));
    CHECK(st.p_t >= sol.lower_bound);
    CHECK(st.w.w.norm() == Approx(1.0));
    CHECK(check_constraints(p, ch, st.w.w, rho, st.p_t).ok());

    // With the cap under the relaxed optimum the relaxation is reported infeasible.
    SystemParams tight = p;
    tight.max_power = sol.objective * 0.5;
    CHECK(solve_sdr(build_sdr(tight, ch, rho)).status == conic::SolveStatus::Unbounded);
    CHECK_THROWS_AS(build_sdr(p, ch, {0.5, 0.5}), InvalidInput);
}

TEST_CASE("power cap below the minimum is infeasible") {
    SystemParams p = three_user_params();
    const ChannelSet ch = three_user_channels(trial_seed(1, 1), p);
    const TpminResult free_run = solve_tpmin(p, ch);
    REQUIRE(free_run.status != TpminStatus::Infeasible);
    p.max_power = free_run.p_t * 0.3;
    const TpminResult capped = solve_tpmin(p, ch);
    CHECK(capped.status == TpminStatus::Infeasible);
    CHECK_FALSE(capped.diagnostics.empty());
}

TEST_CASE("split step") {
    SECTION("single user keeps the full split") {
        SystemParams p;
        p.num_antennas = 4;
        p.num_users = 1;
        p.sic_quality = {1.0};
        p.weights = {0.5, 0.5};
        p.rate_thresholds = {0.0, 1.0};
        const ChannelSet ch = sample_channels(2, p, Geometry{{10.0}, 1.0, {5.0}});
        const RhoStepResult rs = power_allocation_step(p, ch, weighted_mrt(ch).w, 0.1, {1.0});
        REQUIRE(rs.rho);
        CHECK(*rs.rho == std::vector<double>{1.0});
        CHECK(rs.p_t == 0.1);
    }
    SECTION("two users: matches a dense split grid") {
        SystemParams p = three_user_params();
        p.num_users = 2;
        p.sic_quality = {1.0, 1.0};
        p.weights = {1.0 / 3, 1.0 / 3, 1.0 / 3};
        p.rate_thresholds = {0.3, 2.0, 1.0};
        p.eh_threshold = 0.0;
        int checked = 0;
        for (std::uint64_t s = 0; s < 6; ++s) {
            const ChannelSet ch = sample_channels(s, p, Geometry{{10.0, 10.0}, 1.0, {8.0, 9.0}});
            const cvec w = random_beamformer(s, ch).w;
            double grid = std::numeric_limits<double>::infinity();
            std::vector<double> grid_rho;
            for (double r1 = 1e-3; r1 < 0.5; r1 += 1e-3) {
                const double v = bisect_min_power(p, ch, w, {r1, 1.0 - r1});
                if (v < grid) {
                    grid = v;
                    grid_rho = {r1, 1.0 - r1};
                }
            }
            if (!std::isfinite(grid)) continue;
            ++checked;
            // Start from the grid split at a power with some headroom.
            const double p0 = grid * 2.0;
            const RhoStepResult rs = power_allocation_step(p, ch, w, p0, grid_rho);
            REQUIRE(rs.rho);
            CHECK(check_constraints(p, ch, w, *rs.rho, rs.p_t).ok());
            CHECK(rs.p_t <= p0);
            CHECK(rs.p_t >= grid * (1.0 - 1e-2));
            CHECK(rs.p_t <= grid * (1.0 + 1e-2));
        }
        CHECK(checked >= 3);
    }
}
