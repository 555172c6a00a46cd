#include <catch_amalgamated.hpp>

#include "symbiotic/baselines.hpp"
#include "symbiotic/channel.hpp"

#include <cmath>

using namespace symbiotic;
using Catch::Approx;

namespace {

ChannelSet channels(std::uint64_t seed, int M, int K) {
    SystemParams p;
    p.num_antennas = M;
    p.num_users = K;
    Geometry geo;
    for (int k = 0; k < K; ++k) {
        geo.d_h.push_back(10.0 + 5.0 * k);
        geo.d_q.push_back(15.0 + 5.0 * k);
    }
    geo.d_f = 1.0;
    return sample_channels(seed, p, geo);
}

}  // namespace

TEST_CASE("constant-modulus projection") {
    cvec v(4);
    v << cplx(1.0, 1.0), cplx(-2.0, 0.0), cplx(0.0, 0.0), cplx(0.0, -0.5);
    const Beamformer b = project_constant_modulus(v);
    for (int m = 0; m < 4; ++m) CHECK(std::abs(b.w(m)) == Approx(0.5));
    CHECK(std::arg(b.w(0)) == Approx(M_PI / 4));
    CHECK(std::abs(std::arg(b.w(1))) == Approx(M_PI));
    CHECK(std::arg(b.w(2)) == Approx(0.0).margin(1e-15));
    CHECK(std::arg(b.w(3)) == Approx(-M_PI / 2));
    CHECK(b.w.norm() == Approx(1.0));
    CHECK_THROWS_AS(project_constant_modulus(cvec::Zero(3)), InvalidInput);
}

TEST_CASE("weighted MRT direction") {
    const ChannelSet ch = channels(3, 4, 2);
    const Beamformer b = weighted_mrt(ch);
    const cvec expect = ch.h(1) / ch.h(1).norm() + ch.h(2) / ch.h(2).norm();
    CHECK(b.w.norm() == Approx(1.0));
    CHECK(std::abs(b.w.dot(expect / expect.norm())) == Approx(1.0));

    const ChannelSet single = channels(4, 4, 1);
    CHECK(std::abs(weighted_mrt(single).w.dot(single.h(1))) == Approx(single.h(1).norm()));
}

TEST_CASE("random beamformer respects the NOMA order and the seed") {
    for (std::uint64_t s = 0; s < 30; ++s) {
        const ChannelSet ch = channels(s, 4, 3);
        const Beamformer a = random_beamformer(s, ch);
        const Beamformer b = random_beamformer(s, ch);
        CHECK(noma_order_satisfied(ch, a.w));
        CHECK(a.w == b.w);
        const Beamformer c = random_beamformer(s, ch, BeamMode::ConstantModulus);
        CHECK(noma_order_satisfied(ch, c.w));
        CHECK(c.mode == BeamMode::ConstantModulus);
    }
}

TEST_CASE("random beamformer fails when the order is impossible") {
    // h_2 = 2 h_1 makes user 2 strictly stronger for every w.
    cvec h(2);
    h << 1.0, cplx(0.0, 1.0);
    const ChannelSet ch({h, 2.0 * h}, h, {0.1, 0.1});
    CHECK_THROWS_AS(random_beamformer(1, ch, BeamMode::Digital, 50), OrderingUnsatisfiable);
}

TEST_CASE("baseline split") {
    CHECK(baseline_split(1) == std::vector<double>{1.0});
    const auto two = baseline_split(2);
    CHECK(two[0] == Approx(0.3));
    CHECK(two[1] == Approx(0.7));
    const auto three = baseline_split(3);
    CHECK(three[0] == Approx(1.0 / 6));
    CHECK(three[2] == Approx(0.5));
    CHECK_NOTHROW(PowerAllocation(three, 1.0));
}
