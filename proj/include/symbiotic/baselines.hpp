#pragma once

#include "symbiotic/model.hpp"
#include "symbiotic/rng.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace symbiotic {

struct OrderingUnsatisfiable : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Entrywise phase projection onto the constant-modulus set, |w_m| = 1/sqrt(M).
inline Beamformer project_constant_modulus(const cvec& w) {
    if (w.size() == 0 || w.norm() == 0.0) throw InvalidInput("cannot project a zero beamformer");
    const double mag = 1.0 / std::sqrt(static_cast<double>(w.size()));
    cvec out(w.size());
    for (Eigen::Index m = 0; m < w.size(); ++m) {
        // Zero entries carry no phase information; they keep phase 0.
        const double phase = w(m) == cplx(0.0, 0.0) ? 0.0 : std::arg(w(m));
        out(m) = std::polar(mag, phase);
    }
    return Beamformer(out, BeamMode::ConstantModulus);
}

/// Normalized sum of the unit-norm user directions, sum_k h_k / (K ||h_k||).
inline Beamformer weighted_mrt(const ChannelSet& ch) {
    const int K = ch.num_users();
    cvec v = cvec::Zero(ch.num_antennas());
    for (int k = 1; k <= K; ++k) v += ch.h(k) / (static_cast<double>(K) * ch.h(k).norm());
    return Beamformer::digital(v);
}

/// Complex Gaussian direction, redrawn until the NOMA order holds.
inline Beamformer random_beamformer(std::uint64_t seed, const ChannelSet& ch, BeamMode mode = BeamMode::Digital,
                                    int max_draws = 10000) {
    RandomStream rng(seed, streams::random_beam);
    const int M = ch.num_antennas();
    for (int draw = 0; draw < max_draws; ++draw) {
        cvec v(M);
        for (int m = 0; m < M; ++m) v(m) = rng.complex_normal();
        const Beamformer b = mode == BeamMode::Digital ? Beamformer::digital(v) : project_constant_modulus(v);
        if (noma_order_satisfied(ch, b.w)) return b;
    }
    throw OrderingUnsatisfiable("no random beamformer satisfied the NOMA order within the draw cap");
}

/// Fixed NOMA split used with the baseline beamformers: rho_1 = 0.3 for two
/// users, otherwise fractions proportional to the user index.
inline std::vector<double> baseline_split(int num_users, double rho1 = 0.3) {
    if (num_users == 1) return {1.0};
    if (num_users == 2) return {rho1, 1.0 - rho1};
    std::vector<double> rho;
    const double total = num_users * (num_users + 1) / 2.0;
    for (int k = 1; k <= num_users; ++k) rho.push_back(k / total);
    return rho;
}

}  // namespace symbiotic
