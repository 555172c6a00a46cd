#pragma once

#include "symbiotic/model.hpp"
#include "symbiotic/rng.hpp"
#include "symbiotic/units.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace symbiotic {

enum class PathLossModel { UmiNlos, UmiLos };

/// 3GPP UMi street-canyon path loss in dB (d in meters, f_c in Hz).
inline double path_loss_db(double d_meters, double f_c, PathLossModel model = PathLossModel::UmiNlos) {
    if (!(d_meters >= 1.0)) throw InvalidInput("path loss model requires d >= 1 m");
    if (!(f_c > 0.0)) throw InvalidInput("carrier frequency must be positive");
    const double fc_ghz = f_c / 1e9;
    switch (model) {
    case PathLossModel::UmiLos:
        return 22.0 * std::log10(d_meters) + 28.0 + 20.0 * std::log10(fc_ghz);
    case PathLossModel::UmiNlos:
    default:
        return 36.7 * std::log10(d_meters) + 22.7 + 26.0 * std::log10(fc_ghz);
    }
}

struct Geometry {
    std::vector<double> d_h;  // BS -> U_k [m]
    double d_f = 5.0;         // BS -> tag [m]
    std::vector<double> d_q;  // tag -> U_k [m]
    double carrier_freq = 3e9;
    PathLossModel model = PathLossModel::UmiNlos;
    double shadowing_std_db = 0.0;

    void validate(int num_users) const {
        if (d_h.size() != static_cast<std::size_t>(num_users) || d_q.size() != static_cast<std::size_t>(num_users))
            throw InvalidInput("geometry needs one BS and one tag distance per user");
        if (!(d_f > 0.0)) throw InvalidInput("distances must be positive");
        for (double d : d_h)
            if (!(d > 0.0)) throw InvalidInput("distances must be positive");
        for (double d : d_q)
            if (!(d > 0.0)) throw InvalidInput("distances must be positive");
        if (!(carrier_freq > 0.0)) throw InvalidInput("carrier frequency must be positive");
        if (!(shadowing_std_db >= 0.0)) throw InvalidInput("shadowing deviation must be nonnegative");
    }
};

struct LinkBudget {
    double noise_psd_dbm_hz = -174.0;
    double bandwidth_hz = 10e6;
    double noise_figure_db = 10.0;
};

inline double noise_power_dbm(const LinkBudget& lb) {
    if (!(lb.bandwidth_hz > 0.0)) throw InvalidInput("bandwidth must be positive");
    return lb.noise_psd_dbm_hz + 10.0 * std::log10(lb.bandwidth_hz) + lb.noise_figure_db;
}

inline double noise_power_watts(const LinkBudget& lb) { return dbm_to_watts(noise_power_dbm(lb)); }

/// Large-scale power gain zeta = 10^(-(PL + shadowing)/10).
inline double large_scale_gain(double d, const Geometry& geo, RandomStream& rng) {
    double loss = path_loss_db(d, geo.carrier_freq, geo.model);
    if (geo.shadowing_std_db > 0.0) loss += geo.shadowing_std_db * rng.normal();
    return db_to_linear(-loss);
}

/// Draws one realization: a = sqrt(zeta) * CN(0, I). Deterministic in the seed.
inline ChannelSet sample_channels(std::uint64_t seed, const SystemParams& params, const Geometry& geo) {
    geo.validate(params.num_users);
    RandomStream rng(seed, streams::channel);
    const int M = params.num_antennas;
    const int K = params.num_users;
    auto draw_vector = [&](double zeta) {
        cvec a(M);
        const double s = std::sqrt(zeta);
        for (int m = 0; m < M; ++m) a(m) = s * rng.complex_normal();
        return a;
    };
    std::vector<cvec> h;
    for (int k = 0; k < K; ++k) h.push_back(draw_vector(large_scale_gain(geo.d_h[static_cast<std::size_t>(k)], geo, rng)));
    cvec f = draw_vector(large_scale_gain(geo.d_f, geo, rng));
    std::vector<cplx> q;
    for (int k = 0; k < K; ++k) {
        const double zeta = large_scale_gain(geo.d_q[static_cast<std::size_t>(k)], geo, rng);
        q.push_back(std::sqrt(zeta) * rng.complex_normal());
    }
    return ChannelSet(std::move(h), std::move(f), std::move(q));
}

}  // namespace symbiotic
