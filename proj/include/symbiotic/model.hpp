#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace symbiotic {

using cvec = Eigen::VectorXcd;
using cmat = Eigen::MatrixXcd;
using cplx = std::complex<double>;

struct InvalidInput : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

/// Scalar network constants. Length-(K+1) vectors put the tag at index 0.
struct SystemParams {
    int num_antennas = 1;
    int num_users = 1;
    double reflection_coeff = 0.5;   // alpha
    double eh_efficiency = 0.6;      // eta_b
    double eh_threshold = 0.0;       // p_b [W]
    double noise_power = 1e-12;      // sigma^2 [W]
    std::vector<double> sic_quality;      // xi_j, j = 1..K (stored 0-based)
    std::vector<double> weights;          // a_0..a_K
    std::vector<double> rate_thresholds;  // R_0^th..R_K^th [bps/Hz]
    double max_power = 1.0;               // p_max [W]

    double xi(int j) const { return sic_quality.at(static_cast<std::size_t>(j - 1)); }
    double residual(int j) const { return 2.0 - 2.0 * xi(j); }
    double weight(int k) const { return weights.at(static_cast<std::size_t>(k)); }
    /// SINR target implied by the rate threshold of device k (0 = tag).
    double sinr_threshold(int k) const {
        return std::exp2(rate_thresholds.at(static_cast<std::size_t>(k))) - 1.0;
    }

    void validate() const {
        const auto K = static_cast<std::size_t>(num_users);
        if (num_antennas < 1 || num_users < 1) throw InvalidInput("num_antennas and num_users must be positive");
        if (!(reflection_coeff > 0.0 && reflection_coeff < 1.0)) throw InvalidInput("reflection_coeff must lie in (0,1)");
        if (!(eh_efficiency > 0.0 && eh_efficiency <= 1.0)) throw InvalidInput("eh_efficiency must lie in (0,1]");
        if (!(eh_threshold >= 0.0)) throw InvalidInput("eh_threshold must be nonnegative");
        if (!(noise_power > 0.0)) throw InvalidInput("noise_power must be positive");
        if (!(max_power > 0.0)) throw InvalidInput("max_power must be positive");
        if (sic_quality.size() != K) throw InvalidInput("sic_quality must have K entries");
        if (weights.size() != K + 1) throw InvalidInput("weights must have K+1 entries");
        if (rate_thresholds.size() != K + 1) throw InvalidInput("rate_thresholds must have K+1 entries");
        for (double x : sic_quality)
            if (!(x >= 0.0 && x <= 1.0)) throw InvalidInput("sic_quality entries must lie in [0,1]");
        for (double a : weights)
            if (!(a >= 0.0)) throw InvalidInput("weights must be nonnegative");
        for (double r : rate_thresholds)
            if (!(r >= 0.0)) throw InvalidInput("rate thresholds must be nonnegative");
        const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
        if (std::abs(total - 1.0) > 1e-12) throw InvalidInput("weights must sum to one");
    }
};

/// One realization of every link. The cascaded channels g_k = f q_k are derived.
class ChannelSet {
public:
    ChannelSet() = default;

    ChannelSet(std::vector<cvec> direct, cvec forward, std::vector<cplx> tag_user)
        : h_(std::move(direct)), f_(std::move(forward)), q_(std::move(tag_user)) {
        if (h_.empty()) throw InvalidInput("ChannelSet needs at least one user");
        if (q_.size() != h_.size()) throw InvalidInput("tag_user must have one entry per user");
        for (const auto& h : h_)
            if (h.size() != f_.size()) throw InvalidInput("direct and forward channels differ in length");
        g_.reserve(q_.size());
        for (const auto& q : q_) g_.push_back(f_ * q);
    }

    int num_users() const { return static_cast<int>(h_.size()); }
    int num_antennas() const { return static_cast<int>(f_.size()); }

    /// Users are addressed 1..K.
    const cvec& h(int k) const { return h_.at(static_cast<std::size_t>(k - 1)); }
    const cvec& g(int k) const { return g_.at(static_cast<std::size_t>(k - 1)); }
    cplx q(int k) const { return q_.at(static_cast<std::size_t>(k - 1)); }
    const cvec& f() const { return f_; }

    const std::vector<cvec>& direct() const { return h_; }
    const std::vector<cplx>& tag_user() const { return q_; }

    bool cascade_consistent() const {
        for (std::size_t k = 0; k < q_.size(); ++k)
            if (g_[k] != f_ * q_[k]) return false;
        return true;
    }

    /// Channels seen through a linear map w = B u, i.e. h -> B^H h.
    ChannelSet transformed(const cmat& B) const {
        std::vector<cvec> h;
        h.reserve(h_.size());
        for (const auto& x : h_) h.push_back(B.adjoint() * x);
        return ChannelSet(std::move(h), B.adjoint() * f_, q_);
    }

    /// Returns the same links with the users listed in a different order.
    ChannelSet permuted(const std::vector<int>& order) const {
        std::vector<cvec> h;
        std::vector<cplx> q;
        for (int k : order) {
            h.push_back(h_.at(static_cast<std::size_t>(k - 1)));
            q.push_back(q_.at(static_cast<std::size_t>(k - 1)));
        }
        return ChannelSet(std::move(h), f_, std::move(q));
    }

private:
    std::vector<cvec> h_;
    cvec f_;
    std::vector<cplx> q_;
    std::vector<cvec> g_;
};

enum class BeamMode { Digital, ConstantModulus };

inline const char* to_string(BeamMode m) { return m == BeamMode::Digital ? "digital" : "constant-modulus"; }

struct Beamformer {
    cvec w;
    BeamMode mode = BeamMode::Digital;

    Beamformer() = default;
    Beamformer(cvec v, BeamMode m) : w(std::move(v)), mode(m) {
        if (w.size() == 0) throw InvalidInput("empty beamformer");
        if (mode == BeamMode::Digital) {
            if (std::abs(w.squaredNorm() - 1.0) > 1e-9) throw InvalidInput("digital beamformer must have unit norm");
        } else {
            const double target = 1.0 / std::sqrt(static_cast<double>(w.size()));
            for (Eigen::Index m = 0; m < w.size(); ++m)
                if (std::abs(std::abs(w(m)) - target) > 1e-9)
                    throw InvalidInput("constant-modulus beamformer entries must have modulus 1/sqrt(M)");
        }
    }

    static Beamformer digital(const cvec& v) {
        const double n = v.norm();
        if (!(n > 0.0)) throw InvalidInput("cannot normalize a zero beamformer");
        return Beamformer(v / n, BeamMode::Digital);
    }
};

struct PowerAllocation {
    std::vector<double> rho;
    double p_t = 0.0;

    PowerAllocation() = default;
    PowerAllocation(std::vector<double> r, double pt) : rho(std::move(r)), p_t(pt) { validate(); }

    void validate() const {
        if (rho.empty()) throw InvalidInput("power allocation needs at least one user");
        if (!(p_t >= 0.0)) throw InvalidInput("transmit power must be nonnegative");
        double total = 0.0;
        for (std::size_t k = 0; k < rho.size(); ++k) {
            if (!(rho[k] > 0.0 && rho[k] <= 1.0)) throw InvalidInput("power fractions must lie in (0,1]");
            if (k > 0 && rho[k] < rho[k - 1] - 1e-9) throw InvalidInput("power fractions must be nondecreasing");
            total += rho[k];
        }
        if (std::abs(total - 1.0) > 1e-9) throw InvalidInput("power fractions must sum to one");
    }

    double rho_of(int k) const { return rho.at(static_cast<std::size_t>(k - 1)); }
};

struct RateReport {
    std::vector<double> user_sinr;
    std::vector<double> user_rates;
    double tag_avg_sinr = 0.0;
    double tag_rate_exact = 0.0;
    double tag_rate_lb = 0.0;
    double harvested_power = 0.0;
    double wsr = 0.0;        // tag counted with the lower bound
    double wsr_exact = 0.0;  // tag counted with the exact ergodic rate
};

// ---------------------------------------------------------------------------
// Special functions

/// e^x E_1(x) for x > 0, evaluated without overflow for large x.
inline double scaled_exp_integral_e1(double x) {
    if (!(x > 0.0)) throw DomainError("scaled_exp_integral_e1 requires x > 0");
    if (std::isinf(x)) return 0.0;
    if (x <= 1.0) {
        // E_1(x) = -gamma - ln x - sum_{n>=1} (-x)^n / (n n!)
        double term = 1.0;
        double sum = 0.0;
        for (int n = 1; n < 100; ++n) {
            term *= -x / n;
            const double add = term / n;
            sum += add;
            if (std::abs(add) < 1e-17 * std::abs(sum)) break;
        }
        const double e1 = -std::numbers::egamma - std::log(x) - sum;
        return std::exp(x) * e1;
    }
    // Modified Lentz evaluation of the continued fraction
    // E_1(x) = e^{-x} / (x + 1 - 1/(x + 3 - 4/(x + 5 - ...)))
    constexpr double tiny = 1e-300;
    double b = x + 1.0;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 10000; ++i) {
        const double an = -static_cast<double>(i) * i;
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        const double del = c * d;
        h *= del;
        if (std::abs(del - 1.0) < 1e-16) break;
    }
    return h;
}

/// Exponential integral Ei(x) for x < 0.
inline double exp_integral_ei(double x) {
    if (std::isnan(x) || !(x < 0.0)) throw DomainError("exp_integral_ei is only defined here for x < 0");
    if (std::isinf(x)) return -0.0;
    const double z = -x;
    if (z <= 1.0) {
        // Ei(x) = gamma + ln|x| + sum_{n>=1} x^n / (n n!)
        double term = 1.0;
        double sum = 0.0;
        for (int n = 1; n < 100; ++n) {
            term *= x / n;
            const double add = term / n;
            sum += add;
            if (std::abs(add) < 1e-17 * std::abs(sum)) break;
        }
        return std::numbers::egamma + std::log(z) + sum;
    }
    return -std::exp(-z) * scaled_exp_integral_e1(z);
}

inline double rate_from_sinr(double sinr) { return std::log2(1.0 + std::max(sinr, 0.0)); }

/// Ergodic tag rate E[log2(1 + gamma0' |x|^2)] with |x|^2 ~ Exp(1).
inline double tag_rate_exact(double avg_sinr) {
    if (std::isnan(avg_sinr) || avg_sinr < 0.0) throw InvalidInput("tag SINR must be nonnegative");
    if (avg_sinr == 0.0) return 0.0;
    return scaled_exp_integral_e1(1.0 / avg_sinr) * std::numbers::log2e;
}

/// Jensen-type lower bound log2(1 + gamma0'/2).
inline double tag_rate_lb(double avg_sinr) {
    if (std::isnan(avg_sinr) || avg_sinr < 0.0) throw InvalidInput("tag SINR must be nonnegative");
    return std::log2(1.0 + avg_sinr / 2.0);
}

// ---------------------------------------------------------------------------
// Link quantities

/// |h_k^H w|^2, |g_k^H w|^2 and |f^H w|^2 for one beamformer.
struct LinkGains {
    std::vector<double> h2;
    std::vector<double> g2;
    double f2 = 0.0;

    double h(int k) const { return h2[static_cast<std::size_t>(k - 1)]; }
    double g(int k) const { return g2[static_cast<std::size_t>(k - 1)]; }
};

inline void check_dimensions(const SystemParams& params, const ChannelSet& ch, Eigen::Index w_size) {
    if (ch.num_users() != params.num_users) throw InvalidInput("channel set and params disagree on K");
    if (ch.num_antennas() != w_size) throw InvalidInput("beamformer length does not match the channels");
}

inline LinkGains link_gains(const ChannelSet& ch, const cvec& w) {
    if (w.size() != ch.num_antennas()) throw InvalidInput("beamformer length does not match the channels");
    LinkGains out;
    const int K = ch.num_users();
    out.h2.resize(static_cast<std::size_t>(K));
    out.g2.resize(static_cast<std::size_t>(K));
    for (int k = 1; k <= K; ++k) {
        out.h2[static_cast<std::size_t>(k - 1)] = std::norm(ch.h(k).dot(w));
        out.g2[static_cast<std::size_t>(k - 1)] = std::norm(ch.g(k).dot(w));
    }
    out.f2 = std::norm(ch.f().dot(w));
    return out;
}

/// Numerator and denominator of a SINR expression.
struct SinrTerms {
    double numerator = 0.0;
    double denominator = 1.0;
    double value() const { return numerator / denominator; }
};

/// SINR of U_k's signal observed at U_i (i <= k). Users with index < k are
/// treated as interference, users with index > k are cancelled with residual
/// power fraction (2 - 2 xi_j).
inline SinrTerms user_sinr_terms(const SystemParams& params, const LinkGains& gains, const std::vector<double>& rho,
                                 double p_t, int i, int k) {
    const int K = params.num_users;
    if (!(1 <= i && i <= k && k <= K)) throw InvalidInput("user indices must satisfy 1 <= i <= k <= K");
    if (rho.size() != static_cast<std::size_t>(K)) throw InvalidInput("power allocation has the wrong length");
    const double x = gains.h(i);
    double leak = 0.0;
    for (int j = 1; j < k; ++j) leak += rho[static_cast<std::size_t>(j - 1)];
    for (int j = k + 1; j <= K; ++j) leak += rho[static_cast<std::size_t>(j - 1)] * params.residual(j);
    SinrTerms t;
    t.numerator = rho[static_cast<std::size_t>(k - 1)] * p_t * x;
    t.denominator = x * p_t * leak + params.reflection_coeff * p_t * gains.g(i) + params.noise_power;
    return t;
}

/// Terms of the binding decoder for U_k, i.e. argmin over i in {1..k}.
inline SinrTerms user_effective_sinr_terms(const SystemParams& params, const LinkGains& gains,
                                           const std::vector<double>& rho, double p_t, int k) {
    SinrTerms best = user_sinr_terms(params, gains, rho, p_t, k, k);
    for (int i = 1; i < k; ++i) {
        const SinrTerms t = user_sinr_terms(params, gains, rho, p_t, i, k);
        if (t.value() < best.value()) best = t;
    }
    return best;
}

/// Average backscatter SINR gamma0' at U_1.
inline SinrTerms tag_avg_sinr_terms(const SystemParams& params, const ChannelSet& ch, const LinkGains& gains,
                                    const std::vector<double>& rho, double p_t) {
    double residual = 0.0;
    for (int j = 1; j <= params.num_users; ++j) residual += rho[static_cast<std::size_t>(j - 1)] * params.residual(j);
    SinrTerms t;
    t.numerator = params.reflection_coeff * p_t * std::norm(ch.q(1)) * gains.f2;
    t.denominator = gains.h(1) * p_t * residual + params.noise_power;
    return t;
}

/// The SINR that enters the lower-bound tag rate, gamma0 = gamma0' / 2.
inline SinrTerms tag_sinr_lb_terms(const SystemParams& params, const ChannelSet& ch, const LinkGains& gains,
                                   const std::vector<double>& rho, double p_t) {
    SinrTerms t = tag_avg_sinr_terms(params, ch, gains, rho, p_t);
    t.denominator *= 2.0;
    return t;
}

/// Device-k SINR terms as used by the optimizers: k = 0 is the tag (lower-bound SINR).
inline SinrTerms device_sinr_terms(const SystemParams& params, const ChannelSet& ch, const LinkGains& gains,
                                   const std::vector<double>& rho, double p_t, int k) {
    if (k == 0) return tag_sinr_lb_terms(params, ch, gains, rho, p_t);
    return user_effective_sinr_terms(params, gains, rho, p_t, k);
}

// ---------------------------------------------------------------------------
// Public operations on a beamforming vector. The vector carries the direction
// only; transmit power is always alloc.p_t.

inline double user_sinr_cross(const SystemParams& params, const ChannelSet& ch, const cvec& w,
                              const PowerAllocation& alloc, int i, int k) {
    check_dimensions(params, ch, w.size());
    return user_sinr_terms(params, link_gains(ch, w), alloc.rho, alloc.p_t, i, k).value();
}

inline double user_effective_sinr(const SystemParams& params, const ChannelSet& ch, const cvec& w,
                                  const PowerAllocation& alloc, int k) {
    check_dimensions(params, ch, w.size());
    return user_effective_sinr_terms(params, link_gains(ch, w), alloc.rho, alloc.p_t, k).value();
}

inline double user_rate(const SystemParams& params, const ChannelSet& ch, const cvec& w, const PowerAllocation& alloc,
                        int k) {
    return rate_from_sinr(user_effective_sinr(params, ch, w, alloc, k));
}

inline double tag_avg_sinr(const SystemParams& params, const ChannelSet& ch, const cvec& w,
                           const PowerAllocation& alloc) {
    check_dimensions(params, ch, w.size());
    return tag_avg_sinr_terms(params, ch, link_gains(ch, w), alloc.rho, alloc.p_t).value();
}

inline double harvested_power(const SystemParams& params, const ChannelSet& ch, const cvec& w, double p_t) {
    check_dimensions(params, ch, w.size());
    return params.eh_efficiency * (1.0 - params.reflection_coeff) * std::norm(ch.f().dot(w)) * p_t;
}

inline bool gains_ordered(const std::vector<double>& h2, double rel_tol = 1e-12) {
    for (std::size_t k = 0; k + 1 < h2.size(); ++k) {
        const double scale = std::max({h2[k], h2[k + 1], std::numeric_limits<double>::min()});
        if (h2[k] < h2[k + 1] - rel_tol * scale) return false;
    }
    return true;
}

/// |h_1^H w|^2 >= ... >= |h_K^H w|^2, with a relative tolerance of 1e-12.
inline bool noma_order_satisfied(const ChannelSet& ch, const cvec& w) { return gains_ordered(link_gains(ch, w).h2); }

enum class TagRateModel { LowerBound, Exact };

inline RateReport evaluate(const SystemParams& params, const ChannelSet& ch, const cvec& w,
                           const PowerAllocation& alloc) {
    check_dimensions(params, ch, w.size());
    const LinkGains gains = link_gains(ch, w);
    RateReport r;
    const int K = params.num_users;
    for (int k = 1; k <= K; ++k) {
        const double s = user_effective_sinr_terms(params, gains, alloc.rho, alloc.p_t, k).value();
        r.user_sinr.push_back(s);
        r.user_rates.push_back(rate_from_sinr(s));
    }
    r.tag_avg_sinr = tag_avg_sinr_terms(params, ch, gains, alloc.rho, alloc.p_t).value();
    r.tag_rate_exact = tag_rate_exact(r.tag_avg_sinr);
    r.tag_rate_lb = tag_rate_lb(r.tag_avg_sinr);
    r.harvested_power = params.eh_efficiency * (1.0 - params.reflection_coeff) * gains.f2 * alloc.p_t;
    double users = 0.0;
    for (int k = 1; k <= K; ++k) users += params.weight(k) * r.user_rates[static_cast<std::size_t>(k - 1)];
    r.wsr = users + params.weight(0) * r.tag_rate_lb;
    r.wsr_exact = users + params.weight(0) * r.tag_rate_exact;
    return r;
}

inline double weighted_sum_rate(const SystemParams& params, const ChannelSet& ch, const cvec& w,
                                const PowerAllocation& alloc, TagRateModel model = TagRateModel::LowerBound) {
    const RateReport r = evaluate(params, ch, w, alloc);
    return model == TagRateModel::LowerBound ? r.wsr : r.wsr_exact;
}

// ---------------------------------------------------------------------------
// Constraint audit shared by the optimizers and the tests.

struct ConstraintReport {
    bool rates_ok = true;
    bool eh_ok = true;
    bool order_ok = true;
    bool allocation_ok = true;
    bool power_ok = true;
    /// Smallest relative slack over SINR / EH constraints (negative = violated).
    double worst_slack = std::numeric_limits<double>::infinity();

    bool ok() const { return rates_ok && eh_ok && order_ok && allocation_ok && power_ok; }
};

/// Checks every constraint of the joint problem (rate thresholds with the
/// lower-bound tag SINR, energy harvesting, NOMA order, split and power cap)
/// with relative tolerance `tol`.
inline ConstraintReport check_constraints(const SystemParams& params, const ChannelSet& ch, const cvec& w,
                                          const std::vector<double>& rho, double p_t, double tol = 1e-6) {
    check_dimensions(params, ch, w.size());
    ConstraintReport rep;
    const int K = params.num_users;
    const LinkGains gains = link_gains(ch, w);

    double total = 0.0;
    for (std::size_t k = 0; k < rho.size(); ++k) {
        total += rho[k];
        if (!(rho[k] > 0.0)) rep.allocation_ok = false;
        if (k > 0 && rho[k] < rho[k - 1] - tol) rep.allocation_ok = false;
    }
    if (rho.size() != static_cast<std::size_t>(K) || std::abs(total - 1.0) > tol) rep.allocation_ok = false;
    if (!rep.allocation_ok) return rep;

    for (int k = 0; k <= K; ++k) {
        const double target = params.sinr_threshold(k);
        if (target <= 0.0) continue;
        if (k == 0) {
            const double s = tag_sinr_lb_terms(params, ch, gains, rho, p_t).value();
            const double slack = s / target - 1.0;
            rep.worst_slack = std::min(rep.worst_slack, slack);
            if (slack < -tol) rep.rates_ok = false;
        } else {
            for (int i = 1; i <= k; ++i) {
                const double s = user_sinr_terms(params, gains, rho, p_t, i, k).value();
                const double slack = s / target - 1.0;
                rep.worst_slack = std::min(rep.worst_slack, slack);
                if (slack < -tol) rep.rates_ok = false;
            }
        }
    }
    if (params.eh_threshold > 0.0) {
        const double ph = params.eh_efficiency * (1.0 - params.reflection_coeff) * gains.f2 * p_t;
        const double slack = ph / params.eh_threshold - 1.0;
        rep.worst_slack = std::min(rep.worst_slack, slack);
        if (slack < -tol) rep.eh_ok = false;
    }
    rep.order_ok = gains_ordered(gains.h2, tol);
    rep.power_ok = p_t <= params.max_power * (1.0 + tol);
    return rep;
}

}  // namespace symbiotic
