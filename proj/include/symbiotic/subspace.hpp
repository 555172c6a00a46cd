#pragma once

#include "symbiotic/model.hpp"

#include <Eigen/QR>

namespace symbiotic {

/// Orthonormal basis B (M x d) of span{h_1, ..., h_K, f}.
///
/// Every constraint and objective of both designs depends on w only through
/// h_k^H w and f^H w, and the power / norm terms only shrink when w is
/// projected onto this span. Both optimizations can therefore be carried out
/// in the d <= K+1 dimensional coordinates u with w = B u without loss.
inline cmat channel_span_basis(const ChannelSet& ch, double rel_tol = 1e-10) {
    const int K = ch.num_users();
    const int M = ch.num_antennas();
    cmat V(M, K + 1);
    for (int k = 1; k <= K; ++k) V.col(k - 1) = ch.h(k) / std::max(ch.h(k).norm(), 1e-300);
    V.col(K) = ch.f() / std::max(ch.f().norm(), 1e-300);
    Eigen::ColPivHouseholderQR<cmat> qr(V);
    qr.setThreshold(rel_tol);
    const Eigen::Index rank = std::max<Eigen::Index>(qr.rank(), 1);
    cmat B = qr.householderQ() * cmat::Identity(M, rank);
    return B;
}

}  // namespace symbiotic
