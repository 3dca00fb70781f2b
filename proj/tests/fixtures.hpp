#pragma once

#include "oracles.hpp"

#include "peer/penalties.hpp"

#include <string>

namespace peer::test {

inline constexpr int kPenaltyKindCount = 10;

inline std::string penalty_label(int kind)
{
    static const char* names[] = {"identity",  "first_difference", "second_difference", "shifted_second",
                                  "projection", "projection_b0",    "multispace",        "goutis",
                                  "custom_wide", "custom_tall"};
    return names[kind % kPenaltyKindCount];
}

/// One operator of each kind; every one satisfies the GSVD window for n <= p
/// (null spaces are kept at most min(n, p - n) dimensional).
inline PenaltyOperator random_penalty(int kind, Index n, Index p, Rng& rng)
{
    const Index dmax = std::max<Index>(1, std::min(n, p - n));
    switch (kind % kPenaltyKindCount) {
    case 0: return identity_penalty(p);
    case 1: return derivative_penalty(p, 1);
    case 2: return derivative_penalty(p, 2);
    case 3: return derivative_penalty(p, 2, rng.uniform(0.01, 1.0));
    case 4: {
        const Index d = 1 + static_cast<Index>(rng.uniform() * std::min<Index>(5, p - 1));
        return projection_penalty(orthonormal_projector(rng.gaussian(p, d)), rng.uniform(0.5, 3.0),
                                  rng.uniform(0.1, 2.0));
    }
    case 5: {
        const Index d = std::min<Index>(dmax, 1 + static_cast<Index>(rng.uniform() * 4));
        return projection_penalty(orthonormal_projector(rng.gaussian(p, d)), rng.uniform(0.5, 3.0), 0.0);
    }
    case 6: {
        const Index d = std::min<Index>(dmax, 2);
        const Matrix Q = random_orthonormal(rng, p, p);
        const Matrix P1 = Q.leftCols(p - d - 2) * Q.leftCols(p - d - 2).transpose();
        const Matrix P2 = Q.middleCols(p - d - 2, 2) * Q.middleCols(p - d - 2, 2).transpose();
        return multispace_penalty({P1, P2}, {rng.uniform(0.5, 2.0), rng.uniform(2.0, 4.0)});
    }
    case 7: return goutis_penalty(p);
    case 8: {
        const Index d = std::min<Index>(dmax, 3);
        return PenaltyOperator(rng.gaussian(p - d, p), PenaltyKind::Custom);
    }
    default: return PenaltyOperator(rng.gaussian(p + 3, p), PenaltyKind::Custom);
    }
}

}  // namespace peer::test
