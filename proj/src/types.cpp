#include "peer/types.hpp"

#include "peer/error.hpp"

#include <cmath>

namespace peer {

bool all_finite(const Matrix& m)
{
    return m.allFinite();
}

DesignMatrix::DesignMatrix(Matrix values, bool centered)
    : values_(std::move(values)), centered_(centered)
{
    if (values_.rows() < 2 || values_.cols() < 2)
        throw Error(ErrorKind::DimensionMismatch, "design matrix needs n >= 2 and p >= 2");
    if (!all_finite(values_))
        throw Error(ErrorKind::InvalidArgument, "design matrix has non-finite entries");
    if (centered_) {
        for (Index j = 0; j < values_.cols(); ++j) {
            const double scale = values_.col(j).cwiseAbs().maxCoeff();
            if (std::abs(values_.col(j).mean()) > 1e-12 * std::max(scale, 1e-300) && scale > 0)
                throw Error(ErrorKind::InvalidArgument,
                            "column " + std::to_string(j) + " is flagged centered but has nonzero mean");
        }
    }
}

DesignMatrix DesignMatrix::centered_copy(const Matrix& raw)
{
    Matrix c = raw.rowwise() - raw.colwise().mean();
    return DesignMatrix(std::move(c), true);
}

Matrix DesignMatrix::empirical_covariance() const
{
    return values_.transpose() * values_ / static_cast<double>(n());
}

std::string_view to_string(PenaltyKind kind)
{
    switch (kind) {
    case PenaltyKind::Identity: return "identity";
    case PenaltyKind::Derivative: return "derivative";
    case PenaltyKind::Projection: return "projection";
    case PenaltyKind::Multispace: return "multispace";
    case PenaltyKind::Goutis: return "goutis";
    case PenaltyKind::Stein: return "stein";
    case PenaltyKind::Custom: return "custom";
    }
    return "custom";
}

PenaltyOperator::PenaltyOperator(Matrix values, PenaltyKind kind, std::optional<Index> nullspace_dim_hint)
    : values_(std::move(values)), kind_(kind), null_hint_(nullspace_dim_hint)
{
    if (values_.rows() < 1 || values_.cols() < 1)
        throw Error(ErrorKind::DimensionMismatch, "penalty operator is empty");
    if (!all_finite(values_))
        throw Error(ErrorKind::InvalidArgument, "penalty operator has non-finite entries");
}

PenaltyOperator PenaltyOperator::scaled(double s) const
{
    PenaltyOperator out(values_ * s, kind_, null_hint_);
    if (structure_ && s != 0.0) {
        out.structure_ = PenaltyStructure{structure_->pseudo_inverse / s, structure_->null_basis};
    }
    return out;
}

}  // namespace peer
