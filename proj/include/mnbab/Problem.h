#pragma once

#include "mnbab/Network.h"

#include <Eigen/Dense>

#include <optional>
#include <string>

namespace mnbab {

enum class Norm { LINF, L2, L1 };

std::string normName( Norm norm );
Norm parseNorm( const std::string &text );

// Perturbation region: the p-ball of radius epsilon around center,
// intersected with an optional per-dimension clip box.
struct InputRegion
{
    Eigen::VectorXd center;
    double epsilon = 0.0;
    Norm norm = Norm::LINF;
    std::optional<Eigen::VectorXd> clipLower;
    std::optional<Eigen::VectorXd> clipUpper;

    unsigned dim() const
    {
        return center.size();
    }

    // Bounding box of the region (exact for LINF).
    Eigen::VectorXd boxLower() const;
    Eigen::VectorXd boxUpper() const;

    bool hasClip() const
    {
        return clipLower.has_value();
    }

    bool contains( const Eigen::VectorXd &x, double tolerance = 1e-12 ) const;

    // Euclidean-style projection used by the attack: onto the ball, then
    // into the clip box. The result is always inside the region.
    Eigen::VectorXd project( const Eigen::VectorXd &x ) const;
};

struct RobustnessSpec
{
    unsigned label = 0;
    unsigned classes = 0;
};

// Each row is a linear functional over the network outputs; the property
// holds iff rows * y + offsets > 0 for every output y the region can produce.
struct PropertyRows
{
    Eigen::MatrixXd rows;
    Eigen::VectorXd offsets;

    static PropertyRows robustness( const RobustnessSpec &spec );

    unsigned count() const
    {
        return rows.rows();
    }
};

// Appends one affine layer holding the property rows.
Network encodeProperty( const Network &network, const PropertyRows &property );

struct VerificationProblem
{
    // Network with the property already folded into its last layer.
    Network network;
    InputRegion region;

    unsigned numRows() const
    {
        return network.outputDim();
    }
};

VerificationProblem makeProblem( const Network &network, const InputRegion &region, const PropertyRows &property );

} // namespace mnbab
