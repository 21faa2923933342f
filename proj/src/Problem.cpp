#include "mnbab/Problem.h"

#include "mnbab/Error.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace mnbab {

std::string normName( Norm norm )
{
    switch ( norm )
    {
    case Norm::LINF:
        return "inf";
    case Norm::L2:
        return "2";
    case Norm::L1:
        return "1";
    }
    return "inf";
}

Norm parseNorm( const std::string &text )
{
    if ( text == "inf" || text == "Inf" || text == "linf" )
        return Norm::LINF;
    if ( text == "2" || text == "l2" )
        return Norm::L2;
    if ( text == "1" || text == "l1" )
        return Norm::L1;
    throw Error( Error::PARSE_ERROR, "unknown norm '" + text + "' (expected inf, 2 or 1)" );
}

Eigen::VectorXd InputRegion::boxLower() const
{
    Eigen::VectorXd lower = center.array() - epsilon;
    if ( clipLower )
        lower = lower.cwiseMax( *clipLower );
    return lower;
}

Eigen::VectorXd InputRegion::boxUpper() const
{
    Eigen::VectorXd upper = center.array() + epsilon;
    if ( clipUpper )
        upper = upper.cwiseMin( *clipUpper );
    return upper;
}

bool InputRegion::contains( const Eigen::VectorXd &x, double tolerance ) const
{
    if ( x.size() != center.size() )
        return false;
    Eigen::VectorXd delta = x - center;
    double distance = 0.0;
    switch ( norm )
    {
    case Norm::LINF:
        distance = delta.lpNorm<Eigen::Infinity>();
        break;
    case Norm::L2:
        distance = delta.norm();
        break;
    case Norm::L1:
        distance = delta.lpNorm<1>();
        break;
    }
    if ( distance > epsilon + tolerance )
        return false;
    if ( clipLower && ( ( x - *clipLower ).array() < -tolerance ).any() )
        return false;
    if ( clipUpper && ( ( *clipUpper - x ).array() < -tolerance ).any() )
        return false;
    return true;
}

namespace {

// Projection of v onto the l1 ball of the given radius (sort-based).
Eigen::VectorXd projectL1( const Eigen::VectorXd &v, double radius )
{
    if ( v.lpNorm<1>() <= radius )
        return v;
    if ( radius <= 0.0 )
        return Eigen::VectorXd::Zero( v.size() );

    std::vector<double> magnitudes( v.size() );
    for ( Eigen::Index i = 0; i < v.size(); ++i )
        magnitudes[i] = std::abs( v[i] );
    std::sort( magnitudes.begin(), magnitudes.end(), std::greater<double>() );

    double cumulative = 0.0;
    double threshold = 0.0;
    for ( size_t k = 0; k < magnitudes.size(); ++k )
    {
        cumulative += magnitudes[k];
        double candidate = ( cumulative - radius ) / static_cast<double>( k + 1 );
        if ( magnitudes[k] > candidate )
            threshold = candidate;
    }

    Eigen::VectorXd result( v.size() );
    for ( Eigen::Index i = 0; i < v.size(); ++i )
        result[i] = std::copysign( std::max( std::abs( v[i] ) - threshold, 0.0 ), v[i] );
    return result;
}

} // namespace

Eigen::VectorXd InputRegion::project( const Eigen::VectorXd &x ) const
{
    Eigen::VectorXd delta = x - center;
    switch ( norm )
    {
    case Norm::LINF:
        delta = delta.cwiseMax( -epsilon ).cwiseMin( epsilon );
        break;
    case Norm::L2:
    {
        double length = delta.norm();
        if ( length > epsilon )
            delta *= epsilon / length;
        break;
    }
    case Norm::L1:
        delta = projectL1( delta, epsilon );
        break;
    }

    // Clamping towards a box that contains the center never increases any
    // coordinate distance, so the point stays inside the ball.
    Eigen::VectorXd result = center + delta;
    if ( clipLower )
        result = result.cwiseMax( *clipLower );
    if ( clipUpper )
        result = result.cwiseMin( *clipUpper );
    return result;
}

PropertyRows PropertyRows::robustness( const RobustnessSpec &spec )
{
    if ( spec.classes < 2 || spec.label >= spec.classes )
        throw Error( Error::DIMENSION_MISMATCH, "robustness label must index one of at least two classes" );

    PropertyRows property;
    property.rows = Eigen::MatrixXd::Zero( spec.classes - 1, spec.classes );
    property.offsets = Eigen::VectorXd::Zero( spec.classes - 1 );
    unsigned row = 0;
    for ( unsigned j = 0; j < spec.classes; ++j )
    {
        if ( j == spec.label )
            continue;
        property.rows( row, spec.label ) = 1.0;
        property.rows( row, j ) = -1.0;
        ++row;
    }
    return property;
}

Network encodeProperty( const Network &network, const PropertyRows &property )
{
    if ( property.rows.cols() != static_cast<Eigen::Index>( network.outputDim() ) )
        throw Error( Error::DIMENSION_MISMATCH,
                     "property rows have width " + std::to_string( property.rows.cols() ) +
                         " but the network has " + std::to_string( network.outputDim() ) + " outputs" );
    if ( property.offsets.size() != property.rows.rows() )
        throw Error( Error::DIMENSION_MISMATCH, "property offsets do not match the number of rows" );

    std::vector<Layer> layers = network.layers();
    layers.push_back( Layer::affine( property.rows, property.offsets ) );
    return Network( network.inputDim(), std::move( layers ) );
}

VerificationProblem makeProblem( const Network &network, const InputRegion &region, const PropertyRows &property )
{
    if ( region.center.size() != static_cast<Eigen::Index>( network.inputDim() ) )
        throw Error( Error::DIMENSION_MISMATCH, "region center does not match the network input dimension" );
    if ( !( region.epsilon >= 0.0 ) )
        throw Error( Error::PARSE_ERROR, "epsilon must be nonnegative" );
    if ( region.clipLower.has_value() != region.clipUpper.has_value() )
        throw Error( Error::PARSE_ERROR, "clip bounds need both a lower and an upper side" );
    if ( region.clipLower &&
         ( region.clipLower->size() != region.center.size() || region.clipUpper->size() != region.center.size() ) )
        throw Error( Error::DIMENSION_MISMATCH, "clip bounds do not match the input dimension" );

    return VerificationProblem{ encodeProperty( network, property ), region };
}

} // namespace mnbab
