#include "mnbab/Falsify.h"

#include "mnbab/Lp.h"

#include <random>

namespace mnbab {

namespace {

void recordPhases( const std::vector<Layer> &layers, Eigen::VectorXd &x, std::vector<std::vector<bool>> &phases )
{
    for ( const auto &layer : layers )
    {
        if ( layer.isAffine() )
            x = layer.asAffine().weights * x + layer.asAffine().bias;
        else if ( layer.isRelu() )
        {
            auto &phase = phases[layer.asRelu().id];
            phase.resize( x.size() );
            for ( Eigen::Index j = 0; j < x.size(); ++j )
                phase[j] = x[j] > 0.0;
            x = x.cwiseMax( 0.0 );
        }
        else
        {
            Eigen::VectorXd branch = x;
            recordPhases( layer.asResidual().branch, branch, phases );
            x += branch;
        }
    }
}

} // namespace

double marginAndGradient( const VerificationProblem &problem, const Eigen::VectorXd &x, Eigen::VectorXd *gradient )
{
    std::vector<std::vector<bool>> phases( problem.network.numReluLayers() );
    Eigen::VectorXd y = x;
    recordPhases( problem.network.layers(), y, phases );
    Eigen::Index row = 0;
    double margin = y.minCoeff( &row );
    if ( gradient )
        *gradient = phaseAffine( problem.network, phases ).outM.row( row ).transpose();
    return margin;
}

std::optional<Eigen::VectorXd> pgdAttack( const VerificationProblem &problem, const AttackConfig &config )
{
    const InputRegion &region = problem.region;
    auto confirmed = [&]( const Eigen::VectorXd &x ) {
        return region.contains( x, 1e-12 ) && problem.network.forward( x ).minCoeff() <= 0.0;
    };

    Eigen::VectorXd start = region.project( region.center );
    if ( confirmed( start ) )
        return start;
    if ( !config.enabled || region.epsilon <= 0.0 )
        return std::nullopt;

    std::mt19937_64 rng( config.seed );
    std::uniform_real_distribution<double> unit( -1.0, 1.0 );
    const double eps = region.epsilon;

    for ( unsigned restart = 0; restart < config.restarts; ++restart )
    {
        Eigen::VectorXd x = start;
        if ( restart > 0 )
        {
            for ( Eigen::Index i = 0; i < x.size(); ++i )
                x[i] = region.center[i] + eps * unit( rng );
            x = region.project( x );
        }

        for ( unsigned t = 0; t < config.steps; ++t )
        {
            Eigen::VectorXd g;
            double margin = marginAndGradient( problem, x, &g );
            if ( margin <= 0.0 && confirmed( x ) )
                return x;

            double step = eps * config.stepFraction * ( 1.0 - 0.9 * t / std::max( 1u, config.steps ) );
            switch ( region.norm )
            {
            case Norm::LINF:
                x -= step * g.cwiseSign();
                break;
            case Norm::L2:
                if ( g.norm() > 0.0 )
                    x -= step * g / g.norm();
                break;
            case Norm::L1:
            {
                Eigen::Index k = 0;
                if ( g.cwiseAbs().maxCoeff( &k ) > 0.0 )
                    x[k] -= step * ( g[k] > 0.0 ? 1.0 : -1.0 );
                break;
            }
            }
            x = region.project( x );
        }
        if ( confirmed( x ) )
            return x;
    }
    return std::nullopt;
}

} // namespace mnbab
