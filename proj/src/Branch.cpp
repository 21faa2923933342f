#include "mnbab/Branch.h"

#include "mnbab/Error.h"

#include <algorithm>
#include <cmath>

namespace mnbab {

std::string heuristicName( Heuristic heuristic )
{
    return heuristic == Heuristic::ACS ? "acs" : "babsr";
}

Heuristic parseHeuristic( const std::string &text )
{
    if ( text == "acs" )
        return Heuristic::ACS;
    if ( text == "babsr" )
        return Heuristic::BABSR;
    throw Error( Error::CONFIG_ERROR, "unknown branching heuristic '" + text + "'" );
}

namespace {

bool isCandidate( const NeuronBounds &bounds, const SplitMatrix &splits, unsigned i, unsigned j )
{
    return !splits.isSplit( i, j ) && bounds[i].isUnstable( j );
}

} // namespace

BranchingScore acsScore( const DualParameters &params,
                         const MncSet &mnc,
                         const NeuronBounds &bounds,
                         const SplitMatrix &splits )
{
    BranchingScore result;
    for ( unsigned i = 0; i < bounds.size(); ++i )
    {
        const unsigned width = bounds[i].lower.size();
        Eigen::VectorXd score = Eigen::VectorXd::Zero( width );
        const MncLayer &layer = mnc.layers[i];
        if ( layer.count() > 0 && i < params.layers.size() && params.layers[i].gamma.size() == layer.count() )
        {
            const Eigen::VectorXd &gamma = params.layers[i].gamma;
            score = ( layer.post.transpose() * gamma ).cwiseAbs() + ( layer.pre.transpose() * gamma ).cwiseAbs();
        }
        for ( unsigned j = 0; j < width; ++j )
            if ( !isCandidate( bounds, splits, i, j ) )
                score[j] = 0.0;
        result.layers.push_back( std::move( score ) );
    }
    return result;
}

BranchingScore babsrScore( const std::vector<Eigen::VectorXd> &aPrime,
                           const NeuronBounds &bounds,
                           const SplitMatrix &splits )
{
    BranchingScore result;
    for ( unsigned i = 0; i < bounds.size(); ++i )
    {
        const unsigned width = bounds[i].lower.size();
        Eigen::VectorXd score = Eigen::VectorXd::Zero( width );
        for ( unsigned j = 0; j < width; ++j )
        {
            if ( !isCandidate( bounds, splits, i, j ) || i >= aPrime.size() || aPrime[i].size() == 0 )
                continue;
            const double l = bounds[i].lower[j];
            const double u = bounds[i].upper[j];
            const double a = aPrime[i][j];
            if ( a < 0.0 )
                score[j] = -a * u * -l / ( u - l );
            else
                score[j] = 1e-3 * a * std::min( u, -l );
        }
        result.layers.push_back( std::move( score ) );
    }
    return result;
}

SplitCostModel::SplitCostModel( const Network &network, const MncSet &mnc )
{
    const auto &flat = network.flatLayers();
    _reluFlat.resize( network.numReluLayers() );
    double total = 0.0;
    for ( unsigned i = 0; i < flat.size(); ++i )
    {
        const FlatLayer &layer = flat[i];
        double cost = 0.0;
        switch ( layer.kind )
        {
        case FlatLayer::INPUT:
        case FlatLayer::ADD:
            cost = layer.width;
            break;
        case FlatLayer::LINEAR:
            cost = layer.weightCount;
            break;
        case FlatLayer::CONV:
            cost = static_cast<double>( layer.width ) * layer.kernelSize * layer.kernelSize;
            break;
        case FlatLayer::RELU:
        {
            unsigned id = layer.reluId;
            cost = layer.width + ( id < mnc.layers.size() ? mnc.layers[id].count() : 0 );
            _reluFlat[id] = i;
            break;
        }
        }
        _cumulative.push_back( total );
        _layerCosts.push_back( cost );
        _widths.push_back( layer.width );
        total += cost;
    }
}

double SplitCostModel::costAtFlat( unsigned flatIndex ) const
{
    double cost = 0.0;
    for ( unsigned i = flatIndex + 1; i < _widths.size(); ++i )
        cost += 2.0 * _widths[i] * _cumulative[i];
    return _scale * cost;
}

double SplitCostModel::splitCost( unsigned reluLayer ) const
{
    if ( reluLayer >= _reluFlat.size() )
        throw Error( Error::DIMENSION_MISMATCH, "ReLU layer " + std::to_string( reluLayer ) + " does not exist" );
    return costAtFlat( _reluFlat[reluLayer] );
}

void SplitCostModel::scale( double factor )
{
    _scale *= factor;
}

BranchDecision decide( const BranchingScore &scores,
                       const NeuronBounds &bounds,
                       const SplitMatrix &splits,
                       const SplitCostModel *costs )
{
    bool found = false;
    BranchDecision best;
    double bestValue = -1.0;
    for ( unsigned i = 0; i < bounds.size(); ++i )
    {
        const double cost = costs ? costs->splitCost( i ) : 1.0;
        for ( unsigned j = 0; j < bounds[i].lower.size(); ++j )
        {
            if ( !isCandidate( bounds, splits, i, j ) )
                continue;
            double value = scores.layers[i][j] / cost;
            if ( !found || value > bestValue )
            {
                found = true;
                bestValue = value;
                best = BranchDecision{ i, j };
            }
        }
    }
    if ( !found )
        throw Error( Error::NO_BRANCHING_CANDIDATE, "no unstable unsplit neuron left" );
    return best;
}

Subproblem applySplit( const Subproblem &parent, const BranchDecision &decision, int sign )
{
    const unsigned i = decision.layer;
    const unsigned j = decision.neuron;
    if ( i >= parent.splits.diag.size() || j >= parent.splits.diag[i].size() )
        throw Error( Error::DIMENSION_MISMATCH, "split target does not exist" );
    if ( parent.splits.isSplit( i, j ) )
        throw Error( Error::DOUBLE_SPLIT,
                     "neuron " + std::to_string( j ) + " of ReLU layer " + std::to_string( i ) + " is already split" );
    if ( sign != SplitMatrix::POSITIVE && sign != SplitMatrix::NEGATIVE )
        throw Error( Error::PARAMETER_DOMAIN, "split sign must be -1 (positive) or +1 (negative)" );

    Subproblem child = parent;
    child.splits.diag[i][j] = sign;
    if ( i < child.bounds.size() )
    {
        if ( sign == SplitMatrix::POSITIVE )
            child.bounds[i].lower[j] = std::max( child.bounds[i].lower[j], 0.0 );
        else
            child.bounds[i].upper[j] = std::min( child.bounds[i].upper[j], 0.0 );
    }
    child.firstStale = std::min( parent.firstStale, i + 1 );
    child.depth = parent.depth + 1;
    return child;
}

bool fullySplit( const NeuronBounds &bounds, const SplitMatrix &splits )
{
    for ( unsigned i = 0; i < bounds.size(); ++i )
        for ( unsigned j = 0; j < bounds[i].lower.size(); ++j )
            if ( isCandidate( bounds, splits, i, j ) )
                return false;
    return true;
}

} // namespace mnbab
