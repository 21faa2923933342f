#include "mnbab/Parameters.h"

#include "mnbab/Error.h"

#include <algorithm>

namespace mnbab {

SplitMatrix SplitMatrix::none( const Network &network )
{
    SplitMatrix splits;
    for ( unsigned i = 0; i < network.numReluLayers(); ++i )
        splits.diag.push_back( Eigen::VectorXi::Zero( network.reluSite( i ).width ) );
    return splits;
}

unsigned SplitMatrix::count() const
{
    unsigned total = 0;
    for ( const auto &layer : diag )
        total += ( layer.array() != 0 ).count();
    return total;
}

MncSet MncSet::empty( const Network &network )
{
    MncSet set;
    for ( unsigned i = 0; i < network.numReluLayers(); ++i )
    {
        unsigned width = network.reluSite( i ).width;
        set.layers.push_back(
            MncLayer{ Eigen::MatrixXd( 0, width ), Eigen::MatrixXd( 0, width ), Eigen::VectorXd( 0 ) } );
    }
    return set;
}

unsigned MncSet::totalCount() const
{
    unsigned total = 0;
    for ( const auto &layer : layers )
        total += layer.count();
    return total;
}

ParamLayout ParamLayout::build( const NeuronBounds &bounds, const SplitMatrix &splits, const MncSet &mnc )
{
    ParamLayout layout;
    layout.layers.resize( bounds.size() );
    for ( unsigned i = 0; i < bounds.size(); ++i )
    {
        LayerLayout &layer = layout.layers[i];
        for ( unsigned j = 0; j < bounds[i].lower.size(); ++j )
        {
            if ( splits.isSplit( i, j ) )
                layer.splitNeurons.push_back( j );
            else if ( bounds[i].isUnstable( j ) )
                layer.slopeNeurons.push_back( j );
        }
        layer.constraintCount = i < mnc.layers.size() ? mnc.layers[i].count() : 0;
    }
    return layout;
}

unsigned ParamLayout::size() const
{
    unsigned total = 0;
    for ( const auto &layer : layers )
        total += layer.slopeNeurons.size() + layer.splitNeurons.size() + layer.constraintCount;
    return total;
}

namespace {

double defaultSlope( const LayerBounds &bounds, unsigned j )
{
    return bounds.upper[j] >= -bounds.lower[j] ? 1.0 : 0.0;
}

} // namespace

DualParameters DualParameters::zeros( const ParamLayout &layout )
{
    DualParameters params;
    params.layout = layout;
    for ( const auto &layer : layout.layers )
        params.layers.push_back( LayerParams{ Eigen::VectorXd::Zero( layer.slopeNeurons.size() ),
                                              Eigen::VectorXd::Zero( layer.splitNeurons.size() ),
                                              Eigen::VectorXd::Zero( layer.constraintCount ) } );
    return params;
}

DualParameters DualParameters::initial( const ParamLayout &layout, const NeuronBounds &bounds )
{
    DualParameters params = zeros( layout );
    for ( unsigned i = 0; i < layout.layers.size(); ++i )
    {
        const auto &slopes = layout.layers[i].slopeNeurons;
        for ( unsigned k = 0; k < slopes.size(); ++k )
            params.layers[i].alpha[k] = defaultSlope( bounds[i], slopes[k] );
    }
    return params;
}

DualParameters DualParameters::remapped( const ParamLayout &target, const NeuronBounds &bounds, double betaInit ) const
{
    DualParameters params = initial( target, bounds );
    for ( unsigned i = 0; i < target.layers.size(); ++i )
    {
        const LayerLayout &to = target.layers[i];
        LayerParams &out = params.layers[i];

        for ( unsigned k = 0; k < to.splitNeurons.size(); ++k )
            out.beta[k] = betaInit;

        if ( i >= layout.layers.size() )
            continue;
        const LayerLayout &from = layout.layers[i];
        const LayerParams &in = layers[i];

        for ( unsigned k = 0; k < to.slopeNeurons.size(); ++k )
        {
            auto it = std::lower_bound( from.slopeNeurons.begin(), from.slopeNeurons.end(), to.slopeNeurons[k] );
            if ( it != from.slopeNeurons.end() && *it == to.slopeNeurons[k] )
                out.alpha[k] = in.alpha[it - from.slopeNeurons.begin()];
        }
        for ( unsigned k = 0; k < to.splitNeurons.size(); ++k )
        {
            auto it = std::lower_bound( from.splitNeurons.begin(), from.splitNeurons.end(), to.splitNeurons[k] );
            if ( it != from.splitNeurons.end() && *it == to.splitNeurons[k] )
                out.beta[k] = in.beta[it - from.splitNeurons.begin()];
        }
        if ( to.constraintCount == from.constraintCount )
            out.gamma = in.gamma;
    }
    return params;
}

Eigen::VectorXd DualParameters::flatten() const
{
    Eigen::VectorXd flat( layout.size() );
    Eigen::Index offset = 0;
    for ( const auto &layer : layers )
    {
        flat.segment( offset, layer.alpha.size() ) = layer.alpha;
        offset += layer.alpha.size();
        flat.segment( offset, layer.beta.size() ) = layer.beta;
        offset += layer.beta.size();
        flat.segment( offset, layer.gamma.size() ) = layer.gamma;
        offset += layer.gamma.size();
    }
    return flat;
}

void DualParameters::assign( const Eigen::VectorXd &flat )
{
    if ( flat.size() != static_cast<Eigen::Index>( layout.size() ) )
        throw Error( Error::PARAMETER_DOMAIN, "parameter vector has the wrong length" );
    Eigen::Index offset = 0;
    for ( auto &layer : layers )
    {
        layer.alpha = flat.segment( offset, layer.alpha.size() );
        offset += layer.alpha.size();
        layer.beta = flat.segment( offset, layer.beta.size() );
        offset += layer.beta.size();
        layer.gamma = flat.segment( offset, layer.gamma.size() );
        offset += layer.gamma.size();
    }
}

void DualParameters::project()
{
    for ( auto &layer : layers )
    {
        layer.alpha = layer.alpha.cwiseMax( 0.0 ).cwiseMin( 1.0 );
        layer.beta = layer.beta.cwiseMax( 0.0 );
        layer.gamma = layer.gamma.cwiseMax( 0.0 );
    }
}

bool DualParameters::inDomain() const
{
    for ( const auto &layer : layers )
    {
        if ( ( layer.alpha.array() < 0.0 ).any() || ( layer.alpha.array() > 1.0 ).any() || !layer.alpha.allFinite() )
            return false;
        if ( ( layer.beta.array() < 0.0 ).any() || !layer.beta.allFinite() )
            return false;
        if ( ( layer.gamma.array() < 0.0 ).any() || !layer.gamma.allFinite() )
            return false;
    }
    return true;
}

} // namespace mnbab
