#include "mnbab/Network.h"

#include "mnbab/Error.h"

#include <cmath>
#include <string>

namespace mnbab {

Layer Layer::affine( Eigen::MatrixXd weights, Eigen::VectorXd bias )
{
    return Layer{ AffineLayer{ std::move( weights ), std::move( bias ), std::nullopt } };
}

Layer Layer::relu( unsigned width )
{
    return Layer{ ReluLayer{ width, 0 } };
}

Layer Layer::residual( std::vector<Layer> branch )
{
    return Layer{ ResidualLayer{ std::move( branch ) } };
}

struct Network::Impl
{
    unsigned inputDim = 0;
    unsigned outputDim = 0;
    std::vector<Layer> layers;
    std::vector<ReluSite> sites;
    std::vector<FlatLayer> flat;
    unsigned parameterCount = 0;
};

namespace {

struct Builder
{
    std::vector<ReluSite> sites;
    std::vector<FlatLayer> flat;
    unsigned parameterCount = 0;

    unsigned walk( std::vector<Layer> &layers,
                   unsigned width,
                   std::vector<const Layer *> &prefix,
                   const std::string &path )
    {
        for ( unsigned i = 0; i < layers.size(); ++i )
        {
            Layer &layer = layers[i];
            std::string name = path + "layer " + std::to_string( i );

            if ( auto *affine = std::get_if<AffineLayer>( &layer.op ) )
            {
                if ( affine->weights.cols() != static_cast<Eigen::Index>( width ) )
                    throw Error( Error::DIMENSION_MISMATCH,
                                 name + ": weight matrix has " +
                                     std::to_string( affine->weights.cols() ) +
                                     " columns but the incoming width is " + std::to_string( width ) );
                if ( affine->bias.size() != affine->weights.rows() )
                    throw Error( Error::DIMENSION_MISMATCH,
                                 name + ": bias length " + std::to_string( affine->bias.size() ) +
                                     " does not match " + std::to_string( affine->weights.rows() ) +
                                     " output rows" );
                if ( !affine->weights.allFinite() || !affine->bias.allFinite() )
                    throw Error( Error::NON_FINITE_WEIGHT, name + ": non-finite weight or bias" );

                width = affine->weights.rows();
                parameterCount += affine->weights.size() + affine->bias.size();

                FlatLayer entry;
                entry.width = width;
                entry.weightCount = affine->weights.size();
                if ( affine->conv )
                {
                    entry.kind = FlatLayer::CONV;
                    entry.kernelSize = std::max( affine->conv->shape.kernelHeight,
                                                 affine->conv->shape.kernelWidth );
                }
                else
                    entry.kind = FlatLayer::LINEAR;
                flat.push_back( entry );
            }
            else if ( auto *relu = std::get_if<ReluLayer>( &layer.op ) )
            {
                if ( i == 0 || layers[i - 1].isRelu() )
                    throw Error( Error::DIMENSION_MISMATCH,
                                 name + ": a ReLU must directly follow an affine or residual layer" );
                if ( relu->width == 0 )
                    relu->width = width;
                if ( relu->width != width )
                    throw Error( Error::DIMENSION_MISMATCH,
                                 name + ": ReLU width " + std::to_string( relu->width ) +
                                     " does not match incoming width " + std::to_string( width ) );

                relu->id = sites.size();
                ReluSite site;
                site.width = width;
                site.prefix = prefix;
                site.flatIndex = flat.size();
                sites.push_back( std::move( site ) );

                FlatLayer entry;
                entry.kind = FlatLayer::RELU;
                entry.width = width;
                entry.reluId = relu->id;
                flat.push_back( entry );
            }
            else
            {
                auto &residual = std::get<ResidualLayer>( layer.op );
                if ( residual.branch.empty() )
                    throw Error( Error::DIMENSION_MISMATCH, name + ": empty residual branch" );

                std::vector<const Layer *> inner = prefix;
                unsigned branchWidth = walk( residual.branch, width, inner, name + ".branch " );
                if ( branchWidth != width )
                    throw Error( Error::DIMENSION_MISMATCH,
                                 name + ": residual branch maps width " + std::to_string( width ) +
                                     " to " + std::to_string( branchWidth ) );

                FlatLayer entry;
                entry.kind = FlatLayer::ADD;
                entry.width = width;
                flat.push_back( entry );
            }

            prefix.push_back( &layer );
        }
        return width;
    }
};

} // namespace

Network::Network( unsigned inputDim, std::vector<Layer> layers )
{
    if ( inputDim == 0 )
        throw Error( Error::DIMENSION_MISMATCH, "network input dimension must be positive" );

    auto impl = std::make_shared<Impl>();
    impl->inputDim = inputDim;
    impl->layers = std::move( layers );

    Builder builder;
    FlatLayer input;
    input.kind = FlatLayer::INPUT;
    input.width = inputDim;
    builder.flat.push_back( input );

    std::vector<const Layer *> prefix;
    impl->outputDim = builder.walk( impl->layers, inputDim, prefix, "" );
    impl->sites = std::move( builder.sites );
    impl->flat = std::move( builder.flat );
    impl->parameterCount = builder.parameterCount;
    _impl = std::move( impl );
}

unsigned Network::inputDim() const
{
    return _impl->inputDim;
}

unsigned Network::outputDim() const
{
    return _impl->outputDim;
}

const std::vector<Layer> &Network::layers() const
{
    return _impl->layers;
}

unsigned Network::numReluLayers() const
{
    return _impl->sites.size();
}

const ReluSite &Network::reluSite( unsigned id ) const
{
    return _impl->sites.at( id );
}

std::vector<const Layer *> Network::chain() const
{
    std::vector<const Layer *> result;
    for ( const auto &layer : _impl->layers )
        result.push_back( &layer );
    return result;
}

const std::vector<FlatLayer> &Network::flatLayers() const
{
    return _impl->flat;
}

unsigned Network::numParameters() const
{
    return _impl->parameterCount;
}

Eigen::VectorXd Network::forward( const Eigen::VectorXd &x ) const
{
    if ( x.size() != static_cast<Eigen::Index>( _impl->inputDim ) )
        throw Error( Error::DIMENSION_MISMATCH,
                     "input has " + std::to_string( x.size() ) + " entries, network expects " +
                         std::to_string( _impl->inputDim ) );
    return forwardLayers( _impl->layers, x );
}

unsigned outputWidth( const std::vector<Layer> &layers, unsigned inputWidth )
{
    unsigned width = inputWidth;
    for ( const auto &layer : layers )
        if ( layer.isAffine() )
            width = layer.asAffine().weights.rows();
    return width;
}

Eigen::VectorXd forwardLayers( const std::vector<Layer> &layers, const Eigen::VectorXd &x )
{
    Eigen::VectorXd value = x;
    for ( const auto &layer : layers )
    {
        if ( layer.isAffine() )
        {
            const auto &affine = layer.asAffine();
            value = affine.weights * value + affine.bias;
        }
        else if ( layer.isRelu() )
            value = value.cwiseMax( 0.0 );
        else
            value = value + forwardLayers( layer.asResidual().branch, value );
    }
    return value;
}

AffineLayer materializeConv( const ConvDescriptor &conv )
{
    const ConvShape &s = conv.shape;
    if ( s.stride == 0 || s.kernelHeight == 0 || s.kernelWidth == 0 ||
         s.inHeight + 2 * s.padding < s.kernelHeight || s.inWidth + 2 * s.padding < s.kernelWidth )
        throw Error( Error::DIMENSION_MISMATCH, "convolution kernel does not fit the input" );
    if ( conv.kernel.size() != static_cast<size_t>( s.outChannels ) * s.inChannels * s.kernelHeight * s.kernelWidth )
        throw Error( Error::DIMENSION_MISMATCH, "convolution kernel size does not match its shape" );
    if ( conv.bias.size() != s.outChannels )
        throw Error( Error::DIMENSION_MISMATCH, "convolution bias length does not match output channels" );

    const unsigned outH = s.outHeight();
    const unsigned outW = s.outWidth();

    AffineLayer layer;
    layer.weights = Eigen::MatrixXd::Zero( s.outputSize(), s.inputSize() );
    layer.bias = Eigen::VectorXd( s.outputSize() );
    layer.conv = conv;

    for ( unsigned oc = 0; oc < s.outChannels; ++oc )
        for ( unsigned oy = 0; oy < outH; ++oy )
            for ( unsigned ox = 0; ox < outW; ++ox )
            {
                unsigned row = ( oc * outH + oy ) * outW + ox;
                layer.bias[row] = conv.bias[oc];
                for ( unsigned ic = 0; ic < s.inChannels; ++ic )
                    for ( unsigned ky = 0; ky < s.kernelHeight; ++ky )
                        for ( unsigned kx = 0; kx < s.kernelWidth; ++kx )
                        {
                            int iy = static_cast<int>( oy * s.stride + ky ) - static_cast<int>( s.padding );
                            int ix = static_cast<int>( ox * s.stride + kx ) - static_cast<int>( s.padding );
                            if ( iy < 0 || ix < 0 || iy >= static_cast<int>( s.inHeight ) ||
                                 ix >= static_cast<int>( s.inWidth ) )
                                continue;
                            unsigned col = ( ic * s.inHeight + iy ) * s.inWidth + ix;
                            size_t k = ( ( static_cast<size_t>( oc ) * s.inChannels + ic ) * s.kernelHeight + ky ) *
                                           s.kernelWidth +
                                       kx;
                            layer.weights( row, col ) += conv.kernel[k];
                        }
            }

    if ( !layer.weights.allFinite() || !layer.bias.allFinite() )
        throw Error( Error::NON_FINITE_WEIGHT, "non-finite convolution weight or bias" );
    return layer;
}

} // namespace mnbab
