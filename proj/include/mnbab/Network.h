#pragma once

#include <Eigen/Dense>

#include <memory>
#include <optional>
#include <variant>
#include <vector>

namespace mnbab {

// Geometry of a convolution before it was materialized into a dense
// affine map. Input and output are flattened channel-major (c, y, x).
struct ConvShape
{
    unsigned inChannels = 0;
    unsigned inHeight = 0;
    unsigned inWidth = 0;
    unsigned outChannels = 0;
    unsigned kernelHeight = 0;
    unsigned kernelWidth = 0;
    unsigned stride = 1;
    unsigned padding = 0;

    unsigned outHeight() const
    {
        return ( inHeight + 2 * padding - kernelHeight ) / stride + 1;
    }
    unsigned outWidth() const
    {
        return ( inWidth + 2 * padding - kernelWidth ) / stride + 1;
    }
    unsigned inputSize() const
    {
        return inChannels * inHeight * inWidth;
    }
    unsigned outputSize() const
    {
        return outChannels * outHeight() * outWidth();
    }
};

struct ConvDescriptor
{
    ConvShape shape;
    // [outChannels][inChannels][kernelHeight][kernelWidth], row-major.
    std::vector<double> kernel;
    std::vector<double> bias;
};

struct AffineLayer
{
    Eigen::MatrixXd weights;
    Eigen::VectorXd bias;
    // Set when the layer was materialized from a convolution; kept for the
    // branching cost model and for saving the network back out.
    std::optional<ConvDescriptor> conv;
};

struct ReluLayer
{
    unsigned width = 0;
    // Position among all ReLU layers in forward order; assigned by Network.
    unsigned id = 0;
};

struct Layer;

// Output is input + branch(input).
struct ResidualLayer
{
    std::vector<Layer> branch;
};

struct Layer
{
    std::variant<AffineLayer, ReluLayer, ResidualLayer> op;

    static Layer affine( Eigen::MatrixXd weights, Eigen::VectorXd bias );
    static Layer relu( unsigned width );
    static Layer residual( std::vector<Layer> branch );

    bool isAffine() const
    {
        return std::holds_alternative<AffineLayer>( op );
    }
    bool isRelu() const
    {
        return std::holds_alternative<ReluLayer>( op );
    }
    bool isResidual() const
    {
        return std::holds_alternative<ResidualLayer>( op );
    }
    const AffineLayer &asAffine() const
    {
        return std::get<AffineLayer>( op );
    }
    const ReluLayer &asRelu() const
    {
        return std::get<ReluLayer>( op );
    }
    const ResidualLayer &asResidual() const
    {
        return std::get<ResidualLayer>( op );
    }
};

// One entry of the network flattened in forward order (residual branches
// inlined, followed by their add). Index 0 is the input.
struct FlatLayer
{
    enum Kind { INPUT, LINEAR, CONV, RELU, ADD };

    Kind kind = INPUT;
    unsigned width = 0;
    unsigned weightCount = 0;
    unsigned kernelSize = 0;
    int reluId = -1;
};

// Where a ReLU layer sits: the layers that produce its pre-activation, in
// forward order. Residual blocks entirely before the ReLU appear as whole
// blocks; a block that contains the ReLU is entered.
struct ReluSite
{
    unsigned width = 0;
    std::vector<const Layer *> prefix;
    unsigned flatIndex = 0;
};

/*
  Immutable layered ReLU network. Copies share the layer storage, so raw
  layer pointers handed out by reluSite() and chain() stay valid for the
  lifetime of any copy.
*/
class Network
{
public:
    Network( unsigned inputDim, std::vector<Layer> layers );

    unsigned inputDim() const;
    unsigned outputDim() const;
    const std::vector<Layer> &layers() const;

    unsigned numReluLayers() const;
    const ReluSite &reluSite( unsigned id ) const;

    // All top-level layers, forward order.
    std::vector<const Layer *> chain() const;

    const std::vector<FlatLayer> &flatLayers() const;

    unsigned numParameters() const;

    Eigen::VectorXd forward( const Eigen::VectorXd &x ) const;

private:
    struct Impl;
    std::shared_ptr<const Impl> _impl;
};

// Width of the values produced by a list of layers fed with inputWidth.
unsigned outputWidth( const std::vector<Layer> &layers, unsigned inputWidth );

Eigen::VectorXd forwardLayers( const std::vector<Layer> &layers, const Eigen::VectorXd &x );

// Dense matrix of a convolution with im2col semantics, plus its bias vector.
AffineLayer materializeConv( const ConvDescriptor &conv );

} // namespace mnbab
