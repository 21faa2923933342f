#include "mnbab/Relax.h"

#include "mnbab/Error.h"

#include <algorithm>
#include <cmath>

namespace mnbab {

LinearExpression LinearExpression::identity( unsigned width )
{
    return LinearExpression{ Eigen::MatrixXd::Identity( width, width ), Eigen::VectorXd::Zero( width ) };
}

LinearExpression LinearExpression::row( const Eigen::VectorXd &coefficients, double offset )
{
    return LinearExpression{ coefficients.transpose(), Eigen::VectorXd::Constant( 1, offset ) };
}

LinearExpression backsubAffine( const LinearExpression &expr, const AffineLayer &layer )
{
    if ( expr.a.cols() != layer.weights.rows() )
        throw Error( Error::DIMENSION_MISMATCH, "expression width does not match the affine layer output" );
    return LinearExpression{ expr.a * layer.weights, expr.c + expr.a * layer.bias };
}

namespace {

void checkDomain( const LayerParams &params, const LayerLayout &layout )
{
    if ( params.alpha.size() != static_cast<Eigen::Index>( layout.slopeNeurons.size() ) ||
         params.beta.size() != static_cast<Eigen::Index>( layout.splitNeurons.size() ) ||
         params.gamma.size() != static_cast<Eigen::Index>( layout.constraintCount ) )
        throw Error( Error::PARAMETER_DOMAIN, "dual parameters do not match the layer layout" );
    if ( ( params.alpha.array() < 0.0 ).any() || ( params.alpha.array() > 1.0 ).any() )
        throw Error( Error::PARAMETER_DOMAIN, "slope parameter outside [0, 1]" );
    if ( ( params.beta.array() < 0.0 ).any() )
        throw Error( Error::PARAMETER_DOMAIN, "negative split multiplier" );
    if ( ( params.gamma.array() < 0.0 ).any() )
        throw Error( Error::PARAMETER_DOMAIN, "negative constraint multiplier" );
}

/*
  Lower-side ReLU step. Fills slope/intercept (per row and neuron) and the
  post-MNC coefficients aPrime when a tape entry is given.
*/
LinearExpression reluLower( const LinearExpression &expr,
                            const LayerBounds &bounds,
                            const Eigen::VectorXi &split,
                            const MncLayer &mnc,
                            const LayerParams &params,
                            const LayerLayout &layout,
                            BacksubTape::Entry *entry )
{
    const Eigen::Index rows = expr.a.rows();
    const Eigen::Index width = expr.a.cols();
    if ( width != bounds.lower.size() )
        throw Error( Error::DIMENSION_MISMATCH, "expression width does not match the ReLU layer" );
    checkDomain( params, layout );

    const bool useMnc = mnc.count() > 0;

    Eigen::MatrixXd aPrime = expr.a;
    if ( useMnc )
        aPrime.rowwise() += ( mnc.post.transpose() * params.gamma ).transpose();

    Eigen::VectorXd slopeParam = Eigen::VectorXd::Zero( width );
    for ( unsigned k = 0; k < layout.slopeNeurons.size(); ++k )
        slopeParam[layout.slopeNeurons[k]] = params.alpha[k];

    Eigen::MatrixXd slope( rows, width );
    Eigen::MatrixXd intercept = Eigen::MatrixXd::Zero( rows, width );
    for ( Eigen::Index j = 0; j < width; ++j )
    {
        const double l = bounds.lower[j];
        const double u = bounds.upper[j];
        if ( split[j] == SplitMatrix::POSITIVE )
            slope.col( j ).setOnes();
        else if ( split[j] == SplitMatrix::NEGATIVE )
            slope.col( j ).setZero();
        else if ( l >= 0.0 )
            slope.col( j ).setOnes();
        else if ( u <= 0.0 )
            slope.col( j ).setZero();
        else
        {
            const double upperSlope = u / ( u - l );
            const double upperIntercept = -u * l / ( u - l );
            for ( Eigen::Index r = 0; r < rows; ++r )
            {
                if ( aPrime( r, j ) >= 0.0 )
                    slope( r, j ) = slopeParam[j];
                else
                {
                    slope( r, j ) = upperSlope;
                    intercept( r, j ) = upperIntercept;
                }
            }
        }
    }

    LinearExpression result;
    result.a = aPrime.cwiseProduct( slope );
    result.c = expr.c + aPrime.cwiseProduct( intercept ).rowwise().sum();

    for ( unsigned k = 0; k < layout.splitNeurons.size(); ++k )
    {
        unsigned j = layout.splitNeurons[k];
        result.a.col( j ).array() += split[j] * params.beta[k];
    }

    if ( useMnc )
    {
        result.a.rowwise() += ( mnc.pre.transpose() * params.gamma ).transpose();
        result.c.array() -= params.gamma.dot( mnc.offset );
    }

    if ( entry )
    {
        entry->aPrime = std::move( aPrime );
        entry->slope = std::move( slope );
        entry->intercept = std::move( intercept );
    }
    return result;
}

} // namespace

LinearExpression backsubRelu( const LinearExpression &expr,
                              const LayerBounds &bounds,
                              const Eigen::VectorXi &split,
                              const MncLayer &mnc,
                              const LayerParams &params,
                              const LayerLayout &layout,
                              Side side )
{
    if ( side == Side::LOWER )
        return reluLower( expr, bounds, split, mnc, params, layout, nullptr );
    // The upper side is the lower side of the negated query; this swaps the
    // roles of the coefficient signs in the case table.
    return -reluLower( -expr, bounds, split, mnc, params, layout, nullptr );
}

Backsubstitution::Backsubstitution( const NeuronBounds &bounds,
                                    const SplitMatrix &splits,
                                    const MncSet &mnc,
                                    const DualParameters &params )
    : _bounds( bounds )
    , _splits( splits )
    , _mnc( mnc )
    , _params( params )
{
}

LinearExpression Backsubstitution::run( const LinearExpression &expr,
                                        const std::vector<const Layer *> &chain,
                                        Side side,
                                        BacksubTape *tape ) const
{
    auto *entries = tape ? &tape->entries : nullptr;
    if ( side == Side::LOWER )
        return runLower( expr, chain, entries );
    return -runLower( -expr, chain, entries );
}

LinearExpression Backsubstitution::residual( const LinearExpression &expr,
                                             const ResidualLayer &block,
                                             Side side,
                                             BacksubTape *tape ) const
{
    BacksubTape::Entry entry;
    entry.kind = BacksubTape::Entry::RESIDUAL;
    auto *branchTape = tape ? &entry.branch : nullptr;
    LinearExpression result = side == Side::LOWER ? residualLower( expr, block, branchTape )
                                                  : -residualLower( -expr, block, branchTape );
    if ( tape )
        tape->entries.push_back( std::move( entry ) );
    return result;
}

LinearExpression Backsubstitution::residualLower( const LinearExpression &expr,
                                                  const ResidualLayer &block,
                                                  std::vector<BacksubTape::Entry> *tape ) const
{
    // The block computes x + branch(x): the identity path keeps the
    // coefficients, the branch path carries the offset.
    std::vector<const Layer *> branch;
    for ( const auto &inner : block.branch )
        branch.push_back( &inner );
    LinearExpression through = runLower( expr, branch, tape );
    return LinearExpression{ expr.a + through.a, through.c };
}

LinearExpression Backsubstitution::runLower( const LinearExpression &start,
                                             const std::vector<const Layer *> &chain,
                                             std::vector<BacksubTape::Entry> *tape ) const
{
    LinearExpression expr = start;
    for ( auto it = chain.rbegin(); it != chain.rend(); ++it )
    {
        const Layer &layer = **it;
        BacksubTape::Entry entry;

        if ( layer.isAffine() )
        {
            entry.kind = BacksubTape::Entry::AFFINE;
            entry.affine = &layer.asAffine();
            expr = backsubAffine( expr, layer.asAffine() );
        }
        else if ( layer.isRelu() )
        {
            unsigned id = layer.asRelu().id;
            if ( id >= _bounds.size() || id >= _params.layers.size() )
                throw Error( Error::DIMENSION_MISMATCH, "missing bounds or parameters for ReLU layer " +
                                                            std::to_string( id ) );
            entry.kind = BacksubTape::Entry::RELU;
            entry.reluId = id;
            expr = reluLower( expr,
                              _bounds[id],
                              _splits.diag[id],
                              _mnc.layers[id],
                              _params.layers[id],
                              _params.layout.layers[id],
                              tape ? &entry : nullptr );
        }
        else
        {
            entry.kind = BacksubTape::Entry::RESIDUAL;
            expr = residualLower( expr, layer.asResidual(), tape ? &entry.branch : nullptr );
        }

        if ( tape )
            tape->push_back( std::move( entry ) );
    }
    return expr;
}

void Backsubstitution::backward( const BacksubTape &tape,
                                 const Eigen::MatrixXd &adjoint,
                                 const Eigen::VectorXd &weights,
                                 DualParameters &gradient ) const
{
    backwardEntries( tape.entries, adjoint, weights, gradient );
}

Eigen::MatrixXd Backsubstitution::backwardEntries( const std::vector<BacksubTape::Entry> &entries,
                                                   Eigen::MatrixXd adjoint,
                                                   const Eigen::VectorXd &weights,
                                                   DualParameters &gradient ) const
{
    for ( auto it = entries.rbegin(); it != entries.rend(); ++it )
    {
        const BacksubTape::Entry &entry = *it;
        switch ( entry.kind )
        {
        case BacksubTape::Entry::AFFINE:
            adjoint = adjoint * entry.affine->weights.transpose() + weights * entry.affine->bias.transpose();
            break;

        case BacksubTape::Entry::RELU:
        {
            const unsigned id = entry.reluId;
            const LayerLayout &layout = _params.layout.layers[id];
            const LayerBounds &bounds = _bounds[id];
            const Eigen::VectorXi &split = _splits.diag[id];
            LayerParams &grad = gradient.layers[id];

            for ( unsigned k = 0; k < layout.slopeNeurons.size(); ++k )
            {
                unsigned j = layout.slopeNeurons[k];
                if ( !bounds.isUnstable( j ) )
                    continue;
                double sum = 0.0;
                for ( Eigen::Index r = 0; r < adjoint.rows(); ++r )
                    if ( entry.aPrime( r, j ) >= 0.0 )
                        sum += adjoint( r, j ) * entry.aPrime( r, j );
                grad.alpha[k] += sum;
            }
            for ( unsigned k = 0; k < layout.splitNeurons.size(); ++k )
            {
                unsigned j = layout.splitNeurons[k];
                grad.beta[k] += split[j] * adjoint.col( j ).sum();
            }

            Eigen::MatrixXd prime = adjoint.cwiseProduct( entry.slope );
            prime += weights.asDiagonal() * entry.intercept;

            const MncLayer &mnc = _mnc.layers[id];
            if ( mnc.count() > 0 )
            {
                grad.gamma += mnc.post * prime.colwise().sum().transpose();
                grad.gamma += mnc.pre * adjoint.colwise().sum().transpose();
                grad.gamma -= mnc.offset * weights.sum();
            }
            adjoint = std::move( prime );
            break;
        }

        case BacksubTape::Entry::RESIDUAL:
        {
            Eigen::MatrixXd through = backwardEntries( entry.branch, adjoint, weights, gradient );
            adjoint += through;
            break;
        }
        }
    }
    return adjoint;
}

namespace {

// Lower bound of a * x + c over the bounding box of the region.
double boxMinimum( const Eigen::VectorXd &a,
                   const Eigen::VectorXd &lower,
                   const Eigen::VectorXd &upper,
                   Eigen::VectorXd *gradient )
{
    double value = 0.0;
    for ( Eigen::Index i = 0; i < a.size(); ++i )
    {
        double atLower = a[i] * lower[i];
        double atUpper = a[i] * upper[i];
        value += std::min( atLower, atUpper );
        if ( gradient )
            ( *gradient )[i] = a[i] >= 0.0 ? lower[i] : upper[i];
    }
    return value;
}

// Hoelder: min over the p-ball of a * x is a * x0 - eps * ||a||_q.
double ballMinimum( const Eigen::VectorXd &a, const InputRegion &region, Eigen::VectorXd *gradient )
{
    double value = a.dot( region.center );
    if ( gradient )
        *gradient = region.center;
    const double eps = region.epsilon;
    switch ( region.norm )
    {
    case Norm::LINF:
        value -= eps * a.lpNorm<1>();
        if ( gradient )
            for ( Eigen::Index i = 0; i < a.size(); ++i )
                ( *gradient )[i] -= eps * ( a[i] >= 0.0 ? 1.0 : -1.0 );
        break;
    case Norm::L2:
    {
        double length = a.norm();
        value -= eps * length;
        if ( gradient && length > 0.0 )
            *gradient -= eps * a / length;
        break;
    }
    case Norm::L1:
    {
        Eigen::Index k = 0;
        double largest = a.size() ? a.cwiseAbs().maxCoeff( &k ) : 0.0;
        value -= eps * largest;
        if ( gradient && largest > 0.0 )
            ( *gradient )[k] -= eps * ( a[k] >= 0.0 ? 1.0 : -1.0 );
        break;
    }
    }
    return value;
}

} // namespace

Eigen::VectorXd concretize( const LinearExpression &expr, const InputRegion &region, Side side, Eigen::MatrixXd *gradient )
{
    if ( expr.a.cols() != static_cast<Eigen::Index>( region.dim() ) )
        throw Error( Error::DIMENSION_MISMATCH, "expression is not over the network input" );

    if ( side == Side::UPPER )
    {
        if ( gradient )
            throw Error( Error::PARAMETER_DOMAIN, "gradients are only defined for the lower side" );
        return -concretize( -expr, region, Side::LOWER );
    }

    const Eigen::VectorXd lower = region.boxLower();
    const Eigen::VectorXd upper = region.boxUpper();
    const Eigen::Index rows = expr.a.rows();

    Eigen::VectorXd result( rows );
    if ( gradient )
        gradient->resize( rows, region.dim() );

    for ( Eigen::Index r = 0; r < rows; ++r )
    {
        Eigen::VectorXd a = expr.a.row( r ).transpose();
        Eigen::VectorXd boxGrad( a.size() );
        double value = boxMinimum( a, lower, upper, gradient ? &boxGrad : nullptr );

        // The bounding box is exact for LINF. For other norms the ball bound
        // and the box bound are both sound; keep the larger one.
        if ( region.norm != Norm::LINF )
        {
            Eigen::VectorXd ballGrad( a.size() );
            double ball = ballMinimum( a, region, gradient ? &ballGrad : nullptr );
            if ( ball >= value )
            {
                value = ball;
                boxGrad = ballGrad;
            }
        }

        result[r] = value + expr.c[r];
        if ( gradient )
            gradient->row( r ) = boxGrad.transpose();
    }
    return result;
}

Eigen::VectorXd minimizingInput( const Eigen::VectorXd &a, const InputRegion &region )
{
    Eigen::VectorXd x = region.center;
    const double eps = region.epsilon;
    switch ( region.norm )
    {
    case Norm::LINF:
        for ( Eigen::Index i = 0; i < a.size(); ++i )
            x[i] = a[i] < 0.0 ? region.center[i] + eps : region.center[i] - eps;
        break;
    case Norm::L2:
    {
        double length = a.norm();
        if ( length > 0.0 )
            x -= eps * a / length;
        break;
    }
    case Norm::L1:
    {
        Eigen::Index k = 0;
        if ( a.size() && a.cwiseAbs().maxCoeff( &k ) > 0.0 )
            x[k] -= eps * ( a[k] >= 0.0 ? 1.0 : -1.0 );
        break;
    }
    }
    if ( region.clipLower )
        x = x.cwiseMax( *region.clipLower );
    if ( region.clipUpper )
        x = x.cwiseMin( *region.clipUpper );
    return x;
}

PrimalBound primalUpperBound( const VerificationProblem &problem, const Eigen::VectorXd &inputCoefficients, unsigned row )
{
    PrimalBound result;
    result.witness = minimizingInput( inputCoefficients, problem.region );
    Eigen::VectorXd outputs = problem.network.forward( result.witness );
    result.value = outputs[row];
    result.minOverRows = outputs.minCoeff();
    return result;
}

bool clampToSplits( LayerBounds &bounds, const Eigen::VectorXi &split )
{
    bool feasible = true;
    for ( Eigen::Index j = 0; j < split.size(); ++j )
    {
        if ( split[j] == SplitMatrix::POSITIVE )
            bounds.lower[j] = std::max( bounds.lower[j], 0.0 );
        else if ( split[j] == SplitMatrix::NEGATIVE )
            bounds.upper[j] = std::min( bounds.upper[j], 0.0 );
        if ( bounds.lower[j] > bounds.upper[j] )
            feasible = false;
    }
    return feasible;
}

LayerBounds layerBounds( const VerificationProblem &problem,
                         unsigned layer,
                         const NeuronBounds &earlier,
                         const SplitMatrix &splits,
                         const MncSet &mnc,
                         const DualParameters &lowerParams,
                         const DualParameters &upperParams )
{
    const ReluSite &site = problem.network.reluSite( layer );
    LinearExpression query = LinearExpression::identity( site.width );

    LayerBounds bounds;
    Backsubstitution lowerPass( earlier, splits, mnc, lowerParams );
    bounds.lower = concretize( lowerPass.run( query, site.prefix, Side::LOWER ), problem.region, Side::LOWER );
    Backsubstitution upperPass( earlier, splits, mnc, upperParams );
    bounds.upper = concretize( upperPass.run( query, site.prefix, Side::UPPER ), problem.region, Side::UPPER );
    return bounds;
}

BoundsResult computeBounds( const VerificationProblem &problem,
                            const SplitMatrix &splits,
                            const MncSet &mnc,
                            IntermediateMethod method,
                            const NeuronBounds *cached,
                            unsigned firstStale,
                            const IntermediateRefiner *refiner,
                            unsigned layerCount )
{
    const Network &network = problem.network;
    const unsigned count = std::min( layerCount, network.numReluLayers() );

    if ( method == IntermediateMethod::INTERVAL )
    {
        BoundsResult interval = intervalBounds( problem, splits );
        if ( cached )
            for ( unsigned i = 0; i < std::min<size_t>( cached->size(), interval.layers.size() ); ++i )
            {
                LayerBounds &b = interval.layers[i];
                b.lower = b.lower.cwiseMax( ( *cached )[i].lower );
                b.upper = b.upper.cwiseMin( ( *cached )[i].upper );
                if ( !clampToSplits( b, splits.diag[i] ) )
                    interval.infeasible = true;
            }
        interval.layers.resize( count );
        return interval;
    }

    BoundsResult result;
    for ( unsigned i = 0; i < count; ++i )
    {
        const bool reuse = cached && i < firstStale && i < cached->size();
        LayerBounds bounds;
        if ( reuse )
            bounds = ( *cached )[i];
        else
        {
            if ( refiner )
                bounds = refiner->refine( problem, i, result.layers, splits, mnc );
            else
            {
                ParamLayout layout = ParamLayout::build( result.layers, splits, mnc );
                DualParameters params = DualParameters::initial( layout, result.layers );
                bounds = layerBounds( problem, i, result.layers, splits, mnc, params, params );
            }
            if ( cached && i < cached->size() )
            {
                bounds.lower = bounds.lower.cwiseMax( ( *cached )[i].lower );
                bounds.upper = bounds.upper.cwiseMin( ( *cached )[i].upper );
            }
        }
        if ( !clampToSplits( bounds, splits.diag[i] ) )
            result.infeasible = true;
        result.layers.push_back( std::move( bounds ) );
    }

    if ( count == network.numReluLayers() && !result.infeasible )
    {
        ParamLayout layout = ParamLayout::build( result.layers, splits, mnc );
        DualParameters params = DualParameters::initial( layout, result.layers );
        Backsubstitution pass( result.layers, splits, mnc, params );
        LinearExpression query = LinearExpression::identity( network.outputDim() );
        auto chain = network.chain();
        result.output.lower = concretize( pass.run( query, chain, Side::LOWER ), problem.region, Side::LOWER );
        result.output.upper = concretize( pass.run( query, chain, Side::UPPER ), problem.region, Side::UPPER );
    }
    return result;
}

namespace {

void intervalLayers( const std::vector<Layer> &layers,
                     Eigen::VectorXd &lower,
                     Eigen::VectorXd &upper,
                     const SplitMatrix &splits,
                     BoundsResult &result )
{
    for ( const auto &layer : layers )
    {
        if ( layer.isAffine() )
        {
            const auto &affine = layer.asAffine();
            Eigen::VectorXd mid = 0.5 * ( lower + upper );
            Eigen::VectorXd radius = 0.5 * ( upper - lower );
            Eigen::VectorXd center = affine.weights * mid + affine.bias;
            Eigen::VectorXd spread = affine.weights.cwiseAbs() * radius;
            lower = center - spread;
            upper = center + spread;
        }
        else if ( layer.isRelu() )
        {
            LayerBounds bounds{ lower, upper };
            if ( !clampToSplits( bounds, splits.diag[layer.asRelu().id] ) )
                result.infeasible = true;
            result.layers[layer.asRelu().id] = bounds;
            lower = bounds.lower.cwiseMax( 0.0 );
            upper = bounds.upper.cwiseMax( 0.0 );
        }
        else
        {
            Eigen::VectorXd branchLower = lower;
            Eigen::VectorXd branchUpper = upper;
            intervalLayers( layer.asResidual().branch, branchLower, branchUpper, splits, result );
            lower += branchLower;
            upper += branchUpper;
        }
    }
}

} // namespace

BoundsResult intervalBounds( const VerificationProblem &problem, const SplitMatrix &splits )
{
    BoundsResult result;
    result.layers.resize( problem.network.numReluLayers() );
    Eigen::VectorXd lower = problem.region.boxLower();
    Eigen::VectorXd upper = problem.region.boxUpper();
    intervalLayers( problem.network.layers(), lower, upper, splits, result );
    result.output = LayerBounds{ lower, upper };
    return result;
}

} // namespace mnbab
