#include "mnbab/DualOpt.h"

#include "mnbab/Error.h"

#include <cmath>

namespace mnbab {

namespace {

struct QueryEvaluation
{
    Eigen::VectorXd values;
    DualParameters gradient;
    LinearExpression atInput;
    BacksubTape tape;
};

// Lower bounds of every query row; gradient of their sum.
QueryEvaluation evaluateQuery( const VerificationProblem &problem,
                               const std::vector<const Layer *> &chain,
                               const LinearExpression &query,
                               const NeuronBounds &bounds,
                               const SplitMatrix &splits,
                               const MncSet &mnc,
                               const DualParameters &params,
                               bool withGradient )
{
    QueryEvaluation result;
    Backsubstitution pass( bounds, splits, mnc, params );
    result.atInput = pass.run( query, chain, Side::LOWER, &result.tape );

    Eigen::MatrixXd inputGradient;
    result.values = concretize( result.atInput, problem.region, Side::LOWER, withGradient ? &inputGradient : nullptr );

    result.gradient = DualParameters::zeros( params.layout );
    if ( withGradient )
        pass.backward( result.tape, inputGradient, Eigen::VectorXd::Ones( query.queries() ), result.gradient );
    return result;
}

void collectAPrime( const std::vector<BacksubTape::Entry> &entries, std::vector<Eigen::VectorXd> &out )
{
    for ( const auto &entry : entries )
    {
        if ( entry.kind == BacksubTape::Entry::RELU )
            out[entry.reluId] = entry.aPrime.row( 0 ).transpose();
        else if ( entry.kind == BacksubTape::Entry::RESIDUAL )
            collectAPrime( entry.branch, out );
    }
}

} // namespace

BoundEvaluation boundAndGradient( const VerificationProblem &problem,
                                  const NeuronBounds &bounds,
                                  const SplitMatrix &splits,
                                  const MncSet &mnc,
                                  const DualParameters &params,
                                  unsigned row,
                                  bool withGradient )
{
    if ( row >= problem.numRows() )
        throw Error( Error::DIMENSION_MISMATCH, "property row " + std::to_string( row ) + " does not exist" );
    if ( !params.inDomain() )
        throw Error( Error::PARAMETER_DOMAIN, "dual parameters outside their domain" );

    Eigen::VectorXd selector = Eigen::VectorXd::Unit( problem.numRows(), row );
    QueryEvaluation evaluation = evaluateQuery(
        problem, problem.network.chain(), LinearExpression::row( selector ), bounds, splits, mnc, params, withGradient );

    BoundEvaluation result;
    result.bound = evaluation.values[0];
    result.gradient = std::move( evaluation.gradient );
    result.inputCoefficients = evaluation.atInput.a.row( 0 ).transpose();
    result.aPrime.resize( bounds.size() );
    for ( unsigned i = 0; i < bounds.size(); ++i )
        result.aPrime[i] = Eigen::VectorXd::Zero( bounds[i].lower.size() );
    collectAPrime( evaluation.tape.entries, result.aPrime );
    return result;
}

OptimizerState::OptimizerState( const ParamLayout &layout, const OptConfig &config )
    : _config( config )
{
    const unsigned size = layout.size();
    _rates.resize( size );
    _first = Eigen::VectorXd::Zero( size );
    _second = Eigen::VectorXd::Zero( size );

    Eigen::Index offset = 0;
    for ( const auto &layer : layout.layers )
    {
        _rates.segment( offset, layer.slopeNeurons.size() ).setConstant( config.lrAlpha );
        offset += layer.slopeNeurons.size();
        _rates.segment( offset, layer.splitNeurons.size() ).setConstant( config.lrBeta );
        offset += layer.splitNeurons.size();
        _rates.segment( offset, layer.constraintCount ).setConstant( config.lrGamma );
        offset += layer.constraintCount;
    }
}

void OptimizerState::step( DualParameters &params, const DualParameters &gradient, double lrScale )
{
    Eigen::VectorXd g = gradient.flatten();
    if ( g.size() != _rates.size() )
        throw Error( Error::DIMENSION_MISMATCH, "gradient does not match the optimizer layout" );

    ++_steps;
    _first = _config.adamBeta1 * _first + ( 1.0 - _config.adamBeta1 ) * g;
    _second = _config.adamBeta2 * _second + ( 1.0 - _config.adamBeta2 ) * g.cwiseAbs2();
    const double firstCorrection = 1.0 - std::pow( _config.adamBeta1, _steps );
    const double secondCorrection = 1.0 - std::pow( _config.adamBeta2, _steps );

    Eigen::ArrayXd direction = ( _first.array() / firstCorrection ) /
                               ( ( _second.array() / secondCorrection ).sqrt() + _config.adamEpsilon );
    Eigen::VectorXd x = params.flatten();
    x.array() += lrScale * _rates.array() * direction;
    params.assign( x );
    params.project();
}

OptimizeResult optimize( const VerificationProblem &problem,
                         const NeuronBounds &bounds,
                         const SplitMatrix &splits,
                         const MncSet &mnc,
                         const DualParameters &start,
                         unsigned row,
                         unsigned iterations,
                         const OptConfig &config )
{
    ParamLayout layout = ParamLayout::build( bounds, splits, mnc );
    DualParameters params = start.layout == layout ? start : start.remapped( layout, bounds, config.betaInit );
    params.project();

    OptimizerState state( layout, config );
    OptimizeResult result;
    result.params = params;

    for ( unsigned t = 0;; ++t )
    {
        BoundEvaluation evaluation = boundAndGradient( problem, bounds, splits, mnc, params, row, t < iterations );
        if ( evaluation.bound > result.bound || t == 0 )
        {
            result.bound = std::max( result.bound, evaluation.bound );
            result.params = params;
            result.aPrime = std::move( evaluation.aPrime );
        }

        PrimalBound primal = primalUpperBound( problem, evaluation.inputCoefficients, row );
        if ( primal.value < result.primal.value || t == 0 )
            result.primal = std::move( primal );

        result.iterations = t;
        if ( t >= iterations || ( config.earlyExit && ( result.bound > 0.0 || result.primal.minOverRows <= 0.0 ) ) )
            break;

        double scale = 1.0 - ( 1.0 - config.finalLrFraction ) * t / iterations;
        state.step( params, evaluation.gradient, scale );
    }
    return result;
}

OptimizingRefiner::OptimizingRefiner( const OptConfig &config )
    : _config( config )
{
}

LayerBounds OptimizingRefiner::refine( const VerificationProblem &problem,
                                       unsigned layer,
                                       const NeuronBounds &earlier,
                                       const SplitMatrix &splits,
                                       const MncSet &mnc ) const
{
    const ReluSite &site = problem.network.reluSite( layer );
    ParamLayout layout = ParamLayout::build( earlier, splits, mnc );
    LinearExpression identity = LinearExpression::identity( site.width );

    // The upper side is the negated lower bound of the negated query.
    auto optimizeSide = [&]( const LinearExpression &query ) {
        DualParameters params = DualParameters::initial( layout, earlier );
        OptimizerState state( layout, _config );
        Eigen::VectorXd best;
        const unsigned iterations = _config.itersIntermediate;
        for ( unsigned t = 0;; ++t )
        {
            QueryEvaluation evaluation =
                evaluateQuery( problem, site.prefix, query, earlier, splits, mnc, params, t < iterations );
            best = t == 0 ? evaluation.values : best.cwiseMax( evaluation.values );
            if ( t >= iterations )
                break;
            double scale = 1.0 - ( 1.0 - _config.finalLrFraction ) * t / iterations;
            state.step( params, evaluation.gradient, scale );
        }
        return best;
    };

    LayerBounds bounds;
    bounds.lower = optimizeSide( identity );
    bounds.upper = -optimizeSide( -identity );
    return bounds;
}

} // namespace mnbab
