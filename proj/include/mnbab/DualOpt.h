#pragma once

#include "mnbab/Constraints.h"
#include "mnbab/Parameters.h"
#include "mnbab/Problem.h"
#include "mnbab/Relax.h"

#include <Eigen/Dense>

#include <limits>
#include <vector>

namespace mnbab {

struct OptConfig
{
    unsigned itersRoot = 20;
    unsigned itersBranch = 10;
    unsigned itersIntermediate = 0;
    double lrAlpha = 0.1;
    double lrBeta = 0.05;
    double lrGamma = 0.05;
    // Learning rates decay linearly to this fraction over a run.
    double finalLrFraction = 0.1;
    double adamBeta1 = 0.9;
    double adamBeta2 = 0.999;
    double adamEpsilon = 1e-8;
    // Starting multiplier for a freshly split neuron.
    double betaInit = 0.05;
    // Stop as soon as the bound is positive or the primal point violates a row.
    bool earlyExit = true;
};

struct BoundEvaluation
{
    double bound = -std::numeric_limits<double>::infinity();
    DualParameters gradient;
    // Coefficients of the bound over the network input.
    Eigen::VectorXd inputCoefficients;
    // Post-MNC coefficients a' per ReLU layer.
    std::vector<Eigen::VectorXd> aPrime;
};

// Lower bound on property row `row` and its gradient w.r.t. all parameters.
BoundEvaluation boundAndGradient( const VerificationProblem &problem,
                                  const NeuronBounds &bounds,
                                  const SplitMatrix &splits,
                                  const MncSet &mnc,
                                  const DualParameters &params,
                                  unsigned row,
                                  bool withGradient = true );

// Adam moments over a flattened parameter vector.
class OptimizerState
{
public:
    OptimizerState( const ParamLayout &layout, const OptConfig &config );

    // One ascent step on params followed by projection.
    void step( DualParameters &params, const DualParameters &gradient, double lrScale );

    unsigned steps() const
    {
        return _steps;
    }

private:
    OptConfig _config;
    Eigen::VectorXd _rates;
    Eigen::VectorXd _first;
    Eigen::VectorXd _second;
    unsigned _steps = 0;
};

struct OptimizeResult
{
    double bound = -std::numeric_limits<double>::infinity();
    DualParameters params;
    std::vector<Eigen::VectorXd> aPrime;
    // Best primal point seen: smallest value of the queried row.
    PrimalBound primal;
    unsigned iterations = 0;
};

/*
  Projected gradient ascent on the lower bound of one property row.
  Returns the best bound seen and the parameters that produced it; stops
  early once the bound is positive or a primal point violates some row.
*/
OptimizeResult optimize( const VerificationProblem &problem,
                         const NeuronBounds &bounds,
                         const SplitMatrix &splits,
                         const MncSet &mnc,
                         const DualParameters &start,
                         unsigned row,
                         unsigned iterations,
                         const OptConfig &config );

// Tightens intermediate bounds with one optimized parameter set per layer
// and side, shared across the neurons of the layer.
class OptimizingRefiner : public IntermediateRefiner
{
public:
    explicit OptimizingRefiner( const OptConfig &config );

    LayerBounds refine( const VerificationProblem &problem,
                        unsigned layer,
                        const NeuronBounds &earlier,
                        const SplitMatrix &splits,
                        const MncSet &mnc ) const override;

private:
    OptConfig _config;
};

} // namespace mnbab
