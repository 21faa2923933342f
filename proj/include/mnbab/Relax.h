#pragma once

#include "mnbab/Constraints.h"
#include "mnbab/Network.h"
#include "mnbab/Parameters.h"
#include "mnbab/Problem.h"

#include <Eigen/Dense>

#include <limits>
#include <vector>

namespace mnbab {

enum class Side { LOWER, UPPER };

/*
  Symbolic bound a * v + c over the values v at the current cursor, one row
  per query. On the lower side every row satisfies
  min over the region of (query) >= min over the region of (a * v + c),
  and dually on the upper side.
*/
struct LinearExpression
{
    Eigen::MatrixXd a;
    Eigen::VectorXd c;

    static LinearExpression identity( unsigned width );
    static LinearExpression row( const Eigen::VectorXd &coefficients, double offset = 0.0 );

    unsigned queries() const
    {
        return a.rows();
    }
    LinearExpression operator-() const
    {
        return LinearExpression{ -a, -c };
    }
};

// Recorded steps of one backsubstitution, replayed in reverse for gradients.
struct BacksubTape
{
    struct Entry
    {
        enum Kind { AFFINE, RELU, RESIDUAL };

        Kind kind = AFFINE;
        const AffineLayer *affine = nullptr;
        unsigned reluId = 0;
        Eigen::MatrixXd aPrime;
        Eigen::MatrixXd slope;
        Eigen::MatrixXd intercept;
        std::vector<Entry> branch;
    };

    std::vector<Entry> entries;
};

LinearExpression backsubAffine( const LinearExpression &expr, const AffineLayer &layer );

// One ReLU layer: MNC step, single-neuron relaxation, split step. Throws
// PARAMETER_DOMAIN when params leave alpha in [0,1], beta >= 0, gamma >= 0.
LinearExpression backsubRelu( const LinearExpression &expr,
                              const LayerBounds &bounds,
                              const Eigen::VectorXi &split,
                              const MncLayer &mnc,
                              const LayerParams &params,
                              const LayerLayout &layout,
                              Side side );

/*
  Backsubstitution through a sequence of layers with fixed bounds, splits,
  MNCs and dual parameters (indexed by ReLU id).
*/
class Backsubstitution
{
public:
    Backsubstitution( const NeuronBounds &bounds,
                      const SplitMatrix &splits,
                      const MncSet &mnc,
                      const DualParameters &params );

    // expr sits at the output of the last layer in chain (forward order).
    LinearExpression run( const LinearExpression &expr,
                          const std::vector<const Layer *> &chain,
                          Side side,
                          BacksubTape *tape = nullptr ) const;

    LinearExpression residual( const LinearExpression &expr,
                               const ResidualLayer &block,
                               Side side,
                               BacksubTape *tape = nullptr ) const;

    /*
      Reverse pass of a lower-side run. adjoint is d(objective)/d(a) at the
      input, weights the per-row d(objective)/d(bound). Adds
      d(objective)/d(params) into gradient.
    */
    void backward( const BacksubTape &tape,
                   const Eigen::MatrixXd &adjoint,
                   const Eigen::VectorXd &weights,
                   DualParameters &gradient ) const;

private:
    const NeuronBounds &_bounds;
    const SplitMatrix &_splits;
    const MncSet &_mnc;
    const DualParameters &_params;

    LinearExpression runLower( const LinearExpression &expr,
                               const std::vector<const Layer *> &chain,
                               std::vector<BacksubTape::Entry> *tape ) const;
    LinearExpression residualLower( const LinearExpression &expr,
                                    const ResidualLayer &block,
                                    std::vector<BacksubTape::Entry> *tape ) const;
    Eigen::MatrixXd backwardEntries( const std::vector<BacksubTape::Entry> &entries,
                                     Eigen::MatrixXd adjoint,
                                     const Eigen::VectorXd &weights,
                                     DualParameters &gradient ) const;
};

// Bound of each row over the region. gradient (lower side only) receives
// d(bound)/d(a) row by row.
Eigen::VectorXd concretize( const LinearExpression &expr,
                            const InputRegion &region,
                            Side side,
                            Eigen::MatrixXd *gradient = nullptr );

// Region point minimizing a * x (lower side) for one coefficient row.
Eigen::VectorXd minimizingInput( const Eigen::VectorXd &coefficients, const InputRegion &region );

struct PrimalBound
{
    Eigen::VectorXd witness;
    // Value of the queried property row at the witness.
    double value = std::numeric_limits<double>::infinity();
    // Smallest property row at the witness; <= 0 is a counterexample.
    double minOverRows = std::numeric_limits<double>::infinity();
};

PrimalBound primalUpperBound( const VerificationProblem &problem,
                              const Eigen::VectorXd &inputCoefficients,
                              unsigned row );

enum class IntermediateMethod { BACKSUBSTITUTION, INTERVAL };

// Hook to tighten intermediate bounds by optimizing their shared parameters.
class IntermediateRefiner
{
public:
    virtual ~IntermediateRefiner() = default;

    // Returns bounds for ReLU layer `layer` given bounds of all earlier layers.
    virtual LayerBounds refine( const VerificationProblem &problem,
                                unsigned layer,
                                const NeuronBounds &earlier,
                                const SplitMatrix &splits,
                                const MncSet &mnc ) const = 0;
};

struct BoundsResult
{
    NeuronBounds layers;
    LayerBounds output;
    bool infeasible = false;
};

/*
  Intermediate bounds for every ReLU layer in forward order. Layers before
  firstStale are taken from cached; later layers are recomputed and
  intersected with cached where available (cached bounds come from a
  superset region). Split neurons are clamped to their phase.
*/
BoundsResult computeBounds( const VerificationProblem &problem,
                            const SplitMatrix &splits,
                            const MncSet &mnc,
                            IntermediateMethod method = IntermediateMethod::BACKSUBSTITUTION,
                            const NeuronBounds *cached = nullptr,
                            unsigned firstStale = 0,
                            const IntermediateRefiner *refiner = nullptr,
                            unsigned layerCount = std::numeric_limits<unsigned>::max() );

// Plain interval propagation.
BoundsResult intervalBounds( const VerificationProblem &problem, const SplitMatrix &splits );

// Bounds of one ReLU layer's pre-activations with the given parameters.
LayerBounds layerBounds( const VerificationProblem &problem,
                         unsigned layer,
                         const NeuronBounds &earlier,
                         const SplitMatrix &splits,
                         const MncSet &mnc,
                         const DualParameters &lowerParams,
                         const DualParameters &upperParams );

// Applies split phases to bounds; returns false if some split is infeasible.
bool clampToSplits( LayerBounds &bounds, const Eigen::VectorXi &split );

} // namespace mnbab
