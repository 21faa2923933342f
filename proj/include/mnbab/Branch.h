#pragma once

#include "mnbab/Constraints.h"
#include "mnbab/Network.h"
#include "mnbab/Parameters.h"

#include <Eigen/Dense>

#include <limits>
#include <string>
#include <vector>

namespace mnbab {

enum class Heuristic { BABSR, ACS };

std::string heuristicName( Heuristic heuristic );
Heuristic parseHeuristic( const std::string &text );

struct BranchConfig
{
    Heuristic heuristic = Heuristic::ACS;
    bool cab = true;
};

struct Subproblem
{
    SplitMatrix splits;
    NeuronBounds bounds;
    // Bounds of ReLU layers from this index on must be recomputed.
    unsigned firstStale = 0;
    double lowerBound = -std::numeric_limits<double>::infinity();
    DualParameters params;
    // a' per ReLU layer from the last bounding run, for BaBSR.
    std::vector<Eigen::VectorXd> aPrime;
    unsigned depth = 0;
};

// Raw score per neuron and ReLU layer; zero for neurons that cannot be split.
struct BranchingScore
{
    std::vector<Eigen::VectorXd> layers;
};

// s_j = |gamma^T P|_j + |gamma^T Phat|_j.
BranchingScore acsScore( const DualParameters &params,
                         const MncSet &mnc,
                         const NeuronBounds &bounds,
                         const SplitMatrix &splits );

/*
  Intercept-contribution score: for an unstable unsplit neuron,
    |a'_j| * u_j |l_j| / (u_j - l_j)              if a'_j < 0,
    1e-3 * |a'_j| * min(u_j, -l_j)                otherwise.
*/
BranchingScore babsrScore( const std::vector<Eigen::VectorXd> &aPrime,
                           const NeuronBounds &bounds,
                           const SplitMatrix &splits );

/*
  Floating-point cost of recomputing intermediate bounds after a split, over
  the flattened network. Per-layer costs: input d, ReLU d + p (p MNC rows),
  linear #W, conv d k^2, residual add d. A split at flat layer k costs
  sum_{i>k} 2 d_i C_i with C_i = sum_{j<i} c_j.
*/
class SplitCostModel
{
public:
    SplitCostModel( const Network &network, const MncSet &mnc );

    const std::vector<double> &layerCosts() const
    {
        return _layerCosts;
    }
    const std::vector<double> &cumulativeCosts() const
    {
        return _cumulative;
    }

    double costAtFlat( unsigned flatIndex ) const;
    double splitCost( unsigned reluLayer ) const;

    void scale( double factor );

private:
    std::vector<unsigned> _widths;
    std::vector<double> _layerCosts;
    std::vector<double> _cumulative;
    std::vector<unsigned> _reluFlat;
    double _scale = 1.0;
};

struct BranchDecision
{
    unsigned layer = 0;
    unsigned neuron = 0;
};

// Argmax of score (divided by split cost with CAB); ties go to the lower
// layer, then the lower neuron. Throws NO_BRANCHING_CANDIDATE if no neuron
// is unstable and unsplit.
BranchDecision decide( const BranchingScore &scores,
                       const NeuronBounds &bounds,
                       const SplitMatrix &splits,
                       const SplitCostModel *costs );

// Child with the neuron fixed to phase `sign` (SplitMatrix::POSITIVE or
// NEGATIVE). Throws DOUBLE_SPLIT if the neuron is already split.
Subproblem applySplit( const Subproblem &parent, const BranchDecision &decision, int sign );

// Every ReLU neuron that is unstable in bounds is split.
bool fullySplit( const NeuronBounds &bounds, const SplitMatrix &splits );

} // namespace mnbab
