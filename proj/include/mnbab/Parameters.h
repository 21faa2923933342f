#pragma once

#include "mnbab/Constraints.h"

#include <Eigen/Dense>

#include <vector>

namespace mnbab {

// Which neurons of a ReLU layer own an optimizable slope (unstable and
// unsplit) or a split multiplier (split), plus the number of MNC rows.
struct LayerLayout
{
    std::vector<unsigned> slopeNeurons;
    std::vector<unsigned> splitNeurons;
    unsigned constraintCount = 0;

    bool operator==( const LayerLayout &other ) const = default;
};

struct ParamLayout
{
    std::vector<LayerLayout> layers;

    static ParamLayout build( const NeuronBounds &bounds, const SplitMatrix &splits, const MncSet &mnc );

    unsigned size() const;
    bool operator==( const ParamLayout &other ) const = default;
};

struct LayerParams
{
    Eigen::VectorXd alpha;
    Eigen::VectorXd beta;
    Eigen::VectorXd gamma;
};

/*
  Dual parameters of one bounding query: slopes alpha in [0,1], split
  multipliers beta >= 0 and MNC multipliers gamma >= 0 for every ReLU layer.
  The same type holds gradients.
*/
struct DualParameters
{
    ParamLayout layout;
    std::vector<LayerParams> layers;

    // alpha from the minimal-area rule (1 if u >= -l, else 0), beta = gamma = 0.
    static DualParameters initial( const ParamLayout &layout, const NeuronBounds &bounds );
    static DualParameters zeros( const ParamLayout &layout );

    // Carries values over to a new layout by neuron index; fresh slopes use
    // the default rule, fresh split multipliers start at betaInit.
    DualParameters remapped( const ParamLayout &target, const NeuronBounds &bounds, double betaInit ) const;

    Eigen::VectorXd flatten() const;
    void assign( const Eigen::VectorXd &flat );

    void project();
    bool inDomain() const;
};

} // namespace mnbab
