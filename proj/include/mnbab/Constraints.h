#pragma once

#include "mnbab/Network.h"

#include <Eigen/Dense>

#include <vector>

namespace mnbab {

// Pre-activation bounds of one ReLU layer: lower <= zhat <= upper.
struct LayerBounds
{
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;

    bool isUnstable( unsigned j ) const
    {
        return lower[j] < 0.0 && upper[j] > 0.0;
    }
};

// Indexed by ReLU layer id.
using NeuronBounds = std::vector<LayerBounds>;

/*
  Diagonal of the split matrix S per ReLU layer. S zhat <= 0 encodes the
  split set: -1 is a positive split (zhat >= 0), +1 a negative split
  (zhat <= 0), 0 unsplit.
*/
struct SplitMatrix
{
    static constexpr int POSITIVE = -1;
    static constexpr int NEGATIVE = 1;

    std::vector<Eigen::VectorXi> diag;

    static SplitMatrix none( const Network &network );

    int at( unsigned layer, unsigned neuron ) const
    {
        return diag[layer][neuron];
    }
    bool isSplit( unsigned layer, unsigned neuron ) const
    {
        return diag[layer][neuron] != 0;
    }
    unsigned count() const;
};

// Multi-neuron constraints of one ReLU layer: post * z + pre * zhat <= offset.
struct MncLayer
{
    Eigen::MatrixXd post;
    Eigen::MatrixXd pre;
    Eigen::VectorXd offset;

    unsigned count() const
    {
        return offset.size();
    }
};

struct MncSet
{
    std::vector<MncLayer> layers;

    static MncSet empty( const Network &network );

    unsigned totalCount() const;
};

} // namespace mnbab
