#pragma once

#include "mnbab/Constraints.h"
#include "mnbab/Problem.h"

#include <Eigen/Dense>

#include <utility>
#include <vector>

namespace mnbab {

struct MncConfig
{
    bool enabled = true;
    unsigned maxPairsPerLayer = 50;
    unsigned maxFacetsPerPair = 12;
};

// Bounds on zhat_j + zhat_k and zhat_j - zhat_k.
struct OctagonBounds
{
    double sumLower = 0.0;
    double sumUpper = 0.0;
    double diffLower = 0.0;
    double diffUpper = 0.0;
};

// Two unstable neurons of one layer with their joint input region: the box
// of their bounds cut by the octagon bounds.
struct NeuronGroup
{
    unsigned layer = 0;
    unsigned first = 0;
    unsigned second = 0;
    double firstLower = 0.0;
    double firstUpper = 0.0;
    double secondLower = 0.0;
    double secondUpper = 0.0;
    OctagonBounds octagon;
};

// post . (z_j, z_k) + pre . (zhat_j, zhat_k) <= offset, with
// max(|post|, |pre|) = 1.
struct PairConstraint
{
    Eigen::Vector2d post;
    Eigen::Vector2d pre;
    double offset = 0.0;
};

std::vector<OctagonBounds> octahedralPairBounds( const VerificationProblem &problem,
                                                 unsigned layer,
                                                 const std::vector<std::pair<unsigned, unsigned>> &pairs,
                                                 const NeuronBounds &bounds );

// Points whose ReLU images span the convex hull of the ReLU graph over the
// group's region: octagon vertices, axis crossings of its edges and the
// origin when inside. Empty if the region is empty.
std::vector<Eigen::Vector2d> groupRegionPoints( const NeuronGroup &group );

/*
  Facets of the exact convex hull of {(max(0, v), v) : v in the group
  region}, oriented as <= constraints, normalized and deduplicated. Rows
  implied by the two triangle relaxations are dropped; at most maxFacets
  rows are kept, deepest cuts first. Lower-dimensional hulls contribute
  their equalities as pairs of inequalities.
*/
std::vector<PairConstraint> pairHullConstraints( const NeuronGroup &group, unsigned maxFacets = 12 );

// Ranked pairs of unstable neurons of one layer (largest triangle-area product first).
std::vector<std::pair<unsigned, unsigned>> selectPairs( const LayerBounds &bounds, unsigned maxPairs );

MncSet generateMnc( const VerificationProblem &problem, const NeuronBounds &bounds, const MncConfig &config );

} // namespace mnbab
