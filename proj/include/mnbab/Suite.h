#pragma once

#include "mnbab/Network.h"
#include "mnbab/NetworkIO.h"
#include "mnbab/Problem.h"

#include <random>
#include <string>
#include <vector>

namespace mnbab {

struct RandomNetworkShape
{
    unsigned inputDim = 2;
    std::vector<unsigned> hidden = { 6, 6 };
    unsigned outputs = 3;
    double biasScale = 0.3;
};

// Fully connected ReLU network with N(0, 1/fan_in) weights.
Network randomNetwork( std::mt19937_64 &rng, const RandomNetworkShape &shape );

// Largest epsilon (to the given relative precision) for which the exact
// oracle verifies the problem; 0 if even the center violates it.
double criticalEpsilon( const Network &network,
                        const Eigen::VectorXd &center,
                        const PropertyRows &property,
                        double upper = 2.0,
                        double precision = 1e-4 );

struct SuiteInstance
{
    std::string name;
    Network network;
    SpecFile spec;
    double criticalEpsilon = 0.0;
};

/*
  Seeded tiny robustness instances whose epsilon sits a few percent below or
  above (alternating) the oracle's critical radius.
*/
std::vector<SuiteInstance> boundarySuite( std::uint64_t seed, unsigned count, double offset = 0.05 );

void writeSuite( const std::vector<SuiteInstance> &suite, const std::string &directory );

} // namespace mnbab
