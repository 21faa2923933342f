#pragma once

#include "mnbab/Problem.h"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>

namespace mnbab {

struct AttackConfig
{
    bool enabled = true;
    unsigned steps = 50;
    unsigned restarts = 5;
    // Step size as a fraction of epsilon, decayed linearly to 10%.
    double stepFraction = 0.25;
    std::uint64_t seed = 0;
};

// Smallest property row at x and its gradient (subgradient 0 at ReLU kinks).
double marginAndGradient( const VerificationProblem &problem, const Eigen::VectorXd &x, Eigen::VectorXd *gradient );

/*
  PGD on the smallest property row. Restart 0 starts at the center, later
  restarts at random region points. Returns the first point whose smallest
  row is <= 0 under exact forward evaluation.
*/
std::optional<Eigen::VectorXd> pgdAttack( const VerificationProblem &problem, const AttackConfig &config );

} // namespace mnbab
