#pragma once

#include "mnbab/Constraints.h"
#include "mnbab/Problem.h"

#include <Eigen/Dense>

#include <vector>

namespace mnbab {

struct OracleLimits
{
    unsigned maxInputDim = 4;
    unsigned maxUnstable = 20;
};

struct OracleResult
{
    // Exact minimum of each property row and an input attaining it.
    Eigen::VectorXd rowMinima;
    std::vector<Eigen::VectorXd> witnesses;
    unsigned feasiblePatterns = 0;
    unsigned unstable = 0;
};

/*
  Brute-force minimum of every property row over a LINF region: every
  activation pattern of the interval-unstable neurons is enumerated
  depth-first and each feasible piece is minimized at the vertices of its
  input polytope. forced (optional) restricts neurons to a phase; a row
  minimum is +infinity if the restricted region is empty. Throws
  ORACLE_GUARD outside the limits.
*/
OracleResult exactMinima( const VerificationProblem &problem,
                          const SplitMatrix *forced = nullptr,
                          const OracleLimits &limits = OracleLimits() );

double exactMin( const VerificationProblem &problem,
                 unsigned row,
                 const SplitMatrix *forced = nullptr,
                 const OracleLimits &limits = OracleLimits() );

struct OracleVerdict
{
    bool verified = false;
    double minimum = 0.0;
    unsigned row = 0;
    Eigen::VectorXd witness;
};

OracleVerdict exactVerdict( const VerificationProblem &problem, const OracleLimits &limits = OracleLimits() );

// Interval bounds of every ReLU layer's pre-activations over the region box.
std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> oracleIntervals( const VerificationProblem &problem );

} // namespace mnbab
