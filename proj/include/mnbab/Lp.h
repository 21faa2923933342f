#pragma once

#include "mnbab/Constraints.h"
#include "mnbab/Problem.h"

#include <Eigen/Dense>

#include <limits>
#include <optional>

namespace mnbab {

struct LpResult
{
    enum Status { OPTIMAL, INFEASIBLE };

    Status status = INFEASIBLE;
    double value = std::numeric_limits<double>::infinity();
    Eigen::VectorXd x;
};

/*
  min c.x  subject to  A x <= b,  lower <= x <= upper  (finite box).
  Dense two-phase tableau simplex with Bland's rule.
*/
LpResult solveBoxLp( const Eigen::VectorXd &c,
                     const Eigen::MatrixXd &A,
                     const Eigen::VectorXd &b,
                     const Eigen::VectorXd &lower,
                     const Eigen::VectorXd &upper );

// Affine form M x + m of every ReLU pre-activation and of the output
// once each neuron's phase is fixed.
struct PhaseAffine
{
    std::vector<Eigen::MatrixXd> preM;
    std::vector<Eigen::VectorXd> preOffset;
    Eigen::MatrixXd outM;
    Eigen::VectorXd outOffset;
};

// phases[i][j] is true for an active neuron.
PhaseAffine phaseAffine( const Network &network, const std::vector<std::vector<bool>> &phases );

/*
  Exact minimum of property row `row` over the region restricted to a
  subproblem in which no neuron is both unstable and unsplit. Available for
  LINF regions only; value is +infinity when the restriction is empty.
*/
std::optional<LpResult> exactSplitMinimum( const VerificationProblem &problem,
                                           const NeuronBounds &bounds,
                                           const SplitMatrix &splits,
                                           unsigned row );

} // namespace mnbab
