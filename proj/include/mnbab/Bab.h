#pragma once

#include "mnbab/Branch.h"
#include "mnbab/DualOpt.h"
#include "mnbab/Falsify.h"
#include "mnbab/Mnc.h"
#include "mnbab/Problem.h"
#include "mnbab/Relax.h"

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace mnbab {

struct VerifyConfig
{
    OptConfig opt;
    MncConfig mnc;
    BranchConfig branch;
    AttackConfig attack;
    IntermediateMethod intermediate = IntermediateMethod::BACKSUBSTITUTION;

    double timeout = 360.0;
    unsigned maxSubproblems = 100000;
    unsigned batchSize = 1;
    unsigned threads = 1;
    // Rows with the smallest margin at the center go first.
    bool hardestFirst = true;
    // Ascent steps for a fully split subproblem that has no exact solver.
    unsigned itersFullySplit = 500;
    std::uint64_t seed = 0;
    // Trace entries are kept in the report when set or when tracePath is
    // given (the CSV is written there).
    bool recordTrace = false;
    std::string tracePath;
};

enum class Status { VERIFIED, FALSIFIED, UNKNOWN };

std::string statusName( Status status );

struct RowReport
{
    unsigned row = 0;
    Status status = Status::UNKNOWN;
    double lowerBound = -std::numeric_limits<double>::infinity();
    unsigned subproblems = 0;
};

struct TraceEntry
{
    unsigned row = 0;
    unsigned index = 0;
    unsigned depth = 0;
    double bound = 0.0;
    std::string outcome;
    double globalLowerBound = 0.0;
};

struct VerdictReport
{
    static constexpr int SCHEMA_VERSION = 1;

    Status status = Status::UNKNOWN;
    std::optional<Eigen::VectorXd> witness;
    // Lower bound on the smallest property row over the region, as far as
    // the run got.
    double lowerBound = -std::numeric_limits<double>::infinity();
    // The root counts once; every further bounded subproblem counts once.
    unsigned subproblems = 0;
    double wallTime = 0.0;
    double attackTime = 0.0;
    double rootTime = 0.0;
    double branchTime = 0.0;
    std::string reason;
    std::vector<RowReport> rows;
    std::vector<TraceEntry> trace;
};

VerdictReport verify( const VerificationProblem &problem, const VerifyConfig &config );

std::string reportToJson( const VerdictReport &report );
std::string traceToCsv( const std::vector<TraceEntry> &trace );

// Bounding queue ordered by lower bound, then by insertion.
class SubproblemQueue
{
public:
    void push( Subproblem sub );
    // Up to batchSize subproblems, smallest lower bound first.
    std::vector<Subproblem> popBatch( unsigned batchSize );

    bool empty() const
    {
        return _heap.empty();
    }
    size_t size() const
    {
        return _heap.size();
    }
    double minimumBound() const;

private:
    struct Item
    {
        double bound;
        std::uint64_t order;
        Subproblem sub;
    };
    std::vector<Item> _heap;
    std::uint64_t _counter = 0;

    static bool later( const Item &a, const Item &b );
};

} // namespace mnbab
