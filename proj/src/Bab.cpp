#include "mnbab/Bab.h"

#include "mnbab/Error.h"
#include "mnbab/Lp.h"

#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

namespace mnbab {

std::string statusName( Status status )
{
    switch ( status )
    {
    case Status::VERIFIED:
        return "verified";
    case Status::FALSIFIED:
        return "falsified";
    case Status::UNKNOWN:
        return "unknown";
    }
    return "unknown";
}

bool SubproblemQueue::later( const Item &a, const Item &b )
{
    if ( a.bound != b.bound )
        return a.bound > b.bound;
    return a.order > b.order;
}

void SubproblemQueue::push( Subproblem sub )
{
    double bound = sub.lowerBound;
    _heap.push_back( Item{ bound, _counter++, std::move( sub ) } );
    std::push_heap( _heap.begin(), _heap.end(), later );
}

std::vector<Subproblem> SubproblemQueue::popBatch( unsigned batchSize )
{
    std::vector<Subproblem> batch;
    while ( !_heap.empty() && batch.size() < std::max( 1u, batchSize ) )
    {
        std::pop_heap( _heap.begin(), _heap.end(), later );
        batch.push_back( std::move( _heap.back().sub ) );
        _heap.pop_back();
    }
    return batch;
}

double SubproblemQueue::minimumBound() const
{
    return _heap.empty() ? std::numeric_limits<double>::infinity() : _heap.front().bound;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds( Clock::time_point since )
{
    return std::chrono::duration<double>( Clock::now() - since ).count();
}

struct BoundOutcome
{
    enum Kind { PRUNED, INFEASIBLE, BRANCH, FALSIFIED, UNDECIDED };

    Kind kind = BRANCH;
    double bound = -std::numeric_limits<double>::infinity();
    std::optional<Eigen::VectorXd> witness;
};

const char *outcomeName( BoundOutcome::Kind kind )
{
    switch ( kind )
    {
    case BoundOutcome::PRUNED:
        return "pruned";
    case BoundOutcome::INFEASIBLE:
        return "infeasible";
    case BoundOutcome::BRANCH:
        return "branched";
    case BoundOutcome::FALSIFIED:
        return "falsified";
    case BoundOutcome::UNDECIDED:
        return "undecided";
    }
    return "";
}

class Driver
{
public:
    Driver( const VerificationProblem &problem, const VerifyConfig &config )
        : _problem( problem )
        , _config( config )
        , _refiner( config.opt )
        , _layers( problem.network.numReluLayers() )
    {
    }

    VerdictReport run();

private:
    const VerificationProblem &_problem;
    const VerifyConfig &_config;
    OptimizingRefiner _refiner;
    const unsigned _layers;
    Clock::time_point _start;

    MncSet _mnc;
    std::optional<SplitCostModel> _costs;
    NeuronBounds _rootBounds;
    VerdictReport _report;

    const IntermediateRefiner *refiner() const
    {
        return _config.opt.itersIntermediate > 0 ? &_refiner : nullptr;
    }
    bool tracing() const
    {
        return _config.recordTrace || !_config.tracePath.empty();
    }
    bool outOfBudget() const
    {
        return seconds( _start ) > _config.timeout || _report.subproblems >= _config.maxSubproblems;
    }

    BoundOutcome bound( Subproblem &sub, unsigned row ) const;
    BoundOutcome settleFullySplit( Subproblem &sub, unsigned row, double bound ) const;
    RowReport verifyRow( unsigned row, Eigen::VectorXd &witness );
    void branch( const Subproblem &sub, SubproblemQueue &queue ) const;
};

BoundOutcome Driver::bound( Subproblem &sub, unsigned row ) const
{
    BoundOutcome outcome;
    if ( sub.firstStale < _layers )
    {
        BoundsResult fresh = computeBounds(
            _problem, sub.splits, _mnc, _config.intermediate, &sub.bounds, sub.firstStale, refiner() );
        if ( fresh.infeasible )
        {
            outcome.kind = BoundOutcome::INFEASIBLE;
            outcome.bound = std::numeric_limits<double>::infinity();
            return outcome;
        }
        sub.bounds = std::move( fresh.layers );
        sub.firstStale = _layers;
    }

    unsigned iterations = sub.depth == 0 ? _config.opt.itersRoot : _config.opt.itersBranch;
    OptimizeResult result = optimize( _problem, sub.bounds, sub.splits, _mnc, sub.params, row, iterations, _config.opt );
    sub.params = std::move( result.params );
    sub.aPrime = std::move( result.aPrime );
    outcome.bound = std::max( result.bound, sub.lowerBound );

    if ( result.primal.minOverRows <= 0.0 && _problem.region.contains( result.primal.witness, 1e-12 ) )
    {
        outcome.kind = BoundOutcome::FALSIFIED;
        outcome.witness = result.primal.witness;
        return outcome;
    }
    if ( outcome.bound > 0.0 )
    {
        outcome.kind = BoundOutcome::PRUNED;
        return outcome;
    }
    if ( fullySplit( sub.bounds, sub.splits ) )
        return settleFullySplit( sub, row, outcome.bound );
    outcome.kind = BoundOutcome::BRANCH;
    return outcome;
}

// With every neuron fixed the network is affine on the subproblem: solve the
// LP exactly where possible, otherwise keep optimizing the multipliers.
BoundOutcome Driver::settleFullySplit( Subproblem &sub, unsigned row, double bound ) const
{
    BoundOutcome outcome;
    outcome.bound = bound;
    outcome.kind = BoundOutcome::UNDECIDED;

    auto counterexample = [&]( const Eigen::VectorXd &x ) {
        return _problem.region.contains( x, 1e-12 ) && _problem.network.forward( x ).minCoeff() <= 0.0;
    };

    std::optional<LpResult> lp = exactSplitMinimum( _problem, sub.bounds, sub.splits, row );
    if ( lp )
    {
        if ( lp->status == LpResult::INFEASIBLE )
        {
            outcome.kind = BoundOutcome::INFEASIBLE;
            outcome.bound = std::numeric_limits<double>::infinity();
            return outcome;
        }
        if ( counterexample( lp->x ) )
        {
            outcome.kind = BoundOutcome::FALSIFIED;
            outcome.witness = lp->x;
            return outcome;
        }
        if ( lp->value > 0.0 )
        {
            outcome.kind = BoundOutcome::PRUNED;
            outcome.bound = std::max( bound, lp->value );
        }
        return outcome;
    }

    OptimizeResult result =
        optimize( _problem, sub.bounds, sub.splits, _mnc, sub.params, row, _config.itersFullySplit, _config.opt );
    outcome.bound = std::max( bound, result.bound );
    if ( counterexample( result.primal.witness ) )
    {
        outcome.kind = BoundOutcome::FALSIFIED;
        outcome.witness = result.primal.witness;
    }
    else if ( outcome.bound > 0.0 )
        outcome.kind = BoundOutcome::PRUNED;
    return outcome;
}

void Driver::branch( const Subproblem &sub, SubproblemQueue &queue ) const
{
    BranchingScore scores;
    bool useBabsr = _config.branch.heuristic == Heuristic::BABSR;
    if ( !useBabsr )
    {
        scores = acsScore( sub.params, _mnc, sub.bounds, sub.splits );
        bool allZero = true;
        for ( const auto &layer : scores.layers )
            if ( ( layer.array() > 0.0 ).any() )
                allZero = false;
        useBabsr = allZero;
    }
    if ( useBabsr )
        scores = babsrScore( sub.aPrime, sub.bounds, sub.splits );

    BranchDecision decision = decide( scores, sub.bounds, sub.splits, _config.branch.cab ? &*_costs : nullptr );
    queue.push( applySplit( sub, decision, SplitMatrix::NEGATIVE ) );
    queue.push( applySplit( sub, decision, SplitMatrix::POSITIVE ) );
}

RowReport Driver::verifyRow( unsigned row, Eigen::VectorXd &witness )
{
    RowReport report;
    report.row = row;

    Subproblem root;
    root.splits = SplitMatrix::none( _problem.network );
    root.bounds = _rootBounds;
    root.firstStale = _layers;
    root.params = DualParameters::initial( ParamLayout::build( _rootBounds, root.splits, _mnc ), _rootBounds );

    SubproblemQueue queue;
    queue.push( std::move( root ) );

    double resolvedMin = std::numeric_limits<double>::infinity();
    bool undecided = false;
    const unsigned threads = std::max( 1u, _config.threads );

    while ( !queue.empty() )
    {
        // The root of every row is the shared root subproblem.
        if ( report.subproblems > 0 && outOfBudget() )
        {
            report.lowerBound = std::min( queue.minimumBound(), resolvedMin );
            _report.reason = seconds( _start ) > _config.timeout ? "timeout" : "subproblem budget exhausted";
            return report;
        }

        std::vector<Subproblem> batch = queue.popBatch( _config.batchSize );
        std::vector<BoundOutcome> outcomes( batch.size() );
        std::vector<std::exception_ptr> errors( batch.size() );

        auto work = [&]( unsigned worker, unsigned stride ) {
            for ( size_t i = worker; i < batch.size(); i += stride )
            {
                try
                {
                    outcomes[i] = bound( batch[i], row );
                }
                catch ( ... )
                {
                    errors[i] = std::current_exception();
                }
            }
        };
        const unsigned workers = std::min<unsigned>( threads, batch.size() );
        if ( workers <= 1 )
            work( 0, 1 );
        else
        {
            std::vector<std::thread> pool;
            for ( unsigned w = 0; w < workers; ++w )
                pool.emplace_back( work, w, workers );
            for ( auto &t : pool )
                t.join();
        }
        for ( auto &error : errors )
            if ( error )
                std::rethrow_exception( error );

        for ( size_t i = 0; i < batch.size(); ++i )
        {
            Subproblem &sub = batch[i];
            const BoundOutcome &outcome = outcomes[i];
            ++report.subproblems;
            if ( sub.depth > 0 || _report.subproblems == 0 )
                ++_report.subproblems;

            switch ( outcome.kind )
            {
            case BoundOutcome::FALSIFIED:
                witness = *outcome.witness;
                report.status = Status::FALSIFIED;
                break;
            case BoundOutcome::PRUNED:
            case BoundOutcome::INFEASIBLE:
                resolvedMin = std::min( resolvedMin, outcome.bound );
                break;
            case BoundOutcome::UNDECIDED:
                resolvedMin = std::min( resolvedMin, outcome.bound );
                undecided = true;
                break;
            case BoundOutcome::BRANCH:
                sub.lowerBound = outcome.bound;
                branch( sub, queue );
                break;
            }

            if ( tracing() )
            {
                TraceEntry entry;
                entry.row = row;
                entry.index = report.subproblems - 1;
                entry.depth = sub.depth;
                entry.bound = outcome.bound;
                entry.outcome = outcomeName( outcome.kind );
                double pending = std::numeric_limits<double>::infinity();
                for ( size_t k = i + 1; k < batch.size(); ++k )
                    pending = std::min( pending, batch[k].lowerBound );
                entry.globalLowerBound = std::min( { queue.minimumBound(), resolvedMin, pending } );
                _report.trace.push_back( entry );
            }

            if ( report.status == Status::FALSIFIED )
            {
                report.lowerBound = std::min( queue.minimumBound(), resolvedMin );
                return report;
            }
        }
    }

    report.lowerBound = resolvedMin;
    if ( undecided )
        _report.reason = "fully split subproblem left undecided";
    else
        report.status = Status::VERIFIED;
    return report;
}

VerdictReport Driver::run()
{
    _start = Clock::now();

    // Attack first.
    auto attackStart = Clock::now();
    AttackConfig attack = _config.attack;
    attack.seed = _config.seed;
    std::optional<Eigen::VectorXd> found = pgdAttack( _problem, attack );
    _report.attackTime = seconds( attackStart );
    if ( found )
    {
        _report.status = Status::FALSIFIED;
        _report.witness = *found;
        _report.reason = "attack";
        _report.wallTime = seconds( _start );
        return _report;
    }

    auto rootStart = Clock::now();
    SplitMatrix none = SplitMatrix::none( _problem.network );
    MncSet noMnc = MncSet::empty( _problem.network );
    BoundsResult root = computeBounds( _problem, none, noMnc, _config.intermediate, nullptr, 0, refiner() );
    _rootBounds = std::move( root.layers );
    _mnc = generateMnc( _problem, _rootBounds, _config.mnc );
    _costs.emplace( _problem.network, _mnc );
    _report.rootTime = seconds( rootStart );

    auto branchStart = Clock::now();
    std::vector<unsigned> order( _problem.numRows() );
    std::iota( order.begin(), order.end(), 0u );
    if ( _config.hardestFirst )
    {
        Eigen::VectorXd margins = _problem.network.forward( _problem.region.project( _problem.region.center ) );
        std::stable_sort( order.begin(), order.end(), [&]( unsigned a, unsigned b ) { return margins[a] < margins[b]; } );
    }

    _report.status = Status::VERIFIED;
    double lowest = std::numeric_limits<double>::infinity();
    for ( unsigned row : order )
    {
        Eigen::VectorXd witness;
        RowReport rowReport = verifyRow( row, witness );
        lowest = std::min( lowest, rowReport.lowerBound );
        _report.rows.push_back( rowReport );
        if ( rowReport.status == Status::FALSIFIED )
        {
            _report.status = Status::FALSIFIED;
            _report.witness = witness;
            _report.reason = "counterexample in subproblem";
            break;
        }
        if ( rowReport.status == Status::UNKNOWN )
        {
            _report.status = Status::UNKNOWN;
            break;
        }
    }
    _report.lowerBound = lowest;
    _report.branchTime = seconds( branchStart );
    _report.wallTime = seconds( _start );
    return _report;
}

nlohmann::json boundJson( double value )
{
    if ( std::isfinite( value ) )
        return value;
    return nullptr;
}

} // namespace

VerdictReport verify( const VerificationProblem &problem, const VerifyConfig &config )
{
    Driver driver( problem, config );
    VerdictReport report = driver.run();
    if ( !config.tracePath.empty() )
    {
        std::ofstream out( config.tracePath );
        if ( !out )
            throw Error( Error::IO_ERROR, "cannot write trace file '" + config.tracePath + "'" );
        out << traceToCsv( report.trace );
    }
    return report;
}

std::string reportToJson( const VerdictReport &report )
{
    nlohmann::json j;
    j["schema_version"] = VerdictReport::SCHEMA_VERSION;
    j["status"] = statusName( report.status );
    if ( report.witness )
        j["witness"] = std::vector<double>( report.witness->data(), report.witness->data() + report.witness->size() );
    else
        j["witness"] = nullptr;
    j["lower_bound"] = boundJson( report.lowerBound );
    j["subproblems"] = report.subproblems;
    j["reason"] = report.reason;
    j["time"] = { { "total", report.wallTime },
                  { "attack", report.attackTime },
                  { "root", report.rootTime },
                  { "branch", report.branchTime } };
    j["rows"] = nlohmann::json::array();
    for ( const auto &row : report.rows )
        j["rows"].push_back( { { "row", row.row },
                               { "status", statusName( row.status ) },
                               { "lower_bound", boundJson( row.lowerBound ) },
                               { "subproblems", row.subproblems } } );
    return j.dump( 2 );
}

std::string traceToCsv( const std::vector<TraceEntry> &trace )
{
    std::ostringstream out;
    out.precision( 17 );
    out << "row,index,depth,bound,outcome,global_lower_bound\n";
    for ( const auto &e : trace )
        out << e.row << ',' << e.index << ',' << e.depth << ',' << e.bound << ',' << e.outcome << ','
            << e.globalLowerBound << '\n';
    return out.str();
}

} // namespace mnbab
