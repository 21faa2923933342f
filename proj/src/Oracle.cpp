#include "mnbab/Oracle.h"

#include "mnbab/Error.h"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mnbab {

namespace {

using Intervals = std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>;

void intervalPass( const std::vector<Layer> &layers, Eigen::VectorXd &lo, Eigen::VectorXd &hi, Intervals &out )
{
    for ( const auto &layer : layers )
    {
        if ( layer.isAffine() )
        {
            const Eigen::MatrixXd &W = layer.asAffine().weights;
            Eigen::VectorXd newLo = layer.asAffine().bias;
            Eigen::VectorXd newHi = layer.asAffine().bias;
            for ( Eigen::Index r = 0; r < W.rows(); ++r )
                for ( Eigen::Index c = 0; c < W.cols(); ++c )
                {
                    double w = W( r, c );
                    newLo[r] += w >= 0.0 ? w * lo[c] : w * hi[c];
                    newHi[r] += w >= 0.0 ? w * hi[c] : w * lo[c];
                }
            lo = newLo;
            hi = newHi;
        }
        else if ( layer.isRelu() )
        {
            out[layer.asRelu().id] = { lo, hi };
            lo = lo.cwiseMax( 0.0 );
            hi = hi.cwiseMax( 0.0 );
        }
        else
        {
            Eigen::VectorXd branchLo = lo, branchHi = hi;
            intervalPass( layer.asResidual().branch, branchLo, branchHi, out );
            lo += branchLo;
            hi += branchHi;
        }
    }
}

// Affine maps x -> M x + m through the network under a phase assignment.
struct PieceMaps
{
    std::vector<Eigen::MatrixXd> preM;
    std::vector<Eigen::VectorXd> preM0;
    Eigen::MatrixXd outM;
    Eigen::VectorXd outM0;
};

void piecePass( const std::vector<Layer> &layers,
                const std::vector<std::vector<int>> &phase,
                Eigen::MatrixXd &M,
                Eigen::VectorXd &m,
                PieceMaps &out )
{
    for ( const auto &layer : layers )
    {
        if ( layer.isAffine() )
        {
            M = layer.asAffine().weights * M;
            m = layer.asAffine().weights * m + layer.asAffine().bias;
        }
        else if ( layer.isRelu() )
        {
            unsigned id = layer.asRelu().id;
            out.preM[id] = M;
            out.preM0[id] = m;
            for ( Eigen::Index j = 0; j < M.rows(); ++j )
                if ( phase[id][j] <= 0 )
                {
                    M.row( j ).setZero();
                    m[j] = 0.0;
                }
        }
        else
        {
            Eigen::MatrixXd branchM = M;
            Eigen::VectorXd branchM0 = m;
            piecePass( layer.asResidual().branch, phase, branchM, branchM0, out );
            M += branchM;
            m += branchM0;
        }
    }
}

PieceMaps pieceMaps( const Network &network, const std::vector<std::vector<int>> &phase )
{
    PieceMaps maps;
    maps.preM.resize( network.numReluLayers() );
    maps.preM0.resize( network.numReluLayers() );
    Eigen::MatrixXd M = Eigen::MatrixXd::Identity( network.inputDim(), network.inputDim() );
    Eigen::VectorXd m = Eigen::VectorXd::Zero( network.inputDim() );
    piecePass( network.layers(), phase, M, m, maps );
    maps.outM = M;
    maps.outM0 = m;
    return maps;
}

struct HalfSpace
{
    Eigen::VectorXd normal;
    double offset;
};

// A bounded polytope as its constraints and vertices.
struct Polytope
{
    std::vector<HalfSpace> constraints;
    std::vector<Eigen::VectorXd> vertices;
    double tolerance = 1e-9;
};

void addVertex( std::vector<Eigen::VectorXd> &vertices, const Eigen::VectorXd &v, double tolerance )
{
    for ( const auto &w : vertices )
        if ( ( w - v ).cwiseAbs().maxCoeff() <= tolerance )
            return;
    vertices.push_back( v );
}

bool satisfies( const Polytope &poly, const Eigen::VectorXd &x )
{
    for ( const auto &c : poly.constraints )
        if ( c.normal.dot( x ) > c.offset + poly.tolerance )
            return false;
    return true;
}

// Intersects with normal . x <= offset. New vertices lie on the hyperplane
// and on d-1 existing constraints.
Polytope cut( const Polytope &poly, HalfSpace space )
{
    Polytope result;
    result.tolerance = poly.tolerance;

    double size = space.normal.cwiseAbs().maxCoeff();
    if ( size == 0.0 )
    {
        if ( space.offset >= -poly.tolerance )
            return poly;
        return result;
    }
    space.normal /= size;
    space.offset /= size;

    bool allInside = true;
    for ( const auto &v : poly.vertices )
    {
        if ( space.normal.dot( v ) <= space.offset + poly.tolerance )
            result.vertices.push_back( v );
        else
            allInside = false;
    }
    if ( allInside )
        return poly;

    result.constraints = poly.constraints;
    result.constraints.push_back( space );

    const int d = space.normal.size();
    const int m = poly.constraints.size();
    std::vector<bool> selector( m, false );
    std::fill( selector.begin(), selector.begin() + std::min( d - 1, m ), true );
    if ( m < d - 1 )
        return result;
    do
    {
        Eigen::MatrixXd A( d, d );
        Eigen::VectorXd b( d );
        A.row( 0 ) = space.normal.transpose();
        b[0] = space.offset;
        int r = 1;
        for ( int i = 0; i < m; ++i )
            if ( selector[i] )
            {
                A.row( r ) = poly.constraints[i].normal.transpose();
                b[r] = poly.constraints[i].offset;
                ++r;
            }
        Eigen::FullPivLU<Eigen::MatrixXd> lu( A );
        if ( lu.rank() < d )
            continue;
        Eigen::VectorXd x = lu.solve( b );
        if ( satisfies( result, x ) )
            addVertex( result.vertices, x, poly.tolerance );
    } while ( std::prev_permutation( selector.begin(), selector.end() ) );
    return result;
}

struct Neuron
{
    unsigned layer;
    unsigned index;
};

struct Search
{
    const VerificationProblem &problem;
    std::vector<Neuron> open;
    std::vector<std::vector<int>> phase;
    OracleResult result;
};

void finishPiece( Search &search, const Polytope &poly )
{
    PieceMaps maps = pieceMaps( search.problem.network, search.phase );
    ++search.result.feasiblePatterns;
    for ( const auto &v : poly.vertices )
    {
        Eigen::VectorXd values = maps.outM * v + maps.outM0;
        for ( Eigen::Index r = 0; r < values.size(); ++r )
            if ( values[r] < search.result.rowMinima[r] )
            {
                search.result.rowMinima[r] = values[r];
                search.result.witnesses[r] = v;
            }
    }
}

void explore( Search &search, unsigned depth, const Polytope &poly )
{
    if ( poly.vertices.empty() )
        return;
    if ( depth == search.open.size() )
    {
        finishPiece( search, poly );
        return;
    }

    const Neuron neuron = search.open[depth];
    // Pre-activations of this layer only depend on earlier layers' phases.
    PieceMaps maps = pieceMaps( search.problem.network, search.phase );
    Eigen::VectorXd row = maps.preM[neuron.layer].row( neuron.index ).transpose();
    double offset = maps.preM0[neuron.layer][neuron.index];

    const int forced = search.phase[neuron.layer][neuron.index];
    // Active: zhat >= 0, i.e. -row . x <= offset.
    if ( forced >= 0 )
    {
        search.phase[neuron.layer][neuron.index] = 1;
        explore( search, depth + 1, cut( poly, HalfSpace{ -row, offset } ) );
    }
    if ( forced <= 0 )
    {
        search.phase[neuron.layer][neuron.index] = -1;
        explore( search, depth + 1, cut( poly, HalfSpace{ row, -offset } ) );
    }
    search.phase[neuron.layer][neuron.index] = forced;
}

} // namespace

std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> oracleIntervals( const VerificationProblem &problem )
{
    Intervals out( problem.network.numReluLayers() );
    Eigen::VectorXd lo = problem.region.boxLower();
    Eigen::VectorXd hi = problem.region.boxUpper();
    intervalPass( problem.network.layers(), lo, hi, out );
    return out;
}

OracleResult exactMinima( const VerificationProblem &problem, const SplitMatrix *forced, const OracleLimits &limits )
{
    const InputRegion &region = problem.region;
    if ( region.norm != Norm::LINF )
        throw Error( Error::ORACLE_GUARD, "the exact oracle only handles LINF regions" );
    if ( region.dim() > limits.maxInputDim )
        throw Error( Error::ORACLE_GUARD,
                     "input dimension " + std::to_string( region.dim() ) + " exceeds the oracle limit of " +
                         std::to_string( limits.maxInputDim ) );

    Intervals intervals = oracleIntervals( problem );
    Search search{ problem, {}, {}, {} };
    search.result.rowMinima = Eigen::VectorXd::Constant( problem.numRows(), std::numeric_limits<double>::infinity() );
    search.result.witnesses.assign( problem.numRows(), Eigen::VectorXd() );

    // phase: +1 active, -1 inactive, 0 open (becomes +-1 during the search).
    // Forced neurons stay on the open list with their sign preset so that
    // their phase constraint is imposed.
    bool empty = false;
    for ( unsigned i = 0; i < intervals.size(); ++i )
    {
        const auto &[lo, hi] = intervals[i];
        std::vector<int> phase( lo.size(), 0 );
        for ( unsigned j = 0; j < lo.size(); ++j )
        {
            int want = forced ? forced->at( i, j ) : 0;
            bool active = lo[j] >= 0.0;
            bool inactive = hi[j] <= 0.0;
            if ( want == SplitMatrix::POSITIVE )
            {
                phase[j] = 1;
                if ( inactive && hi[j] < 0.0 )
                    empty = true;
                if ( !active )
                    search.open.push_back( { i, j } );
            }
            else if ( want == SplitMatrix::NEGATIVE )
            {
                phase[j] = -1;
                if ( active && lo[j] > 0.0 )
                    empty = true;
                if ( !inactive )
                    search.open.push_back( { i, j } );
            }
            else if ( active )
                phase[j] = 1;
            else if ( inactive )
                phase[j] = -1;
            else
                search.open.push_back( { i, j } );
        }
        search.phase.push_back( std::move( phase ) );
    }

    search.result.unstable = search.open.size();
    if ( search.open.size() > limits.maxUnstable )
        throw Error( Error::ORACLE_GUARD,
                     std::to_string( search.open.size() ) + " unstable neurons exceed the oracle limit of " +
                         std::to_string( limits.maxUnstable ) );
    if ( empty )
        return search.result;

    const unsigned d = region.dim();
    Eigen::VectorXd lo = region.boxLower();
    Eigen::VectorXd hi = region.boxUpper();
    Polytope box;
    box.tolerance = 1e-9 * std::max( 1.0, std::max( lo.cwiseAbs().maxCoeff(), hi.cwiseAbs().maxCoeff() ) );
    for ( unsigned i = 0; i < d; ++i )
    {
        box.constraints.push_back( { Eigen::VectorXd::Unit( d, i ), hi[i] } );
        box.constraints.push_back( { -Eigen::VectorXd::Unit( d, i ), -lo[i] } );
    }
    for ( unsigned corner = 0; corner < ( 1u << d ); ++corner )
    {
        Eigen::VectorXd v( d );
        for ( unsigned i = 0; i < d; ++i )
            v[i] = ( corner >> i ) & 1u ? hi[i] : lo[i];
        addVertex( box.vertices, v, box.tolerance );
    }

    // Forced phases are preset; explore() keeps a preset sign and only
    // branches on neurons whose phase is still 0.
    explore( search, 0, box );
    return search.result;
}

double exactMin( const VerificationProblem &problem, unsigned row, const SplitMatrix *forced, const OracleLimits &limits )
{
    if ( row >= problem.numRows() )
        throw Error( Error::DIMENSION_MISMATCH, "property row " + std::to_string( row ) + " does not exist" );
    return exactMinima( problem, forced, limits ).rowMinima[row];
}

OracleVerdict exactVerdict( const VerificationProblem &problem, const OracleLimits &limits )
{
    OracleResult minima = exactMinima( problem, nullptr, limits );
    OracleVerdict verdict;
    Eigen::Index row = 0;
    verdict.minimum = minima.rowMinima.minCoeff( &row );
    verdict.row = row;
    verdict.witness = minima.witnesses[row];
    verdict.verified = verdict.minimum > 0.0;
    return verdict;
}

} // namespace mnbab
