#include "mnbab/Lp.h"

#include "mnbab/Error.h"

#include <algorithm>
#include <cmath>

namespace mnbab {

namespace {

class Tableau
{
public:
    Tableau( Eigen::MatrixXd table, std::vector<int> basis, double tolerance )
        : _table( std::move( table ) )
        , _basis( std::move( basis ) )
        , _tolerance( tolerance )
    {
    }

    Eigen::MatrixXd &table()
    {
        return _table;
    }
    std::vector<int> &basis()
    {
        return _basis;
    }

    // Reduced costs of `cost` in the last row; rhs cell holds -value.
    void setObjective( const Eigen::VectorXd &cost )
    {
        const Eigen::Index rows = _table.rows() - 1;
        _table.row( rows ).setZero();
        _table.row( rows ).head( cost.size() ) = cost.transpose();
        for ( Eigen::Index r = 0; r < rows; ++r )
        {
            double weight = cost[_basis[r]];
            if ( weight != 0.0 )
                _table.row( rows ) -= weight * _table.row( r );
        }
    }

    double value() const
    {
        return -_table( _table.rows() - 1, _table.cols() - 1 );
    }

    // Minimizes over columns < allowed.
    void minimize( Eigen::Index allowed )
    {
        const Eigen::Index rows = _table.rows() - 1;
        const Eigen::Index rhs = _table.cols() - 1;
        while ( true )
        {
            Eigen::Index entering = -1;
            for ( Eigen::Index j = 0; j < allowed; ++j )
                if ( _table( rows, j ) < -_tolerance )
                {
                    entering = j;
                    break;
                }
            if ( entering < 0 )
                return;

            Eigen::Index leaving = -1;
            double bestRatio = 0.0;
            for ( Eigen::Index r = 0; r < rows; ++r )
            {
                double pivot = _table( r, entering );
                if ( pivot <= _tolerance )
                    continue;
                double ratio = _table( r, rhs ) / pivot;
                if ( leaving < 0 || ratio < bestRatio - _tolerance ||
                     ( ratio <= bestRatio + _tolerance && _basis[r] < _basis[leaving] ) )
                {
                    leaving = r;
                    bestRatio = ratio;
                }
            }
            if ( leaving < 0 )
                throw Error( Error::PARAMETER_DOMAIN, "linear program is unbounded" );
            pivot( leaving, entering );
        }
    }

    void pivot( Eigen::Index row, Eigen::Index column )
    {
        _table.row( row ) /= _table( row, column );
        for ( Eigen::Index r = 0; r < _table.rows(); ++r )
            if ( r != row && _table( r, column ) != 0.0 )
                _table.row( r ) -= _table( r, column ) * _table.row( row );
        _basis[row] = column;
    }

private:
    Eigen::MatrixXd _table;
    std::vector<int> _basis;
    double _tolerance;
};

} // namespace

LpResult solveBoxLp( const Eigen::VectorXd &c,
                     const Eigen::MatrixXd &A,
                     const Eigen::VectorXd &b,
                     const Eigen::VectorXd &lower,
                     const Eigen::VectorXd &upper )
{
    const Eigen::Index n = c.size();
    if ( A.cols() != n || A.rows() != b.size() || lower.size() != n || upper.size() != n )
        throw Error( Error::DIMENSION_MISMATCH, "linear program dimensions do not agree" );

    LpResult result;
    if ( ( lower.array() > upper.array() ).any() )
        return result;

    // y = x - lower, 0 <= y <= width.
    Eigen::MatrixXd G( A.rows() + n, n );
    G << A, Eigen::MatrixXd::Identity( n, n );
    Eigen::VectorXd h( A.rows() + n );
    h << b - A * lower, upper - lower;

    const Eigen::Index m = G.rows();
    std::vector<Eigen::Index> negative;
    for ( Eigen::Index r = 0; r < m; ++r )
        if ( h[r] < 0.0 )
            negative.push_back( r );
    const Eigen::Index k = negative.size();
    const Eigen::Index columns = n + m + k;

    double scale = std::max( { 1.0, G.cwiseAbs().maxCoeff(), h.cwiseAbs().maxCoeff() } );
    const double tolerance = 1e-11 * scale;

    Eigen::MatrixXd table = Eigen::MatrixXd::Zero( m + 1, columns + 1 );
    std::vector<int> basis( m );
    Eigen::Index artificial = 0;
    for ( Eigen::Index r = 0; r < m; ++r )
    {
        double sign = h[r] < 0.0 ? -1.0 : 1.0;
        table.row( r ).head( n ) = sign * G.row( r );
        table( r, n + r ) = sign;
        table( r, columns ) = sign * h[r];
        if ( sign < 0.0 )
        {
            table( r, n + m + artificial ) = 1.0;
            basis[r] = n + m + artificial;
            ++artificial;
        }
        else
            basis[r] = n + r;
    }

    Tableau tableau( std::move( table ), std::move( basis ), tolerance );
    if ( k > 0 )
    {
        Eigen::VectorXd phaseOne = Eigen::VectorXd::Zero( columns );
        phaseOne.tail( k ).setOnes();
        tableau.setObjective( phaseOne );
        tableau.minimize( columns );
        if ( tableau.value() > 1e-9 * scale )
            return result;

        // Pivot remaining artificials out of the basis where possible.
        for ( Eigen::Index r = 0; r < m; ++r )
        {
            if ( tableau.basis()[r] < n + m )
                continue;
            for ( Eigen::Index j = 0; j < n + m; ++j )
                if ( std::abs( tableau.table()( r, j ) ) > tolerance )
                {
                    tableau.pivot( r, j );
                    break;
                }
        }
    }

    Eigen::VectorXd cost = Eigen::VectorXd::Zero( columns );
    cost.head( n ) = c;
    tableau.setObjective( cost );
    tableau.minimize( n + m );

    Eigen::VectorXd y = Eigen::VectorXd::Zero( n );
    for ( Eigen::Index r = 0; r < m; ++r )
        if ( tableau.basis()[r] < n )
            y[tableau.basis()[r]] = tableau.table()( r, columns );

    result.status = LpResult::OPTIMAL;
    result.x = ( lower + y ).cwiseMax( lower ).cwiseMin( upper );
    result.value = c.dot( result.x );
    return result;
}

namespace {

void propagatePhases( const std::vector<Layer> &layers,
                      const std::vector<std::vector<bool>> &phases,
                      Eigen::MatrixXd &M,
                      Eigen::VectorXd &offset,
                      PhaseAffine &out )
{
    for ( const auto &layer : layers )
    {
        if ( layer.isAffine() )
        {
            const auto &affine = layer.asAffine();
            M = affine.weights * M;
            offset = affine.weights * offset + affine.bias;
        }
        else if ( layer.isRelu() )
        {
            unsigned id = layer.asRelu().id;
            out.preM[id] = M;
            out.preOffset[id] = offset;
            for ( Eigen::Index j = 0; j < M.rows(); ++j )
                if ( !phases[id][j] )
                {
                    M.row( j ).setZero();
                    offset[j] = 0.0;
                }
        }
        else
        {
            Eigen::MatrixXd branchM = M;
            Eigen::VectorXd branchOffset = offset;
            propagatePhases( layer.asResidual().branch, phases, branchM, branchOffset, out );
            M += branchM;
            offset += branchOffset;
        }
    }
}

} // namespace

PhaseAffine phaseAffine( const Network &network, const std::vector<std::vector<bool>> &phases )
{
    PhaseAffine result;
    result.preM.resize( network.numReluLayers() );
    result.preOffset.resize( network.numReluLayers() );
    Eigen::MatrixXd M = Eigen::MatrixXd::Identity( network.inputDim(), network.inputDim() );
    Eigen::VectorXd offset = Eigen::VectorXd::Zero( network.inputDim() );
    propagatePhases( network.layers(), phases, M, offset, result );
    result.outM = std::move( M );
    result.outOffset = std::move( offset );
    return result;
}

std::optional<LpResult> exactSplitMinimum( const VerificationProblem &problem,
                                           const NeuronBounds &bounds,
                                           const SplitMatrix &splits,
                                           unsigned row )
{
    if ( problem.region.norm != Norm::LINF )
        return std::nullopt;

    std::vector<std::vector<bool>> phases( bounds.size() );
    unsigned constraints = 0;
    for ( unsigned i = 0; i < bounds.size(); ++i )
    {
        phases[i].resize( bounds[i].lower.size() );
        for ( unsigned j = 0; j < phases[i].size(); ++j )
        {
            int s = splits.at( i, j );
            if ( s == SplitMatrix::POSITIVE )
                phases[i][j] = true;
            else if ( s == SplitMatrix::NEGATIVE )
                phases[i][j] = false;
            else if ( bounds[i].lower[j] >= 0.0 )
                phases[i][j] = true;
            else if ( bounds[i].upper[j] <= 0.0 )
                phases[i][j] = false;
            else
                throw Error( Error::NO_BRANCHING_CANDIDATE, "subproblem is not fully split" );
        }
        constraints += phases[i].size();
    }

    PhaseAffine affine = phaseAffine( problem.network, phases );

    // Active: -zhat <= 0; inactive: zhat <= 0.
    const unsigned n = problem.region.dim();
    Eigen::MatrixXd A( constraints, n );
    Eigen::VectorXd b( constraints );
    unsigned r = 0;
    for ( unsigned i = 0; i < bounds.size(); ++i )
        for ( unsigned j = 0; j < phases[i].size(); ++j, ++r )
        {
            double sign = phases[i][j] ? -1.0 : 1.0;
            A.row( r ) = sign * affine.preM[i].row( j );
            b[r] = -sign * affine.preOffset[i][j];
        }

    LpResult result = solveBoxLp(
        affine.outM.row( row ).transpose(), A, b, problem.region.boxLower(), problem.region.boxUpper() );
    if ( result.status == LpResult::OPTIMAL )
        result.value += affine.outOffset[row];
    return result;
}

} // namespace mnbab
