#include "TestSupport.h"

#include "mnbab/Error.h"
#include "mnbab/Oracle.h"
#include "mnbab/Relax.h"

#include <doctest.h>

#include <limits>
#include <set>

using namespace mnbab;
using namespace testsupport;

namespace {

InputRegion box( const Eigen::VectorXd &center, double eps )
{
    InputRegion region;
    region.center = center;
    region.epsilon = eps;
    return region;
}

template <typename F> Error::Code errorCode( F &&f )
{
    try
    {
        f();
    }
    catch ( const Error &e )
    {
        return e.code();
    }
    FAIL( "no error thrown" );
    return Error::IO_ERROR;
}

} // namespace

TEST_SUITE( "oracle" )
{
    TEST_CASE( "linear networks match exact back-substitution" )
    {
        Rng rng( 70 );
        for ( int n = 0; n < 20; ++n )
        {
            Network net( 3, { Layer::affine( randomMatrix( rng, 4, 3 ), randomVector( rng, 4 ) ),
                              Layer::affine( randomMatrix( rng, 2, 4 ), randomVector( rng, 2 ) ) } );
            VerificationProblem problem =
                makeProblem( net, box( randomVector( rng, 3 ), 0.3 ), { Eigen::MatrixXd::Identity( 2, 2 ), Eigen::VectorXd::Zero( 2 ) } );
            OracleResult r = exactMinima( problem );
            BoundsResult b = computeBounds( problem, SplitMatrix::none( problem.network ), MncSet::empty( problem.network ) );
            CHECK( r.unstable == 0 );
            for ( int row = 0; row < 2; ++row )
                CHECK( r.rowMinima[row] == doctest::Approx( b.output.lower[row] ).epsilon( 1e-12 ) );
        }
    }

    TEST_CASE( "one unstable neuron on a line" )
    {
        // relu(x) - 0.5 (x + 5) + 2.5 + 0.2 over [-1, 2]; the second neuron is always active.
        Eigen::MatrixXd W( 2, 1 );
        W << 1, 1;
        Eigen::MatrixXd V( 1, 2 );
        V << 1, -0.5;
        Network twoPath( 1, { Layer::affine( W, Eigen::Vector2d( 0, 5 ) ), Layer::relu( 2 ),
                              Layer::affine( V, Eigen::VectorXd::Constant( 1, 2.5 ) ) } );
        PropertyRows row{ Eigen::MatrixXd::Ones( 1, 1 ), Eigen::VectorXd::Constant( 1, 0.2 ) };
        VerificationProblem problem = makeProblem( twoPath, box( Eigen::VectorXd::Constant( 1, 0.5 ), 1.5 ), row );
        OracleResult r = exactMinima( problem );
        CHECK( r.unstable == 1 );
        CHECK( r.feasiblePatterns == 2 );
        // min over [-1, 0] of -0.5x + 0.2 is 0.2 at 0; over [0, 2] of 0.5x + 0.2 is 0.2 at 0.
        CHECK( r.rowMinima[0] == doctest::Approx( 0.2 ) );
        CHECK( std::abs( r.witnesses[0][0] ) <= 1e-12 );
    }

    TEST_CASE( "exact minimum agrees with dense sampling" )
    {
        Rng rng( 71 );
        for ( int n = 0; n < 50; ++n )
        {
            Network net = randomMlp( rng, 2, { uniformInt( rng, 4, 8 ), uniformInt( rng, 4, 8 ) }, 3 );
            ProblemOptions options;
            options.clip = n % 5 == 0;
            VerificationProblem problem = randomProblem( rng, net, options );
            OracleResult r = exactMinima( problem );
            for ( unsigned row = 0; row < problem.numRows(); ++row )
            {
                CHECK( problem.region.contains( r.witnesses[row], 1e-9 ) );
                CHECK( problem.network.forward( r.witnesses[row] )[row] == doctest::Approx( r.rowMinima[row] ).epsilon( 1e-9 ) );
            }

            Eigen::VectorXd lo = problem.region.boxLower(), hi = problem.region.boxUpper();
            Eigen::VectorXd gridMin = Eigen::VectorXd::Constant( problem.numRows(), 1e300 );
            std::set<std::vector<bool>> patterns;
            auto intervals = oracleIntervals( problem );
            for ( int a = 0; a < 100; ++a )
                for ( int b = 0; b < 100; ++b )
                {
                    Eigen::Vector2d x( lo[0] + ( hi[0] - lo[0] ) * a / 99.0, lo[1] + ( hi[1] - lo[1] ) * b / 99.0 );
                    std::vector<Eigen::VectorXd> pre;
                    Eigen::VectorXd y = referenceForward( problem.network, x, &pre );
                    gridMin = gridMin.cwiseMin( y );
                    std::vector<bool> key;
                    for ( size_t i = 0; i < pre.size(); ++i )
                        for ( Eigen::Index j = 0; j < pre[i].size(); ++j )
                            if ( intervals[i].first[j] < 0.0 && intervals[i].second[j] > 0.0 )
                                key.push_back( pre[i][j] > 0.0 );
                    patterns.insert( key );
                }
            CHECK( ( gridMin - r.rowMinima ).minCoeff() >= -1e-9 );
            // Every grid pattern is a feasible piece.
            CHECK( patterns.size() <= r.feasiblePatterns );
        }
    }

    TEST_CASE( "zero radius decides by the margins at the center" )
    {
        Rng rng( 72 );
        for ( int n = 0; n < 20; ++n )
        {
            Network net = randomMlp( rng, 3, { 5 }, 3 );
            Eigen::VectorXd center = randomVector( rng, 3 );
            unsigned label = uniformInt( rng, 0, 2 );
            VerificationProblem problem = makeProblem( net, box( center, 0.0 ), PropertyRows::robustness( { label, 3 } ) );
            OracleVerdict v = exactVerdict( problem );
            Eigen::VectorXd margins = problem.network.forward( center );
            CHECK( v.verified == ( margins.minCoeff() > 0.0 ) );
            CHECK( v.minimum == doctest::Approx( margins.minCoeff() ) );
            if ( !v.verified )
                CHECK( v.witness == center );
        }
    }

    TEST_CASE( "forced phases restrict the region" )
    {
        // relu(x) - 3 relu(x - 0.5) over [-1, 1].
        Eigen::MatrixXd W( 2, 1 );
        W << 1, 1;
        Network net( 1, { Layer::affine( W, Eigen::Vector2d( 0, -0.5 ) ), Layer::relu( 2 ),
                          Layer::affine( ( Eigen::MatrixXd( 1, 2 ) << 1, -3 ).finished(), Eigen::VectorXd::Zero( 1 ) ) } );
        VerificationProblem problem =
            makeProblem( net, box( Eigen::VectorXd::Zero( 1 ), 1.0 ), { Eigen::MatrixXd::Ones( 1, 1 ), Eigen::VectorXd::Zero( 1 ) } );
        CHECK( exactMin( problem, 0 ) == doctest::Approx( -0.5 ) );
        SplitMatrix forced = SplitMatrix::none( problem.network );
        forced.diag[0][1] = SplitMatrix::NEGATIVE;
        CHECK( exactMin( problem, 0, &forced ) == doctest::Approx( 0.0 ) );
        forced.diag[0][0] = SplitMatrix::NEGATIVE;
        forced.diag[0][1] = SplitMatrix::POSITIVE;
        CHECK( exactMin( problem, 0, &forced ) == std::numeric_limits<double>::infinity() );
    }

    TEST_CASE( "planted counterexample is falsified with a valid witness" )
    {
        Eigen::MatrixXd W( 2, 2 );
        W << 1, 1, 1, 0;
        Eigen::MatrixXd V( 2, 2 );
        V << 1, 0, 0, 3;
        Network net( 2, { Layer::affine( W, Eigen::Vector2d( 0.5, 0 ) ), Layer::relu( 2 ), Layer::affine( V, Eigen::Vector2d::Zero() ) } );
        VerificationProblem problem = makeProblem( net, box( Eigen::Vector2d( 0, 0.5 ), 0.6 ), PropertyRows::robustness( { 0, 2 } ) );
        OracleVerdict v = exactVerdict( problem );
        CHECK( !v.verified );
        CHECK( problem.region.contains( v.witness, 1e-9 ) );
        CHECK( problem.network.forward( v.witness )[v.row] <= 1e-12 );
    }

    TEST_CASE( "guard refuses large or non-box problems" )
    {
        Rng rng( 73 );
        Network wide = randomMlp( rng, 5, { 4 }, 2 );
        CHECK( errorCode( [&] { exactMinima( randomProblem( rng, wide, ProblemOptions() ) ); } ) == Error::ORACLE_GUARD );
        Network net = randomMlp( rng, 2, { 4 }, 2 );
        ProblemOptions l2;
        l2.norm = Norm::L2;
        CHECK( errorCode( [&] { exactMinima( randomProblem( rng, net, l2 ) ); } ) == Error::ORACLE_GUARD );
        Network deep = randomMlp( rng, 2, { 30 }, 2 );
        ProblemOptions big;
        big.epsLo = big.epsHi = 3.0;
        OracleLimits limits;
        limits.maxUnstable = 3;
        CHECK( errorCode( [&] { exactMinima( randomProblem( rng, deep, big ), nullptr, limits ); } ) == Error::ORACLE_GUARD );
    }
}
