#include "TestSupport.h"

#include "mnbab/DualOpt.h"
#include "mnbab/Lp.h"
#include "mnbab/Mnc.h"
#include "mnbab/Relax.h"

#include <doctest.h>

using namespace mnbab;
using namespace testsupport;

namespace {

NeuronGroup boxGroup( double l1, double u1, double l2, double u2 )
{
    NeuronGroup g;
    g.firstLower = l1;
    g.firstUpper = u1;
    g.secondLower = l2;
    g.secondUpper = u2;
    g.octagon = OctagonBounds{ l1 + l2, u1 + u2, l1 - u2, u1 - l2 };
    return g;
}

bool inOctagon( const NeuronGroup &g, double x, double y, double tolerance = 0.0 )
{
    const OctagonBounds &o = g.octagon;
    return x >= g.firstLower - tolerance && x <= g.firstUpper + tolerance && y >= g.secondLower - tolerance &&
           y <= g.secondUpper + tolerance && x + y >= o.sumLower - tolerance && x + y <= o.sumUpper + tolerance &&
           x - y >= o.diffLower - tolerance && x - y <= o.diffUpper + tolerance;
}

double slack( const PairConstraint &row, double x, double y )
{
    return row.offset - row.post[0] * std::max( x, 0.0 ) - row.post[1] * std::max( y, 0.0 ) - row.pre[0] * x - row.pre[1] * y;
}

NeuronGroup randomGroup( Rng &rng )
{
    NeuronGroup g = boxGroup( uniform( rng, -2, -0.1 ), uniform( rng, 0.1, 2 ), uniform( rng, -2, -0.1 ), uniform( rng, 0.1, 2 ) );
    OctagonBounds &o = g.octagon;
    // Cut the box with random diagonal bands that keep the origin.
    o.sumUpper = std::max( 0.05, o.sumUpper - uniform( rng, 0.0, 1.0 ) * o.sumUpper );
    o.sumLower = std::min( -0.05, o.sumLower - uniform( rng, 0.0, 1.0 ) * o.sumLower );
    o.diffUpper = std::max( 0.05, o.diffUpper - uniform( rng, 0.0, 1.0 ) * o.diffUpper );
    o.diffLower = std::min( -0.05, o.diffLower - uniform( rng, 0.0, 1.0 ) * o.diffLower );
    return g;
}

// max of objective . (z1, z2, zhat1, zhat2) over the rows plus the single
// neuron triangles and the octagon.
double relaxationMax( const NeuronGroup &g, const std::vector<PairConstraint> &rows, const Eigen::Vector4d &objective )
{
    std::vector<Eigen::Vector4d> A;
    std::vector<double> b;
    auto add = [&]( Eigen::Vector4d a, double offset ) {
        A.push_back( a );
        b.push_back( offset );
    };
    const double l[2] = { g.firstLower, g.secondLower }, u[2] = { g.firstUpper, g.secondUpper };
    for ( int i = 0; i < 2; ++i )
    {
        Eigen::Vector4d a = Eigen::Vector4d::Zero();
        a[i] = -1.0;
        a[2 + i] = 1.0;
        add( a, 0.0 );
        double s = u[i] / ( u[i] - l[i] );
        a = Eigen::Vector4d::Zero();
        a[i] = 1.0;
        a[2 + i] = -s;
        add( a, -s * l[i] );
    }
    add( Eigen::Vector4d( 0, 0, 1, 1 ), g.octagon.sumUpper );
    add( Eigen::Vector4d( 0, 0, -1, -1 ), -g.octagon.sumLower );
    add( Eigen::Vector4d( 0, 0, 1, -1 ), g.octagon.diffUpper );
    add( Eigen::Vector4d( 0, 0, -1, 1 ), -g.octagon.diffLower );
    for ( const auto &row : rows )
        add( Eigen::Vector4d( row.post[0], row.post[1], row.pre[0], row.pre[1] ), row.offset );

    Eigen::MatrixXd M( A.size(), 4 );
    Eigen::VectorXd rhs( A.size() );
    for ( size_t r = 0; r < A.size(); ++r )
    {
        M.row( r ) = A[r].transpose();
        rhs[r] = b[r];
    }
    Eigen::Vector4d lower( 0, 0, l[0], l[1] ), upper( u[0], u[1], u[0], u[1] );
    LpResult lp = solveBoxLp( -objective, M, rhs, lower, upper );
    REQUIRE( lp.status == LpResult::OPTIMAL );
    return -lp.value;
}

double hullMax( const NeuronGroup &g, const Eigen::Vector4d &objective )
{
    double best = -1e300;
    for ( const Eigen::Vector2d &p : groupRegionPoints( g ) )
        best = std::max( best, objective.dot( Eigen::Vector4d( std::max( p[0], 0.0 ), std::max( p[1], 0.0 ), p[0], p[1] ) ) );
    return best;
}

Network pairNetwork( const Eigen::MatrixXd &W, const Eigen::VectorXd &b )
{
    return Network( W.cols(), { Layer::affine( W, b ), Layer::relu( W.rows() ),
                                Layer::affine( Eigen::MatrixXd::Ones( 1, W.rows() ), Eigen::VectorXd::Zero( 1 ) ) } );
}

InputRegion box( const Eigen::VectorXd &center, double eps )
{
    InputRegion region;
    region.center = center;
    region.epsilon = eps;
    return region;
}

const PropertyRows identityRow{ Eigen::MatrixXd::Identity( 1, 1 ), Eigen::VectorXd::Zero( 1 ) };

} // namespace

TEST_SUITE( "mnc" )
{
    TEST_CASE( "independent inputs give box sums" )
    {
        VerificationProblem problem = makeProblem(
            pairNetwork( Eigen::MatrixXd::Identity( 2, 2 ), Eigen::Vector2d( 0.1, -0.2 ) ), box( Eigen::Vector2d( 0, 0 ), 1 ),
            identityRow );
        BoundsResult b = computeBounds( problem, SplitMatrix::none( problem.network ), MncSet::empty( problem.network ) );
        OctagonBounds o = octahedralPairBounds( problem, 0, { { 0, 1 } }, b.layers )[0];
        CHECK( o.sumUpper == doctest::Approx( b.layers[0].upper[0] + b.layers[0].upper[1] ) );
        CHECK( o.sumLower == doctest::Approx( b.layers[0].lower[0] + b.layers[0].lower[1] ) );
    }

    TEST_CASE( "anti-correlated pre-activations have a tight sum" )
    {
        Rng rng( 20 );
        for ( int n = 0; n < 20; ++n )
        {
            Eigen::MatrixXd W( 2, 3 );
            W.row( 0 ) = randomVector( rng, 3 ).transpose();
            W.row( 1 ) = -W.row( 0 );
            VerificationProblem problem =
                makeProblem( pairNetwork( W, Eigen::Vector2d::Zero() ), box( randomVector( rng, 3, 0.2 ), 0.5 ), identityRow );
            BoundsResult b = computeBounds( problem, SplitMatrix::none( problem.network ), MncSet::empty( problem.network ) );
            OctagonBounds o = octahedralPairBounds( problem, 0, { { 0, 1 } }, b.layers )[0];
            CHECK( std::abs( o.sumUpper ) <= 1e-12 );
            CHECK( std::abs( o.sumLower ) <= 1e-12 );
            CHECK( o.sumUpper <= b.layers[0].upper[0] + b.layers[0].upper[1] );
        }
    }

    TEST_CASE( "octahedral bounds contain sampled pairs" )
    {
        Rng rng( 21 );
        for ( int n = 0; n < 10; ++n )
        {
            Network net = n % 2 ? randomResidualNet( rng, 3, 5, 2 ) : randomMlp( rng, 3, { 5, 5 }, 2 );
            ProblemOptions options;
            options.norm = static_cast<Norm>( n % 3 );
            VerificationProblem problem = randomProblem( rng, net, options );
            BoundsResult b = computeBounds( problem, SplitMatrix::none( problem.network ), MncSet::empty( problem.network ) );
            for ( unsigned layer = 0; layer < b.layers.size(); ++layer )
            {
                std::vector<std::pair<unsigned, unsigned>> pairs = { { 0, 1 }, { 1, 3 }, { 2, 4 } };
                auto octagons = octahedralPairBounds( problem, layer, pairs, b.layers );
                for ( int s = 0; s < 10000; ++s )
                {
                    std::vector<Eigen::VectorXd> pre;
                    referenceForward( problem.network, sampleRegion( rng, problem.region ), &pre );
                    for ( size_t p = 0; p < pairs.size(); ++p )
                    {
                        double x = pre[layer][pairs[p].first], y = pre[layer][pairs[p].second];
                        const OctagonBounds &o = octagons[p];
                        REQUIRE( x + y >= o.sumLower - 1e-9 );
                        REQUIRE( x + y <= o.sumUpper + 1e-9 );
                        REQUIRE( x - y >= o.diffLower - 1e-9 );
                        REQUIRE( x - y <= o.diffUpper + 1e-9 );
                    }
                }
            }
        }
    }

    TEST_CASE( "box-only regions add nothing beyond the triangles" )
    {
        Rng rng( 22 );
        for ( int n = 0; n < 50; ++n )
        {
            NeuronGroup g = boxGroup( uniform( rng, -2, -0.1 ), uniform( rng, 0.1, 2 ), uniform( rng, -2, -0.1 ), uniform( rng, 0.1, 2 ) );
            CHECK( pairHullConstraints( g ).empty() );
        }
    }

    TEST_CASE( "rows plus triangles describe the exact hull" )
    {
        Rng rng( 23 );
        for ( int n = 0; n < 100; ++n )
        {
            NeuronGroup g = randomGroup( rng );
            std::vector<PairConstraint> rows = pairHullConstraints( g, 100 );
            for ( int d = 0; d < 20; ++d )
            {
                Eigen::Vector4d objective = randomVector( rng, 4 );
                CHECK( relaxationMax( g, rows, objective ) == doctest::Approx( hullMax( g, objective ) ).epsilon( 1e-7 ) );
            }
        }
    }

    TEST_CASE( "rows are normalized, supporting and sound" )
    {
        Rng rng( 24 );
        for ( int n = 0; n < 100; ++n )
        {
            NeuronGroup g = randomGroup( rng );
            std::vector<PairConstraint> rows = pairHullConstraints( g );
            CHECK( rows.size() <= 12 );
            std::vector<Eigen::Vector2d> points = groupRegionPoints( g );
            for ( const auto &row : rows )
            {
                double norm = std::max( row.post.cwiseAbs().maxCoeff(), row.pre.cwiseAbs().maxCoeff() );
                CHECK( norm == doctest::Approx( 1.0 ) );
                double tightest = 1e300;
                for ( const auto &p : points )
                    tightest = std::min( tightest, slack( row, p[0], p[1] ) );
                CHECK( std::abs( tightest ) <= 1e-9 );
            }
            int checked = 0;
            while ( checked < 10000 )
            {
                double x = uniform( rng, g.firstLower, g.firstUpper ), y = uniform( rng, g.secondLower, g.secondUpper );
                if ( !inOctagon( g, x, y ) )
                    continue;
                ++checked;
                for ( const auto &row : rows )
                    REQUIRE( slack( row, x, y ) >= -1e-9 );
            }
        }
    }

    TEST_CASE( "swapping the neurons of a symmetric region permutes the rows" )
    {
        NeuronGroup g = boxGroup( -1, 1, -1, 1 );
        g.octagon.sumUpper = 1.0;
        g.octagon.sumLower = -1.5;
        g.octagon.diffUpper = 0.8;
        g.octagon.diffLower = -0.8;
        std::vector<PairConstraint> rows = pairHullConstraints( g, 100 );
        CHECK( !rows.empty() );
        for ( const auto &row : rows )
        {
            bool found = false;
            for ( const auto &other : rows )
                found = found || ( std::abs( other.post[0] - row.post[1] ) < 1e-9 && std::abs( other.post[1] - row.post[0] ) < 1e-9 &&
                                   std::abs( other.pre[0] - row.pre[1] ) < 1e-9 && std::abs( other.pre[1] - row.pre[0] ) < 1e-9 &&
                                   std::abs( other.offset - row.offset ) < 1e-9 );
            CHECK( found );
        }
    }

    TEST_CASE( "region points are the octagon vertices and axis crossings" )
    {
        NeuronGroup g = boxGroup( -1, 1, -1, 1 );
        g.octagon.sumUpper = 1.0;
        std::vector<Eigen::Vector2d> points = groupRegionPoints( g );
        for ( const auto &p : points )
            CHECK( inOctagon( g, p[0], p[1], 1e-12 ) );
        auto has = [&]( double x, double y ) {
            for ( const auto &p : points )
                if ( std::abs( p[0] - x ) < 1e-12 && std::abs( p[1] - y ) < 1e-12 )
                    return true;
            return false;
        };
        CHECK( has( -1, -1 ) );
        CHECK( has( 1, 0 ) );
        CHECK( has( 0, 1 ) );
        CHECK( has( 0, 0 ) );
        CHECK( has( 0, -1 ) );
        CHECK( !has( 1, 1 ) );

        g.octagon.sumUpper = -3.0;
        CHECK( groupRegionPoints( g ).empty() );
    }

    TEST_CASE( "pairs are ranked by triangle area product" )
    {
        LayerBounds b{ Eigen::Vector4d( -1, -3, 0.5, -2 ), Eigen::Vector4d( 1, 3, 2, 2 ) };
        auto pairs = selectPairs( b, 10 );
        REQUIRE( pairs.size() == 3 );
        CHECK( pairs[0] == std::make_pair( 1u, 3u ) );
        CHECK( pairs[1] == std::make_pair( 0u, 1u ) );
        CHECK( pairs[2] == std::make_pair( 0u, 3u ) );
        CHECK( selectPairs( b, 1 ).size() == 1 );
        CHECK( selectPairs( b, 0 ).empty() );
    }

    TEST_CASE( "generation respects stability and limits" )
    {
        Rng rng( 25 );
        // Stable everywhere: tiny region around a point.
        Network net = randomMlp( rng, 3, { 6, 6 }, 2 );
        VerificationProblem stable = makeProblem( net, box( randomVector( rng, 3 ), 1e-6 ),
                                                  { Eigen::MatrixXd::Identity( 2, 2 ), Eigen::VectorXd::Zero( 2 ) } );
        BoundsResult b = computeBounds( stable, SplitMatrix::none( stable.network ), MncSet::empty( stable.network ) );
        CHECK( generateMnc( stable, b.layers, MncConfig() ).totalCount() == 0 );

        VerificationProblem wide = makeProblem( net, box( randomVector( rng, 3 ), 1.0 ),
                                                { Eigen::MatrixXd::Identity( 2, 2 ), Eigen::VectorXd::Zero( 2 ) } );
        b = computeBounds( wide, SplitMatrix::none( wide.network ), MncSet::empty( wide.network ) );
        MncConfig zero;
        zero.maxPairsPerLayer = 0;
        CHECK( generateMnc( wide, b.layers, zero ).totalCount() == 0 );
        MncConfig off;
        off.enabled = false;
        CHECK( generateMnc( wide, b.layers, off ).totalCount() == 0 );

        MncConfig small;
        small.maxPairsPerLayer = 2;
        small.maxFacetsPerPair = 3;
        MncSet limited = generateMnc( wide, b.layers, small );
        for ( const auto &layer : limited.layers )
            CHECK( layer.count() <= 6 );
        MncSet full = generateMnc( wide, b.layers, MncConfig() );
        CHECK( full.totalCount() > 0 );
        for ( size_t i = 0; i < full.layers.size(); ++i )
            for ( unsigned r = 0; r < full.layers[i].count(); ++r )
            {
                double norm = std::max( full.layers[i].post.row( r ).cwiseAbs().maxCoeff(),
                                        full.layers[i].pre.row( r ).cwiseAbs().maxCoeff() );
                CHECK( norm == doctest::Approx( 1.0 ) );
            }
    }

    TEST_CASE( "constraints tighten the optimized bound on correlated neurons" )
    {
        Rng rng( 26 );
        for ( int n = 0; n < 10; ++n )
        {
            // zhat = (p x1 + q x2, p x1 - q x2): the sum and difference are
            // bounded much tighter than the box, which only the pairwise hull sees.
            double p = uniform( rng, 0.5, 2.0 ), q = uniform( rng, 0.5, 2.0 );
            Eigen::MatrixXd W( 2, 2 );
            W << p, q, p, -q;
            double top = std::max( 2 * p, p + q );
            Network net( 2, { Layer::affine( W, Eigen::Vector2d::Zero() ), Layer::relu( 2 ),
                              Layer::affine( ( Eigen::MatrixXd( 1, 2 ) << -1, -1 ).finished(),
                                             Eigen::VectorXd::Constant( 1, top + 0.05 ) ) } );
            VerificationProblem problem = makeProblem( net, box( Eigen::Vector2d::Zero(), 1.0 ), identityRow );
            SplitMatrix splits = SplitMatrix::none( problem.network );
            BoundsResult b = computeBounds( problem, splits, MncSet::empty( problem.network ) );
            MncSet mnc = generateMnc( problem, b.layers, MncConfig() );
            CHECK( mnc.totalCount() > 0 );
            auto run = [&]( const MncSet &set ) {
                ParamLayout layout = ParamLayout::build( b.layers, splits, set );
                return optimize( problem, b.layers, splits, set, DualParameters::initial( layout, b.layers ), 0, 50, OptConfig() )
                    .bound;
            };
            double with = run( mnc ), without = run( MncSet::empty( problem.network ) );
            CHECK( without < 0.0 );
            CHECK( with > without );
            CHECK( with <= 0.05 + 1e-9 );
        }
    }
}
