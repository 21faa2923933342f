#include "TestSupport.h"

#include "mnbab/Error.h"
#include "mnbab/NetworkIO.h"

#include <doctest.h>

#include <cstring>
#include <limits>

using namespace mnbab;
using namespace testsupport;

namespace {

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

bool bitEqual( const Eigen::MatrixXd &a, const Eigen::MatrixXd &b )
{
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           std::memcmp( a.data(), b.data(), sizeof( double ) * a.size() ) == 0;
}

void expectSameLayers( const std::vector<Layer> &a, const std::vector<Layer> &b )
{
    REQUIRE( a.size() == b.size() );
    for ( size_t i = 0; i < a.size(); ++i )
    {
        REQUIRE( a[i].op.index() == b[i].op.index() );
        if ( a[i].isAffine() )
        {
            CHECK( bitEqual( a[i].asAffine().weights, b[i].asAffine().weights ) );
            CHECK( bitEqual( a[i].asAffine().bias, b[i].asAffine().bias ) );
            CHECK( a[i].asAffine().conv.has_value() == b[i].asAffine().conv.has_value() );
        }
        else if ( a[i].isRelu() )
            CHECK( a[i].asRelu().width == b[i].asRelu().width );
        else
            expectSameLayers( a[i].asResidual().branch, b[i].asResidual().branch );
    }
}

ConvDescriptor randomConv( Rng &rng, ConvShape shape )
{
    ConvDescriptor conv;
    conv.shape = shape;
    for ( unsigned i = 0; i < shape.outChannels * shape.inChannels * shape.kernelHeight * shape.kernelWidth; ++i )
        conv.kernel.push_back( uniform( rng, -1.0, 1.0 ) );
    for ( unsigned i = 0; i < shape.outChannels; ++i )
        conv.bias.push_back( uniform( rng, -1.0, 1.0 ) );
    return conv;
}

} // namespace

TEST_SUITE( "model" )
{
    TEST_CASE( "identity network loads with its widths" )
    {
        Network net = parseNetwork(
            R"({"input_dim":2,"layers":[{"type":"affine","W":[[1,0],[0,1]],"b":[0,0]},{"type":"relu"}]})" );
        CHECK( net.inputDim() == 2 );
        CHECK( net.outputDim() == 2 );
        REQUIRE( net.layers().size() == 2 );
        CHECK( net.layers()[0].isAffine() );
        CHECK( net.layers()[1].asRelu().width == 2 );
        CHECK( net.numReluLayers() == 1 );
    }

    TEST_CASE( "all-ones 2x2 kernel on a 3x3 image materializes to im2col rows" )
    {
        Network net = parseNetwork(
            R"({"input_dim":9,"layers":[{"type":"conv","out_ch":1,"kernel":[[[[1,1],[1,1]]]],"stride":1,"padding":0,"bias":[0]}]})" );
        const Eigen::MatrixXd &W = net.layers()[0].asAffine().weights;
        REQUIRE( W.rows() == 4 );
        REQUIRE( W.cols() == 9 );
        // Output (y, x) reads pixels (y..y+1, x..x+1) of the row-major image.
        const int expected[4][4] = { { 0, 1, 3, 4 }, { 1, 2, 4, 5 }, { 3, 4, 6, 7 }, { 4, 5, 7, 8 } };
        for ( int r = 0; r < 4; ++r )
        {
            Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero( 9 );
            for ( int k = 0; k < 4; ++k )
                row[expected[r][k]] = 1.0;
            CHECK( W.row( r ) == row );
        }
    }

    TEST_CASE( "materialized convolution equals direct convolution exactly" )
    {
        Rng rng( 1 );
        const ConvShape shapes[] = {
            { 1, 3, 3, 1, 2, 2, 1, 0 },
            { 2, 5, 4, 3, 3, 3, 1, 1 },
            { 3, 6, 6, 2, 3, 2, 2, 1 },
            { 1, 7, 5, 4, 4, 4, 2, 0 },
        };
        for ( const ConvShape &shape : shapes )
        {
            ConvDescriptor conv = randomConv( rng, shape );
            AffineLayer affine = materializeConv( conv );
            Network net( shape.inputSize(), { Layer{ affine } } );
            for ( int n = 0; n < 100; ++n )
            {
                Eigen::VectorXd x = randomVector( rng, shape.inputSize() );
                Eigen::VectorXd direct = directConvolution( conv, x );
                Eigen::VectorXd materialized = net.forward( x );
                REQUIRE( direct.size() == materialized.size() );
                for ( Eigen::Index i = 0; i < direct.size(); ++i )
                    REQUIRE( direct[i] == materialized[i] );
            }
        }
    }

    TEST_CASE( "width mismatch between layers is a dimension error" )
    {
        CHECK( errorCode( [] {
                   parseNetwork( R"({"input_dim":2,"layers":[{"type":"affine","W":[[1,0],[0,1]],"b":[0,0]},)"
                                 R"({"type":"affine","W":[[1,0,0]],"b":[0]}]})" );
               } ) == Error::DIMENSION_MISMATCH );
        CHECK( errorCode( [] {
                   parseNetwork( R"({"input_dim":2,"layers":[{"type":"affine","W":[[1,0]],"b":[0,0]}]})" );
               } ) == Error::DIMENSION_MISMATCH );
        CHECK( errorCode( [] {
                   parseNetwork( R"({"input_dim":2,"layers":[{"type":"residual","branch":[{"type":"affine","W":[[1,0]],"b":[0]}]}]})" );
               } ) == Error::DIMENSION_MISMATCH );
    }

    TEST_CASE( "malformed files are parse errors" )
    {
        CHECK( errorCode( [] { parseNetwork( "{not json" ); } ) == Error::PARSE_ERROR );
        CHECK( errorCode( [] { parseNetwork( R"({"layers":[]})" ); } ) == Error::PARSE_ERROR );
        CHECK( errorCode( [] { parseNetwork( R"({"input_dim":2,"layers":[{"type":"maxpool"}]})" ); } ) ==
               Error::PARSE_ERROR );
        CHECK( errorCode( [] { parseNetwork( R"({"input_dim":1,"layers":[{"type":"affine","W":[["x"]],"b":[0]}]})" ); } ) ==
               Error::PARSE_ERROR );
        CHECK( errorCode( [] { loadNetwork( "/nonexistent/net.json" ); } ) == Error::IO_ERROR );
    }

    TEST_CASE( "non-finite weights are rejected" )
    {
        Eigen::MatrixXd W = Eigen::MatrixXd::Ones( 2, 2 );
        W( 1, 0 ) = std::numeric_limits<double>::quiet_NaN();
        CHECK( errorCode( [&] { Network( 2, { Layer::affine( W, Eigen::VectorXd::Zero( 2 ) ) } ); } ) ==
               Error::NON_FINITE_WEIGHT );
        Eigen::VectorXd b = Eigen::VectorXd::Zero( 2 );
        b[0] = std::numeric_limits<double>::infinity();
        CHECK( errorCode( [&] { Network( 2, { Layer::affine( Eigen::MatrixXd::Ones( 2, 2 ), b ) } ); } ) ==
               Error::NON_FINITE_WEIGHT );
    }

    TEST_CASE( "robustness property expands to margin rows" )
    {
        PropertyRows rows = PropertyRows::robustness( { 0, 3 } );
        Eigen::MatrixXd expected( 2, 3 );
        expected << 1, -1, 0, 1, 0, -1;
        CHECK( rows.rows == expected );
        CHECK( rows.offsets == Eigen::VectorXd::Zero( 2 ) );

        Network net( 3, { Layer::affine( Eigen::MatrixXd::Identity( 3, 3 ), Eigen::VectorXd::Zero( 3 ) ) } );
        Network encoded = encodeProperty( net, rows );
        REQUIRE( encoded.layers().size() == 2 );
        CHECK( encoded.layers()[1].asAffine().weights == expected );
        CHECK( encoded.layers()[1].asAffine().bias == Eigen::VectorXd::Zero( 2 ) );
    }

    TEST_CASE( "single property row is appended as an affine layer" )
    {
        PropertyRows rows;
        rows.rows = Eigen::MatrixXd( 1, 2 );
        rows.rows << 2, -1;
        rows.offsets = Eigen::VectorXd::Constant( 1, 0.5 );
        Network net( 2, { Layer::affine( Eigen::MatrixXd::Identity( 2, 2 ), Eigen::VectorXd::Zero( 2 ) ), Layer::relu( 2 ) } );
        Network encoded = encodeProperty( net, rows );
        CHECK( encoded.layers().back().asAffine().weights == rows.rows );
        CHECK( encoded.layers().back().asAffine().bias[0] == 0.5 );

        PropertyRows wrong;
        wrong.rows = Eigen::MatrixXd::Ones( 1, 3 );
        wrong.offsets = Eigen::VectorXd::Zero( 1 );
        CHECK( errorCode( [&] { encodeProperty( net, wrong ); } ) == Error::DIMENSION_MISMATCH );
    }

    TEST_CASE( "encoded network computes the property of the original outputs" )
    {
        Rng rng( 2 );
        for ( int n = 0; n < 20; ++n )
        {
            Network net = n % 2 ? randomResidualNet( rng, 3, 5, 4 ) : randomMlp( rng, 3, { 5, 4 }, 4 );
            PropertyRows rows;
            rows.rows = randomMatrix( rng, 3, 4 );
            rows.offsets = randomVector( rng, 3 );
            Network encoded = encodeProperty( net, rows );
            for ( int s = 0; s < 20; ++s )
            {
                Eigen::VectorXd x = randomVector( rng, 3 );
                Eigen::VectorXd expected = rows.rows * net.forward( x ) + rows.offsets;
                CHECK( ( encoded.forward( x ) - expected ).cwiseAbs().maxCoeff() <= 1e-12 );
            }
        }
    }

    TEST_CASE( "forward on hand-built networks" )
    {
        Network net( 2, { Layer::affine( Eigen::MatrixXd::Identity( 2, 2 ), Eigen::VectorXd::Zero( 2 ) ), Layer::relu( 2 ) } );
        CHECK( net.forward( Eigen::Vector2d( -1, 2 ) ) == Eigen::Vector2d( 0, 2 ) );

        Network residual(
            2, { Layer::residual( { Layer::affine( Eigen::MatrixXd::Identity( 2, 2 ), Eigen::VectorXd::Zero( 2 ) ) } ) } );
        CHECK( residual.forward( Eigen::Vector2d( 1, 1 ) ) == Eigen::Vector2d( 2, 2 ) );

        CHECK( errorCode( [&] { net.forward( Eigen::VectorXd::Zero( 3 ) ); } ) == Error::DIMENSION_MISMATCH );
    }

    TEST_CASE( "forward matches an independent evaluation" )
    {
        Rng rng( 3 );
        for ( int n = 0; n < 30; ++n )
        {
            Network net = n % 3 == 2 ? randomResidualNet( rng, 4, 6, 3 ) : randomMlp( rng, 4, { 6, 5, 4 }, 3 );
            for ( int s = 0; s < 20; ++s )
            {
                Eigen::VectorXd x = randomVector( rng, 4 );
                CHECK( ( net.forward( x ) - referenceForward( net, x ) ).cwiseAbs().maxCoeff() <= 1e-12 );
            }
        }
    }

    TEST_CASE( "save and load round-trip bit-exactly" )
    {
        Rng rng( 4 );
        ConvDescriptor conv = randomConv( rng, { 2, 4, 4, 3, 3, 3, 1, 1 } );
        std::vector<Layer> layers;
        layers.push_back( Layer{ materializeConv( conv ) } );
        layers.push_back( Layer::relu( 48 ) );
        layers.push_back( Layer::affine( randomMatrix( rng, 6, 48 ), randomVector( rng, 6 ) ) );
        layers.push_back( Layer::relu( 6 ) );
        layers.push_back( Layer::residual( { Layer::affine( randomMatrix( rng, 6, 6 ), randomVector( rng, 6 ) ),
                                             Layer::relu( 6 ),
                                             Layer::affine( randomMatrix( rng, 6, 6 ), randomVector( rng, 6 ) ) } ) );
        layers.push_back( Layer::affine( randomMatrix( rng, 2, 6 ) / 3.0, randomVector( rng, 2 ) ) );
        Network net( 32, std::move( layers ) );

        Network once = parseNetwork( serializeNetwork( net ) );
        Network twice = parseNetwork( serializeNetwork( once ) );
        expectSameLayers( net.layers(), once.layers() );
        expectSameLayers( once.layers(), twice.layers() );
        CHECK( serializeNetwork( once ) == serializeNetwork( twice ) );
        CHECK( once.layers()[0].asAffine().conv.has_value() );
    }

    TEST_CASE( "spec files parse regions and properties" )
    {
        SpecFile robust = parseSpec(
            R"({"x0":[0.5,0.25],"eps":0.1,"p":"inf","clip":[0,1],"property":{"robustness":{"label":1,"classes":3}}})" );
        CHECK( robust.region.norm == Norm::LINF );
        CHECK( robust.region.epsilon == 0.1 );
        REQUIRE( robust.region.hasClip() );
        CHECK( *robust.region.clipUpper == Eigen::Vector2d( 1, 1 ) );
        REQUIRE( robust.robustness );
        CHECK( robust.robustness->label == 1 );
        CHECK( robust.property.count() == 2 );

        SpecFile rows = parseSpec( R"({"x0":[0],"eps":1,"p":"2","clip":null,"property":{"rows":[[1,-1]],"offsets":[0.5]}})" );
        CHECK( rows.region.norm == Norm::L2 );
        CHECK( !rows.region.hasClip() );
        CHECK( rows.property.offsets[0] == 0.5 );
        CHECK( parseSpec( R"({"x0":[0],"eps":1,"p":"1","property":{"rows":[[1]],"offsets":[0]}})" ).region.norm == Norm::L1 );

        SpecFile back = parseSpec( serializeSpec( robust ) );
        CHECK( back.region.center == robust.region.center );
        CHECK( back.property.rows == robust.property.rows );

        CHECK( errorCode( [] { parseSpec( R"({"x0":[0],"eps":-1,"p":"inf","property":{"rows":[[1]],"offsets":[0]}})" ); } ) ==
               Error::PARSE_ERROR );
        CHECK( errorCode( [] { parseSpec( R"({"x0":[0],"eps":1,"p":"3","property":{"rows":[[1]],"offsets":[0]}})" ); } ) ==
               Error::PARSE_ERROR );
    }

    TEST_CASE( "region membership and projection" )
    {
        InputRegion region;
        region.center = Eigen::Vector2d( 0.0, 0.0 );
        region.epsilon = 1.0;
        for ( Norm norm : { Norm::LINF, Norm::L2, Norm::L1 } )
        {
            region.norm = norm;
            Eigen::VectorXd p = region.project( Eigen::Vector2d( 3.0, -2.0 ) );
            CHECK( region.contains( p ) );
            CHECK( region.project( p ).isApprox( p ) );
        }
        region.norm = Norm::L2;
        CHECK( !region.contains( Eigen::Vector2d( 0.8, 0.8 ) ) );
        region.norm = Norm::LINF;
        CHECK( region.contains( Eigen::Vector2d( 0.8, 0.8 ) ) );
        region.clipLower = Eigen::Vector2d( 0.0, 0.0 );
        region.clipUpper = Eigen::Vector2d( 1.0, 1.0 );
        CHECK( !region.contains( Eigen::Vector2d( -0.5, 0.5 ) ) );
        CHECK( region.boxLower() == Eigen::Vector2d( 0.0, 0.0 ) );
    }
}
