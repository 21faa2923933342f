#include "mnbab/NetworkIO.h"

#include "mnbab/Error.h"

#include "json.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace mnbab {

using nlohmann::json;

std::string readFile( const std::string &path )
{
    std::ifstream in( path );
    if ( !in )
        throw Error( Error::IO_ERROR, "cannot open '" + path + "'" );
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

namespace {

void writeFile( const std::string &path, const std::string &text )
{
    std::ofstream out( path );
    if ( !out )
        throw Error( Error::IO_ERROR, "cannot write '" + path + "'" );
    out << text;
}

double number( const json &value, const std::string &where )
{
    if ( !value.is_number() )
        throw Error( Error::PARSE_ERROR, where + ": expected a number" );
    return value.get<double>();
}

Eigen::VectorXd vectorFrom( const json &value, const std::string &where )
{
    if ( !value.is_array() )
        throw Error( Error::PARSE_ERROR, where + ": expected an array" );
    Eigen::VectorXd result( value.size() );
    for ( size_t i = 0; i < value.size(); ++i )
        result[i] = number( value[i], where );
    return result;
}

Eigen::MatrixXd matrixFrom( const json &value, const std::string &where )
{
    if ( !value.is_array() || value.empty() )
        throw Error( Error::PARSE_ERROR, where + ": expected a nonempty array of rows" );
    size_t cols = value[0].is_array() ? value[0].size() : 0;
    Eigen::MatrixXd result( value.size(), cols );
    for ( size_t r = 0; r < value.size(); ++r )
    {
        if ( !value[r].is_array() )
            throw Error( Error::PARSE_ERROR, where + ": expected an array of rows" );
        if ( value[r].size() != cols )
            throw Error( Error::DIMENSION_MISMATCH, where + ": ragged matrix (row " + std::to_string( r ) + ")" );
        for ( size_t c = 0; c < cols; ++c )
            result( r, c ) = number( value[r][c], where );
    }
    return result;
}

unsigned positive( const json &node, const char *key, const std::string &where, unsigned fallback )
{
    if ( !node.contains( key ) )
        return fallback;
    const json &value = node.at( key );
    if ( !value.is_number_integer() || value.get<long long>() < 0 )
        throw Error( Error::PARSE_ERROR, where + ": '" + key + "' must be a nonnegative integer" );
    return value.get<unsigned>();
}

ConvDescriptor parseConv( const json &node, unsigned width, const std::string &where )
{
    ConvDescriptor conv;
    ConvShape &shape = conv.shape;

    const json &kernel = node.at( "kernel" );
    if ( !kernel.is_array() || kernel.empty() || !kernel[0].is_array() || kernel[0].empty() ||
         !kernel[0][0].is_array() || kernel[0][0].empty() || !kernel[0][0][0].is_array() )
        throw Error( Error::PARSE_ERROR, where + ": kernel must be a 4-d array [out][in][h][w]" );

    shape.outChannels = kernel.size();
    shape.inChannels = kernel[0].size();
    shape.kernelHeight = kernel[0][0].size();
    shape.kernelWidth = kernel[0][0][0].size();
    shape.stride = positive( node, "stride", where, 1 );
    shape.padding = positive( node, "padding", where, 0 );

    unsigned outCh = positive( node, "out_ch", where, shape.outChannels );
    if ( outCh != shape.outChannels )
        throw Error( Error::DIMENSION_MISMATCH, where + ": out_ch disagrees with the kernel shape" );

    if ( node.contains( "in_shape" ) )
    {
        const json &in = node.at( "in_shape" );
        if ( !in.is_array() || in.size() != 3 )
            throw Error( Error::PARSE_ERROR, where + ": in_shape must be [channels, height, width]" );
        if ( in[0].get<unsigned>() != shape.inChannels )
            throw Error( Error::DIMENSION_MISMATCH, where + ": in_shape channels disagree with the kernel" );
        shape.inHeight = in[1].get<unsigned>();
        shape.inWidth = in[2].get<unsigned>();
    }
    else
    {
        unsigned pixels = width / shape.inChannels;
        unsigned side = static_cast<unsigned>( std::lround( std::sqrt( static_cast<double>( pixels ) ) ) );
        if ( width % shape.inChannels != 0 || side * side != pixels )
            throw Error( Error::DIMENSION_MISMATCH,
                         where + ": cannot infer a square input of " + std::to_string( shape.inChannels ) +
                             " channels from width " + std::to_string( width ) );
        shape.inHeight = side;
        shape.inWidth = side;
    }
    if ( shape.inputSize() != width )
        throw Error( Error::DIMENSION_MISMATCH,
                     where + ": convolution expects input width " + std::to_string( shape.inputSize() ) +
                         " but receives " + std::to_string( width ) );

    for ( const auto &out : kernel )
    {
        if ( out.size() != shape.inChannels )
            throw Error( Error::DIMENSION_MISMATCH, where + ": ragged kernel" );
        for ( const auto &in : out )
        {
            if ( in.size() != shape.kernelHeight )
                throw Error( Error::DIMENSION_MISMATCH, where + ": ragged kernel" );
            for ( const auto &row : in )
            {
                if ( row.size() != shape.kernelWidth )
                    throw Error( Error::DIMENSION_MISMATCH, where + ": ragged kernel" );
                for ( const auto &value : row )
                    conv.kernel.push_back( number( value, where ) );
            }
        }
    }

    if ( node.contains( "bias" ) )
    {
        Eigen::VectorXd bias = vectorFrom( node.at( "bias" ), where + " bias" );
        conv.bias.assign( bias.data(), bias.data() + bias.size() );
    }
    else
        conv.bias.assign( shape.outChannels, 0.0 );
    if ( conv.bias.size() != shape.outChannels )
        throw Error( Error::DIMENSION_MISMATCH, where + ": bias length does not match out_ch" );

    return conv;
}

std::vector<Layer> parseLayers( const json &nodes, unsigned &width, const std::string &path )
{
    if ( !nodes.is_array() )
        throw Error( Error::PARSE_ERROR, path + "layers must be an array" );

    std::vector<Layer> layers;
    for ( size_t i = 0; i < nodes.size(); ++i )
    {
        const json &node = nodes[i];
        std::string where = path + "layer " + std::to_string( i );
        if ( !node.is_object() || !node.contains( "type" ) )
            throw Error( Error::PARSE_ERROR, where + ": missing type" );
        std::string type = node.at( "type" ).get<std::string>();

        if ( type == "affine" )
        {
            Eigen::MatrixXd weights = matrixFrom( node.at( "W" ), where + " W" );
            Eigen::VectorXd bias = node.contains( "b" ) ? vectorFrom( node.at( "b" ), where + " b" )
                                                        : Eigen::VectorXd::Zero( weights.rows() );
            if ( weights.cols() != static_cast<Eigen::Index>( width ) )
                throw Error( Error::DIMENSION_MISMATCH,
                             where + ": affine input width " + std::to_string( weights.cols() ) +
                                 " does not match previous output width " + std::to_string( width ) );
            width = weights.rows();
            layers.push_back( Layer::affine( std::move( weights ), std::move( bias ) ) );
        }
        else if ( type == "conv" )
        {
            ConvDescriptor conv = parseConv( node, width, where );
            AffineLayer affine = materializeConv( conv );
            width = affine.weights.rows();
            layers.push_back( Layer{ std::move( affine ) } );
        }
        else if ( type == "relu" )
            layers.push_back( Layer::relu( width ) );
        else if ( type == "residual" )
        {
            unsigned branchWidth = width;
            std::vector<Layer> branch = parseLayers( node.at( "branch" ), branchWidth, where + ".branch " );
            if ( branchWidth != width )
                throw Error( Error::DIMENSION_MISMATCH,
                             where + ": residual branch output width " + std::to_string( branchWidth ) +
                                 " does not match its input width " + std::to_string( width ) );
            layers.push_back( Layer::residual( std::move( branch ) ) );
        }
        else
            throw Error( Error::PARSE_ERROR, where + ": unknown layer type '" + type + "'" );
    }
    return layers;
}

json matrixJson( const Eigen::MatrixXd &m )
{
    json rows = json::array();
    for ( Eigen::Index r = 0; r < m.rows(); ++r )
    {
        json row = json::array();
        for ( Eigen::Index c = 0; c < m.cols(); ++c )
            row.push_back( m( r, c ) );
        rows.push_back( std::move( row ) );
    }
    return rows;
}

json vectorJson( const Eigen::VectorXd &v )
{
    json values = json::array();
    for ( Eigen::Index i = 0; i < v.size(); ++i )
        values.push_back( v[i] );
    return values;
}

json layersJson( const std::vector<Layer> &layers )
{
    json nodes = json::array();
    for ( const auto &layer : layers )
    {
        if ( layer.isAffine() )
        {
            const auto &affine = layer.asAffine();
            if ( affine.conv )
            {
                const ConvDescriptor &conv = *affine.conv;
                const ConvShape &s = conv.shape;
                json kernel = json::array();
                size_t k = 0;
                for ( unsigned oc = 0; oc < s.outChannels; ++oc )
                {
                    json out = json::array();
                    for ( unsigned ic = 0; ic < s.inChannels; ++ic )
                    {
                        json in = json::array();
                        for ( unsigned ky = 0; ky < s.kernelHeight; ++ky )
                        {
                            json row = json::array();
                            for ( unsigned kx = 0; kx < s.kernelWidth; ++kx )
                                row.push_back( conv.kernel[k++] );
                            in.push_back( std::move( row ) );
                        }
                        out.push_back( std::move( in ) );
                    }
                    kernel.push_back( std::move( out ) );
                }
                nodes.push_back( { { "type", "conv" },
                                   { "out_ch", s.outChannels },
                                   { "kernel", std::move( kernel ) },
                                   { "stride", s.stride },
                                   { "padding", s.padding },
                                   { "bias", conv.bias },
                                   { "in_shape", { s.inChannels, s.inHeight, s.inWidth } } } );
            }
            else
                nodes.push_back(
                    { { "type", "affine" }, { "W", matrixJson( affine.weights ) }, { "b", vectorJson( affine.bias ) } } );
        }
        else if ( layer.isRelu() )
            nodes.push_back( { { "type", "relu" } } );
        else
            nodes.push_back( { { "type", "residual" }, { "branch", layersJson( layer.asResidual().branch ) } } );
    }
    return nodes;
}

} // namespace

Network parseNetwork( const std::string &jsonText )
{
    json root;
    try
    {
        root = json::parse( jsonText );
    }
    catch ( const json::exception &e )
    {
        throw Error( Error::PARSE_ERROR, std::string( "network file: " ) + e.what() );
    }

    try
    {
        if ( !root.is_object() || !root.contains( "input_dim" ) || !root.contains( "layers" ) )
            throw Error( Error::PARSE_ERROR, "network file needs 'input_dim' and 'layers'" );
        unsigned width = root.at( "input_dim" ).get<unsigned>();
        unsigned inputDim = width;
        std::vector<Layer> layers = parseLayers( root.at( "layers" ), width, "" );
        return Network( inputDim, std::move( layers ) );
    }
    catch ( const json::exception &e )
    {
        throw Error( Error::PARSE_ERROR, std::string( "network file: " ) + e.what() );
    }
}

Network loadNetwork( const std::string &path )
{
    return parseNetwork( readFile( path ) );
}

std::string serializeNetwork( const Network &network )
{
    json root = { { "input_dim", network.inputDim() }, { "layers", layersJson( network.layers() ) } };
    return root.dump();
}

void saveNetwork( const Network &network, const std::string &path )
{
    writeFile( path, serializeNetwork( network ) );
}

SpecFile parseSpec( const std::string &jsonText )
{
    json root;
    try
    {
        root = json::parse( jsonText );
    }
    catch ( const json::exception &e )
    {
        throw Error( Error::PARSE_ERROR, std::string( "spec file: " ) + e.what() );
    }

    try
    {
        SpecFile spec;
        spec.region.center = vectorFrom( root.at( "x0" ), "x0" );
        spec.region.epsilon = number( root.at( "eps" ), "eps" );
        if ( spec.region.epsilon < 0.0 )
            throw Error( Error::PARSE_ERROR, "eps must be nonnegative" );

        const json &norm = root.contains( "p" ) ? root.at( "p" ) : json( "inf" );
        spec.region.norm = parseNorm( norm.is_string() ? norm.get<std::string>() : norm.dump() );

        unsigned n = spec.region.center.size();
        if ( root.contains( "clip" ) && !root.at( "clip" ).is_null() )
        {
            const json &clip = root.at( "clip" );
            if ( !clip.is_array() || clip.size() != 2 )
                throw Error( Error::PARSE_ERROR, "clip must be [lo, hi] or null" );
            if ( clip[0].is_array() )
            {
                spec.region.clipLower = vectorFrom( clip[0], "clip" );
                spec.region.clipUpper = vectorFrom( clip[1], "clip" );
                if ( spec.region.clipLower->size() != n || spec.region.clipUpper->size() != n )
                    throw Error( Error::DIMENSION_MISMATCH, "clip bounds do not match x0" );
            }
            else
            {
                spec.region.clipLower = Eigen::VectorXd::Constant( n, number( clip[0], "clip" ) );
                spec.region.clipUpper = Eigen::VectorXd::Constant( n, number( clip[1], "clip" ) );
            }
        }

        const json &property = root.at( "property" );
        if ( property.contains( "robustness" ) )
        {
            RobustnessSpec robustness;
            robustness.label = property.at( "robustness" ).at( "label" ).get<unsigned>();
            robustness.classes = property.at( "robustness" ).at( "classes" ).get<unsigned>();
            spec.property = PropertyRows::robustness( robustness );
            spec.robustness = robustness;
        }
        else if ( property.contains( "rows" ) )
        {
            spec.property.rows = matrixFrom( property.at( "rows" ), "property rows" );
            spec.property.offsets = property.contains( "offsets" )
                                        ? vectorFrom( property.at( "offsets" ), "property offsets" )
                                        : Eigen::VectorXd::Zero( spec.property.rows.rows() );
            if ( spec.property.offsets.size() != spec.property.rows.rows() )
                throw Error( Error::DIMENSION_MISMATCH, "property offsets do not match the rows" );
        }
        else
            throw Error( Error::PARSE_ERROR, "property needs 'robustness' or 'rows'" );
        return spec;
    }
    catch ( const json::exception &e )
    {
        throw Error( Error::PARSE_ERROR, std::string( "spec file: " ) + e.what() );
    }
}

SpecFile loadSpec( const std::string &path )
{
    return parseSpec( readFile( path ) );
}

std::string serializeSpec( const SpecFile &spec )
{
    json root;
    root["x0"] = vectorJson( spec.region.center );
    root["eps"] = spec.region.epsilon;
    root["p"] = normName( spec.region.norm );
    if ( spec.region.clipLower )
        root["clip"] = { vectorJson( *spec.region.clipLower ), vectorJson( *spec.region.clipUpper ) };
    else
        root["clip"] = nullptr;
    if ( spec.robustness )
        root["property"] = { { "robustness",
                               { { "label", spec.robustness->label }, { "classes", spec.robustness->classes } } } };
    else
        root["property"] = { { "rows", matrixJson( spec.property.rows ) },
                             { "offsets", vectorJson( spec.property.offsets ) } };
    return root.dump();
}

} // namespace mnbab
