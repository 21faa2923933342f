#include "mnbab/Suite.h"

#include "mnbab/Error.h"
#include "mnbab/Oracle.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace mnbab {

Network randomNetwork( std::mt19937_64 &rng, const RandomNetworkShape &shape )
{
    std::normal_distribution<double> normal( 0.0, 1.0 );
    std::vector<Layer> layers;
    unsigned previous = shape.inputDim;
    auto affine = [&]( unsigned out ) {
        Eigen::MatrixXd W( out, previous );
        for ( Eigen::Index r = 0; r < W.rows(); ++r )
            for ( Eigen::Index c = 0; c < W.cols(); ++c )
                W( r, c ) = normal( rng ) / std::sqrt( static_cast<double>( previous ) );
        Eigen::VectorXd b( out );
        for ( Eigen::Index r = 0; r < b.size(); ++r )
            b[r] = shape.biasScale * normal( rng );
        layers.push_back( Layer::affine( std::move( W ), std::move( b ) ) );
        previous = out;
    };
    for ( unsigned width : shape.hidden )
    {
        affine( width );
        layers.push_back( Layer::relu( width ) );
    }
    affine( shape.outputs );
    return Network( shape.inputDim, std::move( layers ) );
}

double criticalEpsilon( const Network &network,
                        const Eigen::VectorXd &center,
                        const PropertyRows &property,
                        double upper,
                        double precision )
{
    auto holds = [&]( double eps ) {
        InputRegion region;
        region.center = center;
        region.epsilon = eps;
        return exactVerdict( makeProblem( network, region, property ) ).verified;
    };
    if ( !holds( 0.0 ) )
        return 0.0;
    if ( holds( upper ) )
        return upper;
    double lo = 0.0, hi = upper;
    while ( hi - lo > precision * hi )
    {
        double mid = 0.5 * ( lo + hi );
        ( holds( mid ) ? lo : hi ) = mid;
    }
    return lo;
}

std::vector<SuiteInstance> boundarySuite( std::uint64_t seed, unsigned count, double offset )
{
    std::mt19937_64 rng( seed );
    std::uniform_int_distribution<unsigned> dims( 2, 4 );
    std::uniform_int_distribution<unsigned> widths( 4, 8 );
    std::uniform_real_distribution<double> coordinate( -1.0, 1.0 );

    std::vector<SuiteInstance> suite;
    while ( suite.size() < count )
    {
        RandomNetworkShape shape;
        shape.inputDim = dims( rng );
        shape.hidden = { widths( rng ), widths( rng ) };
        shape.outputs = 3;
        Network network = randomNetwork( rng, shape );

        Eigen::VectorXd center( shape.inputDim );
        for ( Eigen::Index i = 0; i < center.size(); ++i )
            center[i] = coordinate( rng );
        Eigen::Index label = 0;
        network.forward( center ).maxCoeff( &label );

        RobustnessSpec robustness{ static_cast<unsigned>( label ), shape.outputs };
        PropertyRows property = PropertyRows::robustness( robustness );

        double critical = 0.0;
        try
        {
            critical = criticalEpsilon( network, center, property );
        }
        catch ( const Error & )
        {
            continue;
        }
        if ( critical < 1e-3 || critical >= 2.0 )
            continue;

        bool below = suite.size() % 2 == 0;
        SuiteInstance instance{ "", network, SpecFile{}, critical };
        instance.spec.region.center = center;
        instance.spec.region.epsilon = critical * ( below ? 1.0 - offset : 1.0 + offset );
        instance.spec.property = property;
        instance.spec.robustness = robustness;

        std::ostringstream name;
        name << "inst" << std::setw( 3 ) << std::setfill( '0' ) << suite.size();
        instance.name = name.str();
        suite.push_back( std::move( instance ) );
    }
    return suite;
}

void writeSuite( const std::vector<SuiteInstance> &suite, const std::string &directory )
{
    std::filesystem::create_directories( directory );
    for ( const auto &instance : suite )
    {
        auto base = std::filesystem::path( directory ) / instance.name;
        saveNetwork( instance.network, base.string() + ".net.json" );
        std::ofstream spec( base.string() + ".spec.json" );
        if ( !spec )
            throw Error( Error::IO_ERROR, "cannot write " + base.string() + ".spec.json" );
        spec << serializeSpec( instance.spec ) << '\n';
    }
}

} // namespace mnbab
