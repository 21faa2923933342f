#include "mnbab/Bab.h"
#include "mnbab/Config.h"
#include "mnbab/Error.h"
#include "mnbab/NetworkIO.h"
#include "mnbab/Oracle.h"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace mnbab;

namespace {

py::object jsonToPython( const std::string &text )
{
    return py::module_::import( "json" ).attr( "loads" )( text );
}

VerificationProblem problemFor( const Network &network, const std::string &specJson )
{
    SpecFile spec = parseSpec( specJson );
    return makeProblem( network, spec.region, spec.property );
}

} // namespace

PYBIND11_MODULE( _core, m )
{
    m.doc() = "ReLU network verifier";

    py::register_exception<Error>( m, "MnbabError" );

    py::class_<Network>( m, "Network" )
        .def_static( "from_json", &parseNetwork, py::arg( "text" ) )
        .def_static( "load", &loadNetwork, py::arg( "path" ) )
        .def( "to_json", &serializeNetwork )
        .def( "save", &saveNetwork, py::arg( "path" ) )
        .def_property_readonly( "input_dim", &Network::inputDim )
        .def_property_readonly( "output_dim", &Network::outputDim )
        .def_property_readonly( "num_relu_layers", &Network::numReluLayers )
        .def( "forward", []( const Network &n, const Eigen::VectorXd &x ) { return n.forward( x ); }, py::arg( "x" ) );

    m.def(
        "verify",
        []( const Network &network, const std::string &spec, const std::string &config ) {
            VerificationProblem problem = problemFor( network, spec );
            VerifyConfig parsed = config.empty() ? VerifyConfig() : parseConfig( config );
            VerdictReport report;
            {
                py::gil_scoped_release release;
                report = verify( problem, parsed );
            }
            return jsonToPython( reportToJson( report ) );
        },
        py::arg( "network" ),
        py::arg( "spec" ),
        py::arg( "config" ) = "",
        "Runs branch-and-bound; spec and config are JSON text. Returns the report as a dict." );

    m.def(
        "exact_minima",
        []( const Network &network, const std::string &spec ) {
            OracleResult r = exactMinima( problemFor( network, spec ) );
            return py::make_tuple( r.rowMinima, r.witnesses );
        },
        py::arg( "network" ),
        py::arg( "spec" ),
        "Brute-force row minima and witnesses (small LINF problems only)." );

    m.def( "default_config", []() { return serializeConfig( VerifyConfig() ); } );
}
