#include "mnbab/Bab.h"
#include "mnbab/Config.h"
#include "mnbab/Error.h"
#include "mnbab/NetworkIO.h"
#include "mnbab/Oracle.h"
#include "mnbab/Suite.h"

#include "CLI11.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

using namespace mnbab;

namespace {

enum ExitCode { EXIT_VERIFIED = 0, EXIT_FALSIFIED = 1, EXIT_UNKNOWN = 2, EXIT_ERROR = 3 };

struct RunOptions
{
    std::string configPath;
    std::string branching;
    std::optional<bool> cab;
    std::optional<bool> mnc;
    std::optional<double> timeout;
    std::optional<unsigned> maxSubproblems;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::string intermediate;
    bool oracle = false;
};

void addRunOptions( CLI::App *command, RunOptions &options )
{
    command->add_option( "--config", options.configPath, "JSON run configuration" );
    command->add_option( "--branching", options.branching, "Branching heuristic: acs (default) or babsr" )
        ->check( CLI::IsMember( { "acs", "babsr" } ) );
    command->add_flag( "--cab,!--no-cab", options.cab, "Cost adjusted branching (default on)" );
    command->add_flag( "--mnc,!--no-mnc", options.mnc, "Multi-neuron constraints (default on)" );
    command->add_option( "--timeout", options.timeout, "Wall-clock limit in seconds per instance (default 360)" );
    command->add_option( "--max-subproblems", options.maxSubproblems, "Subproblem budget (default 100000)" );
    command->add_option( "--seed", options.seed, "Random seed (default 0)" );
    command->add_option( "--threads", options.threads, "Bounding threads (default MNBAB_THREADS or 1)" );
    command->add_option( "--intermediate", options.intermediate, "Intermediate bounds: backsubstitution or interval" )
        ->check( CLI::IsMember( { "backsubstitution", "interval" } ) );
    command->add_flag( "--oracle", options.oracle, "Cross-check with the exact oracle (LINF, tiny nets)" );
}

VerifyConfig buildConfig( const RunOptions &options )
{
    VerifyConfig config;
    if ( const char *env = std::getenv( "MNBAB_THREADS" ) )
    {
        try
        {
            config.threads = std::stoul( env );
        }
        catch ( const std::exception & )
        {
            throw Error( Error::CONFIG_ERROR, std::string( "MNBAB_THREADS is not a number: " ) + env );
        }
    }
    if ( !options.configPath.empty() )
        config = loadConfig( options.configPath, config );
    if ( !options.branching.empty() )
        config.branch.heuristic = parseHeuristic( options.branching );
    if ( options.cab )
        config.branch.cab = *options.cab;
    if ( options.mnc )
        config.mnc.enabled = *options.mnc;
    if ( options.timeout )
        config.timeout = *options.timeout;
    if ( options.maxSubproblems )
        config.maxSubproblems = *options.maxSubproblems;
    if ( options.seed )
        config.seed = *options.seed;
    if ( options.threads )
        config.threads = *options.threads;
    if ( options.intermediate == "interval" )
        config.intermediate = IntermediateMethod::INTERVAL;
    return config;
}

VerificationProblem loadProblem( const std::string &netPath, const std::string &specPath )
{
    Network network = loadNetwork( netPath );
    SpecFile spec = loadSpec( specPath );
    return makeProblem( network, spec.region, spec.property );
}

int exitCode( Status status )
{
    switch ( status )
    {
    case Status::VERIFIED:
        return EXIT_VERIFIED;
    case Status::FALSIFIED:
        return EXIT_FALSIFIED;
    case Status::UNKNOWN:
        return EXIT_UNKNOWN;
    }
    return EXIT_UNKNOWN;
}

std::string formatBound( double value )
{
    std::ostringstream out;
    out << std::setprecision( 10 ) << value;
    return out.str();
}

int runVerify( const std::string &netPath,
               const std::string &specPath,
               const RunOptions &options,
               const std::string &tracePath,
               const std::string &jsonPath )
{
    VerificationProblem problem = loadProblem( netPath, specPath );
    VerifyConfig config = buildConfig( options );
    config.tracePath = tracePath;

    VerdictReport report = verify( problem, config );
    if ( jsonPath == "-" )
    {
        std::cout << reportToJson( report ) << "\n";
        return exitCode( report.status );
    }

    std::cout << "status: " << statusName( report.status ) << "\n";
    std::cout << "lower bound: " << formatBound( report.lowerBound ) << "\n";
    std::cout << "subproblems: " << report.subproblems << "\n";
    std::cout << "time: " << std::setprecision( 4 ) << report.wallTime << " s\n";
    if ( !report.reason.empty() )
        std::cout << "reason: " << report.reason << "\n";
    if ( report.witness )
    {
        std::cout << "witness:";
        for ( Eigen::Index i = 0; i < report.witness->size(); ++i )
            std::cout << ' ' << std::setprecision( 17 ) << ( *report.witness )[i];
        std::cout << "\n";
    }

    if ( options.oracle )
    {
        OracleVerdict exact = exactVerdict( problem );
        std::cout << "oracle: " << ( exact.verified ? "verified" : "falsified" ) << " (minimum "
                  << formatBound( exact.minimum ) << ")\n";
        bool agrees = report.status == Status::UNKNOWN ||
                      ( report.status == Status::VERIFIED ) == exact.verified;
        if ( !agrees )
            std::cout << "oracle: MISMATCH\n";
    }

    if ( !jsonPath.empty() )
    {
        std::ofstream out( jsonPath );
        if ( !out )
            throw Error( Error::IO_ERROR, "cannot write '" + jsonPath + "'" );
        out << reportToJson( report ) << "\n";
    }
    return exitCode( report.status );
}

int runBounds( const std::string &netPath, const std::string &specPath, const RunOptions &options )
{
    VerificationProblem problem = loadProblem( netPath, specPath );
    VerifyConfig config = buildConfig( options );
    const unsigned rows = problem.numRows();
    SplitMatrix none = SplitMatrix::none( problem.network );
    MncSet noMnc = MncSet::empty( problem.network );

    BoundsResult interval = intervalBounds( problem, none );
    BoundsResult deepPoly = computeBounds( problem, none, noMnc );

    MncSet mnc = generateMnc( problem, deepPoly.layers, config.mnc );
    ParamLayout plain = ParamLayout::build( deepPoly.layers, none, noMnc );
    ParamLayout withMnc = ParamLayout::build( deepPoly.layers, none, mnc );

    std::cout << std::left << std::setw( 6 ) << "row" << std::setw( 18 ) << "interval" << std::setw( 18 )
              << "deeppoly" << std::setw( 18 ) << "alpha" << std::setw( 18 ) << "alpha+mnc" << "\n";
    for ( unsigned r = 0; r < rows; ++r )
    {
        double alpha = optimize( problem,
                                 deepPoly.layers,
                                 none,
                                 noMnc,
                                 DualParameters::initial( plain, deepPoly.layers ),
                                 r,
                                 config.opt.itersRoot,
                                 config.opt )
                           .bound;
        double alphaMnc = optimize( problem,
                                    deepPoly.layers,
                                    none,
                                    mnc,
                                    DualParameters::initial( withMnc, deepPoly.layers ),
                                    r,
                                    config.opt.itersRoot,
                                    config.opt )
                              .bound;
        std::cout << std::setw( 6 ) << r << std::setw( 18 ) << formatBound( interval.output.lower[r] )
                  << std::setw( 18 ) << formatBound( deepPoly.output.lower[r] ) << std::setw( 18 )
                  << formatBound( alpha ) << std::setw( 18 ) << formatBound( alphaMnc ) << "\n";
    }
    std::cout << "multi-neuron constraints: " << mnc.totalCount() << "\n";
    return 0;
}

int runBench( const std::string &directory, const RunOptions &options, const std::string &csvPath )
{
    namespace fs = std::filesystem;
    if ( !fs::is_directory( directory ) )
        throw Error( Error::IO_ERROR, "'" + directory + "' is not a directory" );

    std::vector<fs::path> specs;
    for ( const auto &entry : fs::directory_iterator( directory ) )
    {
        std::string name = entry.path().filename().string();
        if ( name.size() > 10 && name.substr( name.size() - 10 ) == ".spec.json" )
            specs.push_back( entry.path() );
    }
    std::sort( specs.begin(), specs.end() );

    VerifyConfig config = buildConfig( options );
    std::ostringstream csv;
    csv << "instance,verdict,bound,subproblems,time" << ( options.oracle ? ",oracle" : "" ) << "\n";
    unsigned mismatches = 0;
    for ( const auto &specPath : specs )
    {
        std::string name = specPath.filename().string();
        name = name.substr( 0, name.size() - 10 );
        fs::path netPath = specPath.parent_path() / ( name + ".net.json" );
        if ( !fs::exists( netPath ) )
            netPath = specPath.parent_path() / "network.json";

        VerificationProblem problem = loadProblem( netPath.string(), specPath.string() );
        VerdictReport report = verify( problem, config );
        csv << name << ',' << statusName( report.status ) << ',' << formatBound( report.lowerBound ) << ','
            << report.subproblems << ',' << report.wallTime;
        if ( options.oracle )
        {
            OracleVerdict exact = exactVerdict( problem );
            csv << ',' << ( exact.verified ? "verified" : "falsified" );
            if ( report.status != Status::UNKNOWN && ( report.status == Status::VERIFIED ) != exact.verified )
                ++mismatches;
        }
        csv << "\n";
    }

    if ( csvPath.empty() )
        std::cout << csv.str();
    else
    {
        std::ofstream out( csvPath );
        if ( !out )
            throw Error( Error::IO_ERROR, "cannot write '" + csvPath + "'" );
        out << csv.str();
    }
    if ( mismatches > 0 )
    {
        std::cerr << mismatches << " verdict(s) disagree with the oracle\n";
        return EXIT_ERROR;
    }
    return 0;
}

} // namespace

int main( int argc, char **argv )
{
    CLI::App app{ "Complete verifier for ReLU networks: multi-neuron constraint guided branch and bound" };
    app.require_subcommand( 1 );

    std::string netPath, specPath, tracePath, jsonPath, directory, csvPath;
    RunOptions options;

    CLI::App *verifyCommand = app.add_subcommand( "verify", "Verify one property" );
    verifyCommand->add_option( "--net", netPath, "Network JSON" )->required()->check( CLI::ExistingFile );
    verifyCommand->add_option( "--spec", specPath, "Specification JSON" )->required()->check( CLI::ExistingFile );
    verifyCommand->add_option( "--trace", tracePath, "Write a per-subproblem CSV trace" );
    verifyCommand->add_option( "--json", jsonPath, "Write the JSON report (- for stdout)" );
    addRunOptions( verifyCommand, options );

    CLI::App *boundsCommand = app.add_subcommand( "bounds", "Print root bounds per bounding method" );
    boundsCommand->add_option( "--net", netPath, "Network JSON" )->required()->check( CLI::ExistingFile );
    boundsCommand->add_option( "--spec", specPath, "Specification JSON" )->required()->check( CLI::ExistingFile );
    addRunOptions( boundsCommand, options );

    CLI::App *benchCommand = app.add_subcommand( "bench", "Verify every NAME.spec.json in a directory" );
    benchCommand->add_option( "--dir", directory, "Instance directory (NAME.net.json or network.json)" )->required();
    benchCommand->add_option( "--csv", csvPath, "Write the CSV here instead of stdout" );
    addRunOptions( benchCommand, options );

    unsigned count = 50;
    std::uint64_t suiteSeed = 0;
    CLI::App *suiteCommand =
        app.add_subcommand( "suite", "Write seeded tiny instances whose radius sits near the exact critical radius" );
    suiteCommand->add_option( "--out", directory, "Output directory" )->required();
    suiteCommand->add_option( "--count", count, "Number of instances (default 50)" );
    suiteCommand->add_option( "--seed", suiteSeed, "Generator seed (default 0)" );

    try
    {
        app.parse( argc, argv );
    }
    catch ( const CLI::ParseError &e )
    {
        int code = app.exit( e );
        return code == 0 ? 0 : EXIT_ERROR;
    }

    try
    {
        if ( *verifyCommand )
            return runVerify( netPath, specPath, options, tracePath, jsonPath );
        if ( *boundsCommand )
            return runBounds( netPath, specPath, options );
        if ( *benchCommand )
            return runBench( directory, options, csvPath );
        if ( *suiteCommand )
        {
            writeSuite( boundarySuite( suiteSeed, count ), directory );
            std::cout << "wrote " << count << " instances to " << directory << "\n";
            return 0;
        }
    }
    catch ( const Error &e )
    {
        std::cerr << "error: " << e.what() << "\n";
        return EXIT_ERROR;
    }
    catch ( const std::exception &e )
    {
        std::cerr << "error: " << e.what() << "\n";
        return EXIT_ERROR;
    }
    return EXIT_ERROR;
}
