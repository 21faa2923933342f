#include "mnbab/Config.h"

#include "mnbab/Error.h"
#include "mnbab/NetworkIO.h"

#include "json.hpp"

#include <functional>
#include <map>

namespace mnbab {

namespace {

using json = nlohmann::json;
using Setter = std::function<void( const json & )>;

void applySection( const json &section, const std::string &name, const std::map<std::string, Setter> &setters )
{
    if ( !section.is_object() )
        throw Error( Error::CONFIG_ERROR, "config section '" + name + "' must be an object" );
    for ( auto it = section.begin(); it != section.end(); ++it )
    {
        auto setter = setters.find( it.key() );
        if ( setter == setters.end() )
            throw Error( Error::CONFIG_ERROR, "unknown config key '" + name + "." + it.key() + "'" );
        setter->second( it.value() );
    }
}

template <typename T> Setter bind( T &target )
{
    return [&target]( const json &value ) { target = value.get<T>(); };
}

IntermediateMethod parseIntermediate( const std::string &text )
{
    if ( text == "backsubstitution" )
        return IntermediateMethod::BACKSUBSTITUTION;
    if ( text == "interval" )
        return IntermediateMethod::INTERVAL;
    throw Error( Error::CONFIG_ERROR, "unknown intermediate bound method '" + text + "'" );
}

} // namespace

VerifyConfig parseConfig( const std::string &jsonText, const VerifyConfig &defaults )
{
    VerifyConfig config = defaults;
    try
    {
        json root = json::parse( jsonText );
        if ( !root.is_object() )
            throw Error( Error::CONFIG_ERROR, "config must be a JSON object" );

        std::map<std::string, Setter> opt = {
            { "iters_root", bind( config.opt.itersRoot ) },
            { "iters_branch", bind( config.opt.itersBranch ) },
            { "iters_intermediate", bind( config.opt.itersIntermediate ) },
            { "lr_alpha", bind( config.opt.lrAlpha ) },
            { "lr_beta", bind( config.opt.lrBeta ) },
            { "lr_gamma", bind( config.opt.lrGamma ) },
            { "beta_init", bind( config.opt.betaInit ) },
            { "early_exit", bind( config.opt.earlyExit ) },
        };
        std::map<std::string, Setter> mnc = {
            { "enabled", bind( config.mnc.enabled ) },
            { "max_pairs_per_layer", bind( config.mnc.maxPairsPerLayer ) },
            { "max_facets_per_pair", bind( config.mnc.maxFacetsPerPair ) },
        };
        std::map<std::string, Setter> branch = {
            { "heuristic",
              [&]( const json &v ) { config.branch.heuristic = parseHeuristic( v.get<std::string>() ); } },
            { "cab", bind( config.branch.cab ) },
        };
        std::map<std::string, Setter> attack = {
            { "enabled", bind( config.attack.enabled ) },
            { "steps", bind( config.attack.steps ) },
            { "restarts", bind( config.attack.restarts ) },
        };
        std::map<std::string, Setter> bab = {
            { "timeout", bind( config.timeout ) },
            { "max_subproblems", bind( config.maxSubproblems ) },
            { "batch_size", bind( config.batchSize ) },
            { "threads", bind( config.threads ) },
            { "hardest_first", bind( config.hardestFirst ) },
            { "iters_fully_split", bind( config.itersFullySplit ) },
            { "intermediate", [&]( const json &v ) { config.intermediate = parseIntermediate( v.get<std::string>() ); } },
        };

        for ( auto it = root.begin(); it != root.end(); ++it )
        {
            const std::string &key = it.key();
            if ( key == "opt" )
                applySection( it.value(), key, opt );
            else if ( key == "mnc" )
                applySection( it.value(), key, mnc );
            else if ( key == "branch" )
                applySection( it.value(), key, branch );
            else if ( key == "attack" )
                applySection( it.value(), key, attack );
            else if ( key == "bab" )
                applySection( it.value(), key, bab );
            else if ( key == "seed" )
                config.seed = it.value().get<std::uint64_t>();
            else
                throw Error( Error::CONFIG_ERROR, "unknown config key '" + key + "'" );
        }
    }
    catch ( const json::exception &e )
    {
        throw Error( Error::CONFIG_ERROR, std::string( "invalid config: " ) + e.what() );
    }
    return config;
}

VerifyConfig loadConfig( const std::string &path, const VerifyConfig &defaults )
{
    return parseConfig( readFile( path ), defaults );
}

std::string serializeConfig( const VerifyConfig &config )
{
    json j;
    j["opt"] = { { "iters_root", config.opt.itersRoot },
                 { "iters_branch", config.opt.itersBranch },
                 { "iters_intermediate", config.opt.itersIntermediate },
                 { "lr_alpha", config.opt.lrAlpha },
                 { "lr_beta", config.opt.lrBeta },
                 { "lr_gamma", config.opt.lrGamma },
                 { "beta_init", config.opt.betaInit },
                 { "early_exit", config.opt.earlyExit } };
    j["mnc"] = { { "enabled", config.mnc.enabled },
                 { "max_pairs_per_layer", config.mnc.maxPairsPerLayer },
                 { "max_facets_per_pair", config.mnc.maxFacetsPerPair } };
    j["branch"] = { { "heuristic", heuristicName( config.branch.heuristic ) }, { "cab", config.branch.cab } };
    j["attack"] = { { "enabled", config.attack.enabled },
                    { "steps", config.attack.steps },
                    { "restarts", config.attack.restarts } };
    j["bab"] = { { "timeout", config.timeout },
                 { "max_subproblems", config.maxSubproblems },
                 { "batch_size", config.batchSize },
                 { "threads", config.threads },
                 { "hardest_first", config.hardestFirst },
                 { "iters_fully_split", config.itersFullySplit },
                 { "intermediate",
                   config.intermediate == IntermediateMethod::INTERVAL ? "interval" : "backsubstitution" } };
    j["seed"] = config.seed;
    return j.dump( 2 );
}

} // namespace mnbab
