#pragma once

#include <stdexcept>
#include <string>

namespace mnbab {

class Error : public std::runtime_error
{
public:
    enum Code {
        PARSE_ERROR,
        DIMENSION_MISMATCH,
        NON_FINITE_WEIGHT,
        PARAMETER_DOMAIN,
        NO_BRANCHING_CANDIDATE,
        DOUBLE_SPLIT,
        ORACLE_GUARD,
        CONFIG_ERROR,
        IO_ERROR,
    };

    Error( Code code, const std::string &message )
        : std::runtime_error( message )
        , _code( code )
    {
    }

    Code code() const
    {
        return _code;
    }

private:
    Code _code;
};

} // namespace mnbab
