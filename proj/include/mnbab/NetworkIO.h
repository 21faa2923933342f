#pragma once

#include "mnbab/Network.h"
#include "mnbab/Problem.h"

#include <optional>
#include <string>

namespace mnbab {

/*
  Network file:
    {"input_dim": n,
     "layers": [ {"type":"affine","W":[[...]],"b":[...]}
               | {"type":"conv","out_ch":c,"kernel":[[[[...]]]],"stride":s,"padding":p,"bias":[...],
                  "in_shape":[c,h,w] (optional; square input assumed otherwise)}
               | {"type":"relu"}
               | {"type":"residual","branch":[...layers...]} ]}

  Spec file:
    {"x0":[...], "eps":e, "p":"inf"|"2"|"1", "clip":[lo,hi]|null,
     "property": {"robustness":{"label":t,"classes":K}} | {"rows":[[...]],"offsets":[...]}}
*/

Network parseNetwork( const std::string &jsonText );
Network loadNetwork( const std::string &path );

std::string serializeNetwork( const Network &network );
void saveNetwork( const Network &network, const std::string &path );

struct SpecFile
{
    InputRegion region;
    PropertyRows property;
    std::optional<RobustnessSpec> robustness;
};

SpecFile parseSpec( const std::string &jsonText );
SpecFile loadSpec( const std::string &path );

std::string serializeSpec( const SpecFile &spec );

std::string readFile( const std::string &path );

} // namespace mnbab
