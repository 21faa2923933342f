#pragma once

#include "mnbab/Bab.h"

#include <string>

namespace mnbab {

/*
  Run configuration as JSON, grouped by module:
    {"opt":    {"iters_root", "iters_branch", "iters_intermediate",
                "lr_alpha", "lr_beta", "lr_gamma", "beta_init", "early_exit"},
     "mnc":    {"enabled", "max_pairs_per_layer", "max_facets_per_pair"},
     "branch": {"heuristic": "acs"|"babsr", "cab"},
     "attack": {"enabled", "steps", "restarts"},
     "bab":    {"timeout", "max_subproblems", "batch_size", "threads",
                "hardest_first", "intermediate": "backsubstitution"|"interval",
                "iters_fully_split"},
     "seed": n}
  Missing keys keep their defaults; unknown keys are a CONFIG_ERROR.
*/
VerifyConfig parseConfig( const std::string &jsonText, const VerifyConfig &defaults = VerifyConfig() );
VerifyConfig loadConfig( const std::string &path, const VerifyConfig &defaults = VerifyConfig() );

std::string serializeConfig( const VerifyConfig &config );

} // namespace mnbab
