// Prediction output shared by the three model pipelines: the predicted map,
// the per-category probability stack, and run provenance.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "prospect/grid.hpp"
#include "prospect/markov.hpp"

namespace prospect {

struct PredictionReport {
    std::string model;
    CategoricalRaster predicted;
    SuitabilityStack probabilities;
    std::map<std::string, std::string> params; // hyperparameters as written to the manifest
    std::uint64_t seed = 0;
    std::vector<std::string> warnings;
};

} // namespace prospect
