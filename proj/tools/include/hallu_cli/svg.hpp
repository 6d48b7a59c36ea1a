#pragma once

// Minimal SVG renderings of the ROC curve and calibration bars. The CSV
// outputs are the authoritative numbers; these are for eyeballing.

#include <map>
#include <string>

#include "hallu/metrics.hpp"

namespace hallu::cli {

std::string roc_svg(const metrics::RocReport& roc, const std::string& title);

/// One group of bars per bin: observed accuracy for each model, with the
/// bin midpoint as the ideal.
std::string calibration_svg(const std::map<std::string, metrics::EceReport>& reports);

}  // namespace hallu::cli
