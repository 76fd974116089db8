#pragma once

#include <string>

#include "twolayer/activations.hpp"
#include "twolayer/diagnostics.hpp"
#include "twolayer/optimizer.hpp"

namespace twolayer {

// JSON text for the report types. Non-finite numbers are written as the
// strings "inf", "-inf" or "nan" so the output stays valid JSON.

std::string to_json_string(const RankReport& r);
std::string to_json_string(const LipschitzEstimate& e);
std::string to_json_string(const GlobalCertificate& c);
std::string to_json_string(const C1ProbeReport& r);
std::string to_json_string(const RunInfo& info);

}  // namespace twolayer
