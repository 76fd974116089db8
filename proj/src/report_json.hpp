#pragma once

#include "json_io.hpp"
#include "twolayer/activations.hpp"
#include "twolayer/diagnostics.hpp"
#include "twolayer/optimizer.hpp"

namespace twolayer::detail {

/// Finite doubles as numbers, the rest as "inf" / "-inf" / "nan".
json number(double x);

json report_json(const RankReport& r);
json report_json(const LipschitzEstimate& e);
json report_json(const GlobalCertificate& c);
json report_json(const C1ProbeReport& r);
json report_json(const RunInfo& info);

}  // namespace twolayer::detail
