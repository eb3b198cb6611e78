#pragma once

#include <string>

#include "fusioniv/sample.hpp"

namespace fusioniv {

// Schema: header exactly r,y,d,z,x1,...,xp; y empty iff r=0, d empty iff r=1.
// UTF-8, LF or CRLF line endings, '.' decimal point.
FusedSample read_fused_csv(const std::string& path);

// Reals are written with 17 significant digits so a round trip through
// read_fused_csv reproduces the sample exactly.
void write_fused_csv(const FusedSample& sample, const std::string& path);

}  // namespace fusioniv
