#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "ratefit/strata.hpp"
#include "ratefit/survival.hpp"

namespace ratefit {

/// Shortest-exact decimal formatting: %.17g round-trips every double.
std::string format_double(double value);

/// CSV with header `stratum_id,n11,n12,n21,n22,x1[,x2,...]`. The stratum_id
/// column is carried along but ignored for fitting. Throws ParseError with a
/// line number on malformed input.
StratifiedDataset read_table_csv(std::istream& in);
void write_table_csv(std::ostream& out, const StratifiedDataset& ds);

/// CSV with header `time,status,group`; status in {0,1}, group in {1,2}.
std::vector<RawRecord> read_survival_csv(std::istream& in);
void write_survival_csv(std::ostream& out, const std::vector<RawRecord>& records);

}  // namespace ratefit
