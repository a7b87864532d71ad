#ifndef SEGTRANSFER_REPORT_HPP
#define SEGTRANSFER_REPORT_HPP

#include <string>

#include "segtransfer/harness.hpp"

namespace segtransfer {

/// Column-aligned summary of a result set, clean scores first. Metric cells
/// use the same formatter as the CSV writer.
std::string render_results_table(const ExperimentResults& results);

/// Writes sr_range.svg, miou_bars.svg, and ssim_ranking.svg into `dir`.
void write_report_charts(const ExperimentResults& results, const std::string& dir);

}  // namespace segtransfer

#endif  // SEGTRANSFER_REPORT_HPP
