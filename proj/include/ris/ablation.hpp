#ifndef RIS_ABLATION_HPP
#define RIS_ABLATION_HPP

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ris/config.hpp"
#include "ris/data.hpp"

namespace ris::inline RIS_PRECISION {

using Overrides = std::vector<std::pair<std::string, std::string>>;

struct AblationRow {
    std::string group;
    std::string name;
    Overrides overrides;
};

// Default ablation grid, grouped by axis: input kinds, weight kinds,
// component toggles, epsilon sweep, label-count sweep, combination strategy.
std::vector<AblationRow> ablation_preset(int num_classes);

// One row per line: "group,name: key=value key=value ...". '#' starts a comment.
std::vector<AblationRow> parse_ablation_grid(const std::string& text);

struct AblationResult {
    AblationRow row;
    double top1 = 0;
    double top5 = 0;
    std::string status;  // "ok" or the failure message
};

// Trains one student per row (base config plus the row's overrides) and
// scores it on `eval`. A failing row is recorded and the grid moves on. The
// CSV at `csv` (when non-empty) is rewritten after every row.
std::vector<AblationResult> ablate(const ResNet& teacher, const RunConfig& base, const std::vector<AblationRow>& rows,
                                   const Dataset& eval, const std::filesystem::path& csv = {});

void write_ablation_csv(const std::vector<AblationResult>& results, const std::filesystem::path& path);

}  // namespace ris

#endif  // RIS_ABLATION_HPP
