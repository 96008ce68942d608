#include "ris/ablation.hpp"

#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "ris/checkpoint.hpp"
#include "ris/metrics.hpp"
#include "ris/trainer.hpp"

namespace ris::inline RIS_PRECISION {

namespace {

std::string csv_cell(std::string s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c == '\n' ? ' ' : c;
    }
    return out + "\"";
}

}  // namespace

std::vector<AblationRow> ablation_preset(int c) {
    std::vector<AblationRow> rows;
    for (const char* k : {"gaussian_noise", "translation", "resize", "random_select"})
        rows.push_back({"input", k, {{"perturb.strategy", "input"}, {"perturb.input.kind", k}}});
    for (const char* k : {"gaussian", "adversarial", "dropout"})
        rows.push_back({"weight", k, {{"perturb.strategy", "weight"}, {"perturb.weight.kind", k}}});
    rows.push_back({"components", "baseline", {{"objective", "gdfq"}}});
    rows.push_back({"components", "soft_labels", {{"loss.lambda_r", "0"}}});
    rows.push_back({"components", "robustness", {{"labels.soft", "false"}}});
    rows.push_back({"components", "full", {}});
    for (const char* e : {"0.05", "0.1", "0.2", "0.3"}) rows.push_back({"epsilon", e, {{"robust.epsilon", e}}});
    for (int n : {c + 1, 2 * c, 5 * c, 10 * c})
        rows.push_back({"labels", fmt::format("N={}", n), {{"labels.rows", std::to_string(n)}}});
    for (const char* s : {"serial", "parallel", "random_pick"})
        rows.push_back({"strategy", s, {{"perturb.strategy", s}}});
    return rows;
}

std::vector<AblationRow> parse_ablation_grid(const std::string& text) {
    std::vector<AblationRow> rows;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto colon = line.find(':');
        const auto comma = line.find(',');
        if (colon == std::string::npos || comma == std::string::npos || comma > colon)
            throw ConfigError(fmt::format("ablation grid line {}: expected 'group,name: key=value ...'", lineno));
        std::istringstream head(line.substr(0, colon));
        AblationRow row;
        std::getline(head, row.group, ',');
        std::getline(head, row.name);
        std::istringstream body(line.substr(colon + 1));
        std::string kv;
        while (body >> kv) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos || eq == 0)
                throw ConfigError(fmt::format("ablation grid line {}: bad override '{}'", lineno, kv));
            row.overrides.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_ablation_csv(const std::vector<AblationResult>& results, const std::filesystem::path& path) {
    std::string out = "group,row,top1,top5,status\n";
    for (const auto& r : results)
        out += fmt::format("{},{},{},{},{}\n", csv_cell(r.row.group), csv_cell(r.row.name), r.top1, r.top5,
                           csv_cell(r.status));
    write_text_atomic(path, out);
}

std::vector<AblationResult> ablate(const ResNet& teacher, const RunConfig& base, const std::vector<AblationRow>& rows,
                                   const Dataset& eval, const std::filesystem::path& csv) {
    base.validate();
    std::vector<AblationResult> results;
    for (const auto& row : rows) {
        AblationResult res{row, 0, 0, "ok"};
        try {
            RunConfig cfg = base;
            for (const auto& [k, v] : row.overrides) set_config_value(cfg, k, v);
            cfg.validate();
            Trainer tr(teacher, cfg.train);
            tr.run();
            const auto acc = evaluate_accuracy(tr.student(), tr.normalization(), eval);
            res.top1 = acc.top1;
            res.top5 = acc.top5;
            spdlog::info("ablation {}/{}: top-1 {:.4f} top-5 {:.4f}", row.group, row.name, acc.top1, acc.top5);
        } catch (const std::exception& e) {
            res.status = e.what();
            spdlog::error("ablation {}/{} failed: {}", row.group, row.name, e.what());
        }
        results.push_back(res);
        if (!csv.empty()) write_ablation_csv(results, csv);
    }
    return results;
}

}  // namespace ris
