#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "cytofuse/dataset_io.hpp"
#include "cytofuse/fusion.hpp"
#include "cytofuse/synth.hpp"

namespace cytofuse {

// Rows are model combinations ("U", "U+S", ...), columns are fusion rules,
// cells are mean IoU in percent.
struct ComparisonRow {
  std::string label;
  std::vector<double> mean_iou_percent;  // one per column
};

struct ComparisonTable {
  std::vector<FusionRule> rules;
  std::vector<ComparisonRow> rows;
};

// "all" yields kComparisonRules; otherwise a comma-separated list of rule
// names. ValidationError on unknown names or an empty list.
std::vector<FusionRule> parse_rules(std::string_view csv);

// Model-index lists for every row. "all" yields each single model in
// manifest order, then the full set, then subsets by decreasing size in
// lexicographic index order. Otherwise a comma-separated list of
// '+'-joined model names, e.g. "U+S,U+P". A name may repeat inside one
// combination ("U+U"). ValidationError on unknown names.
std::vector<std::vector<std::size_t>> parse_combos(std::string_view csv, const Manifest& manifest);

std::string combo_label(const std::vector<std::size_t>& combo, const Manifest& manifest);

// Fuses every test image for every (combo, rule) cell and scores each cell
// with a pooled confusion matrix. Images are processed in parallel; the
// result does not depend on the thread count.
ComparisonTable build_comparison(const Manifest& manifest, const std::vector<FusionRule>& rules,
                                 const std::vector<std::vector<std::size_t>>& combos,
                                 unsigned threads = 1);

// Markdown table; every cell equal (at two decimals) to its row maximum is
// bolded.
std::string render_markdown(const ComparisonTable& table);

// {"rules": ["avg", ...], "rows": [{"label": "U+P", "mean_iou_percent": [...]}]}
std::string comparison_to_json(const ComparisonTable& table);
ComparisonTable comparison_from_json(std::string_view json_text);

// Synthesizes a dataset into `out_dir`, then tabulates it. `combos` is
// parsed as in parse_combos; any multi-model combination needs at least two
// variants.
ComparisonTable run_experiment(const SynthConfig& config, const std::filesystem::path& out_dir,
                               const std::vector<FusionRule>& rules, std::string_view combos,
                               unsigned threads = 1);

}  // namespace cytofuse
