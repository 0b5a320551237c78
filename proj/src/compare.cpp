#include "cytofuse/compare.hpp"

#include <algorithm>
#include <memory>

#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "cytofuse/error.hpp"
#include "cytofuse/metrics.hpp"
#include "cytofuse/parallel.hpp"

namespace cytofuse {

namespace {

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (;;) {
    const std::size_t end = text.find(sep, start);
    parts.push_back(text.substr(start, end == std::string_view::npos ? end : end - start));
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return parts;
}

// Subsets of {0..n-1} with exactly `size` members, lexicographic.
void subsets_of_size(std::size_t n, std::size_t size, std::size_t first,
                     std::vector<std::size_t>& current,
                     std::vector<std::vector<std::size_t>>& out) {
  if (current.size() == size) {
    out.push_back(current);
    return;
  }
  for (std::size_t i = first; i < n; ++i) {
    current.push_back(i);
    subsets_of_size(n, size, i + 1, current, out);
    current.pop_back();
  }
}

}  // namespace

std::vector<FusionRule> parse_rules(std::string_view csv) {
  if (csv == "all") return {kComparisonRules.begin(), kComparisonRules.end()};
  std::vector<FusionRule> rules;
  for (auto name : split(csv, ',')) {
    const auto rule = parse_rule(name);
    if (!rule) throw ValidationError(fmt::format("unknown rule '{}'", name));
    if (std::find(rules.begin(), rules.end(), *rule) != rules.end()) {
      throw ValidationError(fmt::format("rule '{}' listed twice", name));
    }
    rules.push_back(*rule);
  }
  return rules;
}

std::vector<std::vector<std::size_t>> parse_combos(std::string_view csv, const Manifest& manifest) {
  std::vector<std::vector<std::size_t>> combos;
  const std::size_t n = manifest.models.size();
  if (csv == "all") {
    for (std::size_t j = 0; j < n; ++j) combos.push_back({j});
    for (std::size_t size = n; size >= 2; --size) {
      std::vector<std::size_t> current;
      subsets_of_size(n, size, 0, current, combos);
    }
    return combos;
  }
  for (auto item : split(csv, ',')) {
    std::vector<std::size_t> combo;
    for (auto name : split(item, '+')) {
      const auto j = manifest.find_model(name);
      if (!j) throw ValidationError(fmt::format("unknown model '{}'", name));
      combo.push_back(*j);
    }
    combos.push_back(std::move(combo));
  }
  return combos;
}

std::string combo_label(const std::vector<std::size_t>& combo, const Manifest& manifest) {
  std::string label;
  for (std::size_t j : combo) {
    if (!label.empty()) label += '+';
    label += manifest.models.at(j).name;
  }
  return label;
}

ComparisonTable build_comparison(const Manifest& manifest, const std::vector<FusionRule>& rules,
                                 const std::vector<std::vector<std::size_t>>& combos,
                                 unsigned threads) {
  if (rules.empty()) throw ValidationError("no fusion rules selected");
  if (combos.empty()) throw ValidationError("no model combinations selected");
  if (manifest.images.empty()) throw ValidationError("manifest lists no images to evaluate");
  const std::size_t cells = combos.size() * rules.size();
  const std::size_t c = manifest.classes.num_classes();

  std::vector<bool> needed(manifest.models.size(), false);
  for (const auto& combo : combos) {
    if (combo.empty()) throw ValidationError("empty model combination");
    for (std::size_t j : combo) needed.at(j) = true;
  }

  std::vector<std::vector<ConfusionMatrix>> per_image(manifest.images.size());
  parallel_for(manifest.images.size(), threads, [&](std::size_t i) {
    const std::string& id = manifest.images[i];
    const LabelMask gt = read_mask(manifest.ground_truth_path(id), c);
    std::vector<NamedProbMap> maps(manifest.models.size());
    for (std::size_t j = 0; j < manifest.models.size(); ++j) {
      maps[j].name = manifest.models[j].name;
      if (needed[j]) maps[j].map = std::make_shared<const ProbMap>(read_probmap(manifest.probmap_path(j, id)));
    }
    std::vector<ConfusionMatrix> matrices(cells, ConfusionMatrix(c));
    for (std::size_t r = 0; r < combos.size(); ++r) {
      std::vector<NamedProbMap> picked;
      for (std::size_t j : combos[r]) picked.push_back(maps[j]);
      const ModelStack stack = stack_models(std::move(picked));
      if (stack.num_classes() != c) {
        throw ValidationError(fmt::format("image '{}': maps have {} classes, manifest declares {}",
                                          id, stack.num_classes(), c));
      }
      for (std::size_t k = 0; k < rules.size(); ++k) {
        matrices[r * rules.size() + k].accumulate(fuse(rules[k], stack), gt, id);
      }
    }
    per_image[i] = std::move(matrices);
  });

  ComparisonTable table;
  table.rules = rules;
  for (std::size_t r = 0; r < combos.size(); ++r) {
    ComparisonRow row{combo_label(combos[r], manifest), {}};
    for (std::size_t k = 0; k < rules.size(); ++k) {
      ConfusionMatrix pooled(c);
      for (const auto& matrices : per_image) pooled.merge(matrices[r * rules.size() + k]);
      row.mean_iou_percent.push_back(mean_iou(pooled) * 100.0);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

ComparisonTable run_experiment(const SynthConfig& config, const std::filesystem::path& out_dir,
                               const std::vector<FusionRule>& rules, std::string_view combos,
                               unsigned threads) {
  const Manifest manifest = synthesize_dataset(config, out_dir, threads);
  const auto selected = parse_combos(combos, manifest);
  for (const auto& combo : selected) {
    if (combo.size() > 1 && manifest.models.size() < 2) {
      throw ValidationError("model combinations need at least 2 variants");
    }
  }
  return build_comparison(manifest, rules, selected, threads);
}

std::string render_markdown(const ComparisonTable& table) {
  std::string out = "| Model |";
  std::string rule_line = "|:---|";
  for (FusionRule rule : table.rules) {
    out += fmt::format(" {} |", rule_title(rule));
    rule_line += "---:|";
  }
  out += "\n" + rule_line + "\n";
  for (const auto& row : table.rows) {
    std::vector<std::string> cells;
    for (double v : row.mean_iou_percent) cells.push_back(format_two_decimals(v));
    // Compare the printed values so bolding agrees with what the reader sees.
    std::string best;
    double best_value = -1.0;
    for (std::size_t k = 0; k < cells.size(); ++k) {
      const double shown = std::stod(cells[k]);
      if (shown > best_value) {
        best_value = shown;
        best = cells[k];
      }
    }
    out += fmt::format("| {} |", row.label);
    for (const auto& cell : cells) {
      out += cell == best ? fmt::format(" **{}** |", cell) : fmt::format(" {} |", cell);
    }
    out += "\n";
  }
  return out;
}

std::string comparison_to_json(const ComparisonTable& table) {
  nlohmann::ordered_json doc;
  auto rules = nlohmann::ordered_json::array();
  for (FusionRule rule : table.rules) rules.push_back(std::string(rule_name(rule)));
  doc["rules"] = std::move(rules);
  auto rows = nlohmann::ordered_json::array();
  for (const auto& row : table.rows) {
    nlohmann::ordered_json entry;
    entry["label"] = row.label;
    entry["mean_iou_percent"] = row.mean_iou_percent;
    rows.push_back(std::move(entry));
  }
  doc["rows"] = std::move(rows);
  return doc.dump(2) + "\n";
}

ComparisonTable comparison_from_json(std::string_view json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(fmt::format("comparison table is not valid JSON: {}", e.what()), e.byte);
  }
  if (!doc.is_object() || !doc.contains("rules") || !doc.contains("rows") ||
      !doc["rules"].is_array() || !doc["rows"].is_array()) {
    throw ValidationError("comparison table needs 'rules' and 'rows' arrays");
  }
  for (const auto& [key, value] : doc.items()) {
    if (key != "rules" && key != "rows") {
      throw ValidationError(fmt::format("comparison table: unknown key '{}'", key));
    }
  }
  ComparisonTable table;
  for (const auto& name : doc["rules"]) {
    if (!name.is_string()) throw ValidationError("comparison table: rule names must be strings");
    const auto rule = parse_rule(name.get<std::string>());
    if (!rule) throw ValidationError(fmt::format("unknown rule '{}'", name.get<std::string>()));
    table.rules.push_back(*rule);
  }
  for (const auto& entry : doc["rows"]) {
    if (!entry.is_object() || !entry.contains("label") || !entry["label"].is_string() ||
        !entry.contains("mean_iou_percent") || !entry["mean_iou_percent"].is_array()) {
      throw ValidationError("comparison table: rows need 'label' and 'mean_iou_percent'");
    }
    ComparisonRow row{entry["label"].get<std::string>(), {}};
    for (const auto& v : entry["mean_iou_percent"]) {
      if (!v.is_number()) throw ValidationError("comparison table: cells must be numbers");
      row.mean_iou_percent.push_back(v.get<double>());
    }
    if (row.mean_iou_percent.size() != table.rules.size()) {
      throw ValidationError(fmt::format("comparison table: row '{}' has {} cells for {} rules",
                                        row.label, row.mean_iou_percent.size(), table.rules.size()));
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace cytofuse
