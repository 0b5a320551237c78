#include "cytofuse/cli.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "cytofuse/compare.hpp"
#include "cytofuse/dataset_io.hpp"
#include "cytofuse/error.hpp"
#include "cytofuse/fusion.hpp"
#include "cytofuse/metrics.hpp"
#include "cytofuse/parallel.hpp"
#include "cytofuse/synth.hpp"

namespace cytofuse {

namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

struct FuseOptions {
  std::string manifest;
  std::string rule;
  std::string models;
  std::string out;
  bool scores = false;
};

struct EvalOptions {
  std::string pred;
  std::string manifest;
  std::string report = "json";
};

struct CompareOptions {
  std::string manifest;
  std::string rules = "all";
  std::string combos = "all";
  std::string out;
  std::string from_json;
};

struct SynthOptions {
  std::uint64_t seed = 42;
  std::size_t images = 20;
  std::string size = "128x128";
  std::size_t classes = 5;
  std::size_t variants = 3;
  std::string out;
};

std::vector<std::string> split_csv(const std::string& text) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (;;) {
    const std::size_t end = text.find(',', start);
    parts.push_back(text.substr(start, end == std::string::npos ? end : end - start));
    if (end == std::string::npos) return parts;
    start = end + 1;
  }
}

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw IoError(fmt::format("cannot create directory '{}': {}", dir.string(),
                              ec ? ec.message() : "not a directory"));
  }
}

std::size_t parse_dimension(std::string_view text, std::string_view whole) {
  std::size_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
    throw ValidationError(fmt::format("--size must look like HxW, got '{}'", whole));
  }
  return value;
}

std::pair<std::size_t, std::size_t> parse_size(std::string_view text) {
  const std::size_t x = text.find('x');
  if (x == std::string_view::npos) {
    throw ValidationError(fmt::format("--size must look like HxW, got '{}'", text));
  }
  const std::size_t h = parse_dimension(text.substr(0, x), text);
  const std::size_t w = parse_dimension(text.substr(x + 1), text);
  if (h == 0 || w == 0) throw ValidationError(fmt::format("--size has zero area: '{}'", text));
  return {h, w};
}

int cmd_fuse(const FuseOptions& opt, std::ostream& out, std::ostream& err) {
  const auto rule = parse_rule(opt.rule);
  if (!rule) throw ValidationError(fmt::format("unknown rule '{}'", opt.rule));
  const Manifest manifest = load_manifest(opt.manifest);

  std::vector<std::size_t> chosen;
  for (const auto& name : split_csv(opt.models)) {
    const auto j = manifest.find_model(name);
    if (!j) throw ValidationError(fmt::format("unknown model '{}'", name));
    if (std::find(chosen.begin(), chosen.end(), *j) != chosen.end()) {
      throw ValidationError(fmt::format("model '{}' listed twice", name));
    }
    chosen.push_back(*j);
  }
  const fs::path out_dir(opt.out);
  ensure_directory(out_dir);

  const std::size_t c = manifest.classes.num_classes();
  const std::size_t total = manifest.images.size();
  std::mutex log_mutex;
  std::size_t done = 0;
  parallel_for(total, threads_from_env(), [&](std::size_t i) {
    const std::string& id = manifest.images[i];
    std::vector<NamedProbMap> maps;
    for (std::size_t j : chosen) {
      maps.push_back({manifest.models[j].name,
                      std::make_shared<const ProbMap>(read_probmap(manifest.probmap_path(j, id)))});
    }
    const ModelStack stack = stack_models(std::move(maps));
    if (stack.num_classes() != c) {
      throw ValidationError(fmt::format("image '{}': maps have {} classes, manifest declares {}", id,
                                        stack.num_classes(), c));
    }
    if (opt.scores) {
      const FusionResult result = fuse_with_scores(*rule, stack);
      write_mask(result.labels, out_dir / (id + ".pgm"));
      write_scores(result.scores, out_dir / (id + ".scores.npy"));
    } else {
      write_mask(fuse(*rule, stack), out_dir / (id + ".pgm"));
    }
    const std::lock_guard lock(log_mutex);
    err << fmt::format("[fuse] {}/{} {}\n", ++done, total, id) << std::flush;
  });

  Json summary;
  summary["command"] = "fuse";
  summary["rule"] = std::string(rule_name(*rule));
  auto names = Json::array();
  for (std::size_t j : chosen) names.push_back(manifest.models[j].name);
  summary["models"] = std::move(names);
  summary["images"] = total;
  summary["out"] = out_dir.string();
  summary["scores"] = opt.scores;
  out << summary.dump(2) << "\n";
  return kExitOk;
}

int cmd_eval(const EvalOptions& opt, std::ostream& out, std::ostream& err) {
  const Manifest manifest = load_manifest(opt.manifest);
  const fs::path pred_dir(opt.pred);

  std::vector<std::string> missing;
  for (const auto& id : manifest.images) {
    std::error_code ec;
    if (!fs::is_regular_file(pred_dir / (id + ".pgm"), ec)) missing.push_back(id);
  }
  if (!missing.empty()) {
    std::string ids;
    for (const auto& id : missing) ids += (ids.empty() ? "" : ", ") + id;
    throw ValidationError(fmt::format("missing predictions in '{}' for {} image(s): {}",
                                      pred_dir.string(), missing.size(), ids));
  }

  const std::size_t c = manifest.classes.num_classes();
  std::vector<ConfusionMatrix> per_image(manifest.images.size(), ConfusionMatrix(c));
  parallel_for(manifest.images.size(), threads_from_env(), [&](std::size_t i) {
    const std::string& id = manifest.images[i];
    per_image[i].accumulate(read_mask(pred_dir / (id + ".pgm"), c),
                            read_mask(manifest.ground_truth_path(id), c), id);
  });
  ConfusionMatrix pooled(c);
  for (const auto& cm : per_image) pooled.merge(cm);
  const EvalReport report = evaluate(pooled);
  err << fmt::format("[eval] {} image(s), {} pixel(s)\n", manifest.images.size(), pooled.total());

  out << (opt.report == "table" ? report_to_table(report, manifest.classes.names())
                                : report_to_json(report));
  return kExitOk;
}

int cmd_compare(const CompareOptions& opt, std::ostream& out, std::ostream& err) {
  ComparisonTable table;
  if (!opt.from_json.empty()) {
    const auto bytes = read_file(opt.from_json);
    table = comparison_from_json(
        std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  } else {
    if (opt.manifest.empty()) throw ValidationError("compare needs --manifest or --from-json");
    const Manifest manifest = load_manifest(opt.manifest);
    if (opt.combos == "all" && manifest.models.size() < 2) {
      throw ValidationError("'--combos all' needs a manifest with at least 2 models");
    }
    const auto rules = parse_rules(opt.rules);
    const auto combos = parse_combos(opt.combos, manifest);
    err << fmt::format("[compare] {} combination(s) x {} rule(s) over {} image(s)\n", combos.size(),
                       rules.size(), manifest.images.size());
    table = build_comparison(manifest, rules, combos, threads_from_env());
  }

  const fs::path md_path(opt.out);
  fs::path json_path = md_path;
  json_path.replace_extension(".json");
  if (json_path == md_path) json_path += ".json";
  if (md_path.has_parent_path()) ensure_directory(md_path.parent_path());
  write_file_atomic(md_path, render_markdown(table));
  write_file_atomic(json_path, comparison_to_json(table));

  Json summary;
  summary["command"] = "compare";
  summary["markdown"] = md_path.string();
  summary["json"] = json_path.string();
  summary["rows"] = table.rows.size();
  summary["columns"] = table.rules.size();
  out << summary.dump(2) << "\n";
  return kExitOk;
}

int cmd_synth(const SynthOptions& opt, std::ostream& out, std::ostream& err) {
  const auto [height, width] = parse_size(opt.size);
  SynthConfig config;
  config.seed = opt.seed;
  config.images = opt.images;
  config.height = height;
  config.width = width;
  config.num_classes = opt.classes;
  config.variants = opt.variants;

  const fs::path out_dir(opt.out);
  err << fmt::format("[synth] seed {} writing {} image(s) of {}x{} to '{}'\n", config.seed,
                     config.images, height, width, out_dir.string());
  const Manifest manifest = synthesize_dataset(config, out_dir, threads_from_env());

  Json summary;
  summary["command"] = "synth";
  summary["manifest"] = (out_dir / "manifest.json").string();
  summary["num_classes"] = manifest.classes.num_classes();
  auto models = Json::array();
  for (const auto& m : manifest.models) models.push_back(m.name);
  summary["models"] = std::move(models);
  summary["train_images"] = manifest.train_images.size();
  summary["test_images"] = manifest.images.size();
  out << summary.dump(2) << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Rank-based late fusion of segmentation probability maps", "cyto-fuse"};
  app.require_subcommand(1);

  FuseOptions fuse_opt;
  auto* fuse_cmd = app.add_subcommand("fuse", "Fuse model probability maps into label masks");
  fuse_cmd->add_option("--manifest", fuse_opt.manifest, "Dataset manifest (JSON)")->required();
  fuse_cmd->add_option("--rule", fuse_opt.rule, "fuzzy, avg, geo, median, max, min, borda or majority")
      ->required();
  fuse_cmd->add_option("--models", fuse_opt.models, "Comma-separated model names")->required();
  fuse_cmd->add_option("--out", fuse_opt.out, "Output directory for <id>.pgm masks")->required();
  fuse_cmd->add_flag("--scores", fuse_opt.scores, "Also write <id>.scores.npy fused score tensors");

  EvalOptions eval_opt;
  auto* eval_cmd = app.add_subcommand("eval", "Score predicted masks against ground truth");
  eval_cmd->add_option("--pred", eval_opt.pred, "Directory of <id>.pgm predictions")->required();
  eval_cmd->add_option("--manifest", eval_opt.manifest, "Dataset manifest (JSON)")->required();
  eval_cmd->add_option("--report", eval_opt.report, "Output format")
      ->check(CLI::IsMember({"json", "table"}));

  CompareOptions cmp_opt;
  auto* cmp_cmd = app.add_subcommand("compare", "Tabulate mean IoU for rules x model combinations");
  auto* cmp_manifest = cmp_cmd->add_option("--manifest", cmp_opt.manifest, "Dataset manifest (JSON)");
  cmp_cmd->add_option("--rules", cmp_opt.rules, "Comma-separated rule names, or 'all'");
  cmp_cmd->add_option("--combos", cmp_opt.combos, "Comma-separated '+'-joined model sets, or 'all'");
  cmp_cmd->add_option("--out", cmp_opt.out, "Markdown output; JSON is written next to it")->required();
  cmp_cmd->add_option("--from-json", cmp_opt.from_json, "Render a saved comparison JSON instead")
      ->excludes(cmp_manifest);

  SynthOptions syn_opt;
  auto* syn_cmd = app.add_subcommand("synth", "Generate a deterministic synthetic dataset");
  syn_cmd->add_option("--seed", syn_opt.seed, "Random seed")->capture_default_str();
  syn_cmd->add_option("--images", syn_opt.images, "Number of images (4:1 train/test)")
      ->capture_default_str();
  syn_cmd->add_option("--size", syn_opt.size, "Image size as HxW")->capture_default_str();
  syn_cmd->add_option("--classes", syn_opt.classes, "Number of classes")->capture_default_str();
  syn_cmd->add_option("--variants", syn_opt.variants, "Number of base models")->capture_default_str();
  syn_cmd->add_option("--out", syn_opt.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (fuse_cmd->parsed()) return cmd_fuse(fuse_opt, out, err);
    if (eval_cmd->parsed()) return cmd_eval(eval_opt, out, err);
    if (cmp_cmd->parsed()) return cmd_compare(cmp_opt, out, err);
    return cmd_synth(syn_opt, out, err);
  } catch (const IoError& e) {
    err << "cyto-fuse: error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "cyto-fuse: error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "cyto-fuse: error: " << e.what() << "\n";
    return kExitInvalid;
  }
}

}  // namespace cytofuse
