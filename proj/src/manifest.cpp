#include <set>

#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "cytofuse/dataset_io.hpp"
#include "cytofuse/error.hpp"

namespace cytofuse {

namespace {

using Json = nlohmann::ordered_json;

void reject_unknown_keys(const Json& object, std::initializer_list<std::string_view> allowed,
                         std::string_view where) {
  for (const auto& [key, value] : object.items()) {
    bool known = false;
    for (auto a : allowed) known = known || key == a;
    if (!known) throw ValidationError(fmt::format("manifest: unknown key '{}' in {}", key, where));
  }
}

const Json& require(const Json& object, const char* key, std::string_view where) {
  const auto it = object.find(key);
  if (it == object.end()) {
    throw ValidationError(fmt::format("manifest: missing key '{}' in {}", key, where));
  }
  return *it;
}

std::string require_string(const Json& value, std::string_view what) {
  if (!value.is_string() || value.get<std::string>().empty()) {
    throw ValidationError(fmt::format("manifest: {} must be a non-empty string", what));
  }
  return value.get<std::string>();
}

void check_image_id(const std::string& id) {
  if (id.empty() || id == "." || id == ".." || id.find_first_of("/\\") != std::string::npos) {
    throw ValidationError(fmt::format("manifest: invalid image id '{}'", id));
  }
}

std::vector<std::string> parse_ids(const Json& value, std::string_view what) {
  if (!value.is_array()) throw ValidationError(fmt::format("manifest: {} must be an array", what));
  std::vector<std::string> ids;
  for (const auto& item : value) {
    ids.push_back(require_string(item, fmt::format("each entry of {}", what)));
    check_image_id(ids.back());
  }
  return ids;
}

ClassSet parse_classes(const Json& value) {
  if (!value.is_object()) throw ValidationError("manifest: 'classes' must be an object");
  reject_unknown_keys(value, {"num_classes", "names", "palette"}, "'classes'");
  const Json& count = require(value, "num_classes", "'classes'");
  if (!count.is_number_unsigned()) {
    throw ValidationError("manifest: 'num_classes' must be a non-negative integer");
  }
  const Json& names_json = require(value, "names", "'classes'");
  if (!names_json.is_array()) throw ValidationError("manifest: 'names' must be an array");
  std::vector<std::string> names;
  for (const auto& n : names_json) names.push_back(require_string(n, "each class name"));
  if (names.size() != count.get<std::size_t>()) {
    throw ValidationError(fmt::format("manifest: num_classes is {} but {} names are listed",
                                      count.get<std::size_t>(), names.size()));
  }
  std::optional<std::vector<Rgb>> palette;
  if (const auto it = value.find("palette"); it != value.end()) {
    if (!it->is_array()) throw ValidationError("manifest: 'palette' must be an array");
    palette.emplace();
    for (const auto& color : *it) {
      if (!color.is_array() || color.size() != 3) {
        throw ValidationError("manifest: palette entries must be [r, g, b]");
      }
      std::uint8_t channels[3];
      for (std::size_t c = 0; c < 3; ++c) {
        if (!color[c].is_number_unsigned() || color[c].get<unsigned>() > 255) {
          throw ValidationError("manifest: palette channels must be integers in 0-255");
        }
        channels[c] = static_cast<std::uint8_t>(color[c].get<unsigned>());
      }
      palette->push_back(Rgb{channels[0], channels[1], channels[2]});
    }
  }
  return ClassSet(std::move(names), std::move(palette));
}

std::filesystem::path resolve(const std::filesystem::path& root, const std::string& p) {
  const std::filesystem::path rel(p);
  return rel.is_absolute() ? rel : root / rel;
}

}  // namespace

std::filesystem::path Manifest::probmap_path(std::size_t model, std::string_view image_id) const {
  return resolve(root, models.at(model).dir) / (std::string(image_id) + ".npy");
}

std::filesystem::path Manifest::ground_truth_path(std::string_view image_id) const {
  return resolve(root, ground_truth_dir) / (std::string(image_id) + ".pgm");
}

std::optional<std::filesystem::path> Manifest::image_path(std::string_view image_id) const {
  if (!image_dir) return std::nullopt;
  return resolve(root, *image_dir) / (std::string(image_id) + ".ppm");
}

std::optional<std::size_t> Manifest::find_model(std::string_view name) const {
  for (std::size_t j = 0; j < models.size(); ++j) {
    if (models[j].name == name) return j;
  }
  return std::nullopt;
}

Manifest parse_manifest(std::string_view json_text, const std::filesystem::path& root) {
  Json doc;
  try {
    doc = Json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(fmt::format("manifest is not valid JSON: {}", e.what()), e.byte);
  }
  if (!doc.is_object()) throw ValidationError("manifest: top level must be an object");
  reject_unknown_keys(doc,
                      {"version", "classes", "models", "ground_truth_dir", "images",
                       "train_images", "image_dir"},
                      "the top level");

  Manifest m;
  m.root = root;
  m.version = require_string(require(doc, "version", "the top level"), "'version'");
  if (m.version != kManifestVersion) {
    throw ValidationError(fmt::format("manifest: unsupported version '{}'; expected '{}'",
                                      m.version, kManifestVersion));
  }
  m.classes = parse_classes(require(doc, "classes", "the top level"));

  const Json& models = require(doc, "models", "the top level");
  if (!models.is_array() || models.empty()) {
    throw ValidationError("manifest: 'models' must be a non-empty array");
  }
  std::set<std::string> model_names;
  for (const auto& entry : models) {
    if (!entry.is_object()) throw ValidationError("manifest: model entries must be objects");
    reject_unknown_keys(entry, {"name", "dir"}, "a model entry");
    ModelEntry model{require_string(require(entry, "name", "a model entry"), "model name"),
                     require_string(require(entry, "dir", "a model entry"), "model dir")};
    if (model.name.find_first_of(",+") != std::string::npos) {
      throw ValidationError(
          fmt::format("manifest: model name '{}' may not contain ',' or '+'", model.name));
    }
    if (!model_names.insert(model.name).second) {
      throw ValidationError(fmt::format("manifest: duplicate model name '{}'", model.name));
    }
    m.models.push_back(std::move(model));
  }

  m.ground_truth_dir =
      require_string(require(doc, "ground_truth_dir", "the top level"), "'ground_truth_dir'");
  m.images = parse_ids(require(doc, "images", "the top level"), "'images'");
  if (const auto it = doc.find("train_images"); it != doc.end()) {
    m.train_images = parse_ids(*it, "'train_images'");
  }
  if (const auto it = doc.find("image_dir"); it != doc.end()) {
    m.image_dir = require_string(*it, "'image_dir'");
  }

  std::set<std::string> ids;
  for (const auto* list : {&m.images, &m.train_images}) {
    for (const auto& id : *list) {
      if (!ids.insert(id).second) {
        throw ValidationError(fmt::format("manifest: duplicate image id '{}'", id));
      }
    }
  }
  return m;
}

std::vector<std::filesystem::path> missing_files(const Manifest& manifest) {
  std::vector<std::filesystem::path> missing;
  const auto check = [&](const std::filesystem::path& p) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(p, ec)) missing.push_back(p);
  };
  for (const auto& id : manifest.images) {
    for (std::size_t j = 0; j < manifest.models.size(); ++j) check(manifest.probmap_path(j, id));
    check(manifest.ground_truth_path(id));
  }
  for (const auto& id : manifest.train_images) check(manifest.ground_truth_path(id));
  if (manifest.image_dir) {
    for (const auto* list : {&manifest.images, &manifest.train_images}) {
      for (const auto& id : *list) check(*manifest.image_path(id));
    }
  }
  return missing;
}

Manifest load_manifest(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const std::string_view text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  Manifest m = parse_manifest(text, path.parent_path());
  const auto missing = missing_files(m);
  if (!missing.empty()) {
    std::string message = fmt::format("manifest '{}' references {} missing file(s):",
                                      path.string(), missing.size());
    for (const auto& p : missing) message += "\n  " + p.string();
    throw ValidationError(message);
  }
  return m;
}

std::string manifest_to_json(const Manifest& manifest) {
  Json doc;
  doc["version"] = manifest.version;
  Json classes;
  classes["num_classes"] = manifest.classes.num_classes();
  classes["names"] = manifest.classes.names();
  if (manifest.classes.palette()) {
    Json palette = Json::array();
    for (const Rgb& c : *manifest.classes.palette()) palette.push_back({c.r, c.g, c.b});
    classes["palette"] = std::move(palette);
  }
  doc["classes"] = std::move(classes);
  Json models = Json::array();
  for (const auto& model : manifest.models) models.push_back({{"name", model.name}, {"dir", model.dir}});
  doc["models"] = std::move(models);
  doc["ground_truth_dir"] = manifest.ground_truth_dir;
  doc["images"] = manifest.images;
  if (!manifest.train_images.empty()) doc["train_images"] = manifest.train_images;
  if (manifest.image_dir) doc["image_dir"] = *manifest.image_dir;
  return doc.dump(2) + "\n";
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  write_file_atomic(path, manifest_to_json(manifest));
}

}  // namespace cytofuse
