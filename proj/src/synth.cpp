#include "pixelcritic/synth.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "pixelcritic/errors.hpp"
#include "pixelcritic/perlin.hpp"
#include "pixelcritic/rng.hpp"
#include "pixelcritic/toyworld.hpp"

namespace pixelcritic {

namespace {

using nlohmann::json;

json record_to_json(const ManifestRecord& r) {
  json j;
  j["image"] = r.image;
  j["label"] = r.label.empty() ? json(nullptr) : json(r.label);
  j["class"] = r.cls.empty() ? json(nullptr) : json(r.cls);
  j["tag"] = r.tag;
  j["seed"] = r.seed;
  return j;
}

std::string zero_pad(int value, int width) {
  std::string s = std::to_string(value);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

}  // namespace

void save_manifest(const std::vector<ManifestRecord>& records,
                   const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open manifest for writing: " + path.string());
  for (const auto& r : records) out << record_to_json(r).dump() << "\n";
  if (!out) throw DataError("write failure on manifest: " + path.string());
}

std::vector<ManifestRecord> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open manifest: " + path.string());
  std::vector<ManifestRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("manifest " + path.string() + " line " + std::to_string(line_no) + ": " +
                      e.what());
    }
    ManifestRecord r;
    r.image = j.at("image").get<std::string>();
    if (j.contains("label") && !j["label"].is_null()) r.label = j["label"].get<std::string>();
    if (j.contains("class") && !j["class"].is_null()) r.cls = j["class"].get<std::string>();
    r.tag = j.value("tag", std::string());
    r.seed = j.value("seed", std::uint64_t(0));
    records.push_back(std::move(r));
  }
  return records;
}

Image load_record_image(const ManifestRecord& record, const std::filesystem::path& base_dir) {
  return load_png(base_dir / record.image);
}

Field load_record_label(const ManifestRecord& record, const std::filesystem::path& base_dir) {
  if (record.label.empty())
    throw DataError("manifest record for " + record.image + " has no label map");
  return load_label_png(base_dir / record.label);
}

std::vector<ManifestRecord> synthesize_training_set(
    const std::vector<ManifestRecord>& real, const std::filesystem::path& real_dir,
    const std::vector<ManifestRecord>& generated, const std::filesystem::path& generated_dir,
    int count, const CollageParams& params, std::uint64_t seed,
    const std::filesystem::path& out_dir) {
  if (count < 0) throw ConfigError("synthesize_training_set: count must be >= 0");
  if (count == 0) return {};
  if (real.empty() || generated.empty())
    throw DataError("synthesize_training_set: source sets must be non-empty");

  std::map<std::string, std::vector<std::size_t>> gen_by_class;
  for (std::size_t i = 0; i < generated.size(); ++i) gen_by_class[generated[i].cls].push_back(i);
  if (params.within_class) {
    std::set<std::string> missing;
    for (const auto& r : real)
      if (!gen_by_class.count(r.cls)) missing.insert(r.cls.empty() ? "<none>" : r.cls);
    if (!missing.empty()) {
      std::string msg = "within-class pairing requested but generated set lacks classes:";
      for (const auto& c : missing) msg += " " + c;
      throw DataError(msg);
    }
  }

  std::filesystem::create_directories(out_dir);
  std::vector<ManifestRecord> records(static_cast<std::size_t>(count));
  for (int idx = 0; idx < count; ++idx) {
    const std::uint64_t sample_seed = derive_seed(seed, static_cast<std::uint64_t>(idx));
    Rng rng(sample_seed);
    const auto& real_rec = real[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(real.size()) - 1))];
    const ManifestRecord* gen_rec;
    if (params.within_class) {
      const auto& pool = gen_by_class.at(real_rec.cls);
      gen_rec = &generated[pool[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1))]];
    } else {
      gen_rec = &generated[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(generated.size()) - 1))];
    }

    const Image real_img = load_record_image(real_rec, real_dir);
    const Image gen_img = load_record_image(*gen_rec, generated_dir);
    if (gen_img.height() != real_img.height() || gen_img.width() != real_img.width())
      throw DataError("source image dims differ between " + real_rec.image + " and " +
                      gen_rec->image);

    const ScalarField field = perlin_field(real_img.height(), real_img.width(),
                                           params.lattice_cells, rng.next_u64());
    const MaskMap alpha = field_to_alpha(field, params.threshold, params.softness);
    CollageSample sample = collage(real_img, gen_img, alpha);
    sample.seed = sample_seed;
    sample.real_id = real_rec.image;
    sample.generated_id = gen_rec->image;

    const int artifacts =
        static_cast<int>(rng.uniform_int(params.min_artifacts, params.max_artifacts));
    for (int a = 0; a < artifacts; ++a)
      sample = apply_circular_artifact(sample, real_img, params.min_radius, params.max_radius,
                                       rng.next_u64());

    ManifestRecord rec;
    rec.image = "collage_" + zero_pad(idx, 5) + ".png";
    rec.label = "collage_" + zero_pad(idx, 5) + "_label.png";
    rec.cls = real_rec.cls;
    rec.tag = "collage";
    rec.seed = sample_seed;
    save_png(sample.image, out_dir / rec.image);
    save_label_png(sample.label, out_dir / rec.label);
    records[static_cast<std::size_t>(idx)] = std::move(rec);
  }
  return records;
}

std::vector<ManifestRecord> synthesize_toy_set(const ToySetParams& params, std::uint64_t seed,
                                               const std::filesystem::path& out_dir,
                                               const std::string& prefix) {
  if (params.count < 0) throw ConfigError("synthesize_toy_set: count must be >= 0");
  if (params.classes < 1) throw ConfigError("synthesize_toy_set: classes must be >= 1");
  if (params.count > 0) std::filesystem::create_directories(out_dir);

  std::vector<ManifestRecord> records(static_cast<std::size_t>(params.count));
  for (int idx = 0; idx < params.count; ++idx) {
    const std::uint64_t sample_seed = derive_seed(seed, static_cast<std::uint64_t>(idx));
    ToyWorldConfig cfg;
    cfg.height = params.height;
    cfg.width = params.width;
    cfg.class_id = idx % params.classes;
    cfg.seed = sample_seed;
    cfg.mode_collapse = params.mode_collapse;
    if (params.corruption_max > params.corruption_min) {
      Rng rng(mix_seed(sample_seed, 3));
      cfg.corruption = rng.uniform(params.corruption_min, params.corruption_max);
    } else {
      cfg.corruption = params.corruption_min;
    }

    ManifestRecord rec;
    rec.image = prefix + "_" + zero_pad(idx, 5) + ".png";
    rec.cls = "c" + std::to_string(cfg.class_id);
    rec.tag = params.generated ? "generated" : "real";
    rec.seed = sample_seed;
    const Image img = params.generated ? make_toy_generated(cfg) : make_toy_real(cfg);
    save_png(img, out_dir / rec.image);
    records[static_cast<std::size_t>(idx)] = std::move(rec);
  }
  return records;
}

}  // namespace pixelcritic
