#pragma once

// Dataset directory: manifest.json plus slices/<id>_<k>.pgm.

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scanscribe/data.hpp"
#include "scanscribe/error.hpp"
#include "scanscribe/netpbm.hpp"

namespace scanscribe {

inline constexpr const char* kDatasetFormat = "scanscribe-dataset";
inline constexpr int kDatasetFormatVersion = 1;

inline nlohmann::json box_to_json(const Box& b) {
  return {{"top", b.top}, {"bottom", b.bottom}, {"left", b.left}, {"right", b.right}};
}

inline Box box_from_json(const nlohmann::json& j) {
  return {j.at("top").get<double>(), j.at("bottom").get<double>(), j.at("left").get<double>(),
          j.at("right").get<double>()};
}

inline std::string slice_filename(const std::string& id, std::size_t k) {
  return "slices/" + id + "_" + std::to_string(k) + ".pgm";
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw data_error("cannot write " + path.string());
  out << text;
  if (!out) throw data_error("write failed for " + path.string());
}

inline nlohmann::json read_json_file(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error(std::string(what) + ": cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw data_error(std::string(what) + ": " + path.string() + ": " + e.what());
  }
}

// `extra` is merged into the manifest's top level (run config, tool version).
inline void save_dataset(const std::filesystem::path& dir, const std::vector<DatasetRecord>& records,
                         const nlohmann::json& extra = nlohmann::json::object()) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "slices", ec);
  if (ec) throw data_error("cannot create dataset directory " + dir.string() + ": " + ec.message());
  nlohmann::json manifest = extra;
  manifest["format"] = kDatasetFormat;
  manifest["format_version"] = kDatasetFormatVersion;
  auto& list = manifest["records"] = nlohmann::json::array();
  for (const auto& r : records) {
    nlohmann::json files = nlohmann::json::array();
    for (std::size_t k = 0; k < r.stack.size(); ++k) {
      const auto name = slice_filename(r.id, k);
      write_pgm((dir / name).string(), r.stack[k]);
      files.push_back(name);
    }
    list.push_back({{"id", r.id},
                    {"slices", files},
                    {"height", r.stack.height()},
                    {"width", r.stack.width()},
                    {"phase_axis", to_string(r.stack.phase_axis())},
                    {"label", box_to_json(r.label)},
                    {"split", to_string(r.split)},
                    {"provenance",
                     {{"seed", r.provenance.seed},
                      {"index", r.provenance.index},
                      {"lineage", r.provenance.lineage}}}});
  }
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

struct Dataset {
  std::vector<DatasetRecord> records;
  nlohmann::json manifest;

  std::vector<const DatasetRecord*> split(Split s) const { return select_split(records, s); }

  const DatasetRecord& find(const std::string& id) const {
    for (const auto& r : records)
      if (r.id == id) return r;
    throw data_error("unknown stack id '" + id + "'");
  }
};

inline Dataset load_dataset(const std::filesystem::path& dir, std::size_t max_slices = 40) {
  const auto path = dir / "manifest.json";
  if (!std::filesystem::exists(path)) throw data_error("missing manifest: " + path.string());
  Dataset ds;
  ds.manifest = read_json_file(path, "malformed manifest");
  std::map<std::string, Split> seen;
  try {
    if (ds.manifest.value("format", std::string()) != kDatasetFormat) {
      throw data_error("malformed manifest: format tag is not " + std::string(kDatasetFormat));
    }
    for (const auto& j : ds.manifest.at("records")) {
      DatasetRecord r;
      r.id = j.at("id").get<std::string>();
      r.split = split_from_string(j.at("split").get<std::string>());
      if (auto it = seen.find(r.id); it != seen.end()) {
        if (it->second != r.split) throw data_error("split overlap: stack " + r.id);
        throw data_error("malformed manifest: duplicate stack id " + r.id);
      }
      seen.emplace(r.id, r.split);
      const auto H = j.at("height").get<std::size_t>();
      const auto W = j.at("width").get<std::size_t>();
      std::vector<Raster> slices;
      for (const auto& f : j.at("slices")) {
        const auto file = dir / f.get<std::string>();
        if (!std::filesystem::exists(file)) throw data_error("missing slice: " + file.string());
        auto raster = read_pgm(file.string());
        if (raster.height != H || raster.width != W) {
          throw data_error("slice size mismatch: " + file.string());
        }
        slices.push_back(std::move(raster));
      }
      const auto axis = j.at("phase_axis").get<std::string>();
      if (axis != "rows" && axis != "columns") {
        throw data_error("malformed manifest: bad phase_axis '" + axis + "' for stack " + r.id);
      }
      r.stack = LocalizerStack(std::move(slices), axis_from_string(axis), max_slices);
      r.label = box_from_json(j.at("label"));
      if (!r.label.valid() || r.label.top < 0 || r.label.left < 0 || r.label.bottom > double(H) ||
          r.label.right > double(W)) {
        throw data_error("label out of bounds: stack " + r.id);
      }
      if (j.contains("provenance")) {
        const auto& p = j.at("provenance");
        r.provenance.seed = p.at("seed").get<std::uint64_t>();
        r.provenance.index = p.at("index").get<std::uint64_t>();
        r.provenance.lineage = p.at("lineage").get<std::vector<std::string>>();
      }
      ds.records.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw data_error(std::string("malformed manifest: ") + e.what());
  }
  return ds;
}

}  // namespace scanscribe
