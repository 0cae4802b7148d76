#pragma once

#include <cstdio>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "ddlsff/error.hpp"
#include "ddlsff/focus_volume.hpp"
#include "ddlsff/io.hpp"

namespace ddlsff::io {

/// A focus volume on disk: one PFM per slice plus index.json. PFM holds
/// float32, so values read back are the single-precision roundings.
struct StoredVolume {
  FocusVolume volume;
  std::vector<double> focal_distances;
};

inline std::string kind_name(FocusSource::Kind k) {
  switch (k) {
    case FocusSource::Kind::ddl: return "ddl";
    case FocusSource::Kind::ddl_cumulative: return "ddl_cumulative";
    case FocusSource::Kind::laplacian: return "laplacian";
    case FocusSource::Kind::external: return "external";
  }
  return "external";
}

inline FocusSource::Kind parse_kind(const std::string& s) {
  if (s == "ddl") return FocusSource::Kind::ddl;
  if (s == "ddl_cumulative") return FocusSource::Kind::ddl_cumulative;
  if (s == "laplacian") return FocusSource::Kind::laplacian;
  return FocusSource::Kind::external;
}

/// Writes slice_000.pfm … and index.json; returns the written paths.
inline std::vector<fs::path> write_volume_dir(const fs::path& dir, const FocusVolume& fv,
                                              const std::vector<double>& focal_distances) {
  require(focal_distances.size() == static_cast<std::size_t>(fv.slices()), "one focal distance per slice required");
  nlohmann::json index;
  index["format"] = "ddlsff-focus-volume";
  index["slices"] = fv.slices();
  index["height"] = fv.height();
  index["width"] = fv.width();
  index["kind"] = kind_name(fv.source().kind);
  index["dilation"] = fv.source().dilation;
  index["source"] = fv.source().describe();
  index["focal_distances"] = focal_distances;
  index["files"] = nlohmann::json::array();
  std::vector<fs::path> written;
  for (int s = 0; s < fv.slices(); ++s) {
    char name[32];
    std::snprintf(name, sizeof name, "slice_%03d.pfm", s);
    write_pfm(dir / name, fv.slice_plane(s));
    index["files"].push_back(name);
    written.push_back(dir / name);
  }
  write_file_atomic(dir / "index.json", index.dump(2) + "\n");
  written.push_back(dir / "index.json");
  return written;
}

inline StoredVolume read_volume_dir(const fs::path& dir) {
  const fs::path index_path = dir / "index.json";
  if (!fs::exists(index_path)) throw IoError("missing focus volume index '" + index_path.string() + "'");
  nlohmann::json index;
  try {
    index = nlohmann::json::parse(read_file(index_path));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(index_path.string() + ": " + e.what());
  }
  require(index.contains("files") && index["files"].is_array() && !index["files"].empty(),
          index_path.string() + ": no slice files listed");
  std::vector<Plane> planes;
  for (const auto& f : index["files"]) planes.push_back(read_pfm(dir / f.get<std::string>()));
  for (const auto& p : planes) require(p.same_shape(planes.front()), "focus volume slices differ in size");
  std::vector<double> values;
  for (const auto& p : planes) values.insert(values.end(), p.values().begin(), p.values().end());
  FocusSource source{parse_kind(index.value("kind", std::string("external"))), index.value("dilation", 0)};
  StoredVolume out{FocusVolume(static_cast<int>(planes.size()), planes.front().height(), planes.front().width(),
                               std::move(values), source),
                   {}};
  if (index.contains("focal_distances")) out.focal_distances = index["focal_distances"].get<std::vector<double>>();
  return out;
}

}  // namespace ddlsff::io
