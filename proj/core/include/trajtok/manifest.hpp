#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace trajtok {

struct VideoRecord {
  std::string id;
  int label = 0;
  std::string feature_path;
  std::string trajectory_path;  // empty = not available
};

// Dataset index with disjoint train/test class splits. Paths inside a
// manifest file are relative to the file's directory; load_manifest resolves
// them to absolute paths in the returned struct.
struct DatasetManifest {
  std::vector<VideoRecord> videos;
  std::vector<std::string> class_names;
  std::map<std::string, std::vector<int>> split;

  const std::vector<int>& split_classes(const std::string& name) const;
  std::vector<std::size_t> videos_of_class(int label) const;
};

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

}  // namespace trajtok
