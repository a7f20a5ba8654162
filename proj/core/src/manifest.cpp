#include "trajtok/manifest.hpp"

#include <fstream>
#include <set>

#include "json.hpp"
#include "trajtok/error.hpp"

namespace trajtok {

using nlohmann::json;

const std::vector<int>& DatasetManifest::split_classes(const std::string& name) const {
  auto it = split.find(name);
  if (it == split.end()) raise(ErrorCode::ConfigError, "manifest has no split named '" + name + "'");
  return it->second;
}

std::vector<std::size_t> DatasetManifest::videos_of_class(int label) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < videos.size(); ++i)
    if (videos[i].label == label) out.push_back(i);
  return out;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::IoError, "cannot open manifest: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    raise(ErrorCode::ParseError, "manifest " + path.string() + ": " + e.what());
  }

  DatasetManifest m;
  try {
    m.class_names = doc.at("class_names").get<std::vector<std::string>>();
    for (auto& [name, ids] : doc.at("split").items())
      m.split[name] = ids.get<std::vector<int>>();
    for (const auto& v : doc.at("videos")) {
      VideoRecord r;
      r.id = v.at("id").get<std::string>();
      r.label = v.at("label").get<int>();
      if (r.label < 0) raise(ErrorCode::ParseError, "negative label for video " + r.id);
      r.feature_path = v.at("feature_path").get<std::string>();
      if (v.contains("trajectory_path") && !v.at("trajectory_path").is_null())
        r.trajectory_path = v.at("trajectory_path").get<std::string>();
      m.videos.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    raise(ErrorCode::ParseError, "manifest " + path.string() + ": " + e.what());
  }

  if (m.split.count("train") && m.split.count("test")) {
    std::set<int> train(m.split["train"].begin(), m.split["train"].end());
    for (int c : m.split["test"])
      if (train.count(c))
        raise(ErrorCode::SplitOverlap, "class " + std::to_string(c) + " is in both train and test");
  }

  const auto base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  auto resolve = [&](std::string& p) {
    if (p.empty()) return;
    std::filesystem::path fp(p);
    if (fp.is_relative()) fp = base / fp;
    if (!std::filesystem::exists(fp))
      raise(ErrorCode::MissingAsset, "referenced file does not exist: " + fp.string());
    p = fp.string();
  };
  for (auto& v : m.videos) {
    resolve(v.feature_path);
    resolve(v.trajectory_path);
  }
  return m;
}

void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  json doc;
  doc["class_names"] = manifest.class_names;
  json split = json::object();
  for (const auto& [name, ids] : manifest.split) split[name] = ids;
  doc["split"] = split;
  json videos = json::array();
  for (const auto& v : manifest.videos) {
    json rec;
    rec["id"] = v.id;
    rec["label"] = v.label;
    rec["feature_path"] = v.feature_path;
    if (v.trajectory_path.empty())
      rec["trajectory_path"] = nullptr;
    else
      rec["trajectory_path"] = v.trajectory_path;
    videos.push_back(rec);
  }
  doc["videos"] = videos;
  std::ofstream out(path, std::ios::trunc);
  if (!out) raise(ErrorCode::IoError, "cannot write manifest: " + path.string());
  out << doc.dump(2) << "\n";
}

}  // namespace trajtok
