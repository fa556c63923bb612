#include "ocr/json_io.hpp"

#include "ocr/error.hpp"

namespace ocr {

Json to_json(const KeypointSet& k) {
  Json arr = Json::array();
  for (const Point2& p : k.points) arr.push_back(to_json(p));
  return arr;
}

Point2 point_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 2) throw Error("expected [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

Pose2 pose_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 3) throw Error("expected [x, y, theta]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

KeypointSet keypoints_from_json(const Json& j) {
  if (!j.is_array() || j.empty()) throw Error("expected a non-empty keypoint list");
  KeypointSet k;
  for (const Json& p : j) k.points.push_back(point_from_json(p));
  return k;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kMissingFile, "cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

Json read_json_file(const std::filesystem::path& path) {
  auto in = open_input(path);
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::kInvalidConfig, path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
  auto out = open_output(path);
  out << j.dump(2) << '\n';
}

}  // namespace ocr
